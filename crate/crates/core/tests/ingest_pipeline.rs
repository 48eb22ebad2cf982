use std::fmt::Write as _;
use std::io::BufReader;

use mgdil_core::ingest::{
    balance, dedupe, parse_source, read_records, write_records, IngestError, Label, LabelRule, RawField,
    RawValue, SourceRegistry, SourceSchema, UserRecord,
};
use proptest::prelude::*;

fn fox_csv(bots: usize, humans: usize) -> String {
    let mut s = String::from("id,screen_name,followers_count,description,label,posts\n");
    for i in 0..bots + humans {
        let label = if i < bots { "bot" } else { "human" };
        writeln!(s, "{i},user_{i},{},\"hi, I am {i}\",{label},first|||second", i * 3).unwrap();
    }
    s
}

fn fox_schema() -> SourceSchema {
    let mut schema = SourceSchema::identity(
        "fox-2023",
        2023,
        LabelRule::Column {
            column: "label".into(),
            bot: vec!["bot".into()],
            human: vec!["human".into()],
        },
    );
    schema.fields.retain(|_, f| {
        matches!(f, RawField::ScreenName | RawField::FollowersCount | RawField::Description)
    });
    schema
}

#[test]
fn evaluation_source_with_balanced_classes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fox.csv");
    std::fs::write(&path, fox_csv(1140, 1140)).unwrap();
    let out = parse_source(&path, &fox_schema()).unwrap();
    assert_eq!(out.records.len(), 2280);
    assert_eq!(out.skipped(), 0);
    assert_eq!(out.records.iter().filter(|r| r.label == Label::Bot).count(), 1140);
    let r = &out.records[5];
    assert_eq!(r.domain_id, None);
    assert_eq!(r.posts, vec!["first", "second"]);
    assert_eq!(r.profile.get(&RawField::FollowersCount), Some(&RawValue::Int(15)));
    assert!(!r.profile.contains_key(&RawField::Location));
}

#[test]
fn registry_loads_relative_paths_and_rejects_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.csv"), "id,label\n1,bot\n2,human\n").unwrap();
    std::fs::write(
        dir.path().join("a.jsonl"),
        "{\"id\":\"9\",\"kind\":\"human\",\"screen_name\":\"x\"}\n{\"id\":\"10\",\"kind\":\"bot\",\"screen_name\":null}\n",
    )
    .unwrap();
    let cfg = r#"
[[source]]
dataset_id = "cresci-2015"
release_year = 2015
path = "a.csv"
label = { column = "label" }

[[source]]
dataset_id = "midterm-2018"
release_year = 2018
path = "a.jsonl"
label = { column = "kind" }
fields = { screen_name = "screen_name" }
"#;
    let cfg_path = dir.path().join("sources.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    let reg = SourceRegistry::load(&cfg_path).unwrap();
    let all = reg.parse_all().unwrap();
    assert_eq!(all.records.len(), 4);
    let domains: Vec<_> = all.records.iter().map(|r| r.domain_id).collect();
    assert!(domains.contains(&Some(0)) && domains.contains(&Some(1)));
    let ten = all.records.iter().find(|r| r.user_id == "10").unwrap();
    assert!(!ten.profile.contains_key(&RawField::ScreenName));
    assert!(matches!(reg.parse("nope"), Err(IngestError::UnknownDataset(_))));
}

fn arb_record() -> impl Strategy<Value = UserRecord> {
    (
        0u8..12,
        prop::sample::select(vec![("cresci-2015", 2015), ("varol-2017", 2017), ("botwiki-2019", 2019), ("midterm-2018", 2018)]),
        prop::collection::vec("\\PC{0,12}", 0..3),
        prop::option::of(0i64..1000),
    )
        .prop_map(|(id, (ds, year), posts, followers)| {
            let mut profile = std::collections::BTreeMap::new();
            if let Some(f) = followers {
                profile.insert(RawField::FollowersCount, RawValue::Int(f));
            }
            UserRecord {
                user_id: format!("u{id}"),
                dataset_id: ds.to_string(),
                release_year: year,
                // Label derives from the id so duplicates never conflict.
                label: if id % 2 == 0 { Label::Human } else { Label::Bot },
                domain_id: mgdil_core::ingest::assign_domain(year).ok(),
                profile,
                posts,
                relations: vec![],
            }
        })
}

proptest! {
    #[test]
    fn dedupe_is_idempotent_and_unique(records in prop::collection::vec(arb_record(), 0..40)) {
        let once = dedupe(records).unwrap();
        let ids: std::collections::BTreeSet<_> = once.iter().map(|r| r.user_id.clone()).collect();
        prop_assert_eq!(ids.len(), once.len());
        prop_assert_eq!(dedupe(once.clone()).unwrap(), once);
    }

    #[test]
    fn balance_bounds_surplus(humans in 1usize..30, bots in 0usize..120, seed in any::<u64>()) {
        let recs: Vec<UserRecord> = (0..humans + bots)
            .map(|i| UserRecord {
                user_id: format!("u{i}"),
                dataset_id: format!("d{}", i % 3),
                release_year: 2016,
                label: if i < humans { Label::Human } else { Label::Bot },
                domain_id: Some(0),
                profile: Default::default(),
                posts: vec![],
                relations: vec![],
            })
            .collect();
        let out = balance(recs.clone(), seed, 2).unwrap();
        let h = out.iter().filter(|r| r.label == Label::Human).count();
        let b = out.len() - h;
        prop_assert_eq!(h, humans);
        prop_assert_eq!(b, bots.min(humans + 2));
        prop_assert_eq!(out, balance(recs, seed, 2).unwrap());
    }

    #[test]
    fn records_round_trip(records in prop::collection::vec(arb_record(), 0..20)) {
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back = read_records(BufReader::new(buf.as_slice())).unwrap();
        prop_assert_eq!(back, records);
    }
}
