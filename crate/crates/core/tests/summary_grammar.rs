use mgdil_core::summary::{
    Category, Dimension, Emotion, Function, LabelSet, PostSummary, Sentiment, Style, SummaryParseError, Theme,
};
use proptest::prelude::*;
use proptest::sample::subsequence;

fn arb_set<T: Category>() -> impl Strategy<Value = LabelSet<T>> {
    (1usize..=3)
        .prop_flat_map(|k| subsequence(T::ALL.to_vec(), k.min(T::ALL.len())))
        .prop_shuffle()
        .prop_map(|v| LabelSet::new(v).unwrap())
}

fn arb_summary() -> impl Strategy<Value = PostSummary> {
    (arb_set::<Theme>(), arb_set::<Sentiment>(), arb_set::<Emotion>(), arb_set::<Style>(), arb_set::<Function>())
        .prop_map(|(theme, sent, emo, style, func)| PostSummary { theme, sent, emo, style, func })
}

fn sentence(lists: [String; 5]) -> String {
    let [theme, sent, emo, style, func] = lists;
    format!(
        "  Regarding content themes, the user's posts mainly revolve around {theme}. The overall sentiment tendency is {sent}, with a dominant emotional tone of {emo}. The text style is {style}. Functionally, the user appears to be engaged in {func}.\n"
    )
}

fn comma_no_space(s: &PostSummary) -> String {
    sentence(Dimension::ALL.map(|d| s.labels(d).join(",")))
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(s in arb_summary()) {
        prop_assert_eq!(PostSummary::parse(&s.render()).unwrap(), s);
    }

    #[test]
    fn prompt_style_output_canonicalizes(s in arb_summary()) {
        let parsed = PostSummary::parse(&comma_no_space(&s)).unwrap();
        let canonical = parsed.render();
        prop_assert_eq!(&parsed, &s);
        prop_assert_eq!(PostSummary::parse(&canonical).unwrap().render(), canonical);
    }

    #[test]
    fn foreign_label_names_its_bracket(s in arb_summary(), dim in 0usize..5) {
        let dim = Dimension::ALL[dim];
        let text = sentence(Dimension::ALL.map(|d| {
            let mut names = s.labels(d);
            if d == dim {
                names[0] = "Sarcastic";
            }
            names.join(",")
        }));
        let err = PostSummary::parse(&text).unwrap_err();
        let unknown = matches!(err, SummaryParseError::UnknownLabel { .. });
        prop_assert!(unknown);
        prop_assert_eq!(err.bracket(), dim);
    }
}

#[test]
fn serde_rejects_overfull_sets() {
    let ok: LabelSet<Style> = serde_json::from_str(r#"["Casual"]"#).unwrap();
    assert_eq!(ok.labels(), &[Style::Casual]);
    assert!(serde_json::from_str::<LabelSet<Style>>(r#"[]"#).is_err());
    assert!(serde_json::from_str::<LabelSet<Style>>(r#"["Casual","Formal","Aggressive","MechanicalOrTemplateLike"]"#).is_err());
}
