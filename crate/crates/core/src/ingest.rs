//! Source dataset ingestion: heterogeneous CSV / JSON-lines account dumps are
//! parsed into [`UserRecord`]s, deduplicated across datasets, class-balanced
//! and labelled with a coarse temporal domain.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Number of temporal domains used by the training registry.
pub const DOMAIN_COUNT: usize = 3;

/// Default allowed excess of bots over humans after balancing.
pub const DEFAULT_SLACK: usize = 2;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown dataset_id '{0}': not present in the source registry")]
    UnknownDataset(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot balance: no majority target")]
    NoHumans,
    #[error("user '{user_id}' carries conflicting labels across datasets ({first} vs {second})")]
    LabelConflict {
        user_id: String,
        first: String,
        second: String,
    },
    #[error("release year {0}: target-period dataset; domain label undefined")]
    DomainUndefined(i32),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Bot,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Human, Label::Bot];

    pub fn index(self) -> usize {
        match self {
            Label::Human => 0,
            Label::Bot => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Human),
            1 => Some(Label::Bot),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Bot => "bot",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a raw value of a profile field is typed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Count,
    Flag,
    Integer,
    Text,
}

/// The global raw profile schema. Source columns are mapped onto these ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawField {
    FollowersCount,
    FriendsCount,
    StatusesCount,
    FavouritesCount,
    ListedCount,
    Verified,
    Protected,
    DefaultProfile,
    DefaultProfileImage,
    GeoEnabled,
    ProfileUseBackgroundImage,
    ProfileBackgroundTile,
    Description,
    Name,
    ScreenName,
    Location,
    Url,
    ProfileBannerUrl,
    TimeZone,
    UtcOffset,
    Lang,
}

impl RawField {
    pub const ALL: [RawField; 21] = [
        RawField::FollowersCount,
        RawField::FriendsCount,
        RawField::StatusesCount,
        RawField::FavouritesCount,
        RawField::ListedCount,
        RawField::Verified,
        RawField::Protected,
        RawField::DefaultProfile,
        RawField::DefaultProfileImage,
        RawField::GeoEnabled,
        RawField::ProfileUseBackgroundImage,
        RawField::ProfileBackgroundTile,
        RawField::Description,
        RawField::Name,
        RawField::ScreenName,
        RawField::Location,
        RawField::Url,
        RawField::ProfileBannerUrl,
        RawField::TimeZone,
        RawField::UtcOffset,
        RawField::Lang,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RawField::FollowersCount => "followers_count",
            RawField::FriendsCount => "friends_count",
            RawField::StatusesCount => "statuses_count",
            RawField::FavouritesCount => "favourites_count",
            RawField::ListedCount => "listed_count",
            RawField::Verified => "verified",
            RawField::Protected => "protected",
            RawField::DefaultProfile => "default_profile",
            RawField::DefaultProfileImage => "default_profile_image",
            RawField::GeoEnabled => "geo_enabled",
            RawField::ProfileUseBackgroundImage => "profile_use_background_image",
            RawField::ProfileBackgroundTile => "profile_background_tile",
            RawField::Description => "description",
            RawField::Name => "name",
            RawField::ScreenName => "screen_name",
            RawField::Location => "location",
            RawField::Url => "url",
            RawField::ProfileBannerUrl => "profile_banner_url",
            RawField::TimeZone => "time_zone",
            RawField::UtcOffset => "utc_offset",
            RawField::Lang => "lang",
        }
    }

    pub fn kind(self) -> FieldKind {
        use RawField::*;
        match self {
            FollowersCount | FriendsCount | StatusesCount | FavouritesCount | ListedCount => {
                FieldKind::Count
            }
            Verified | Protected | DefaultProfile | DefaultProfileImage | GeoEnabled
            | ProfileUseBackgroundImage | ProfileBackgroundTile => FieldKind::Flag,
            UtcOffset => FieldKind::Integer,
            Description | Name | ScreenName | Location | Url | ProfileBannerUrl | TimeZone
            | Lang => FieldKind::Text,
        }
    }
}

impl FromStr for RawField {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RawField::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| IngestError::Config(format!("'{s}' is not a profile schema field")))
    }
}

impl fmt::Display for RawField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed raw profile value. Absent fields are simply missing from the map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Bool(bool),
    Int(i64),
    Text(String),
}

impl RawValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            RawValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            RawValue::Bool(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            RawValue::Text(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for RawValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawValue::Bool(b) => write!(f, "{b}"),
            RawValue::Int(i) => write!(f, "{i}"),
            RawValue::Text(s) => f.write_str(s),
        }
    }
}

pub type RawProfile = BTreeMap<RawField, RawValue>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub relation: String,
    pub neighbor: String,
}

/// One account, unified across source datasets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub dataset_id: String,
    pub release_year: i32,
    pub label: Label,
    /// `None` for evaluation-period datasets.
    pub domain_id: Option<u8>,
    #[serde(default)]
    pub profile: RawProfile,
    /// Oldest first, in source order.
    #[serde(default)]
    pub posts: Vec<String>,
    #[serde(default)]
    pub relations: Vec<Relation>,
}

/// Maps a release year to its temporal domain: 2015–2017 → 0, 2018 → 1,
/// 2019 → 2. Any other year belongs to an evaluation period.
pub fn assign_domain(release_year: i32) -> Result<u8, IngestError> {
    match release_year {
        2015..=2017 => Ok(0),
        2018 => Ok(1),
        2019 => Ok(2),
        y => Err(IngestError::DomainUndefined(y)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelRule {
    /// Every row of the source carries the same label (e.g. self-identified bot lists).
    Constant { constant: Label },
    /// Read the label from a column; values are compared case-insensitively.
    Column {
        column: String,
        #[serde(default = "default_bot_values")]
        bot: Vec<String>,
        #[serde(default = "default_human_values")]
        human: Vec<String>,
    },
}

fn default_bot_values() -> Vec<String> {
    vec!["bot".into(), "1".into(), "true".into()]
}

fn default_human_values() -> Vec<String> {
    vec!["human".into(), "0".into(), "false".into()]
}

fn default_id_column() -> String {
    "id".into()
}

fn default_post_separator() -> String {
    "|||".into()
}

fn default_neighbor_separator() -> String {
    ";".into()
}

/// Describes how one source file maps onto the unified record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSchema {
    pub dataset_id: String,
    pub release_year: i32,
    #[serde(default)]
    pub format: Option<SourceFormat>,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    pub label: LabelRule,
    /// source column → profile field
    #[serde(default)]
    pub fields: BTreeMap<String, RawField>,
    #[serde(default)]
    pub posts_column: Option<String>,
    /// Separator between posts inside a single CSV cell.
    #[serde(default = "default_post_separator")]
    pub post_separator: String,
    /// source column → relation type
    #[serde(default)]
    pub relations: BTreeMap<String, String>,
    #[serde(default = "default_neighbor_separator")]
    pub neighbor_separator: String,
}

impl SourceSchema {
    /// A schema whose source columns are named exactly like the profile fields.
    pub fn identity(dataset_id: &str, release_year: i32, label: LabelRule) -> Self {
        SourceSchema {
            dataset_id: dataset_id.to_string(),
            release_year,
            format: None,
            id_column: default_id_column(),
            label,
            fields: RawField::ALL
                .iter()
                .map(|f| (f.as_str().to_string(), *f))
                .collect(),
            posts_column: Some("posts".into()),
            post_separator: default_post_separator(),
            relations: BTreeMap::new(),
            neighbor_separator: default_neighbor_separator(),
        }
    }

    fn resolve_format(&self, path: &Path) -> Result<SourceFormat, IngestError> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(SourceFormat::Csv),
            Some("jsonl") | Some("json") | Some("ndjson") => Ok(SourceFormat::Jsonl),
            _ => Err(IngestError::Config(format!(
                "{}: cannot infer format; set `format` to csv or jsonl",
                path.display()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub dataset_id: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<UserRecord>,
    pub diagnostics: Vec<RowDiagnostic>,
}

impl ParseOutcome {
    pub fn skipped(&self) -> usize {
        self.diagnostics.len()
    }
}

/// One configured source: its schema plus the file it lives in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceEntry {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: SourceSchema,
}

/// The configured set of source datasets, loaded from a TOML file with one
/// `[[source]]` table per dataset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SourceRegistry {
    #[serde(rename = "source", default)]
    pub sources: Vec<SourceEntry>,
}

impl SourceRegistry {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let mut registry: SourceRegistry = toml::from_str(&text)
            .map_err(|e| IngestError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in &mut registry.sources {
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
        }
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = std::collections::HashSet::new();
        for entry in &self.sources {
            if entry.schema.dataset_id.is_empty() {
                return Err(IngestError::Config("empty dataset_id".into()));
            }
            if !seen.insert(entry.schema.dataset_id.as_str()) {
                return Err(IngestError::Config(format!(
                    "dataset_id '{}' registered twice",
                    entry.schema.dataset_id
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, dataset_id: &str) -> Result<&SourceEntry, IngestError> {
        self.sources
            .iter()
            .find(|e| e.schema.dataset_id == dataset_id)
            .ok_or_else(|| IngestError::UnknownDataset(dataset_id.to_string()))
    }

    pub fn parse(&self, dataset_id: &str) -> Result<ParseOutcome, IngestError> {
        let entry = self.get(dataset_id)?;
        parse_source(&entry.path, &entry.schema)
    }

    /// Parses every registered source, one thread per file, and merges the
    /// results in registry order.
    pub fn parse_all(&self) -> Result<ParseOutcome, IngestError> {
        let results: Vec<Result<ParseOutcome, IngestError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .sources
                .iter()
                .map(|entry| scope.spawn(move || parse_source(&entry.path, &entry.schema)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("parser thread panicked"))
                .collect()
        });
        let mut merged = ParseOutcome::default();
        for r in results {
            let r = r?;
            merged.records.extend(r.records);
            merged.diagnostics.extend(r.diagnostics);
        }
        Ok(merged)
    }
}

const NULL_TOKENS: [&str; 5] = ["null", "NULL", "None", "NaN", "nan"];

fn coerce_text_cell(field: RawField, cell: &str) -> Result<Option<RawValue>, String> {
    let kind = field.kind();
    if kind == FieldKind::Text {
        return Ok(Some(RawValue::Text(cell.to_string())));
    }
    let trimmed = cell.trim();
    if trimmed.is_empty() || NULL_TOKENS.contains(&trimmed) {
        return Ok(None);
    }
    match kind {
        FieldKind::Count | FieldKind::Integer => {
            let parsed = trimmed.parse::<i64>().ok().or_else(|| {
                trimmed
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && v.is_finite())
                    .map(|v| v as i64)
            });
            match parsed {
                Some(v) if kind == FieldKind::Count && v < 0 => {
                    Err(format!("field {field}: negative count {v}"))
                }
                Some(v) => Ok(Some(RawValue::Int(v))),
                None => Err(format!("field {field}: cannot parse '{trimmed}' as integer")),
            }
        }
        FieldKind::Flag => match trimmed.to_ascii_lowercase().as_str() {
            "true" | "1" | "t" | "yes" | "y" => Ok(Some(RawValue::Bool(true))),
            "false" | "0" | "f" | "no" | "n" => Ok(Some(RawValue::Bool(false))),
            _ => Err(format!("field {field}: cannot parse '{trimmed}' as boolean")),
        },
        FieldKind::Text => unreachable!(),
    }
}

fn coerce_json_value(field: RawField, value: &Value) -> Result<Option<RawValue>, String> {
    match value {
        Value::Null => Ok(None),
        Value::String(s) => coerce_text_cell(field, s),
        Value::Bool(b) => match field.kind() {
            FieldKind::Flag => Ok(Some(RawValue::Bool(*b))),
            FieldKind::Text => Ok(Some(RawValue::Text(b.to_string()))),
            _ => Err(format!("field {field}: boolean where a number is expected")),
        },
        Value::Number(n) => match field.kind() {
            FieldKind::Text => Ok(Some(RawValue::Text(n.to_string()))),
            _ => coerce_text_cell(field, &n.to_string()),
        },
        other => Err(format!("field {field}: unsupported value {other}")),
    }
}

fn read_label(rule: &LabelRule, raw: Option<&str>) -> Result<Label, String> {
    match rule {
        LabelRule::Constant { constant } => Ok(*constant),
        LabelRule::Column { column, bot, human } => {
            let raw = raw.ok_or_else(|| format!("missing label column '{column}'"))?;
            let v = raw.trim();
            if bot.iter().any(|b| b.eq_ignore_ascii_case(v)) {
                Ok(Label::Bot)
            } else if human.iter().any(|h| h.eq_ignore_ascii_case(v)) {
                Ok(Label::Human)
            } else {
                Err(format!("unrecognised label '{v}'"))
            }
        }
    }
}

fn split_nonempty(s: &str, sep: &str) -> Vec<String> {
    s.split(sep)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses one source file into records. Malformed rows are skipped and
/// reported with their line number; the parse itself only fails on i/o or
/// configuration problems.
pub fn parse_source(path: &Path, schema: &SourceSchema) -> Result<ParseOutcome, IngestError> {
    let format = schema.resolve_format(path)?;
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    match format {
        SourceFormat::Csv => parse_csv(file, schema, path),
        SourceFormat::Jsonl => parse_jsonl(BufReader::new(file), schema, path),
    }
}

fn base_record(schema: &SourceSchema, user_id: String, label: Label) -> UserRecord {
    UserRecord {
        user_id,
        dataset_id: schema.dataset_id.clone(),
        release_year: schema.release_year,
        label,
        domain_id: assign_domain(schema.release_year).ok(),
        profile: RawProfile::new(),
        posts: Vec::new(),
        relations: Vec::new(),
    }
}

fn parse_csv<R: Read>(
    reader: R,
    schema: &SourceSchema,
    path: &Path,
) -> Result<ParseOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Config(format!("{}: unreadable header: {e}", path.display())))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_idx = column(&schema.id_column).ok_or_else(|| {
        IngestError::Config(format!(
            "{}: id column '{}' not found",
            path.display(),
            schema.id_column
        ))
    })?;
    let label_idx = match &schema.label {
        LabelRule::Column { column: c, .. } => Some(column(c).ok_or_else(|| {
            IngestError::Config(format!("{}: label column '{c}' not found", path.display()))
        })?),
        LabelRule::Constant { .. } => None,
    };
    let field_idx: Vec<(RawField, usize)> = schema
        .fields
        .iter()
        .filter_map(|(col, f)| column(col).map(|i| (*f, i)))
        .collect();
    let posts_idx = schema.posts_column.as_deref().and_then(column);
    let rel_idx: Vec<(&str, usize)> = schema
        .relations
        .iter()
        .filter_map(|(col, rel)| column(col).map(|i| (rel.as_str(), i)))
        .collect();

    let mut out = ParseOutcome::default();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                out.diagnostics.push(RowDiagnostic {
                    dataset_id: schema.dataset_id.clone(),
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let result = (|| -> Result<UserRecord, String> {
            if row.len() != headers.len() {
                return Err(format!(
                    "expected {} columns, found {}",
                    headers.len(),
                    row.len()
                ));
            }
            let user_id = row[id_idx].trim();
            if user_id.is_empty() {
                return Err("empty user id".into());
            }
            let label = read_label(&schema.label, label_idx.map(|i| &row[i]))?;
            let mut rec = base_record(schema, user_id.to_string(), label);
            for &(field, i) in &field_idx {
                if let Some(v) = coerce_text_cell(field, &row[i])? {
                    rec.profile.insert(field, v);
                }
            }
            if let Some(i) = posts_idx {
                rec.posts = split_nonempty(&row[i], &schema.post_separator);
            }
            for &(rel, i) in &rel_idx {
                for n in split_nonempty(&row[i], &schema.neighbor_separator) {
                    rec.relations.push(Relation {
                        relation: rel.to_string(),
                        neighbor: n,
                    });
                }
            }
            Ok(rec)
        })();
        match result {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.diagnostics.push(RowDiagnostic {
                dataset_id: schema.dataset_id.clone(),
                line,
                message,
            }),
        }
    }
    Ok(out)
}

fn json_scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn json_string_list(v: &Value, sep: &str) -> Result<Vec<String>, String> {
    match v {
        Value::Null => Ok(Vec::new()),
        Value::String(s) => Ok(split_nonempty(s, sep)),
        Value::Array(items) => items
            .iter()
            .map(|i| json_scalar_to_string(i).ok_or_else(|| format!("non-scalar list item {i}")))
            .collect(),
        other => Err(format!("expected list, found {other}")),
    }
}

fn parse_jsonl<R: BufRead>(
    reader: R,
    schema: &SourceSchema,
    path: &Path,
) -> Result<ParseOutcome, IngestError> {
    let mut out = ParseOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IngestError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let result = (|| -> Result<UserRecord, String> {
            let obj: Value = serde_json::from_str(&line).map_err(|e| format!("invalid JSON: {e}"))?;
            let obj = obj.as_object().ok_or("row is not a JSON object")?;
            let user_id = obj
                .get(&schema.id_column)
                .and_then(json_scalar_to_string)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or("missing user id")?;
            let label_raw = match &schema.label {
                LabelRule::Column { column, .. } => obj.get(column).and_then(json_scalar_to_string),
                LabelRule::Constant { .. } => None,
            };
            let label = read_label(&schema.label, label_raw.as_deref())?;
            let mut rec = base_record(schema, user_id, label);
            for (col, field) in &schema.fields {
                if let Some(v) = obj.get(col) {
                    if let Some(v) = coerce_json_value(*field, v)? {
                        rec.profile.insert(*field, v);
                    }
                }
            }
            if let Some(col) = &schema.posts_column {
                if let Some(v) = obj.get(col) {
                    rec.posts = json_string_list(v, &schema.post_separator)?;
                }
            }
            for (col, rel) in &schema.relations {
                if let Some(v) = obj.get(col) {
                    for n in json_string_list(v, &schema.neighbor_separator)? {
                        rec.relations.push(Relation {
                            relation: rel.clone(),
                            neighbor: n,
                        });
                    }
                }
            }
            Ok(rec)
        })();
        match result {
            Ok(rec) => out.records.push(rec),
            Err(message) => out.diagnostics.push(RowDiagnostic {
                dataset_id: schema.dataset_id.clone(),
                line: line_no,
                message,
            }),
        }
    }
    Ok(out)
}

fn sort_records(records: &mut [UserRecord]) {
    records.sort_by(|a, b| {
        a.dataset_id
            .cmp(&b.dataset_id)
            .then_with(|| a.user_id.cmp(&b.user_id))
    });
}

/// Keeps one record per user id: the copy from the earliest release year
/// (ties broken by dataset id). Duplicates whose labels disagree are an error.
pub fn dedupe(records: Vec<UserRecord>) -> Result<Vec<UserRecord>, IngestError> {
    let mut kept: HashMap<String, UserRecord> = HashMap::with_capacity(records.len());
    for rec in records {
        match kept.get_mut(&rec.user_id) {
            None => {
                kept.insert(rec.user_id.clone(), rec);
            }
            Some(existing) => {
                if existing.label != rec.label {
                    return Err(IngestError::LabelConflict {
                        user_id: rec.user_id,
                        first: format!("{} in {}", existing.label, existing.dataset_id),
                        second: format!("{} in {}", rec.label, rec.dataset_id),
                    });
                }
                let newer = (existing.release_year, &existing.dataset_id)
                    > (rec.release_year, &rec.dataset_id);
                if newer {
                    *existing = rec;
                }
            }
        }
    }
    let mut out: Vec<UserRecord> = kept.into_values().collect();
    sort_records(&mut out);
    Ok(out)
}

/// Retains every human and downsamples bots (seeded, without replacement)
/// until `bots <= humans + slack`. The bots to drop are allotted to datasets
/// in proportion to each dataset's bot surplus.
pub fn balance(
    records: Vec<UserRecord>,
    seed: u64,
    slack: usize,
) -> Result<Vec<UserRecord>, IngestError> {
    let humans = records.iter().filter(|r| r.label == Label::Human).count();
    if humans == 0 {
        return Err(IngestError::NoHumans);
    }
    let bots = records.len() - humans;
    let target = bots.min(humans + slack);
    let to_remove = bots - target;
    let mut records = records;
    sort_records(&mut records);
    if to_remove == 0 {
        return Ok(records);
    }

    let mut per_dataset: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = per_dataset.entry(r.dataset_id.as_str()).or_default();
        match r.label {
            Label::Human => e.0 += 1,
            Label::Bot => e.1 += 1,
        }
    }
    let surplus: Vec<(String, usize)> = per_dataset
        .iter()
        .map(|(ds, (h, b))| (ds.to_string(), b.saturating_sub(*h)))
        .collect();
    let total_surplus: usize = surplus.iter().map(|(_, s)| s).sum();
    debug_assert!(total_surplus >= to_remove);

    // Largest-remainder apportionment of `to_remove` over the surpluses.
    let mut removal: BTreeMap<String, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0usize;
    for (ds, s) in &surplus {
        let exact = to_remove as u128 * *s as u128;
        let base = (exact / total_surplus as u128) as usize;
        let rem = exact % total_surplus as u128;
        removal.insert(ds.clone(), base);
        assigned += base;
        remainders.push((rem, ds.clone()));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    for (_, ds) in remainders.iter() {
        if assigned == to_remove {
            break;
        }
        let cap = surplus.iter().find(|(d, _)| d == ds).map(|(_, s)| *s).unwrap_or(0);
        let slot = removal.get_mut(ds).expect("dataset present");
        if *slot < cap {
            *slot += 1;
            assigned += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped: std::collections::HashSet<(String, String)> = Default::default();
    for (ds, n) in &removal {
        if *n == 0 {
            continue;
        }
        let mut ids: Vec<&str> = records
            .iter()
            .filter(|r| r.dataset_id == *ds && r.label == Label::Bot)
            .map(|r| r.user_id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        for id in ids.into_iter().take(*n) {
            dropped.insert((ds.clone(), id.to_string()));
        }
    }
    records.retain(|r| !dropped.contains(&(r.dataset_id.clone(), r.user_id.clone())));
    Ok(records)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub human: usize,
    pub bot: usize,
}

impl ClassCounts {
    pub fn add(&mut self, label: Label) {
        match label {
            Label::Human => self.human += 1,
            Label::Bot => self.bot += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.human + self.bot
    }
}

/// Per-dataset human/bot counts.
pub fn dataset_counts(records: &[UserRecord]) -> BTreeMap<String, ClassCounts> {
    let mut out: BTreeMap<String, ClassCounts> = BTreeMap::new();
    for r in records {
        out.entry(r.dataset_id.clone()).or_default().add(r.label);
    }
    out
}

pub fn write_records<W: Write>(mut w: W, records: &[UserRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<UserRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: UserRecord = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[UserRecord]) -> Result<(), IngestError> {
    let f = File::create(path).map_err(|e| IngestError::io(path, e))?;
    write_records(std::io::BufWriter::new(f), records).map_err(|e| IngestError::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<UserRecord>, IngestError> {
    let f = File::open(path).map_err(|e| IngestError::io(path, e))?;
    read_records(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, ds: &str, year: i32, label: Label) -> UserRecord {
        UserRecord {
            user_id: id.into(),
            dataset_id: ds.into(),
            release_year: year,
            label,
            domain_id: assign_domain(year).ok(),
            profile: RawProfile::new(),
            posts: vec![],
            relations: vec![],
        }
    }

    fn csv_schema() -> SourceSchema {
        SourceSchema::identity(
            "cresci-2015",
            2015,
            LabelRule::Column {
                column: "label".into(),
                bot: default_bot_values(),
                human: default_human_values(),
            },
        )
    }

    #[test]
    fn domains_follow_release_period() {
        assert_eq!(assign_domain(2015).unwrap(), 0);
        assert_eq!(assign_domain(2016).unwrap(), 0);
        assert_eq!(assign_domain(2017).unwrap(), 0);
        assert_eq!(assign_domain(2018).unwrap(), 1);
        assert_eq!(assign_domain(2019).unwrap(), 2);
        let err = assign_domain(2020).unwrap_err();
        assert!(err.to_string().contains("domain label undefined"));
        assert!(assign_domain(2014).is_err());
        let distinct: std::collections::BTreeSet<u8> =
            (2015..=2019).map(|y| assign_domain(y).unwrap()).collect();
        assert_eq!(distinct.len(), DOMAIN_COUNT);
    }

    #[test]
    fn csv_with_one_malformed_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.csv");
        let mut f = File::create(&path).unwrap();
        writeln!(f, "id,label,followers_count,verified").unwrap();
        writeln!(f, "u1,bot,10,true").unwrap();
        writeln!(f, "u2,human,abc,false").unwrap();
        writeln!(f, "u3,human,5,false").unwrap();
        drop(f);
        let out = parse_source(&path, &csv_schema()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.skipped(), 1);
        assert_eq!(out.diagnostics[0].line, 3);
        assert!(out.diagnostics[0].message.contains("followers_count"));
    }

    #[test]
    fn missing_column_is_absent_but_empty_text_is_present() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.csv");
        std::fs::write(&path, "id,label,description,followers_count\nu1,0,,\n").unwrap();
        let out = parse_source(&path, &csv_schema()).unwrap();
        let r = &out.records[0];
        assert!(!r.profile.contains_key(&RawField::Location));
        assert_eq!(r.profile.get(&RawField::Description), Some(&RawValue::Text(String::new())));
        assert!(!r.profile.contains_key(&RawField::FollowersCount));
        assert_eq!(r.label, Label::Human);
        assert_eq!(r.domain_id, Some(0));
    }

    #[test]
    fn jsonl_rows_and_nulls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id": 7, "label": "bot", "location": null, "followers_count": 705, "posts": ["a", "b"]}"#,
                "\n",
                "{not json}\n",
                r#"{"id": "u9", "label": "human", "verified": true}"#,
                "\n"
            ),
        )
        .unwrap();
        let out = parse_source(&path, &csv_schema()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.diagnostics[0].line, 2);
        let r = &out.records[0];
        assert_eq!(r.user_id, "7");
        assert!(!r.profile.contains_key(&RawField::Location));
        assert_eq!(r.profile[&RawField::FollowersCount], RawValue::Int(705));
        assert_eq!(r.posts, vec!["a", "b"]);
    }

    #[test]
    fn unknown_dataset_is_fatal() {
        let reg = SourceRegistry::default();
        assert!(matches!(reg.parse("nope"), Err(IngestError::UnknownDataset(_))));
    }

    #[test]
    fn dedupe_keeps_earliest_release() {
        let recs = vec![
            rec("a", "twibot-2020", 2020, Label::Bot),
            rec("a", "cresci-2015", 2015, Label::Bot),
            rec("b", "twibot-2020", 2020, Label::Human),
            rec("c", "x", 2018, Label::Human),
            rec("d", "x", 2018, Label::Bot),
        ];
        let out = dedupe(recs).unwrap();
        assert_eq!(out.len(), 4);
        let a = out.iter().find(|r| r.user_id == "a").unwrap();
        assert_eq!(a.dataset_id, "cresci-2015");
        assert_eq!(dedupe(out.clone()).unwrap(), out);
    }

    #[test]
    fn dedupe_of_distinct_ids_only_sorts() {
        let recs = vec![
            rec("z", "b", 2016, Label::Bot),
            rec("y", "a", 2016, Label::Bot),
            rec("x", "b", 2016, Label::Human),
        ];
        let out = dedupe(recs).unwrap();
        let keys: Vec<_> = out.iter().map(|r| (r.dataset_id.as_str(), r.user_id.as_str())).collect();
        assert_eq!(keys, vec![("a", "y"), ("b", "x"), ("b", "z")]);
    }

    #[test]
    fn dedupe_rejects_label_conflicts() {
        let recs = vec![rec("a", "d1", 2015, Label::Bot), rec("a", "d2", 2016, Label::Human)];
        assert!(matches!(dedupe(recs), Err(IngestError::LabelConflict { .. })));
    }

    #[test]
    fn balance_downsamples_bots() {
        let mut recs: Vec<_> = (0..10).map(|i| rec(&format!("h{i}"), "d", 2016, Label::Human)).collect();
        recs.extend((0..100).map(|i| rec(&format!("b{i}"), "d", 2016, Label::Bot)));
        let out = balance(recs.clone(), 7, DEFAULT_SLACK).unwrap();
        let counts = dataset_counts(&out)["d"];
        assert_eq!(counts, ClassCounts { human: 10, bot: 12 });
        assert_eq!(balance(recs, 7, DEFAULT_SLACK).unwrap(), out);
    }

    #[test]
    fn balance_never_upsamples() {
        let mut recs: Vec<_> = (0..10).map(|i| rec(&format!("h{i}"), "d", 2016, Label::Human)).collect();
        recs.extend((0..5).map(|i| rec(&format!("b{i}"), "d", 2016, Label::Bot)));
        let out = balance(recs, 1, DEFAULT_SLACK).unwrap();
        assert_eq!(out.len(), 15);
    }

    #[test]
    fn balance_requires_humans() {
        let recs = vec![rec("b", "d", 2016, Label::Bot)];
        let err = balance(recs, 0, DEFAULT_SLACK).unwrap_err();
        assert_eq!(err.to_string(), "cannot balance: no majority target");
    }

    #[test]
    fn balance_takes_bots_from_surplus_datasets() {
        // d1 is already balanced; all removals must come from d2.
        let mut recs = Vec::new();
        for i in 0..20 {
            recs.push(rec(&format!("d1h{i}"), "d1", 2016, Label::Human));
            recs.push(rec(&format!("d1b{i}"), "d1", 2016, Label::Bot));
        }
        for i in 0..50 {
            recs.push(rec(&format!("d2b{i}"), "d2", 2018, Label::Bot));
        }
        for i in 0..5 {
            recs.push(rec(&format!("d2h{i}"), "d2", 2018, Label::Human));
        }
        let out = balance(recs, 3, 2).unwrap();
        let counts = dataset_counts(&out);
        assert_eq!(counts["d1"], ClassCounts { human: 20, bot: 20 });
        assert_eq!(counts["d2"].human, 5);
        assert_eq!(counts["d2"].bot, 7);
    }
}
