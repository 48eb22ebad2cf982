//! Profile features and the slot-based profile text.
//!
//! Every raw profile is turned into 39 named features grouped under five
//! category headers plus the description text. Each feature becomes one slot
//! string `name = value; `; features whose raw inputs are missing render the
//! placeholder instead of a value, so missing modalities stay visible to the
//! downstream model rather than silently disappearing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ingest::{RawField, RawProfile, RawValue, UserRecord};
use crate::text::{contains_phrase, normalize_words, URL_RE};

/// Rendered in place of any value whose inputs are absent.
pub const PLACEHOLDER: &str = "unavailable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    BasicInformation,
    Completeness,
    TextStatistics,
    Name,
    LanguageGeo,
    Description,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Section::BasicInformation,
        Section::Completeness,
        Section::TextStatistics,
        Section::Name,
        Section::LanguageGeo,
        Section::Description,
    ];

    pub fn header(self) -> &'static str {
        match self {
            Section::BasicInformation => "Account Basic Information",
            Section::Completeness => "Profile Completeness Features",
            Section::TextStatistics => "Profile Text Statistics Features",
            Section::Name => "Name Features",
            Section::LanguageGeo => "Language and Geographic Features",
            Section::Description => "Description Text",
        }
    }
}

macro_rules! profile_features {
    ($($variant:ident => $name:literal, $section:ident, [$($dep:ident),*];)*) => {
        /// The 39 profile features, in rendering order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum ProfileFeature { $($variant),* }

        impl ProfileFeature {
            pub const ALL: &'static [ProfileFeature] = &[$(ProfileFeature::$variant),*];

            pub fn name(self) -> &'static str {
                match self { $(ProfileFeature::$variant => $name),* }
            }

            pub fn section(self) -> Section {
                match self { $(ProfileFeature::$variant => Section::$section),* }
            }

            /// Raw fields that must all be present for the feature to be available.
            pub fn inputs(self) -> &'static [RawField] {
                match self { $(ProfileFeature::$variant => &[$(RawField::$dep),*]),* }
            }
        }
    };
}

profile_features! {
    FollowersCount => "followers_count", BasicInformation, [FollowersCount];
    FriendsCount => "friends_count", BasicInformation, [FriendsCount];
    FfRatio => "ff_ratio", BasicInformation, [FollowersCount, FriendsCount];
    StatusesCount => "statuses_count", BasicInformation, [StatusesCount];
    FavouritesCount => "favourites_count", BasicInformation, [FavouritesCount];
    ListedCount => "listed_count", BasicInformation, [ListedCount];
    Verified => "verified", BasicInformation, [Verified];
    Protected => "protected", BasicInformation, [Protected];
    DefaultProfileImage => "default_profile_image", BasicInformation, [DefaultProfileImage];
    DefaultProfile => "default_profile", BasicInformation, [DefaultProfile];
    GeoEnabled => "geo_enabled", BasicInformation, [GeoEnabled];
    LangHint => "lang_hint", BasicInformation, [Lang];
    LocationPresent => "location_present", Completeness, [Location];
    ProfileBannerUrlPresent => "profile_banner_url_present", Completeness, [ProfileBannerUrl];
    ProfileUseBackgroundImage => "profile_use_background_image", Completeness, [ProfileUseBackgroundImage];
    ProfileBackgroundTile => "profile_background_tile", Completeness, [ProfileBackgroundTile];
    TimeZonePresent => "time_zone_present", Completeness, [TimeZone];
    UtcOffsetPresent => "utc_offset_present", Completeness, [UtcOffset];
    DescLength => "desc_length", TextStatistics, [Description];
    EmojiCount => "emoji_count", TextStatistics, [Description];
    HasUrlInDesc => "has_url_in_desc", TextStatistics, [Description];
    HasMentionInDesc => "has_mention_in_desc", TextStatistics, [Description];
    HasHashtagInDesc => "has_hashtag_in_desc", TextStatistics, [Description];
    HasEmailInDesc => "has_email_in_desc", TextStatistics, [Description];
    HasPhoneInDesc => "has_phone_in_desc", TextStatistics, [Description];
    HasPromoKeywordInDesc => "has_promo_keyword_in_desc", TextStatistics, [Description];
    UrlCategoryDesc => "url_category_desc", TextStatistics, [Description];
    HasUrlInBio => "has_url_in_bio", TextStatistics, [Url];
    UrlCategoryBio => "url_category_bio", TextStatistics, [Url];
    NameLength => "name_length", Name, [Name];
    NameDigitRatio => "name_digit_ratio", Name, [Name];
    NameSpecialCharRatio => "name_special_char_ratio", Name, [Name];
    ScreenNameLength => "screen_name_length", Name, [ScreenName];
    ScreenNameDigitRatio => "screen_name_digit_ratio", Name, [ScreenName];
    ScreenNameUnderscoreRatio => "screen_name_underscore_ratio", Name, [ScreenName];
    NameScreenNameSimilarity => "name_screen_name_similarity", Name, [Name, ScreenName];
    LangTimezoneMismatch => "lang_timezone_mismatch", LanguageGeo, [Lang, TimeZone];
    LocationGenericFlag => "location_generic_flag", LanguageGeo, [Location];
    DescriptionText => "description_text", Description, [Description];
}

/// Number of rendered profile slots.
pub const SLOT_COUNT: usize = 39;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Categories(Vec<String>),
    Text(String),
}

impl FeatureValue {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            FeatureValue::Real(v) => Some(*v),
            FeatureValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

/// Formats a real like a two-decimal rounded float printed by Python
/// (`0.56`, `0.0`, `1.0`).
pub fn format_rounded(v: f64) -> String {
    let r = (v * 100.0).round() / 100.0;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:?}")
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Bool(b) => write!(f, "{b}"),
            FeatureValue::Int(i) => write!(f, "{i}"),
            FeatureValue::Real(r) => f.write_str(&format_rounded(*r)),
            FeatureValue::Categories(c) => write!(f, "[{}]", c.join(", ")),
            FeatureValue::Text(t) => f.write_str(t),
        }
    }
}

pub type FeatureMap = BTreeMap<ProfileFeature, FeatureValue>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AvailabilityMask {
    bits: Vec<bool>,
}

impl AvailabilityMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), SLOT_COUNT, "mask length must equal the slot count");
        AvailabilityMask { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, feature: ProfileFeature) -> bool {
        self.bits[feature as usize]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// One bit per slot: set iff every raw input of that feature is present.
pub fn availability_mask(profile: &RawProfile) -> AvailabilityMask {
    let bits = ProfileFeature::ALL
        .iter()
        .map(|f| f.inputs().iter().all(|raw| profile.contains_key(raw)))
        .collect();
    AvailabilityMask { bits }
}

/// `name = value; ` or `name = unavailable; ` when the value is masked out.
pub fn render_slot(name: &str, value: Option<&str>, available: bool) -> String {
    let shown = match value {
        Some(v) if available => v,
        _ => PLACEHOLDER,
    };
    format!("{name} = {shown}; ")
}

fn feature_slot(feature: ProfileFeature, value: &FeatureValue, available: bool) -> String {
    if feature == ProfileFeature::DescriptionText {
        return match (available, value) {
            (true, FeatureValue::Text(t)) => t.split_whitespace().collect::<Vec<_>>().join(" "),
            _ => PLACEHOLDER.to_string(),
        };
    }
    let rendered = value.to_string();
    render_slot(feature.name(), Some(&rendered), available)
}

/// Editable lexicons and lookup tables used by the derived features.
#[derive(Debug, Clone)]
pub struct Lexicons {
    pub promo_keywords: Vec<String>,
    pub generic_locations: HashSet<String>,
    pub language_regions: HashMap<String, Vec<String>>,
    pub timezone_regions: HashMap<String, String>,
    pub url_categories: Vec<(String, Vec<String>)>,
}

const PROMO_KEYWORDS: &str = include_str!("../data/promo_keywords.txt");
const GENERIC_LOCATIONS: &str = include_str!("../data/generic_locations.txt");
const LANGUAGE_REGIONS: &str = include_str!("../data/language_regions.tsv");
const TIMEZONE_REGIONS: &str = include_str!("../data/timezone_regions.tsv");
const URL_CATEGORIES: &str = include_str!("../data/url_categories.tsv");

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn tsv_pairs(text: &str) -> impl Iterator<Item = (String, String)> + '_ {
    data_lines(text).filter_map(|l| {
        let (k, v) = l.split_once('\t')?;
        Some((k.trim().to_lowercase(), v.trim().to_lowercase()))
    })
}

fn comma_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

impl Lexicons {
    fn parse(
        promo: &str,
        generic: &str,
        languages: &str,
        timezones: &str,
        urls: &str,
    ) -> Self {
        Lexicons {
            promo_keywords: data_lines(promo).map(|l| l.trim().to_lowercase()).collect(),
            generic_locations: data_lines(generic).map(|l| l.trim().to_lowercase()).collect(),
            language_regions: tsv_pairs(languages).map(|(k, v)| (k, comma_list(&v))).collect(),
            timezone_regions: tsv_pairs(timezones).collect(),
            url_categories: tsv_pairs(urls).map(|(k, v)| (k, comma_list(&v))).collect(),
        }
    }

    /// The lexicons shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(
            PROMO_KEYWORDS,
            GENERIC_LOCATIONS,
            LANGUAGE_REGIONS,
            TIMEZONE_REGIONS,
            URL_CATEGORIES,
        )
    }

    /// Loads lexicon files from `dir`, falling back to the built-in copy for
    /// any file that is not there.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let read = |name: &str, fallback: &'static str| -> std::io::Result<String> {
            let p = dir.join(name);
            if p.exists() {
                std::fs::read_to_string(p)
            } else {
                Ok(fallback.to_string())
            }
        };
        Ok(Self::parse(
            &read("promo_keywords.txt", PROMO_KEYWORDS)?,
            &read("generic_locations.txt", GENERIC_LOCATIONS)?,
            &read("language_regions.tsv", LANGUAGE_REGIONS)?,
            &read("timezone_regions.tsv", TIMEZONE_REGIONS)?,
            &read("url_categories.tsv", URL_CATEGORIES)?,
        ))
    }

    fn url_category(&self, url: &str) -> String {
        let lower = url.to_lowercase();
        self.url_categories
            .iter()
            .find(|(_, kws)| kws.iter().any(|k| lower.contains(k.as_str())))
            .map(|(c, _)| c.clone())
            .unwrap_or_else(|| "other".to_string())
    }

    fn timezone_region(&self, tz: &str) -> Option<&str> {
        let tz = tz.trim().to_lowercase();
        if let Some(r) = self.timezone_regions.get(&tz) {
            return Some(r);
        }
        let area = tz.split('/').next()?;
        self.timezone_regions.get(area).map(String::as_str)
    }

    fn language_regions(&self, lang: &str) -> Option<&[String]> {
        let lang = lang.trim().to_lowercase();
        if let Some(r) = self.language_regions.get(&lang) {
            return Some(r);
        }
        let primary = lang.split(['-', '_']).next()?;
        self.language_regions.get(primary).map(Vec::as_slice)
    }
}

impl Default for Lexicons {
    fn default() -> Self {
        Self::builtin()
    }
}

static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^\w@])@\w+").unwrap());
static HASHTAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|[^\w&#])#\w+").unwrap());
static EMAIL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}").unwrap());
static PHONE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\+?\(?\d(?:[\s\-.()]{0,2}\d){6,}").unwrap());

/// Emoji membership by Unicode block.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F300..=0x1F5FF
        | 0x1F600..=0x1F64F
        | 0x1F680..=0x1F6FF
        | 0x1F700..=0x1F77F
        | 0x1F900..=0x1F9FF
        | 0x1FA70..=0x1FAFF
        | 0x1F1E6..=0x1F1FF
        | 0x2600..=0x26FF
        | 0x2700..=0x27BF)
}

fn ratio(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

pub fn digit_ratio(s: &str) -> f64 {
    ratio(s.chars().filter(|c| c.is_numeric()).count(), s.chars().count())
}

/// Characters that are neither alphanumeric nor whitespace.
pub fn special_char_ratio(s: &str) -> f64 {
    ratio(
        s.chars()
            .filter(|c| !c.is_alphanumeric() && !c.is_whitespace())
            .count(),
        s.chars().count(),
    )
}

pub fn underscore_ratio(s: &str) -> f64 {
    ratio(s.chars().filter(|c| *c == '_').count(), s.chars().count())
}

/// `1 - levenshtein / max(len)` on lowercased strings; two empty strings are
/// identical.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&a.to_lowercase(), &b.to_lowercase())
}

fn text_of(profile: &RawProfile, field: RawField) -> Option<&str> {
    profile.get(&field).and_then(RawValue::as_text)
}

fn int_of(profile: &RawProfile, field: RawField) -> Option<i64> {
    profile.get(&field).and_then(RawValue::as_int)
}

fn flag_of(profile: &RawProfile, field: RawField) -> bool {
    profile.get(&field).and_then(RawValue::as_bool).unwrap_or(false)
}

fn url_categories(lex: &Lexicons, text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in URL_RE.find_iter(text) {
        let c = lex.url_category(m.as_str());
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// Computes all 39 features. Missing inputs yield neutral values (zero,
/// false, empty); whether a feature is shown is decided by the mask.
pub fn derive_features(profile: &RawProfile, lex: &Lexicons) -> FeatureMap {
    use FeatureValue as V;
    use ProfileFeature as F;
    let mut m = FeatureMap::new();

    let followers = int_of(profile, RawField::FollowersCount).unwrap_or(0);
    let friends = int_of(profile, RawField::FriendsCount).unwrap_or(0);
    m.insert(F::FollowersCount, V::Int(followers));
    m.insert(F::FriendsCount, V::Int(friends));
    m.insert(F::FfRatio, V::Real(followers as f64 / friends.max(1) as f64));
    for (f, raw) in [
        (F::StatusesCount, RawField::StatusesCount),
        (F::FavouritesCount, RawField::FavouritesCount),
        (F::ListedCount, RawField::ListedCount),
    ] {
        m.insert(f, V::Int(int_of(profile, raw).unwrap_or(0)));
    }
    for (f, raw) in [
        (F::Verified, RawField::Verified),
        (F::Protected, RawField::Protected),
        (F::DefaultProfileImage, RawField::DefaultProfileImage),
        (F::DefaultProfile, RawField::DefaultProfile),
        (F::GeoEnabled, RawField::GeoEnabled),
        (F::ProfileUseBackgroundImage, RawField::ProfileUseBackgroundImage),
        (F::ProfileBackgroundTile, RawField::ProfileBackgroundTile),
    ] {
        m.insert(f, V::Bool(flag_of(profile, raw)));
    }
    let lang = text_of(profile, RawField::Lang).map(str::trim).unwrap_or("");
    m.insert(
        F::LangHint,
        V::Text(if lang.is_empty() { "und".into() } else { lang.to_lowercase() }),
    );

    let nonempty = |field| text_of(profile, field).is_some_and(|s| !s.trim().is_empty());
    m.insert(F::LocationPresent, V::Bool(nonempty(RawField::Location)));
    m.insert(F::ProfileBannerUrlPresent, V::Bool(nonempty(RawField::ProfileBannerUrl)));
    m.insert(F::TimeZonePresent, V::Bool(nonempty(RawField::TimeZone)));
    m.insert(F::UtcOffsetPresent, V::Bool(profile.contains_key(&RawField::UtcOffset)));

    let desc = text_of(profile, RawField::Description).unwrap_or("");
    let desc_no_urls = URL_RE.replace_all(desc, " ");
    let desc_words = normalize_words(desc);
    m.insert(F::DescLength, V::Int(desc.chars().count() as i64));
    m.insert(F::EmojiCount, V::Int(desc.chars().filter(|c| is_emoji(*c)).count() as i64));
    m.insert(F::HasUrlInDesc, V::Bool(URL_RE.is_match(desc)));
    m.insert(F::HasMentionInDesc, V::Bool(MENTION_RE.is_match(&desc_no_urls)));
    m.insert(F::HasHashtagInDesc, V::Bool(HASHTAG_RE.is_match(&desc_no_urls)));
    m.insert(F::HasEmailInDesc, V::Bool(EMAIL_RE.is_match(&desc_no_urls)));
    m.insert(F::HasPhoneInDesc, V::Bool(PHONE_RE.is_match(&desc_no_urls)));
    m.insert(
        F::HasPromoKeywordInDesc,
        V::Bool(lex.promo_keywords.iter().any(|k| contains_phrase(&desc_words, k))),
    );
    m.insert(F::UrlCategoryDesc, V::Categories(url_categories(lex, desc)));

    let bio_url = text_of(profile, RawField::Url).map(str::trim).unwrap_or("");
    m.insert(F::HasUrlInBio, V::Bool(!bio_url.is_empty()));
    m.insert(
        F::UrlCategoryBio,
        V::Categories(if bio_url.is_empty() {
            vec![]
        } else {
            vec![lex.url_category(bio_url)]
        }),
    );

    let name = text_of(profile, RawField::Name).unwrap_or("");
    let screen = text_of(profile, RawField::ScreenName).unwrap_or("");
    m.insert(F::NameLength, V::Int(name.chars().count() as i64));
    m.insert(F::NameDigitRatio, V::Real(digit_ratio(name)));
    m.insert(F::NameSpecialCharRatio, V::Real(special_char_ratio(name)));
    m.insert(F::ScreenNameLength, V::Int(screen.chars().count() as i64));
    m.insert(F::ScreenNameDigitRatio, V::Real(digit_ratio(screen)));
    m.insert(F::ScreenNameUnderscoreRatio, V::Real(underscore_ratio(screen)));
    m.insert(
        F::NameScreenNameSimilarity,
        V::Real(if profile.contains_key(&RawField::Name) && profile.contains_key(&RawField::ScreenName) {
            name_similarity(name, screen)
        } else {
            0.0
        }),
    );

    let tz = text_of(profile, RawField::TimeZone).unwrap_or("");
    let mismatch = match (lex.language_regions(lang), lex.timezone_region(tz)) {
        (Some(regions), Some(region)) if region != "any" => {
            !regions.iter().any(|r| r == region)
        }
        _ => false,
    };
    m.insert(F::LangTimezoneMismatch, V::Bool(mismatch));
    let location = text_of(profile, RawField::Location).unwrap_or("");
    let loc_norm = normalize_words(location);
    m.insert(
        F::LocationGenericFlag,
        V::Bool(lex.generic_locations.contains(loc_norm.trim())),
    );
    m.insert(F::DescriptionText, V::Text(desc.to_string()));

    debug_assert_eq!(m.len(), SLOT_COUNT);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRendering {
    /// One slot per feature, in schema order.
    pub slots: Vec<String>,
    /// Slots grouped under their category headers, one section per paragraph.
    pub text: String,
    pub features: FeatureMap,
    pub mask: AvailabilityMask,
}

impl ProfileRendering {
    /// Plain concatenation of the slots in schema order.
    pub fn concatenated(&self) -> String {
        self.slots.concat()
    }

    pub fn placeholder_count(&self) -> usize {
        ProfileFeature::ALL
            .iter()
            .zip(&self.slots)
            .filter(|(f, s)| {
                if **f == ProfileFeature::DescriptionText {
                    !self.mask.get(**f) && s.as_str() == PLACEHOLDER
                } else {
                    s.ends_with(&format!("= {PLACEHOLDER}; "))
                }
            })
            .count()
    }
}

fn section_line(section: Section, slots: &[&str]) -> String {
    let body = slots.concat();
    let body = if section == Section::Description {
        body
    } else {
        match body.strip_suffix("; ") {
            Some(b) => format!("{b}."),
            None => body,
        }
    };
    format!("{}: {}", section.header(), body)
}

/// Renders a raw profile into slots and the sectioned profile text.
pub fn render_raw_profile(profile: &RawProfile, lex: &Lexicons) -> ProfileRendering {
    render_features(derive_features(profile, lex), availability_mask(profile))
}

/// Renders already derived features under an explicit mask.
pub fn render_features(features: FeatureMap, mask: AvailabilityMask) -> ProfileRendering {
    let slots: Vec<String> = ProfileFeature::ALL
        .iter()
        .map(|f| feature_slot(*f, &features[f], mask.get(*f)))
        .collect();
    let text = Section::ALL
        .iter()
        .map(|section| {
            let in_section: Vec<&str> = ProfileFeature::ALL
                .iter()
                .zip(&slots)
                .filter(|(f, _)| f.section() == *section)
                .map(|(_, s)| s.as_str())
                .collect();
            section_line(*section, &in_section)
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    ProfileRendering {
        slots,
        text,
        features,
        mask,
    }
}

pub fn render_profile(record: &UserRecord, lex: &Lexicons) -> ProfileRendering {
    render_raw_profile(&record.profile, lex)
}

fn machine_value(v: &FeatureValue) -> String {
    match v {
        FeatureValue::Real(r) => r.to_string(),
        FeatureValue::Categories(c) => c.join("|"),
        other => other.to_string(),
    }
}

/// Writes one CSV row per user with full-precision feature values; masked
/// features are left empty.
pub fn write_feature_csv<W: Write>(
    w: W,
    rows: &[(&str, &ProfileRendering)],
) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["user_id"];
    header.extend(ProfileFeature::ALL.iter().map(|f| f.name()));
    out.write_record(&header)?;
    for (user_id, r) in rows {
        let mut rec = vec![user_id.to_string()];
        for f in ProfileFeature::ALL {
            rec.push(if r.mask.get(*f) {
                machine_value(&r.features[f])
            } else {
                String::new()
            });
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
