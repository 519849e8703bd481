//! Participant demographics and the analysis groups derived from them.
//!
//! Countries are bucketed into World Values Survey cultural spheres rather
//! than continents. The shipped table lives in `data/cultural_spheres.json`
//! and can be replaced at runtime with [`CulturalSphereTable::from_json`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHIPPED_SPHERES: &str = include_str!("../data/cultural_spheres.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CulturalSphere {
    #[serde(rename = "African-Islamic")]
    AfricanIslamic,
    #[serde(rename = "Baltic")]
    Baltic,
    #[serde(rename = "Catholic-Europe")]
    CatholicEurope,
    #[serde(rename = "Confucian")]
    Confucian,
    #[serde(rename = "English-Speaking")]
    EnglishSpeaking,
    #[serde(rename = "Latin-America")]
    LatinAmerica,
    #[serde(rename = "Orthodox-Europe")]
    OrthodoxEurope,
    #[serde(rename = "Protestant-Europe")]
    ProtestantEurope,
    #[serde(rename = "West-South-Asia")]
    WestSouthAsia,
}

impl CulturalSphere {
    pub const ALL: [CulturalSphere; 9] = [
        Self::AfricanIslamic,
        Self::Baltic,
        Self::CatholicEurope,
        Self::Confucian,
        Self::EnglishSpeaking,
        Self::LatinAmerica,
        Self::OrthodoxEurope,
        Self::ProtestantEurope,
        Self::WestSouthAsia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AfricanIslamic => "African-Islamic",
            Self::Baltic => "Baltic",
            Self::CatholicEurope => "Catholic-Europe",
            Self::Confucian => "Confucian",
            Self::EnglishSpeaking => "English-Speaking",
            Self::LatinAmerica => "Latin-America",
            Self::OrthodoxEurope => "Orthodox-Europe",
            Self::ProtestantEurope => "Protestant-Europe",
            Self::WestSouthAsia => "West-South-Asia",
        }
    }
}

impl fmt::Display for CulturalSphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize_country(country: &str) -> String {
    country.trim().to_lowercase()
}

/// Country name to cultural sphere. Lookups are case-insensitive.
#[derive(Debug, Clone)]
pub struct CulturalSphereTable {
    entries: BTreeMap<String, CulturalSphere>,
}

impl CulturalSphereTable {
    /// The table shipped with the crate.
    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_SPHERES).expect("shipped sphere table parses")
    }

    /// Parses a `{"country": "sphere", ...}` object. Every sphere must be
    /// represented at least once.
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: BTreeMap<String, CulturalSphere> = serde_json::from_str(json)?;
        let mut entries = BTreeMap::new();
        for (country, sphere) in raw {
            if let Some(prev) = entries.insert(normalize_country(&country), sphere) {
                if prev != sphere {
                    return Err(Error::Invalid(format!(
                        "country {country:?} mapped to both {prev} and {sphere}"
                    )));
                }
            }
        }
        let seen: BTreeSet<_> = entries.values().copied().collect();
        if let Some(missing) = CulturalSphere::ALL.iter().find(|s| !seen.contains(s)) {
            return Err(Error::Invalid(format!("sphere {missing} has no countries")));
        }
        Ok(Self { entries })
    }

    /// `None` marks an unmapped country. Unmapped countries are left out of
    /// sphere groupings instead of being guessed.
    pub fn sphere_for_country(&self, country: &str) -> Option<CulturalSphere> {
        self.entries.get(&normalize_country(country)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Default for CulturalSphereTable {
    fn default() -> Self {
        Self::shipped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Man,
    Woman,
    NonBinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Education {
    PreHighSchool,
    HighSchool,
    College,
    GraduateSchool,
    ProfessionalSchool,
    Phd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ethnicity {
    Asian,
    Black,
    Latino,
    NativeAmerican,
    PacificIslander,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Religion {
    Buddhist,
    Christian,
    Hindu,
    Jewish,
    Muslim,
    Spiritual,
    None,
}

/// Serde key of a unit enum variant, e.g. `NonBinary` -> `"non_binary"`.
fn enum_key<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("demographic enums serialize as strings"),
    }
}

/// What a participant reports about themselves. Only `country_longest` and
/// `taken_before` are required.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicProfile {
    pub country_longest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country_residence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_years: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_languages: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education: Option<Education>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ethnicities: Option<BTreeSet<Ethnicity>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub religion: Option<Religion>,
    #[serde(default)]
    pub taken_before: bool,
}

pub fn is_united_states(country: &str) -> bool {
    matches!(
        normalize_country(country).as_str(),
        "united states" | "united states of america" | "usa" | "us"
    )
}

impl DemographicProfile {
    pub fn new(country_longest: impl Into<String>) -> Self {
        Self {
            country_longest: country_longest.into(),
            country_residence: None,
            age_years: None,
            gender: None,
            native_languages: None,
            education: None,
            ethnicities: None,
            religion: None,
            taken_before: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.country_longest.trim().is_empty() {
            return Err(Error::Invalid("country_longest is required".into()));
        }
        if self.age_years == Some(0) {
            return Err(Error::Invalid("age_years must be positive".into()));
        }
        if self.ethnicities.is_some()
            && !self
                .country_residence
                .as_deref()
                .is_some_and(is_united_states)
        {
            return Err(Error::Invalid(
                "ethnicity is only collected for United States residents".into(),
            ));
        }
        Ok(())
    }
}

/// Demographic categories in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicCategory {
    CountryLongestSphere,
    CountryResidenceSphere,
    AgeBucket,
    Gender,
    NativeLanguage,
    Education,
    Ethnicity,
    Religion,
}

impl DemographicCategory {
    pub const ALL: [DemographicCategory; 8] = [
        Self::CountryLongestSphere,
        Self::CountryResidenceSphere,
        Self::AgeBucket,
        Self::Gender,
        Self::NativeLanguage,
        Self::Education,
        Self::Ethnicity,
        Self::Religion,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Self::CountryLongestSphere => "Country (Lived Longest)",
            Self::CountryResidenceSphere => "Country (Residence)",
            Self::AgeBucket => "Age",
            Self::Gender => "Gender",
            Self::NativeLanguage => "Native Language",
            Self::Education => "Education Level",
            Self::Ethnicity => "Ethnicity",
            Self::Religion => "Religion",
        }
    }
}

/// One analysis bucket, e.g. (age_bucket, "20-30").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemographicGroup {
    pub category: DemographicCategory,
    pub key: String,
}

impl DemographicGroup {
    pub fn new(category: DemographicCategory, key: impl Into<String>) -> Self {
        Self {
            category,
            key: key.into(),
        }
    }

    /// Row label for rendered tables.
    pub fn display_key(&self) -> String {
        use DemographicCategory as C;
        let fixed = match (self.category, self.key.as_str()) {
            (C::AgeBucket, k) => return format!("{k} yrs old"),
            (C::Gender, "man") => "Man",
            (C::Gender, "woman") => "Woman",
            (C::Gender, "non_binary") => "Non-Binary",
            (C::Education, "pre_high_school") => "Pre-High School",
            (C::Education, "high_school") => "High School",
            (C::Education, "college") => "College",
            (C::Education, "graduate_school") => "Graduate School",
            (C::Education, "professional_school") => "Professional School",
            (C::Education, "phd") => "PhD",
            (C::Ethnicity, "asian") => "Asian, Asian American",
            (C::Ethnicity, "black") => "Black, African American",
            (C::Ethnicity, "latino") => "Latino / Latina, Hispanic",
            (C::Ethnicity, "native_american") => "Native American, Alaskan Native",
            (C::Ethnicity, "pacific_islander") => "Pacific Islander, Native Australian",
            (C::Ethnicity, "white") => "White",
            (C::Religion, "buddhist") => "Buddhist",
            (C::Religion, "christian") => "Christian",
            (C::Religion, "hindu") => "Hindu",
            (C::Religion, "jewish") => "Jewish",
            (C::Religion, "muslim") => "Muslim",
            (C::Religion, "spiritual") => "Spiritual",
            (C::Religion, "none") => "None",
            _ => return self.key.clone(),
        };
        fixed.to_string()
    }
}

impl fmt::Display for DemographicGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", enum_key(&self.category), self.key)
    }
}

/// Decade bucket, lower-inclusive: 20 -> "20-30". Ages under 10 share the
/// first bucket and 80 and above collapse into "80+".
pub fn age_bucket(age_years: u32) -> Result<String> {
    if age_years == 0 {
        return Err(Error::Invalid("age must be positive".into()));
    }
    let decade = (age_years / 10).max(1);
    Ok(if decade >= 8 {
        "80+".to_string()
    } else {
        format!("{}-{}", decade * 10, decade * 10 + 10)
    })
}

/// Every analysis group a participant belongs to. Absent fields contribute
/// nothing; ethnicity yields one group per reported value.
pub fn groups_for_profile(
    profile: &DemographicProfile,
    table: &CulturalSphereTable,
) -> BTreeSet<DemographicGroup> {
    use DemographicCategory as C;
    let mut groups = BTreeSet::new();
    let mut push = |category, key: String| {
        groups.insert(DemographicGroup::new(category, key));
    };

    if let Some(sphere) = table.sphere_for_country(&profile.country_longest) {
        push(C::CountryLongestSphere, sphere.name().to_string());
    }
    if let Some(sphere) = profile
        .country_residence
        .as_deref()
        .and_then(|c| table.sphere_for_country(c))
    {
        push(C::CountryResidenceSphere, sphere.name().to_string());
    }
    if let Some(bucket) = profile.age_years.and_then(|a| age_bucket(a).ok()) {
        push(C::AgeBucket, bucket);
    }
    if let Some(gender) = &profile.gender {
        push(C::Gender, enum_key(gender));
    }
    if let Some(langs) = &profile.native_languages {
        if !langs.is_empty() {
            let english = langs.iter().any(|l| l.trim().eq_ignore_ascii_case("english"));
            push(
                C::NativeLanguage,
                if english { "English" } else { "Not English" }.to_string(),
            );
        }
    }
    if let Some(education) = &profile.education {
        push(C::Education, enum_key(education));
    }
    for ethnicity in profile.ethnicities.iter().flatten() {
        push(C::Ethnicity, enum_key(ethnicity));
    }
    if let Some(religion) = &profile.religion {
        push(C::Religion, enum_key(religion));
    }
    groups
}
