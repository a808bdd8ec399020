//! Demographic name sets, group pooling and polysemy names.
//!
//! The catalog holds sixteen name sets, each a profile of
//! (gender, race, popularity, decade) with twenty first and twenty last names.
//! Sets are pooled per demographic dimension so that every comparison varies
//! one dimension while holding the others fixed:
//!
//! | dimension  | groups (set ids)                                               |
//! |------------|----------------------------------------------------------------|
//! | gender     | male {1,3,..,15}, female {2,4,..,16}                           |
//! | race       | white {3,4}, black {7,8}, asian {9,10}, hispanic {11,12}       |
//! | popularity | top {1,2}, medium {3,4}, bottom {5,6}                          |
//! | decade     | 2000s {1,2}, 1970s {13,14}, 1940s {15,16}                      |

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::keyed_rng;

/// Number of first (and of last) names in every set.
pub const NAMES_PER_LIST: usize = 20;
/// Number of name sets in a catalog.
pub const SET_COUNT: usize = 16;

const BUNDLED_NAME_SETS: &str = include_str!("../data/name_sets.json");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("name set {set_id}: field `{field}`: {reason}")]
    Validation {
        set_id: u8,
        field: &'static str,
        reason: String,
    },
    #[error("catalog must contain set ids 1..=16 exactly once: {0}")]
    Coverage(String),
    #[error("unknown name set {0}")]
    UnknownSet(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Race {
    White,
    Black,
    Asian,
    Hispanic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Popularity {
    Top,
    Medium,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decade {
    #[serde(rename = "2000s")]
    D2000s,
    #[serde(rename = "1970s")]
    D1970s,
    #[serde(rename = "1940s")]
    D1940s,
}

/// The four demographic dimensions along which bias is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Gender,
    Race,
    Popularity,
    Decade,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Gender,
        Dimension::Race,
        Dimension::Popularity,
        Dimension::Decade,
    ];

    /// Groups of this dimension in reporting order.
    pub fn groups(self) -> Vec<Group> {
        match self {
            Dimension::Gender => vec![Group::Gender(Gender::Male), Group::Gender(Gender::Female)],
            Dimension::Race => [Race::White, Race::Black, Race::Asian, Race::Hispanic]
                .into_iter()
                .map(Group::Race)
                .collect(),
            Dimension::Popularity => [Popularity::Top, Popularity::Medium, Popularity::Bottom]
                .into_iter()
                .map(Group::Popularity)
                .collect(),
            Dimension::Decade => [Decade::D2000s, Decade::D1970s, Decade::D1940s]
                .into_iter()
                .map(Group::Decade)
                .collect(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Gender => "gender",
            Dimension::Race => "race",
            Dimension::Popularity => "popularity",
            Dimension::Decade => "decade",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| format!("unknown dimension `{s}`"))
    }
}

/// A demographic group. Labels are unique across dimensions, so a group
/// serializes as its bare label (`"male"`, `"asian"`, `"1970s"`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Group {
    Gender(Gender),
    Race(Race),
    Popularity(Popularity),
    Decade(Decade),
}

impl Group {
    pub fn dimension(self) -> Dimension {
        match self {
            Group::Gender(_) => Dimension::Gender,
            Group::Race(_) => Dimension::Race,
            Group::Popularity(_) => Dimension::Popularity,
            Group::Decade(_) => Dimension::Decade,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Gender(Gender::Male) => "male",
            Group::Gender(Gender::Female) => "female",
            Group::Race(Race::White) => "white",
            Group::Race(Race::Black) => "black",
            Group::Race(Race::Asian) => "asian",
            Group::Race(Race::Hispanic) => "hispanic",
            Group::Popularity(Popularity::Top) => "top",
            Group::Popularity(Popularity::Medium) => "medium",
            Group::Popularity(Popularity::Bottom) => "bottom",
            Group::Decade(Decade::D2000s) => "2000s",
            Group::Decade(Decade::D1970s) => "1970s",
            Group::Decade(Decade::D1940s) => "1940s",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .flat_map(Dimension::groups)
            .find(|g| g.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown group label `{s}`"))
    }
}

impl From<Group> for String {
    fn from(g: Group) -> String {
        g.label().to_string()
    }
}

impl TryFrom<String> for Group {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Demographic profile of a name set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Profile {
    pub gender: Gender,
    pub race: Race,
    pub popularity: Popularity,
    pub decade: Decade,
}

impl Profile {
    pub fn group(&self, dimension: Dimension) -> Group {
        match dimension {
            Dimension::Gender => Group::Gender(self.gender),
            Dimension::Race => Group::Race(self.race),
            Dimension::Popularity => Group::Popularity(self.popularity),
            Dimension::Decade => Group::Decade(self.decade),
        }
    }
}

/// The fixed profile of each set id (1-based index into this table).
pub fn table_profile(set_id: u8) -> Option<Profile> {
    use Decade::*;
    use Gender::*;
    use Popularity::*;
    use Race::*;
    let (gender, race, popularity, decade) = match set_id {
        1 => (Male, White, Top, D2000s),
        2 => (Female, White, Top, D2000s),
        3 => (Male, White, Medium, D2000s),
        4 => (Female, White, Medium, D2000s),
        5 => (Male, White, Bottom, D2000s),
        6 => (Female, White, Bottom, D2000s),
        7 => (Male, Black, Medium, D2000s),
        8 => (Female, Black, Medium, D2000s),
        9 => (Male, Asian, Medium, D2000s),
        10 => (Female, Asian, Medium, D2000s),
        11 => (Male, Hispanic, Medium, D2000s),
        12 => (Female, Hispanic, Medium, D2000s),
        13 => (Male, White, Top, D1970s),
        14 => (Female, White, Top, D1970s),
        15 => (Male, White, Top, D1940s),
        16 => (Female, White, Top, D1940s),
        _ => return None,
    };
    Some(Profile {
        gender,
        race,
        popularity,
        decade,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSet {
    pub set_id: u8,
    pub gender: Gender,
    pub race: Race,
    pub popularity: Popularity,
    pub decade: Decade,
    pub first_names: Vec<String>,
    pub last_names: Vec<String>,
}

impl NameSet {
    pub fn profile(&self) -> Profile {
        Profile {
            gender: self.gender,
            race: self.race,
            popularity: self.popularity,
            decade: self.decade,
        }
    }
}

/// A first/last pair drawn from one name source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FullName {
    pub first: String,
    pub last: String,
    pub source_set: u8,
}

impl FullName {
    pub fn full(&self) -> String {
        format!("{} {}", self.first, self.last)
    }
}

// Raw file row; labels stay strings until validated so errors can name the set.
#[derive(Deserialize)]
struct RawNameSet {
    set_id: u8,
    gender: String,
    race: String,
    popularity: String,
    decade: String,
    first_names: Vec<String>,
    last_names: Vec<String>,
}

/// Sixteen validated name sets, ordered by set id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    sets: Vec<NameSet>,
}

impl Catalog {
    /// The catalog compiled into the crate: Table-1 exemplar names padded with
    /// synthetic fillers to twenty per list.
    pub fn bundled() -> Catalog {
        Catalog::from_json_str(BUNDLED_NAME_SETS).expect("bundled catalog is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Catalog, CatalogError> {
        let raw: Vec<RawNameSet> = serde_json::from_str(text)?;
        let mut sets = raw
            .into_iter()
            .map(validate_set)
            .collect::<Result<Vec<_>, _>>()?;
        sets.sort_by_key(|s| s.set_id);
        let ids: Vec<u8> = sets.iter().map(|s| s.set_id).collect();
        if ids != (1..=SET_COUNT as u8).collect::<Vec<_>>() {
            return Err(CatalogError::Coverage(format!("found {ids:?}")));
        }
        // Sets in the same (race, popularity, decade) stratum share last names.
        for a in &sets {
            for b in &sets {
                if a.set_id < b.set_id
                    && a.gender != b.gender
                    && (a.race, a.popularity, a.decade) == (b.race, b.popularity, b.decade)
                    && a.last_names != b.last_names
                {
                    return Err(CatalogError::Validation {
                        set_id: b.set_id,
                        field: "last_names",
                        reason: format!("must equal the last names of set {}", a.set_id),
                    });
                }
            }
        }
        Ok(Catalog { sets })
    }

    pub fn sets(&self) -> &[NameSet] {
        &self.sets
    }

    pub fn set(&self, set_id: u8) -> Result<&NameSet, CatalogError> {
        self.sets
            .iter()
            .find(|s| s.set_id == set_id)
            .ok_or(CatalogError::UnknownSet(set_id))
    }

    /// Every distinct first and last name in the catalog.
    pub fn all_names(&self) -> HashSet<&str> {
        self.sets
            .iter()
            .flat_map(|s| s.first_names.iter().chain(&s.last_names))
            .map(String::as_str)
            .collect()
    }
}

fn validate_set(raw: RawNameSet) -> Result<NameSet, CatalogError> {
    let set_id = raw.set_id;
    let invalid = |field: &'static str, reason: String| CatalogError::Validation {
        set_id,
        field,
        reason,
    };
    let expected = table_profile(set_id).ok_or_else(|| invalid("set_id", "must be in 1..=16".into()))?;

    fn label<T: for<'de> Deserialize<'de>>(s: &str) -> Option<T> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).ok()
    }
    let gender: Gender = label(&raw.gender)
        .ok_or_else(|| invalid("gender", format!("unknown group label `{}`", raw.gender)))?;
    let race: Race = label(&raw.race)
        .ok_or_else(|| invalid("race", format!("unknown group label `{}`", raw.race)))?;
    let popularity: Popularity = label(&raw.popularity)
        .ok_or_else(|| invalid("popularity", format!("unknown group label `{}`", raw.popularity)))?;
    let decade: Decade = label(&raw.decade)
        .ok_or_else(|| invalid("decade", format!("unknown group label `{}`", raw.decade)))?;

    let profile = Profile {
        gender,
        race,
        popularity,
        decade,
    };
    if profile != expected {
        return Err(invalid(
            "profile",
            format!("expected {expected:?}, found {profile:?}"),
        ));
    }

    for (field, names) in [("first_names", &raw.first_names), ("last_names", &raw.last_names)] {
        if names.len() != NAMES_PER_LIST {
            return Err(invalid(
                field,
                format!("expected {NAMES_PER_LIST} names, found {}", names.len()),
            ));
        }
        let mut seen = HashSet::new();
        for name in names {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(invalid(
                    field,
                    format!("name `{name}` must be non-empty without whitespace"),
                ));
            }
            if !seen.insert(name) {
                return Err(invalid(field, format!("duplicate name `{name}`")));
            }
        }
    }

    Ok(NameSet {
        set_id,
        gender,
        race,
        popularity,
        decade,
        first_names: raw.first_names,
        last_names: raw.last_names,
    })
}

/// Reads and validates a catalog file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Catalog::from_json_str(&text)
}

/// Draws a uniform (first, last) index pair for lists of the given sizes.
pub(crate) fn sample_pair(n_first: usize, n_last: usize, key: u64) -> (usize, usize) {
    let cell = keyed_rng(key).random_range(0..n_first * n_last);
    (cell / n_last, cell % n_last)
}

/// Samples one of the 400 first × last pairs of a set. A pure function of
/// `(catalog, set_id, key)`.
pub fn sample_full_name(catalog: &Catalog, set_id: u8, key: u64) -> Result<FullName, CatalogError> {
    let set = catalog.set(set_id)?;
    let (f, l) = sample_pair(set.first_names.len(), set.last_names.len(), key);
    Ok(FullName {
        first: set.first_names[f].clone(),
        last: set.last_names[l].clone(),
        source_set: set_id,
    })
}

/// Set ids pooled into each group of one dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pooling {
    pub dimension: Dimension,
    pub groups: Vec<(Group, Vec<u8>)>,
}

impl Pooling {
    pub fn group_of(&self, set_id: u8) -> Option<Group> {
        self.groups
            .iter()
            .find(|(_, ids)| ids.contains(&set_id))
            .map(|(g, _)| *g)
    }

    pub fn set_ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.groups.iter().flat_map(|(_, ids)| ids.iter().copied())
    }
}

/// Pools the catalog's sets for one dimension, holding the other dimensions fixed:
/// race compares medium-popularity 2000s sets, popularity compares White 2000s
/// sets, decade compares White top-popularity sets. Gender pools every set.
pub fn pool_groups(catalog: &Catalog, dimension: Dimension) -> Pooling {
    let controlled = |p: &Profile| match dimension {
        Dimension::Gender => true,
        Dimension::Race => p.popularity == Popularity::Medium && p.decade == Decade::D2000s,
        Dimension::Popularity => p.race == Race::White && p.decade == Decade::D2000s,
        Dimension::Decade => p.race == Race::White && p.popularity == Popularity::Top,
    };
    let groups = dimension
        .groups()
        .into_iter()
        .map(|g| {
            let ids = catalog
                .sets
                .iter()
                .filter(|s| {
                    let p = s.profile();
                    controlled(&p) && p.group(dimension) == g
                })
                .map(|s| s.set_id)
                .collect();
            (g, ids)
        })
        .collect();
    Pooling { dimension, groups }
}

/// Which Asian polysemy list to use: the six names as printed, or the first
/// five so that every race has five names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsianPolysemyVariant {
    #[default]
    FiveNames,
    SixNames,
}

/// First names that double as common English words or places.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolysemySet {
    pub race: Race,
    pub first_names: Vec<String>,
}

impl PolysemySet {
    /// Pseudo set id tagging notes populated from this set (17 white, 18 black, 19 asian).
    pub fn set_id(&self) -> u8 {
        polysemy_set_id(self.race)
    }
}

pub fn polysemy_set_id(race: Race) -> u8 {
    match race {
        Race::White => 17,
        Race::Black => 18,
        Race::Asian => 19,
        Race::Hispanic => 20,
    }
}

pub fn polysemy_race(set_id: u8) -> Option<Race> {
    match set_id {
        17 => Some(Race::White),
        18 => Some(Race::Black),
        19 => Some(Race::Asian),
        _ => None,
    }
}

pub fn polysemy_catalog(variant: AsianPolysemyVariant) -> [PolysemySet; 3] {
    let owned = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let asian: &[&str] = match variant {
        AsianPolysemyVariant::FiveNames => &["Asian", "Thai", "King", "Long", "Young"],
        AsianPolysemyVariant::SixNames => &["Asian", "Thai", "King", "Long", "Young", "Can"],
    };
    [
        PolysemySet {
            race: Race::White,
            first_names: owned(&["Sydney", "Faith", "Forest", "Cliff", "June"]),
        },
        PolysemySet {
            race: Race::Black,
            first_names: owned(&["Quincy", "Cleveland", "Kenya", "Prince", "Ivory"]),
        },
        PolysemySet {
            race: Race::Asian,
            first_names: owned(asian),
        },
    ]
}

/// Samples a polysemy first name paired with a last name from the same race's
/// medium-popularity 2000s sets, so only the first name is polysemous.
pub fn sample_polysemy_name(
    catalog: &Catalog,
    set: &PolysemySet,
    key: u64,
) -> Result<FullName, CatalogError> {
    let last_source = catalog
        .sets
        .iter()
        .find(|s| {
            s.race == set.race && s.popularity == Popularity::Medium && s.decade == Decade::D2000s
        })
        .ok_or(CatalogError::UnknownSet(set.set_id()))?;
    let (f, l) = sample_pair(set.first_names.len(), last_source.last_names.len(), key);
    Ok(FullName {
        first: set.first_names[f].clone(),
        last: last_source.last_names[l].clone(),
        source_set: set.set_id(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::special::chi_square_sf;

    fn bundled_json() -> serde_json::Value {
        serde_json::from_str(BUNDLED_NAME_SETS).unwrap()
    }

    #[test]
    fn bundled_catalog_has_table_exemplars() {
        let cat = Catalog::bundled();
        assert_eq!(cat.sets().len(), 16);
        let s1 = cat.set(1).unwrap();
        assert_eq!(
            s1.profile(),
            Profile {
                gender: Gender::Male,
                race: Race::White,
                popularity: Popularity::Top,
                decade: Decade::D2000s
            }
        );
        for n in ["Jacob", "Ethan", "Tyler"] {
            assert!(s1.first_names.iter().any(|f| f == n));
        }
        assert!(cat.set(8).unwrap().first_names.contains(&"Aisha".to_string()));
        assert!(cat.set(9).unwrap().last_names.contains(&"Ngo".to_string()));
    }

    #[test]
    fn nineteen_first_names_is_rejected_with_set_id() {
        let mut v = bundled_json();
        v[4]["first_names"].as_array_mut().unwrap().pop();
        let err = Catalog::from_json_str(&v.to_string()).unwrap_err();
        match err {
            CatalogError::Validation { set_id, field, .. } => {
                assert_eq!(set_id, 5);
                assert_eq!(field, "first_names");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_unknown_label_are_rejected() {
        let mut v = bundled_json();
        v[0]["last_names"][1] = v[0]["last_names"][0].clone();
        assert!(matches!(
            Catalog::from_json_str(&v.to_string()),
            Err(CatalogError::Validation { set_id: 1, field: "last_names", .. })
        ));

        let mut v = bundled_json();
        v[2]["race"] = "martian".into();
        assert!(matches!(
            Catalog::from_json_str(&v.to_string()),
            Err(CatalogError::Validation { set_id: 3, field: "race", .. })
        ));
    }

    #[test]
    fn mismatched_stratum_last_names_are_rejected() {
        let mut v = bundled_json();
        v[3]["last_names"][0] = "Zzyzx".into();
        assert!(matches!(
            Catalog::from_json_str(&v.to_string()),
            Err(CatalogError::Validation { set_id: 4, field: "last_names", .. })
        ));
    }

    #[test]
    fn empty_file_is_a_parse_error() {
        assert!(matches!(Catalog::from_json_str(""), Err(CatalogError::Parse(_))));
    }

    #[test]
    fn load_from_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sets.json");
        std::fs::write(&path, BUNDLED_NAME_SETS).unwrap();
        assert_eq!(load_catalog(&path).unwrap(), Catalog::bundled());
        assert!(matches!(
            load_catalog(dir.path().join("missing.json")),
            Err(CatalogError::Io { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_checks_set() {
        let cat = Catalog::bundled();
        let a = sample_full_name(&cat, 1, 42).unwrap();
        let b = sample_full_name(&cat, 1, 42).unwrap();
        assert_eq!(a, b);
        assert!(cat.set(1).unwrap().first_names.contains(&a.first));
        assert!(cat.set(1).unwrap().last_names.contains(&a.last));
        assert!(matches!(
            sample_full_name(&cat, 99, 42),
            Err(CatalogError::UnknownSet(99))
        ));
    }

    #[test]
    fn sampling_is_uniform_over_400_pairs() {
        // Chi-square goodness of fit over the 400-cell histogram, plus a 5-sigma
        // bound on every cell.
        let cat = Catalog::bundled();
        let set = cat.set(1).unwrap();
        let n = 100_000usize;
        let mut counts = vec![0usize; 400];
        for i in 0..n {
            let name = sample_full_name(&cat, 1, crate::rng::derive_key(9, &[i as u64])).unwrap();
            let f = set.first_names.iter().position(|x| *x == name.first).unwrap();
            let l = set.last_names.iter().position(|x| *x == name.last).unwrap();
            counts[f * 20 + l] += 1;
        }
        let expected = n as f64 / 400.0;
        let sigma = (n as f64 * (1.0 / 400.0) * (399.0 / 400.0)).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 5.0 * sigma);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi_square_sf(chi2, 399.0) > 0.01, "chi2 = {chi2}");
    }

    #[test]
    fn pooling_matches_the_published_design() {
        let cat = Catalog::bundled();
        let g = pool_groups(&cat, Dimension::Gender);
        assert_eq!(g.groups[0].1, vec![1, 3, 5, 7, 9, 11, 13, 15]);
        assert_eq!(g.groups[1].1, vec![2, 4, 6, 8, 10, 12, 14, 16]);
        let mut all: Vec<u8> = g.set_ids().collect();
        all.sort();
        assert_eq!(all, (1..=16).collect::<Vec<_>>());

        let r = pool_groups(&cat, Dimension::Race);
        assert_eq!(
            r.groups,
            vec![
                (Group::Race(Race::White), vec![3, 4]),
                (Group::Race(Race::Black), vec![7, 8]),
                (Group::Race(Race::Asian), vec![9, 10]),
                (Group::Race(Race::Hispanic), vec![11, 12]),
            ]
        );
        let p = pool_groups(&cat, Dimension::Popularity);
        assert_eq!(
            p.groups.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(),
            vec![vec![1, 2], vec![3, 4], vec![5, 6]]
        );
        for id in p.set_ids() {
            assert_eq!(cat.set(id).unwrap().race, Race::White);
        }
        let d = pool_groups(&cat, Dimension::Decade);
        assert_eq!(
            d.groups.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(),
            vec![vec![1, 2], vec![13, 14], vec![15, 16]]
        );
        for dim in Dimension::ALL {
            let pooling = pool_groups(&cat, dim);
            let ids: Vec<u8> = pooling.set_ids().collect();
            let unique: HashSet<u8> = ids.iter().copied().collect();
            assert_eq!(ids.len(), unique.len(), "{dim} pools overlap");
        }
        assert_eq!(
            Dimension::ALL.map(|d| d.groups().len()),
            [2, 4, 3, 3]
        );
    }

    #[test]
    fn polysemy_sets() {
        let [white, black, asian] = polysemy_catalog(AsianPolysemyVariant::FiveNames);
        assert!(black.first_names.contains(&"Cleveland".to_string()));
        assert_eq!(white.first_names, ["Sydney", "Faith", "Forest", "Cliff", "June"]);
        assert_eq!(asian.first_names.len(), 5);
        let six = polysemy_catalog(AsianPolysemyVariant::SixNames);
        assert_eq!(six[2].first_names.len(), 6);
        for n in &white.first_names {
            assert!(!black.first_names.contains(n) && !six[2].first_names.contains(n));
        }
        let cat = Catalog::bundled();
        let name = sample_polysemy_name(&cat, &black, 5).unwrap();
        assert!(cat.set(7).unwrap().last_names.contains(&name.last));
        assert_eq!(name.source_set, 18);
        assert_eq!(polysemy_race(18), Some(Race::Black));
    }

    #[test]
    fn group_labels_round_trip() {
        for dim in Dimension::ALL {
            for g in dim.groups() {
                assert_eq!(g.label().parse::<Group>().unwrap(), g);
                assert_eq!(g.dimension(), dim);
                let json = serde_json::to_string(&g).unwrap();
                assert_eq!(serde_json::from_str::<Group>(&json).unwrap(), g);
            }
        }
    }
}
