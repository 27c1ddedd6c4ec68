//! ICD9 code parsing and the 20-group disease grouping.
//!
//! Codes are expected in the undotted form used by `DIAGNOSES_ICD`
//! (`"4280"`, `"V3000"`, `"E8782"`). Numeric codes are grouped by their
//! three-digit category, V and E codes by their prefix letter.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of disease groups predicted by the model.
pub const GROUP_COUNT: usize = 20;

#[derive(Debug, Error)]
pub enum Icd9Error {
    #[error("malformed ICD9 code {0:?}")]
    MalformedCode(String),
    #[error("ICD9 code {0:?} is not covered by the grouping table")]
    Ungrouped(String),
    #[error("group id {0} is outside 1..=20")]
    GroupOutOfRange(usize),
    #[error("invalid grouping table: {0}")]
    InvalidTable(String),
    #[error("cannot read grouping table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse grouping table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("empty corpus")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeKind {
    Numeric,
    V,
    E,
}

/// A syntactically valid ICD9 diagnosis code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Icd9Code {
    raw: String,
    kind: CodeKind,
    numeric_prefix: u32,
}

impl Icd9Code {
    /// Parses an undotted MIMIC-style code. Surrounding whitespace and a
    /// lowercase `v`/`e` prefix are tolerated; a dot after the category is
    /// dropped.
    pub fn parse(code: &str) -> Result<Self, Icd9Error> {
        let malformed = || Icd9Error::MalformedCode(code.to_string());
        let cleaned: String = code.trim().chars().filter(|c| *c != '.').collect();
        let mut chars = cleaned.chars();
        let first = chars.next().ok_or_else(malformed)?;
        let (kind, digits) = match first.to_ascii_uppercase() {
            'V' => (CodeKind::V, chars.as_str()),
            'E' => (CodeKind::E, chars.as_str()),
            c if c.is_ascii_digit() => (CodeKind::Numeric, cleaned.as_str()),
            _ => return Err(malformed()),
        };
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let prefix_len = match kind {
            CodeKind::Numeric => 3,
            CodeKind::V => 2,
            CodeKind::E => 3,
        };
        if digits.len() < prefix_len || digits.len() > prefix_len + 2 {
            return Err(malformed());
        }
        let numeric_prefix: u32 = digits[..prefix_len].parse().map_err(|_| malformed())?;
        if kind == CodeKind::Numeric && numeric_prefix == 0 {
            return Err(malformed());
        }
        let raw = match kind {
            CodeKind::Numeric => digits.to_string(),
            CodeKind::V => format!("V{digits}"),
            CodeKind::E => format!("E{digits}"),
        };
        Ok(Icd9Code {
            raw,
            kind,
            numeric_prefix,
        })
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    /// First three digits for numeric codes, digits after the letter otherwise.
    pub fn numeric_prefix(&self) -> u32 {
        self.numeric_prefix
    }
}

impl fmt::Display for Icd9Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

/// One-based disease group identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct GroupId(u8);

impl GroupId {
    pub fn new(id: usize) -> Result<Self, Icd9Error> {
        if (1..=GROUP_COUNT).contains(&id) {
            Ok(GroupId(id as u8))
        } else {
            Err(Icd9Error::GroupOutOfRange(id))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based position in a label vector.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = GroupId> {
        (1..=GROUP_COUNT as u8).map(GroupId)
    }
}

impl TryFrom<usize> for GroupId {
    type Error = Icd9Error;
    fn try_from(value: usize) -> Result<Self, Self::Error> {
        GroupId::new(value)
    }
}

impl From<GroupId> for usize {
    fn from(g: GroupId) -> usize {
        g.get()
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupRule {
    /// Inclusive range over the three-digit numeric category.
    Range { range: [u32; 2] },
    /// Every code starting with the given letter (`V` or `E`).
    Prefix { prefix: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDefinition {
    pub id: GroupId,
    pub label: String,
    #[serde(flatten)]
    pub rule: GroupRule,
}

/// Maps ICD9 codes onto the 20 disease groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingTable {
    #[serde(rename = "group")]
    groups: Vec<GroupDefinition>,
}

const STANDARD_GROUPS: [(u32, u32, &str); 18] = [
    (1, 139, "infectious and parasitic diseases"),
    (140, 239, "neoplasms"),
    (240, 279, "endocrine, nutritional, metabolic and immunity disorders"),
    (280, 289, "diseases of the blood and blood-forming organs"),
    (290, 319, "mental disorders"),
    (320, 359, "diseases of the nervous system"),
    (360, 389, "diseases of the sense organs"),
    (390, 459, "diseases of the circulatory system"),
    (460, 519, "diseases of the respiratory system"),
    (520, 579, "diseases of the digestive system"),
    (580, 629, "diseases of the genitourinary system"),
    (630, 679, "complications of pregnancy, childbirth and the puerperium"),
    (680, 709, "diseases of the skin and subcutaneous tissue"),
    (710, 739, "diseases of the musculoskeletal system and connective tissue"),
    (740, 759, "congenital anomalies"),
    (760, 779, "certain conditions originating in the perinatal period"),
    (780, 799, "symptoms, signs and ill-defined conditions"),
    (800, 999, "injury and poisoning"),
];

impl GroupingTable {
    /// The standard 20-group chapter split: 18 numeric chapters, V codes, E codes.
    pub fn standard() -> Self {
        let mut groups: Vec<GroupDefinition> = STANDARD_GROUPS
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi, label))| GroupDefinition {
                id: GroupId(i as u8 + 1),
                label: label.to_string(),
                rule: GroupRule::Range { range: [lo, hi] },
            })
            .collect();
        groups.push(GroupDefinition {
            id: GroupId(19),
            label: "supplementary factors (V codes)".to_string(),
            rule: GroupRule::Prefix {
                prefix: "V".to_string(),
            },
        });
        groups.push(GroupDefinition {
            id: GroupId(20),
            label: "external causes of injury (E codes)".to_string(),
            rule: GroupRule::Prefix {
                prefix: "E".to_string(),
            },
        });
        GroupingTable { groups }
    }

    pub fn new(groups: Vec<GroupDefinition>) -> Result<Self, Icd9Error> {
        let table = GroupingTable { groups };
        table.validate()?;
        Ok(table)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, Icd9Error> {
        let table: GroupingTable = toml::from_str(text)?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, Icd9Error> {
        let text = std::fs::read_to_string(path).map_err(|source| Icd9Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grouping table serializes")
    }

    pub fn groups(&self) -> &[GroupDefinition] {
        &self.groups
    }

    pub fn label(&self, id: GroupId) -> &str {
        self.groups
            .iter()
            .find(|g| g.id == id)
            .map(|g| g.label.as_str())
            .unwrap_or("")
    }

    /// Numeric range of a group, `None` for the V and E groups.
    pub fn numeric_range(&self, id: GroupId) -> Option<(u32, u32)> {
        self.groups.iter().find(|g| g.id == id).and_then(|g| match g.rule {
            GroupRule::Range { range } => Some((range[0], range[1])),
            GroupRule::Prefix { .. } => None,
        })
    }

    /// Letter prefix of a group, `None` for numeric groups.
    pub fn prefix(&self, id: GroupId) -> Option<char> {
        self.groups.iter().find(|g| g.id == id).and_then(|g| match &g.rule {
            GroupRule::Prefix { prefix } => prefix.chars().next(),
            GroupRule::Range { .. } => None,
        })
    }

    fn validate(&self) -> Result<(), Icd9Error> {
        let invalid = |m: String| Err(Icd9Error::InvalidTable(m));
        if self.groups.len() != GROUP_COUNT {
            return invalid(format!("expected {GROUP_COUNT} groups, found {}", self.groups.len()));
        }
        let ids: BTreeSet<GroupId> = self.groups.iter().map(|g| g.id).collect();
        if ids.len() != GROUP_COUNT {
            return invalid("group ids must be 1..=20, each used once".to_string());
        }
        let mut ranges = Vec::new();
        let (mut v_rules, mut e_rules) = (0, 0);
        for g in &self.groups {
            match &g.rule {
                GroupRule::Range { range: [lo, hi] } => {
                    if lo > hi || *lo == 0 || *hi > 999 {
                        return invalid(format!("group {}: bad range {lo}..{hi}", g.id));
                    }
                    ranges.push((*lo, *hi, g.id));
                }
                GroupRule::Prefix { prefix } => match prefix.as_str() {
                    "V" | "v" => v_rules += 1,
                    "E" | "e" => e_rules += 1,
                    other => return invalid(format!("group {}: unknown prefix {other:?}", g.id)),
                },
            }
        }
        if v_rules != 1 || e_rules != 1 {
            return invalid("exactly one V rule and one E rule are required".to_string());
        }
        ranges.sort();
        let mut next = 1;
        for (lo, hi, id) in ranges {
            if lo != next {
                return invalid(format!(
                    "numeric ranges must be disjoint and contiguous; group {id} starts at {lo}, expected {next}"
                ));
            }
            next = hi + 1;
        }
        if next != 1000 {
            return invalid(format!("numeric ranges stop at {}, expected 999", next - 1));
        }
        Ok(())
    }

    pub fn group_of(&self, code: &Icd9Code) -> Result<GroupId, Icd9Error> {
        let found = self.groups.iter().find(|g| match (&g.rule, code.kind) {
            (GroupRule::Range { range }, CodeKind::Numeric) => (range[0]..=range[1]).contains(&code.numeric_prefix),
            (GroupRule::Prefix { prefix }, CodeKind::V) => prefix.eq_ignore_ascii_case("V"),
            (GroupRule::Prefix { prefix }, CodeKind::E) => prefix.eq_ignore_ascii_case("E"),
            _ => false,
        });
        found
            .map(|g| g.id)
            .ok_or_else(|| Icd9Error::Ungrouped(code.raw.clone()))
    }
}

impl Default for GroupingTable {
    fn default() -> Self {
        GroupingTable::standard()
    }
}

pub fn parse_and_group(code: &str, table: &GroupingTable) -> Result<GroupId, Icd9Error> {
    table.group_of(&Icd9Code::parse(code)?)
}

/// Binary multi-label target over the 20 groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct LabelVector([u8; GROUP_COUNT]);

impl LabelVector {
    pub fn from_bits(bits: [u8; GROUP_COUNT]) -> Self {
        LabelVector(bits.map(|b| u8::from(b != 0)))
    }

    pub fn bits(&self) -> &[u8; GROUP_COUNT] {
        &self.0
    }

    pub fn contains(&self, group: GroupId) -> bool {
        self.0[group.index()] == 1
    }

    pub fn positives(&self) -> impl Iterator<Item = GroupId> + '_ {
        GroupId::all().filter(|g| self.contains(*g))
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|&b| b as usize).sum()
    }
}

/// Sets position `g - 1` for every group in the set.
pub fn binarize<I: IntoIterator<Item = GroupId>>(groups: I) -> LabelVector {
    let mut bits = [0u8; GROUP_COUNT];
    for g in groups {
        bits[g.index()] = 1;
    }
    LabelVector(bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPrevalence {
    pub group: GroupId,
    pub label: String,
    pub positives: usize,
    pub prevalence: f64,
}

/// Per-group label prevalence over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub entries: usize,
    pub groups: Vec<GroupPrevalence>,
}

impl LabelDistribution {
    pub fn prevalence(&self, group: GroupId) -> f64 {
        self.groups[group.index()].prevalence
    }

    /// 20-row CSV: `group,label,positives,prevalence`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["group", "label", "positives", "prevalence"])
            .expect("in-memory write");
        for g in &self.groups {
            w.write_record([
                g.group.to_string(),
                g.label.clone(),
                g.positives.to_string(),
                format!("{:.6}", g.prevalence),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Fraction of entries labeled positive for each group.
pub fn label_distribution<'a, I>(labels: I, table: &GroupingTable) -> Result<LabelDistribution, Icd9Error>
where
    I: IntoIterator<Item = &'a LabelVector>,
{
    let mut counts = [0usize; GROUP_COUNT];
    let mut entries = 0usize;
    for lv in labels {
        entries += 1;
        for (c, &b) in counts.iter_mut().zip(lv.bits()) {
            *c += b as usize;
        }
    }
    if entries == 0 {
        return Err(Icd9Error::EmptyCorpus);
    }
    let groups = GroupId::all()
        .map(|g| GroupPrevalence {
            group: g,
            label: table.label(g).to_string(),
            positives: counts[g.index()],
            prevalence: counts[g.index()] as f64 / entries as f64,
        })
        .collect();
    Ok(LabelDistribution { entries, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(id: usize) -> GroupId {
        GroupId::new(id).unwrap()
    }

    #[test]
    fn groups_reference_codes() {
        let t = GroupingTable::standard();
        assert_eq!(parse_and_group("4280", &t).unwrap(), g(8));
        assert_eq!(parse_and_group("486", &t).unwrap(), g(9));
        assert_eq!(parse_and_group("V3000", &t).unwrap(), g(19));
        assert_eq!(parse_and_group("E8782", &t).unwrap(), g(20));
        assert_eq!(parse_and_group("0389", &t).unwrap(), g(1));
        assert_eq!(parse_and_group("99591", &t).unwrap(), g(18));
    }

    #[test]
    fn rejects_malformed_codes() {
        let t = GroupingTable::standard();
        for bad in ["X123", "", "  ", "42", "V", "E12", "000", "12a4", "428000", "V1a"] {
            assert!(
                matches!(parse_and_group(bad, &t), Err(Icd9Error::MalformedCode(_))),
                "{bad:?} should be malformed"
            );
        }
    }

    #[test]
    fn exhaustive_prefix_sweep_assigns_exactly_one_group() {
        let t = GroupingTable::standard();
        let mut codes: Vec<String> = (1..=999).map(|p| format!("{p:03}")).collect();
        codes.extend((0..=99).map(|p| format!("V{p:02}")));
        codes.extend((0..=999).map(|p| format!("E{p:03}")));
        for code in &codes {
            let parsed = Icd9Code::parse(code).unwrap();
            let matches = t
                .groups()
                .iter()
                .filter(|def| match (&def.rule, parsed.kind()) {
                    (GroupRule::Range { range }, CodeKind::Numeric) => {
                        (range[0]..=range[1]).contains(&parsed.numeric_prefix())
                    }
                    (GroupRule::Prefix { prefix }, CodeKind::V) => prefix == "V",
                    (GroupRule::Prefix { prefix }, CodeKind::E) => prefix == "E",
                    _ => false,
                })
                .count();
            assert_eq!(matches, 1, "{code}");
            t.group_of(&parsed).unwrap();
        }
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize([]).bits(), &[0u8; 20]);
        let v = binarize([g(8), g(9)]);
        let ones: Vec<usize> = (0..20).filter(|&i| v.bits()[i] == 1).collect();
        assert_eq!(ones, vec![7, 8]);
        assert_eq!(binarize(GroupId::all()).bits(), &[1u8; 20]);
    }

    #[test]
    fn distribution_fractions() {
        let t = GroupingTable::standard();
        let labels = [binarize([g(8)]), binarize([g(8), g(9)])];
        let d = label_distribution(&labels, &t).unwrap();
        assert_eq!(d.prevalence(g(8)), 1.0);
        assert_eq!(d.prevalence(g(9)), 0.5);
        assert_eq!(d.prevalence(g(1)), 0.0);
        let csv = d.to_csv();
        assert_eq!(csv.lines().count(), 21);

        let zeros = [LabelVector::default(); 3];
        let d = label_distribution(&zeros, &t).unwrap();
        assert!(d.groups.iter().all(|r| r.prevalence == 0.0));

        let empty: [LabelVector; 0] = [];
        assert!(matches!(label_distribution(&empty, &t), Err(Icd9Error::EmptyCorpus)));
    }

    #[test]
    fn table_round_trips_through_toml() {
        let t = GroupingTable::standard();
        let text = t.to_toml_string();
        assert_eq!(GroupingTable::from_toml_str(&text).unwrap(), t);
    }

    #[test]
    fn validation_rejects_gaps_and_duplicates() {
        let mut groups = GroupingTable::standard().groups().to_vec();
        groups[1].rule = GroupRule::Range { range: [141, 239] };
        assert!(GroupingTable::new(groups).is_err());

        let mut groups = GroupingTable::standard().groups().to_vec();
        groups[19].rule = GroupRule::Prefix {
            prefix: "V".to_string(),
        };
        assert!(GroupingTable::new(groups).is_err());

        let mut groups = GroupingTable::standard().groups().to_vec();
        groups[3].id = g(4);
        groups[4].id = g(4);
        assert!(GroupingTable::new(groups).is_err());
    }

    proptest! {
        #[test]
        fn binarize_inverts_positions(bits in proptest::array::uniform20(0u8..2)) {
            let v = LabelVector::from_bits(bits);
            prop_assert_eq!(binarize(v.positives()), v);
        }
    }
}
