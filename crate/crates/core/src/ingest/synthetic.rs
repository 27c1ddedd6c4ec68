//! Seeded generator for desk-scale corpora in the NOTEEVENTS / DIAGNOSES_ICD schema.
//!
//! Every admission draws a set of disease groups; its notes mix filler
//! vocabulary with keywords from those groups only, and its diagnosis rows
//! carry codes from the same groups.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{IngestError, DEFAULT_MIN_WORDS};
use crate::icd9::{GroupId, GroupingTable, GROUP_COUNT};
use crate::text::StopList;

const VOCABULARY_SEED: u64 = 0x1cd9_5eed;

const NOTE_TYPES: [&str; 6] = [
    "Physician Resident Progress",
    "Intensivist Note",
    "Physician Attending Progress",
    "Physician Resident Admission",
    "ICU Note - CVI",
    "Physician Attending Admission (MICU)",
];

const FUNCTION_WORDS: [&str; 10] = ["the", "and", "of", "with", "to", "on", "was", "is", "for", "in"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Total note rows emitted, including rows the cohort filters will drop.
    pub notes: usize,
    pub admissions: usize,
    /// Per-group probability that an admission carries the group.
    pub group_prevalence: Vec<f64>,
    /// Draw exactly one group per admission (weights = prevalence) instead of independent draws.
    pub exclusive_groups: bool,
    /// Signal words per group; lists must be disjoint.
    pub keywords: Vec<Vec<String>>,
    /// Second keyword tier per group, each word used at most `rare_keyword_budget` times.
    pub rare_keywords: Vec<Vec<String>>,
    pub rare_keyword_budget: usize,
    /// Probability that a keyword slot draws from the rare tier.
    pub rare_keyword_share: f64,
    pub filler: Vec<String>,
    /// Inclusive word-count range of regular notes.
    pub note_words: (usize, usize),
    /// Fraction of word slots holding a group keyword.
    pub keyword_rate: f64,
    pub error_fraction: f64,
    pub short_fraction: f64,
    pub other_category_fraction: f64,
    /// Fraction of admissions emitted without any diagnosis row.
    pub undiagnosed_fraction: f64,
    pub min_words: usize,
}

/// Deterministic pronounceable pseudo-words, skipping stopwords and anything in `exclude`.
pub fn pseudo_words(count: usize, seed: u64, exclude: &HashSet<String>) -> Vec<String> {
    const ONSETS: [&str; 18] = [
        "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr",
    ];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let stop = StopList::english();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let syllables = rng.random_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(&mut rng).unwrap());
            w.push_str(VOWELS.choose(&mut rng).unwrap());
        }
        if stop.contains(&w) || exclude.contains(&w) || !seen.insert(w.clone()) {
            continue;
        }
        out.push(w);
    }
    out
}

fn split_groups(words: Vec<String>, per_group: usize) -> Vec<Vec<String>> {
    words.chunks(per_group).take(GROUP_COUNT).map(|c| c.to_vec()).collect()
}

impl SyntheticConfig {
    /// 20 groups with 12 keywords each, 400 filler words and MIMIC-like prevalences.
    pub fn standard(notes: usize, admissions: usize) -> Self {
        let words = pseudo_words(GROUP_COUNT * 12 + 400, VOCABULARY_SEED, &HashSet::new());
        let (kw, filler) = words.split_at(GROUP_COUNT * 12);
        SyntheticConfig {
            notes,
            admissions,
            group_prevalence: vec![
                0.25, 0.15, 0.50, 0.30, 0.25, 0.20, 0.08, 0.70, 0.45, 0.35, 0.30, 0.03, 0.10, 0.15, 0.05, 0.05, 0.35,
                0.30, 0.50, 0.15,
            ],
            exclusive_groups: false,
            keywords: split_groups(kw.to_vec(), 12),
            rare_keywords: vec![Vec::new(); GROUP_COUNT],
            rare_keyword_budget: 0,
            rare_keyword_share: 0.0,
            filler: filler.to_vec(),
            note_words: (40, 120),
            keyword_rate: 0.25,
            error_fraction: 0.02,
            short_fraction: 0.02,
            other_category_fraction: 0.03,
            undiagnosed_fraction: 0.01,
            min_words: DEFAULT_MIN_WORDS,
        }
    }

    /// Two mutually exclusive topics (groups 1 and 2) over a shared filler vocabulary.
    pub fn two_cluster(notes: usize, admissions: usize) -> Self {
        let mut cfg = Self::standard(notes, admissions);
        cfg.exclusive_groups = true;
        cfg.group_prevalence = vec![0.0; GROUP_COUNT];
        cfg.group_prevalence[0] = 0.5;
        cfg.group_prevalence[1] = 0.5;
        cfg
    }

    /// Keywords split into a frequent tier and a rare tier. Rare words stay
    /// below a skipgram `min_count` of `rare_keyword_budget + 1`, so only an
    /// external embedding table can know them.
    pub fn mixed_signal(notes: usize, admissions: usize) -> Self {
        let mut cfg = Self::standard(notes, admissions);
        let taken: HashSet<String> = cfg.keywords.iter().flatten().chain(&cfg.filler).cloned().collect();
        let rare = pseudo_words(GROUP_COUNT * 200, VOCABULARY_SEED ^ 0xa11ce, &taken);
        cfg.rare_keywords = split_groups(rare, 200);
        cfg.rare_keyword_budget = 4;
        cfg.rare_keyword_share = 0.5;
        cfg
    }

    fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::InvalidSynthetic(m));
        if self.admissions == 0 || self.notes < self.admissions {
            return bad(format!(
                "need at least one note per admission ({} notes, {} admissions)",
                self.notes, self.admissions
            ));
        }
        if self.group_prevalence.len() != GROUP_COUNT || self.keywords.len() != GROUP_COUNT {
            return bad("prevalences and keyword lists must cover all 20 groups".into());
        }
        if self.group_prevalence.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("prevalences must lie in [0, 1]".into());
        }
        if self.group_prevalence.iter().all(|&p| p == 0.0) {
            return bad("at least one group needs positive prevalence".into());
        }
        if self.note_words.0 < self.min_words || self.note_words.0 > self.note_words.1 {
            return bad(format!(
                "note length range {:?} must start at min_words ({}) or above",
                self.note_words, self.min_words
            ));
        }
        if self.filler.is_empty() {
            return bad("filler vocabulary is empty".into());
        }
        for (g, p) in self.group_prevalence.iter().enumerate() {
            if *p > 0.0 && self.keywords[g].is_empty() {
                return bad(format!("group {} has positive prevalence but no keywords", g + 1));
            }
        }
        let mut seen: HashSet<&str> = HashSet::new();
        let rare = self.rare_keywords.iter().flatten();
        for w in self.keywords.iter().flatten().chain(rare) {
            if !seen.insert(w) {
                return bad(format!("keyword {w:?} appears in more than one list"));
            }
        }
        if let Some(w) = self.filler.iter().find(|w| seen.contains(w.as_str())) {
            return bad(format!("filler word {w:?} is also a keyword"));
        }
        Ok(())
    }
}

/// CSV bodies plus the group sets drawn for each admission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticData {
    pub notes_csv: String,
    pub diagnoses_csv: String,
    /// `(subject_id, hadm_id, groups)` per admission.
    pub admissions: Vec<(u64, u64, BTreeSet<GroupId>)>,
}

impl SyntheticData {
    pub const NOTES_FILE: &'static str = "NOTEEVENTS.csv";
    pub const DIAGNOSES_FILE: &'static str = "DIAGNOSES_ICD.csv";

    /// Writes both CSVs into `dir`, returning `(notes path, diagnoses path)`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let notes = dir.join(Self::NOTES_FILE);
        let diagnoses = dir.join(Self::DIAGNOSES_FILE);
        std::fs::write(&notes, &self.notes_csv)?;
        std::fs::write(&diagnoses, &self.diagnoses_csv)?;
        Ok((notes, diagnoses))
    }
}

fn random_code(rng: &mut ChaCha8Rng, table: &GroupingTable, group: GroupId) -> String {
    let suffix = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.random_range(0..=2))
            .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
            .collect()
    };
    match (table.numeric_range(group), table.prefix(group)) {
        (Some((lo, hi)), _) => format!("{:03}{}", rng.random_range(lo..=hi), suffix(rng)),
        (None, Some('V')) => {
            let tail: String = (0..rng.random_range(0..=1))
                .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
                .collect();
            format!("V{:02}{tail}", rng.random_range(1..=91))
        }
        (None, Some(_)) => {
            let tail: String = (0..rng.random_range(0..=1))
                .map(|_| char::from(b'0' + rng.random_range(0..10u8)))
                .collect();
            format!("E{:03}{tail}", rng.random_range(800..=999))
        }
        (None, None) => unreachable!("validated grouping table"),
    }
}

struct RareBudget {
    remaining: Vec<Vec<usize>>,
}

impl RareBudget {
    fn draw<'a>(&mut self, rng: &mut ChaCha8Rng, words: &'a [String], group: usize) -> Option<&'a str> {
        let remaining = &mut self.remaining[group];
        let live: Vec<usize> = (0..words.len()).filter(|&i| remaining[i] > 0).collect();
        let &i = live.choose(rng)?;
        remaining[i] -= 1;
        Some(&words[i])
    }
}

fn compose_text(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    groups: &[usize],
    words: usize,
    rare: &mut RareBudget,
) -> String {
    let mut text = String::new();
    for i in 0..words {
        let word: &str = if !groups.is_empty() && rng.random_bool(cfg.keyword_rate) {
            let g = *groups.choose(rng).unwrap();
            let rare_word = if rng.random_bool(cfg.rare_keyword_share) && !cfg.rare_keywords[g].is_empty() {
                rare.draw(rng, &cfg.rare_keywords[g], g)
            } else {
                None
            };
            match rare_word {
                Some(w) => w,
                None => cfg.keywords[g].choose(rng).unwrap(),
            }
        } else if rng.random_bool(0.15) {
            FUNCTION_WORDS.choose(rng).unwrap()
        } else {
            cfg.filler.choose(rng).unwrap()
        };
        if i > 0 {
            text.push(if i % 14 == 0 { '\n' } else { ' ' });
        }
        if i == 0 {
            let mut c = word.chars();
            text.extend(c.next().map(|f| f.to_ascii_uppercase()));
            text.push_str(c.as_str());
        } else {
            text.push_str(word);
        }
        if i % 9 == 8 {
            text.push(if i % 2 == 0 { '.' } else { ',' });
        }
    }
    text.push('.');
    text
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticData, IngestError> {
    config.validate()?;
    let table = GroupingTable::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let subjects = (config.admissions * 3).div_ceil(4).max(1) as u64;
    let mut admissions = Vec::with_capacity(config.admissions);
    for a in 0..config.admissions {
        let subject_id = 10_000 + rng.random_range(0..subjects);
        let hadm_id = 100_000 + a as u64;
        let groups: BTreeSet<usize> = if config.exclusive_groups {
            let weights: Vec<(usize, f64)> = config.group_prevalence.iter().copied().enumerate().collect();
            let &(g, _) = weights.choose_weighted(&mut rng, |w| w.1).expect("positive weights");
            [g].into()
        } else {
            let mut set: BTreeSet<usize> = (0..GROUP_COUNT)
                .filter(|&g| rng.random_bool(config.group_prevalence[g]))
                .collect();
            if set.is_empty() {
                let live: Vec<usize> = (0..GROUP_COUNT).filter(|&g| config.group_prevalence[g] > 0.0).collect();
                set.insert(*live.choose(&mut rng).unwrap());
            }
            set
        };
        admissions.push((subject_id, hadm_id, groups));
    }

    let mut diagnoses = csv::Writer::from_writer(Vec::new());
    diagnoses
        .write_record(["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"])
        .expect("in-memory write");
    let mut dx_row = 0u64;
    for (subject_id, hadm_id, groups) in &admissions {
        if rng.random_bool(config.undiagnosed_fraction) {
            continue;
        }
        let mut seq = 0;
        for &g in groups {
            let group = GroupId::new(g + 1).expect("group index in range");
            for _ in 0..rng.random_range(1..=2) {
                dx_row += 1;
                seq += 1;
                diagnoses
                    .write_record([
                        dx_row.to_string(),
                        subject_id.to_string(),
                        hadm_id.to_string(),
                        seq.to_string(),
                        random_code(&mut rng, &table, group),
                    ])
                    .expect("in-memory write");
            }
        }
    }

    let mut owners: Vec<usize> = (0..config.admissions).collect();
    owners.extend((config.admissions..config.notes).map(|_| rng.random_range(0..config.admissions)));
    owners.shuffle(&mut rng);

    let mut rare = RareBudget {
        remaining: config
            .rare_keywords
            .iter()
            .map(|ws| vec![config.rare_keyword_budget; ws.len()])
            .collect(),
    };
    let mut notes = csv::Writer::from_writer(Vec::new());
    notes
        .write_record([
            "ROW_ID",
            "SUBJECT_ID",
            "HADM_ID",
            "CATEGORY",
            "DESCRIPTION",
            "ISERROR",
            "TEXT",
        ])
        .expect("in-memory write");
    for (i, &owner) in owners.iter().enumerate() {
        let (subject_id, hadm_id, groups) = &admissions[owner];
        let groups: Vec<usize> = groups.iter().copied().collect();
        let roll: f64 = rng.random();
        let (category, is_error, words) = if roll < config.error_fraction {
            (
                "Physician ",
                "1",
                rng.random_range(config.note_words.0..=config.note_words.1),
            )
        } else if roll < config.error_fraction + config.short_fraction {
            ("Physician ", "", rng.random_range(3..config.min_words.max(4)))
        } else if roll < config.error_fraction + config.short_fraction + config.other_category_fraction {
            (
                "Nursing",
                "",
                rng.random_range(config.note_words.0..=config.note_words.1),
            )
        } else {
            (
                "Physician ",
                "",
                rng.random_range(config.note_words.0..=config.note_words.1),
            )
        };
        let description = *NOTE_TYPES.choose(&mut rng).unwrap();
        let text = compose_text(&mut rng, config, &groups, words, &mut rare);
        notes
            .write_record([
                (i + 1).to_string(),
                subject_id.to_string(),
                hadm_id.to_string(),
                category.to_string(),
                description.to_string(),
                is_error.to_string(),
                text,
            ])
            .expect("in-memory write");
    }

    let finish = |w: csv::Writer<Vec<u8>>| String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    Ok(SyntheticData {
        notes_csv: finish(notes),
        diagnoses_csv: finish(diagnoses),
        admissions: admissions
            .into_iter()
            .map(|(s, h, gs)| (s, h, gs.into_iter().map(|g| GroupId::new(g + 1).unwrap()).collect()))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icd9::label_distribution;
    use crate::ingest::{build_cohort, load_diagnoses, load_notes};

    fn cohort_of(data: &SyntheticData) -> crate::ingest::LabeledCorpus {
        let dir = tempfile::tempdir().unwrap();
        let (n, d) = data.write_to(dir.path()).unwrap();
        let notes = load_notes(&n, &["Physician".to_string()].into()).unwrap();
        let dx = load_diagnoses(&d).unwrap();
        build_cohort(notes, &dx.records, &GroupingTable::standard(), DEFAULT_MIN_WORDS).unwrap()
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SyntheticConfig::standard(2000, 500);
        let a = generate_synthetic(&cfg, 7).unwrap();
        let b = generate_synthetic(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&cfg, 8).unwrap();
        assert_ne!(a.notes_csv, c.notes_csv);
    }

    #[test]
    fn round_trips_through_the_loaders() {
        let cfg = SyntheticConfig::standard(2000, 500);
        let data = generate_synthetic(&cfg, 7).unwrap();
        let cohort = cohort_of(&data);
        assert!(cohort.len() <= 2000);
        assert!(cohort.len() > 1700);
        let f = cohort.provenance().filters;
        assert!(f.error_removed > 0 && f.short_removed > 0);
        assert_eq!(
            f.input,
            f.kept + f.error_removed + f.short_removed + f.no_diagnosis_removed
        );
    }

    #[test]
    fn notes_only_carry_their_groups_keywords() {
        let cfg = SyntheticConfig::standard(600, 150);
        let data = generate_synthetic(&cfg, 3).unwrap();
        let cohort = cohort_of(&data);
        let stop = StopList::english();
        for e in cohort.entries() {
            let tokens = crate::text::preprocess_note(&e.note.text, &stop);
            for g in GroupId::all() {
                if e.labels.contains(g) {
                    continue;
                }
                let kw = &cfg.keywords[g.index()];
                assert!(
                    tokens.iter().all(|t| !kw.iter().any(|k| k == t)),
                    "group {g} keyword leaked"
                );
            }
        }
    }

    #[test]
    fn configured_prevalence_is_recovered() {
        let mut cfg = SyntheticConfig::standard(2000, 500);
        cfg.group_prevalence[2] = 0.3;
        let data = generate_synthetic(&cfg, 11).unwrap();
        let cohort = cohort_of(&data);
        let d = label_distribution(cohort.labels(), &GroupingTable::standard()).unwrap();
        let p = d.prevalence(GroupId::new(3).unwrap());
        assert!((p - 0.3).abs() <= 0.05, "prevalence {p}");
    }

    #[test]
    fn rare_tier_respects_budget() {
        let cfg = SyntheticConfig::mixed_signal(800, 200);
        let data = generate_synthetic(&cfg, 5).unwrap();
        let stop = StopList::english();
        let mut counts = std::collections::HashMap::<String, usize>::new();
        let mut reader = csv::Reader::from_reader(data.notes_csv.as_bytes());
        for r in reader.records() {
            for t in crate::text::preprocess_note(&r.unwrap()[6], &stop).iter() {
                *counts.entry(t.to_string()).or_default() += 1;
            }
        }
        let rare: HashSet<&String> = cfg.rare_keywords.iter().flatten().collect();
        let used: Vec<usize> = counts
            .iter()
            .filter(|(w, _)| rare.contains(w))
            .map(|(_, &c)| c)
            .collect();
        assert!(!used.is_empty());
        assert!(used.iter().all(|&c| c <= cfg.rare_keyword_budget));
    }

    #[test]
    fn two_cluster_is_exclusive() {
        let data = generate_synthetic(&SyntheticConfig::two_cluster(200, 50), 1).unwrap();
        for (_, _, g) in &data.admissions {
            assert_eq!(g.len(), 1);
            assert!(g.iter().all(|g| g.get() <= 2));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = SyntheticConfig::standard(100, 20);
        cfg.keywords[1][0] = cfg.keywords[0][0].clone();
        assert!(matches!(
            generate_synthetic(&cfg, 1),
            Err(IngestError::InvalidSynthetic(_))
        ));

        let mut cfg = SyntheticConfig::standard(100, 20);
        cfg.note_words = (10, 40);
        assert!(matches!(
            generate_synthetic(&cfg, 1),
            Err(IngestError::InvalidSynthetic(_))
        ));

        let cfg = SyntheticConfig::standard(10, 20);
        assert!(generate_synthetic(&cfg, 1).is_err());
    }
}
