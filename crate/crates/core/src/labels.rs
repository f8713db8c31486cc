//! Traffic classes and the NSL-KDD attack taxonomy.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use once_cell::race::OnceBox;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Attack-name to class table, versioned so class totals stay auditable.
pub const TAXONOMY_CSV: &str = include_str!("../data/nslkdd_taxonomy.csv");

/// Five-class NSL-KDD label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrafficClass {
    Normal,
    DoS,
    Probe,
    R2L,
    U2R,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 5] = [
        TrafficClass::Normal,
        TrafficClass::DoS,
        TrafficClass::Probe,
        TrafficClass::R2L,
        TrafficClass::U2R,
    ];
    pub const COUNT: usize = 5;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TrafficClass::Normal => "Normal",
            TrafficClass::DoS => "DoS",
            TrafficClass::Probe => "Probe",
            TrafficClass::R2L => "R2L",
            TrafficClass::U2R => "U2R",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrafficClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrafficClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Two-class view of a [`TrafficClass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryClass {
    Normal,
    Attack,
}

impl BinaryClass {
    pub const ALL: [BinaryClass; 2] = [BinaryClass::Normal, BinaryClass::Attack];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryClass::Normal => "Normal",
            BinaryClass::Attack => "Attack",
        }
    }
}

pub fn binarize(class: TrafficClass) -> BinaryClass {
    match class {
        TrafficClass::Normal => BinaryClass::Normal,
        _ => BinaryClass::Attack,
    }
}

/// Class-index version of [`binarize`] for prediction vectors.
pub fn binarize_index(class: usize) -> usize {
    usize::from(class != TrafficClass::Normal.index())
}

/// Parsed taxonomy table.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    version: &'static str,
    entries: Vec<(&'static str, TrafficClass)>,
}

impl Taxonomy {
    /// The bundled NSL-KDD table.
    pub fn nslkdd() -> &'static Taxonomy {
        static TABLE: OnceBox<Taxonomy> = OnceBox::new();
        TABLE.get_or_init(|| Box::new(Taxonomy::parse(TAXONOMY_CSV)))
    }

    fn parse(text: &'static str) -> Taxonomy {
        let mut version = "unversioned";
        let mut entries = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("version:") {
                    version = v.trim();
                }
                continue;
            }
            if line.is_empty() || line == "label,class" {
                continue;
            }
            let (name, class) = line.split_once(',').expect("taxonomy rows are `label,class`");
            let class = class.parse().expect("taxonomy classes are valid");
            entries.push((name, class));
        }
        Taxonomy { version, entries }
    }

    pub fn version(&self) -> &'static str {
        self.version
    }

    pub fn entries(&self) -> &[(&'static str, TrafficClass)] {
        &self.entries
    }

    /// Attack names mapped to `class`.
    pub fn labels_for(&self, class: TrafficClass) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().filter(move |(_, c)| *c == class).map(|(n, _)| *n)
    }

    pub fn map(&self, attack_label: &str) -> Result<TrafficClass> {
        // Some NSL-KDD exports carry a trailing '.' on labels.
        let label = attack_label.trim().trim_end_matches('.');
        self.entries
            .iter()
            .find(|(n, _)| *n == label)
            .map(|(_, c)| *c)
            .ok_or_else(|| Error::UnknownLabel(attack_label.to_string()))
    }
}

/// Maps an NSL-KDD attack name (or `normal`) to its class.
pub fn map_class(attack_label: &str) -> Result<TrafficClass> {
    Taxonomy::nslkdd().map(attack_label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_labels_map() {
        assert_eq!(map_class("normal").unwrap(), TrafficClass::Normal);
        assert_eq!(map_class("neptune").unwrap(), TrafficClass::DoS);
        assert_eq!(map_class("satan").unwrap(), TrafficClass::Probe);
        assert_eq!(map_class("warezclient").unwrap(), TrafficClass::R2L);
        assert_eq!(map_class("httptunnel").unwrap(), TrafficClass::U2R);
        assert_eq!(map_class("worm").unwrap(), TrafficClass::R2L);
        assert_eq!(map_class("smurf.").unwrap(), TrafficClass::DoS);
    }

    #[test]
    fn unknown_label_is_reported() {
        let err = map_class("teleport").unwrap_err();
        assert_eq!(err, Error::UnknownLabel("teleport".into()));
        assert!(alloc::format!("{err}").contains("teleport"));
    }

    #[test]
    fn taxonomy_is_versioned_and_complete() {
        let t = Taxonomy::nslkdd();
        assert_eq!(t.version(), "nslkdd-5class-v1");
        // normal + 39 attack names across train and test files
        assert_eq!(t.entries().len(), 40);
        assert_eq!(t.labels_for(TrafficClass::DoS).count(), 10);
        assert_eq!(t.labels_for(TrafficClass::Probe).count(), 6);
        assert_eq!(t.labels_for(TrafficClass::R2L).count(), 15);
        assert_eq!(t.labels_for(TrafficClass::U2R).count(), 8);
    }

    // Published per-attack record counts of KDDTrain+ and KDDTest+; the
    // taxonomy must aggregate them to the five class totals of the
    // dataset description (77054/53385/14077/3749/252).
    const TRAIN_COUNTS: &[(&str, u64)] = &[
        ("normal", 67343), ("neptune", 41214), ("satan", 3633), ("ipsweep", 3599),
        ("portsweep", 2931), ("smurf", 2646), ("nmap", 1493), ("back", 956),
        ("teardrop", 892), ("warezclient", 890), ("pod", 201), ("guess_passwd", 53),
        ("buffer_overflow", 30), ("warezmaster", 20), ("land", 18), ("imap", 11),
        ("rootkit", 10), ("loadmodule", 9), ("ftp_write", 8), ("multihop", 7),
        ("phf", 4), ("perl", 3), ("spy", 2),
    ];
    const TEST_COUNTS: &[(&str, u64)] = &[
        ("normal", 9711), ("neptune", 4657), ("guess_passwd", 1231), ("mscan", 996),
        ("warezmaster", 944), ("apache2", 737), ("satan", 735), ("processtable", 685),
        ("smurf", 665), ("back", 359), ("snmpguess", 331), ("saint", 319),
        ("mailbomb", 293), ("snmpgetattack", 178), ("portsweep", 157), ("ipsweep", 141),
        ("httptunnel", 133), ("nmap", 73), ("pod", 41), ("buffer_overflow", 20),
        ("multihop", 18), ("named", 17), ("ps", 15), ("sendmail", 14), ("rootkit", 13),
        ("xterm", 13), ("teardrop", 12), ("xlock", 9), ("land", 7), ("xsnoop", 4),
        ("ftp_write", 3), ("worm", 2), ("loadmodule", 2), ("perl", 2), ("sqlattack", 2),
        ("udpstorm", 2), ("phf", 2), ("imap", 1),
    ];

    #[test]
    fn taxonomy_reconciles_published_attack_counts() {
        let mut totals = [0u64; 5];
        for (name, n) in TRAIN_COUNTS.iter().chain(TEST_COUNTS) {
            totals[map_class(name).unwrap().index()] += n;
        }
        assert_eq!(totals, [77054, 53385, 14077, 3749, 252]);
        let train: u64 = TRAIN_COUNTS.iter().map(|(_, n)| n).sum();
        let test: u64 = TEST_COUNTS.iter().map(|(_, n)| n).sum();
        assert_eq!((train, test), (125973, 22544));
    }

    #[test]
    fn binarize_collapses_attacks() {
        assert_eq!(binarize(TrafficClass::Normal), BinaryClass::Normal);
        for c in &TrafficClass::ALL[1..] {
            assert_eq!(binarize(*c), BinaryClass::Attack);
            assert_eq!(binarize_index(c.index()), 1);
        }
        assert_eq!(binarize_index(0), 0);
    }

    #[test]
    fn class_names_round_trip() {
        for c in TrafficClass::ALL {
            assert_eq!(c.name().parse::<TrafficClass>().unwrap(), c);
            assert_eq!(TrafficClass::from_index(c.index()), Some(c));
        }
    }
}
