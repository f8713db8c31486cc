//! Seeded generator of NSL-KDD-format records for tests and demos.
//!
//! Each class has a prototype (preferred protocol, services and flags plus
//! a mean for every numeric field); records scatter around it. R2L and U2R
//! prototypes sit close to Normal so the minority classes overlap with it.

use std::io::Write;
use std::path::Path;

use fedssl_core::features::{RawRecord, COLUMN_NAMES, FEATURE_FIELDS};
use fedssl_core::labels::{Taxonomy, TrafficClass};
use fedssl_core::rng::{derive, Purpose, StreamRng};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nslkdd::format_record;

pub const PROTOCOLS: [&str; 3] = ["icmp", "tcp", "udp"];

pub const SERVICES: [&str; 70] = [
    "IRC", "X11", "Z39_50", "aol", "auth", "bgp", "courier", "csnet_ns", "ctf", "daytime", "discard", "domain",
    "domain_u", "echo", "eco_i", "ecr_i", "efs", "exec", "finger", "ftp", "ftp_data", "gopher", "harvest",
    "hostnames", "http", "http_2784", "http_443", "http_8001", "imap4", "iso_tsap", "klogin", "kshell", "ldap",
    "link", "login", "mtp", "name", "netbios_dgm", "netbios_ns", "netbios_ssn", "netstat", "nnsp", "nntp",
    "ntp_u", "other", "pm_dump", "pop_2", "pop_3", "printer", "private", "red_i", "remote_job", "rje", "shell",
    "smtp", "sql_net", "ssh", "sunrpc", "supdup", "systat", "telnet", "tftp_u", "tim_i", "time", "urh_i", "urp_i",
    "uucp", "uucp_path", "vmnet", "whois",
];

pub const FLAGS: [&str; 11] = ["OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH"];

/// Per-class record counts of KDDTrain+.
pub const NSLKDD_TRAIN_COUNTS: [usize; 5] = [67_343, 45_927, 11_656, 995, 52];
/// Per-class record counts of KDDTest+.
pub const NSLKDD_TEST_COUNTS: [usize; 5] = [9_711, 7_458, 2_421, 2_754, 200];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    /// Records per class, in `TrafficClass::ALL` order.
    pub class_counts: [usize; 5],
    /// Fixes the class prototypes; train and test files share it.
    pub seed: u64,
    /// Selects the sample stream (use different values for train and test).
    pub stream: u64,
    /// Std of the numeric scatter around the prototype, in scaled units.
    pub noise: f64,
    /// Give the first records every protocol, service and flag so the
    /// one-hot inventory is complete.
    pub cover_categories: bool,
}

impl SyntheticSpec {
    pub fn new(class_counts: [usize; 5], seed: u64, stream: u64) -> Self {
        Self { class_counts, seed, stream, noise: 0.15, cover_categories: true }
    }

    /// Train-file shape with the real per-class counts.
    pub fn nslkdd_train(seed: u64) -> Self {
        Self::new(NSLKDD_TRAIN_COUNTS, seed, 1)
    }

    pub fn nslkdd_test(seed: u64) -> Self {
        Self { cover_categories: false, ..Self::new(NSLKDD_TEST_COUNTS, seed, 2) }
    }

    pub fn total(&self) -> usize {
        self.class_counts.iter().sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Binary,
    Count(f64),
    Rate,
}

fn kind(column: usize) -> Kind {
    match COLUMN_NAMES[column] {
        "land" | "logged_in" | "root_shell" | "is_host_login" | "is_guest_login" => Kind::Binary,
        "duration" => Kind::Count(58_329.0),
        "src_bytes" | "dst_bytes" => Kind::Count(1_000_000.0),
        "count" | "srv_count" => Kind::Count(511.0),
        "dst_host_count" | "dst_host_srv_count" => Kind::Count(255.0),
        "num_outbound_cmds" => Kind::Count(0.0),
        name if name.ends_with("_rate") => Kind::Rate,
        _ => Kind::Count(10.0),
    }
}

struct Prototype {
    protocol: usize,
    services: Vec<usize>,
    flags: Vec<usize>,
    means: Vec<f64>,
}

fn prototypes(seed: u64) -> Vec<Prototype> {
    let mut rng = derive(seed, Purpose::Synthetic, 0, 0);
    let numeric = FEATURE_FIELDS - 3;
    let mut out: Vec<Prototype> = Vec::new();
    for class in TrafficClass::ALL {
        let near_normal = matches!(class, TrafficClass::R2L | TrafficClass::U2R);
        let proto = if near_normal {
            let n = &out[0];
            Prototype {
                protocol: n.protocol,
                services: vec![n.services[0], rng.random_range(0..SERVICES.len())],
                flags: n.flags.clone(),
                means: n.means.iter().map(|m| (m + rng.random_range(-0.25..0.25)).clamp(0.0, 1.0)).collect(),
            }
        } else {
            Prototype {
                protocol: rng.random_range(0..PROTOCOLS.len()),
                services: (0..5).map(|_| rng.random_range(0..SERVICES.len())).collect(),
                flags: (0..2).map(|_| rng.random_range(0..FLAGS.len())).collect(),
                means: (0..numeric).map(|_| rng.random_range(0.0..1.0)).collect(),
            }
        };
        out.push(proto);
    }
    out
}

fn pick(rng: &mut StreamRng, preferred: &[usize], n: usize, p: f64) -> usize {
    if rng.random_bool(p) {
        *preferred.choose(rng).expect("non-empty preference")
    } else {
        rng.random_range(0..n)
    }
}

/// Records grouped by class, in `TrafficClass::ALL` order.
pub fn generate(spec: &SyntheticSpec) -> Vec<RawRecord> {
    let protos = prototypes(spec.seed);
    let taxonomy = Taxonomy::nslkdd();
    let mut rng = derive(spec.seed, Purpose::Synthetic, spec.stream, 1);
    let scatter = Normal::new(0.0, spec.noise.max(0.0)).expect("finite noise");
    let numeric_cols: Vec<usize> = (0..FEATURE_FIELDS).filter(|c| !(1..=3).contains(c)).collect();
    let mut out = Vec::with_capacity(spec.total());
    for (class, &count) in TrafficClass::ALL.iter().zip(&spec.class_counts) {
        let proto = &protos[class.index()];
        let labels: Vec<&str> = taxonomy.labels_for(*class).collect();
        for _ in 0..count {
            let protocol = pick(&mut rng, &[proto.protocol], PROTOCOLS.len(), 0.85);
            let service = pick(&mut rng, &proto.services, SERVICES.len(), 0.75);
            let flag = pick(&mut rng, &proto.flags, FLAGS.len(), 0.8);
            let numeric = numeric_cols
                .iter()
                .zip(&proto.means)
                .map(|(&col, &m)| {
                    let u = (m + scatter.sample(&mut rng)).clamp(0.0, 1.0);
                    match kind(col) {
                        Kind::Binary => f64::from(u8::from(u > 0.5)),
                        Kind::Count(max) => (u * u * max).round(),
                        Kind::Rate => (u * 100.0).round() / 100.0,
                    }
                })
                .collect();
            out.push(RawRecord {
                numeric,
                categorical: [PROTOCOLS[protocol].into(), SERVICES[service].into(), FLAGS[flag].into()],
                label: labels.choose(&mut rng).expect("every class has labels").to_string(),
                class: *class,
                difficulty: Some(rng.random_range(1..=21)),
            });
        }
    }
    if spec.cover_categories {
        for (i, r) in out.iter_mut().take(SERVICES.len()).enumerate() {
            r.categorical = [
                PROTOCOLS[i % PROTOCOLS.len()].into(),
                SERVICES[i].into(),
                FLAGS[i % FLAGS.len()].into(),
            ];
        }
    }
    out
}

pub fn write_records(path: &Path, records: &[RawRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", format_record(r)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `KDDTrain+.txt` and `KDDTest+.txt` under `dir`.
pub fn write_dataset(dir: &Path, train: &SyntheticSpec, test: &SyntheticSpec) -> Result<()> {
    write_records(&dir.join("KDDTrain+.txt"), &generate(train))?;
    write_records(&dir.join("KDDTest+.txt"), &generate(test))
}
