//! Seeded synthetic workspace: corpus, configuration and a collected
//! archive with a realistic mix of response shapes. Used for demos and
//! end-to-end tests without network access.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::Duration;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::collector::{
    ArchiveEntry, ArchiveHeader, ArchiveWriter, AttemptRecord, TransportStatus, MAX_ATTEMPTS,
};
use crate::config::AuditConfig;
use crate::corpus::{AuthorRecord, Ethnicity, Gender};
use crate::parser::Parser;

use super::{corpus_fingerprint, ensure_dir, failed, invalid, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub seed: u64,
    pub authors: usize,
    /// Scheduled days; two queries per day.
    pub days: u32,
}

impl SynthSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            authors: 120,
            days: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub config: PathBuf,
    pub archive: PathBuf,
}

const FIRST: [&str; 24] = [
    "Martha", "Jonas", "Ingrid", "Ravi", "Amara", "Tomas", "Yuki", "Leila", "Pedro", "Hanna",
    "Kwame", "Sofia", "Dmitri", "Mei", "Oscar", "Nadia", "Felix", "Ana", "Kenji", "Clara",
    "Emeka", "Lucia", "Viktor", "Zainab",
];
const LAST_SYLLABLES: [&str; 20] = [
    "ber", "lan", "mor", "vek", "sto", "rin", "dal", "quist", "ham", "tor", "nel", "gar", "sen",
    "wick", "lo", "mar", "fen", "dor", "kai", "bri",
];
const FIELDS: [&str; 2] = ["CMMP", "PER"];

fn surname(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..=3);
    let mut s: String = (0..n)
        .map(|_| *LAST_SYLLABLES.choose(rng).expect("nonempty"))
        .collect();
    s[..1].make_ascii_uppercase();
    s
}

fn gen_authors(rng: &mut ChaCha8Rng, n: usize) -> Vec<AuthorRecord> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let i = out.len();
        // every 25th author shares a previous author's name (homonyms)
        let name = if i > 0 && i % 25 == 0 {
            let prev: &AuthorRecord = &out[rng.random_range(0..i)];
            prev.display_name.clone()
        } else {
            let name = format!("{} {}", FIRST.choose(rng).expect("nonempty"), surname(rng));
            if !seen.insert(name.clone()) {
                continue;
            }
            name
        };
        let (first, last) = name.split_once(' ').expect("two parts");
        let start = rng.random_range(1940..=2016);
        let count = rng.random_range(1..=25);
        let mut years: Vec<i32> = (0..count)
            .map(|_| start + rng.random_range(0..=(2024 - start).min(45)))
            .collect();
        years.push(start);
        years.sort_unstable();
        let fields: BTreeSet<String> = FIELDS
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .map(|f| f.to_string())
            .collect();
        let pubs = years.len() as u64 * rng.random_range(1..=4);
        let gender = *[Gender::Female, Gender::Male, Gender::Male, Gender::Unknown]
            .choose(rng)
            .expect("nonempty");
        let ethnicity = *[
            Ethnicity::Asian,
            Ethnicity::Black,
            Ethnicity::White,
            Ethnicity::White,
            Ethnicity::Hispanic,
            Ethnicity::Unknown,
        ]
        .choose(rng)
        .expect("nonempty");
        out.push(AuthorRecord {
            author_id: format!("A{i:04}"),
            display_name: name.clone(),
            alternative_names: if rng.random_bool(0.2) {
                vec![format!("{}. {last}", &first[..1])]
            } else {
                Vec::new()
            },
            first_name: Some(first.to_string()),
            middle_name: None,
            last_name: Some(last.to_string()),
            perceived_gender: gender,
            perceived_ethnicity: ethnicity,
            publication_years: years,
            fields,
            n_publications: Some(pubs),
            n_citations: rng.random_bool(0.9).then(|| pubs * rng.random_range(0..=60)),
            h_index: rng.random_bool(0.9).then(|| rng.random_range(0..=(pubs.min(60)))),
        });
    }
    out
}

fn gen_edges(rng: &mut ChaCha8Rng, authors: &[AuthorRecord]) -> Vec<(String, String)> {
    let n = authors.len();
    let mut edges = BTreeSet::new();
    for _ in 0..n * 2 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges
        .into_iter()
        .map(|(a, b)| (authors[a].author_id.clone(), authors[b].author_id.clone()))
        .collect()
}

fn typo(name: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    let last_space = chars.iter().rposition(|c| *c == ' ').unwrap_or(0);
    if chars.len() > last_space + 3 {
        let i = rng.random_range(last_space + 1..chars.len() - 1);
        chars.swap(i, i + 1);
    }
    chars.into_iter().collect()
}

/// Names for one list: mostly corpus authors, some with typos, some invented.
fn pick_names(rng: &mut ChaCha8Rng, authors: &[AuthorRecord], k: usize) -> Vec<String> {
    (0..k)
        .map(|_| {
            let roll: f64 = rng.random();
            let real = &authors[rng.random_range(0..authors.len())].display_name;
            if roll < 0.65 {
                real.clone()
            } else if roll < 0.8 {
                typo(real, rng)
            } else if roll < 0.9 {
                format!("{} {}", FIRST.choose(rng).expect("nonempty"), "Xylophant")
            } else {
                // repeat of a real name to create duplicates
                authors[0].display_name.clone()
            }
        })
        .collect()
}

fn json_list(names: &[String]) -> String {
    let items: Vec<_> = names.iter().map(|n| json!({ "name": n })).collect();
    serde_json::to_string(&items).expect("serializable")
}

/// One synthetic response text with its transport status.
fn response(rng: &mut ChaCha8Rng, authors: &[AuthorRecord]) -> (TransportStatus, String) {
    let k = rng.random_range(3..=8);
    let names = pick_names(rng, authors, k);
    let roll = rng.random_range(0..100);
    let text = match roll {
        0..=39 => json_list(&names),
        40..=54 => format!(
            "Here are some physicists you may find relevant:\n{}\nLet me know if you need more.",
            json_list(&names)
        ),
        55..=61 => format!("```json\n{}\n```", json_list(&names)),
        62..=69 => {
            let items: Vec<String> = names.iter().map(|n| format!("{{'name': '{n}'}}")).collect();
            format!("[{}]", items.join(", "))
        }
        70..=75 => {
            let mut with_placeholder = names.clone();
            with_placeholder.push("Scientist 1".into());
            json_list(&with_placeholder)
        }
        76..=83 => "I'm sorry, but I can't provide a list of real people for this request \
                    because it could reveal personal information."
            .to_string(),
        84..=89 => return (TransportStatus::Timeout, String::new()),
        90..=92 => return (TransportStatus::HttpError { code: 503 }, "upstream busy".into()),
        93..=95 => "The most notable names in this area are widely published.".into(),
        _ => {
            let full = json_list(&names);
            full[..full.len() * 2 / 3].to_string()
        }
    };
    (TransportStatus::Ok, text)
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if path.exists() {
        return Err(invalid(format!("{} already exists", path.display())));
    }
    fs::write(path, bytes).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn config_text(days: u32) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"archive = "archive.jsonl"
calibration_archive = "calibration.jsonl"
out_dir = "out"
group_by = ["model", "access", "task", "intervention"]

[corpus]
authors = "authors.jsonl"
edges = "edges.tsv"

[[models]]
model_id = "open-small"
endpoint = "http://127.0.0.1:9/v1/chat/completions"
default_temperature = 0.5
max_output_tokens = 1024
request_timeout_secs = 30
family = "alpha"
access = "open"
size_class = "small"

[[models]]
model_id = "closed-large"
endpoint = "http://127.0.0.1:9/v1/chat/completions"
default_temperature = 0.25
max_output_tokens = 1024
request_timeout_secs = 30
family = "beta"
access = "proprietary"
size_class = "large"
reasoning = true

[tasks]
families = ["top_k", "epoch", "field"]
variants = ["top_k:5", "epoch:1950s", "field:CMMP"]

[schedule]
times_of_day = ["08:00:00", "20:00:00"]
days = {days}
start_date = "2025-03-03"
"#
    );
    s
}

/// Writes `authors.jsonl`, `edges.tsv`, `config.toml` and `archive.jsonl`
/// into `dir`. Refuses to overwrite existing files.
pub fn write_synthetic(dir: &Path, spec: &SynthSpec) -> Result<SynthFiles, PipelineError> {
    if spec.authors < 10 {
        return Err(invalid("synthetic corpus needs at least 10 authors"));
    }
    let dir = ensure_dir(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let authors = gen_authors(&mut rng, spec.authors);
    let edges = gen_edges(&mut rng, &authors);

    let mut author_bytes = Vec::new();
    for a in &authors {
        serde_json::to_writer(&mut author_bytes, a).map_err(failed)?;
        author_bytes.push(b'\n');
    }
    let mut edge_text = String::new();
    for (a, b) in &edges {
        let _ = writeln!(edge_text, "{a}\t{b}");
    }
    let config_path = dir.join("config.toml");
    let archive_path = dir.join("archive.jsonl");
    for p in [&config_path, &archive_path] {
        if p.exists() {
            return Err(invalid(format!("{} already exists", p.display())));
        }
    }
    write_new(&dir.join("authors.jsonl"), &author_bytes)?;
    write_new(&dir.join("edges.tsv"), edge_text.as_bytes())?;
    write_new(&config_path, config_text(spec.days).as_bytes())?;

    let cfg = AuditConfig::load(&config_path).map_err(invalid)?;
    let catalog = cfg.load_catalog().map_err(invalid)?;
    let mut configs = cfg.planned_configs(&catalog).map_err(invalid)?;
    let ticks = cfg.schedule.as_ref().expect("synthetic schedule").ticks();
    let parser = Parser::default();

    let mut header = ArchiveHeader::new(ticks[0] - Duration::hours(1), json!({ "synthetic": spec.seed }));
    header.corpus_hash = Some(corpus_fingerprint(&cfg)?);
    let mut writer = ArchiveWriter::open(&archive_path, header).map_err(failed)?;
    for (q, tick) in ticks.iter().enumerate() {
        // configs interleave within a tick the way parallel collection would
        configs.shuffle(&mut rng);
        for c in &configs {
            for attempt in 1..=MAX_ATTEMPTS {
                let (status, raw_text) = response(&mut rng, &authors);
                let ok = status == TransportStatus::Ok && parser.quick_probe(&raw_text);
                let record = AttemptRecord {
                    config: c.key.clone(),
                    query_index: q as u32,
                    attempt_index: attempt,
                    timestamp: *tick + Duration::seconds(attempt as i64 * 7),
                    raw_text,
                    transport_status: status,
                };
                writer.append(&ArchiveEntry::Attempt(record)).map_err(failed)?;
                if ok {
                    break;
                }
            }
        }
    }
    Ok(SynthFiles {
        config: config_path,
        archive: archive_path,
    })
}
