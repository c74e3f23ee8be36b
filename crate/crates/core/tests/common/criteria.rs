//! One check per acceptance criterion. Each returns a short detail line on
//! success and the first problem found otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scholar_audit::collector::{
    replay, ArchiveEntry, ArchiveHeader, ArchiveWriter, Collector, ConfigKey, HttpTransport,
    ManualClock, ModelConfig, PlannedConfig, SchedulePlan, TransportStatus, MAX_ATTEMPTS,
};
use scholar_audit::config::AuditConfig;
use scholar_audit::corpus::{
    load_corpus, Attribute, AttributeDistribution, DEFAULT_PROMINENCE_THRESHOLDS,
};
use scholar_audit::linkage::{
    jaro_winkler, match_name_with, normalize_name, CandidateSource, NameParts,
    FULL_NAME_THRESHOLD, MIN_PASSING_SCORES, PARTIAL_NAME_THRESHOLD, SCORE_COUNT,
};
use scholar_audit::metrics::{connectedness_from_sizes, diversity_from_masses, parity_from_masses};
use scholar_audit::parser::{Label, LabeledResponse, Parser};
use scholar_audit::pipeline::{run_audit, AuditOptions};
use scholar_audit::stats::{select_temperature, wilson_interval, TemperatureStats};
use scholar_audit::tasks::{InterventionSpec, Seniority, TaskVariant, TEMPERATURE_SWEEP};

use super::instances;
use super::mock_server::{Fault, MockServer};
use super::oracle::jaro_winkler_ref;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{name}: got {got}, want {want} ± {tol}")
    })
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// 1 ---------------------------------------------------------------------

pub fn metric_oracle(instances: u64) -> Outcome {
    let start = Instant::now();
    for seed in 0..instances {
        instances::compare(seed)?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{instances} instances agree ({secs:.2}s)"))
}

// 2 ---------------------------------------------------------------------

pub fn closed_forms() -> Outcome {
    let c = connectedness_from_sizes(&[3, 2, 1]).ok_or("connectedness undefined")?;
    close("connectedness {3,2,1}", c, 0.4355, 1e-4)?;
    let masses: BTreeMap<String, f64> =
        [("a", 0.5), ("b", 0.25), ("c", 0.25)].map(|(k, v)| (k.to_string(), v)).into();
    let d = diversity_from_masses(&masses, 3).ok_or("diversity undefined")?;
    close("diversity {.5,.25,.25}", d, 0.9464, 1e-4)?;
    let resp: BTreeMap<String, f64> = [("x", 0.5), ("y", 0.5)].map(|(k, v)| (k.to_string(), v)).into();
    let reference = AttributeDistribution::from_masses(
        Attribute::Gender,
        [("x", 0.2), ("y", 0.8)].map(|(k, v)| (k.to_string(), v)).into(),
    )
    .ok_or("reference undefined")?;
    let p = parity_from_masses(&resp, &reference).ok_or("parity undefined")?;
    close("parity", p, 0.7, 1e-12)?;
    let w = wilson_interval(0, 62, 0.95).map_err(|e| e.to_string())?;
    let upper = w.upper.ok_or("no upper bound")?;
    close("wilson upper k=0 n=62", upper, 0.0583, 1e-4)?;
    Ok(format!(
        "connectedness {c:.4}, diversity {d:.4}, parity {p}, wilson upper {upper:.4}"
    ))
}

// 3 ---------------------------------------------------------------------

pub fn protocol_constants() -> Outcome {
    ensure(
        TEMPERATURE_SWEEP == [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0],
        || format!("temperature sweep {TEMPERATURE_SWEEP:?}"),
    )?;
    ensure(MAX_ATTEMPTS == 3, || format!("max attempts {MAX_ATTEMPTS}"))?;
    let plan = SchedulePlan {
        times_of_day: vec![
            NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            NaiveTime::from_hms_opt(20, 0, 0).unwrap(),
        ],
        days: 31,
        start_date: NaiveDate::from_ymd_opt(2025, 1, 1).unwrap(),
        utc_offset_minutes: 0,
        skew_tolerance_secs: 900,
    };
    ensure(plan.ticks().len() == 62, || format!("{} ticks", plan.ticks().len()))?;
    ensure(
        DEFAULT_PROMINENCE_THRESHOLDS == [0.0, 0.5, 0.8, 0.95, 1.0],
        || format!("prominence thresholds {DEFAULT_PROMINENCE_THRESHOLDS:?}"),
    )?;
    ensure(
        FULL_NAME_THRESHOLD == 0.85
            && PARTIAL_NAME_THRESHOLD == 0.7
            && MIN_PASSING_SCORES == 5
            && SCORE_COUNT == 9,
        || "linkage thresholds".into(),
    )?;
    ensure(
        Seniority::EARLY_MAX_AGE == 10 && Seniority::SENIOR_MIN_AGE == 20,
        || "seniority cutoffs".into(),
    )?;
    ensure(
        Seniority::Early.admits(10) && !Seniority::Early.admits(11),
        || "early-career boundary".into(),
    )?;
    ensure(
        Seniority::Senior.admits(20) && !Seniority::Senior.admits(19),
        || "senior boundary".into(),
    )?;
    // defaults as seen through a minimal configuration
    let cfg = AuditConfig::parse(
        r#"
        [corpus]
        authors = "a.jsonl"
        edges = "e.tsv"
        [[models]]
        model_id = "m"
        endpoint = "http://127.0.0.1:9/"
        default_temperature = 0.5
        max_output_tokens = 10
        request_timeout_secs = 5
        [tasks]
        families = ["top_k"]
        "#,
        Path::new("/"),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        cfg.corpus.prominence_thresholds == DEFAULT_PROMINENCE_THRESHOLDS,
        || "config default thresholds".into(),
    )?;
    Ok("sweep, 3 attempts, 62 ticks, strata, 0.85/0.7 with 5 of 9, 10/20 years".into())
}

// 4 ---------------------------------------------------------------------

#[derive(serde::Deserialize)]
struct ParserCase {
    id: String,
    status: String,
    raw: String,
    label: String,
    names: Option<Vec<String>>,
    refusal: Option<String>,
    failure: Option<String>,
}

fn status_of(s: &str) -> TransportStatus {
    match s {
        "ok" => TransportStatus::Ok,
        "timeout" => TransportStatus::Timeout,
        "empty" => TransportStatus::Empty,
        other => {
            let code = other.strip_prefix("http_error:").expect("status").parse().unwrap();
            TransportStatus::HttpError { code }
        }
    }
}

pub fn parser_fixtures() -> Outcome {
    let text = fs::read_to_string(fixtures_dir().join("parser_cases.json")).map_err(|e| e.to_string())?;
    let cases: Vec<ParserCase> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(cases.len() >= 30, || format!("only {} fixtures", cases.len()))?;
    let parser = Parser::default();
    let mut seen = BTreeSet::new();
    for c in &cases {
        let got = parser.label_text(0, status_of(&c.status), &c.raw);
        let label = got.label();
        seen.insert(label);
        ensure(label.name() == c.label, || {
            format!("{}: labeled {} not {}", c.id, label.name(), c.label)
        })?;
        if let Some(want) = &c.names {
            let names: Vec<String> = got
                .recommendations()
                .map(|l| l.unique_names.iter().cloned().collect())
                .unwrap_or_default();
            ensure(&names == want, || format!("{}: names {names:?}", c.id))?;
        }
        if let Some(want) = &c.refusal {
            let cat = got.refusal_category().map(|r| r.name());
            ensure(cat == Some(want.as_str()), || format!("{}: refusal {cat:?}", c.id))?;
        }
        if let Some(want) = &c.failure {
            let f = scholar_audit::parser::extract_recommendations(&c.raw).err().map(|f| f.name());
            ensure(f == Some(want.as_str()), || format!("{}: failure {f:?}", c.id))?;
        }
        if c.label == "skipped" {
            let LabeledResponse::Skipped { dropped, .. } = &got else {
                unreachable!()
            };
            ensure(*dropped > 0, || format!("{}: nothing dropped", c.id))?;
        }
        // the retry probe agrees with the usable labels on ok transport
        if c.status == "ok" {
            ensure(parser.quick_probe(&c.raw) == label.is_usable(), || {
                format!("{}: probe disagrees", c.id)
            })?;
        }
    }
    ensure(seen.len() == Label::ALL.len(), || format!("labels covered: {seen:?}"))?;
    Ok(format!("{} fixtures, all 7 labels", cases.len()))
}

// 5 ---------------------------------------------------------------------

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', 'm', 'r', 't', 'h', ' ', 'é'];
    let len = rng.random_range(0..12);
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

pub fn linkage_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for i in 0..10_000 {
        let (a, b) = (random_string(&mut rng), random_string(&mut rng));
        let (x, y) = (jaro_winkler(&a, &b), jaro_winkler_ref(&a, &b));
        ensure(x == y, || format!("pair {i} ({a:?}, {b:?}): {x} vs {y}"))?;
    }
    let mm = jaro_winkler("martha", "marhta");
    close("martha/marhta", mm, 0.9611, 1e-4)?;
    let norm = normalize_name("Dr. José García");
    ensure(norm == "jose garcia", || format!("normalized to {norm:?}"))?;

    // blocking never loses a candidate above the full-name threshold
    let dir = fixtures_dir().join("e2e");
    let corpus = load_corpus(
        &dir.join("authors.jsonl"),
        &dir.join("edges.tsv"),
        &DEFAULT_PROMINENCE_THRESHOLDS,
    )
    .map_err(|e| e.to_string())?;
    let index = corpus.name_index();
    let mut queries: Vec<String> = Vec::new();
    for a in corpus.authors() {
        queries.push(a.display_name.clone());
        let mut chars: Vec<char> = a.display_name.chars().collect();
        let k = rng.random_range(0..chars.len() - 1);
        chars.swap(k, k + 1);
        queries.push(chars.iter().collect());
        queries.push(a.display_name.split_whitespace().last().unwrap().to_string());
        let first_char = a.display_name.chars().next().unwrap();
        queries.push(format!("{first_char}. {}", a.display_name.split_whitespace().last().unwrap()));
    }
    for _ in 0..300 {
        queries.push(random_string(&mut rng));
    }
    let mut checked = 0usize;
    let mut partial_only = 0usize;
    for q in &queries {
        let parts = NameParts::split(&normalize_name(q));
        if parts.full.is_empty() {
            continue;
        }
        let cands = index.candidates(&parts);
        for author in 0..corpus.len() {
            if index.full_score(&parts, author) >= FULL_NAME_THRESHOLD {
                checked += 1;
                ensure(cands.contains(&author), || {
                    format!("blocking dropped author {author} for {q:?}")
                })?;
            }
        }
        let blocked = match_name_with(q, &corpus, CandidateSource::Blocking);
        let full = match_name_with(q, &corpus, CandidateSource::Exhaustive);
        ensure(blocked.matched_author_ids.is_subset(&full.matched_author_ids), || {
            format!("blocking invented a match for {q:?}")
        })?;
        for id in full.matched_author_ids.difference(&blocked.matched_author_ids) {
            let author = corpus.index_of(id).unwrap();
            // only partial-tier matches may be lost
            ensure(index.full_score(&parts, author) < FULL_NAME_THRESHOLD, || {
                format!("blocking lost {id} for {q:?}")
            })?;
            partial_only += 1;
        }
    }
    Ok(format!(
        "10000 pairs exact, martha/marhta {mm:.4}, {} queries × {} authors, {checked} above-threshold pairs retained, {partial_only} partial-tier matches outside blocking",
        queries.len(),
        corpus.len()
    ))
}

// 6 ---------------------------------------------------------------------

fn planned(url: &str) -> PlannedConfig {
    let model: ModelConfig = serde_json::from_value(serde_json::json!({
        "model_id": "mock",
        "endpoint": url,
        "default_temperature": 0.5,
        "max_output_tokens": 64,
        "request_timeout_secs": 0.4,
    }))
    .unwrap();
    PlannedConfig {
        key: ConfigKey {
            model_id: "mock".into(),
            task: "top_k:5".parse::<TaskVariant>().unwrap(),
            intervention: InterventionSpec::baseline(0.5),
        },
        model,
        prompt: "List five physicists.".into(),
    }
}

const GOOD: &str = r#"[{"name": "Ada Lovelace"}]"#;

pub fn collector_faults() -> Outcome {
    let server = MockServer::start();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = tmp.path().join("archive.jsonl");
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2025, 3, 1, 8, 0, 0).unwrap()));
    let writer = ArchiveWriter::open(&path, ArchiveHeader::new(clock.now_utc(), serde_json::json!({})))
        .map_err(|e| e.to_string())?;
    let collector = Collector::new(Arc::new(HttpTransport::new()), clock.clone(), writer);
    let parser = Parser::default();
    let probe = |t: &str| parser.quick_probe(t);
    let cfg = planned(&server.url);

    use TransportStatus as S;
    let scripts: Vec<(&str, Vec<Fault>, Vec<TransportStatus>, Option<u8>)> = vec![
        ("first", vec![Fault::Reply(GOOD.into())], vec![S::Ok], Some(1)),
        (
            "second",
            vec![Fault::Status(503), Fault::Reply(GOOD.into())],
            vec![S::HttpError { code: 503 }, S::Ok],
            Some(2),
        ),
        (
            "third",
            vec![
                Fault::Stall(Duration::from_millis(1500)),
                Fault::Reply("I'm sorry, I can't help with that.".into()),
                Fault::Reply(format!("Here you go:\n{GOOD}")),
            ],
            vec![S::Timeout, S::Ok, S::Ok],
            Some(3),
        ),
        (
            "exhausted",
            vec![
                Fault::Drop,
                Fault::Garbage,
                Fault::Reply("[{'name': 'Ada Lovelace'},]".into()),
            ],
            vec![S::HttpError { code: 0 }, S::Empty, S::Ok],
            None,
        ),
    ];
    let mut total = 0;
    for (q, (name, faults, statuses, retained)) in scripts.into_iter().enumerate() {
        server.push(faults);
        let outcome = collector
            .run_query(&cfg, q as u32, &probe)
            .map_err(|e| e.to_string())?;
        let got: Vec<TransportStatus> = outcome.attempts.iter().map(|a| a.transport_status).collect();
        ensure(got == statuses, || format!("{name}: statuses {got:?}"))?;
        ensure(outcome.retained == retained, || {
            format!("{name}: retained {:?}", outcome.retained)
        })?;
        ensure(server.remaining() == 0, || format!("{name}: script not consumed"))?;
        total += statuses.len();
    }
    ensure(server.request_count() == total, || {
        format!("{} requests for {total} attempts", server.request_count())
    })?;
    drop(collector);

    // archive holds every attempt in order
    let r = replay(&path).map_err(|e| e.to_string())?;
    let indices: Vec<(u32, u8)> = r.attempts().map(|(_, a)| (a.query_index, a.attempt_index)).collect();
    let want = vec![(0, 1), (1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (3, 3)];
    ensure(indices == want, || format!("archived {indices:?}"))?;

    // simulated crash mid-write: drop half of the last line
    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let last_start = bytes[..bytes.len() - 1].iter().rposition(|b| *b == b'\n').unwrap() + 1;
    let cut = last_start + (bytes.len() - last_start) / 2;
    fs::write(&path, &bytes[..cut]).map_err(|e| e.to_string())?;
    let r = replay(&path).map_err(|e| e.to_string())?;
    ensure(r.attempts().count() == want.len() - 1, || {
        format!("recovered {} attempts", r.attempts().count())
    })?;
    let t = r.truncation.as_ref().ok_or("truncation not reported")?;
    ensure(t.offset == last_start as u64, || format!("truncated at {}", t.offset))?;
    // reopening drops the partial tail and appends cleanly
    let mut writer = ArchiveWriter::open(&path, ArchiveHeader::new(Utc::now(), serde_json::json!({})))
        .map_err(|e| e.to_string())?;
    let (_, last) = replay(&path).unwrap().attempts().last().map(|(o, a)| (o, a.clone())).unwrap();
    writer.append(&ArchiveEntry::Attempt(last)).map_err(|e| e.to_string())?;
    drop(writer);
    let r = replay(&path).map_err(|e| e.to_string())?;
    ensure(r.truncation.is_none() && r.attempts().count() == want.len(), || {
        "append after recovery".into()
    })?;
    Ok("retention at 1/2/3 and exhaustion, 9 attempts archived, truncation recovered".into())
}

trait NowUtc {
    fn now_utc(&self) -> chrono::DateTime<Utc>;
}

impl NowUtc for ManualClock {
    fn now_utc(&self) -> chrono::DateTime<Utc> {
        scholar_audit::collector::Clock::now(self)
    }
}

// 7 ---------------------------------------------------------------------

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().to_string(), fs::read(&p).unwrap()))
        .collect()
}

pub fn end_to_end_determinism() -> Outcome {
    let dir = fixtures_dir().join("e2e");
    let cfg = scholar_audit::pipeline::load_config(&dir.join("config.toml")).map_err(|e| e.to_string())?;
    let archive = dir.join("archive.jsonl");
    let r = replay(&archive).map_err(|e| e.to_string())?;
    let mut per_config: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for (_, a) in r.attempts() {
        per_config.entry(a.config.id()).or_default().insert(a.query_index);
    }
    ensure(per_config.len() == 6, || format!("{} configurations", per_config.len()))?;
    ensure(per_config.values().all(|q| q.len() == 4), || "queries per configuration".into())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (i, threads) in [1usize, 1, 4, 8].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let mut opts = AuditOptions::from_config(&cfg);
        opts.threads = Some(threads);
        run_audit(&cfg, &archive, &out, &opts).map_err(|e| e.to_string())?;
        outputs.push((threads, tree(&out)));
    }
    let (_, first) = &outputs[0];
    ensure(first.keys().any(|k| k.ends_with(".csv")), || "no CSV written".into())?;
    for (threads, files) in &outputs[1..] {
        ensure(files.keys().eq(first.keys()), || "file sets differ".into())?;
        for (name, bytes) in files {
            ensure(bytes == &first[name], || format!("{name} differs with {threads} threads"))?;
        }
    }
    Ok(format!(
        "{} files byte-identical over 4 runs (threads 1, 1, 4, 8)",
        first.len()
    ))
}

// 8 ---------------------------------------------------------------------

fn table(rows: &[(f64, f64, Option<f64>)]) -> Vec<TemperatureStats> {
    rows.iter()
        .map(|&(temperature, usable_share, mean_factuality)| TemperatureStats {
            temperature,
            usable_share,
            mean_factuality,
        })
        .collect()
}

pub fn calibration_branches() -> Outcome {
    let delta = 0.05;
    // only the best share is eligible, even though others are more factual
    let only_best = table(&[
        (0.0, 0.90, Some(0.50)),
        (0.25, 0.80, Some(0.90)),
        (0.5, 0.70, Some(0.95)),
        (0.75, 0.60, Some(0.99)),
        (1.0, 0.50, Some(0.99)),
        (1.5, 0.40, Some(0.99)),
        (2.0, 0.30, Some(0.99)),
    ]);
    // several eligible: highest factuality wins over highest share
    let factual_wins = table(&[
        (0.0, 0.90, Some(0.50)),
        (0.25, 0.70, Some(0.99)),
        (0.5, 0.87, Some(0.70)),
        (0.75, 0.60, None),
        (1.0, 0.86, Some(0.80)),
        (1.5, 0.84, Some(0.99)),
        (2.0, 0.20, Some(0.99)),
    ]);
    // eligible temperatures tie on factuality: lowest temperature wins
    let tie = table(&[
        (0.0, 0.50, Some(0.90)),
        (0.25, 0.88, Some(0.60)),
        (0.5, 0.70, Some(0.90)),
        (0.75, 0.90, Some(0.60)),
        (1.0, 0.86, Some(0.60)),
        (1.5, 0.40, Some(0.90)),
        (2.0, 0.30, Some(0.90)),
    ]);
    let mut got = Vec::new();
    for (name, rows, want) in [
        ("eligibility", only_best, 0.0),
        ("factuality", factual_wins, 1.0),
        ("tie-break", tie, 0.25),
    ] {
        let t = select_temperature(&rows, delta).map_err(|e| e.to_string())?;
        ensure(t == want, || format!("{name}: selected {t}, want {want}"))?;
        got.push(format!("{name} → {t}"));
    }
    let missing = &table(&[(0.0, 1.0, Some(1.0))]);
    ensure(select_temperature(missing, delta).is_err(), || "incomplete sweep accepted".into())?;
    Ok(got.join(", "))
}
