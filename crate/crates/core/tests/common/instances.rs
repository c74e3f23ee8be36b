//! Random metric instances built twice: once for the library, once for the
//! oracles.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scholar_audit::collector::TransportStatus;
use scholar_audit::corpus::{
    Attribute, AuthorRecord, Corpus, Ethnicity, Gender, DEFAULT_PROMINENCE_THRESHOLDS,
};
use scholar_audit::linkage::{MatchResult, SCORE_COUNT};
use scholar_audit::metrics::{
    build_embeddings, default_registry, ConfigInput, FactualSet, Indicator, MetricEnv,
    ResponseEval,
};
use scholar_audit::parser::{Label, LabeledResponse, Parser};
use scholar_audit::tasks::TaskVariant;

use super::oracle::{self, OAttr, OAuthor, OCorpus, OTask};

const CONS: [char; 7] = ['b', 'k', 't', 'v', 'z', 'n', 'g'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn token(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::new();
    for i in 0..4 {
        let set: &[char] = if i % 2 == 0 { &CONS } else { &VOWELS };
        s.push(*set.choose(rng).unwrap());
    }
    s
}

pub struct Instance {
    pub corpus: Corpus,
    pub oc: OCorpus,
    pub task: TaskVariant,
    pub otask: OTask,
    pub queries: Vec<Vec<Label>>,
    /// Raw names per retained response.
    pub raw: Vec<Vec<String>>,
    /// normalized name → matched corpus indices (empty = not factual)
    pub table: BTreeMap<String, Vec<usize>>,
    pub parser_lists: Vec<LabeledResponse>,
}

const GENDERS: [(Gender, Option<&str>); 4] = [
    (Gender::Female, Some("female")),
    (Gender::Male, Some("male")),
    (Gender::Neutral, Some("neutral")),
    (Gender::Unknown, None),
];
const ETHNICITIES: [(Ethnicity, Option<&str>); 6] = [
    (Ethnicity::Asian, Some("asian")),
    (Ethnicity::Black, Some("black")),
    (Ethnicity::White, Some("white")),
    (Ethnicity::Hispanic, Some("hispanic")),
    (Ethnicity::AmericanIndian, Some("american_indian")),
    (Ethnicity::Unknown, None),
];

pub fn generate(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=50);
    let mut authors = Vec::new();
    let mut oauthors = Vec::new();
    for i in 0..n {
        let (g, gl) = *GENDERS.choose(&mut rng).unwrap();
        let (e, el) = *ETHNICITIES.choose(&mut rng).unwrap();
        let mut years: Vec<i32> = (0..rng.random_range(0..6))
            .map(|_| rng.random_range(1940..2020))
            .collect();
        years.sort();
        let fields: BTreeSet<String> = ["CMMP", "PER"]
            .iter()
            .filter(|_| rng.random_bool(0.4))
            .map(|s| s.to_string())
            .collect();
        let mut opt = |p: f64, hi: u64| rng.random_bool(p).then(|| rng.random_range(0..hi));
        let pubs = opt(0.9, 300);
        let cits = opt(0.85, 20000);
        let h = opt(0.8, 80);
        let name = format!("Auth{i} Person");
        authors.push(AuthorRecord {
            author_id: format!("a{i}"),
            display_name: name,
            alternative_names: vec![],
            first_name: None,
            middle_name: None,
            last_name: None,
            perceived_gender: g,
            perceived_ethnicity: e,
            publication_years: years.clone(),
            fields: fields.clone(),
            n_publications: pubs,
            n_citations: cits,
            h_index: h,
        });
        oauthors.push(OAuthor {
            gender: gl,
            ethnicity: el,
            years,
            fields,
            pubs,
            cits,
            h,
        });
    }
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    if n > 1 {
        for _ in 0..rng.random_range(0..=n * 2) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                adj[a][b] = true;
                adj[b][a] = true;
                edges.push((format!("a{a}"), format!("a{b}")));
            }
        }
    }
    let corpus = Corpus::from_parts(authors, edges, &DEFAULT_PROMINENCE_THRESHOLDS).unwrap();
    let oc = OCorpus {
        authors: oauthors,
        adj,
        thresholds: DEFAULT_PROMINENCE_THRESHOLDS.to_vec(),
    };

    let (task, otask) = [
        ("top_k:5", OTask::TopK),
        ("field:CMMP", OTask::Field("CMMP")),
        ("field:PER", OTask::Field("PER")),
        ("epoch:1950s", OTask::Epoch(1950, 1960)),
        ("epoch:2000s", OTask::Epoch(2000, 2010)),
        ("seniority:early", OTask::Early),
        ("seniority:senior", OTask::Senior),
    ]
    .choose(&mut rng)
    .map(|(k, o)| (k.parse::<TaskVariant>().unwrap(), *o))
    .unwrap();

    let queries: Vec<Vec<Label>> = (0..rng.random_range(0..=6))
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| *Label::ALL.choose(&mut rng).unwrap())
                .collect()
        })
        .collect();

    // a shared name pool makes responses overlap
    let pool: Vec<String> = (0..rng.random_range(1..=14))
        .map(|_| format!("{} {}", token(&mut rng), token(&mut rng)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut table = BTreeMap::new();
    for p in &pool {
        let group: Vec<usize> = if rng.random_bool(0.3) {
            vec![]
        } else {
            let size = if rng.random_bool(0.25) { rng.random_range(2..=3) } else { 1 };
            let mut g: BTreeSet<usize> = BTreeSet::new();
            for _ in 0..size {
                g.insert(rng.random_range(0..n));
            }
            g.into_iter().collect()
        };
        table.insert(p.clone(), group);
    }
    let parser = Parser::default();
    let mut raw = Vec::new();
    let mut parser_lists = Vec::new();
    for _ in 0..rng.random_range(0..=5) {
        let names: Vec<String> = (0..rng.random_range(1..=10))
            .map(|_| {
                let base = pool.choose(&mut rng).unwrap();
                match rng.random_range(0..4) {
                    0 => base.to_uppercase(),
                    1 => base.replace(' ', "   "),
                    _ => base.clone(),
                }
            })
            .collect();
        let json = serde_json::to_string(
            &names
                .iter()
                .map(|n| serde_json::json!({ "name": n }))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let labeled = parser.label_text(0, TransportStatus::Ok, &json);
        assert_eq!(labeled.label(), Label::Valid, "{json}");
        parser_lists.push(labeled);
        raw.push(names);
    }
    Instance {
        corpus,
        oc,
        task,
        otask,
        queries,
        raw,
        table,
        parser_lists,
    }
}

fn match_result(name: &str, group: &[usize]) -> MatchResult {
    MatchResult {
        recommended_name: name.to_string(),
        matched_author_ids: group.iter().map(|i| format!("a{i}")).collect(),
        score_vector: [0.0; SCORE_COUNT],
        best_candidate: group.first().map(|i| format!("a{i}")),
        empty_name: false,
    }
}

/// Library values of every registered metric, by name.
pub fn library_values(inst: &Instance) -> BTreeMap<String, Option<f64>> {
    let responses: Vec<ResponseEval> = inst
        .parser_lists
        .iter()
        .map(|l| {
            let list = l.usable().unwrap().clone();
            let matches: BTreeMap<String, MatchResult> = list
                .unique_names
                .iter()
                .map(|n| (n.clone(), match_result(n, &inst.table[n])))
                .collect();
            let factual = FactualSet::from_matches(&list.unique_names, &matches, &inst.corpus);
            ResponseEval {
                list,
                matches,
                factual,
            }
        })
        .collect();
    let input = ConfigInput {
        task: inst.task.clone(),
        queries: inst.queries.clone(),
        responses,
    };
    let emb = build_embeddings(&inst.corpus, &Indicator::DEFAULT).ok();
    let references = Attribute::ALL
        .into_iter()
        .filter_map(|a| inst.corpus.reference_distribution(a).ok().map(|d| (a, d)))
        .collect();
    let env = MetricEnv {
        corpus: &inst.corpus,
        embeddings: emb.as_ref(),
        references: &references,
    };
    default_registry()
        .iter()
        .map(|m| (m.name(), m.compute(&input, &env).map(|v| v.value)))
        .collect()
}

/// Oracle values under the same names.
pub fn oracle_values(inst: &Instance) -> BTreeMap<String, Option<f64>> {
    let oc = &inst.oc;
    let all: Vec<Label> = inst.queries.iter().flatten().copied().collect();
    let mut out = BTreeMap::new();
    out.insert(
        "refusals".to_string(),
        (!all.is_empty()).then(|| {
            all.iter().filter(|l| **l == Label::Refused).count() as f64 / all.len() as f64
        }),
    );
    out.insert(
        "validity".to_string(),
        (!inst.queries.is_empty()).then(|| {
            inst.queries
                .iter()
                .filter(|q| q.iter().any(|l| matches!(l, Label::Valid | Label::Verbose)))
                .count() as f64
                / inst.queries.len() as f64
        }),
    );
    let uniq: Vec<BTreeSet<String>> = inst
        .raw
        .iter()
        .map(|r| r.iter().map(|n| oracle::norm_name(n)).collect())
        .collect();
    let gs: Vec<Vec<Vec<usize>>> = uniq.iter().map(|u| oracle::groups(u, &inst.table)).collect();
    let per = |f: &dyn Fn(usize) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = (0..inst.raw.len()).filter_map(f).collect();
        oracle::mean(&v)
    };
    out.insert("duplicates".into(), per(&|i| oracle::duplicates(&inst.raw[i])));
    out.insert("consistency".into(), oracle::consistency(&uniq));
    out.insert("factuality".into(), per(&|i| oracle::factuality(&uniq[i], &inst.table)));
    out.insert(
        "task_factuality".into(),
        per(&|i| oracle::task_factuality(oc, &gs[i], inst.otask)),
    );
    out.insert("connectedness".into(), per(&|i| oracle::connectedness(oc, &gs[i])));
    let emb = oracle::embeddings(oc);
    out.insert(
        "similarity".into(),
        per(&|i| oracle::similarity(oc, &gs[i], emb.as_ref())),
    );
    let names = ["gender", "ethnicity", "pub_prominence", "cit_prominence"];
    for (attr, name) in oracle::ATTRS.iter().zip(names) {
        let a: OAttr = *attr;
        out.insert(format!("diversity_{name}"), per(&|i| oracle::diversity(oc, &gs[i], a)));
        out.insert(format!("parity_{name}"), per(&|i| oracle::parity(oc, &gs[i], a)));
    }
    out
}

/// Compares every metric; returns the first disagreement.
pub fn compare(seed: u64) -> Result<(), String> {
    let inst = generate(seed);
    let lib = library_values(&inst);
    let ora = oracle_values(&inst);
    if lib.keys().collect::<Vec<_>>() != ora.keys().collect::<Vec<_>>() {
        return Err(format!("metric sets differ: {:?} vs {:?}", lib.keys(), ora.keys()));
    }
    for (name, l) in &lib {
        let o = ora[name];
        let tol = if name == "similarity" { 1e-6 } else { 1e-9 };
        let ok = match (l, o) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() <= tol,
            _ => false,
        };
        if !ok {
            return Err(format!("seed {seed}: {name}: library {l:?} vs oracle {o:?}"));
        }
    }
    Ok(())
}
