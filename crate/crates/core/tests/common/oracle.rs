//! Brute-force reference implementations written from the metric
//! definitions, sharing no code with the library.

use std::collections::{BTreeMap, BTreeSet};

/// Minimal author view the oracles need.
#[derive(Debug, Clone)]
pub struct OAuthor {
    pub gender: Option<&'static str>,
    pub ethnicity: Option<&'static str>,
    pub years: Vec<i32>,
    pub fields: BTreeSet<String>,
    pub pubs: Option<u64>,
    pub cits: Option<u64>,
    pub h: Option<u64>,
}

pub struct OCorpus {
    pub authors: Vec<OAuthor>,
    /// Dense adjacency matrix.
    pub adj: Vec<Vec<bool>>,
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OAttr {
    Gender,
    Ethnicity,
    Pub,
    Cit,
}

pub const ATTRS: [OAttr; 4] = [OAttr::Gender, OAttr::Ethnicity, OAttr::Pub, OAttr::Cit];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OTask {
    TopK,
    Field(&'static str),
    Epoch(i32, i32),
    Early,
    Senior,
}

impl OCorpus {
    fn stratum(&self, count: Option<u64>, all: impl Fn(&OAuthor) -> Option<u64>) -> Option<usize> {
        let c = count?;
        let known: Vec<u64> = self.authors.iter().filter_map(all).collect();
        let below = known.iter().filter(|&&x| x <= c).count();
        let rank = below as f64 / known.len() as f64;
        let bands = self.thresholds.len() - 1;
        for b in 0..bands {
            if rank > self.thresholds[b] && rank <= self.thresholds[b + 1] {
                return Some(b);
            }
        }
        Some(bands - 1)
    }

    pub fn category(&self, i: usize, attr: OAttr) -> Option<String> {
        let a = &self.authors[i];
        match attr {
            OAttr::Gender => a.gender.map(String::from),
            OAttr::Ethnicity => a.ethnicity.map(String::from),
            OAttr::Pub => self.stratum(a.pubs, |x| x.pubs).map(|s| format!("s{s}")),
            OAttr::Cit => self.stratum(a.cits, |x| x.cits).map(|s| format!("s{s}")),
        }
    }

    pub fn category_count(&self, attr: OAttr) -> usize {
        match attr {
            OAttr::Gender => 3,
            OAttr::Ethnicity => 5,
            OAttr::Pub | OAttr::Cit => self.thresholds.len() - 1,
        }
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

pub fn norm_name(raw: &str) -> String {
    raw.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn duplicates(raw: &[String]) -> Option<f64> {
    if raw.is_empty() {
        return None;
    }
    let uniq: BTreeSet<String> = raw.iter().map(|r| norm_name(r)).collect();
    Some(1.0 - uniq.len() as f64 / raw.len() as f64)
}

pub fn consistency(seq: &[BTreeSet<String>]) -> Option<f64> {
    if seq.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 1..seq.len() {
        let inter = seq[i - 1].intersection(&seq[i]).count();
        let uni = seq[i - 1].union(&seq[i]).count();
        total += if uni == 0 { 1.0 } else { inter as f64 / uni as f64 };
    }
    Some(total / (seq.len() - 1) as f64)
}

/// Factual groups of a response, in name order.
pub fn groups(uniq: &BTreeSet<String>, table: &BTreeMap<String, Vec<usize>>) -> Vec<Vec<usize>> {
    uniq.iter()
        .filter_map(|n| table.get(n))
        .filter(|g| !g.is_empty())
        .cloned()
        .collect()
}

pub fn factuality(uniq: &BTreeSet<String>, table: &BTreeMap<String, Vec<usize>>) -> Option<f64> {
    if uniq.is_empty() {
        return None;
    }
    Some(groups(uniq, table).len() as f64 / uniq.len() as f64)
}

fn meets(c: &OCorpus, i: usize, task: OTask) -> bool {
    let a = &c.authors[i];
    let age = || -> Option<i32> {
        let lo = *a.years.iter().min()?;
        let hi = *a.years.iter().max()?;
        Some(hi - lo)
    };
    match task {
        OTask::TopK => unreachable!(),
        OTask::Field(f) => a.fields.contains(f),
        OTask::Epoch(lo, hi) => a.years.iter().any(|y| *y >= lo && *y <= hi),
        OTask::Early => age().is_some_and(|x| x <= 10),
        OTask::Senior => age().is_some_and(|x| x >= 20),
    }
}

pub fn task_factuality(c: &OCorpus, gs: &[Vec<usize>], task: OTask) -> Option<f64> {
    if task == OTask::TopK || gs.is_empty() {
        return None;
    }
    let pass = gs
        .iter()
        .filter(|g| g.iter().any(|&i| meets(c, i, task)))
        .count();
    Some(pass as f64 / gs.len() as f64)
}

fn linked(c: &OCorpus, a: usize, b: usize) -> bool {
    a == b || c.adj[a][b]
}

/// Per group: the member linked to the largest number of other groups;
/// the first such member in index order on ties.
pub fn reps(c: &OCorpus, gs: &[Vec<usize>]) -> Vec<usize> {
    let mut out = Vec::new();
    for (gi, g) in gs.iter().enumerate() {
        let mut sorted = g.clone();
        sorted.sort();
        let score = |m: usize| {
            gs.iter()
                .enumerate()
                .filter(|(hi, h)| *hi != gi && h.iter().any(|&x| linked(c, m, x)))
                .count()
        };
        let best = sorted.iter().map(|&m| score(m)).max().unwrap();
        out.push(*sorted.iter().find(|&&m| score(m) == best).unwrap());
    }
    out
}

fn entropy_norm(masses: &[f64], k: usize) -> f64 {
    let total: f64 = masses.iter().sum();
    let mut h = 0.0;
    for m in masses {
        if *m > 0.0 {
            let p = m / total;
            h -= p * p.ln();
        }
    }
    h / (k as f64).ln()
}

pub fn connectedness(c: &OCorpus, gs: &[Vec<usize>]) -> Option<f64> {
    let r = reps(c, gs);
    let m = r.len();
    if m == 0 {
        return None;
    }
    if m == 1 {
        return Some(1.0);
    }
    // depth-first labelling
    let mut comp = vec![usize::MAX; m];
    let mut sizes = Vec::new();
    for s in 0..m {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![s];
        comp[s] = id;
        let mut size = 0;
        while let Some(x) = stack.pop() {
            size += 1;
            for y in 0..m {
                if comp[y] == usize::MAX && linked(c, r[x], r[y]) {
                    comp[y] = id;
                    stack.push(y);
                }
            }
        }
        sizes.push(size as f64);
    }
    Some((1.0 - entropy_norm(&sizes, m)).clamp(0.0, 1.0))
}

pub fn masses(c: &OCorpus, gs: &[Vec<usize>], attr: OAttr) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for g in gs {
        for &i in g {
            if let Some(cat) = c.category(i, attr) {
                *m.entry(cat).or_insert(0.0) += 1.0 / g.len() as f64;
            }
        }
    }
    m
}

pub fn diversity(c: &OCorpus, gs: &[Vec<usize>], attr: OAttr) -> Option<f64> {
    let m = masses(c, gs, attr);
    let v: Vec<f64> = m.values().copied().collect();
    if v.iter().sum::<f64>() <= 0.0 {
        return None;
    }
    let k = c.category_count(attr);
    if k < 2 {
        return Some(0.0);
    }
    Some(entropy_norm(&v, k).clamp(0.0, 1.0))
}

pub fn reference(c: &OCorpus, attr: OAttr) -> Option<BTreeMap<String, f64>> {
    let mut m: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..c.authors.len() {
        if let Some(cat) = c.category(i, attr) {
            *m.entry(cat).or_insert(0.0) += 1.0;
        }
    }
    let total: f64 = m.values().sum();
    if total == 0.0 {
        return None;
    }
    Some(m.into_iter().map(|(k, v)| (k, v / total)).collect())
}

pub fn parity_of(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let keys: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let tv: f64 = keys
        .iter()
        .map(|k| (p.get(*k).unwrap_or(&0.0) - q.get(*k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0;
    (1.0 - tv).clamp(0.0, 1.0)
}

pub fn parity(c: &OCorpus, gs: &[Vec<usize>], attr: OAttr) -> Option<f64> {
    let q = reference(c, attr)?;
    let m = masses(c, gs, attr);
    let total: f64 = m.values().sum();
    if total <= 0.0 {
        return None;
    }
    let p = m.into_iter().map(|(k, v)| (k, v / total)).collect();
    Some(parity_of(&p, &q))
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns (eigenvalues, eigenvectors as columns).
pub fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = cs * vkp - sn * vkq;
                    row[q] = sn * vkp + cs * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Unit-norm PCA embeddings keyed by author index (log1p, median
/// imputation, z-scores, components up to 90% explained variance).
pub fn embeddings(c: &OCorpus) -> Option<BTreeMap<usize, Vec<f64>>> {
    let n = c.authors.len();
    if n < 2 {
        return None;
    }
    type Get = fn(&OAuthor) -> Option<f64>;
    let getters: [Get; 4] = [
        |a| a.pubs.map(|v| v as f64),
        |a| a.cits.map(|v| v as f64),
        |a| a.h.map(|v| v as f64),
        |a| {
            let lo = *a.years.iter().min()?;
            let hi = *a.years.iter().max()?;
            Some((hi - lo).max(0) as f64)
        },
    ];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for g in getters {
        let raw: Vec<Option<f64>> = c.authors.iter().map(g).collect();
        let mut seen: Vec<f64> = raw.iter().flatten().copied().collect();
        if seen.is_empty() {
            continue;
        }
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = if seen.len() % 2 == 1 {
            seen[seen.len() / 2]
        } else {
            (seen[seen.len() / 2 - 1] + seen[seen.len() / 2]) / 2.0
        };
        let x: Vec<f64> = raw.iter().map(|v| (1.0 + v.unwrap_or(med)).ln()).collect();
        let mu = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1) as f64;
        if var <= 1e-24 {
            continue;
        }
        cols.push(x.iter().map(|v| (v - mu) / var.sqrt()).collect());
    }
    if cols.is_empty() {
        return None;
    }
    let d = cols.len();
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            cov[i][j] = (0..n).map(|r| cols[i][r] * cols[j][r]).sum::<f64>() / (n - 1) as f64;
        }
    }
    let (vals, vecs) = jacobi(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let mut k = 0;
    let mut cum = 0.0;
    while k < d {
        cum += vals[order[k]].max(0.0);
        k += 1;
        if cum / total >= 0.9 - 1e-12 {
            break;
        }
    }
    let mut out = BTreeMap::new();
    for r in 0..n {
        let proj: Vec<f64> = (0..k)
            .map(|j| (0..d).map(|i| cols[i][r] * vecs[i][order[j]]).sum())
            .collect();
        let len = proj.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            out.insert(r, proj.iter().map(|x| x / len).collect());
        }
    }
    Some(out)
}

pub fn similarity(
    c: &OCorpus,
    gs: &[Vec<usize>],
    emb: Option<&BTreeMap<usize, Vec<f64>>>,
) -> Option<f64> {
    let emb = emb?;
    let r: Vec<usize> = reps(c, gs).into_iter().filter(|i| emb.contains_key(i)).collect();
    if r.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            total += emb[&r[i]].iter().zip(&emb[&r[j]]).map(|(a, b)| a * b).sum::<f64>();
            pairs += 1;
        }
    }
    Some((total / pairs as f64).clamp(-1.0, 1.0))
}

/// Jaro-Winkler from the textbook definition, indices tracked explicitly.
pub fn jaro_winkler_ref(s: &str, t: &str) -> f64 {
    let a: Vec<char> = s.chars().collect();
    let b: Vec<char> = t.chars().collect();
    let jaro = if a.is_empty() && b.is_empty() {
        1.0
    } else if a.is_empty() || b.is_empty() {
        0.0
    } else {
        let longest = a.len().max(b.len());
        let window = if longest / 2 >= 1 { longest / 2 - 1 } else { 0 };
        let mut used = vec![false; b.len()];
        let mut a_matched: Vec<usize> = Vec::new();
        let mut b_matched: Vec<usize> = Vec::new();
        for i in 0..a.len() {
            let lo = if i >= window { i - window } else { 0 };
            let hi = std::cmp::min(i + window, b.len() - 1);
            if lo > hi {
                continue;
            }
            for j in lo..=hi {
                if !used[j] && a[i] == b[j] {
                    used[j] = true;
                    a_matched.push(i);
                    b_matched.push(j);
                    break;
                }
            }
        }
        let m = a_matched.len();
        if m == 0 {
            0.0
        } else {
            b_matched.sort();
            let mut half = 0;
            for k in 0..m {
                if a[a_matched[k]] != b[b_matched[k]] {
                    half += 1;
                }
            }
            let m = m as f64;
            let t = (half / 2) as f64;
            (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
        }
    };
    let mut l = 0;
    while l < 4 && l < a.len() && l < b.len() && a[l] == b[l] {
        l += 1;
    }
    jaro + l as f64 * 0.1 * (1.0 - jaro)
}
