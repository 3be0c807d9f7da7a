//! Independent reference computations used as test oracles.
//!
//! Nothing here calls into the library's scoring code; every quantity is
//! recomputed from its textbook definition, favouring clarity over speed.
#![allow(dead_code)]

use std::collections::HashMap;

/// Character scan: alphanumeric runs, lowercased.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else if !cur.is_empty() {
            out.push(cur.to_lowercase());
            cur.clear();
        }
    }
    if !cur.is_empty() {
        out.push(cur.to_lowercase());
    }
    out
}

/// Size of the multiset intersection, by repeatedly striking matched items.
pub fn multiset_overlap<T: PartialEq + Clone>(a: &[T], b: &[T]) -> usize {
    let mut pool: Vec<Option<T>> = b.iter().cloned().map(Some).collect();
    let mut hits = 0;
    for x in a {
        if let Some(slot) = pool.iter_mut().find(|s| s.as_ref() == Some(x)) {
            *slot = None;
            hits += 1;
        }
    }
    hits
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn prf(overlap: usize, cand: usize, refr: usize) -> (f64, f64, f64) {
    if cand == 0 || refr == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / refr as f64;
    (p, r, f1(p, r))
}

pub fn bigram_prf(c: &[String], r: &[String]) -> (f64, f64, f64) {
    if c.is_empty() || r.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    if c.len() == 1 && r.len() == 1 {
        return prf(usize::from(c[0] == r[0]), 1, 1);
    }
    let bc: Vec<(&String, &String)> = c.windows(2).map(|w| (&w[0], &w[1])).collect();
    let br: Vec<(&String, &String)> = r.windows(2).map(|w| (&w[0], &w[1])).collect();
    prf(multiset_overlap(&bc, &br), bc.len(), br.len())
}

/// Top-down memoized LCS recursion.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn lcs_prf(c: &[String], r: &[String]) -> (f64, f64, f64) {
    prf(lcs(c, r), c.len(), r.len())
}

pub fn unigram_prf(c: &[String], r: &[String]) -> (f64, f64, f64) {
    prf(multiset_overlap(c, r), c.len(), r.len())
}

pub fn phi(c: &str, r: &str) -> f64 {
    let (c, r) = (words(c), words(r));
    (bigram_prf(&c, &r).2 + lcs_prf(&c, &r).2) / 2.0
}

/// Length-weighted per-sub-answer score with a pluggable per-pair metric.
pub fn com(response: &str, subs: &[String], metric: impl Fn(&[String], &[String]) -> f64) -> f64 {
    let resp = words(response);
    let lens: Vec<usize> = subs.iter().map(|s| words(s).len()).collect();
    let total: usize = lens.iter().sum();
    subs.iter()
        .zip(&lens)
        .map(|(s, &l)| l as f64 / total as f64 * metric(&resp, &words(s)))
        .sum()
}

pub fn weights_from(best: &[f64]) -> Vec<f64> {
    let total: f64 = best.iter().sum();
    best.iter()
        .map(|&c| if total > 0.0 { 1.0 - c / total } else { 1.0 })
        .collect()
}

/// Utility of `doc` after the documents in `prefix` were chosen, from scratch.
pub fn utility_after(prefix: &[&str], doc: &str, subs: &[String]) -> f64 {
    let best: Vec<f64> = subs
        .iter()
        .map(|a| prefix.iter().map(|d| phi(d, a)).fold(0.0, f64::max))
        .collect();
    weights_from(&best)
        .iter()
        .zip(subs)
        .map(|(w, a)| w * phi(doc, a))
        .sum()
}

/// Cumulative coverage of an ordered list, from scratch.
pub fn com_of_list(docs: &[&str], subs: &[String]) -> f64 {
    (0..docs.len()).map(|t| utility_after(&docs[..t], docs[t], subs)).sum()
}

/// Full-scan BM25 over raw texts, distinct query terms, k1=1.2, b=0.75.
pub fn bm25_scan(docs: &[(String, String)], query: &str) -> Vec<(String, f64)> {
    let toks: Vec<Vec<String>> = docs.iter().map(|(_, t)| words(t)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut q = words(query);
    q.sort();
    q.dedup();
    let mut out = Vec::new();
    for ((id, _), t) in docs.iter().zip(&toks) {
        let mut score = 0.0;
        let mut matched = false;
        for term in &q {
            let tf = t.iter().filter(|w| *w == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let df = toks.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = 1.2 * (1.0 - 0.75 + 0.75 * t.len() as f64 / avg);
            score += idf * tf * 2.2 / (tf + norm);
        }
        if matched {
            out.push((id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}

/// Reciprocal rank fusion by direct summation.
pub fn rrf(lists: &[Vec<String>], k: f64) -> Vec<(String, f64)> {
    let mut ids: Vec<&String> = lists.iter().flatten().collect();
    ids.sort();
    ids.dedup();
    let mut out: Vec<(String, f64)> = ids
        .into_iter()
        .map(|id| {
            let mut terms: Vec<f64> = lists
                .iter()
                .filter_map(|l| l.iter().position(|d| d == id))
                .map(|p| 1.0 / (k + (p + 1) as f64))
                .collect();
            terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (id.clone(), terms.iter().sum())
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    out
}
