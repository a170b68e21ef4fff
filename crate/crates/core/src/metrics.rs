//! Corpus BLEU and distinct-n.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Replacement for a zero modified precision so the geometric mean stays
/// defined.
pub const ZERO_PRECISION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalItem {
    pub message: Vec<String>,
    pub reference: Vec<String>,
    pub candidate: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCorpus {
    items: Vec<EvalItem>,
}

impl EvalCorpus {
    pub fn new(items: Vec<EvalItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidInput("evaluation corpus is empty".into()));
        }
        Ok(EvalCorpus { items })
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn candidates(&self) -> Vec<&[String]> {
        self.items.iter().map(|i| i.candidate.as_slice()).collect()
    }
}

/// Pooled counts behind a BLEU score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuCounts {
    /// Clipped matches per order, index 0 = unigrams.
    pub matches: Vec<usize>,
    /// Candidate n-grams per order.
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn bleu_counts(corpus: &EvalCorpus, max_n: usize) -> Result<BleuCounts> {
    if max_n == 0 {
        return Err(Error::InvalidInput("BLEU order must be at least 1".into()));
    }
    let mut c = BleuCounts {
        matches: vec![0; max_n],
        totals: vec![0; max_n],
        candidate_len: 0,
        reference_len: 0,
    };
    for item in &corpus.items {
        c.candidate_len += item.candidate.len();
        c.reference_len += item.reference.len();
        for n in 1..=max_n {
            let cand = ngram_counts(&item.candidate, n);
            let refs = ngram_counts(&item.reference, n);
            c.totals[n - 1] += cand.values().sum::<usize>();
            c.matches[n - 1] += cand
                .iter()
                .map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    Ok(c)
}

impl BleuCounts {
    /// Orders with no candidate n-grams at all are left out of the
    /// geometric mean, so a corpus of short perfect matches scores 1.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let logs: Vec<f64> = self
            .matches
            .iter()
            .zip(&self.totals)
            .filter(|(_, &t)| t > 0)
            .map(|(&m, &t)| {
                let p = if m == 0 { ZERO_PRECISION_FLOOR } else { m as f64 / t as f64 };
                p.ln()
            })
            .collect();
        let log_mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let ratio = self.reference_len as f64 / self.candidate_len as f64;
        let bp = (1.0 - ratio).min(0.0).exp();
        bp * log_mean.exp()
    }
}

/// Corpus-level BLEU in `[0, 1]` with one reference per candidate.
pub fn bleu(corpus: &EvalCorpus, max_n: usize) -> Result<f64> {
    Ok(bleu_counts(corpus, max_n)?.score())
}

/// Distinct n-grams over total n-grams, pooled over all candidates.
pub fn distinct_n<T: AsRef<str>>(candidates: &[&[T]], n: usize) -> f64 {
    let (unique, total) = distinct_counts(candidates, n);
    if total == 0 {
        0.0
    } else {
        unique as f64 / total as f64
    }
}

fn distinct_counts<T: AsRef<str>>(candidates: &[&[T]], n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut total = 0;
    for cand in candidates {
        if cand.len() < n {
            continue;
        }
        for w in cand.windows(n) {
            total += 1;
            seen.insert(w.iter().map(AsRef::as_ref).collect());
        }
    }
    (seen.len(), total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub bleu: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub bleu_counts: BleuCounts,
    /// (unique, total) unigrams and bigrams.
    pub unigrams: (usize, usize),
    pub bigrams: (usize, usize),
}

pub fn evaluate(corpus: &EvalCorpus) -> Result<MetricsReport> {
    let counts = bleu_counts(corpus, 4)?;
    let cands = corpus.candidates();
    Ok(MetricsReport {
        bleu: counts.score(),
        distinct1: distinct_n(&cands, 1),
        distinct2: distinct_n(&cands, 2),
        bleu_counts: counts,
        unigrams: distinct_counts(&cands, 1),
        bigrams: distinct_counts(&cands, 2),
    })
}

pub const TABLE_HEADER: &str = "method\tBLEU\tdistinct-1\tdistinct-2";

/// One row of the automatic-evaluation table; BLEU is shown ×100.
pub fn format_row(method: &str, r: &MetricsReport) -> String {
    format!("{method}\t{:.2}\t{:.3}\t{:.3}", r.bleu * 100.0, r.distinct1, r.distinct2)
}

pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for (method, r) in rows {
        let _ = writeln!(out, "{}", format_row(method, r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn corpus(pairs: &[(&str, &str)]) -> EvalCorpus {
        EvalCorpus::new(
            pairs
                .iter()
                .map(|(r, c)| EvalItem {
                    message: toks("m"),
                    reference: toks(r),
                    candidate: toks(c),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_match_is_one() {
        let c = corpus(&[("a b c d e", "a b c d e"), ("x y z w", "x y z w")]);
        assert_eq!(bleu(&c, 4).unwrap(), 1.0);
    }

    #[test]
    fn no_overlap_hits_the_floor() {
        let c = corpus(&[("a b c", "x y z")]);
        let b = bleu(&c, 4).unwrap();
        assert!(b > 0.0 && (b - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn hand_counted_fixture() {
        // item 1: ref "the cat sat on the mat", cand "the cat the mat"
        //   1g: the×2 (ref 2), cat, mat → 4/4; 2g: the cat, cat the, the mat → 2/3
        //   3g: the cat the, cat the mat → 0/2; 4g: the cat the mat → 0/1
        // item 2: ref "hello world", cand "hello there world"
        //   1g: 2/3; 2g: 0/2; 3g: 0/1; 4g: 0/0
        // pooled: p1 = 6/7, p2 = 2/5, p3 = 0/3, p4 = 0/1; c = 7, r = 8
        let c = corpus(&[("the cat sat on the mat", "the cat the mat"), ("hello world", "hello there world")]);
        let counts = bleu_counts(&c, 4).unwrap();
        assert_eq!(counts.matches, vec![6, 2, 0, 0]);
        assert_eq!(counts.totals, vec![7, 5, 3, 1]);
        assert_eq!((counts.candidate_len, counts.reference_len), (7, 8));
        let expect = (1.0f64 - 8.0 / 7.0).exp() * ((6.0f64 / 7.0) * 0.4 * 1e-9 * 1e-9).powf(0.25);
        assert!((bleu(&c, 4).unwrap() - expect).abs() < 1e-15);
        let bigram = (1.0f64 - 8.0 / 7.0).exp() * ((6.0f64 / 7.0) * 0.4).sqrt();
        assert!((bleu(&c, 2).unwrap() - bigram).abs() < 1e-15);
    }

    #[test]
    fn short_perfect_matches_score_one() {
        let c = corpus(&[("a b", "a b"), ("c", "c")]);
        assert_eq!(bleu(&c, 4).unwrap(), 1.0);
        // Only unigrams exist and none match.
        let c = corpus(&[("a", "x")]);
        assert!((bleu(&c, 4).unwrap() - 1e-9).abs() < 1e-20);
    }

    #[test]
    fn clipping_limits_repeats() {
        let c = corpus(&[("the cat", "the the the")]);
        assert_eq!(bleu_counts(&c, 1).unwrap().matches, vec![1]);
    }

    #[test]
    fn empty_inputs() {
        assert!(EvalCorpus::new(vec![]).is_err());
        let c = corpus(&[("a b", "")]);
        assert_eq!(bleu(&c, 4).unwrap(), 0.0);
        assert!(bleu(&c, 0).is_err());
    }

    #[test]
    fn distinct_examples() {
        let a = toks("a b a");
        assert!((distinct_n(&[a.as_slice()], 1) - 2.0 / 3.0).abs() < 1e-15);
        let x = toks("x");
        let many: Vec<&[String]> = vec![x.as_slice(); 7];
        assert_eq!(distinct_n(&many, 1), 1.0 / 7.0);
        let (ab, ba) = (toks("a b"), toks("b a"));
        assert_eq!(distinct_n(&[ab.as_slice(), ba.as_slice()], 2), 1.0);
        let none: Vec<&[String]> = vec![];
        assert_eq!(distinct_n(&none, 1), 0.0);
    }

    #[test]
    fn evaluate_and_render() {
        let c = corpus(&[("a b c d", "a b c d"), ("a b e f", "a b e f")]);
        let r = evaluate(&c).unwrap();
        assert_eq!(r.bleu, 1.0);
        // references' unigrams: a b c d a b e f → 6/8; bigrams: ab bc cd ab be ef → 5/6
        assert_eq!(r.distinct1, 0.75);
        assert!((r.distinct2 - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(format_row("Seq2Seq", &r), "Seq2Seq\t100.00\t0.750\t0.833");
        let table = format_table(&[("X".into(), r)]);
        assert!(table.starts_with("method\tBLEU\tdistinct-1\tdistinct-2\nX\t"));
    }
}
