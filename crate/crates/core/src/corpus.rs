//! Message/response pair files: loading, length filtering and splitting.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::SeededRng;
use crate::vocab::{TokenId, Vocabulary};

/// Default per-side token cap.
pub const DEFAULT_LENGTH_CAP: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DialoguePair {
    pub message: Vec<String>,
    pub response: Vec<String>,
}

impl DialoguePair {
    /// Whitespace-tokenizes both sides; `None` if either side is empty.
    pub fn from_text(message: &str, response: &str) -> Option<Self> {
        let message = tokenize(message);
        let response = tokenize(response);
        if message.is_empty() || response.is_empty() {
            return None;
        }
        Some(DialoguePair { message, response })
    }

    pub fn swapped(&self) -> Self {
        DialoguePair {
            message: self.response.clone(),
            response: self.message.clone(),
        }
    }

    pub fn encode(&self, vocab: &Vocabulary) -> EncodedPair {
        EncodedPair {
            message: vocab.encode(&self.message),
            response: vocab.encode(&self.response),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub message: Vec<TokenId>,
    pub response: Vec<TokenId>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub pairs: Vec<DialoguePair>,
    pub duplicates: usize,
    pub skipped_empty: usize,
    /// One [`Error::Parse`] per line without exactly one tab.
    pub malformed: Vec<Error>,
}

impl LoadReport {
    /// Fail on the first malformed line.
    pub fn strict(mut self) -> Result<Self> {
        if self.malformed.is_empty() {
            Ok(self)
        } else {
            Err(self.malformed.swap_remove(0))
        }
    }
}

/// Parse `message<TAB>response` lines, keeping the first occurrence of each
/// exact pair.
pub fn parse_pairs(text: &str, origin: &Path) -> LoadReport {
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            report.skipped_empty += 1;
            continue;
        }
        let tabs = line.matches('\t').count();
        if tabs != 1 {
            report.malformed.push(Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: format!("expected exactly one tab, found {tabs}"),
            });
            continue;
        }
        let (m, r) = line.split_once('\t').expect("one tab");
        let Some(pair) = DialoguePair::from_text(m, r) else {
            report.skipped_empty += 1;
            continue;
        };
        if seen.insert(pair.clone()) {
            report.pairs.push(pair);
        } else {
            report.duplicates += 1;
        }
    }
    report
}

pub fn load_pairs(path: &Path) -> Result<LoadReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_pairs(&text, path))
}

pub fn write_pairs(path: &Path, pairs: &[DialoguePair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(out, "{}\t{}", p.message.join(" "), p.response.join(" "));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Keep pairs whose message and response both have at most `max_tokens` tokens.
pub fn filter_by_length(pairs: Vec<DialoguePair>, max_tokens: usize) -> Vec<DialoguePair> {
    pairs
        .into_iter()
        .filter(|p| p.message.len() <= max_tokens && p.response.len() <= max_tokens)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub test_ratio: f64,
    pub valid_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_ratio: 0.85,
            test_ratio: 0.1,
            valid_ratio: 0.05,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ratios = [self.train_ratio, self.test_ratio, self.valid_ratio];
        if ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive: {ratios:?}")));
        }
        let total: f64 = ratios.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub valid: Vec<T>,
}

/// Seeded shuffle, then contiguous cuts at `⌊n·train⌋` and `⌊n·(train+test)⌋`.
pub fn split<T>(mut items: Vec<T>, spec: &SplitSpec) -> Result<Splits<T>> {
    spec.validate()?;
    let n = items.len();
    let mut rng = SeededRng::new(spec.seed);
    rng.shuffle(&mut items);
    let first = ((n as f64) * spec.train_ratio).floor() as usize;
    let second = (((n as f64) * (spec.train_ratio + spec.test_ratio)).floor() as usize).clamp(first, n);
    let valid = items.split_off(second);
    let test = items.split_off(first);
    Ok(Splits {
        train: items,
        test,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(m: &str, r: &str) -> DialoguePair {
        DialoguePair::from_text(m, r).unwrap()
    }

    #[test]
    fn duplicates_removed() {
        let r = parse_pairs("hi\thello\nhi\thello\n", Path::new("x"));
        assert_eq!(r.pairs, vec![p("hi", "hello")]);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn empty_file() {
        let r = parse_pairs("", Path::new("x"));
        assert!(r.pairs.is_empty() && r.malformed.is_empty());
    }

    #[test]
    fn mixed_fixture() {
        let text = "how are you\tfine thanks\nno tab here\nhi\tyo\nhow are you\tfine thanks\nbye\tsee you\n";
        let r = parse_pairs(text, Path::new("fixture.tsv"));
        assert_eq!(r.pairs.len(), 3);
        assert_eq!(r.malformed.len(), 1);
        assert!(matches!(r.malformed[0], Error::Parse { line: 2, .. }));
        assert!(r.malformed[0].to_string().starts_with("fixture.tsv:2:"));
        assert!(parse_pairs(text, Path::new("f")).strict().is_err());
    }

    #[test]
    fn empty_sides_skipped() {
        let r = parse_pairs("a\t\n\tb\n \n a \t b \r\n", Path::new("x"));
        assert_eq!(r.pairs, vec![p("a", "b")]);
        assert_eq!(r.skipped_empty, 3);
        assert!(parse_pairs("a\tb\tc\n", Path::new("x")).strict().is_err());
    }

    #[test]
    fn length_filter() {
        assert!(filter_by_length(vec![p("a", "b c")], 1).is_empty());
        let all = vec![p("a b", "c"), p("d", "e f g")];
        assert_eq!(filter_by_length(all.clone(), 1_000_000), all);

        let words = |n: usize| vec!["w"; n].join(" ");
        let fixture = vec![
            p(&words(3), &words(6)),
            p(&words(7), &words(2)),
            p(&words(6), &words(6)),
            p(&words(1), &words(8)),
        ];
        let kept = filter_by_length(fixture.clone(), 6);
        assert_eq!(kept, vec![fixture[0].clone(), fixture[2].clone()]);
    }

    #[test]
    fn split_sizes() {
        let s = split((0..20).collect::<Vec<_>>(), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.valid.len()), (17, 2, 1));
        let empty = split(Vec::<u8>::new(), &SplitSpec::default()).unwrap();
        assert!(empty.train.is_empty() && empty.test.is_empty() && empty.valid.is_empty());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let bad = SplitSpec {
            train_ratio: 0.9,
            test_ratio: 0.1,
            valid_ratio: 0.1,
            seed: 1,
        };
        assert!(split(vec![1], &bad).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_and_is_deterministic(n in 0usize..300, seed in any::<u64>()) {
            let spec = SplitSpec { seed, ..SplitSpec::default() };
            let a = split((0..n).collect::<Vec<_>>(), &spec).unwrap();
            let b = split((0..n).collect::<Vec<_>>(), &spec).unwrap();
            prop_assert_eq!(&a, &b);
            let mut all: Vec<usize> = a.train.iter().chain(&a.test).chain(&a.valid).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn loaded_pairs_are_unique(lines in prop::collection::vec(("[ab]{1,2}", "[ab]{1,2}"), 0..40)) {
            let text: String = lines.iter().map(|(m, r)| format!("{m}\t{r}\n")).collect();
            let r = parse_pairs(&text, Path::new("x"));
            let set: HashSet<_> = r.pairs.iter().collect();
            prop_assert_eq!(set.len(), r.pairs.len());
            prop_assert_eq!(r.pairs.len() + r.duplicates, lines.len());
        }
    }
}
