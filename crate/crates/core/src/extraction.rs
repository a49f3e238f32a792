//! Training triples mined from query refinements.
//!
//! Within a session, an earlier request `q_i` and a later `q_i′` yield
//! triples when
//!
//! 1. the PLV of `q_i` got no clicks,
//! 2. the PLV of `q_i′` got at least one click,
//! 3. the tokens of `q_i` are a proper sub-multiset of those of `q_i′`,
//! 4. the negative sits at rank `r ≤ ρ` of the PLV of `q_i`,
//! 5. the clicked SKU does not appear anywhere in the PLV of `q_i`.
//!
//! Each click then pairs with the top `min(ρ, |PLV_i|)` SKUs of `q_i`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use crate::click_sim::SearchRequest;
use crate::error::{Error, Result};
use crate::parallel;

pub const DEFAULT_RHO: usize = 3;
pub const DEFAULT_TIMEOUT_SECS: u64 = 30 * 60;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedSession {
    pub id: usize,
    pub user: String,
    pub requests: Vec<SearchRequest>,
}

/// Groups requests per user, splitting where consecutive requests are more
/// than `timeout_secs` apart. Sessions are numbered by (user, start time).
pub fn sessionize(log: &[SearchRequest], timeout_secs: u64) -> Vec<LoggedSession> {
    let mut order: Vec<&SearchRequest> = log.iter().collect();
    order.sort_by(|a, b| (&a.user, a.ts).cmp(&(&b.user, b.ts)));
    let mut sessions: Vec<LoggedSession> = Vec::new();
    for r in order {
        match sessions.last_mut() {
            Some(s)
                if s.user == r.user
                    && r.ts - s.requests.last().expect("non-empty").ts <= timeout_secs =>
            {
                s.requests.push(r.clone());
            }
            _ => sessions.push(LoggedSession {
                id: sessions.len(),
                user: r.user.clone(),
                requests: vec![r.clone()],
            }),
        }
    }
    sessions
}

/// Whether `earlier`'s tokens form a proper sub-multiset of `later`'s.
pub fn is_refinement<S: AsRef<str>>(earlier: &[S], later: &[S]) -> bool {
    if earlier.len() >= later.len() {
        return false;
    }
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for t in later {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    for t in earlier {
        let c = counts.entry(t.as_ref()).or_default();
        *c -= 1;
        if *c < 0 {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrainingTriple {
    pub query: String,
    pub rel: String,
    pub irrel: String,
    /// Timestamp of the refined request.
    pub ts: u64,
}

/// A triple with where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinedTriple {
    pub triple: TrainingTriple,
    pub session: usize,
    /// Request positions `i < i′` inside the session.
    pub earlier: usize,
    pub later: usize,
    pub click_rank: usize,
    pub negative_rank: usize,
}

pub fn extract_triples(session: &LoggedSession, rho: usize) -> Vec<MinedTriple> {
    let reqs = &session.requests;
    let tokens: Vec<Vec<String>> = reqs.iter().map(SearchRequest::query_tokens).collect();
    let mut out = Vec::new();
    for (i, early) in reqs.iter().enumerate() {
        if !early.clicks.is_empty() || early.impressions.is_empty() {
            continue;
        }
        let shown: HashSet<&str> = early.impressions.iter().map(|(s, _)| s.as_str()).collect();
        for (j, late) in reqs.iter().enumerate().skip(i + 1) {
            if late.clicks.is_empty() || !is_refinement(&tokens[i], &tokens[j]) {
                continue;
            }
            for &c in &late.clicks {
                let rel = &late.impressions[c - 1].0;
                if shown.contains(rel.as_str()) {
                    continue;
                }
                for (irrel, r) in early.impressions.iter().take(rho) {
                    out.push(MinedTriple {
                        triple: TrainingTriple {
                            query: late.query.clone(),
                            rel: rel.clone(),
                            irrel: irrel.clone(),
                            ts: late.ts,
                        },
                        session: session.id,
                        earlier: i,
                        later: j,
                        click_rank: c,
                        negative_rank: *r,
                    });
                }
            }
        }
    }
    out
}

/// [`extract_triples`] over every session, concatenated in session order.
pub fn extract_all(sessions: &[LoggedSession], rho: usize) -> Vec<MinedTriple> {
    parallel::map(sessions, |_, s| extract_triples(s, rho))
        .into_iter()
        .flatten()
        .collect()
}

/// Time windows `[b0, b1)`, `[b1, b2)`, `[b2, b3)` for train, validation
/// and test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub boundaries: [u64; 4],
}

impl SplitSpec {
    pub fn new(boundaries: [u64; 4]) -> Result<Self> {
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "split boundaries must be strictly increasing, got {boundaries:?}"
            )));
        }
        Ok(SplitSpec { boundaries })
    }

    /// Six months train, one month each for validation and test.
    pub fn days(train: u64, validation: u64, test: u64) -> Result<Self> {
        let d = 86_400;
        SplitSpec::new([
            0,
            train * d,
            (train + validation) * d,
            (train + validation + test) * d,
        ])
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::days(180, 30, 30).expect("increasing")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<TrainingTriple>,
    pub validation: Vec<TrainingTriple>,
    pub test: Vec<TrainingTriple>,
    pub dropped_validation: usize,
    pub dropped_test: usize,
    pub outside: usize,
}

impl Split {
    /// Sizes normalized so the test set is 1.
    pub fn ratio(&self) -> (f64, f64, f64) {
        let t = self.test.len().max(1) as f64;
        (
            self.train.len() as f64 / t,
            self.validation.len() as f64 / t,
            self.test.len() as f64 / t,
        )
    }

    pub fn ratio_report(&self) -> String {
        let (a, b, c) = self.ratio();
        format!(
            "train {} / validation {} / test {} (ratio {a:.1}:{b:.1}:{c:.0}; dropped {} validation, {} test, {} outside windows)",
            self.train.len(),
            self.validation.len(),
            self.test.len(),
            self.dropped_validation,
            self.dropped_test,
            self.outside
        )
    }
}

/// Assigns triples to windows by timestamp, then drops validation triples
/// whose query occurs in train and test triples whose query occurs in
/// train or validation (before filtering).
pub fn temporal_split(triples: &[TrainingTriple], spec: &SplitSpec) -> Result<Split> {
    let spec = SplitSpec::new(spec.boundaries)?;
    let b = spec.boundaries;
    let mut split = Split::default();
    let mut windows: [Vec<&TrainingTriple>; 3] = Default::default();
    for t in triples {
        match (0..3).find(|&w| b[w] <= t.ts && t.ts < b[w + 1]) {
            Some(w) => windows[w].push(t),
            None => split.outside += 1,
        }
    }
    let train_q: HashSet<&str> = windows[0].iter().map(|t| t.query.as_str()).collect();
    let val_q: HashSet<&str> = windows[1].iter().map(|t| t.query.as_str()).collect();
    split.train = windows[0].iter().map(|&t| t.clone()).collect();
    for &t in &windows[1] {
        if train_q.contains(t.query.as_str()) {
            split.dropped_validation += 1;
        } else {
            split.validation.push(t.clone());
        }
    }
    for &t in &windows[2] {
        if train_q.contains(t.query.as_str()) || val_q.contains(t.query.as_str()) {
            split.dropped_test += 1;
        } else {
            split.test.push(t.clone());
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub examples: usize,
    pub unique_queries: usize,
    pub unique_rel: usize,
    pub unique_irrel: usize,
    /// SKUs seen both as relevant and as irrelevant.
    pub both_sides: usize,
}

pub fn dataset_stats(triples: &[TrainingTriple]) -> DatasetStats {
    let q: HashSet<&str> = triples.iter().map(|t| t.query.as_str()).collect();
    let rel: HashSet<&str> = triples.iter().map(|t| t.rel.as_str()).collect();
    let irrel: HashSet<&str> = triples.iter().map(|t| t.irrel.as_str()).collect();
    DatasetStats {
        examples: triples.len(),
        unique_queries: q.len(),
        unique_rel: rel.len(),
        unique_irrel: irrel.len(),
        both_sides: rel.intersection(&irrel).count(),
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "examples\t{}", self.examples)?;
        writeln!(f, "unique_queries\t{}", self.unique_queries)?;
        writeln!(f, "unique_rel\t{}", self.unique_rel)?;
        writeln!(f, "unique_irrel\t{}", self.unique_irrel)?;
        write!(f, "both_sides\t{}", self.both_sides)
    }
}

/// `query<TAB>rel<TAB>irrel<TAB>ts` per line.
pub fn format_triples(triples: &[TrainingTriple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", t.query, t.rel, t.irrel, t.ts));
    }
    out
}

pub fn parse_triples(text: &str) -> Result<Vec<TrainingTriple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [query, rel, irrel, ts] = f[..] else {
            return Err(Error::parse(
                i + 1,
                "expected query<TAB>rel<TAB>irrel<TAB>ts",
            ));
        };
        let ts = ts
            .parse()
            .map_err(|_| Error::parse(i + 1, format!("bad timestamp {ts:?}")))?;
        if rel == irrel {
            return Err(Error::parse(i + 1, "relevant and irrelevant SKU coincide"));
        }
        out.push(TrainingTriple {
            query: query.to_string(),
            rel: rel.to_string(),
            irrel: irrel.to_string(),
            ts,
        });
    }
    Ok(out)
}

pub fn write_triples(path: &Path, triples: &[TrainingTriple]) -> Result<()> {
    fs::write(path, format_triples(triples)).map_err(|e| Error::file(path, e))
}

pub fn read_triples(path: &Path) -> Result<Vec<TrainingTriple>> {
    parse_triples(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
}

/// Triples grouped by query, for per-query inspection.
pub fn by_query(triples: &[TrainingTriple]) -> BTreeMap<&str, Vec<&TrainingTriple>> {
    let mut out: BTreeMap<&str, Vec<&TrainingTriple>> = BTreeMap::new();
    for t in triples {
        out.entry(t.query.as_str()).or_default().push(t);
    }
    out
}
