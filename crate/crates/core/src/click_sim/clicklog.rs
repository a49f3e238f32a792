use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::catalog::{title_facets, Catalog};
use super::retrieval::TfIdfRetriever;
use super::{simulate_session, ClickParameters, SearchRequest, SimulationParams};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::substream;

pub const DAY: u64 = 86_400;

/// Ground truth of the simulator: `α` uniform per SKU, `σ` high when every
/// intent token appears in the SKU title and low otherwise.
#[derive(Debug, Clone)]
pub struct CatalogRelevance {
    alpha: HashMap<String, f64>,
    titles: HashMap<String, HashSet<String>>,
    pub sigma_relevant: f64,
    pub sigma_irrelevant: f64,
}

impl CatalogRelevance {
    pub fn new(catalog: &Catalog, seed: u64, alpha_range: (f64, f64)) -> Self {
        let mut rng = substream(seed, "attractiveness", 0);
        let alpha = catalog
            .skus()
            .iter()
            .map(|s| (s.id.clone(), rng.gen_range(alpha_range.0..=alpha_range.1)))
            .collect();
        let titles = catalog
            .skus()
            .iter()
            .map(|s| (s.id.clone(), s.title.iter().cloned().collect()))
            .collect();
        CatalogRelevance {
            alpha,
            titles,
            sigma_relevant: 0.95,
            sigma_irrelevant: 0.05,
        }
    }

    fn missing(kind: &'static str, sku: &str) -> Error {
        Error::MissingParameter {
            kind,
            sku: sku.to_string(),
        }
    }
}

impl ClickParameters for CatalogRelevance {
    fn attractiveness(&self, sku: &str, _query: &[String]) -> Result<f64> {
        self.alpha
            .get(sku)
            .copied()
            .ok_or_else(|| Self::missing("attractiveness", sku))
    }

    fn satisfaction(&self, sku: &str, intent: &[String]) -> Result<f64> {
        let title = self
            .titles
            .get(sku)
            .ok_or_else(|| Self::missing("satisfaction", sku))?;
        Ok(if intent.iter().all(|t| title.contains(t)) {
            self.sigma_relevant
        } else {
            self.sigma_irrelevant
        })
    }
}

/// `σ` for (query, sku) pairs, the query read as an intent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub entries: BTreeMap<(String, String), f64>,
}

impl GroundTruth {
    pub fn get(&self, query: &str, sku: &str) -> Option<f64> {
        self.entries
            .get(&(query.to_string(), sku.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `query<TAB>sku<TAB>sigma` per line, sorted by (query, sku).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((q, s), sigma) in &self.entries {
            let _ = writeln!(out, "{q}\t{s}\t{sigma}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [q, s, sigma] = f[..] else {
                return Err(Error::parse(i + 1, "expected query<TAB>sku<TAB>sigma"));
            };
            let sigma: f64 = sigma
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad sigma {sigma:?}")))?;
            entries.insert((q.to_string(), s.to_string()), sigma);
        }
        Ok(GroundTruth { entries })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLogConfig {
    pub params: SimulationParams,
    /// Sessions per user, inclusive range.
    pub sessions_per_user: (usize, usize),
    pub horizon_days: u64,
    pub attractiveness: (f64, f64),
    /// Title attributes added to the category to form an intent, inclusive
    /// range.
    pub intent_attributes: (usize, usize),
}

impl Default for ClickLogConfig {
    fn default() -> Self {
        ClickLogConfig {
            params: SimulationParams::default(),
            sessions_per_user: (1, 3),
            horizon_days: 240,
            attractiveness: (0.2, 0.9),
            intent_attributes: (1, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClickLog {
    /// Sorted by (ts, user).
    pub requests: Vec<SearchRequest>,
    pub ground_truth: GroundTruth,
}

/// Intent of a session: a random SKU's category plus some of its title
/// attributes, issued as a chain of growing queries ending at the intent.
fn query_chain<R: Rng>(
    catalog: &Catalog,
    (lo, hi): (usize, usize),
    rng: &mut R,
) -> Vec<Vec<String>> {
    loop {
        let sku = &catalog.skus()[rng.gen_range(0..catalog.len())];
        let Some((category, attrs)) = title_facets(sku) else {
            continue;
        };
        if attrs.is_empty() && hi > 0 {
            continue;
        }
        let n = rng.gen_range(lo..=hi.max(lo)).min(attrs.len());
        let picked: Vec<&String> = attrs.choose_multiple(rng, n).collect();
        let mut chain = vec![vec![category.to_string()]];
        for a in picked {
            let mut next = chain.last().expect("non-empty").clone();
            let at = rng.gen_range(0..=next.len());
            next.insert(at, a.clone());
            chain.push(next);
        }
        return chain;
    }
}

/// Simulates `n_users` users over the horizon. Each user gets an
/// independent random stream, so the result does not depend on scheduling.
pub fn generate_clicklog(
    catalog: &Catalog,
    n_users: usize,
    config: &ClickLogConfig,
    seed: u64,
) -> Result<ClickLog> {
    config.params.validate()?;
    if catalog.is_empty() {
        return Err(Error::Empty("catalog"));
    }
    let (lo, hi) = config.sessions_per_user;
    if lo == 0 || hi < lo {
        return Err(Error::invalid(
            "sessions_per_user must be a non-empty range starting at 1 or more",
        ));
    }
    let horizon = config.horizon_days * DAY;
    if horizon / (hi as u64) < 2 * 3600 {
        return Err(Error::invalid("horizon too short for the session count"));
    }
    let retriever = TfIdfRetriever::new(catalog);
    let relevance = CatalogRelevance::new(catalog, seed, config.attractiveness);
    let users: Vec<usize> = (0..n_users).collect();

    type UserOutput = (Vec<SearchRequest>, Vec<((String, String), f64)>);
    let per_user = parallel::map(&users, |_, &u| -> Result<UserOutput> {
        let mut rng = substream(seed, "session", u as u64);
        let user = format!("u{u:06}");
        let k = rng.gen_range(lo..=hi);
        let slot = horizon / k as u64;
        let mut requests = Vec::new();
        let mut truth = Vec::new();
        for j in 0..k as u64 {
            // sessions sit in disjoint slots with at least an hour to spare
            let start = j * slot + rng.gen_range(0..slot - 3600);
            let chain = query_chain(catalog, config.intent_attributes, &mut rng);
            let intent = chain.last().expect("non-empty chain");
            let session = simulate_session(
                &user,
                start,
                intent,
                &chain,
                catalog,
                &retriever,
                &config.params,
                &relevance,
                &mut rng,
            )?;
            let mut queries: Vec<&Vec<String>> = chain.iter().collect();
            queries.dedup();
            let skus: HashSet<&str> = session
                .requests
                .iter()
                .flat_map(|r| r.impressions.iter().map(|(s, _)| s.as_str()))
                .collect();
            for q in queries {
                for &s in &skus {
                    truth.push(((q.join(" "), s.to_string()), relevance.satisfaction(s, q)?));
                }
            }
            requests.extend(session.requests);
        }
        Ok((requests, truth))
    });

    let mut requests = Vec::new();
    let mut ground_truth = GroundTruth::default();
    for out in per_user {
        let (r, t) = out?;
        requests.extend(r);
        ground_truth.entries.extend(t);
    }
    requests.sort_by(|a, b| (a.ts, &a.user).cmp(&(b.ts, &b.user)));
    Ok(ClickLog {
        requests,
        ground_truth,
    })
}

/// One JSON object per line:
/// `{"ts":…,"user":…,"query":…,"impressions":[[sku,rank],…],"clicks":[rank,…]}`.
pub fn format_clicklog(requests: &[SearchRequest]) -> String {
    let mut out = String::new();
    for r in requests {
        out.push_str(&serde_json::to_string(r).expect("plain data serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_clicklog(text: &str) -> Result<Vec<SearchRequest>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: SearchRequest =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        r.validate()
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_clicklog(path: &Path, requests: &[SearchRequest]) -> Result<()> {
    fs::write(path, format_clicklog(requests)).map_err(|e| Error::file(path, e))
}

pub fn read_clicklog(path: &Path) -> Result<Vec<SearchRequest>> {
    parse_clicklog(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    fs::write(path, truth.to_tsv()).map_err(|e| Error::file(path, e))
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    GroundTruth::from_tsv(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
}
