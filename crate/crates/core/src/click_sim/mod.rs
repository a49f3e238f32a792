//! Task-centric click simulation on top of a position-based click model.
//!
//! For request `i` of a session the user's intent is matched with
//! probability `α₁` (`M_i`). Each impression at rank `r` is examined with
//! probability `γ_r`, attracts with `α_u` and satisfies the session intent
//! with `σ_{u,intent}`, all drawn independently; a click needs
//! `M ∧ E ∧ A ∧ S`. After a matched
//! request the user continues with probability `α₂`; after an unmatched one
//! always.

mod catalog;
mod clicklog;
mod retrieval;

pub use catalog::{generate_catalog, Catalog, CatalogSpec, Sku, ATTRIBUTES, CATEGORIES};
pub use clicklog::{
    format_clicklog, generate_clicklog, parse_clicklog, read_clicklog, read_ground_truth,
    write_clicklog, write_ground_truth, CatalogRelevance, ClickLog, ClickLogConfig, GroundTruth,
};
pub use retrieval::{Retriever, TfIdfRetriever};

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    /// `P(M_i = 1)`.
    pub alpha1: f64,
    /// `P(N_i = 1 | M_i = 1)`.
    pub alpha2: f64,
    /// Examination probability by rank, `gamma[0]` for rank 1.
    pub gamma: Vec<f64>,
    pub max_queries: usize,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            alpha1: 0.5,
            alpha2: 0.3,
            gamma: default_gamma(10),
            max_queries: 4,
        }
    }
}

/// `γ_r = 1 / (1 + 0.3 (r − 1))` for ranks `1..=n`.
pub fn default_gamma(n: usize) -> Vec<f64> {
    (0..n).map(|r| 1.0 / (1.0 + 0.3 * r as f64)).collect()
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {p} is not a probability")))
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha1", self.alpha1)?;
        check_probability("alpha2", self.alpha2)?;
        for &g in &self.gamma {
            check_probability("gamma", g)?;
        }
        if self.gamma.is_empty() {
            return Err(Error::Empty("gamma"));
        }
        if self.gamma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("gamma must be non-increasing in rank"));
        }
        if self.max_queries == 0 {
            return Err(Error::invalid("max_queries must be at least 1"));
        }
        Ok(())
    }
}

/// Attractiveness of a SKU shown for a query, and how well it satisfies an
/// intent.
pub trait ClickParameters: Sync {
    fn attractiveness(&self, sku: &str, query: &[String]) -> Result<f64>;
    fn satisfaction(&self, sku: &str, intent: &[String]) -> Result<f64>;
}

/// Explicit parameter tables; missing entries are errors.
#[derive(Debug, Clone, Default)]
pub struct TableParameters {
    pub attractiveness: HashMap<String, f64>,
    /// Keyed by (intent tokens joined by spaces, sku).
    pub satisfaction: HashMap<(String, String), f64>,
}

impl ClickParameters for TableParameters {
    fn attractiveness(&self, sku: &str, _query: &[String]) -> Result<f64> {
        self.attractiveness
            .get(sku)
            .copied()
            .ok_or_else(|| Error::MissingParameter {
                kind: "attractiveness",
                sku: sku.to_string(),
            })
    }

    fn satisfaction(&self, sku: &str, intent: &[String]) -> Result<f64> {
        self.satisfaction
            .get(&(intent.join(" "), sku.to_string()))
            .copied()
            .ok_or_else(|| Error::MissingParameter {
                kind: "satisfaction",
                sku: sku.to_string(),
            })
    }
}

/// One logged search request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub ts: u64,
    pub user: String,
    pub query: String,
    /// `(sku, rank)` with ranks `1..=n` in order.
    pub impressions: Vec<(String, usize)>,
    /// Clicked ranks, ascending.
    pub clicks: Vec<usize>,
}

impl SearchRequest {
    pub fn query_tokens(&self) -> Vec<String> {
        self.query.split_whitespace().map(str::to_string).collect()
    }

    pub fn clicked_skus(&self) -> impl Iterator<Item = &str> {
        self.clicks
            .iter()
            .map(|&r| self.impressions[r - 1].0.as_str())
    }

    /// Ranks contiguous from 1 and every click on an impressed rank.
    pub fn validate(&self) -> Result<()> {
        for (i, (_, r)) in self.impressions.iter().enumerate() {
            if *r != i + 1 {
                return Err(Error::invalid(format!("impression {i} has rank {r}")));
            }
        }
        if self
            .clicks
            .iter()
            .any(|&r| r == 0 || r > self.impressions.len())
        {
            return Err(Error::invalid("click on a rank that was not impressed"));
        }
        if self.clicks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("clicks must be strictly ascending"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImpressionTrace {
    pub examined: bool,
    pub attracted: bool,
    pub satisfied: bool,
    pub clicked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTrace {
    pub matched: bool,
    /// `N_i`; filled in by the session loop.
    pub continued: bool,
    pub impressions: Vec<ImpressionTrace>,
}

/// Observed requests plus the latent variables that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub requests: Vec<SearchRequest>,
    pub traces: Vec<RequestTrace>,
}

/// Clicks for one PLV of `query`, issued towards `intent`, given the
/// intent-match draw `matched`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_request<R: Rng>(
    ts: u64,
    user: &str,
    query: &[String],
    intent: &[String],
    ranked: &[String],
    matched: bool,
    params: &SimulationParams,
    click_params: &dyn ClickParameters,
    rng: &mut R,
) -> Result<(SearchRequest, RequestTrace)> {
    if ranked.len() > params.gamma.len() {
        return Err(Error::invalid(format!(
            "{} impressions but gamma covers {} ranks",
            ranked.len(),
            params.gamma.len()
        )));
    }
    let mut impressions = Vec::with_capacity(ranked.len());
    let mut clicks = Vec::new();
    let mut trace = Vec::with_capacity(ranked.len());
    for (r, sku) in ranked.iter().enumerate() {
        let alpha = click_params.attractiveness(sku, query)?;
        let sigma = click_params.satisfaction(sku, intent)?;
        let examined = rng.gen_bool(params.gamma[r]);
        let attracted = rng.gen_bool(alpha);
        let satisfied = rng.gen_bool(sigma);
        let clicked = matched && examined && attracted && satisfied;
        if clicked {
            clicks.push(r + 1);
        }
        impressions.push((sku.clone(), r + 1));
        trace.push(ImpressionTrace {
            examined,
            attracted,
            satisfied,
            clicked,
        });
    }
    let request = SearchRequest {
        ts,
        user: user.to_string(),
        query: query.join(" "),
        impressions,
        clicks,
    };
    let trace = RequestTrace {
        matched,
        continued: true,
        impressions: trace,
    };
    Ok((request, trace))
}

/// Runs one task: queries follow `query_chain` (repeating its last entry
/// once exhausted) until the continuation draw fails or `max_queries`
/// requests were issued. Requests are 10–120 s apart.
#[allow(clippy::too_many_arguments)]
pub fn simulate_session<R: Rng>(
    user: &str,
    start_ts: u64,
    intent: &[String],
    query_chain: &[Vec<String>],
    catalog: &Catalog,
    retriever: &dyn Retriever,
    params: &SimulationParams,
    click_params: &dyn ClickParameters,
    rng: &mut R,
) -> Result<Session> {
    if catalog.is_empty() {
        return Err(Error::Empty("catalog"));
    }
    if query_chain.is_empty() {
        return Err(Error::Empty("query chain"));
    }
    let mut session = Session {
        requests: Vec::new(),
        traces: Vec::new(),
    };
    let mut ts = start_ts;
    for i in 0..params.max_queries {
        let query = &query_chain[i.min(query_chain.len() - 1)];
        let ranked: Vec<String> = retriever
            .retrieve(query, params.gamma.len())
            .iter()
            .map(|&p| catalog.skus()[p].id.clone())
            .collect();
        let matched = rng.gen_bool(params.alpha1);
        let (request, mut trace) = simulate_request(
            ts,
            user,
            query,
            intent,
            &ranked,
            matched,
            params,
            click_params,
            rng,
        )?;
        trace.continued = !matched || rng.gen_bool(params.alpha2);
        let stop = !trace.continued;
        session.requests.push(request);
        session.traces.push(trace);
        if stop {
            break;
        }
        ts += rng.gen_range(10..=120);
    }
    Ok(session)
}

#[cfg(test)]
mod tests;
