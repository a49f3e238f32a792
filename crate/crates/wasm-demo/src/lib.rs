//! Browser bindings for three small views of the library. Every export takes
//! plain arguments and returns a JSON string, so the same functions run in
//! native tests.

use std::sync::OnceLock;

use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use skurank::click_sim::{
    generate_catalog, simulate_request, Catalog, CatalogSpec, ClickParameters, SearchRequest,
    SimulationParams,
};
use skurank::embeddings::{embed_sequence, train_skipgram, EmbeddingTable, SkipGramConfig};
use skurank::extraction::{extract_triples, LoggedSession};
use skurank::models::{interaction_matrix, kernel_features, KernelBank};
use skurank::rng::substream;
use skurank::text::normalize;

const MAX_TOKENS: usize = 16;

struct World {
    catalog: Catalog,
    table: EmbeddingTable,
}

/// A small catalog and skip-gram vectors trained on it, built on first use.
fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| {
        let spec = CatalogSpec {
            n_skus: 2000,
            ..CatalogSpec::default()
        };
        let catalog = generate_catalog(&spec, 1);
        let corpus: Vec<Vec<String>> = catalog.skus().iter().map(|s| s.text()).collect();
        let config = SkipGramConfig {
            dim: 16,
            ..SkipGramConfig::default()
        };
        let table = train_skipgram(&corpus, &config).expect("demo corpus is not empty");
        World { catalog, table }
    })
}

#[derive(Serialize)]
struct Kernel {
    mean: f64,
    width: f64,
    phi: f64,
}

#[derive(Serialize)]
struct KernelView {
    query: Vec<String>,
    doc: Vec<String>,
    /// Cosine similarities, one row per query token.
    matrix: Vec<Vec<f64>>,
    kernels: Vec<Kernel>,
}

fn unit_rows(
    table: &EmbeddingTable,
    tokens: &[String],
) -> Result<skurank::embeddings::LocalEmbedding, String> {
    let mut e = embed_sequence(tokens, tokens.len().max(1), table).map_err(|e| e.to_string())?;
    let dim = table.dim();
    for row in e.matrix.data_mut().chunks_mut(dim) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(e)
}

pub fn kernel_view(query: &str, doc: &str) -> Result<String, String> {
    let w = world();
    let clip = |raw: &str| -> Vec<String> {
        normalize(raw)
            .into_tokens()
            .into_iter()
            .take(MAX_TOKENS)
            .collect()
    };
    let (q, d) = (clip(query), clip(doc));
    if q.is_empty() || d.is_empty() {
        return Err("query and document need at least one token each".into());
    }
    let mut m = interaction_matrix(&unit_rows(&w.table, &q)?, &unit_rows(&w.table, &d)?)
        .map_err(|e| e.to_string())?;
    // identical tokens match exactly even when out of vocabulary
    for (k, v) in m.values.data_mut().iter_mut().enumerate() {
        if q[k / d.len()] == d[k % d.len()] {
            *v = 1.0;
        }
    }
    let matrix = m
        .values
        .data()
        .chunks(d.len())
        .map(<[f64]>::to_vec)
        .collect();
    let bank = KernelBank::default();
    let phi = kernel_features(&m, &bank).map_err(|e| e.to_string())?;
    let kernels = bank
        .means()
        .iter()
        .zip(bank.widths())
        .zip(phi)
        .map(|((&mean, &width), phi)| Kernel { mean, width, phi })
        .collect();
    let view = KernelView {
        query: q,
        doc: d,
        matrix,
        kernels,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// The same attractiveness and satisfaction for every SKU.
struct Constant {
    alpha: f64,
    sigma: f64,
}

impl ClickParameters for Constant {
    fn attractiveness(&self, _: &str, _: &[String]) -> skurank::Result<f64> {
        Ok(self.alpha)
    }

    fn satisfaction(&self, _: &str, _: &[String]) -> skurank::Result<f64> {
        Ok(self.sigma)
    }
}

#[derive(Serialize)]
struct RankRate {
    rank: usize,
    examination: f64,
    expected: f64,
    observed: f64,
    std_error: f64,
}

pub fn click_rates(
    alpha: f64,
    sigma: f64,
    p_match: f64,
    requests: u32,
    seed: u64,
) -> Result<String, String> {
    for (name, p) in [("alpha", alpha), ("sigma", sigma), ("p_match", p_match)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("{name} must lie in [0, 1]"));
        }
    }
    if requests == 0 {
        return Err("need at least one request".into());
    }
    let params = SimulationParams::default();
    let ranked: Vec<String> = (1..=params.gamma.len())
        .map(|r| format!("sku{r}"))
        .collect();
    let query = vec!["lamp".to_string()];
    let click_params = Constant { alpha, sigma };
    let mut rng = substream(seed, "demo", 0);
    let mut clicks = vec![0u32; ranked.len()];
    for i in 0..requests {
        let matched = rng.gen_bool(p_match);
        let (req, _) = simulate_request(
            i as u64,
            "u",
            &query,
            &query,
            &ranked,
            matched,
            &params,
            &click_params,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        for r in req.clicks {
            clicks[r - 1] += 1;
        }
    }
    let n = requests as f64;
    let rates: Vec<RankRate> = params
        .gamma
        .iter()
        .zip(&clicks)
        .enumerate()
        .map(|(r, (&g, &c))| {
            let p = p_match * g * alpha * sigma;
            RankRate {
                rank: r + 1,
                examination: g,
                expected: p,
                observed: c as f64 / n,
                std_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect();
    serde_json::to_string(&rates).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Mined {
    query: String,
    rel: String,
    irrel: String,
    earlier: usize,
    later: usize,
    click_rank: usize,
    negative_rank: usize,
}

/// Triples of one session given as a JSON array of click-log requests.
pub fn mine(requests_json: &str, rho: usize) -> Result<String, String> {
    let requests: Vec<SearchRequest> =
        serde_json::from_str(requests_json).map_err(|e| e.to_string())?;
    for r in &requests {
        r.validate()
            .map_err(|e| format!("request {:?}: {e}", r.query))?;
    }
    let session = LoggedSession {
        id: 0,
        user: requests.first().map(|r| r.user.clone()).unwrap_or_default(),
        requests,
    };
    let mined: Vec<Mined> = extract_triples(&session, rho)
        .into_iter()
        .map(|m| Mined {
            query: m.triple.query,
            rel: m.triple.rel,
            irrel: m.triple.irrel,
            earlier: m.earlier,
            later: m.later,
            click_rank: m.click_rank,
            negative_rank: m.negative_rank,
        })
        .collect();
    serde_json::to_string(&mined).map_err(|e| e.to_string())
}

/// Titles of `n` catalog SKUs, for filling the document box.
pub fn sample_titles(n: usize) -> String {
    let titles: Vec<String> = world()
        .catalog
        .skus()
        .iter()
        .take(n)
        .map(|s| s.title.join(" "))
        .collect();
    serde_json::to_string(&titles).unwrap_or_default()
}

#[wasm_bindgen(js_name = kernelView)]
pub fn kernel_view_js(query: &str, doc: &str) -> Result<String, JsError> {
    kernel_view(query, doc).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = clickRates)]
pub fn click_rates_js(
    alpha: f64,
    sigma: f64,
    p_match: f64,
    requests: u32,
    seed: u32,
) -> Result<String, JsError> {
    click_rates(alpha, sigma, p_match, requests, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = mine)]
pub fn mine_js(requests_json: &str, rho: usize) -> Result<String, JsError> {
    mine(requests_json, rho).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleTitles)]
pub fn sample_titles_js(n: usize) -> String {
    sample_titles(n)
}
