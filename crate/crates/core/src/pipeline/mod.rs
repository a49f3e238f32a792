//! End-to-end stages on synthetic data: simulate, extract, pretrain,
//! train, evaluate and the benchmark that chains them.

mod config;

pub use config::{Knob, RunConfig};

use std::fmt;

use crate::click_sim::{
    generate_catalog, generate_clicklog, Catalog, ClickLog, GroundTruth, SearchRequest,
};
use crate::embeddings::{train_skipgram, EmbeddingTable};
use crate::error::{Error, Result};
use crate::extraction::{
    dataset_stats, extract_all, sessionize, temporal_split, DatasetStats, Split, TrainingTriple,
};
use crate::models::{NeuralModel, Scorer, TfIdfScorer};
use crate::text::Vocabulary;
use crate::training::{
    format_comparison, pairwise_error_rate, train_with_progress, Dataset, EpochReport,
    ErrorRateReport, Trained, VariantResult,
};

pub struct Simulation {
    pub catalog: Catalog,
    pub log: ClickLog,
}

/// Catalog and click log for `users` simulated users.
pub fn simulate(config: &RunConfig, users: usize) -> Result<Simulation> {
    let catalog = generate_catalog(&config.catalog_spec(), config.seed);
    let log = generate_clicklog(&catalog, users, &config.clicklog_config(), config.seed)?;
    Ok(Simulation { catalog, log })
}

pub struct Extraction {
    pub triples: Vec<TrainingTriple>,
    pub split: Split,
    pub stats: DatasetStats,
}

pub fn extract(requests: &[SearchRequest], config: &RunConfig) -> Result<Extraction> {
    let sessions = sessionize(requests, config.extract_timeout_secs);
    let triples: Vec<TrainingTriple> = extract_all(&sessions, config.extract_rho)
        .into_iter()
        .map(|m| m.triple)
        .collect();
    let split = temporal_split(&triples, &config.split_spec()?)?;
    let stats = dataset_stats(&triples);
    Ok(Extraction {
        triples,
        split,
        stats,
    })
}

/// How many triples the ground truth orders correctly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Fidelity {
    pub ordered: usize,
    pub total: usize,
    /// Triples with a side missing from the ground truth; counted as wrong.
    pub unknown: usize,
}

impl Fidelity {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.ordered as f64 / self.total as f64
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "fidelity={:.4} ordered={} total={} unknown={}",
            self.rate(),
            self.ordered,
            self.total,
            self.unknown
        )
    }
}

/// Counts triples with `σ(q, rel) > σ(q, irrel)`.
pub fn fidelity(triples: &[TrainingTriple], truth: &GroundTruth) -> Fidelity {
    let mut out = Fidelity {
        total: triples.len(),
        ..Fidelity::default()
    };
    for t in triples {
        match (truth.get(&t.query, &t.rel), truth.get(&t.query, &t.irrel)) {
            (Some(a), Some(b)) => out.ordered += usize::from(a > b),
            _ => out.unknown += 1,
        }
    }
    out
}

pub fn corpus(catalog: &Catalog) -> Vec<Vec<String>> {
    catalog.skus().iter().map(|s| s.text()).collect()
}

/// Skip-gram vectors over the catalog texts.
pub fn pretrain(catalog: &Catalog, config: &RunConfig) -> Result<EmbeddingTable> {
    train_skipgram(&corpus(catalog), &config.skipgram_config())
}

/// The lexical baseline with idf over the catalog.
pub fn baseline(catalog: &Catalog) -> Result<TfIdfScorer> {
    Ok(TfIdfScorer::new(Vocabulary::build(&corpus(catalog))?))
}

/// Trains `config.model_architecture` with the given truncation length and
/// embedding mode.
pub fn train_variant(
    catalog: &Catalog,
    table: &EmbeddingTable,
    split: &Split,
    config: &RunConfig,
    n_d: usize,
    frozen: bool,
    progress: impl FnMut(&EpochReport),
) -> Result<Trained> {
    let mut model_config = config.model_config(table.dim())?;
    model_config.n_d = n_d;
    let model = NeuralModel::new(model_config, table, config.seed)?;
    let train = Dataset::from_triples(&split.train, catalog)?;
    let validation = Dataset::from_triples(&split.validation, catalog)?;
    let train_config = crate::training::TrainConfig {
        frozen_embeddings: frozen,
        ..config.train_config()
    };
    train_with_progress(&model, &train, &validation, &train_config, progress)
}

/// Baseline error rates on the validation and test windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub validation: ErrorRateReport,
    pub test: ErrorRateReport,
}

pub fn baseline_reports(catalog: &Catalog, split: &Split) -> Result<Baseline> {
    let scorer = baseline(catalog)?;
    Ok(Baseline {
        validation: pairwise_error_rate(
            &scorer,
            &Dataset::from_triples(&split.validation, catalog)?,
        )?,
        test: pairwise_error_rate(&scorer, &Dataset::from_triples(&split.test, catalog)?)?,
    })
}

/// Error rates of `scorer` relative to the baseline.
pub fn evaluate_variant(
    name: &str,
    scorer: &dyn Scorer,
    catalog: &Catalog,
    split: &Split,
    baseline: &Baseline,
) -> Result<VariantResult> {
    let validation =
        pairwise_error_rate(scorer, &Dataset::from_triples(&split.validation, catalog)?)?;
    let test = pairwise_error_rate(scorer, &Dataset::from_triples(&split.test, catalog)?)?;
    Ok(VariantResult {
        variant: name.to_string(),
        validation: validation.against(&baseline.validation)?,
        test: test.against(&baseline.test)?,
    })
}

pub fn variant_name(config: &RunConfig, n_d: usize, frozen: bool) -> String {
    let mode = if frozen { "frozen" } else { "trainable" };
    format!("{} {mode} N_D={n_d}", config.model_architecture)
}

#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub result: VariantResult,
    pub n_d: usize,
    pub frozen: bool,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub users: usize,
    pub requests: usize,
    pub stats: DatasetStats,
    pub fidelity: Fidelity,
    pub split: String,
    pub baseline: VariantResult,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    /// The trainable row with the lowest relative test error.
    pub fn best_trainable(&self) -> Option<&BenchmarkRow> {
        self.rows
            .iter()
            .filter(|r| !r.frozen)
            .min_by(|a, b| relative(&a.result.test).total_cmp(&relative(&b.result.test)))
    }

    pub fn frozen(&self) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.frozen)
    }
}

fn relative(r: &ErrorRateReport) -> f64 {
    r.relative_percent.unwrap_or(f64::INFINITY)
}

impl fmt::Display for BenchmarkReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "users={} requests={} triples={} unique_queries={}",
            self.users, self.requests, self.stats.examples, self.stats.unique_queries
        )?;
        writeln!(f, "{}", self.fidelity)?;
        writeln!(f, "{}", self.split)?;
        for row in &self.rows {
            writeln!(
                f,
                "{}: best_epoch={} epochs={} test_errors={}/{}",
                row.result.variant,
                row.best_epoch,
                row.epochs_run,
                row.result.test.errors,
                row.result.test.total
            )?;
        }
        writeln!(
            f,
            "baseline: validation_rate={:.6} test_rate={:.6}",
            self.baseline.validation.rate, self.baseline.test.rate
        )?;
        let rows: Vec<VariantResult> = self.rows.iter().map(|r| r.result.clone()).collect();
        write!(f, "{}", format_comparison(&self.baseline, &rows))
    }
}

/// Everything a benchmark run produced, for callers that persist it.
pub struct Benchmark {
    pub report: BenchmarkReport,
    pub simulation: Simulation,
    pub extraction: Extraction,
    pub table: EmbeddingTable,
    pub models: Vec<(String, NeuralModel)>,
}

/// Simulates `bench.users` users, extracts and splits triples, pretrains
/// word vectors, trains one model per truncation length (plus a frozen
/// variant) and compares each with the baseline. `log` receives progress
/// lines.
pub fn benchmark(config: &RunConfig, mut log: impl FnMut(&str)) -> Result<Benchmark> {
    if config.bench_truncations.is_empty() {
        return Err(Error::Empty("bench.truncations"));
    }
    let simulation = simulate(config, config.bench_users)?;
    log(&format!(
        "simulated {} requests",
        simulation.log.requests.len()
    ));
    let extraction = extract(&simulation.log.requests, config)?;
    let fid = fidelity(&extraction.triples, &simulation.log.ground_truth);
    log(&format!(
        "extracted {} triples, {fid}",
        extraction.triples.len()
    ));
    log(&extraction.split.ratio_report());
    let table = pretrain(&simulation.catalog, config)?;
    log(&format!("pretrained {} word vectors", table.len()));
    let catalog = &simulation.catalog;
    let split = &extraction.split;
    let base = baseline_reports(catalog, split)?;
    let baseline_row = VariantResult {
        variant: "tf-idf".into(),
        validation: base.validation.clone().against(&base.validation)?,
        test: base.test.clone().against(&base.test)?,
    };

    let mut variants: Vec<(usize, bool)> = config
        .bench_truncations
        .iter()
        .map(|&n| (n, false))
        .collect();
    if config.bench_frozen {
        variants.push((config.model_n_d, true));
    }
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for (n_d, frozen) in variants {
        let name = variant_name(config, n_d, frozen);
        let trained = train_variant(catalog, &table, split, config, n_d, frozen, |e| {
            log(&format!("{name}: {e}"))
        })?;
        let result = evaluate_variant(&name, &trained.model, catalog, split, &base)?;
        log(&format!("{name}: test {}", result.test));
        rows.push(BenchmarkRow {
            result,
            n_d,
            frozen,
            best_epoch: trained.best_epoch,
            epochs_run: trained.epochs.len() - 1,
        });
        models.push((name, trained.model));
    }
    let report = BenchmarkReport {
        users: config.bench_users,
        requests: simulation.log.requests.len(),
        stats: extraction.stats,
        fidelity: fid,
        split: extraction.split.ratio_report(),
        baseline: baseline_row,
        rows,
    };
    Ok(Benchmark {
        report,
        simulation,
        extraction,
        table,
        models,
    })
}
