use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::click_sim::{default_gamma, CatalogSpec, ClickLogConfig, SimulationParams};
use crate::embeddings::SkipGramConfig;
use crate::error::{Error, Result};
use crate::extraction::SplitSpec;
use crate::models::{Architecture, Head, KernelBank, ModelConfig};
use crate::training::TrainConfig;

/// A value that can be written as one `key = value` line.
pub trait Knob: Sized {
    fn parse_knob(s: &str) -> std::result::Result<Self, String>;
    fn show_knob(&self) -> String;
}

macro_rules! scalar_knob {
    ($($t:ty),*) => {$(
        impl Knob for $t {
            fn parse_knob(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show_knob(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

scalar_knob!(u64, usize, f64, bool, Architecture);

impl Knob for Head {
    fn parse_knob(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tanh" => Ok(Head::Tanh),
            "linear" => Ok(Head::Linear),
            _ => Err(format!("expected tanh or linear, got {s:?}")),
        }
    }

    fn show_knob(&self) -> String {
        match self {
            Head::Tanh => "tanh".into(),
            Head::Linear => "linear".into(),
        }
    }
}

/// Comma-separated lists.
impl<T: Knob> Knob for Vec<T> {
    fn parse_knob(s: &str) -> std::result::Result<Self, String> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_knob(p.trim())).collect()
    }

    fn show_knob(&self) -> String {
        self.iter()
            .map(Knob::show_knob)
            .collect::<Vec<_>>()
            .join(",")
    }
}

macro_rules! run_config {
    ($($key:literal $field:ident: $t:ty = $default:expr, $doc:literal;)*) => {
        /// Every tunable of the pipeline as a flat `key = value` table.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(#[doc = $doc] pub $field: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)* }
            }
        }

        impl RunConfig {
            /// `(key, description)` for every knob.
            pub const KNOBS: &'static [(&'static str, &'static str)] = &[
                $(($key, $doc),)*
            ];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = <$t as Knob>::parse_knob(value.trim())
                            .map_err(|e| Error::invalid(format!("{key} = {value:?}: {e}")))?;
                    })*
                    _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$field.show_knob()),)*
                    _ => None,
                }
            }

            /// All knobs in declaration order, in the file format.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $(let _ = writeln!(out, "{} = {}", $key, self.$field.show_knob());)*
                out
            }
        }
    };
}

run_config! {
    "seed" seed: u64 = 1, "Root seed; every stage derives its own named stream from it.";
    "catalog.skus" catalog_skus: usize = 2000, "Number of synthetic SKUs.";
    "catalog.palette" catalog_palette: usize = 12, "Attributes available to each category (0 = all 40).";
    "catalog.stuffed_share" catalog_stuffed_share: f64 = 0.15, "Share of keyword-stuffed listings.";
    "sim.users" sim_users: usize = 1000, "Simulated users.";
    "sim.alpha1" sim_alpha1: f64 = 0.5, "P(M = 1): a request matches the user's intent.";
    "sim.alpha2" sim_alpha2: f64 = 0.3, "P(N = 1 | M = 1): the user continues after a matched request.";
    "sim.max_queries" sim_max_queries: usize = 4, "Requests per session at most.";
    "sim.ranks" sim_ranks: usize = 10, "Impressions per result page; gamma_r = 1/(1 + 0.3(r-1)).";
    "sim.sessions_min" sim_sessions_min: usize = 1, "Sessions per user, lower bound.";
    "sim.sessions_max" sim_sessions_max: usize = 3, "Sessions per user, upper bound.";
    "sim.horizon_days" sim_horizon_days: u64 = 240, "Days covered by the log.";
    "sim.intent_min" sim_intent_min: usize = 1, "Title attributes in a session intent, lower bound.";
    "sim.intent_max" sim_intent_max: usize = 2, "Title attributes in a session intent, upper bound.";
    "extract.rho" extract_rho: usize = 3, "Rank cutoff for negatives from the earlier result page.";
    "extract.timeout_secs" extract_timeout_secs: u64 = 1800, "Gap that ends a session.";
    "split.train_days" split_train_days: u64 = 180, "Training window.";
    "split.validation_days" split_validation_days: u64 = 30, "Validation window.";
    "split.test_days" split_test_days: u64 = 30, "Test window.";
    "embed.dim" embed_dim: usize = 50, "Word-vector dimension.";
    "embed.window" embed_window: usize = 5, "Skip-gram context window.";
    "embed.negatives" embed_negatives: usize = 5, "Negative samples per context word.";
    "embed.epochs" embed_epochs: usize = 5, "Skip-gram passes over the corpus.";
    "embed.learning_rate" embed_learning_rate: f64 = 0.025, "Initial skip-gram learning rate.";
    "model.architecture" model_architecture: Architecture = Architecture::KernelPooling, "kernel_pooling, siamese, dssm_like or hybrid_local.";
    "model.n_q" model_n_q: usize = 10, "Query truncation length.";
    "model.n_d" model_n_d: usize = 64, "Document truncation length.";
    "model.kernel_means" model_kernel_means: Vec<f64> = KernelBank::default().means().to_vec(), "Kernel centres, strictly decreasing.";
    "model.kernel_widths" model_kernel_widths: Vec<f64> = KernelBank::default().widths().to_vec(), "Kernel widths, one per centre.";
    "model.repr_dim" model_repr_dim: usize = 64, "Encoding size of the distributed models.";
    "model.hidden" model_hidden: usize = 64, "Hidden width of dssm_like.";
    "model.channels" model_channels: usize = 16, "Convolution channels of hybrid_local.";
    "model.window" model_window: usize = 3, "Convolution window.";
    "model.head" model_head: Head = Head::Tanh, "Output nonlinearity of the scalar heads.";
    "train.learning_rate" train_learning_rate: f64 = 1e-4, "Initial Adam learning rate.";
    "train.batch_size" train_batch_size: usize = 512, "Triples per optimizer step.";
    "train.max_epochs" train_max_epochs: usize = 20, "Epoch limit.";
    "train.patience" train_patience: usize = 2, "Plateau epochs tolerated before decaying the learning rate.";
    "train.decay" train_decay: f64 = 0.1, "Learning-rate decay factor.";
    "train.min_learning_rate" train_min_learning_rate: f64 = 1e-6, "Learning-rate floor.";
    "train.early_stop" train_early_stop: usize = 5, "Epochs without a better validation error before stopping.";
    "train.frozen" train_frozen: bool = false, "Keep word vectors fixed.";
    "bench.users" bench_users: usize = 11000, "Simulated users in the benchmark.";
    "bench.truncations" bench_truncations: Vec<usize> = vec![64], "Document truncation lengths trained in the benchmark.";
    "bench.frozen" bench_frozen: bool = true, "Also train a frozen-embedding variant at model.n_d.";
    "inspect.top_k" inspect_top_k: usize = 3, "Word pairs listed per bin.";
    "inspect.bins" inspect_bins: Vec<f64> = crate::training::tenths_grid(), "Similarity values pairs are snapped to.";
}

impl RunConfig {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::parse(
                    i + 1,
                    format!("expected key = value, got {line:?}"),
                ));
            };
            self.set(k.trim(), v)
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&fs::read_to_string(path).map_err(|e| Error::file(path, e))?)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v)
    }

    /// Markdown table of knobs with their defaults.
    pub fn knob_table() -> String {
        let defaults = RunConfig::default();
        let mut out = String::from("| key | default | meaning |\n|---|---|---|\n");
        for (key, doc) in Self::KNOBS {
            let value = defaults.get(key).expect("declared key");
            let _ = writeln!(out, "| `{key}` | `{value}` | {doc} |");
        }
        out
    }

    pub fn catalog_spec(&self) -> CatalogSpec {
        CatalogSpec {
            n_skus: self.catalog_skus,
            palette: self.catalog_palette,
            stuffed_share: self.catalog_stuffed_share,
            ..CatalogSpec::default()
        }
    }

    pub fn clicklog_config(&self) -> ClickLogConfig {
        ClickLogConfig {
            params: SimulationParams {
                alpha1: self.sim_alpha1,
                alpha2: self.sim_alpha2,
                gamma: default_gamma(self.sim_ranks),
                max_queries: self.sim_max_queries,
            },
            sessions_per_user: (self.sim_sessions_min, self.sim_sessions_max),
            horizon_days: self.sim_horizon_days,
            intent_attributes: (self.sim_intent_min, self.sim_intent_max),
            ..ClickLogConfig::default()
        }
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        SplitSpec::days(
            self.split_train_days,
            self.split_validation_days,
            self.split_test_days,
        )
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.embed_dim,
            window: self.embed_window,
            negatives: self.embed_negatives,
            epochs: self.embed_epochs,
            learning_rate: self.embed_learning_rate,
            seed: self.seed,
        }
    }

    /// Model shape for word vectors of dimension `dim`.
    pub fn model_config(&self, dim: usize) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(self.model_architecture, dim);
        cfg.n_q = self.model_n_q;
        cfg.n_d = self.model_n_d;
        cfg.kernels = KernelBank::new(
            self.model_kernel_means.clone(),
            self.model_kernel_widths.clone(),
        )?;
        cfg.repr_dim = self.model_repr_dim;
        cfg.hidden = self.model_hidden;
        cfg.channels = self.model_channels;
        cfg.window = self.model_window;
        cfg.head = self.model_head;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train_learning_rate,
            batch_size: self.train_batch_size,
            max_epochs: self.train_max_epochs,
            patience: self.train_patience,
            decay: self.train_decay,
            min_learning_rate: self.train_min_learning_rate,
            early_stop: self.train_early_stop,
            frozen_embeddings: self.train_frozen,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_covers_every_knob() {
        let mut c = RunConfig::default();
        c.set("extract.rho", "5").unwrap();
        c.set("model.kernel_means", "1.0, 0.5").unwrap();
        c.set("model.kernel_widths", "0.001,0.1").unwrap();
        c.set("model.head", "linear").unwrap();
        let mut d = RunConfig::default();
        d.apply_text(&c.to_text()).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.to_text().lines().count(), RunConfig::KNOBS.len());
        assert_eq!(d.model_config(8).unwrap().kernels.len(), 2);
    }

    #[test]
    fn unknown_and_malformed_entries_are_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("extract.sigma", "1").is_err());
        assert!(c.set("extract.rho", "three").is_err());
        assert!(matches!(
            c.apply_text("seed = 2\nbogus = 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            c.apply_text("seed 2"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(c.apply_override("seed").is_err());
        c.apply_text("# comment\n\nseed = 9 # trailing\n").unwrap();
        assert_eq!(c.seed, 9);
        c.apply_override("train.frozen=true").unwrap();
        assert!(c.train_frozen);
    }

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.train_config().validate().unwrap();
        c.model_config(c.embed_dim).unwrap();
        c.clicklog_config().params.validate().unwrap();
        c.split_spec().unwrap();
        assert!(RunConfig::knob_table().contains("| `extract.rho` | `3` |"));
    }
}
