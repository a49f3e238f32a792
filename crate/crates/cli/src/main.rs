use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use skurank::click_sim::{
    read_clicklog, read_ground_truth, write_clicklog, write_ground_truth, Catalog,
};
use skurank::embeddings::EmbeddingTable;
use skurank::extraction::{read_triples, write_triples, Split};
use skurank::models::NeuralModel;
use skurank::numeric::Checkpoint;
use skurank::pipeline::{self, RunConfig};
use skurank::training::{format_comparison, moved_word_pairs};

#[derive(Parser)]
#[command(
    name = "skurank",
    version,
    about = "Product-search ranking on simulated click logs"
)]
struct Cli {
    /// File of `key = value` lines applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one knob, e.g. `--set train.batch_size=128`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Root seed (same as `--set seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a catalog and a click log with its ground truth.
    Simulate {
        #[arg(long)]
        users: Option<usize>,
        /// Click log; the catalog and ground truth are written next to it
        /// as `<stem>.catalog.tsv` and `<stem>.truth.tsv` unless given.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Mine training triples from a click log and split them by time.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// All triples; the split goes to `<stem>.train.tsv`,
        /// `<stem>.validation.tsv` and `<stem>.test.tsv`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rho: Option<usize>,
        /// Ground truth to report the share of correctly ordered triples.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Train skip-gram word vectors on catalog texts.
    Pretrain {
        /// Catalog TSV.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a ranking model on the train/validation files of a split.
    Train {
        /// Triples file written by `extract`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Error rates of a checkpoint and the tf-idf baseline.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Word pairs whose similarity moved between pretraining and training.
    InspectEmbeddings {
        /// Pretrained vectors.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Full synthetic pipeline and the comparison table.
    Benchmark {
        #[arg(long)]
        users: Option<usize>,
        /// Directory for every intermediate artifact.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn split_paths(triples: &Path) -> [PathBuf; 3] {
    let ext = triples
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("tsv");
    ["train", "validation", "test"].map(|p| sibling(triples, &format!("{p}.{ext}")))
}

fn read_split(triples: &Path) -> Result<Split> {
    let [train, validation, test] = split_paths(triples);
    Ok(Split {
        train: read_triples(&train)?,
        validation: read_triples(&validation)?,
        test: read_triples(&test)?,
        ..Split::default()
    })
}

fn load_model(path: &Path) -> Result<NeuralModel> {
    Ok(NeuralModel::from_checkpoint(Checkpoint::load(path)?)?)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    for kv in &cli.overrides {
        config.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }

    match cli.command {
        Command::Simulate {
            users,
            out,
            catalog,
            truth,
        } => {
            let sim = pipeline::simulate(&config, users.unwrap_or(config.sim_users))?;
            write_clicklog(&out, &sim.log.requests)?;
            let catalog = catalog.unwrap_or_else(|| sibling(&out, "catalog.tsv"));
            sim.catalog.save(&catalog)?;
            let truth = truth.unwrap_or_else(|| sibling(&out, "truth.tsv"));
            write_ground_truth(&truth, &sim.log.ground_truth)?;
            println!(
                "requests={} skus={} log={} catalog={} truth={}",
                sim.log.requests.len(),
                sim.catalog.len(),
                out.display(),
                catalog.display(),
                truth.display()
            );
        }
        Command::Extract {
            input,
            out,
            rho,
            truth,
        } => {
            if let Some(rho) = rho {
                config.extract_rho = rho;
            }
            let requests = read_clicklog(&input)?;
            let ex = pipeline::extract(&requests, &config)?;
            write_triples(&out, &ex.triples)?;
            let [train, validation, test] = split_paths(&out);
            write_triples(&train, &ex.split.train)?;
            write_triples(&validation, &ex.split.validation)?;
            write_triples(&test, &ex.split.test)?;
            println!("{}", ex.stats);
            println!("{}", ex.split.ratio_report());
            if let Some(truth) = truth {
                println!(
                    "{}",
                    pipeline::fidelity(&ex.triples, &read_ground_truth(&truth)?)
                );
            }
        }
        Command::Pretrain { input, out } => {
            let catalog = Catalog::load(&input)?;
            let table = pipeline::pretrain(&catalog, &config)?;
            table.save(&out)?;
            println!(
                "tokens={} dim={} out={}",
                table.len(),
                table.dim(),
                out.display()
            );
        }
        Command::Train {
            input,
            catalog,
            vectors,
            out,
        } => {
            let catalog = Catalog::load(&catalog)?;
            let table = EmbeddingTable::load(&vectors)?;
            let split = read_split(&input)?;
            let trained = pipeline::train_variant(
                &catalog,
                &table,
                &split,
                &config,
                config.model_n_d,
                config.train_frozen,
                |e| println!("{e}"),
            )?;
            trained.model.to_checkpoint().save(&out)?;
            println!("best_epoch={} out={}", trained.best_epoch, out.display());
        }
        Command::Eval {
            input,
            catalog,
            model,
        } => {
            let catalog = Catalog::load(&catalog)?;
            let split = read_split(&input)?;
            let model = load_model(&model)?;
            let base = pipeline::baseline_reports(&catalog, &split)?;
            let tfidf = pipeline::baseline(&catalog)?;
            let baseline = pipeline::evaluate_variant("tf-idf", &tfidf, &catalog, &split, &base)?;
            let name = format!("{} N_D={}", model.architecture(), model.config().n_d);
            let row = pipeline::evaluate_variant(&name, &model, &catalog, &split, &base)?;
            println!("validation {}", row.validation);
            println!("test {}", row.test);
            print!("{}", format_comparison(&baseline, &[row]));
        }
        Command::InspectEmbeddings { input, model } => {
            let before = EmbeddingTable::load(&input)?;
            let after = load_model(&model)?.embedding_table();
            print!(
                "{}",
                moved_word_pairs(&before, &after, &config.inspect_bins, config.inspect_top_k)?
            );
        }
        Command::Benchmark { users, out } => {
            if let Some(users) = users {
                config.bench_users = users;
            }
            let run = pipeline::benchmark(&config, |line| eprintln!("{line}"))?;
            if let Some(dir) = out {
                save_benchmark(&dir, &config, &run)?;
            }
            print!("{}", run.report);
        }
    }
    Ok(())
}

fn save_benchmark(dir: &Path, config: &RunConfig, run: &pipeline::Benchmark) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.txt"), config.to_text()).context("writing config.txt")?;
    write_clicklog(&dir.join("log.jsonl"), &run.simulation.log.requests)?;
    run.simulation.catalog.save(&dir.join("log.catalog.tsv"))?;
    write_ground_truth(&dir.join("log.truth.tsv"), &run.simulation.log.ground_truth)?;
    let triples = dir.join("triples.tsv");
    write_triples(&triples, &run.extraction.triples)?;
    let [train, validation, test] = split_paths(&triples);
    write_triples(&train, &run.extraction.split.train)?;
    write_triples(&validation, &run.extraction.split.validation)?;
    write_triples(&test, &run.extraction.split.test)?;
    run.table.save(&dir.join("vectors.txt"))?;
    for (name, model) in &run.models {
        let file = format!("{}.ckpt", name.replace([' ', '='], "_"));
        model.to_checkpoint().save(&dir.join(file))?;
    }
    fs::write(dir.join("report.txt"), run.report.to_string()).context("writing report.txt")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
