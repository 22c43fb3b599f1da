use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowcert::attack::AttackConfig;
use flowcert::certify::{BaseMethod, Reference, SearchConfig};
use flowcert::commands::{
    cmd_attack, cmd_certify, cmd_flows, cmd_refs, cmd_train, cmd_w1, parse_reference, sample_references,
    CertifyMethod, CertifyParams, RefStyle,
};
use flowcert::data::{ingest, read_grid_csv, DataFormat, Dataset, Resize};
use flowcert::linprog::LpOptions;
use flowcert::network::{load_model, TrainConfig};
use flowcert::{CouplingStrategy, Error, GridShape, Result};

#[derive(Parser)]
#[command(name = "flowcert", version, about = "Wasserstein robustness certificates through pixel flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file or CSV file with `label,pixels...` rows.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "idx")]
    format: DataFormat,
    /// Grid shape of CSV rows as RxC; square grids are inferred.
    #[arg(long, value_parser = parse_shape)]
    shape: Option<GridShape>,
    /// Keep 28×28 images instead of reducing them to 8×8.
    #[arg(long)]
    full_resolution: bool,
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    count: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, Dataset)> {
        let resize = if self.full_resolution { Resize::Keep } else { Resize::Mnist8 };
        let all = ingest(&self.data, self.format, self.shape, resize)?;
        let count = self.count.unwrap_or(all.len().saturating_sub(self.start));
        let part = all.slice(self.start, count);
        Ok((all, part))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a small fully connected classifier.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Hidden widths, comma separated; empty for a linear model.
        #[arg(long, default_value = "64,64")]
        hidden: String,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Map images to flows from a reference.
    Flows {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "uniform")]
        reference: String,
        #[arg(long, default_value = "nw")]
        strategy: CouplingStrategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify W1 robustness radii.
    Certify {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "reference", default_value = "uniform")]
        references: Vec<String>,
        #[arg(long, default_value = "nw")]
        strategy: CouplingStrategy,
        #[arg(long, default_value = "vanilla")]
        method: CertifyMethod,
        /// Per-reference certifier for multiref.
        #[arg(long, default_value = "vanilla")]
        base: BaseMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for adversarial images within a W1 budget.
    Attack {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "uniform")]
        reference: String,
        #[arg(long, default_value = "nw")]
        strategy: CouplingStrategy,
        #[arg(long)]
        eps: f64,
        /// Step size; defaults to 0.1·eps/iters.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = AttackConfig::DEFAULT_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare radii across several references.
    Refs {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Explicit references; otherwise `k` are sampled from `styles`.
        #[arg(long = "reference")]
        references: Vec<String>,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value = "random,point,data")]
        styles: String,
        #[arg(long, default_value = "nw")]
        strategy: CouplingStrategy,
        #[arg(long, default_value = "vanilla")]
        base: BaseMethod,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact W1 distance between two CSV grids.
    W1 { a: PathBuf, b: PathBuf },
}

fn parse_shape(s: &str) -> std::result::Result<GridShape, String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or("expected RxC")?;
    let r = r.trim().parse().map_err(|_| "bad row count")?;
    let c = c.trim().parse().map_err(|_| "bad column count")?;
    GridShape::new(r, c).map_err(|e| e.to_string())
}

fn lp_options() -> Result<LpOptions> {
    let mut lp = LpOptions::default();
    if let Ok(v) = std::env::var("FLOWCERT_LP_TOL") {
        lp.tol = v
            .parse()
            .ok()
            .filter(|t: &f64| *t > 0.0)
            .ok_or_else(|| Error::InvalidArgument(format!("FLOWCERT_LP_TOL={v:?} is not a positive number")))?;
    }
    Ok(lp)
}

fn references(descs: &[String], shape: GridShape, data: &Dataset, seed: u64) -> Result<Vec<Reference>> {
    descs
        .iter()
        .enumerate()
        .map(|(k, s)| parse_reference(s, shape, Some(data), seed + k as u64))
        .collect()
}

fn require_shape(data: &Dataset) -> Result<GridShape> {
    data.shape().ok_or(Error::EmptyDataset)
}

fn run(cli: Cli) -> Result<()> {
    let lp = lp_options()?;
    let search = SearchConfig {
        lp,
        ..SearchConfig::default()
    };
    match cli.command {
        Command::Train {
            data,
            out,
            hidden,
            epochs,
            seed,
        } => {
            let (_, part) = data.load()?;
            let hidden = hidden
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad width {s:?}"))))
                .collect::<Result<Vec<usize>>>()?;
            let cfg = TrainConfig {
                hidden,
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let (_, summary) = cmd_train(&part, &cfg, &out)?;
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
        }
        Command::Flows {
            data,
            reference,
            strategy,
            seed,
            out,
        } => {
            let (all, part) = data.load()?;
            let r = parse_reference(&reference, require_shape(&all)?, Some(&all), seed)?;
            let summary = cmd_flows(&part, &r, strategy, data.start, &out)?;
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
        }
        Command::Certify {
            data,
            model,
            references: descs,
            strategy,
            method,
            base,
            seed,
            out,
        } => {
            let net = load_model(&model)?;
            let (all, part) = data.load()?;
            let refs = references(&descs, net.shape(), &all, seed)?;
            let params = CertifyParams {
                method,
                base,
                strategy,
                search,
                seed,
            };
            let summary = cmd_certify(&net, &part, data.start, &refs, &params, &out)?;
            for (m, stats) in &summary.by_method {
                println!("{m}: n={} mean={:.6} median={:.6}", stats.count, stats.mean, stats.median);
            }
        }
        Command::Attack {
            data,
            model,
            reference,
            strategy,
            eps,
            alpha,
            iters,
            seed,
            out,
        } => {
            let net = load_model(&model)?;
            let (all, part) = data.load()?;
            let r = parse_reference(&reference, net.shape(), Some(&all), seed)?;
            let mut cfg = AttackConfig::new(eps);
            cfg.max_iters = iters;
            cfg.step_size = alpha.unwrap_or_else(|| AttackConfig::default_step(eps, iters));
            cfg.strategy = strategy;
            cfg.lp = lp;
            let summary = cmd_attack(&net, &part, data.start, &r, &cfg, &out)?;
            println!("success rate {:.4} over {} images", summary.success_rate, summary.records.len());
        }
        Command::Refs {
            data,
            model,
            references: descs,
            k,
            styles,
            strategy,
            base,
            seed,
            out,
        } => {
            let net = load_model(&model)?;
            let (all, part) = data.load()?;
            let refs = if descs.is_empty() {
                let styles = styles.split(',').map(|s| s.trim().parse()).collect::<Result<Vec<RefStyle>>>()?;
                sample_references(net.shape(), k, &styles, Some(&all), seed)?
            } else {
                references(&descs, net.shape(), &all, seed)?
            };
            let summary = cmd_refs(&net, &part, data.start, &refs, base, strategy, &search, &out)?;
            for (id, stats) in summary.references.iter().zip(&summary.per_reference) {
                println!("{id}: mean={:.6} std={:.6}", stats.mean, stats.std);
            }
            println!("max: mean={:.6} std={:.6}", summary.max_curve.mean, summary.max_curve.std);
        }
        Command::W1 { a, b } => {
            let d = cmd_w1(&read_grid_csv(&a)?, &read_grid_csv(&b)?)?;
            println!("{d}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
