use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use reram_ft::embed::{capacity_check, distribute, plan_embedding, CapacityReport};
use reram_ft::ftol::{duplicate_msb, FtConfig, StreamBase};
use reram_ft::harness::config::{RunConfig, SEED_ENV};
use reram_ft::harness::format::{read_tensor, KeyValues};
use reram_ft::harness::model::{
    load_quantized, load_split, save_crossbar, save_quantized, save_split, Model,
};
use reram_ft::harness::monte_carlo;
use reram_ft::harness::sweep::{clean_accuracy, run_sweep, summary_csv, to_csv, Method};
use reram_ft::prune::train_prune;
use reram_ft::quant::{distribution_stats, quantize, QuantConfig};
use reram_ft::xbar::{map_layer, FaultModel, FlipPolicy};
use reram_ft::Error;

#[derive(Parser)]
#[command(
    name = "reram-ft",
    version,
    about = "Fault-tolerant crossbar inference toolkit"
)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a gated network with the pruning penalty and save it.
    Prune {
        /// Output directory; receives `model/`, `data/` and `report.txt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize a saved model into sign and bit-plane files.
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bits: Option<u32>,
    },
    /// Map quantized layers onto crossbar arrays, or check capacity only.
    Map {
        /// Directory written by `quantize`.
        #[arg(long, required_unless_present = "sparsity")]
        quantized: Option<PathBuf>,
        #[arg(long, required_unless_present = "sparsity")]
        out: Option<PathBuf>,
        /// Embed MSB copies into pruned columns.
        #[arg(long)]
        embed: bool,
        /// Capacity check only, for this column sparsity.
        #[arg(long, conflicts_with = "quantized")]
        sparsity: Option<f64>,
        /// Column count for the capacity check.
        #[arg(long, default_value_t = 100)]
        columns: usize,
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        flip: Option<FlipPolicy>,
    },
    /// Weight distribution statistics, one line per layer or tensor.
    Stats {
        #[arg(long, required_unless_present = "tensor")]
        model: Option<PathBuf>,
        #[arg(long, num_args = 1.., conflicts_with = "model")]
        tensor: Vec<PathBuf>,
    },
    /// Monte Carlo accuracy at one failure rate.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, default_value = "voting")]
        method: Method,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Failure-rate sweep written as CSV, plus `<out>.summary.csv`.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::with_env().with_context(|| format!("reading {SEED_ENV}"))?,
    };
    match cli.cmd {
        Cmd::Prune { out } => prune(&cfg, &out),
        Cmd::Quantize { model, out, bits } => {
            let bits = bits.unwrap_or(cfg.sweep.sim.bits);
            let qcfg = QuantConfig::new(bits)?;
            let model = Model::load(&model)?;
            let layers = model
                .layers
                .iter()
                .map(|l| Ok((quantize(&l.weight, qcfg)?, l.pruned.clone())))
                .collect::<reram_ft::Result<Vec<_>>>()?;
            save_quantized(&out, &layers)?;
            for (k, (q, _)) in layers.iter().enumerate() {
                println!("layer {k}: step {:.6e}, {} planes", q.step(), q.bits());
            }
            Ok(())
        }
        Cmd::Map {
            quantized,
            out,
            embed,
            sparsity,
            columns,
            bits,
            candidates,
            flip,
        } => {
            let ft = FtConfig {
                candidates: candidates.unwrap_or(cfg.sweep.sim.ft.candidates),
                flip: flip.unwrap_or(cfg.sweep.sim.ft.flip),
                fault: FaultModel::fault_free(),
            };
            ft.validate()?;
            if let Some(s) = sparsity {
                let bits = bits.unwrap_or(cfg.sweep.sim.bits) as usize;
                return check_capacity(bits, ft.candidates, s, columns);
            }
            let (Some(quantized), Some(out)) = (quantized, out) else {
                bail!("map needs --quantized and --out");
            };
            map(&quantized, &out, embed, &ft)
        }
        Cmd::Stats { model, tensor } => {
            let mats = match model {
                Some(dir) => Model::load(&dir)?
                    .layers
                    .into_iter()
                    .enumerate()
                    .map(|(k, l)| (format!("layer_{k}"), l.weight))
                    .collect::<Vec<_>>(),
                None => tensor
                    .iter()
                    .map(|p| Ok((p.display().to_string(), read_tensor(p)?)))
                    .collect::<reram_ft::Result<Vec<_>>>()?,
            };
            for (name, w) in mats {
                let s = distribution_stats(&w)?;
                println!(
                    "{name} max_abs {:.6} large_count {} total {}",
                    s.max_abs, s.large_count, s.total_count
                );
            }
            Ok(())
        }
        Cmd::Simulate {
            model,
            data,
            rate,
            method,
            trials,
            seed,
        } => {
            let model = Model::load(&model)?;
            let test = load_split(&data)?.test;
            let rate = rate.unwrap_or(cfg.rate);
            let trials = trials.unwrap_or(cfg.sweep.trials);
            let seed = seed.unwrap_or(cfg.sweep.seed);
            let mc = monte_carlo(&model, &test, rate, method, trials, seed, &cfg.sweep.sim)?;
            println!("rate {rate:.6} method {method} acc_mean {:.6} acc_var {:.6} trials {trials} seed {seed}", mc.mean, mc.variance);
            Ok(())
        }
        Cmd::Sweep {
            model,
            data,
            out,
            trials,
            seed,
            methods,
        } => {
            if let Some(t) = trials {
                cfg.sweep.trials = t;
            }
            if let Some(s) = seed {
                cfg.sweep.seed = s;
            }
            if let Some(m) = methods {
                cfg.sweep.methods = m;
            }
            let model = Model::load(&model)?;
            let test = load_split(&data)?.test;
            let rows = run_sweep(&cfg.sweep, &model, &test)?;
            write(&out, &to_csv(&rows))?;
            let clean = clean_accuracy(&model, &test, &cfg.sweep.sim)?;
            let summary = summary_path(&out);
            write(&summary, &summary_csv(&rows, clean))?;
            println!(
                "wrote {} rows to {} and {}",
                rows.len(),
                out.display(),
                summary.display()
            );
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn summary_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.summary.csv"))
}

fn prune(cfg: &RunConfig, out: &Path) -> Result<()> {
    let split = cfg.task.generate();
    let (net, report) = train_prune(&cfg.prune, &split)?;
    let model = Model::from_gated(&net);
    model.save(&out.join("model"))?;
    save_split(&split, &out.join("data"))?;

    let mut kv = KeyValues::default();
    kv.set(
        "baseline_accuracy",
        format!("{:.6}", 100.0 * report.baseline_accuracy),
    );
    kv.set(
        "pruned_accuracy",
        format!("{:.6}", 100.0 * report.pruned_accuracy),
    );
    kv.set("accuracy_drop", format!("{:.6}", report.accuracy_drop()));
    kv.set(
        "overall_sparsity",
        format!("{:.6}", report.overall_sparsity),
    );
    for (k, s) in report.sparsity.iter().enumerate() {
        kv.set(&format!("layer.{k}.sparsity"), format!("{s:.6}"));
    }
    kv.set("meets_targets", report.meets_targets(&cfg.prune));
    write(&out.join("report.txt"), &kv.to_string())?;
    print!("{kv}");
    Ok(())
}

fn check_capacity(bits: usize, candidates: usize, sparsity: f64, cols: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&sparsity) {
        bail!("sparsity {sparsity} outside [0, 1]");
    }
    let r = capacity_check(bits, candidates, sparsity, cols);
    println!(
        "n {bits} T {candidates} sparsity {sparsity} columns {cols}: free {} needed {} deficit {}",
        r.free_slots, r.needed, r.deficit
    );
    if !r.feasible {
        return Err(Error::Capacity(r).into());
    }
    Ok(())
}

fn map(quantized: &Path, out: &Path, embed: bool, ft: &FtConfig) -> Result<()> {
    let layers = load_quantized(quantized)?;
    let mut mapped = Vec::with_capacity(layers.len());
    for (k, (q, pruned)) in layers.iter().enumerate() {
        let xbar = map_layer(q, ft.flip);
        if !embed || pruned.is_empty() {
            if embed {
                println!("layer {k}: no pruned columns, copies stay side by side");
            }
            mapped.push((xbar, None));
            continue;
        }
        let clean = duplicate_msb(&xbar, ft, StreamBase::default())?;
        let plan = plan_embedding(&xbar, &clean.duplicates, pruned)
            .with_context(|| format!("embedding layer {k}"))?;
        let host = distribute(&xbar, &clean.duplicates, &plan)?;
        let report =
            CapacityReport::from_counts(q.bits() as usize, ft.candidates, pruned.len(), q.dims().1);
        println!(
            "layer {k}: embedded {} copy columns, free {} needed {}",
            plan.assignments.len(),
            report.free_slots,
            report.needed
        );
        mapped.push((host, Some(plan)));
    }
    save_crossbar(out, &mapped)?;
    Ok(())
}
