//! Monte Carlo fault-injection runs and failure-rate sweeps.

use std::fmt::Write as _;

use crate::data::Dataset;
use crate::embed::{distribute, gather_embedded, plan_embedding, PlacementMap};
use crate::error::{Error, Result};
use crate::ftol::{duplicate_msb, Activation, CompiledFtLayer, FtConfig, FtLayer, StreamBase};
use crate::harness::model::Model;
use crate::prune::argmax;
use crate::quant::{quantize, QuantConfig};
use crate::xbar::{map_layer, CrossbarLayer, FaultModel};

/// Default failure-rate grid, 0.01% to 0.2%.
pub const DEFAULT_RATES: [f64; 9] = [
    0.0001, 0.00025, 0.0005, 0.00075, 0.001, 0.00125, 0.0015, 0.00175, 0.002,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// A single MSB copy.
    NoVoting,
    /// `T` side-by-side MSB copies with median voting.
    Voting,
    /// Voting with copies 2..T stored in pruned columns.
    VotingEmbedded,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::NoVoting => "no_voting",
            Method::Voting => "voting",
            Method::VotingEmbedded => "voting_embedded",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_voting" => Ok(Method::NoVoting),
            "voting" => Ok(Method::Voting),
            "voting_embedded" => Ok(Method::VotingEmbedded),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

/// Hardware and redundancy settings shared by every trial. The fault rate
/// and seed inside `ft.fault` are overridden per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub bits: u32,
    pub ft: FtConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            bits: 8,
            ft: FtConfig::default(),
        }
    }
}

enum Storage {
    Duplicated,
    Embedded {
        map: PlacementMap,
        host: CrossbarLayer,
    },
}

struct PreparedLayer {
    xbar: CrossbarLayer,
    storage: Storage,
    bias: Vec<f64>,
    activation: Activation,
    pruned: Vec<usize>,
}

/// Fault-free crossbar mapping of a model for one method.
pub struct Prepared {
    layers: Vec<PreparedLayer>,
    ft: FtConfig,
}

impl Prepared {
    /// Quantizes and maps every layer. For [`Method::VotingEmbedded`], layers
    /// with pruned columns must have the capacity for all copies; layers
    /// without pruned columns keep side-by-side copies.
    pub fn new(model: &Model, method: Method, sim: &SimConfig) -> Result<Self> {
        sim.ft.validate()?;
        let qcfg = QuantConfig::new(sim.bits)?;
        let ft = FtConfig {
            candidates: match method {
                Method::NoVoting => 1,
                _ => sim.ft.candidates,
            },
            ..sim.ft
        };
        let layers = model
            .layers
            .iter()
            .map(|l| {
                let xbar = map_layer(&quantize(&l.weight, qcfg)?, ft.flip);
                let storage = if method == Method::VotingEmbedded && !l.pruned.is_empty() {
                    let clean = duplicate_msb(
                        &xbar,
                        &FtConfig {
                            fault: FaultModel::fault_free(),
                            ..ft
                        },
                        StreamBase::default(),
                    )?;
                    let map = plan_embedding(&xbar, &clean.duplicates, &l.pruned)?;
                    let host = distribute(&xbar, &clean.duplicates, &map)?;
                    Storage::Embedded { map, host }
                } else {
                    Storage::Duplicated
                };
                Ok(PreparedLayer {
                    xbar,
                    storage,
                    bias: l.bias.clone(),
                    activation: l.activation,
                    pruned: l.pruned.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, ft })
    }

    /// Fault-injected layers of one trial.
    pub fn trial_layers(&self, fault: &FaultModel, trial: u32) -> Result<Vec<FtLayer>> {
        let cfg = FtConfig {
            fault: *fault,
            ..self.ft
        };
        self.layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                let streams = StreamBase {
                    trial,
                    layer: k as u16,
                };
                match &l.storage {
                    Storage::Duplicated => duplicate_msb(&l.xbar, &cfg, streams),
                    Storage::Embedded { map, host } => {
                        let mut host = host.clone();
                        host.inject_faults(fault, trial, k as u16);
                        let duplicates = gather_embedded(&host, map)?;
                        Ok(FtLayer {
                            base: host,
                            duplicates,
                        })
                    }
                }
            })
            .collect()
    }

    /// Test accuracy in percent for one trial.
    pub fn trial_accuracy(&self, data: &Dataset, fault: &FaultModel, trial: u32) -> Result<f64> {
        let compiled: Vec<CompiledFtLayer> = self
            .trial_layers(fault, trial)?
            .iter()
            .map(CompiledFtLayer::new)
            .collect();
        if data.is_empty() {
            return Err(Error::Dimension("empty dataset".into()));
        }
        let mut correct = 0usize;
        for (i, &label) in data.y.iter().enumerate() {
            let mut h = data.sample(i).to_vec();
            for (c, l) in compiled.iter().zip(&self.layers) {
                let mut y = c.infer(&h)?;
                for &j in &l.pruned {
                    y[j] = 0.0;
                }
                h = y
                    .iter()
                    .zip(&l.bias)
                    .map(|(v, b)| l.activation.apply(v + b))
                    .collect();
            }
            if argmax(&h) == label {
                correct += 1;
            }
        }
        Ok(100.0 * correct as f64 / data.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarlo {
    pub mean: f64,
    /// Unbiased sample variance; 0 for a single trial.
    pub variance: f64,
    /// Per-trial accuracies in trial order.
    pub accuracies: Vec<f64>,
}

pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Accuracy statistics over `trials` fault realisations. Trial `t` draws
/// its faults from streams keyed by `(seed, t)`.
pub fn monte_carlo(
    model: &Model,
    data: &Dataset,
    rate: f64,
    method: Method,
    trials: usize,
    seed: u64,
    sim: &SimConfig,
) -> Result<MonteCarlo> {
    let prepared = Prepared::new(model, method, sim)?;
    monte_carlo_prepared(&prepared, data, rate, trials, seed, sim.ft.fault.sa1_share)
}

fn monte_carlo_prepared(
    prepared: &Prepared,
    data: &Dataset,
    rate: f64,
    trials: usize,
    seed: u64,
    sa1_share: f64,
) -> Result<MonteCarlo> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let fault = FaultModel::new(rate, sa1_share, seed)?;
    let accuracies = (0..trials)
        .map(|t| prepared.trial_accuracy(data, &fault, t as u32))
        .collect::<Result<Vec<_>>>()?;
    let (mean, variance) = mean_variance(&accuracies);
    Ok(MonteCarlo {
        mean,
        variance,
        accuracies,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub sim: SimConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rates: DEFAULT_RATES.to_vec(),
            trials: 30,
            seed: 2024,
            methods: vec![Method::NoVoting, Method::Voting],
            sim: SimConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("rate {r} outside [0, 1]")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        QuantConfig::new(self.sim.bits)?;
        self.sim.ft.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub method: Method,
    pub acc_mean: f64,
    pub acc_var: f64,
    pub trials: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "rate,method,acc_mean,acc_var,trials,seed";

/// One row per (rate, method), rates outermost.
pub fn run_sweep(cfg: &SweepConfig, model: &Model, data: &Dataset) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let prepared = cfg
        .methods
        .iter()
        .map(|&m| Prepared::new(model, m, &cfg.sim).map(|p| (m, p)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(cfg.rates.len() * prepared.len());
    for &rate in &cfg.rates {
        for (method, p) in &prepared {
            let mc = monte_carlo_prepared(
                p,
                data,
                rate,
                cfg.trials,
                cfg.seed,
                cfg.sim.ft.fault.sa1_share,
            )?;
            rows.push(SweepRow {
                rate,
                method: *method,
                acc_mean: mc.mean,
                acc_var: mc.variance,
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.6},{},{:.6},{:.6},{},{}",
            r.rate, r.method, r.acc_mean, r.acc_var, r.trials, r.seed
        );
    }
    s
}

/// Largest swept rate at which a method stays within `max_drop` points of
/// `clean` accuracy, provided every smaller swept rate does too.
pub fn tolerated_rate(rows: &[SweepRow], method: Method, clean: f64, max_drop: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.method == method)
        .map(|r| (r.rate, r.acc_mean))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.iter()
        .take_while(|(_, acc)| clean - acc < max_drop)
        .last()
        .map(|&(rate, _)| rate)
}

/// Summary lines `metric,value`: clean accuracy, the tolerated rate of each
/// method at a 10-point drop, and their ratio.
pub fn summary_csv(rows: &[SweepRow], clean: f64) -> String {
    let mut s = String::from("metric,value\n");
    let _ = writeln!(s, "clean_accuracy,{clean:.6}");
    let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
    let base = tolerated_rate(rows, Method::NoVoting, clean, 10.0);
    let vote = tolerated_rate(rows, Method::Voting, clean, 10.0);
    let _ = writeln!(s, "tolerated_rate_no_voting,{}", fmt(base));
    let _ = writeln!(s, "tolerated_rate_voting,{}", fmt(vote));
    let ratio = match (vote, base) {
        (Some(v), Some(b)) if b > 0.0 => Some(v / b),
        _ => None,
    };
    let _ = writeln!(s, "tolerance_ratio,{}", fmt(ratio));
    s
}

/// Accuracy of the fault-free quantized network, in percent.
pub fn clean_accuracy(model: &Model, data: &Dataset, sim: &SimConfig) -> Result<f64> {
    let p = Prepared::new(model, Method::NoVoting, sim)?;
    p.trial_accuracy(data, &FaultModel::fault_free(), 0)
}
