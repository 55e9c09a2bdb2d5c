//! Run configuration read from flat `key = value` files.
//!
//! Every key is optional; missing keys keep their defaults.
//!
//! | key | meaning |
//! |---|---|
//! | `task.kind` | `teacher` or `clusters` |
//! | `task.dim`, `task.classes`, `task.seed` | input size, class count, data seed |
//! | `task.train`, `task.test` | samples (teacher) or samples per class (clusters) |
//! | `task.separation`, `task.noise` | cluster geometry |
//! | `prune.hidden` | comma-separated hidden widths |
//! | `prune.mu`, `prune.gate_lr`, `prune.weight_lr`, `prune.momentum`, `prune.gate_init` | trainer |
//! | `prune.batch_size`, `prune.epochs_joint`, `prune.epochs_finetune`, `prune.seed` | schedule |
//! | `quant.bits` | bit width `n` |
//! | `ft.candidates`, `ft.flip` | MSB copies `T`, flip policy |
//! | `fault.rate`, `fault.sa1_share` | single-point rate, SA1 fraction of faults |
//! | `sweep.rates`, `sweep.trials`, `sweep.seed`, `sweep.methods` | sweep grid |

use std::path::Path;

use crate::data::{ClusterTask, Split, TeacherTask};
use crate::error::{Error, Result};
use crate::harness::format::KeyValues;
use crate::harness::sweep::{Method, SimConfig, SweepConfig};
use crate::prune::PruneConfig;
use crate::xbar::FlipPolicy;

/// Environment variable that replaces the default sweep seed.
pub const SEED_ENV: &str = "RERAM_FT_SEED";

pub const KEYS: &[&str] = &[
    "task.kind",
    "task.dim",
    "task.classes",
    "task.seed",
    "task.train",
    "task.test",
    "task.separation",
    "task.noise",
    "prune.hidden",
    "prune.mu",
    "prune.gate_lr",
    "prune.weight_lr",
    "prune.momentum",
    "prune.gate_init",
    "prune.batch_size",
    "prune.epochs_joint",
    "prune.epochs_finetune",
    "prune.seed",
    "quant.bits",
    "ft.candidates",
    "ft.flip",
    "fault.rate",
    "fault.sa1_share",
    "sweep.rates",
    "sweep.trials",
    "sweep.seed",
    "sweep.methods",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Teacher(TeacherTask),
    Clusters(ClusterTask),
}

impl Default for Task {
    fn default() -> Self {
        Task::Teacher(TeacherTask::default())
    }
}

impl Task {
    pub fn generate(&self) -> Split {
        match self {
            Task::Teacher(t) => t.generate(),
            Task::Clusters(c) => c.generate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub task: Task,
    pub prune: PruneConfig,
    pub sweep: SweepConfig,
    /// Rate of a single `simulate` run.
    pub rate: f64,
}

macro_rules! set {
    ($kv:expr, $key:expr, $target:expr) => {
        if let Some(v) = $kv.get($key)? {
            $target = v;
        }
    };
}

impl RunConfig {
    /// Defaults, with the sweep seed taken from [`SEED_ENV`] when set.
    pub fn with_env() -> Result<Self> {
        let mut cfg = Self::default();
        if let Ok(s) = std::env::var(SEED_ENV) {
            cfg.sweep.seed = s
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("{SEED_ENV}={s}: {e}")))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::with_env()?;
        cfg.apply(&KeyValues::load(path)?)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.check_keys(KEYS)?;
        self.apply_task(kv)?;

        let p = &mut self.prune;
        set!(kv, "prune.mu", p.mu);
        set!(kv, "prune.gate_lr", p.gate_lr);
        set!(kv, "prune.weight_lr", p.weight_lr);
        set!(kv, "prune.momentum", p.momentum);
        set!(kv, "prune.gate_init", p.gate_init);
        set!(kv, "prune.batch_size", p.batch_size);
        set!(kv, "prune.epochs_joint", p.epochs_joint);
        set!(kv, "prune.epochs_finetune", p.epochs_finetune);
        set!(kv, "prune.seed", p.seed);
        if let Some(h) = kv.get_list("prune.hidden")? {
            p.hidden = h;
        }
        p.validate()?;

        let s = &mut self.sweep;
        set!(kv, "quant.bits", s.sim.bits);
        set!(kv, "ft.candidates", s.sim.ft.candidates);
        if let Some(f) = kv.get::<FlipPolicy>("ft.flip")? {
            s.sim.ft.flip = f;
        }
        set!(kv, "fault.sa1_share", s.sim.ft.fault.sa1_share);
        set!(kv, "fault.rate", self.rate);
        if let Some(r) = kv.get_list("sweep.rates")? {
            s.rates = r;
        }
        set!(kv, "sweep.trials", s.trials);
        set!(kv, "sweep.seed", s.seed);
        if let Some(m) = kv.get_list::<Method>("sweep.methods")? {
            s.methods = m;
        }
        s.validate()?;
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::Config(format!(
                "fault.rate {} outside [0, 1]",
                self.rate
            )));
        }
        Ok(())
    }

    fn apply_task(&mut self, kv: &KeyValues) -> Result<()> {
        match kv.get_str("task.kind") {
            None => {}
            Some("teacher") if matches!(self.task, Task::Teacher(_)) => {}
            Some("teacher") => self.task = Task::Teacher(TeacherTask::default()),
            Some("clusters") if matches!(self.task, Task::Clusters(_)) => {}
            Some("clusters") => self.task = Task::Clusters(ClusterTask::default()),
            Some(other) => return Err(Error::Config(format!("unknown task.kind '{other}'"))),
        }
        match &mut self.task {
            Task::Teacher(t) => {
                set!(kv, "task.dim", t.dim);
                set!(kv, "task.classes", t.classes);
                set!(kv, "task.seed", t.seed);
                set!(kv, "task.train", t.train);
                set!(kv, "task.test", t.test);
                if kv.get_str("task.separation").is_some() || kv.get_str("task.noise").is_some() {
                    return Err(Error::Config(
                        "separation/noise only apply to task.kind = clusters".into(),
                    ));
                }
            }
            Task::Clusters(c) => {
                set!(kv, "task.dim", c.dim);
                set!(kv, "task.classes", c.classes);
                set!(kv, "task.seed", c.seed);
                set!(kv, "task.train", c.train_per_class);
                set!(kv, "task.test", c.test_per_class);
                set!(kv, "task.separation", c.separation);
                set!(kv, "task.noise", c.noise);
            }
        }
        Ok(())
    }

    pub fn sim(&self) -> &SimConfig {
        &self.sweep.sim
    }
}
