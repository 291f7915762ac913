//! Ensemble experiments over an `L` schedule.
//!
//! Every random quantity is keyed by `(seed, L, replicate)` through
//! [`CounterRng`], and replicate results are collected in index order, so
//! records do not depend on the number of worker threads.

mod config;
mod counting;
mod probes;
mod record;

use std::cell::Cell;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

pub use config::{
    BoxVariation, DosConfig, ExperimentConfig, GreenConfig, LocalizationConfig, MinamiConfig, ModelConfig,
    PartitionConfig, ScheduleConfig, SyntheticConfig, TestConfig,
};
pub use counting::{run_clt, run_lln, run_microscopic, run_minami_tail, run_partition_approximation};
pub use probes::{fit_exponential_decay, run_green_comparison_decay, run_localization_probe, DecayFit};
pub use record::{ExperimentRecord, LevelRecord, RunStatus, SampleTable, SeedManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Microscopic,
    Lln,
    Clt,
    Partition,
    Localization,
    Minami,
    GreenDecay,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Microscopic,
        Experiment::Lln,
        Experiment::Clt,
        Experiment::Partition,
        Experiment::Localization,
        Experiment::Minami,
        Experiment::GreenDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Microscopic => "microscopic",
            Experiment::Lln => "lln",
            Experiment::Clt => "clt",
            Experiment::Partition => "partition",
            Experiment::Localization => "localization",
            Experiment::Minami => "minami",
            Experiment::GreenDecay => "green-decay",
        }
    }

    pub fn names() -> String {
        Self::ALL.map(|e| e.name()).join(", ")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`; valid names: {}", Self::names())))
    }
}

/// Directory of per-stage JSON files that makes runs resumable.
#[derive(Clone, Debug)]
pub struct StageStore {
    dir: PathBuf,
}

impl StageStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }

    pub fn load<T: DeserializeOwned>(&self, name: &str) -> Result<Option<T>> {
        match std::fs::read(self.path(name)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Write through a temporary file so a crash never leaves half a stage.
    pub fn save<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let tmp = self.dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec(value)?)?;
        std::fs::rename(tmp, self.path(name))?;
        Ok(())
    }

    pub fn clear(&self) -> Result<()> {
        for entry in std::fs::read_dir(&self.dir)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "json") {
                std::fs::remove_file(p)?;
            }
        }
        Ok(())
    }
}

/// How a run interacts with the outside world; numerics never depend on it.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub stages: Option<StageStore>,
    /// Stop after computing this many new stages (simulated interruption).
    pub stop_after_stages: Option<usize>,
}

/// Runs stages through the store, honouring the stop budget.
pub(crate) struct Stager<'a> {
    opts: &'a RunOptions,
    computed: Cell<usize>,
}

impl<'a> Stager<'a> {
    pub(crate) fn new(opts: &'a RunOptions) -> Self {
        Self {
            opts,
            computed: Cell::new(0),
        }
    }

    /// Cached value, freshly computed value, or `None` once the budget is spent.
    pub(crate) fn stage<T, F>(&self, name: &str, compute: F) -> Result<Option<T>>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        if let Some(store) = &self.opts.stages {
            if let Some(v) = store.load(name)? {
                log::info!("stage {name}: loaded");
                return Ok(Some(v));
            }
        }
        if self.opts.stop_after_stages.is_some_and(|b| self.computed.get() >= b) {
            return Ok(None);
        }
        let v = compute()?;
        if let Some(store) = &self.opts.stages {
            store.save(name, &v)?;
        }
        self.computed.set(self.computed.get() + 1);
        log::info!("stage {name}: computed");
        Ok(Some(v))
    }
}

/// Seed of replicate `r` at half-width `L`.
pub fn replicate_seed(master: u64, half_width: u64, r: usize) -> u64 {
    CounterRng::new(master).derive(half_width).derive(r as u64).key()
}

/// Seed of the DOS ensemble, independent of all replicate seeds.
pub fn dos_seed(master: u64) -> u64 {
    CounterRng::new(master).derive_label("dos").key()
}

/// Run `exp` with the given options.
pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut rec = match exp {
        Experiment::Microscopic => counting::microscopic(cfg, opts),
        Experiment::Lln => counting::lln(cfg, opts),
        Experiment::Clt => counting::clt(cfg, opts),
        Experiment::Partition => counting::partition(cfg, opts),
        Experiment::Minami => counting::minami(cfg, opts),
        Experiment::Localization => probes::localization(cfg, opts),
        Experiment::GreenDecay => probes::green_decay(cfg, opts),
    }?;
    rec.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{}\"", e.name()));
        }
        let err = "bogus".parse::<Experiment>().unwrap_err().to_string();
        assert!(err.contains("green-decay"));
    }

    #[test]
    fn stage_budget_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            stages: Some(StageStore::open(dir.path()).unwrap()),
            stop_after_stages: Some(1),
        };
        let s = Stager::new(&opts);
        assert_eq!(s.stage("a", || Ok(1u32)).unwrap(), Some(1));
        assert_eq!(s.stage("b", || Ok(2u32)).unwrap(), None);
        let again = RunOptions {
            stop_after_stages: Some(0),
            ..opts.clone()
        };
        let s = Stager::new(&again);
        assert_eq!(s.stage("a", || -> Result<u32> { panic!("cached") }).unwrap(), Some(1));
        opts.stages.as_ref().unwrap().clear().unwrap();
        assert_eq!(opts.stages.unwrap().load::<u32>("a").unwrap(), None);
    }

    #[test]
    fn seeds_are_distinct() {
        let a = replicate_seed(1, 100, 0);
        assert_ne!(a, replicate_seed(1, 100, 1));
        assert_ne!(a, replicate_seed(1, 101, 0));
        assert_ne!(a, replicate_seed(2, 100, 0));
        assert_ne!(a, dos_seed(1));
    }
}
