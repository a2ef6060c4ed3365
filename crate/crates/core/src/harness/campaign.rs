//! Seed campaigns: many independent runs of one system, each checked for
//! safety and liveness. Runs share nothing, so with the `parallel` feature
//! they are spread over a rayon pool.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coterie::{CoterieAssignment, ProcessId};
use crate::harness::checker::{check_liveness, check_safety, LivenessVerdict, SafetyVerdict};
use crate::harness::driver::{run, AppConfig, Outcome, RunError};
use crate::harness::metrics::{measure, MetricsReport};
use crate::harness::trace::Trace;
use crate::mutin::Gate;
use crate::simnet::{SimConfig, DEFAULT_EVENT_BUDGET};
use crate::system::{Mode, SystemSpec};

#[derive(Clone, Debug)]
pub struct CampaignSpec {
    pub mode: Mode,
    pub coterie: CoterieAssignment,
    pub seeds: Vec<u64>,
    pub max_delays: Vec<u64>,
    pub app: AppConfig,
    pub event_budget: u64,
    pub gate: Gate,
    /// Fixed initial configuration; drawn per seed when `None`.
    pub initially_in: Option<BTreeSet<ProcessId>>,
    pub keep_traces: bool,
}

impl CampaignSpec {
    pub fn new(mode: Mode, coterie: CoterieAssignment, seeds: u64, max_delays: Vec<u64>, app: AppConfig) -> Self {
        CampaignSpec {
            mode,
            coterie,
            seeds: (0..seeds).collect(),
            max_delays,
            app,
            event_budget: DEFAULT_EVENT_BUDGET,
            gate: Gate::Enforced,
            initially_in: None,
            keep_traces: false,
        }
    }

    fn jobs(&self) -> Vec<(u64, u64)> {
        self.seeds.iter().flat_map(|&s| self.max_delays.iter().map(move |&d| (s, d))).collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub seed: u64,
    pub max_delay: u64,
    pub initially_in: BTreeSet<ProcessId>,
    pub outcome: Outcome,
    pub events: u64,
    pub safety: SafetyVerdict,
    pub liveness: LivenessVerdict,
    pub metrics: MetricsReport,
    pub trace: Option<Trace>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.safety.is_ok() && self.liveness.is_ok()
    }
}

#[derive(Clone, Debug, Default)]
pub struct CampaignReport {
    pub runs: Vec<RunSummary>,
}

impl CampaignReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(|r| !r.passed())
    }

    pub fn all_passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// A uniformly sized, uniformly chosen initial InCS set within the mode's
/// bounds, derived from `seed` independently of the network's stream.
pub fn random_initial(mode: Mode, n: usize, seed: u64) -> BTreeSet<ProcessId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let (low, high) = mode.bounds(n);
    let size = rng.gen_range(low..=high.min(n));
    sample(&mut rng, n, size).into_iter().map(ProcessId::from_index).collect()
}

pub fn run_one(spec: &CampaignSpec, seed: u64, max_delay: u64) -> Result<RunSummary, RunError> {
    let n = spec.coterie.n();
    let initially_in = spec.initially_in.clone().unwrap_or_else(|| random_initial(spec.mode, n, seed));
    let mut system = SystemSpec::new(spec.mode, spec.coterie.clone(), initially_in.clone());
    system.gate = spec.gate;
    let sim = SimConfig::new(seed, max_delay).with_budget(spec.event_budget);
    let report = run(&system, sim, &spec.app)?;
    let safety = check_safety(&report.trace);
    let liveness = check_liveness(&report.trace, spec.app.cycles);
    let metrics = measure(&report.trace);
    Ok(RunSummary {
        seed,
        max_delay,
        initially_in,
        outcome: report.outcome,
        events: report.events,
        safety,
        liveness,
        metrics,
        trace: spec.keep_traces.then_some(report.trace),
    })
}

pub fn run_sequential(spec: &CampaignSpec) -> Result<CampaignReport, RunError> {
    let runs = spec.jobs().into_iter().map(|(s, d)| run_one(spec, s, d)).collect::<Result<_, _>>()?;
    Ok(CampaignReport { runs })
}

#[cfg(feature = "parallel")]
pub fn run_parallel(spec: &CampaignSpec) -> Result<CampaignReport, RunError> {
    use rayon::prelude::*;
    let runs = spec.jobs().into_par_iter().map(|(s, d)| run_one(spec, s, d)).collect::<Result<_, _>>()?;
    Ok(CampaignReport { runs })
}

/// Runs the campaign in parallel when the `parallel` feature is enabled.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignReport, RunError> {
    #[cfg(feature = "parallel")]
    {
        run_parallel(spec)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sequential(spec)
    }
}
