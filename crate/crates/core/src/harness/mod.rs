//! Application driver, trace checkers, metrics, bounded exploration and seed
//! campaigns.

pub mod campaign;
pub mod checker;
pub mod driver;
pub mod explore;
pub mod metrics;
pub mod trace;

pub use campaign::{run_campaign, CampaignReport, CampaignSpec, RunSummary};
pub use checker::{check_liveness, check_safety, LivenessVerdict, SafetyVerdict, Violation, ViolationKind};
pub use driver::{run, AppConfig, Outcome, RunError, RunReport, Schedule};
pub use explore::{explore_all_initial, explore_bounded, ExploreReport};
pub use metrics::{measure, InvocationMetrics, MetricsReport};
pub use trace::{Record, Trace};
