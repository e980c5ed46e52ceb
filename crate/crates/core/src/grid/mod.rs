//! Balanced distribution feeder with quasi-static power flow, aggregate
//! frequency, protection, and the attack scenarios driven by a compromised DG.

mod feeder;
mod frequency;
mod powerflow;
mod protection;
mod scenario;

pub use feeder::{Bus, Capacitor, FeederModel, Generator, Line, Load, LoadModel, Topology};
pub use frequency::{frequency_step, FrequencyModel};
pub use powerflow::{bus_demand, power_flow, Injections, PowerFlowOptions, PowerFlowSolution};
pub use protection::{protection_scan, GridEvent, ProtectionOutcome, ProtectionSettings, ProtectionState};
pub use scenario::{
    run_scenario, target_output, AttackProfile, GridSample, GridScenario, GridScenarioKind, GridScenarioResult,
    SourceLimits,
};
