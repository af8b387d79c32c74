//! Multi-chip system simulation and parameter sweeps.

mod sweep;
mod system;

pub use sweep::{parse_sweep_spec, run_sweep, sweep, Experiment, SweepError, SweepSpec};
pub use system::{
    pipeline_topology, run_system, Channel, RunReport, Stimulus, SystemAttack, SystemError, SystemTopology,
};
