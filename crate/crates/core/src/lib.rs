//! Anchor-assisted cascaded channel estimation for IRS-aided multiuser MIMO.
//!
//! Two anchor nodes placed next to the reflecting surface let the base
//! station learn the BS-IRS channel (up to harmless per-element signs) on a
//! slow timescale, so that per-user training only has to resolve the short
//! IRS-user links.
//!
//! - [`channel_model`]: geometry, path loss, fading and received-signal synthesis.
//! - [`pilot_design`]: DFT training sequences and reflection schedules.
//! - [`scheme1`], [`scheme2`]: the two estimators.
//! - [`overhead`]: closed-form pilot and feedback accounting.
//! - [`sim_harness`]: seeded, parallel Monte-Carlo NMSE sweeps.

pub mod channel_model;
pub mod error;
pub mod linalg;
pub mod overhead;
pub mod pilot_design;
pub mod scheme1;
pub mod scheme2;
pub mod sim_harness;

pub use channel_model::{
    draw_scenario, receive_uplink, ChannelRealization, Node, ReflectionSchedule, ScenarioConfig, UplinkChannel,
};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use overhead::{crossover_table, overhead, OverheadGrid, OverheadReport, Scheme};
pub use pilot_design::{PreparedTraining, TrainingDesign, TrainingStep};
pub use scheme1::{run_scheme1, CascadedEstimate, Phase1State, Scheme1Plan};
pub use scheme2::{run_scheme2, Scheme2Plan, UserFeedback};
pub use sim_harness::{
    emit_csv, nmse, read_csv, EstimatorPlan, run_experiment, run_experiment_with_threads, ExperimentBatch, ExperimentSpec,
    NmseReport, NmseRow, SweepVariable,
};
