//! Time-domain simulation of the harvester and its load.
//!
//! Two fidelity levels share one state layout for the harvester: the
//! behavioral engine attaches an ideal element or voltage source, the
//! switched engine the hysteretic converter. Both integrate with fixed-step
//! RK4 on a grid with a whole number of steps per drive period, and report
//! per-period averages from which windows, phasors and settle times are
//! derived.

mod behavioral;
mod calibrate;
mod config;
mod engine;
mod pno;
mod profile;
mod result;
mod switched;

pub use behavioral::{run_fixed_generator, simulate_behavioral, BehavioralLoad};
pub use calibrate::{calibrate_q, matched_step_settle, QCalibration, CALIBRATION_STEP_TIME};
pub use config::{Fidelity, SimConfig, BEHAVIORAL_DT, SWITCHED_DT};
pub use pno::{run_pno_2d, PnoConfig, PnoPoint, PnoResult};
pub use profile::{AccelProfile, Segment};
pub use result::{PeriodStats, SimResult, SwitchingStats, TraceRow, WindowStats};
pub use switched::simulate_switched;
