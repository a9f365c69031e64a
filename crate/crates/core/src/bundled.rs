//! The bundled 11-state, 2-action example model and its reference sweep.
//!
//! States 1–7 are taboo, 8 and 10 are goals, 9 and 11 are forbidden. The
//! evaluation policy is uniform and the safety level is `p = 0.5`.

use crate::io::{parse_model_str, LoadedModel, Strictness};
use crate::mdp::{MdpModel, PolicyTable};
use crate::transport::GroundMetric;

/// Canonical text of the bundled model file.
pub const ECC_MODEL_TEXT: &str = include_str!("../models/ecc-mdp.json");

/// Radii of the reference sweep.
pub const REFERENCE_DELTAS: [f64; 7] = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3];

/// Reference `J(1..=7)` for each radius in [`REFERENCE_DELTAS`], four decimals.
pub const REFERENCE_TABLE: [[f64; 7]; 7] = [
    [0.1734, 0.0800, 0.2669, 0.1000, 0.0500, 0.1837, 0.3500],
    [0.2290, 0.1301, 0.3100, 0.1345, 0.1017, 0.2267, 0.3782],
    [0.2844, 0.1826, 0.3522, 0.1703, 0.1555, 0.2703, 0.4068],
    [0.3388, 0.2371, 0.3935, 0.2077, 0.2115, 0.3147, 0.4359],
    [0.3917, 0.2933, 0.4338, 0.2466, 0.2698, 0.3599, 0.4655],
    [0.4426, 0.3509, 0.4732, 0.2870, 0.3304, 0.4059, 0.4957],
    [0.4912, 0.4095, 0.5116, 0.3289, 0.3934, 0.4526, 0.5263],
];

/// Safety level used with the bundled model.
pub const ECC_P: f64 = 0.5;

pub fn ecc_loaded() -> LoadedModel {
    parse_model_str(ECC_MODEL_TEXT, Strictness::Strict).expect("bundled model is valid")
}

pub fn ecc_model() -> MdpModel {
    ecc_loaded().model
}

pub fn ecc_policy() -> PolicyTable {
    ecc_loaded().policy
}

pub fn ecc_metric() -> GroundMetric {
    ecc_loaded().metric
}
