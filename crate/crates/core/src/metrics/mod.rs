//! Probabilistic evaluation: ensemble CRPS, deterministic error metrics,
//! sensor-interpolation baselines, and uncertainty calibration.

pub mod calibration;
pub mod crps;
pub mod interp;

pub use calibration::{
    calibration_report, distance_to_nearest_sensor, pearson, spearman, CalibrationReport,
    DistanceBin, InstanceCalibration,
};
pub use crps::{crps_breakdown, crps_mc, crps_region, masked_mae, masked_mse, CrpsBreakdown};
pub use interp::{persistence_baseline, preinterp_nn, preinterp_rbf};
