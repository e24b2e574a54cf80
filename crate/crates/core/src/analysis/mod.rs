//! Closed-form formulas, bounds, and the union-area samples they rely on.

pub mod area;
pub mod formulas;

pub use area::{sample_alphas, union_area, AreaSamples, DiskArrangement};
pub use formulas::{
    noncoop_asymptotic, noncoop_asymptotic_mixture, noncoop_exact, noncoop_exact_mixture,
    noncoop_slope_diagnostic, peak_throughput_bounds, spatial_slope, spatial_upper_bound,
    temporal_lower_bound, threshold_bounds, zeta, AsymptoticMode, FormulaValue, NoncoopExact,
    PeakBounds, ThresholdBounds,
};
