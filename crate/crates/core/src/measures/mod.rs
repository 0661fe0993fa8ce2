//! Empirical and grid representations of measure paths, and the metrics on
//! them: Lévy `d_L`, Kolmogorov–Smirnov `d_KS`, bounded-Lipschitz `d_BL`,
//! and the path metric `d = sup_t d_L`.

mod cdf;
mod metrics;
mod path;

pub use cdf::{empirical_cdf_eval, quantile_init, Cdf, DiscreteCdf, EmpiricalCdf, GridSlice, PathSlice};
pub use metrics::{
    bounded_lipschitz_distance, bounded_lipschitz_with, ks_distance, levy_distance, levy_distance_with,
    BoundedLipschitz, LevyOptions,
};
pub use path::{
    ball_contains, path_distance, path_distance_with, EmpiricalPath, GridCdfPath, MeasurePath,
    MeasurePathDistance, PathInvariants, UniformGrid,
};
pub(crate) use path::{read_grid_table, write_grid_table};
