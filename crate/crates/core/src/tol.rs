//! Numerical tolerances shared by every module. Tests read these constants
//! instead of repeating literals.

/// Allowed deviation of a simplex vector's sum from one.
pub const SIMPLEX_SUM: f64 = 1e-12;
/// Allowed deviation of a pattern norm from one.
pub const UNIT_NORM: f64 = 1e-12;
/// Minimum distance between two distinct patterns.
pub const DISTINCT_PATTERNS: f64 = 1e-9;
/// Entrywise symmetry tolerance for [`crate::SymMatrix`].
pub const SYMMETRY: f64 = 1e-10;
/// Tolerance on `|u| = 1` for direction arguments.
pub const UNIT_DIRECTION: f64 = 1e-10;
/// Rank tolerance for affine independence of face vertices.
pub const AFFINE_RANK: f64 = 1e-10;
/// KKT residual accepted from the hull projection.
pub const KKT: f64 = 1e-10;
/// Membership tolerance for "point lies on the face".
pub const ON_FACE: f64 = 1e-9;

/// Newton refinement target.
pub const NEWTON_TARGET: f64 = 1e-12;
/// Residual gate for accepting a fixed-point record.
pub const ACCEPT_RESIDUAL: f64 = 1e-10;
/// Pivot magnitude below which `J - I` counts as singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;
/// Records closer than this are merged.
pub const DEDUP_RADIUS: f64 = 1e-6;
/// Half-width of the marginal band around spectral radius one.
pub const MARGINAL_BAND: f64 = 1e-8;

/// Distance from `1/n` inside which `h_{n,k}` is evaluated by its series.
pub const SERIES_RADIUS: f64 = 1e-5;
/// Exclusion window around bifurcation values of beta.
pub const BIFURCATION_WINDOW: f64 = 1e-9;
/// Margin from one required when cross-checking catalog stability labels.
pub const CATALOG_STABILITY_MARGIN: f64 = 1e-6;

/// Default CIPS acceptance threshold.
pub const CIPS_THRESHOLD: f64 = 1e-10;
