//! Fixed points of modern continuous Hopfield networks `f(x) = W S_beta(W^T x)`.

pub mod cips;
pub mod error;
pub mod experiments;
pub mod fixpoint;
pub mod geometry;
pub mod map;
pub mod seed;
pub mod simplex;
pub mod tol;

pub use error::{Error, Result};
pub use map::{
    attention_weights, hopfield_map, jacobian, second_moment_quadratic, softmax, spectral_radius, Beta,
    PatternSet, SimplexVector, SymMatrix,
};
pub use simplex::{
    classify_softmax_catalog, enumerate_softmax_fixed_points, h_nk, m_nk, solve_h_equals_beta, CatalogPoint,
    LineRoot, LineSegmentJ, RootKind, SoftmaxCatalog, Stability, ThresholdTable,
};
pub use geometry::{
    barycenter, complement_basis, mixture_distance, project_to_hull, sample_face_point, sample_thickened_facet,
    ComplementBasis, FaceSpec, FacetChoice, HullProjection, ThickenedRegion, ThickenedSample,
};
pub use cips::{cips_check, delta_refine, estimate_delta, margin, CipsVerdict, MarginEstimate};
pub use seed::derive_seed;
pub use fixpoint::{
    beta_threshold_search, classify, contraction_bound, find_fixed_points, instability_certificate, iterate_map,
    miranda_verify_isolated, miranda_verify_thickened, refine_newton, sufficient_beta_facets, sufficient_beta_lemma3,
    Classification, FixedPointRecord, InstabilityCertificate, MirandaReport, SearchStrategy, Trajectory,
};
pub use experiments::{
    beta_search, cips_table_row, dynamics, random_faces, summarize, BetaSearchConfig, BetaSearchRow, CipsTableConfig,
    CipsTableRow, DistortedBasis, Spacing, DynamicsConfig, FixpointSummary, OrbitRecord,
};
