//! Reliability mathematics: pessimistic distance, ε-sublevel sets, Rademacher
//! averages, the complexity constants N_F and N_H, closed-form bounds on the
//! error of compromise decisions, and the statistics used to compare them with
//! macro-replication experiments.

mod bounds;
mod distance;
mod rademacher;
mod stats;
mod uniform;

pub use bounds::{
    constant_nf, constant_nh, sublevel_gap_bound, exact_compromise_tail, theoretical_bounds, BoundConstants, BoundFlavor,
    BoundInputs, BoundRecord,
};
pub use distance::{epsilon_sublevel_set, pessimistic_distance, PointSet, Provenance};
pub use rademacher::{
    massart_bound, rademacher_finite, rademacher_function_class, FunctionClassEstimate, RademacherEstimate,
    RademacherMode,
};
pub use stats::{
    empirical_delta_stats, fit_rate, mean_variance_objective, non_dominated, summarize, RateFit, Summary,
};
pub use uniform::{deviation_profile, DeviationProfile};
