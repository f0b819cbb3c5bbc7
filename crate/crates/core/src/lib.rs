//! Individual Rényi differential privacy accounting: divergence primitives,
//! privacy filters, per-point ledgers and odometers, an adaptive query
//! engine, private gradient descent with individual filtering, and an exact
//! oracle for small discrete mechanisms.

pub mod dpgd;
pub mod error;
pub mod filter;
pub mod ledger;
pub mod noise;
pub mod oracle;
pub mod query;
pub mod rdp;

pub use error::{Error, Result};
pub use filter::{fixed_rate_equivalence, DpFilter, FilterDecision, RdpFilter};
pub use ledger::{AccountingMode, IndividualLedger, IndividualOdometers, OdometerState, PendingRound, RoundProposal};
pub use noise::{GaussianNoise, NoiseCheckpoint, NoiseSource, ZeroNoise};
pub use query::{QueryAnswer, QueryDataset, QuerySession, QuerySessionSnapshot};
pub use rdp::{
    best_dp_over_curve, default_orders, gaussian_individual_rdp, rdp_to_dp, renyi_divergence_discrete,
    symmetric_divergence, zcdp_budget_for_dp, DiscreteDistribution, Divergence, DpPoint, RdpCurve, RdpPoint,
    RenyiOrder,
};
