//! Certified evaluation of a model over a federated network whose clients
//! are drawn from a meta-distribution.
//!
//! Clients answer scalar loss queries ([`query::Client`]); the server turns
//! those answers into high-probability upper bounds on the mean loss and
//! the loss survival function of unseen target networks, either drawn from
//! the same meta-distribution ([`nonrobust`]) or from one shifted within an
//! f-divergence ball ([`fdiv`]) or a Wasserstein ball ([`wass`]).
//! [`sim`] builds synthetic worlds and [`oracle`] holds the independent
//! checks used by the test suite.

pub mod certificate;
pub mod error;
pub mod exec;
pub mod fdiv;
pub mod model;
pub mod nonrobust;
pub mod oracle;
pub mod query;
pub mod rng;
pub mod sim;
pub mod wass;

pub use certificate::{BoundKind, CdfCurve, CertStatus, CertifiedBound};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fdiv::{DivergenceName, DivergenceSpec};
pub use model::{Hypothesis, LossFn, Sample};
pub use query::{Client, QueryConfig, QueryValue, TransportCost};
pub use sim::{LocalDataset, MetaConfig};
