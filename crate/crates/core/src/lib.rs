//! Revisit-aware popularity dynamics.
//!
//! The crate models the popularity of an online object as a superposition of
//! independent SIR cascades ("shocks"), where every infected individual keeps
//! visiting the object at a Poisson rate. It provides:
//!
//! * [`series`]: popularity series and event-log ingestion, with the split of
//!   accesses into audience (first visits) and revisits.
//! * [`characterize`]: revisit/audience statistics over event logs.
//! * [`model`]: forward simulation of the multi-shock model.
//! * [`peaks`]: CWT ridge-line peak detection used to propose shock starts.
//! * [`mdl`]: description-length scoring used to choose the number of shocks.
//! * [`fit`]: Levenberg-Marquardt fitting and incremental shock selection.
//! * [`forecast`]: exponential-smoothing baselines and the forecasting protocol.
//! * [`synthetic`]: noisy fixture generation from a known model.

pub mod characterize;
pub mod error;
pub mod fit;
pub mod forecast;
pub mod mdl;
pub mod model;
pub mod peaks;
pub mod series;
pub mod synthetic;

pub use error::{Error, Result};
pub use fit::{fit_phoenix_r, lm_fit, FitConfig, FitResult};
pub use model::{simulate, simulate_shock, PeriodParams, PhoenixRModel, ShockParams};
pub use peaks::{find_peaks, ShockCandidateList};
pub use series::{EventRecord, PopularitySeries};
