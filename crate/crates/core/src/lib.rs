//! Statistical-CSI downlink precoder design for massive MIMO LEO satellite
//! links.
//!
//! Three designs share one channel model:
//!
//! * [`mm`]: minorization-maximization on the Monte-Carlo ergodic rate,
//! * [`wmmse`]: weighted MMSE on the Jensen upper bound,
//! * [`lmo`]: Lagrange-multiplier optimization over the virtual uplink with
//!   closed-form precoder recovery.
//!
//! [`rates`] evaluates any precoder and provides the ASLNR and LoS-only
//! baselines; [`scenario`] runs seeded batch experiments and writes CSVs.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod lmo;
pub mod mm;
pub mod precoder;
pub mod rates;
pub mod receiver;
pub mod scenario;
pub mod units;
pub mod wmmse;

pub use channel::{sample_channel, ChannelBatch, DesignCsi, SigmaModel, UpaGeometry, UtChannelStats};
pub use error::{Error, Result};
pub use lmo::{Multipliers, RecoveredPrecoder};
pub use precoder::{PrecoderMatrix, SolveOptions, SolveTrace};
pub use rates::RateReport;
