//! Joint optimization of paging and registration for a mobile on a Markov
//! mobility model.
//!
//! The network pages the mobile when a call arrives and the mobile may
//! register on its own. Policies are stored as reporting-centred look-up
//! tables (RCLs) indexed by the last report state and the elapsed time.

pub mod belief;
pub mod config;
pub mod cost;
pub mod error;
pub mod iterate;
pub mod major;
pub mod model;
pub mod paging;
pub mod rclfile;
pub mod regdp;

pub use error::{Error, Result};
