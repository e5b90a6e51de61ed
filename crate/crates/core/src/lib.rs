//! Cache soft-error vulnerability analysis for storage controllers.
//!
//! The crate simulates single-event upsets in a two-level controller cache,
//! follows each one until it is corrected, masked, or turns into a reboot
//! or lost data, and lifts the results to system downtime and data loss.

pub mod cache;
pub mod campaign;
pub mod config;
pub mod ecc;
pub mod error;
pub mod injection;
pub mod metrics;
pub mod report;
pub mod seed;
pub mod ser_logic;
pub mod system;
pub mod tracker;
pub mod workload;

pub use campaign::{Campaign, CampaignReport};
pub use config::RunConfig;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ecc.md")]
    mod ecc {}
    #[doc = include_str!("../../../book/src/faults.md")]
    mod faults {}
    #[doc = include_str!("../../../book/src/tracking.md")]
    mod tracking {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/system.md")]
    mod system {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
