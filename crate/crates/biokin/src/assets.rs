//! Reference skeleton definitions shipped with the crate.

/// Three-segment test chain (3+1+1 DOF).
pub const CHAIN_3: &str = include_str!("../assets/chain_3.toml");

/// Full-body model: 24 segments, 52 DOF, 59 markers.
pub const FULL_BODY_24: &str = include_str!("../assets/full_body_24.toml");
