//! Downlink C-RAN beamforming study library.
//!
//! A central processor (CP) with `M` antennas serves `K` single-antenna
//! mobile stations through `N` amplify-and-forward remote radio heads
//! (RRHs) of `L` antennas each.  Both hops are wireless and the CP only
//! has imperfect channel estimates.  This crate bundles:
//!
//! * a cluster / channel generator with a 3GPP-style path loss model
//!   ([`netmodel`]),
//! * exact SINR and transmit power evaluation for a given design
//!   ([`metrics`]),
//! * a closed-form lower bound on the total transmit power together
//!   with a step-by-step audit of its derivation chain ([`bound`]),
//! * SDR-based designs: alternating optimization and a two-stage
//!   method, built on an internal complex SDP layer ([`sdr_design`],
//!   [`conic`]),
//! * low-complexity MRC-ZF and SVD-ZF designs ([`classic_design`]),
//! * a seeded Monte Carlo harness with CSV/JSON outputs ([`harness`]).

pub mod bound;
pub mod classic_design;
pub mod conic;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod netmodel;
pub mod sdr_design;
