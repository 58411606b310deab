// SPDX-License-Identifier: MIT OR Apache-2.0

//! Spectral transport diagnostics for attention matrices.
//!
//! An attention head is read as a bipartite transport graph between queries and
//! keys. From it this crate computes
//!
//! - the degree-normalized operator `M` and its singular spectrum ([`transport`], [`spectral`]),
//! - sweep and exhaustive conductance on the bipartite dilation ([`spectral`]),
//! - the asymmetry coefficient `G` ([`transport::asymmetry_g`]),
//! - closed-form conductance landscapes of canonical causal masks ([`landscape`]),
//! - length-controlled AUROC and tail aggregates for evaluating diagnostics ([`evalmetrics`]),
//!
//! plus the matrix container, manifests and reports used by the CLI ([`io`]).

pub mod error;
pub mod evalmetrics;
pub mod io;
pub mod landscape;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
pub use landscape::{CanonicalKind, CanonicalSpec, LandscapeCurve};
pub use spectral::{CutResult, DilationGraph, SpectralSummary};
pub use transport::{AttentionMatrix, DegreePair, MaskKind, SymSplit, TransportOperator};
