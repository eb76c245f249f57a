//! Symmetry reduction of semidefinite programs.
//!
//! A finite group acting on the index set of an SDP leaves an algebra of
//! invariant matrices; restricting to it and mapping through a
//! *-isomorphism turns one large psd constraint into several small ones.
//! The crate covers the algebra side (`perm_groups`, `star_algebra`), the
//! program side (`sdp_model`, `solver`) and four applications: binary code
//! bounds (`hamming_codes`), spherical codes (`sphere_codes`), crossing
//! numbers of complete bipartite graphs (`crossing`) and symmetric sums of
//! squares (`sos_sym`).

pub mod crossing;
pub mod hamming_codes;
pub mod linalg;
pub mod perm_groups;
pub mod sdp_model;
pub mod solver;
pub mod sos_sym;
pub mod sphere_codes;
pub mod star_algebra;

pub use nalgebra;
