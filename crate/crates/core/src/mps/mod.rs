//! Two-site DMRG with `U(1)` charge-blocked tensors.
//!
//! Bond indices are labelled by the total `S^z` of everything to their left,
//! so the ground state is searched inside one magnetization sector. Bond
//! dimensions grow until the discarded weight at every bond is below the
//! configured epsilon.

mod blocks;
mod dmrg;
mod state;

pub use blocks::{BlockMat, BondSpace};
pub use dmrg::{dmrg_ground_state, dmrg_warm_start, DmrgResult, DmrgSettings};
pub use state::{
    entropy_of_singular_values, half_chain_entropy, overlap, overlap_signed, MpsState, SiteTensor, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
