//! Power, combining-weight and bandwidth optimization.

pub mod ao;
pub mod bandwidth;
pub mod gp;
pub mod lemma;
pub mod power;
pub mod sca;
