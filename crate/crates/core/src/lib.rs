pub(crate) mod gf2;
pub mod layout;
pub mod schedule;
pub mod circuit;
pub mod pauli;
pub mod dem;
pub mod matcher;
pub mod harness;

#[cfg(test)]
mod golden;
