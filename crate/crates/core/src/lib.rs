pub mod cas;
pub mod chainledger;
pub mod cli;
pub mod cryptbox;
pub mod keystore;
pub mod patchset;
pub mod repoclient;
mod wire;
