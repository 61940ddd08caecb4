pub mod config;
pub mod fountain;
pub mod gf256;
pub mod lp;
pub mod netmodel;
pub mod protocols;
pub mod sim;
pub mod te;
pub mod vusgw;
