//! Networked bank and wallet: the line-delimited JSON wire format, the
//! bank service, the wallet client, key and note files.

pub mod client;
pub mod keyfile;
pub mod service;
pub mod store;
pub mod wire;
