pub mod cli;
pub mod error;
pub mod laws;
pub mod markov;
pub mod maxent;
pub mod measures;
pub mod output;
pub mod prob;
pub mod qlog;
pub mod smb;
