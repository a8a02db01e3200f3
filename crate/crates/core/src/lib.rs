pub mod error;
pub mod exec;
pub mod field;
pub mod hash;
pub mod perm;
pub mod prg;
pub mod rows;
pub mod sharing;
pub mod ldp;
pub mod transport;
pub mod deviation;
pub mod mac;
pub mod rng;
pub mod shuffle;
pub mod fl;
pub mod adversary;
pub mod accountant;
