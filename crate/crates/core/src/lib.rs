pub mod config;
pub mod diffengine;
pub mod evalreport;
pub mod harness;
pub mod indicator;
pub mod loss;
pub mod network;
pub mod oracle;
pub mod problems;
pub mod shockgeom;
pub mod trainer;
