pub mod bench;
pub mod plot;
