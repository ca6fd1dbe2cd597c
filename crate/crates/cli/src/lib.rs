pub mod config;
pub mod error;
pub mod quadrature;
pub mod simulate;
pub mod study;
pub mod verify;
pub mod weak;
