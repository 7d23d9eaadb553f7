//! Rate-region evaluation for three-receiver broadcast channels with
//! two degraded message sets.

pub mod bounds;
pub mod closed_form;
pub mod fme;
pub mod channel;
pub mod prob;
pub mod region;
pub mod scheme;
pub mod sim;
pub mod sampling;
