//! Information velocity, error exponents and arrive-failure probabilities
//! of packet-erasure cascades with retransmission, plus a slot-level
//! simulator of the corresponding tandem queue.

pub mod analytic;
pub mod model;
pub mod sim;
