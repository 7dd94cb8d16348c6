//! Holds the `acceptance` test target. The checks themselves live in
//! `dlc_core::acceptance` so that `dlc verify` runs the same code.
