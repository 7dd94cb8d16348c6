//! Kinetic models of binary interactions in which every object held by an
//! agent is kept, lost, duplicated or copied into the partner.
//!
//! The crate couples deterministic solvers for the Boltzmann-type equation
//! with mean-field Monte Carlo, the quasi-invariant limit, analytic steady
//! states and the scaling theory of the growing-mean regime, so that each
//! representation can be checked against the others.

pub mod acceptance;
pub mod analytics;
pub mod boltzmann;
pub mod density;
pub mod ensemble;
pub mod grazing;
pub mod laws;
pub mod quadrature;
pub mod scaling;
pub mod steady;
