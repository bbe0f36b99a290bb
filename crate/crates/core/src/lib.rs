//! Active classification as sequential hypothesis testing.
//!
//! A scenario fixes hypotheses with a prior, discrete features with
//! per-hypothesis conditional probability tables, locations that each
//! reveal a set of features, travel costs and a decision loss. An agent
//! starts at location 0, updates a Bayesian belief as it views locations,
//! and stops once its Bayes risk falls to a threshold.

pub mod belief;
pub mod cli;
pub mod model;
pub mod planner;
pub mod scenarios;
pub mod seed;
pub mod sim;
