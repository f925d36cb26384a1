//! A robo-advisor that learns an investor's state-dependent risk aversion
//! from solicited portfolio choices, and a Monte Carlo harness to evaluate it.
//!
//! The market moves between economic states on a Markov chain that the
//! advisor cannot influence. In each state the investor has a risk aversion
//! `θ_s` and picks the mean-risk optimal weight `g(θ_s, s)`, with mistakes. The
//! advisor asks `C(s)` times per state, inverts the answers, and then invests
//! on its own.
//!
//! ```
//! use robo_advisor::choice::{build_tables, RiskAversionGrid, WeightGrid};
//! use robo_advisor::market::MarketModel;
//! use robo_advisor::risk::DispersionKind;
//!
//! let tables = build_tables(
//!     &MarketModel::calibrated(),
//!     &RiskAversionGrid::calibrated(),
//!     &WeightGrid::default(),
//!     DispersionKind::Variance,
//! )?;
//! assert_eq!(tables.g(4.0, 1)?, 0.5273);
//! assert_eq!(tables.g_inverse(0.5273, 1), 4.0);
//! # Ok::<(), robo_advisor::choice::ChoiceError>(())
//! ```

pub mod advisor;
pub mod bounds;
pub mod choice;
pub mod io;
pub mod market;
pub mod planner;
pub mod risk;
pub mod sim;
