//! Layer-wise settling of next-token predictions and the effort measures
//! built on it: deep-thinking ratio, confidence baselines, correlation
//! reports and sample aggregation.

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tolerance {})", a, b, tol);
    }};
}

pub mod aggregation;
pub mod analysis;
pub mod cli;
pub mod distributions;
pub mod effort;
pub mod error;
pub mod parallel;
pub mod report;
pub mod settling;
pub mod toy;
pub mod trace;

pub use error::{Error, Result};
