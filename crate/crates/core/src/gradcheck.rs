//! Randomised comparison of [`backward_2d`] against central differences.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backward::{backward_2d, compare_gradients, finite_difference_oracle, DtGradients};
use crate::error::Result;
use crate::forward::filter_2d;
use crate::types::{DtParams, EdgeMap, ScoreMap};

pub const SIGMA_S_CHOICES: [f64; 3] = [1.0, 3.0, 10.0];
pub const SIGMA_R_CHOICES: [f64; 2] = [0.5, 1.0];
pub const DEFAULT_STEP: f64 = 3e-5;

/// One random problem: scores, edges and filter settings.
#[derive(Clone, Debug)]
pub struct GradcheckCase {
    pub x: ScoreMap,
    pub g: EdgeMap,
    pub params: DtParams,
}

impl fmt::Display for GradcheckCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "shape {} sigma_s {} sigma_r {} iterations {}",
            self.x, self.params.sigma_s, self.params.sigma_r, self.params.iterations
        )?;
        writeln!(f, "x = {:?}", self.x.data())?;
        write!(f, "g = {:?}", self.g.data())
    }
}

/// Up to 8×8×3, `g ∈ [0.1, 2]`, σ_s ∈ {1, 3, 10}, σ_r ∈ {0.5, 1}, K ∈ {1, 2, 3}.
pub fn random_case(rng: &mut impl Rng) -> GradcheckCase {
    let h = rng.random_range(1..=8);
    let w = rng.random_range(1..=8);
    let c = rng.random_range(1..=3);
    let x = (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = (0..h * w).map(|_| rng.random_range(0.1..=2.0)).collect();
    let sigma_s = SIGMA_S_CHOICES[rng.random_range(0..SIGMA_S_CHOICES.len())];
    let sigma_r = SIGMA_R_CHOICES[rng.random_range(0..SIGMA_R_CHOICES.len())];
    let iterations = rng.random_range(1..=3);
    GradcheckCase {
        x: ScoreMap::from_vec(h, w, c, x).expect("valid random scores"),
        g: EdgeMap::from_vec(h, w, g).expect("valid random edges"),
        params: DtParams::new(sigma_s, sigma_r, iterations).expect("valid random params"),
    }
}

/// `L = Σ y²`.
pub fn sum_of_squares(y: &ScoreMap) -> f64 {
    y.data().iter().map(|v| v * v).sum()
}

/// Analytic gradients of [`sum_of_squares`] through the filter.
pub fn analytic_gradients(case: &GradcheckCase) -> Result<DtGradients> {
    let (y, tape) = filter_2d(&case.x, &case.g, &case.params, true)?;
    let (h, w, c) = y.shape();
    let upstream = ScoreMap::from_vec(h, w, c, y.data().iter().map(|v| 2.0 * v).collect())?;
    backward_2d(&tape.expect("tape was requested"), &upstream)
}

pub fn check_case(case: &GradcheckCase, step: f64) -> Result<f64> {
    let analytic = analytic_gradients(case)?;
    let numeric = finite_difference_oracle(sum_of_squares, &case.x, &case.g, &case.params, step)?;
    Ok(compare_gradients(&analytic, &numeric))
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub cases: usize,
    pub max_relative_error: f64,
    pub worst: Option<GradcheckCase>,
}

pub fn run_gradcheck(seed: u64, cases: usize, step: f64) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradcheckReport {
        cases,
        max_relative_error: 0.0,
        worst: None,
    };
    for _ in 0..cases {
        let case = random_case(&mut rng);
        let err = check_case(&case, step)?;
        if report.worst.is_none() || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst = Some(case);
        }
    }
    Ok(report)
}
