#![allow(dead_code)]

use fixmpc::linalg::{spectral_radius, Mat};
use fixmpc::model::{ConstraintSpec, CostWeights, LtiModel, MpcProblem, SoftBound};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A small random MPC instance: marginally stable dynamics, diagonal
/// weights, an input box and optionally one soft-constrained state.
pub fn random_problem(rng: &mut ChaCha8Rng, soft: bool) -> MpcProblem {
    let nx = rng.gen_range(2..=4);
    let nu = rng.gen_range(1..=2);
    let horizon = rng.gen_range(3..=6);
    let a = Mat::from_fn(nx, nx, |_, _| rng.gen_range(-1.0..1.0));
    let a = &a * (rng.gen_range(0.5..1.0) / spectral_radius(&a).max(1e-3));
    let b = Mat::from_fn(nx, nu, |_, _| rng.gen_range(-0.5..0.5));
    let q = Mat::from_diagonal(&fixmpc::linalg::Vector::from_fn(nx, |_, _| rng.gen_range(0.5..2.0)));
    let r = Mat::from_diagonal(&fixmpc::linalg::Vector::from_fn(nu, |_, _| rng.gen_range(0.5..2.0)));
    let mut w = CostWeights::new(q, r);
    let umax: Vec<f64> = (0..nu).map(|_| rng.gen_range(0.2..1.0)).collect();
    let mut c = ConstraintSpec::input_box(umax.iter().map(|v| -v).collect(), umax, nx);
    if soft {
        w.sigma1 = 10.0;
        w.sigma2 = 1.0;
        c.free = (1..nx).collect();
        c.soft = vec![SoftBound {
            index: 0,
            center: 0.0,
            radius: rng.gen_range(0.3..1.0),
        }];
    }
    MpcProblem::new(LtiModel::new(a, b).unwrap(), w, c, horizon).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, nx: usize, scale: f64) -> Vec<f64> {
    (0..nx).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn norm2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
