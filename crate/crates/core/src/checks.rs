//! Self-check suites run by `evc check`: finite-difference gradient checks,
//! the gradient-reversal sign contract, and brute-force oracles for DTW and
//! Savitzky-Golay smoothing.
//!
//! Gradient agreement is measured as
//! `||g_analytic - g_fd|| / (||g_analytic|| + ||g_fd||)` over the flattened
//! gradient of each instance (0 when both vanish), with central differences
//! of step [`FD_STEP`].

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::contour::VuvMask;
use crate::metrics::dtw_align;
use crate::nn::{cross_entropy, grl_backward, grl_forward, loss_prosody, loss_triplet};
use crate::rng::Rng;
use crate::savgol::{savgol_filter, SavgolParams};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-5;
pub const SAVGOL_TOL: f64 = 1e-9;
pub const GRL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub pass: bool,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    fn new(check: &str, instances: usize, max_error: f64, tolerance: f64, strict: bool) -> Self {
        let pass = if strict {
            max_error <= tolerance
        } else {
            max_error < tolerance
        };
        CheckResult {
            check: check.to_string(),
            pass,
            instances,
            max_error,
            tolerance,
        }
    }
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a) + norm(b);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_vec(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

pub fn check_prosody_gradients(instances: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 1 + rng.below(12) as usize;
        let m = 1 + rng.below(8) as usize;
        let f0 = random_vec(n, &mut rng);
        let f0_hat = random_vec(n, &mut rng);
        let mut flags: Vec<bool> = (0..n).map(|_| rng.coin()).collect();
        flags[0] = true;
        let vuv = VuvMask::new(flags);
        let energy = random_vec(n, &mut rng);
        let energy_hat = random_vec(n, &mut rng);
        let dur: Vec<f64> = (0..m).map(|_| 1.0 + rng.below(6) as f64).collect();
        // Keep duration residuals away from the L1 kink.
        let dur_hat: Vec<f64> = dur
            .iter()
            .map(|d| {
                let off = rng.uniform_range(0.1, 2.0);
                if rng.coin() {
                    d + off
                } else {
                    d - off
                }
            })
            .collect();
        let l = loss_prosody(&f0_hat, &f0, &vuv, &energy_hat, &energy, &dur_hat, &dur)
            .expect("consistent shapes");
        let fd_f0 = numeric_gradient(&f0_hat, |x| {
            loss_prosody(x, &f0, &vuv, &energy_hat, &energy, &dur_hat, &dur)
                .unwrap()
                .value
        });
        let fd_e = numeric_gradient(&energy_hat, |x| {
            loss_prosody(&f0_hat, &f0, &vuv, x, &energy, &dur_hat, &dur)
                .unwrap()
                .value
        });
        let fd_d = numeric_gradient(&dur_hat, |x| {
            loss_prosody(&f0_hat, &f0, &vuv, &energy_hat, &energy, x, &dur)
                .unwrap()
                .value
        });
        let analytic = [l.grad_f0, l.grad_energy, l.grad_duration].concat();
        let numeric = [fd_f0, fd_e, fd_d].concat();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    CheckResult::new("grad_loss_prosody", instances, worst, GRAD_REL_TOL, false)
}

pub fn check_triplet_gradients(instances: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::seeded(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < instances {
        let n = 1 + rng.below(4) as usize;
        let d = 2 + rng.below(7) as usize;
        let a = random_matrix(n, d, &mut rng);
        let p = random_matrix(n, d, &mut rng);
        let neg = random_matrix(n, d, &mut rng);
        let margin = 0.3;
        let near_kink = (0..n).any(|i| {
            let s = |x: ndarray::ArrayView1<f64>, y: ndarray::ArrayView1<f64>| {
                x.dot(&y) / (x.dot(&x).sqrt() * y.dot(&y).sqrt())
            };
            (s(a.row(i), neg.row(i)) - s(a.row(i), p.row(i)) + margin).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let l = loss_triplet(a.view(), p.view(), neg.view(), margin).expect("non-degenerate");
        let value_with = |which: usize, x: &[f64]| {
            let m = Array2::from_shape_vec((n, d), x.to_vec()).unwrap();
            let (aa, pp, nn) = match which {
                0 => (m.view(), p.view(), neg.view()),
                1 => (a.view(), m.view(), neg.view()),
                _ => (a.view(), p.view(), m.view()),
            };
            loss_triplet(aa, pp, nn, margin).unwrap().value
        };
        let flat = |m: &Array2<f64>| m.iter().copied().collect::<Vec<_>>();
        let analytic = [
            flat(&l.grad_anchor),
            flat(&l.grad_positive),
            flat(&l.grad_negative),
        ]
        .concat();
        let numeric = [
            numeric_gradient(&flat(&a), |x| value_with(0, x)),
            numeric_gradient(&flat(&p), |x| value_with(1, x)),
            numeric_gradient(&flat(&neg), |x| value_with(2, x)),
        ]
        .concat();
        worst = worst.max(relative_error(&analytic, &numeric));
        done += 1;
    }
    CheckResult::new("grad_loss_triplet", instances, worst, GRAD_REL_TOL, false)
}

pub fn check_cross_entropy_gradients(instances: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = 1 + rng.below(5) as usize;
        let c = 2 + rng.below(8) as usize;
        let logits = random_matrix(n, c, &mut rng) * 3.0;
        let labels: Vec<usize> = (0..n).map(|_| rng.below(c as u64) as usize).collect();
        let l = cross_entropy(logits.view(), &labels).expect("valid labels");
        let flat: Vec<f64> = logits.iter().copied().collect();
        let numeric = numeric_gradient(&flat, |x| {
            let m = Array2::from_shape_vec((n, c), x.to_vec()).unwrap();
            cross_entropy(m.view(), &labels).unwrap().value
        });
        let analytic: Vec<f64> = l.grad.iter().copied().collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    CheckResult::new("grad_cross_entropy", instances, worst, GRAD_REL_TOL, false)
}

/// Polynomial with coefficients `c[0] + c[1] x + ...`.
struct Poly(Vec<f64>);

impl Poly {
    fn random(rng: &mut Rng) -> Self {
        let deg = 1 + rng.below(4) as usize;
        Poly((0..=deg).map(|_| rng.uniform_range(-2.0, 2.0)).collect())
    }

    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}

/// For `h(x) = sum_j g(grl(f(x))_j)` with elementwise polynomials `f` and
/// `g`, backpropagating through the reversal layer must give exactly
/// `-lambda` times the gradient of the same composition without it.
pub fn check_grl_contract(instances: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = 1 + rng.below(6) as usize;
        let (f, g) = (Poly::random(&mut rng), Poly::random(&mut rng));
        let lambda = rng.uniform_range(0.1, 3.0);
        let x = Array1::from_shape_simple_fn(d, || rng.uniform_range(-1.5, 1.5));
        let fx = x.mapv(|v| f.eval(v)).insert_axis(ndarray::Axis(0));
        let (y, tape) = grl_forward(fx.view());
        let upstream = y.mapv(|v| g.deriv(v));
        let through = grl_backward(&tape, upstream.view(), lambda).expect("shapes agree");
        let with_grl: Vec<f64> = (0..d).map(|j| through[[0, j]] * f.deriv(x[j])).collect();
        let plain: Vec<f64> = (0..d)
            .map(|j| -lambda * (g.deriv(f.eval(x[j])) * f.deriv(x[j])))
            .collect();
        worst = worst.max(relative_error(&with_grl, &plain));
    }
    CheckResult::new("grl_sign_contract", instances, worst, GRL_REL_TOL, true)
}

/// Minimum cost over every monotone path, by exhaustive recursion.
pub fn dtw_brute_force(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i == a.len() - 1 && j == b.len() - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

pub fn check_dtw_oracle(pairs: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::seeded(seed);
    let mut mismatches = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let draw = |rng: &mut Rng| -> Vec<f64> {
            let len = 1 + rng.below(6) as usize;
            (0..len).map(|_| rng.below(4) as f64).collect()
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let dp = dtw_align(&a, &b).expect("non-empty").cost;
        let err = (dp - dtw_brute_force(&a, &b)).abs();
        worst = worst.max(err);
        if err != 0.0 {
            mismatches += 1;
        }
    }
    let mut r = CheckResult::new("dtw_bruteforce", pairs, worst, 0.0, true);
    r.pass = mismatches == 0;
    r
}

/// Least-squares fit of degree `order` through `(x_i, y_i)` by Gaussian
/// elimination on the normal equations, evaluated at `at`.
pub fn lsq_poly_eval(xs: &[f64], ys: &[f64], order: usize, at: f64) -> f64 {
    let m = order + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&x, &y) in xs.iter().zip(ys) {
        for r in 0..m {
            for c in 0..m {
                a[r][c] += x.powi((r + c) as i32);
            }
            a[r][m] += y * x.powi(r as i32);
        }
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..m).map(|k| a[k][m] / a[k][k] * at.powi(k as i32)).sum()
}

/// Brute-force smoothing: for each sample, fit the window that the smoother
/// uses at that position and evaluate the fit there.
pub fn savgol_oracle(y: &[f64], window: usize, order: usize) -> Vec<f64> {
    let n = y.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let (start, len, ord) = if n < window {
                (0, n, order.min(n - 1))
            } else {
                (i.saturating_sub(half).min(n - window), window, order)
            };
            // Local coordinates centred on the evaluation point.
            let xs: Vec<f64> = (start..start + len).map(|t| t as f64 - i as f64).collect();
            lsq_poly_eval(&xs, &y[start..start + len], ord, 0.0)
        })
        .collect()
}

pub fn check_savgol_polynomials() -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (window, order) in [(5, 2), (9, 2), (9, 3), (11, 4), (7, 0), (3, 1)] {
        for degree in 0..=order {
            for len in [window, 50, 137] {
                let y: Vec<f64> = (0..len)
                    .map(|t| {
                        let x = t as f64 / len as f64 * 4.0 - 1.0;
                        (0..=degree)
                            .map(|k| (k as f64 + 1.0) * x.powi(k as i32))
                            .sum()
                    })
                    .collect();
                let out = savgol_filter(&y, SavgolParams { window, order }).expect("valid params");
                let err = out
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(err);
                count += 1;
            }
        }
    }
    CheckResult::new(
        "savgol_polynomial_exactness",
        count,
        worst,
        SAVGOL_TOL,
        true,
    )
}

pub fn check_savgol_oracle(instances: usize, seed: u64) -> CheckResult {
    let mut rng = Rng::seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let order = rng.below(4) as usize;
        let window = 2 * (order / 2 + 1 + rng.below(5) as usize) + 1;
        let len = 3 + rng.below(120) as usize;
        let phase = rng.uniform_range(0.0, 6.0);
        let y: Vec<f64> = (0..len)
            .map(|t| (t as f64 * 0.15 + phase).sin() + 0.2 * rng.normal())
            .collect();
        let out = savgol_filter(&y, SavgolParams { window, order }).expect("valid params");
        let oracle = savgol_oracle(&y, window, order);
        let err = out
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    CheckResult::new("savgol_lsq_oracle", instances, worst, SAVGOL_TOL, true)
}

pub fn gradient_suite(seed: u64) -> Vec<CheckResult> {
    vec![
        check_prosody_gradients(100, seed),
        check_triplet_gradients(100, seed.wrapping_add(1)),
        check_cross_entropy_gradients(100, seed.wrapping_add(2)),
        check_grl_contract(50, seed.wrapping_add(3)),
    ]
}

pub fn oracle_suite(seed: u64) -> Vec<CheckResult> {
    vec![
        check_dtw_oracle(1000, seed),
        check_savgol_polynomials(),
        check_savgol_oracle(100, seed.wrapping_add(1)),
    ]
}
