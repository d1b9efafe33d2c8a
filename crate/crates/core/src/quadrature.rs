//! Thermal averages over a one-dimensional Maxwell–Boltzmann distribution.
//!
//! The primary rule is Gauss–Hermite, doubled from 64 nodes until two
//! successive estimates agree. Integrands with features much narrower than
//! the thermal width (a loop with `u ≪ vth`, say) defeat that, so an adaptive
//! Simpson rule on a truncated interval takes over when doubling stalls.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Result};

const FIRST_NODES: usize = 64;
const MAX_NODES: usize = 512;
/// Half-width of the fallback interval in standard deviations. The dropped
/// tail weight is below 1e−30.
const TRUNCATION: f64 = 12.0;
const MAX_DEPTH: u32 = 48;

/// Relative-change target for thermal averages.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    GaussHermite,
    AdaptiveSimpson,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Average {
    pub value: f64,
    /// Relative change between the last two refinements.
    pub rel_change: f64,
    /// Nodes (Gauss–Hermite) or function evaluations (adaptive).
    pub nodes: usize,
    pub method: Method,
}

/// Nodes and weights for `∫ exp(−x²) f(x) dx`, in increasing node order.
///
/// Nodes and weights of a Gauss–Hermite rule.
pub type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Golub–Welsch: nodes are the eigenvalues of the Jacobi matrix of the
/// Hermite recurrence, weights `√π` times the squared first eigenvector
/// components. Rules are cached per size.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1, "need at least one node");
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(rule) = cache.lock().expect("cache poisoned").get(&n) {
        return Arc::clone(rule);
    }
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            (
                eig.eigenvalues[i],
                PI.sqrt() * eig.eigenvectors[(0, i)].powi(2),
            )
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize away the rounding in the eigen solver.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[j].1 + pairs[i].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    let rule = Arc::new(pairs.into_iter().unzip());
    cache
        .lock()
        .expect("cache poisoned")
        .insert(n, Arc::clone(&rule));
    rule
}

/// Gauss–Hermite estimate of `E[f(v)]` for `v ~ N(0, sigma²)` with `n` nodes.
pub fn thermal_average_fixed(f: impl Fn(f64) -> f64, sigma: f64, n: usize) -> f64 {
    let rule = gauss_hermite(n);
    let (x, w) = (&rule.0, &rule.1);
    let scale = std::f64::consts::SQRT_2 * sigma;
    x.iter()
        .zip(w)
        .map(|(xi, wi)| wi * f(scale * xi))
        .sum::<f64>()
        / PI.sqrt()
}

/// `E[f(v)]` for `v ~ N(0, sigma²)`.
///
/// Gauss–Hermite from 64 nodes, doubling up to 512 until the relative change
/// drops below `tol`; then adaptive Simpson on `±12σ`, with extra panel edges
/// at `breakpoints` (places where `f` changes quickly).
pub fn thermal_average(
    f: impl Fn(f64) -> f64 + Copy,
    sigma: f64,
    tol: f64,
    breakpoints: &[f64],
) -> Result<Average> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(
            "sigma",
            "thermal width must be positive and finite",
        ));
    }
    let mut n = FIRST_NODES;
    let mut prev = thermal_average_fixed(f, sigma, n);
    let mut change = f64::INFINITY;
    while n < MAX_NODES {
        n *= 2;
        let next = thermal_average_fixed(f, sigma, n);
        change = rel_change(prev, next);
        prev = next;
        if change < tol {
            return Ok(Average {
                value: next,
                rel_change: change,
                nodes: n,
                method: Method::GaussHermite,
            });
        }
    }
    let gh_change = change;
    adaptive_gaussian_average(f, sigma, tol, breakpoints).map_err(|e| match e {
        Error::Quadrature { achieved, nodes } => Error::Quadrature {
            achieved: achieved.min(gh_change),
            nodes,
        },
        other => other,
    })
}

/// Adaptive Simpson estimate of `E[f(v)]`, `v ~ N(0, sigma²)`.
pub fn adaptive_gaussian_average(
    f: impl Fn(f64) -> f64,
    sigma: f64,
    tol: f64,
    breakpoints: &[f64],
) -> Result<Average> {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let g = |v: f64| f(v) * (-(v * v) / (2.0 * sigma * sigma)).exp() * norm;
    let lim = TRUNCATION * sigma;
    let mut edges: Vec<f64> = (0..=48)
        .map(|i| -lim + 2.0 * lim * i as f64 / 48.0)
        .collect();
    edges.extend(
        breakpoints
            .iter()
            .flat_map(|b| [*b, -*b])
            .filter(|b| b.abs() < lim),
    );
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    // Absolute target from a coarse magnitude estimate.
    let coarse: f64 = edges
        .windows(2)
        .map(|p| simpson(&g, p[0], p[1]).2.abs())
        .sum();
    let abs_tol = tol * coarse.max(f64::MIN_POSITIVE) / 10.0;

    let mut total = 0.0;
    let mut worst = 0.0f64;
    let mut evals = 0usize;
    let n_panels = (edges.len() - 1) as f64;
    for p in edges.windows(2) {
        let (fa, fm, whole) = simpson(&g, p[0], p[1]);
        let fb = g(p[1]);
        evals += 3;
        let (v, err) = refine(
            &g,
            Panel {
                a: p[0],
                b: p[1],
                fa,
                fm,
                fb,
                whole,
            },
            abs_tol / n_panels,
            MAX_DEPTH,
            &mut evals,
        );
        total += v;
        worst = worst.max(err);
    }
    let achieved = worst * n_panels / coarse.max(f64::MIN_POSITIVE);
    if !total.is_finite() || achieved > tol.max(1e-6) {
        return Err(Error::Quadrature {
            achieved,
            nodes: evals,
        });
    }
    Ok(Average {
        value: total,
        rel_change: achieved,
        nodes: evals,
        method: Method::AdaptiveSimpson,
    })
}

fn rel_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(g: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (g(a), g(m), g(b));
    (fa, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

/// Returns the refined integral and its error estimate.
fn refine(
    g: &impl Fn(f64) -> f64,
    p: Panel,
    tol: f64,
    depth: u32,
    evals: &mut usize,
) -> (f64, f64) {
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = g(lm);
    let frm = g(rm);
    *evals += 2;
    let left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    let right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    let delta = left + right - p.whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (l, el) = refine(
        g,
        Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
        },
        tol / 2.0,
        depth - 1,
        evals,
    );
    let (r, er) = refine(
        g,
        Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
        },
        tol / 2.0,
        depth - 1,
        evals,
    );
    (l + r, el + er)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn nodes_symmetric_and_weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 64, 128, 512] {
            let rule = gauss_hermite(n);
            let (x, w) = (&rule.0, &rule.1);
            assert_relative_eq!(w.iter().sum::<f64>(), PI.sqrt(), max_relative = 1e-12);
            for i in 0..n {
                assert_relative_eq!(x[i], -x[n - 1 - i], epsilon = 1e-12);
            }
            assert!(x.windows(2).all(|p| p[1] > p[0]));
        }
    }

    #[test]
    fn two_node_rule() {
        let rule = gauss_hermite(2);
        let (x, w) = (&rule.0, &rule.1);
        assert_relative_eq!(x[1], 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(w[0], PI.sqrt() / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_moments() {
        let s = 3.0;
        let a = thermal_average(|v| v * v, s, 1e-12, &[]).unwrap();
        assert_relative_eq!(a.value, 9.0, max_relative = 1e-12);
        assert_eq!(a.method, Method::GaussHermite);
        let a = thermal_average(|v| v.powi(4), s, 1e-12, &[]).unwrap();
        assert_relative_eq!(a.value, 3.0 * 81.0, max_relative = 1e-12);
        let a = thermal_average(|v| (v / s).cos(), s, 1e-12, &[]).unwrap();
        assert_relative_eq!(a.value, (-0.5f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn narrow_feature_falls_back_to_adaptive() {
        // E[uv²/(u²+v²)] for u ≪ σ has a cusp-like core of width u.
        let (s, u) = (1.0, 1e-3);
        let f = move |v: f64| u * v * v / (u * u + v * v);
        let a = thermal_average(f, s, 1e-8, &[u, 10.0 * u]).unwrap();
        assert_eq!(a.method, Method::AdaptiveSimpson);
        // Closed form: u·(1 − u√(π/2)·exp(u²/2)·erfc(u/√2)/σ) for σ = 1.
        let erfc_small =
            1.0 - 2.0 / PI.sqrt() * (u / 2f64.sqrt() - (u / 2f64.sqrt()).powi(3) / 3.0);
        let exact = u * (1.0 - u * (PI / 2.0).sqrt() * (u * u / 2.0).exp() * erfc_small);
        assert_relative_eq!(a.value, exact, max_relative = 1e-7);
    }

    #[test]
    fn rejects_bad_width() {
        assert!(thermal_average(|v| v, 0.0, 1e-8, &[]).is_err());
    }
}
