//! Discrete calculus with the degenerate weight sigma(y) = nu (hbar - y).
//!
//! Grids, sigma-weighted quadrature and norms, finite-difference
//! derivatives, the two cut-off functions localizing the bottom and the
//! top, and a sampled Hardy-quotient checker.

use crate::error::{Error, Result};
use crate::model::GasParams;

/// Node placement of a grid on [0, hbar].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Uniform,
    /// Clusters nodes near the vacuum boundary via y = hbar (1 - (1-s)^2).
    TopRefined,
}

/// Quadrature rule backing `quad_weights`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    /// Trapezoid on the grid nodes. Default; consistent with the time
    /// integrator's discrete energy.
    Trapezoid,
    /// Composite Simpson; requires a uniform grid with an even cell count.
    /// Meant for standalone checks where extra accuracy matters.
    Simpson,
}

/// Nodes, weight samples and quadrature weights on [0, hbar].
#[derive(Debug, Clone)]
pub struct Grid1D {
    /// Number of cells (nodes.len() - 1).
    pub n_cells: usize,
    /// Strictly increasing nodes, y_0 = 0 and y_N = hbar exactly.
    pub nodes: Vec<f64>,
    /// sigma(y_j) = nu (hbar - y_j); exactly zero at the top node.
    pub sigma: Vec<f64>,
    /// Positive quadrature weights summing to hbar.
    pub quad_weights: Vec<f64>,
    /// Weight slope, copied from the parameters.
    pub nu: f64,
    /// Domain height, copied from the parameters.
    pub hbar: f64,
    pub spacing: Spacing,
    pub quadrature: Quadrature,
}

pub const MIN_CELLS: usize = 8;

/// Builds a grid for the given gas column with trapezoid weights.
pub fn make_grid(params: &GasParams, n_cells: usize, spacing: Spacing) -> Result<Grid1D> {
    grid_from_weight(params.nu, params.hbar, n_cells, spacing, Quadrature::Trapezoid)
}

/// Like `make_grid` but with an explicit quadrature rule.
pub fn make_grid_with(
    params: &GasParams,
    n_cells: usize,
    spacing: Spacing,
    quadrature: Quadrature,
) -> Result<Grid1D> {
    grid_from_weight(params.nu, params.hbar, n_cells, spacing, quadrature)
}

/// Grid over (0, hbar) with weight slope nu given directly. Lets tests and
/// the Hardy checker work on domains like sigma = 1 - y without cooking up
/// gas parameters first.
pub fn grid_from_weight(
    nu: f64,
    hbar: f64,
    n_cells: usize,
    spacing: Spacing,
    quadrature: Quadrature,
) -> Result<Grid1D> {
    if n_cells < MIN_CELLS {
        return Err(Error::InvalidParameter {
            name: "n_cells",
            value: n_cells as f64,
            reason: "needs at least 8 cells",
        });
    }
    if quadrature == Quadrature::Simpson && (spacing != Spacing::Uniform || n_cells % 2 != 0) {
        return Err(Error::InvalidParameter {
            name: "n_cells",
            value: n_cells as f64,
            reason: "Simpson weights need a uniform grid with an even cell count",
        });
    }
    let n = n_cells;
    let mut nodes: Vec<f64> = (0..=n)
        .map(|j| {
            let s = j as f64 / n as f64;
            match spacing {
                Spacing::Uniform => hbar * s,
                Spacing::TopRefined => hbar * (1.0 - (1.0 - s) * (1.0 - s)),
            }
        })
        .collect();
    nodes[0] = 0.0;
    nodes[n] = hbar;

    let sigma: Vec<f64> = nodes
        .iter()
        .map(|&y| if y >= hbar { 0.0 } else { nu * (hbar - y) })
        .collect();

    let quad_weights = match quadrature {
        Quadrature::Trapezoid => trapezoid_weights(&nodes),
        Quadrature::Simpson => simpson_weights(&nodes),
    };

    Ok(Grid1D {
        n_cells: n,
        nodes,
        sigma,
        quad_weights,
        nu,
        hbar,
        spacing,
        quadrature,
    })
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len() - 1;
    let mut w = vec![0.0; n + 1];
    w[0] = 0.5 * (nodes[1] - nodes[0]);
    w[n] = 0.5 * (nodes[n] - nodes[n - 1]);
    for j in 1..n {
        w[j] = 0.5 * (nodes[j + 1] - nodes[j - 1]);
    }
    w
}

fn simpson_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len() - 1;
    let h = (nodes[n] - nodes[0]) / n as f64;
    let mut w = vec![0.0; n + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        *wj = h / 3.0
            * if j == 0 || j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
    }
    w
}

impl Grid1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                got,
                expected: self.len(),
            })
        }
    }

    /// Integral of a nodal field by the grid's quadrature rule.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.quad_weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// First derivative by 3-point Lagrange stencils: central (second order) at
/// interior nodes, one-sided second order at both ends. Exact for
/// quadratics on any node spacing.
pub fn derivative(grid: &Grid1D, f: &[f64]) -> Vec<f64> {
    let y = &grid.nodes;
    let n = y.len() - 1;
    let mut df = vec![0.0; n + 1];
    for j in 1..n {
        let h1 = y[j] - y[j - 1];
        let h2 = y[j + 1] - y[j];
        df[j] = -h2 / (h1 * (h1 + h2)) * f[j - 1] + (h2 - h1) / (h1 * h2) * f[j]
            + h1 / (h2 * (h1 + h2)) * f[j + 1];
    }
    df[0] = one_sided_start(y[0], y[1], y[2], f[0], f[1], f[2]);
    df[n] = one_sided_end(y[n - 2], y[n - 1], y[n], f[n - 2], f[n - 1], f[n]);
    df
}

/// 3-point one-sided derivative at the leftmost of three nodes.
pub(crate) fn one_sided_start(y0: f64, y1: f64, y2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let h1 = y1 - y0;
    let h2 = y2 - y1;
    -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f0 + (h1 + h2) / (h1 * h2) * f1
        - h1 / (h2 * (h1 + h2)) * f2
}

/// 3-point one-sided derivative at the rightmost of three nodes.
pub(crate) fn one_sided_end(y0: f64, y1: f64, y2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let h1 = y1 - y0;
    let h2 = y2 - y1;
    h2 / (h1 * (h1 + h2)) * f0 - (h1 + h2) / (h1 * h2) * f1
        + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * f2
}

/// Highest derivative order accepted by `weighted_norm_sq`. Discrete
/// derivatives beyond the third are noise on the grid sizes this library
/// targets; higher-order content is monitored through the energy tables
/// instead.
pub const MAX_NORM_ORDER: u32 = 3;

/// Squared weighted Sobolev norm: sum over k <= b of the quadrature of
/// sigma^a |d^k f / dy^k|^2, with derivatives by repeated application of
/// the 3-point operator.
pub fn weighted_norm_sq(grid: &Grid1D, field: &[f64], a: f64, b: u32) -> Result<f64> {
    grid.check_len(field.len())?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter {
            name: "a",
            value: a,
            reason: "weight power must be a finite non-negative real",
        });
    }
    if b > MAX_NORM_ORDER {
        return Err(Error::InvalidParameter {
            name: "b",
            value: b as f64,
            reason: "derivative order capped at 3",
        });
    }
    let mut total = 0.0;
    let mut current = field.to_vec();
    for k in 0..=b {
        if k > 0 {
            current = derivative(grid, &current);
        }
        total += weighted_l2_sq(grid, &current, a);
    }
    Ok(total)
}

/// Quadrature of sigma^a f^2. sigma^0 is 1 everywhere including the
/// vacuum node.
pub(crate) fn weighted_l2_sq(grid: &Grid1D, f: &[f64], a: f64) -> f64 {
    grid.quad_weights
        .iter()
        .zip(&grid.sigma)
        .zip(f)
        .map(|((w, s), v)| w * s.powf(a) * v * v)
        .sum()
}

/// Hardy quotient [int sigma^k f^2] / [int sigma^{k+2} (f^2 + |f'|^2)].
///
/// The continuum inequality bounds this by a constant depending only on
/// (k, nu, hbar); the checker reports the sampled value so a test can fit
/// that constant over a family of fields.
pub fn hardy_ratio(grid: &Grid1D, field: &[f64], k: f64) -> Result<f64> {
    grid.check_len(field.len())?;
    if !(k > -1.0) || !k.is_finite() {
        return Err(Error::InvalidParameter {
            name: "k",
            value: k,
            reason: "Hardy exponent must exceed -1",
        });
    }
    let df = derivative(grid, field);
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..grid.len() {
        let s = grid.sigma[j];
        let f2 = field[j] * field[j];
        // sigma = 0 with k < 0 is an improper endpoint; the nodal value is
        // only finite when the field vanishes there.
        let sk = s.powf(k);
        if sk.is_infinite() && f2 == 0.0 {
            continue;
        }
        num += grid.quad_weights[j] * sk * f2;
        den += grid.quad_weights[j] * s.powf(k + 2.0) * (f2 + df[j] * df[j]);
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    if !num.is_finite() || !den.is_finite() {
        return Err(Error::NonFinite {
            what: "hardy quotient",
            time: 0.0,
        });
    }
    Ok(num / den)
}

/// The two cut-off functions: zeta1 shields the bottom half, zeta2 the top
/// half, both transitioning by a quintic smoothstep over a quarter of the
/// domain.
#[derive(Debug, Clone)]
pub struct CutoffPair {
    /// 1 on [0, hbar/2], 0 on [3 hbar/4, hbar], non-increasing.
    pub zeta1: Vec<f64>,
    /// 0 on [0, hbar/4], 1 on [hbar/2, hbar], non-decreasing.
    pub zeta2: Vec<f64>,
}

pub fn make_cutoffs(grid: &Grid1D) -> CutoffPair {
    let h = grid.hbar;
    let zeta1 = grid
        .nodes
        .iter()
        .map(|&y| 1.0 - smoothstep((y - 0.5 * h) / (0.25 * h)))
        .collect();
    let zeta2 = grid
        .nodes
        .iter()
        .map(|&y| smoothstep((y - 0.25 * h) / (0.25 * h)))
        .collect();
    CutoffPair { zeta1, zeta2 }
}

/// Quintic smoothstep: 0 for x <= 0, 1 for x >= 1, C^2 across the joints.
fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GasParams;
    use proptest::prelude::*;

    fn unit_grid(n: usize, quad: Quadrature) -> Grid1D {
        // sigma = 1 - y on (0, 1)
        grid_from_weight(1.0, 1.0, n, Spacing::Uniform, quad).unwrap()
    }

    #[test]
    fn uniform_nodes_are_exact() {
        let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
        let g = make_grid(&p, 8, Spacing::Uniform).unwrap();
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(g.nodes[4], 1.0);
        assert_eq!(g.nodes[8], 2.0);
        assert_eq!(*g.sigma.last().unwrap(), 0.0);
    }

    #[test]
    fn rejects_tiny_grids() {
        let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
        assert!(make_grid(&p, 4, Spacing::Uniform).is_err());
    }

    #[test]
    fn quad_weights_positive_and_sum_to_height() {
        let p = GasParams::derive(1.4, 2.0, 3.0).unwrap();
        for spacing in [Spacing::Uniform, Spacing::TopRefined] {
            let g = make_grid(&p, 100, spacing).unwrap();
            assert!(g.quad_weights.iter().all(|&w| w > 0.0));
            let sum: f64 = g.quad_weights.iter().sum();
            assert!((sum - p.hbar).abs() < 1e-12 * p.hbar);
        }
    }

    #[test]
    fn top_refined_clusters_at_top() {
        let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
        let g = make_grid(&p, 100, Spacing::TopRefined).unwrap();
        let n = g.n_cells;
        let first = g.nodes[1] - g.nodes[0];
        let last = g.nodes[n] - g.nodes[n - 1];
        let smallest = g
            .nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        assert_eq!(last, smallest);
        assert!(last / first < 0.05);
    }

    #[test]
    fn derivative_exact_on_linears() {
        let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
        // uniform: machine precision; top-refined: the tiny cells near the
        // boundary amplify rounding by 1/h, so allow that factor
        for (spacing, tol) in [(Spacing::Uniform, 1e-13), (Spacing::TopRefined, 1e-10)] {
            let g = make_grid(&p, 50, spacing).unwrap();
            let f: Vec<f64> = g.nodes.iter().map(|y| 3.0 * y - 0.7).collect();
            for d in derivative(&g, &f) {
                assert!((d - 3.0).abs() < tol, "{spacing:?}: {d}");
            }
        }
    }

    #[test]
    fn norm_of_constant_is_measure() {
        let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
        let g = make_grid(&p, 64, Spacing::Uniform).unwrap();
        let ones = vec![1.0; g.len()];
        // a = 0, b = 0: plain length of the interval
        assert!((weighted_norm_sq(&g, &ones, 0.0, 0).unwrap() - 2.0).abs() < 1e-13);
        // a = 1: integral of sigma = nu hbar^2 / 2 = 1 (trapezoid exact on linears)
        assert!((weighted_norm_sq(&g, &ones, 1.0, 0).unwrap() - 1.0).abs() < 1e-13);
        let zeros = vec![0.0; g.len()];
        for b in 0..=3 {
            assert_eq!(weighted_norm_sq(&g, &zeros, 1.5, b).unwrap(), 0.0);
        }
        assert!(weighted_norm_sq(&g, &ones, 0.0, 4).is_err());
        assert!(weighted_norm_sq(&g, &ones, -1.0, 0).is_err());
    }

    #[test]
    fn hardy_constant_field() {
        let g = unit_grid(2000, Quadrature::Simpson);
        let ones = vec![1.0; g.len()];
        // int 1 / int (1-y)^2 = 1 / (1/3)
        let r = hardy_ratio(&g, &ones, 0.0).unwrap();
        assert!((r - 3.0).abs() < 1e-10, "r = {r}");
    }

    #[test]
    fn hardy_zero_field_errors() {
        let g = unit_grid(64, Quadrature::Trapezoid);
        let zeros = vec![0.0; g.len()];
        assert!(matches!(
            hardy_ratio(&g, &zeros, 0.0),
            Err(Error::ZeroDenominator)
        ));
    }

    #[test]
    fn hardy_weight_field_matches_closed_form() {
        let g = unit_grid(2000, Quadrature::Simpson);
        let f = g.sigma.clone();
        // num = int (1-y)^2 = 1/3, den = int (1-y)^2 ((1-y)^2 + 1) = 1/5 + 1/3
        let r = hardy_ratio(&g, &f, 0.0).unwrap();
        assert!((r - 0.625).abs() < 1e-6, "r = {r}");
    }

    #[test]
    fn cutoff_plateaus_and_overlap() {
        let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
        let g = make_grid(&p, 256, Spacing::Uniform).unwrap();
        let c = make_cutoffs(&g);
        let h = p.hbar;
        for (j, &y) in g.nodes.iter().enumerate() {
            if y <= 0.5 * h {
                assert_eq!(c.zeta1[j], 1.0);
            }
            if y >= 0.75 * h {
                assert_eq!(c.zeta1[j], 0.0);
            }
            if y <= 0.25 * h {
                assert_eq!(c.zeta2[j], 0.0);
            }
            if y >= 0.5 * h {
                assert_eq!(c.zeta2[j], 1.0);
            }
            assert!(c.zeta1[j] + c.zeta2[j] >= 1.0 - 1e-15);
        }
        assert_eq!(c.zeta1[0], 1.0);
        assert_eq!(*c.zeta1.last().unwrap(), 0.0);
        assert_eq!(c.zeta2[0], 0.0);
        assert_eq!(*c.zeta2.last().unwrap(), 1.0);
        for w in c.zeta1.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        for w in c.zeta2.windows(2) {
            assert!(w[1] >= w[0] - 1e-15);
        }
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous(c in -3.0f64..3.0, a in 0.0f64..3.0, b in 0u32..3) {
            let p = GasParams::derive(2.0, 1.0, 1.0).unwrap();
            let g = make_grid(&p, 32, Spacing::Uniform).unwrap();
            let f: Vec<f64> = g.nodes.iter().map(|y| (1.3 * y).sin() + 0.2 * y * y).collect();
            let cf: Vec<f64> = f.iter().map(|v| c * v).collect();
            let n1 = weighted_norm_sq(&g, &f, a, b).unwrap();
            let n2 = weighted_norm_sq(&g, &cf, a, b).unwrap();
            prop_assert!((n2 - c * c * n1).abs() <= 1e-10 * n1.max(1.0));
        }

        #[test]
        fn hardy_is_scale_invariant(c in 0.1f64..10.0, k in 0.0f64..2.0) {
            let g = unit_grid(64, Quadrature::Trapezoid);
            let f: Vec<f64> = g.nodes.iter().map(|y| 1.0 + (2.0 * y).cos()).collect();
            let cf: Vec<f64> = f.iter().map(|v| c * v).collect();
            let r1 = hardy_ratio(&g, &f, k).unwrap();
            let r2 = hardy_ratio(&g, &cf, k).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.abs().max(1.0));
        }
    }
}
