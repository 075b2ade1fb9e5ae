//! Gauss–Lobatto–Legendre nodes, weights and the nodal differentiation matrix.

use crate::error::{Error, Result};

pub const MIN_LX: usize = 2;
pub const MAX_LX: usize = 16;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Legendre polynomial `L_n(x)` and its derivative, by the three-term recurrence.
pub fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    match n {
        0 => (1.0, 0.0),
        1 => (x, 1.0),
        _ => {
            let (mut p_prev, mut p) = (1.0, x);
            let (mut dp_prev, mut dp) = (0.0, 1.0);
            for k in 1..n {
                let kf = k as f64;
                let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
                // d/dx L_{k+1} = d/dx L_{k-1} + (2k+1) L_k
                let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
                p_prev = p;
                p = p_next;
                dp_prev = dp;
                dp = dp_next;
            }
            (p, dp)
        }
    }
}

/// Quadrature rule and differentiation matrix for `lx` points per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct GllBasis {
    pub lx: usize,
    pub order: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Row-major, `deriv[i * lx + j] = l_j'(points[i])`.
    pub deriv: Vec<f64>,
}

impl GllBasis {
    pub fn new(lx: usize) -> Result<Self> {
        gll_basis(lx)
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.deriv[i * self.lx + j]
    }

    /// The six derivative-matrix arguments of the kernel.
    pub fn kernel_matrices(&self) -> DerivativeMatrices {
        DerivativeMatrices::from_basis(self)
    }
}

/// Build the GLL rule: interior nodes are the roots of `L_N'` found by damped
/// Newton from Chebyshev–Lobatto guesses; the endpoints are exactly ±1.
pub fn gll_basis(lx: usize) -> Result<GllBasis> {
    if !(MIN_LX..=MAX_LX).contains(&lx) {
        return Err(Error::Range(format!("lx = {lx} must lie in [{MIN_LX}, {MAX_LX}]")));
    }
    let n = lx - 1;
    let mut points = vec![0.0; lx];
    points[0] = -1.0;
    points[n] = 1.0;

    // Solve the lower half and mirror, so antisymmetry holds exactly.
    for i in 1..=(n / 2).min(n - 1) {
        if 2 * i == n {
            points[i] = 0.0;
            continue;
        }
        let guess = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        let x = newton_interior_root(n, guess)?;
        points[i] = x;
        points[n - i] = -x;
    }

    let nn1 = (n * (n + 1)) as f64;
    let legendre_at_nodes: Vec<f64> = points.iter().map(|&x| legendre_eval(n, x).0).collect();
    let mut weights: Vec<f64> = legendre_at_nodes.iter().map(|&l| 2.0 / (nn1 * l * l)).collect();
    for i in 0..lx / 2 {
        let w = 0.5 * (weights[i] + weights[n - i]);
        weights[i] = w;
        weights[n - i] = w;
    }

    let mut deriv = vec![0.0; lx * lx];
    for i in 0..lx {
        for j in 0..lx {
            deriv[i * lx + j] = if i != j {
                legendre_at_nodes[i] / (legendre_at_nodes[j] * (points[i] - points[j]))
            } else if i == 0 {
                -nn1 / 4.0
            } else if i == n {
                nn1 / 4.0
            } else {
                0.0
            };
        }
    }

    Ok(GllBasis { lx, order: n, points, weights, deriv })
}

/// Newton on `L_N'(x) = 0` using `L_N''` from the Legendre ODE.
fn newton_interior_root(n: usize, guess: f64) -> Result<f64> {
    let nn1 = (n * (n + 1)) as f64;
    let mut x = guess;
    for _ in 0..NEWTON_MAX_ITER {
        let (l, dl) = legendre_eval(n, x);
        let ddl = (2.0 * x * dl - nn1 * l) / (1.0 - x * x);
        let mut step = dl / ddl;
        // damp: never leave the open interval
        while (x - step).abs() >= 1.0 {
            step *= 0.5;
        }
        x -= step;
        if step.abs() < NEWTON_TOL {
            return Ok(x);
        }
    }
    Err(Error::Numeric(format!(
        "GLL Newton iteration for N = {n} did not converge from {guess}"
    )))
}

/// The kernel's derivative arguments in the layout its index expressions
/// expect. `dxd[l][i]` multiplies `u[.., l]` to produce the derivative at
/// node `i`, so the row-major `dxd` array is `D` transposed (column-major
/// `D`), and `dxtd` is `D` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeMatrices {
    pub lx: usize,
    pub dxd: Vec<f64>,
    pub dyd: Vec<f64>,
    pub dzd: Vec<f64>,
    pub dxtd: Vec<f64>,
    pub dytd: Vec<f64>,
    pub dztd: Vec<f64>,
}

impl DerivativeMatrices {
    pub fn from_basis(basis: &GllBasis) -> Self {
        let lx = basis.lx;
        let mut d_t = vec![0.0; lx * lx];
        for a in 0..lx {
            for b in 0..lx {
                d_t[a * lx + b] = basis.d(b, a);
            }
        }
        let d = basis.deriv.clone();
        DerivativeMatrices {
            lx,
            dxd: d_t.clone(),
            dyd: d_t.clone(),
            dzd: d_t,
            dxtd: d.clone(),
            dytd: d.clone(),
            dztd: d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_low_orders() {
        assert_eq!(legendre_eval(0, 0.3), (1.0, 0.0));
        assert_eq!(legendre_eval(1, -0.5), (-0.5, 1.0));
        let (v, d) = legendre_eval(2, 0.0);
        assert_eq!(v, -0.5);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn legendre_matches_closed_forms() {
        for &x in &[-1.0, -0.7, -0.2, 0.0, 0.35, 0.9, 1.0] {
            let (v2, d2) = legendre_eval(2, x);
            assert!((v2 - (3.0 * x * x - 1.0) / 2.0).abs() < 1e-15);
            assert!((d2 - 3.0 * x).abs() < 1e-15);
            let (v3, d3) = legendre_eval(3, x);
            assert!((v3 - (5.0 * x * x * x - 3.0 * x) / 2.0).abs() < 1e-15);
            assert!((d3 - (15.0 * x * x - 3.0) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lx2_is_linear() {
        let b = gll_basis(2).unwrap();
        assert_eq!(b.points, vec![-1.0, 1.0]);
        assert_eq!(b.weights, vec![1.0, 1.0]);
        assert_eq!(b.deriv, vec![-0.5, 0.5, -0.5, 0.5]);
    }

    #[test]
    fn lx3_nodes_and_weights() {
        let b = gll_basis(3).unwrap();
        assert_eq!(b.points, vec![-1.0, 0.0, 1.0]);
        let expect = [1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0];
        for (w, e) in b.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn lx8_integrates_degree_12() {
        let b = gll_basis(8).unwrap();
        let q: f64 = b.points.iter().zip(&b.weights).map(|(x, w)| w * x.powi(12)).sum();
        assert!((q - 2.0 / 13.0).abs() < 1e-12);
    }

    #[test]
    fn lx_out_of_range() {
        assert!(matches!(gll_basis(1), Err(Error::Range(_))));
        assert!(matches!(gll_basis(17), Err(Error::Range(_))));
    }

    #[test]
    fn kernel_matrices_layout() {
        let b = gll_basis(4).unwrap();
        let m = b.kernel_matrices();
        for l in 0..4 {
            for i in 0..4 {
                assert_eq!(m.dxd[l * 4 + i], b.d(i, l));
                assert_eq!(m.dxtd[l * 4 + i], b.d(l, i));
            }
        }
    }
}
