//! Direct evaluation of the matrix-free Ax operator. This is the oracle every
//! IR program, transform and generated kernel is compared against, so the
//! loop structure and accumulation order are fixed and must not be "tidied".

use crate::error::{Error, Result};
use crate::sem::basis::{DerivativeMatrices, GllBasis};
use crate::sem::field::{ElementField, GeomFactors};

/// Apply the operator with the derivative slots built from `basis`.
pub fn ax_reference(u: &ElementField, basis: &GllBasis, g: &GeomFactors) -> Result<ElementField> {
    ax_with_matrices(u, &basis.kernel_matrices(), g)
}

pub fn ax_with_matrices(u: &ElementField, d: &DerivativeMatrices, g: &GeomFactors) -> Result<ElementField> {
    let (nel, lx) = (u.nel, u.lx);
    if d.lx != lx || g.lx() != lx || g.nel() != nel {
        return Err(Error::Contract(format!(
            "shape mismatch: u is ({nel}, {lx}), basis lx = {}, geometry is ({}, {})",
            d.lx,
            g.nel(),
            g.lx()
        )));
    }
    g.check_consistent()?;
    if u.data.len() != nel * lx * lx * lx {
        return Err(Error::Contract("u has the wrong number of values".into()));
    }

    let ud = &u.data;
    let m = |mat: &Vec<f64>, a: usize, b: usize| mat[a * lx + b];
    let at = |e: usize, k: usize, j: usize, i: usize| ((e * lx + k) * lx + j) * lx + i;

    let n = ud.len();
    let mut rtmp = vec![0.0; n];
    let mut stmp = vec![0.0; n];
    let mut ttmp = vec![0.0; n];
    let mut urtmp = vec![0.0; n];
    let mut ustmp = vec![0.0; n];
    let mut uttmp = vec![0.0; n];

    for e in 0..nel {
        for k in 0..lx {
            for j in 0..lx {
                for i in 0..lx {
                    let p = at(e, k, j, i);
                    rtmp[p] = 0.0;
                    stmp[p] = 0.0;
                    ttmp[p] = 0.0;
                    for l in 0..lx {
                        rtmp[p] += m(&d.dxd, l, i) * ud[at(e, k, j, l)];
                        stmp[p] += m(&d.dyd, l, j) * ud[at(e, k, l, i)];
                        ttmp[p] += m(&d.dzd, l, k) * ud[at(e, l, j, i)];
                    }
                    let g00 = g.g11.data[p];
                    let g01 = g.g12.data[p];
                    let g02 = g.g13.data[p];
                    let g11 = g.g22.data[p];
                    let g12 = g.g23.data[p];
                    let g22 = g.g33.data[p];
                    let h = g.h1.data[p];
                    let (r, s, t) = (rtmp[p], stmp[p], ttmp[p]);
                    urtmp[p] = h * (g00 * r + g01 * s + g02 * t);
                    ustmp[p] = h * (g01 * r + g11 * s + g12 * t);
                    uttmp[p] = h * (g02 * r + g12 * s + g22 * t);
                }
            }
        }
    }

    let mut w = ElementField::zeros(nel, lx);
    let wd = &mut w.data;
    for e in 0..nel {
        for k in 0..lx {
            for j in 0..lx {
                for i in 0..lx {
                    let p = at(e, k, j, i);
                    wd[p] = 0.0;
                    for l in 0..lx {
                        wd[p] += m(&d.dxtd, l, i) * urtmp[at(e, k, j, l)];
                        wd[p] += m(&d.dytd, l, j) * ustmp[at(e, k, l, i)];
                        wd[p] += m(&d.dztd, l, k) * uttmp[at(e, l, j, i)];
                    }
                }
            }
        }
    }
    Ok(w)
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max|A - Aᵀ| / max|A|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for c in r + 1..self.n {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        (0..self.n)
            .map(|r| x[r] * (0..self.n).map(|c| self.get(r, c) * x[c]).sum::<f64>())
            .sum()
    }
}

/// Assemble the single-element operator column by column from unit vectors.
pub fn dense_assemble(basis: &GllBasis, g: &GeomFactors) -> Result<DenseMatrix> {
    if g.nel() != 1 {
        return Err(Error::Contract(format!("dense_assemble needs nel = 1, got {}", g.nel())));
    }
    let lx = basis.lx;
    if lx > 8 {
        return Err(Error::Contract(format!("dense_assemble supports lx <= 8, got {lx}")));
    }
    let n = lx * lx * lx;
    let mut a = DenseMatrix { n, data: vec![0.0; n * n] };
    let mats = basis.kernel_matrices();
    let mut unit = ElementField::zeros(1, lx);
    for col in 0..n {
        unit.data[col] = 1.0;
        let w = ax_with_matrices(&unit, &mats, g)?;
        for row in 0..n {
            a.data[row * n + col] = w.data[row];
        }
        unit.data[col] = 0.0;
    }
    Ok(a)
}

/// Declared floating-point work of one operator application:
/// `nel·lx³·(12·lx + 18)`.
pub fn flops_model(lx: usize, nel: usize) -> u64 {
    let lx = lx as u64;
    nel as u64 * lx * lx * lx * (12 * lx + 18)
}
