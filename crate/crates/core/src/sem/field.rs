use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sem::basis::GllBasis;

/// Per-element nodal values, logically `[e][k][j][i]` with `i` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementField {
    pub nel: usize,
    pub lx: usize,
    pub data: Vec<f64>,
}

impl ElementField {
    pub fn zeros(nel: usize, lx: usize) -> Self {
        ElementField { nel, lx, data: vec![0.0; nel * lx * lx * lx] }
    }

    pub fn constant(nel: usize, lx: usize, value: f64) -> Self {
        ElementField { nel, lx, data: vec![value; nel * lx * lx * lx] }
    }

    pub fn from_vec(nel: usize, lx: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nel * lx * lx * lx {
            return Err(Error::Contract(format!(
                "field data has {} values, expected nel*lx^3 = {}",
                data.len(),
                nel * lx * lx * lx
            )));
        }
        Ok(ElementField { nel, lx, data })
    }

    /// Uniform values in [-1, 1) from a seeded generator.
    pub fn random(nel: usize, lx: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..nel * lx * lx * lx).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ElementField { nel, lx, data }
    }

    #[inline]
    pub fn idx(&self, e: usize, k: usize, j: usize, i: usize) -> usize {
        ((e * self.lx + k) * self.lx + j) * self.lx + i
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &ElementField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    fn same_shape(&self, other: &ElementField) -> bool {
        self.nel == other.nel && self.lx == other.lx
    }
}

/// Geometric factors of every gridpoint. The cross terms are shared by the
/// symmetric metric, so only six metric tensors plus `h1` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomFactors {
    pub g11: ElementField,
    pub g22: ElementField,
    pub g33: ElementField,
    pub g12: ElementField,
    pub g13: ElementField,
    pub g23: ElementField,
    pub h1: ElementField,
}

impl GeomFactors {
    pub fn nel(&self) -> usize {
        self.h1.nel
    }

    pub fn lx(&self) -> usize {
        self.h1.lx
    }

    pub fn fields(&self) -> [&ElementField; 7] {
        [&self.g11, &self.g22, &self.g33, &self.g12, &self.g13, &self.g23, &self.h1]
    }

    pub fn check_consistent(&self) -> Result<()> {
        let h = &self.h1;
        for f in self.fields() {
            if !f.same_shape(h) || f.data.len() != h.data.len() {
                return Err(Error::Contract("geometric factors disagree in shape".into()));
            }
            if f.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract("geometric factors contain non-finite values".into()));
            }
        }
        Ok(())
    }

    /// Largest magnitude over all factors; used to scale tolerances.
    pub fn scale(&self) -> f64 {
        let metric = [&self.g11, &self.g22, &self.g33, &self.g12, &self.g13, &self.g23]
            .iter()
            .fold(0.0f64, |m, f| m.max(f.max_abs()));
        metric * self.h1.max_abs()
    }

    /// Returns the symmetric 3x3 metric at flat gridpoint index `p`.
    pub fn metric_at(&self, p: usize) -> [[f64; 3]; 3] {
        let (a, b, c) = (self.g11.data[p], self.g22.data[p], self.g33.data[p]);
        let (d, e, f) = (self.g12.data[p], self.g13.data[p], self.g23.data[p]);
        [[a, d, e], [d, b, f], [e, f, c]]
    }
}

/// Axis-aligned cubes of side `h`: diagonal metric `w_i w_j w_k (h/2)`, `h1 = 1`.
pub fn box_geometry(nel: usize, lx: usize, h: f64) -> Result<GeomFactors> {
    if nel == 0 {
        return Err(Error::Contract("box_geometry needs nel >= 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Contract(format!("element size h = {h} must be positive")));
    }
    let basis = GllBasis::new(lx)?;
    let w = &basis.weights;
    let mut diag = ElementField::zeros(nel, lx);
    for e in 0..nel {
        for k in 0..lx {
            for j in 0..lx {
                for i in 0..lx {
                    let p = diag.idx(e, k, j, i);
                    diag.data[p] = w[i] * w[j] * w[k] * (h / 2.0);
                }
            }
        }
    }
    let zero = ElementField::zeros(nel, lx);
    Ok(GeomFactors {
        g11: diag.clone(),
        g22: diag.clone(),
        g33: diag,
        g12: zero.clone(),
        g13: zero.clone(),
        g23: zero,
        h1: ElementField::constant(nel, lx, 1.0),
    })
}

/// Seeded per-point SPD metrics `M Mᵀ + 0.1 I` with `M` uniform in [-1, 1),
/// and `h1` uniform in (0.5, 1.5).
pub fn random_spd_geometry(nel: usize, lx: usize, seed: u64) -> GeomFactors {
    const EPS: f64 = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: [ElementField; 7] = std::array::from_fn(|_| ElementField::zeros(nel, lx));
    for p in 0..nel * lx * lx * lx {
        let mut m = [[0.0f64; 3]; 3];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let g = |a: usize, b: usize| -> f64 {
            (0..3).map(|c| m[a][c] * m[b][c]).sum::<f64>() + if a == b { EPS } else { 0.0 }
        };
        out[0].data[p] = g(0, 0);
        out[1].data[p] = g(1, 1);
        out[2].data[p] = g(2, 2);
        out[3].data[p] = g(0, 1);
        out[4].data[p] = g(0, 2);
        out[5].data[p] = g(1, 2);
        out[6].data[p] = loop {
            let h: f64 = rng.gen_range(0.5..1.5);
            if h > 0.5 {
                break h;
            }
        };
    }
    let [g11, g22, g33, g12, g13, g23, h1] = out;
    GeomFactors { g11, g22, g33, g12, g13, g23, h1 }
}
