//! Empirical probability measures over particle ensembles.
//!
//! An [`EmpiricalMeasure`] is an immutable view of N equally weighted atoms in
//! R^d. It exposes the functionals the coefficient models and checkers consume:
//! raw moments `(1/N) sum |x_j|^p`, the mean vector, single and double kernel
//! integrals, and (in one dimension) the exact Wasserstein-p distance via the
//! quantile coupling of order statistics.
//!
//! Immutability is deliberate: a new time step constructs a new view, so the
//! moment caches can never go stale.

use std::collections::BTreeMap;
use std::sync::{OnceLock, RwLock};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("empirical measure needs at least one sample")]
    EmptySample,
    #[error("sample buffer length {len} is not a multiple of dimension {dim}")]
    RaggedSamples { len: usize, dim: usize },
    #[error("non-finite sample value at atom {index}")]
    NonFiniteSample { index: usize },
    #[error("moment order p = {0} rejected; p >= 1 required")]
    MomentOrder(f64),
    #[error("Wasserstein order p = {0} rejected; p >= 1 required")]
    WassersteinOrder(f64),
    #[error("exact Wasserstein distance requires dimension 1, got {0}")]
    WassersteinDimension(usize),
    #[error("kernel returned a non-finite value at atom pair ({i}, {j})")]
    NonFiniteKernel { i: usize, j: usize },
    #[error("paired samples have mismatched lengths {0} and {1}")]
    LengthMismatch(usize, usize),
}

/// N equally weighted atoms in R^d with cached moment functionals.
#[derive(Debug)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
    n: usize,
    dim: usize,
    mean: OnceLock<Vec<f64>>,
    moments: RwLock<BTreeMap<u64, f64>>,
}

impl Clone for EmpiricalMeasure {
    fn clone(&self) -> Self {
        let mean = OnceLock::new();
        if let Some(m) = self.mean.get() {
            let _ = mean.set(m.clone());
        }
        Self {
            samples: self.samples.clone(),
            n: self.n,
            dim: self.dim,
            mean,
            moments: RwLock::new(self.moments.read().expect("moment cache poisoned").clone()),
        }
    }
}

impl EmpiricalMeasure {
    /// Build a measure from a flat row-major buffer of N points in R^dim.
    pub fn new(samples: Vec<f64>, dim: usize) -> Result<Self, MeasureError> {
        if dim == 0 || samples.len() % dim != 0 {
            return Err(MeasureError::RaggedSamples {
                len: samples.len(),
                dim,
            });
        }
        let n = samples.len() / dim;
        if n == 0 {
            return Err(MeasureError::EmptySample);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(MeasureError::NonFiniteSample { index: index / dim });
        }
        Ok(Self {
            samples,
            n,
            dim,
            mean: OnceLock::new(),
            moments: RwLock::new(BTreeMap::new()),
        })
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(samples: &[f64]) -> Result<Self, MeasureError> {
        Self::new(samples.to_vec(), 1)
    }

    /// N atoms at the origin of R^dim (the empirical delta at zero).
    pub fn dirac_zero(n: usize, dim: usize) -> Result<Self, MeasureError> {
        Self::new(vec![0.0; n * dim], dim)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn atom(&self, j: usize) -> &[f64] {
        &self.samples[j * self.dim..(j + 1) * self.dim]
    }

    fn atom_norm(&self, j: usize) -> f64 {
        if self.dim == 1 {
            self.samples[j].abs()
        } else {
            self.atom(j).iter().map(|v| v * v).sum::<f64>().sqrt()
        }
    }

    /// Raw moment `(1/N) sum_j |x_j|^p` for p >= 1; results are cached.
    pub fn raw_moment(&self, p: f64) -> Result<f64, MeasureError> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(MeasureError::MomentOrder(p));
        }
        let key = p.to_bits();
        if let Some(&v) = self.moments.read().expect("moment cache poisoned").get(&key) {
            return Ok(v);
        }
        let value = self.compute_raw_moment(p);
        self.moments
            .write()
            .expect("moment cache poisoned")
            .insert(key, value);
        Ok(value)
    }

    fn compute_raw_moment(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        if p == 2.0 {
            for v in &self.samples {
                acc += v * v;
            }
        } else if p == 1.0 {
            for j in 0..self.n {
                acc += self.atom_norm(j);
            }
        } else {
            for j in 0..self.n {
                acc += self.atom_norm(j).powf(p);
            }
        }
        acc / self.n as f64
    }

    /// `||mu||_p = raw_moment(p)^(1/p)`.
    pub fn moment_norm(&self, p: f64) -> Result<f64, MeasureError> {
        Ok(self.raw_moment(p)?.powf(1.0 / p))
    }

    /// Componentwise average of the atoms.
    pub fn mean_vector(&self) -> &[f64] {
        self.mean.get_or_init(|| {
            let mut m = vec![0.0; self.dim];
            for j in 0..self.n {
                for (k, v) in self.atom(j).iter().enumerate() {
                    m[k] += v;
                }
            }
            let inv = 1.0 / self.n as f64;
            for v in &mut m {
                *v *= inv;
            }
            m
        })
    }

    /// Scalar mean; panics in dimension > 1.
    pub fn mean(&self) -> f64 {
        assert_eq!(self.dim, 1, "scalar mean is only defined in dimension 1");
        self.mean_vector()[0]
    }

    /// `(1/N) sum_j f(x_j)`; rejects non-finite kernel values.
    pub fn kernel_integral(
        &self,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<f64, MeasureError> {
        let mut acc = 0.0;
        for j in 0..self.n {
            let v = f(self.atom(j));
            if !v.is_finite() {
                return Err(MeasureError::NonFiniteKernel { i: j, j });
            }
            acc += v;
        }
        Ok(acc / self.n as f64)
    }

    /// `(1/N^2) sum_{j,k} f(x_j, x_k)`; rejects non-finite kernel values.
    pub fn double_kernel_integral(
        &self,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<f64, MeasureError> {
        let mut acc = 0.0;
        for j in 0..self.n {
            let xj = self.atom(j);
            for k in 0..self.n {
                let v = f(xj, self.atom(k));
                if !v.is_finite() {
                    return Err(MeasureError::NonFiniteKernel { i: j, j: k });
                }
                acc += v;
            }
        }
        Ok(acc / (self.n as f64 * self.n as f64))
    }
}

/// Exact Wasserstein-p distance between one-dimensional empirical measures.
///
/// Equal-mass atoms are coupled through the shared quantile grid: with atom
/// counts N and M this is the common refinement into lcm(N, M) equal-mass
/// pieces, walked with integer breakpoint arithmetic so no refinement is ever
/// materialized. For N == M it reduces to the sorted pairing
/// `((1/N) sum |x_(j) - y_(j)|^p)^(1/p)`, which is the optimal coupling.
pub fn wasserstein_1d(
    p: f64,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
) -> Result<f64, MeasureError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(MeasureError::WassersteinOrder(p));
    }
    if mu.dim() != 1 {
        return Err(MeasureError::WassersteinDimension(mu.dim()));
    }
    if nu.dim() != 1 {
        return Err(MeasureError::WassersteinDimension(nu.dim()));
    }
    let mut xs = mu.samples().to_vec();
    let mut ys = nu.samples().to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    ys.sort_by(|a, b| a.total_cmp(b));

    let (n, m) = (xs.len() as u128, ys.len() as u128);
    let total = (n * m) as f64;
    let mut acc = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0; // consumed mass in units of 1/(n*m)
    while (i as u128) < n && (j as u128) < m {
        let next_i = (i as u128 + 1) * m;
        let next_j = (j as u128 + 1) * n;
        let next = next_i.min(next_j);
        let w = (next - pos) as f64 / total;
        let d = (xs[i] - ys[j]).abs();
        acc += if p == 2.0 {
            w * d * d
        } else if p == 1.0 {
            w * d
        } else {
            w * d.powf(p)
        };
        pos = next;
        if next_i == next {
            i += 1;
        }
        if next_j == next {
            j += 1;
        }
    }
    Ok(root(acc, p))
}

/// The synchronous-coupling upper bound `((1/N) sum |x_j - y_j|^p)^(1/p)`
/// over paired one-dimensional samples. Always an upper bound for the exact
/// Wasserstein distance of the induced measures.
pub fn coupling_bound(p: f64, xs: &[f64], ys: &[f64]) -> Result<f64, MeasureError> {
    coupling_bound_nd(p, xs, ys, 1)
}

/// Paired coupling bound for points in R^dim (flat row-major buffers).
pub fn coupling_bound_nd(
    p: f64,
    xs: &[f64],
    ys: &[f64],
    dim: usize,
) -> Result<f64, MeasureError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(MeasureError::WassersteinOrder(p));
    }
    if xs.len() != ys.len() {
        return Err(MeasureError::LengthMismatch(xs.len(), ys.len()));
    }
    if dim == 0 || xs.len() % dim != 0 {
        return Err(MeasureError::RaggedSamples {
            len: xs.len(),
            dim,
        });
    }
    let n = xs.len() / dim;
    if n == 0 {
        return Err(MeasureError::EmptySample);
    }
    let mut acc = 0.0;
    for j in 0..n {
        let mut d2 = 0.0;
        for k in 0..dim {
            let d = xs[j * dim + k] - ys[j * dim + k];
            d2 += d * d;
        }
        let d = d2.sqrt();
        acc += if p == 2.0 { d * d } else { d.powf(p) };
    }
    Ok(root(acc / n as f64, p))
}

#[inline]
fn root(acc: f64, p: f64) -> f64 {
    if p == 1.0 {
        acc
    } else if p == 2.0 {
        acc.sqrt()
    } else {
        acc.powf(1.0 / p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(xs).unwrap()
    }

    #[test]
    fn raw_moment_examples() {
        assert_eq!(meas(&[1.0, -1.0]).raw_moment(2.0).unwrap(), 1.0);
        assert_eq!(meas(&[3.0]).raw_moment(2.0).unwrap(), 9.0);
        assert_eq!(meas(&[1.0, 2.0, 3.0]).raw_moment(1.0).unwrap(), 2.0);
    }

    #[test]
    fn raw_moment_rejects_low_order() {
        assert!(meas(&[1.0]).raw_moment(0.5).is_err());
        assert!(meas(&[1.0]).raw_moment(f64::NAN).is_err());
    }

    #[test]
    fn jensen_between_mean_and_second_moment() {
        let mu = meas(&[0.3, -1.7, 2.2, 0.9]);
        let m = mu.mean();
        assert!(mu.raw_moment(2.0).unwrap() >= m * m);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(meas(&[1.0, -1.0]).mean(), 0.0);
        assert_eq!(meas(&[2.0, 4.0]).mean(), 3.0);
        assert_eq!(meas(&[0.5, 1.5, 2.5]).mean(), 1.5);
    }

    #[test]
    fn mean_vector_multidim() {
        let mu = EmpiricalMeasure::new(vec![1.0, 0.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(mu.mean_vector(), &[2.0, 2.0]);
    }

    #[test]
    fn kernel_integral_examples() {
        let mu = meas(&[0.25, -3.0, 7.5]);
        assert_eq!(mu.kernel_integral(|_| 1.0).unwrap(), 1.0);
        let pm = meas(&[1.0, -1.0]);
        assert_eq!(pm.double_kernel_integral(|x, y| x[0] * y[0]).unwrap(), 0.0);
        let ab = meas(&[1.0, 2.0]);
        // brute force over the 2x2 grid: (2 + 3 + 3 + 4) / 4
        assert_eq!(ab.double_kernel_integral(|x, y| x[0] + y[0]).unwrap(), 3.0);
    }

    #[test]
    fn kernel_integral_rejects_non_finite() {
        let mu = meas(&[0.0, 1.0]);
        assert!(mu.kernel_integral(|x| 1.0 / x[0]).is_err());
        assert!(mu
            .double_kernel_integral(|x, y| (x[0] * y[0]).ln())
            .is_err());
    }

    #[test]
    fn wasserstein_examples() {
        let mu = meas(&[1.0, -1.0]);
        assert_eq!(wasserstein_1d(2.0, &mu, &mu).unwrap(), 0.0);
        let origin = meas(&[0.0, 0.0]);
        // distance to the delta at zero equals the second moment norm
        assert!((wasserstein_1d(2.0, &mu, &origin).unwrap() - 1.0).abs() < 1e-15);
        let a = meas(&[0.0, 1.0]);
        let b = meas(&[1.0, 2.0]);
        assert!((wasserstein_1d(1.0, &a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn wasserstein_rejects_bad_inputs() {
        let mu = meas(&[1.0]);
        assert!(wasserstein_1d(0.3, &mu, &mu).is_err());
        let two_d = EmpiricalMeasure::new(vec![0.0, 0.0], 2).unwrap();
        assert!(matches!(
            wasserstein_1d(2.0, &two_d, &two_d),
            Err(MeasureError::WassersteinDimension(2))
        ));
    }

    #[test]
    fn wasserstein_unequal_atom_counts() {
        // mu = {0, 1}, nu = {0, 0, 3}: quantile coupling over lcm(2,3)=6 pieces:
        // pieces (2/6)|0-0| + (1/6)|1-0| + (1/6)|1-0|... walk: x=(0,1), y=(0,0,3)
        // u in [0,1/3): |0-0|; [1/3,1/2): |0-0|; [1/2,2/3): |1-0|; [2/3,1): |1-3|
        // W1 = (1/6)*1 + (1/3)*2 = 5/6
        let mu = meas(&[0.0, 1.0]);
        let nu = meas(&[0.0, 0.0, 3.0]);
        assert!((wasserstein_1d(1.0, &mu, &nu).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_bound_examples() {
        assert_eq!(coupling_bound(2.0, &[1.5, -0.5], &[1.5, -0.5]).unwrap(), 0.0);
        let x = [0.0, 1.0];
        let y = [1.0, 0.0];
        assert_eq!(coupling_bound(1.0, &x, &y).unwrap(), 1.0);
        let mx = meas(&x);
        let my = meas(&y);
        assert_eq!(wasserstein_1d(1.0, &mx, &my).unwrap(), 0.0);
        assert!((coupling_bound(2.0, &[1.0, -1.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_bound_rejects_mismatch() {
        assert!(matches!(
            coupling_bound(1.0, &[0.0], &[0.0, 1.0]),
            Err(MeasureError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn cache_matches_recomputation() {
        let mu = meas(&[0.1, -2.3, 4.5, 0.77, -9.1]);
        for p in [1.0, 2.0, 2.5, 6.0] {
            let cached = mu.raw_moment(p).unwrap();
            let again = mu.raw_moment(p).unwrap();
            let direct = mu.compute_raw_moment(p);
            assert_eq!(cached, again);
            assert!((cached - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn identity_against_delta_zero() {
        let mu = meas(&[0.4, -1.2, 3.3, 0.05]);
        let delta = EmpiricalMeasure::dirac_zero(mu.len(), 1).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let w = wasserstein_1d(p, &mu, &delta).unwrap();
            let norm = mu.moment_norm(p).unwrap();
            assert!((w - norm).abs() < 1e-12, "p={p}: {w} vs {norm}");
        }
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(EmpiricalMeasure::from_scalars(&[]).is_err());
        assert!(EmpiricalMeasure::from_scalars(&[f64::NAN]).is_err());
        assert!(EmpiricalMeasure::new(vec![1.0, 2.0, 3.0], 2).is_err());
    }
}
