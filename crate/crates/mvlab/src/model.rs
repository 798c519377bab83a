//! Coefficient models b(x, mu), sigma(x, mu) with declared growth metadata.
//!
//! A model packages the drift and diffusion maps together with the constants
//! it *claims* to satisfy: the local-monotonicity bound L(R) and measure
//! coefficient, polynomial-Lipschitz constants, coercivity, growth, optional
//! dissipativity, and an optional Lyapunov pair (f, f_bar) for exponential
//! integrability. The metadata is user-declared, never inferred; the `verify`
//! module exists to test it rather than trust it.
//!
//! Measure access is functional (mean, moments, kernel integrals), so a model
//! works with any ensemble the measure view was built from.

use std::fmt;
use std::sync::Arc;

use crate::measure::EmpiricalMeasure;

/// Sum of real-exponent power terms `sum_i c_i * r^{e_i}` on r >= 0.
///
/// Used for declared bound functions (L(R), h(R), g(R)) and Lyapunov
/// components, where both evaluation and the leading exponent matter.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPoly {
    terms: Vec<(f64, f64)>,
}

impl PowerPoly {
    pub fn new(terms: Vec<(f64, f64)>) -> Self {
        Self { terms }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![(c, 0.0)])
    }

    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, e)| {
                if e == 0.0 {
                    c
                } else if e == 1.0 {
                    c * r
                } else if e == 2.0 {
                    c * r * r
                } else {
                    c * r.powf(e)
                }
            })
            .sum()
    }

    /// Derivative in r (term-wise power rule).
    pub fn derivative(&self) -> PowerPoly {
        Self::new(
            self.terms
                .iter()
                .filter(|&&(_, e)| e != 0.0)
                .map(|&(c, e)| (c * e, e - 1.0))
                .collect(),
        )
    }

    /// Largest exponent carrying a nonzero coefficient.
    pub fn leading_exponent(&self) -> f64 {
        self.terms
            .iter()
            .filter(|&&(c, _)| c != 0.0)
            .map(|&(_, e)| e)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn leading_coefficient(&self) -> f64 {
        let lead = self.leading_exponent();
        self.terms
            .iter()
            .filter(|&&(_, e)| e == lead)
            .map(|&(c, _)| c)
            .sum()
    }
}

impl fmt::Display for PowerPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (c, e)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*r^{e}")?;
        }
        Ok(())
    }
}

/// Dissipative coercivity claim `2<x,b> + (p-1)||sigma||^2 <= -a|x|^2 + c||mu||_2^2`
/// with a > c > 0, driving exponential decay at rate a - c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipation {
    pub state_coeff: f64,
    pub measure_coeff: f64,
    pub moment_order: f64,
}

impl Dissipation {
    /// Decay constant a - c of the long-horizon theory.
    pub fn decay_constant(&self) -> f64 {
        self.state_coeff - self.measure_coeff
    }
}

/// Lyapunov pair for exponential integrability:
/// `<grad f, b> + 1/2 |grad f . sigma|^2 + 1/2 tr(sigma^T Hess f sigma)
///   <= alpha f(|x|) + beta f_bar(||mu||_2^2)`,
/// together with the growth condition `f(R) - kappa L(R) -> infinity`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub f: PowerPoly,
    pub f_bar: PowerPoly,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

/// Polynomial-Lipschitz claim (drift and the two diffusion conditions).
///
/// Models whose drift is genuinely not locally Lipschitz near some point
/// (signed roots, for instance) decline the claim by omitting this record;
/// checkers then report the drift condition as inconclusive instead of
/// sampling a claim nobody made.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzMeta {
    pub coeff: f64,
    pub drift_exponent: f64,
    pub diffusion_exponent: f64,
}

/// Declared structural constants of a coefficient model.
#[derive(Debug, Clone)]
pub struct GrowthMeta {
    /// Moment order of the measure terms in the local monotonicity bound.
    pub gamma: f64,
    /// Ito exponent q of the monotonicity condition's diffusion weight (q-1).
    pub q: f64,
    /// Moment order p of the coercivity condition's diffusion weight (p-1).
    pub p: f64,
    /// Drift growth exponent (l3) and diffusion growth exponent (l4).
    pub drift_growth_exponent: f64,
    pub diffusion_growth_exponent: f64,
    /// Growth constant multiplying both growth bounds.
    pub growth_coeff: f64,
    /// Radius-dependent part L(R) of the local monotonicity bound.
    pub local_bound: PowerPoly,
    /// Coefficient of the measure moments in the monotonicity bound.
    pub mono_measure_coeff: f64,
    /// Coercivity constant: lhs <= c (1 + |x|^2 + ||mu||_2^2).
    pub coercivity_coeff: f64,
    /// Optional sharpened coercivity bound lhs <= a + b ||mu||_2^2.
    pub coercivity_sharp: Option<(f64, f64)>,
    /// Optional polynomial Lipschitz claim.
    pub lipschitz: Option<LipschitzMeta>,
    /// Optional dissipativity claim (long-horizon decay).
    pub dissipation: Option<Dissipation>,
}

impl GrowthMeta {
    /// Structural sanity of the declared constants.
    pub fn validate(&self) -> Result<(), String> {
        if self.gamma < 2.0 {
            return Err(format!("gamma = {} must be >= 2", self.gamma));
        }
        if self.q < 2.0 || self.p < 2.0 {
            return Err(format!("q = {}, p = {} must be >= 2", self.q, self.p));
        }
        for (name, v) in [
            ("drift growth exponent", self.drift_growth_exponent),
            ("diffusion growth exponent", self.diffusion_growth_exponent),
        ] {
            if v < 1.0 {
                return Err(format!("{name} = {v} must be >= 1"));
            }
        }
        if let Some(l) = &self.lipschitz {
            if l.drift_exponent < 1.0 || l.diffusion_exponent < 1.0 {
                return Err("Lipschitz exponents must be >= 1".into());
            }
            if l.coeff <= 0.0 {
                return Err("Lipschitz coefficient must be positive".into());
            }
        }
        for (name, v) in [
            ("growth coefficient", self.growth_coeff),
            ("monotonicity measure coefficient", self.mono_measure_coeff),
            ("coercivity coefficient", self.coercivity_coeff),
        ] {
            if v <= 0.0 {
                return Err(format!("{name} = {v} must be positive"));
            }
        }
        if let Some(d) = &self.dissipation {
            if !(d.state_coeff > d.measure_coeff && d.measure_coeff > 0.0) {
                return Err(format!(
                    "dissipation requires state coeff > measure coeff > 0, got {} and {}",
                    d.state_coeff, d.measure_coeff
                ));
            }
        }
        Ok(())
    }
}

/// Drift/diffusion pair over (state, empirical measure) plus declared metadata.
///
/// `drift` writes b(x, mu) into `out` (length d); `diffusion` writes the
/// d x m1 matrix row-major into `out`. Implementations must be pure: the
/// integrator calls them concurrently across particles. Non-finite outputs
/// are legal here and are caught by the integrator, which turns them into
/// structured blow-up diagnostics.
pub trait CoefficientModel: Send + Sync {
    /// State dimension d and driving noise dimension m1.
    fn dims(&self) -> (usize, usize);

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    fn diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]);

    fn growth_meta(&self) -> &GrowthMeta;

    fn lyapunov(&self) -> Option<&LyapunovSpec> {
        None
    }

    fn name(&self) -> &str;
}

/// Scalar drift evaluation for one-dimensional models.
pub fn drift_1d(model: &dyn CoefficientModel, x: f64, mu: &EmpiricalMeasure) -> f64 {
    let mut out = [0.0];
    model.drift(&[x], mu, &mut out);
    out[0]
}

/// Scalar diffusion evaluation for one-dimensional models.
pub fn diffusion_1d(model: &dyn CoefficientModel, x: f64, mu: &EmpiricalMeasure) -> f64 {
    let mut out = [0.0];
    model.diffusion(&[x], mu, &mut out);
    out[0]
}

/// Signed real cube root: sign(x) |x|^(1/3).
#[inline]
pub fn signed_cbrt(x: f64) -> f64 {
    x.cbrt()
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

/// dX = (-X - X (E X)^2) dt + (X + E X) dW.
///
/// The squared-mean drift makes the measure dependence quadratic, hence only
/// locally Lipschitz in Wasserstein distance.
#[derive(Debug, Clone)]
pub struct MeanSquare {
    meta: GrowthMeta,
}

impl Default for MeanSquare {
    fn default() -> Self {
        Self::new()
    }
}

impl MeanSquare {
    pub fn new() -> Self {
        Self {
            meta: GrowthMeta {
                gamma: 2.0,
                q: 2.0,
                p: 2.0,
                drift_growth_exponent: 3.0,
                diffusion_growth_exponent: 1.0,
                growth_coeff: 2.0,
                // 2<x-y, b(x,mu)-b(y,nu)> + |sig-sig|^2
                //   <= (R^2 + 2 + 2||mu||_2^2 + 2||nu||_2^2)(|x-y|^2 + W_2^2)
                local_bound: PowerPoly::new(vec![(1.0, 2.0), (2.0, 0.0)]),
                mono_measure_coeff: 2.0,
                coercivity_coeff: 2.0,
                coercivity_sharp: None,
                lipschitz: Some(LipschitzMeta {
                    coeff: 3.0,
                    drift_exponent: 2.0,
                    diffusion_exponent: 1.0,
                }),
                dissipation: None,
            },
        }
    }
}

impl CoefficientModel for MeanSquare {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let m = mu.mean_vector()[0];
        out[0] = -x[0] - x[0] * m * m;
    }

    fn diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        out[0] = x[0] + mu.mean_vector()[0];
    }

    fn growth_meta(&self) -> &GrowthMeta {
        &self.meta
    }

    fn name(&self) -> &str {
        "mean-square"
    }
}

/// dX = (-18 X^5 - X^(1/3) (E X)^4 + 2) dt + (X^2 + E X) dW.
///
/// Super-linear in both state (quintic drift, quadratic diffusion) and
/// measure (quartic mean). The cube root uses the signed real root, which
/// keeps the drift continuous and monotone decreasing through zero. Note the
/// drift is *not* polynomially Lipschitz near the origin (the root has
/// unbounded slope there), so no Lipschitz claim is declared; the constant
/// +2 term also rules out a dissipativity claim near zero.
#[derive(Debug, Clone)]
pub struct QuinticMean {
    meta: GrowthMeta,
    lyapunov: LyapunovSpec,
}

impl Default for QuinticMean {
    fn default() -> Self {
        Self::new()
    }
}

impl QuinticMean {
    pub fn new() -> Self {
        Self {
            meta: GrowthMeta {
                gamma: 6.0,
                q: 2.0,
                p: 2.0,
                drift_growth_exponent: 5.0,
                diffusion_growth_exponent: 2.0,
                growth_coeff: 21.0,
                // L(R) = R^(2/3) + 2
                local_bound: PowerPoly::new(vec![(1.0, 2.0 / 3.0), (2.0, 0.0)]),
                mono_measure_coeff: 2.0,
                coercivity_coeff: 6.0,
                // sharpened bound 2<x,b> + |sigma|^2 <= 6 + 2 ||mu||_2^2
                coercivity_sharp: Some((6.0, 2.0)),
                lipschitz: None,
                dissipation: None,
            },
            lyapunov: LyapunovSpec {
                // f(r) = r^2/4 + 1, f_bar(u) = u^(3/2) + u^2
                f: PowerPoly::new(vec![(0.25, 2.0), (1.0, 0.0)]),
                f_bar: PowerPoly::new(vec![(1.0, 1.5), (1.0, 2.0)]),
                alpha: 2.0,
                beta: 1.0,
                kappa: 1.0,
            },
        }
    }
}

impl CoefficientModel for QuinticMean {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let m = mu.mean_vector()[0];
        let m2 = m * m;
        let x1 = x[0];
        let x2 = x1 * x1;
        out[0] = -18.0 * x2 * x2 * x1 - signed_cbrt(x1) * m2 * m2 + 2.0;
    }

    fn diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        out[0] = x[0] * x[0] + mu.mean_vector()[0];
    }

    fn growth_meta(&self) -> &GrowthMeta {
        &self.meta
    }

    fn lyapunov(&self) -> Option<&LyapunovSpec> {
        Some(&self.lyapunov)
    }

    fn name(&self) -> &str {
        "quintic-mean"
    }
}

/// dX = (-theta X + kappa E X) dt + sigma_c X dW.
///
/// Globally Lipschitz benchmark with a closed moment system: with
/// m = E X and s = E X^2,
///   m' = (kappa - theta) m,
///   s' = (sigma_c^2 - 2 theta) s + 2 kappa m^2.
/// Dissipative for the default parameters, so it backs the long-horizon
/// decay estimates with an exact oracle.
#[derive(Debug, Clone)]
pub struct LinearMeanField {
    pub theta: f64,
    pub kappa: f64,
    pub sigma_c: f64,
    meta: GrowthMeta,
}

impl Default for LinearMeanField {
    fn default() -> Self {
        Self::new(2.0, 0.5, 0.5)
    }
}

impl LinearMeanField {
    pub fn new(theta: f64, kappa: f64, sigma_c: f64) -> Self {
        assert!(theta > 0.0 && kappa >= 0.0, "need theta > 0, kappa >= 0");
        // coercivity via Young: 2x(-tx + km) + (p-1)s^2x^2
        //   <= (-2t + k + (p-1)s^2) x^2 + k m^2
        let p = 2.0;
        let state = 2.0 * theta - kappa - (p - 1.0) * sigma_c * sigma_c;
        let measure = kappa.max(1e-12);
        let dissipation = (state > measure).then_some(Dissipation {
            state_coeff: state,
            measure_coeff: measure,
            moment_order: p,
        });
        let lip = theta.max(kappa).max(sigma_c) + 1.0;
        Self {
            theta,
            kappa,
            sigma_c,
            meta: GrowthMeta {
                gamma: 2.0,
                q: 2.0,
                p,
                drift_growth_exponent: 1.0,
                diffusion_growth_exponent: 1.0,
                growth_coeff: theta + kappa + sigma_c,
                local_bound: PowerPoly::constant(1.0),
                mono_measure_coeff: 1.0,
                coercivity_coeff: kappa.max(1.0),
                coercivity_sharp: None,
                lipschitz: Some(LipschitzMeta {
                    coeff: lip,
                    drift_exponent: 1.0,
                    diffusion_exponent: 1.0,
                }),
                dissipation,
            },
        }
    }

    /// Moment trajectory (E X, E X^2) on the requested time grid, integrated
    /// with classic fourth-order Runge-Kutta substeps of size <= `max_dt`.
    pub fn moment_ode(&self, m0: f64, s0: f64, times: &[f64], max_dt: f64) -> Vec<(f64, f64, f64)> {
        assert!(max_dt > 0.0);
        let rhs = |m: f64, s: f64| -> (f64, f64) {
            (
                (self.kappa - self.theta) * m,
                (self.sigma_c * self.sigma_c - 2.0 * self.theta) * s + 2.0 * self.kappa * m * m,
            )
        };
        let mut out = Vec::with_capacity(times.len());
        let (mut t, mut m, mut s) = (0.0, m0, s0);
        for &target in times {
            assert!(target >= t, "observation times must be non-decreasing");
            while t < target - 1e-15 {
                let dt = max_dt.min(target - t);
                let (k1m, k1s) = rhs(m, s);
                let (k2m, k2s) = rhs(m + 0.5 * dt * k1m, s + 0.5 * dt * k1s);
                let (k3m, k3s) = rhs(m + 0.5 * dt * k2m, s + 0.5 * dt * k2s);
                let (k4m, k4s) = rhs(m + dt * k3m, s + dt * k3s);
                m += dt / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
                s += dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
                t += dt;
            }
            out.push((target, m, s));
        }
        out
    }
}

impl CoefficientModel for LinearMeanField {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        out[0] = -self.theta * x[0] + self.kappa * mu.mean_vector()[0];
    }

    fn diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let _ = mu;
        out[0] = self.sigma_c * x[0];
    }

    fn growth_meta(&self) -> &GrowthMeta {
        &self.meta
    }

    fn name(&self) -> &str {
        "linear-mean-field"
    }
}

/// Drift as a double kernel integral and diffusion as a single kernel
/// integral over the measure:
///   b(x, mu) = (1/N^2) sum_{j,k} f(x, y_j, y_k),
///   sigma(x, mu) = (1/N) sum_j  g(x, y_j).
///
/// One-dimensional. The caller owns the obligation that the kernels'
/// derivatives grow at most linearly; that property cannot be verified here
/// for arbitrary closures. Evaluation is O(N^2) per particle, so this is a
/// correctness reference, not a large-N workhorse.
#[derive(Clone)]
pub struct DoubleKernel {
    drift_kernel: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    diffusion_kernel: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    meta: GrowthMeta,
    label: String,
}

impl DoubleKernel {
    pub fn new(
        drift_kernel: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        diffusion_kernel: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        meta: GrowthMeta,
        label: impl Into<String>,
    ) -> Self {
        Self {
            drift_kernel: Arc::new(drift_kernel),
            diffusion_kernel: Arc::new(diffusion_kernel),
            meta,
            label: label.into(),
        }
    }

    /// Permissive default metadata for ad-hoc kernels.
    pub fn default_meta() -> GrowthMeta {
        GrowthMeta {
            gamma: 2.0,
            q: 2.0,
            p: 2.0,
            drift_growth_exponent: 2.0,
            diffusion_growth_exponent: 1.0,
            growth_coeff: 10.0,
            local_bound: PowerPoly::new(vec![(1.0, 2.0), (10.0, 0.0)]),
            mono_measure_coeff: 10.0,
            coercivity_coeff: 10.0,
            coercivity_sharp: None,
            lipschitz: None,
            dissipation: None,
            long_horizon: None,
        }
    }
}

impl fmt::Debug for DoubleKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DoubleKernel")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

impl CoefficientModel for DoubleKernel {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn drift(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let k = &self.drift_kernel;
        out[0] = mu
            .double_kernel_integral(|y, z| k(x[0], y[0], z[0]))
            .unwrap_or(f64::NAN);
    }

    fn diffusion(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let k = &self.diffusion_kernel;
        out[0] = mu
            .kernel_integral(|y| k(x[0], y[0]))
            .unwrap_or(f64::NAN);
    }

    fn growth_meta(&self) -> &GrowthMeta {
        &self.meta
    }

    fn name(&self) -> &str {
        &self.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(xs).unwrap()
    }

    #[test]
    fn quintic_drift_examples() {
        let model = QuinticMean::new();
        let zero_mean = meas(&[0.0]);
        assert_eq!(drift_1d(&model, 0.0, &zero_mean), 2.0);
        assert_eq!(drift_1d(&model, 1.0, &zero_mean), -16.0);
        let unit_mean = meas(&[1.0]);
        assert_eq!(drift_1d(&model, -1.0, &unit_mean), 21.0);
    }

    #[test]
    fn quintic_diffusion_examples() {
        let model = QuinticMean::new();
        assert_eq!(diffusion_1d(&model, 0.0, &meas(&[0.0])), 0.0);
        assert_eq!(diffusion_1d(&model, 2.0, &meas(&[1.0])), 5.0);
    }

    #[test]
    fn mean_square_examples() {
        let model = MeanSquare::new();
        let unit = meas(&[1.0]);
        assert_eq!(diffusion_1d(&model, 1.0, &unit), 2.0);
        assert_eq!(drift_1d(&model, 1.0, &unit), -2.0);
    }

    #[test]
    fn signed_root_symmetry() {
        // with zero mean the measure term vanishes and
        // b(-x) = -b(x) + 4: the +2 offset breaks odd symmetry by exactly 4
        let model = QuinticMean::new();
        let mu = meas(&[1.0, -1.0]);
        for x in [0.3, 1.7, 2.4, 0.01] {
            let plus = drift_1d(&model, x, &mu);
            let minus = drift_1d(&model, -x, &mu);
            assert!((minus + plus - 4.0).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn double_kernel_constant_drift() {
        let model = DoubleKernel::new(
            |_, _, _| 2.5,
            |_, _| 0.0,
            DoubleKernel::default_meta(),
            "constant-kernel",
        );
        for atoms in [vec![0.0], vec![1.0, -3.0, 5.5]] {
            let mu = meas(&atoms);
            assert_eq!(drift_1d(&model, 0.7, &mu), 2.5);
        }
    }

    #[test]
    fn linear_moment_ode_matches_closed_form() {
        let model = LinearMeanField::default();
        let (m0, s0) = (1.0, 1.0);
        let times = [0.25, 1.0, 3.0];
        let got = model.moment_ode(m0, s0, &times, 1e-4);
        for (t, m, s) in got {
            let m_exact = m0 * (-1.5 * t).exp();
            // s' = -3.75 s + m0^2 e^{-3t}
            let forcing = m0 * m0 / 0.75;
            let s_exact = (-3.75 * t).exp() * (s0 - forcing) + forcing * (-3.0 * t).exp();
            assert!((m - m_exact).abs() < 1e-10, "t={t}");
            assert!((s - s_exact).abs() < 1e-10, "t={t}: {s} vs {s_exact}");
        }
    }

    #[test]
    fn linear_dissipation_constants() {
        let meta = LinearMeanField::default().growth_meta().clone();
        let d = meta.dissipation.expect("default parameters are dissipative");
        assert!((d.state_coeff - 3.25).abs() < 1e-12);
        assert!((d.measure_coeff - 0.5).abs() < 1e-12);
        assert!((d.decay_constant() - 2.75).abs() < 1e-12);
    }

    #[test]
    fn metadata_validates() {
        for meta in [
            MeanSquare::new().growth_meta().clone(),
            QuinticMean::new().growth_meta().clone(),
            LinearMeanField::default().growth_meta().clone(),
        ] {
            meta.validate().unwrap();
        }
    }

    #[test]
    fn power_poly_eval_and_derivative() {
        let f = PowerPoly::new(vec![(0.25, 2.0), (1.0, 0.0)]);
        assert_eq!(f.eval(2.0), 2.0);
        let df = f.derivative();
        assert_eq!(df.eval(2.0), 1.0);
        assert_eq!(f.leading_exponent(), 2.0);
        let l_r = PowerPoly::new(vec![(1.0, 2.0 / 3.0), (2.0, 0.0)]);
        assert!((l_r.eval(8.0) - 6.0).abs() < 1e-12);
    }
}
