//! Propagation-of-chaos error estimation.
//!
//! Two estimators of the same gap:
//!
//! * **Splitting**: simulate the full N-particle system and two disjoint
//!   half-systems of N/2 particles each. The halves reuse the full system's
//!   Brownian streams (ids 1..N/2 and N/2+1..N) and their own half-empirical
//!   measures; the reported error is the root-mean-square terminal distance
//!   between matched particles,
//!   `sqrt((1/N) sum_j (X_T^j - X~_T^j)^2)`.
//! * **Decoupling**: couple each interacting particle to a non-interacting
//!   copy driven by the same stream, with the copy's law approximated by an
//!   independent reference cloud of M_ref particles.
//!
//! Both vanish identically for measure-independent models (the coupled
//! systems then consume literally the same noise and coefficients), which is
//! the built-in self-test of the path-reuse machinery.

use rayon::prelude::*;
use thiserror::Error;

use crate::integrator::{
    sample_initial_with_ids, step_particle_system, step_with_external_measure, steps_for,
    BrownianDriver, Ensemble, InitialLaw, IntegratorError, SchemeConfig, SchemeKind,
};
use crate::model::CoefficientModel;
use crate::stats::{linear_fit, mean_and_se};

/// Particle ids of reference clouds start here so they can never collide
/// with primary system ids.
const REFERENCE_ID_OFFSET: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("splitting estimator needs an even particle count >= 2, got {0}")]
    OddParticleCount(usize),
    #[error("need at least one level, got {0}")]
    NoLevels(usize),
    #[error("need at least one replication, got {0}")]
    NoReplications(u32),
    #[error("rate function needs q~ > 2, got {0}")]
    RateMomentOrder(f64),
    #[error("rate function is undefined for d = {d}, q~ = {q_tilde}: {reason}")]
    RateExclusion {
        d: u32,
        q_tilde: f64,
        reason: &'static str,
    },
    #[error("decay fit needs at least 3 positive observations, got {0}")]
    NotEnoughDecayData(usize),
    #[error("all {0} sweep levels failed")]
    AllLevelsFailed(usize),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Root-mean-square distance between matched particles of two ensembles.
fn rms_gap(a: &Ensemble, b_first: &Ensemble, b_second: &Ensemble) -> f64 {
    let dim = a.dim();
    let n = a.len();
    let half = b_first.len();
    let mut acc = 0.0;
    for j in 0..n {
        let other = if j < half {
            b_first.particle(j)
        } else {
            b_second.particle(j - half)
        };
        for (u, v) in a.particle(j).iter().zip(other) {
            let d = u - v;
            acc += d * d;
        }
    }
    let _ = dim;
    (acc / n as f64).sqrt()
}

fn rms_pairwise(a: &Ensemble, b: &Ensemble) -> f64 {
    let mut acc = 0.0;
    for (u, v) in a.states().iter().zip(b.states()) {
        let d = u - v;
        acc += d * d;
    }
    (acc / a.len() as f64).sqrt()
}

/// Splitting-estimator gap at the terminal time.
pub fn splitting_error<M: CoefficientModel + ?Sized>(
    model: &M,
    law: &InitialLaw,
    n: usize,
    t_final: f64,
    scheme: &SchemeConfig,
    driver: &BrownianDriver,
) -> Result<f64, ChaosError> {
    let series = splitting_gap_series(model, law, n, t_final, scheme, driver, &[t_final])?;
    Ok(series.last().expect("one observation requested").1)
}

/// Splitting-estimator gap observed along the trajectory.
///
/// The three systems (full, two halves) advance in lockstep off the shared
/// driver; matched particles share initial values and increments by id.
pub fn splitting_gap_series<M: CoefficientModel + ?Sized>(
    model: &M,
    law: &InitialLaw,
    n: usize,
    t_final: f64,
    scheme: &SchemeConfig,
    driver: &BrownianDriver,
    observe_at: &[f64],
) -> Result<Vec<(f64, f64)>, ChaosError> {
    if n < 2 || n % 2 != 0 {
        return Err(ChaosError::OddParticleCount(n));
    }
    let (dim, _) = model.dims();
    let half = n / 2;
    let total_steps = steps_for(scheme.dt, t_final)?;
    let obs = resolve_obs(observe_at, scheme.dt, total_steps)?;

    let mut full = sample_initial_with_ids(law, (1..=n as u64).collect(), dim, driver)?;
    let mut lo = sample_initial_with_ids(law, (1..=half as u64).collect(), dim, driver)?;
    let mut hi =
        sample_initial_with_ids(law, (half as u64 + 1..=n as u64).collect(), dim, driver)?;

    let mut out = Vec::with_capacity(obs.len());
    let mut next = obs.iter().copied().peekable();
    if next.peek() == Some(&0) {
        next.next();
        out.push((0.0, rms_gap(&full, &lo, &hi)));
    }
    for step in 1..=total_steps {
        step_particle_system(&mut full, model, scheme, driver)?;
        step_particle_system(&mut lo, model, scheme, driver)?;
        step_particle_system(&mut hi, model, scheme, driver)?;
        if next.peek() == Some(&step) {
            next.next();
            let t = if step == total_steps {
                t_final
            } else {
                step as f64 * scheme.dt
            };
            out.push((t, rms_gap(&full, &lo, &hi)));
        }
    }
    Ok(out)
}

fn resolve_obs(times: &[f64], dt: f64, total: u64) -> Result<Vec<u64>, ChaosError> {
    let mut steps = Vec::with_capacity(times.len());
    for &t in times {
        let k = (t / dt).round();
        if !(0.0..=total as f64).contains(&k) || (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(ChaosError::Integrator(
                IntegratorError::ObservationOffGrid(t),
            ));
        }
        steps.push(k as u64);
    }
    steps.sort_unstable();
    steps.dedup();
    Ok(steps)
}

/// One level of a chaos sweep: replicated splitting errors at a fixed N.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub n_particles: usize,
    pub errors: Vec<f64>,
    pub mean_error: f64,
    pub std_error: f64,
}

/// A sweep level that could not be completed (scheme divergence is an
/// observable outcome, not a crash).
#[derive(Debug, Clone)]
pub struct FailedLevel {
    pub n_particles: usize,
    pub message: String,
}

/// Error table of a chaos sweep over doubling particle counts.
#[derive(Debug, Clone)]
pub struct ChaosReport {
    pub horizon: f64,
    pub replications: u32,
    pub levels: Vec<LevelResult>,
    pub failed: Vec<FailedLevel>,
    /// log2(mean error) differences between successive levels.
    pub slopes: Vec<f64>,
    /// Least-squares slope of log2(mean error) against log2(N).
    pub fitted_slope: Option<f64>,
}

/// Run `splitting_error` over `levels` doubling particle counts starting at
/// `n1`, averaging `replications` independently seeded replications per
/// level. Replications are parallel and deterministically seeded from
/// (seed, level, replication), so the report does not depend on thread count.
#[allow(clippy::too_many_arguments)]
pub fn run_chaos_sweep<M: CoefficientModel + ?Sized>(
    model: &M,
    law: &InitialLaw,
    n1: usize,
    levels: usize,
    t_final: f64,
    replications: u32,
    scheme: &SchemeConfig,
    seed: u64,
) -> Result<ChaosReport, ChaosError> {
    if levels == 0 {
        return Err(ChaosError::NoLevels(levels));
    }
    if replications == 0 {
        return Err(ChaosError::NoReplications(replications));
    }
    if n1 < 2 || n1 % 2 != 0 {
        return Err(ChaosError::OddParticleCount(n1));
    }
    let base = BrownianDriver::new(seed);
    let tasks: Vec<(usize, u32)> = (0..levels)
        .flat_map(|l| (0..replications).map(move |r| (l, r)))
        .collect();
    let results: Vec<(usize, u32, Result<f64, String>)> = tasks
        .par_iter()
        .map(|&(level, rep)| {
            let n = n1 << level;
            let driver = base.derive(((level as u64) << 32) | rep as u64);
            let res = splitting_error(model, law, n, t_final, scheme, &driver)
                .map_err(|e| e.to_string());
            (level, rep, res)
        })
        .collect();

    let mut level_errors: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let mut failures: Vec<FailedLevel> = Vec::new();
    for (level, _rep, res) in results {
        match res {
            Ok(err) => level_errors[level].push(err),
            Err(message) => failures.push(FailedLevel {
                n_particles: n1 << level,
                message,
            }),
        }
    }

    let mut level_results = Vec::new();
    for (level, errors) in level_errors.into_iter().enumerate() {
        if errors.is_empty() {
            continue;
        }
        let (mean, se) = mean_and_se(&errors);
        level_results.push(LevelResult {
            n_particles: n1 << level,
            errors,
            mean_error: mean,
            std_error: se,
        });
    }
    if level_results.is_empty() {
        return Err(ChaosError::AllLevelsFailed(levels));
    }

    let slopes: Vec<f64> = level_results
        .windows(2)
        .map(|w| (w[1].mean_error / w[0].mean_error).log2())
        .collect();
    let fitted_slope = if level_results.len() >= 2 {
        let xs: Vec<f64> = level_results
            .iter()
            .map(|l| (l.n_particles as f64).log2())
            .collect();
        let ys: Vec<f64> = level_results.iter().map(|l| l.mean_error.log2()).collect();
        Some(linear_fit(&xs, &ys).0)
    } else {
        None
    };

    Ok(ChaosReport {
        horizon: t_final,
        replications,
        levels: level_results,
        failed: failures,
        slopes,
        fitted_slope,
    })
}

/// Decoupling-estimator gap: interacting particles vs non-interacting copies
/// whose law is approximated by an independent reference cloud of `m_ref`
/// particles (all systems share the driver's seed; the copies reuse the
/// interacting particles' streams, the reference cloud has its own).
pub fn decoupled_error<M: CoefficientModel + ?Sized>(
    model: &M,
    law: &InitialLaw,
    n: usize,
    m_ref: usize,
    t_final: f64,
    scheme: &SchemeConfig,
    driver: &BrownianDriver,
) -> Result<f64, ChaosError> {
    if n == 0 || m_ref == 0 {
        return Err(ChaosError::OddParticleCount(n.max(1)));
    }
    if m_ref < 8 * n {
        log::warn!(
            "reference cloud m_ref = {m_ref} is small relative to n = {n}; \
             the decoupled limit will be under-resolved"
        );
    }
    let (dim, _) = model.dims();
    let ids: Vec<u64> = (1..=n as u64).collect();
    let ref_ids: Vec<u64> = (0..m_ref as u64).map(|k| REFERENCE_ID_OFFSET + k).collect();
    let mut interacting = sample_initial_with_ids(law, ids.clone(), dim, driver)?;
    let mut copies = sample_initial_with_ids(law, ids, dim, driver)?;
    let mut reference = sample_initial_with_ids(law, ref_ids, dim, driver)?;
    let total_steps = steps_for(scheme.dt, t_final)?;
    for _ in 0..total_steps {
        let ref_measure = reference.measure().map_err(IntegratorError::from)?;
        step_particle_system(&mut interacting, model, scheme, driver)?;
        step_with_external_measure(
            &mut copies,
            &ref_measure,
            model,
            scheme.kind,
            scheme.dt,
            driver,
        )?;
        step_particle_system(&mut reference, model, scheme, driver)?;
    }
    Ok(rms_pairwise(&interacting, &copies))
}

/// Theoretical empirical-measure Wasserstein rate Phi(N), up to the unknown
/// dimension/moment constant:
///
/// ```text
/// Phi(N) = N^{-1/2}             + N^{-(q~-2)/q~}   d < 4, q~ != 4
///        = N^{-1/2} log(1 + N)  + N^{-(q~-2)/q~}   d = 4, q~ != 4
///        = N^{-2/d}             + N^{-(q~-2)/q~}   d > 4, q~ != d/(d-2)
/// ```
pub fn phi_rate(n: u64, d: u32, q_tilde: f64) -> Result<f64, ChaosError> {
    if !(q_tilde > 2.0) || !q_tilde.is_finite() {
        return Err(ChaosError::RateMomentOrder(q_tilde));
    }
    if d == 0 {
        return Err(ChaosError::RateExclusion {
            d,
            q_tilde,
            reason: "dimension must be >= 1",
        });
    }
    if d <= 4 && q_tilde == 4.0 {
        return Err(ChaosError::RateExclusion {
            d,
            q_tilde,
            reason: "q~ = 4 is excluded for d <= 4",
        });
    }
    if d > 4 && q_tilde == d as f64 / (d as f64 - 2.0) {
        return Err(ChaosError::RateExclusion {
            d,
            q_tilde,
            reason: "q~ = d/(d-2) is excluded for d > 4",
        });
    }
    let nf = n as f64;
    let moment_term = nf.powf(-(q_tilde - 2.0) / q_tilde);
    let value = match d.cmp(&4) {
        std::cmp::Ordering::Less => nf.powf(-0.5) + moment_term,
        std::cmp::Ordering::Equal => nf.powf(-0.5) * (1.0 + nf).ln() + moment_term,
        std::cmp::Ordering::Greater => nf.powf(-2.0 / d as f64) + moment_term,
    };
    Ok(value)
}

/// Tabulated Phi(N) curve for a fixed dimension and moment order.
#[derive(Debug, Clone)]
pub struct RateCurve {
    pub d: u32,
    pub q_tilde: f64,
    pub values: Vec<(u64, f64)>,
}

impl RateCurve {
    pub fn new(d: u32, q_tilde: f64, ns: &[u64]) -> Result<Self, ChaosError> {
        let values = ns
            .iter()
            .map(|&n| phi_rate(n, d, q_tilde).map(|v| (n, v)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { d, q_tilde, values })
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1].1 < w[0].1)
    }
}

/// Least-squares exponential decay fit of a positive time series.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Slope of log theta(t) against t.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub used: usize,
    pub excluded: usize,
}

/// Fit `log theta(t) = intercept + rate * t` over the positive observations.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit, ChaosError> {
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    let mut excluded = 0usize;
    for &(t, theta) in series {
        if theta > 0.0 && theta.is_finite() {
            xs.push(t);
            ys.push(theta.ln());
        } else {
            excluded += 1;
        }
    }
    if excluded > 0 {
        log::warn!("fit_decay excluded {excluded} non-positive observations");
    }
    if xs.len() < 3 {
        return Err(ChaosError::NotEnoughDecayData(xs.len()));
    }
    let (rate, intercept, r2) = linear_fit(&xs, &ys);
    Ok(DecayFit {
        rate,
        intercept,
        r_squared: r2,
        used: xs.len(),
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::EmpiricalMeasure;
    use crate::model::{GrowthMeta, DoubleKernel, MeanSquare};

    /// b = -x, sigma = 1/2, no measure dependence at all.
    struct PureSde(GrowthMeta);

    impl CoefficientModel for PureSde {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }
        fn drift(&self, x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
            out[0] = -x[0];
        }
        fn diffusion(&self, _x: &[f64], _mu: &EmpiricalMeasure, out: &mut [f64]) {
            out[0] = 0.5;
        }
        fn growth_meta(&self) -> &GrowthMeta {
            &self.0
        }
        fn name(&self) -> &str {
            "pure-sde"
        }
    }

    #[test]
    fn measure_independent_model_has_zero_splitting_error() {
        let model = PureSde(DoubleKernel::default_meta());
        let law = InitialLaw::Normal { mean: 0.0, var: 1.0 };
        let driver = BrownianDriver::new(21);
        let err = splitting_error(&model, &law, 16, 0.5, &SchemeConfig::tamed(1e-2), &driver)
            .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn measure_independent_model_has_zero_decoupled_error() {
        let model = PureSde(DoubleKernel::default_meta());
        let law = InitialLaw::Normal { mean: 0.0, var: 1.0 };
        let driver = BrownianDriver::new(22);
        let err = decoupled_error(&model, &law, 8, 64, 0.25, &SchemeConfig::tamed(1e-2), &driver)
            .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn splitting_rejects_odd_counts() {
        let model = MeanSquare::new();
        let law = InitialLaw::PointMass(0.0);
        let driver = BrownianDriver::new(1);
        assert!(matches!(
            splitting_error(&model, &law, 15, 0.1, &SchemeConfig::tamed(1e-2), &driver),
            Err(ChaosError::OddParticleCount(15))
        ));
    }

    #[test]
    fn splitting_hand_check_two_particles_one_step() {
        // one tamed step, dt = T: reproduce the full and half systems by hand
        let model = MeanSquare::new();
        let law = InitialLaw::Normal { mean: 0.0, var: 1.0 };
        let driver = BrownianDriver::new(777);
        let dt = 0.25;
        let got = splitting_error(&model, &law, 2, dt, &SchemeConfig::tamed(dt), &driver)
            .unwrap();

        let mut xi = [0.0f64; 2];
        driver.initial_normals(1, &mut xi[0..1]);
        driver.initial_normals(2, &mut xi[1..2]);
        let mut dw = [0.0f64; 2];
        driver.increments(1, 0, dt.sqrt(), &mut dw[0..1]);
        driver.increments(2, 0, dt.sqrt(), &mut dw[1..2]);
        let tamed_step = |x: f64, m: f64, w: f64| {
            let b = -x - x * m * m;
            let s = x + m;
            let bs = 1.0 / (1.0 + dt * b.abs());
            let ss = 1.0 / (1.0 + dt * s * s).sqrt();
            x + b * bs * dt + s * ss * w
        };
        let m_full = (xi[0] + xi[1]) / 2.0;
        let full = [tamed_step(xi[0], m_full, dw[0]), tamed_step(xi[1], m_full, dw[1])];
        let halves = [tamed_step(xi[0], xi[0], dw[0]), tamed_step(xi[1], xi[1], dw[1])];
        let expected = (((full[0] - halves[0]).powi(2) + (full[1] - halves[1]).powi(2)) / 2.0)
            .sqrt();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
        assert!(got > 0.0);
    }

    #[test]
    fn sweep_single_level_single_rep_matches_direct_call() {
        let model = MeanSquare::new();
        let law = InitialLaw::Normal { mean: 0.0, var: 1.0 };
        let scheme = SchemeConfig::tamed(1e-2);
        let report = run_chaos_sweep(&model, &law, 8, 1, 0.2, 1, &scheme, 5).unwrap();
        assert_eq!(report.levels.len(), 1);
        let driver = BrownianDriver::new(5).derive(0);
        let direct = splitting_error(&model, &law, 8, 0.2, &scheme, &driver).unwrap();
        assert_eq!(report.levels[0].mean_error, direct);
        assert!(report.fitted_slope.is_none());
        assert!(report.failed.is_empty());
    }

    #[test]
    fn sweep_keeps_partial_results_when_a_level_diverges() {
        // explicit Euler on a quintic drift diverges at the larger level sizes
        // long before it diverges for N = 2 particles is not guaranteed, so
        // instead force failure via an off-grid horizon at one level size:
        // simplest robust trigger is an odd n1 << level; use a model whose
        // drift overflows deterministically at large |x| with explicit Euler.
        let model = crate::model::QuinticMean::new();
        let law = InitialLaw::PointMass(3.0);
        let scheme = SchemeConfig::explicit(0.5);
        let report = run_chaos_sweep(&model, &law, 4, 2, 4.0, 2, &scheme, 9);
        match report {
            Ok(r) => assert!(!r.failed.is_empty()),
            Err(ChaosError::AllLevelsFailed(_)) => {}
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn phi_rate_values() {
        let v = phi_rate(4, 1, 8.0).unwrap();
        assert!((v - 0.853_553_390_593_273_8).abs() < 1e-15);
        let v = phi_rate(1, 4, 8.0).unwrap();
        assert!((v - (2.0f64.ln() + 1.0)).abs() < 1e-15);
        assert!((v - 1.693_147_180_559_945_3).abs() < 1e-15);
    }

    #[test]
    fn phi_rate_exclusions() {
        assert!(matches!(
            phi_rate(8, 1, 2.0),
            Err(ChaosError::RateMomentOrder(_))
        ));
        assert!(matches!(
            phi_rate(8, 3, 4.0),
            Err(ChaosError::RateExclusion { .. })
        ));
        assert!(matches!(
            phi_rate(8, 4, 4.0),
            Err(ChaosError::RateExclusion { .. })
        ));
        assert!(phi_rate(8, 5, 4.0).is_ok());
    }

    #[test]
    fn phi_rate_decreases_for_low_dimension() {
        let curve = RateCurve::new(1, 8.0, &[1, 2, 4, 8, 16, 32, 64, 128]).unwrap();
        assert!(curve.is_strictly_decreasing());
        let curve5 = RateCurve::new(5, 8.0, &[1, 2, 4, 8, 16]).unwrap();
        assert!(curve5.is_strictly_decreasing());
        // d = 4 carries a log factor that makes Phi hump upward at tiny N;
        // monotonicity only kicks in afterwards
        let curve4 = RateCurve::new(4, 8.0, &[8, 16, 32, 64]).unwrap();
        assert!(curve4.is_strictly_decreasing());
    }

    #[test]
    fn fit_decay_recovers_exact_exponentials() {
        let series: Vec<(f64, f64)> = (0..20)
            .map(|k| {
                let t = k as f64 * 0.5;
                (t, (-3.0 * t).exp())
            })
            .collect();
        let fit = fit_decay(&series).unwrap();
        assert!((fit.rate + 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 2.5)).collect();
        let fit = fit_decay(&flat).unwrap();
        assert!(fit.rate.abs() < 1e-14);
    }

    #[test]
    fn fit_decay_excludes_non_positive_points() {
        let series = [(0.0, 1.0), (1.0, 0.0), (2.0, -1.0), (3.0, 0.5)];
        assert!(matches!(
            fit_decay(&series),
            Err(ChaosError::NotEnoughDecayData(2))
        ));
        let series = [(0.0, 1.0), (1.0, 0.5), (2.0, 0.0), (3.0, 0.125), (4.0, 0.0625)];
        let fit = fit_decay(&series).unwrap();
        assert_eq!(fit.used, 4);
        assert_eq!(fit.excluded, 1);
    }

    #[test]
    fn gap_is_invariant_under_relabeling_within_halves() {
        // the gap is a symmetric function of matched pairs, so permuting
        // storage order (keeping id matching) cannot change it
        let a = Ensemble::with_ids(vec![1.0, 2.0, 3.0, 4.0], 1, vec![1, 2, 3, 4]).unwrap();
        let lo = Ensemble::with_ids(vec![1.5, 1.5], 1, vec![1, 2]).unwrap();
        let hi = Ensemble::with_ids(vec![3.25, 4.75], 1, vec![3, 4]).unwrap();
        let g1 = rms_gap(&a, &lo, &hi);
        let a2 = Ensemble::with_ids(vec![2.0, 1.0, 4.0, 3.0], 1, vec![2, 1, 4, 3]).unwrap();
        let lo2 = Ensemble::with_ids(vec![1.5, 1.5], 1, vec![2, 1]).unwrap();
        let hi2 = Ensemble::with_ids(vec![4.75, 3.25], 1, vec![4, 3]).unwrap();
        let g2 = rms_gap(&a2, &lo2, &hi2);
        assert!((g1 - g2).abs() < 1e-15);
    }
}
