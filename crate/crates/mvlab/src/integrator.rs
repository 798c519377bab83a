//! Time-stepping of the N-particle interacting system and the frozen-measure
//! (two-timescale) scheme, with seeded, replayable Brownian increments.
//!
//! The per-step contract is: snapshot the empirical measure of all particles,
//! then advance every particle with that frozen snapshot, then barrier. Each
//! particle's Gaussian increment is a pure function of
//! (seed, particle id, step index), so trajectories are bit-identical across
//! thread counts, and two systems sharing a seed consume literally the same
//! noise for matching particle ids — the property the splitting estimator in
//! `chaos` relies on.
//!
//! Taming divides the drift by (1 + dt |b|) and the diffusion by
//! sqrt(1 + dt ||sigma||^2), which keeps single steps bounded under the
//! super-linear coefficients where the explicit scheme explodes. Explicit
//! Euler is kept available because scheme divergence is itself a reportable
//! experimental outcome.

use std::sync::Mutex;

use rayon::prelude::*;
use thiserror::Error;

use crate::measure::{EmpiricalMeasure, MeasureError};
use crate::model::CoefficientModel;
use crate::philox::{mix64, normal_from_block_0, normals_from_block, philox4x64};

/// Particle updates run in parallel above this ensemble size.
const PAR_THRESHOLD: usize = 2048;
const PAR_CHUNK: usize = 1024;

/// Stream purposes keep increment, initial-condition, and auxiliary draws on
/// disjoint counters of the same keyed generator.
const PURPOSE_INCREMENT: u64 = 0;
const PURPOSE_INITIAL: u64 = 1;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error(
        "non-finite state for particle {particle_id} at step {step} (t = {time}): \
         pre-state {pre_state:?}, drift {drift:?}, diffusion {diffusion:?}"
    )]
    NonFinite {
        particle_id: u64,
        step: u64,
        time: f64,
        pre_state: Vec<f64>,
        drift: Vec<f64>,
        diffusion: Vec<f64>,
    },
    #[error("time step dt = {0} must be positive and finite")]
    InvalidTimeStep(f64),
    #[error("dt = {dt} does not divide the horizon {horizon} (remainder {remainder:e})")]
    StepNotDividing {
        dt: f64,
        horizon: f64,
        remainder: f64,
    },
    #[error("observation time {0} does not lie on the step grid")]
    ObservationOffGrid(f64),
    #[error("horizon T = {0} must be non-negative and finite")]
    InvalidHorizon(f64),
    #[error("outer mesh must have at least one interval")]
    EmptyOuterMesh,
    #[error("initial law rejected: {0}")]
    InvalidInitialLaw(String),
    #[error("ensemble dimension {ensemble} does not match model dimension {model}")]
    DimensionMismatch { ensemble: usize, model: usize },
    #[error("increment buffer holds {got} values, expected {expected}")]
    IncrementLength { got: usize, expected: usize },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Seeded, replayable source of per-particle Gaussian increments.
///
/// Same (seed, particle id, step index) always yields the same increment,
/// independent of thread count and of how many other particles exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrownianDriver {
    seed: u64,
}

impl BrownianDriver {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent driver for a replication or sub-experiment.
    pub fn derive(&self, salt: u64) -> Self {
        Self {
            seed: mix64(self.seed ^ mix64(salt.wrapping_add(0x517c_c1b7_2722_0a95))),
        }
    }

    #[inline]
    fn block(&self, particle_id: u64, purpose: u64, step: u64, block_index: u64) -> [u64; 4] {
        philox4x64([step, block_index, purpose, 0], [self.seed, particle_id])
    }

    /// Standard normal draws for one particle at one step.
    pub fn standard_normals(&self, particle_id: u64, step: u64, out: &mut [f64]) {
        self.fill_normals(particle_id, PURPOSE_INCREMENT, step, out);
    }

    /// Standard normal draws for a particle's initial condition.
    pub fn initial_normals(&self, particle_id: u64, out: &mut [f64]) {
        self.fill_normals(particle_id, PURPOSE_INITIAL, 0, out);
    }

    fn fill_normals(&self, particle_id: u64, purpose: u64, step: u64, out: &mut [f64]) {
        let mut written = 0;
        let mut block_index = 0u64;
        while written < out.len() {
            let block = self.block(particle_id, purpose, step, block_index);
            let remaining = out.len() - written;
            if remaining == 1 {
                out[written] = normal_from_block_0(&block);
                written += 1;
            } else {
                let z = normals_from_block(&block);
                let take = remaining.min(4);
                out[written..written + take].copy_from_slice(&z[..take]);
                written += take;
            }
            block_index += 1;
        }
    }

    /// Brownian increments over a step of size dt (scaled by sqrt(dt)).
    pub fn increments(&self, particle_id: u64, step: u64, sqrt_dt: f64, out: &mut [f64]) {
        self.standard_normals(particle_id, step, out);
        for v in out {
            *v *= sqrt_dt;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    TamedEuler,
    ExplicitEuler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub dt: f64,
}

impl SchemeConfig {
    pub fn tamed(dt: f64) -> Self {
        Self {
            kind: SchemeKind::TamedEuler,
            dt,
        }
    }

    pub fn explicit(dt: f64) -> Self {
        Self {
            kind: SchemeKind::ExplicitEuler,
            dt,
        }
    }

    fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(IntegratorError::InvalidTimeStep(self.dt));
        }
        Ok(())
    }
}

/// Number of steps covering `horizon`, requiring dt to divide it to 1e-12.
pub fn steps_for(dt: f64, horizon: f64) -> Result<u64, IntegratorError> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(IntegratorError::InvalidHorizon(horizon));
    }
    let steps = (horizon / dt).round();
    let remainder = (steps * dt - horizon).abs();
    if remainder > 1e-12 * horizon.max(1.0) {
        return Err(IntegratorError::StepNotDividing {
            dt,
            horizon,
            remainder,
        });
    }
    Ok(steps as u64)
}

/// The N x d particle state at a time point.
#[derive(Debug, Clone)]
pub struct Ensemble {
    states: Vec<f64>,
    ids: Vec<u64>,
    dim: usize,
    time: f64,
    step_index: u64,
}

impl Ensemble {
    /// Particles get stable ids 1..=N.
    pub fn new(states: Vec<f64>, dim: usize) -> Result<Self, IntegratorError> {
        let n = checked_len(&states, dim)?;
        let ids = (1..=n as u64).collect();
        Self::with_ids(states, dim, ids)
    }

    /// Explicit particle ids select which Brownian streams drive the system.
    pub fn with_ids(states: Vec<f64>, dim: usize, ids: Vec<u64>) -> Result<Self, IntegratorError> {
        let n = checked_len(&states, dim)?;
        assert_eq!(ids.len(), n, "one id per particle");
        Ok(Self {
            states,
            ids,
            dim,
            time: 0.0,
            step_index: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Immutable empirical-measure view of the current states.
    pub fn measure(&self) -> Result<EmpiricalMeasure, MeasureError> {
        EmpiricalMeasure::new(self.states.clone(), self.dim)
    }
}

fn checked_len(states: &[f64], dim: usize) -> Result<usize, IntegratorError> {
    if dim == 0 || states.len() % dim != 0 || states.is_empty() {
        return Err(IntegratorError::Measure(MeasureError::RaggedSamples {
            len: states.len(),
            dim,
        }));
    }
    Ok(states.len() / dim)
}

/// Initial distribution for [`sample_initial`]. Components are i.i.d. across
/// particles and coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Normal { mean: f64, var: f64 },
    PointMass(f64),
    /// Explicit per-particle states (flat row-major N x d buffer).
    Samples(Vec<f64>),
}

/// Draw an ensemble of `n` i.i.d. initial states from the per-particle
/// streams (ids 1..=n).
pub fn sample_initial(
    law: &InitialLaw,
    n: usize,
    dim: usize,
    driver: &BrownianDriver,
) -> Result<Ensemble, IntegratorError> {
    sample_initial_with_ids(law, (1..=n as u64).collect(), dim, driver)
}

/// As [`sample_initial`] with explicit particle ids, so sub-systems can share
/// initial values with a parent system.
pub fn sample_initial_with_ids(
    law: &InitialLaw,
    ids: Vec<u64>,
    dim: usize,
    driver: &BrownianDriver,
) -> Result<Ensemble, IntegratorError> {
    let n = ids.len();
    if n == 0 || dim == 0 {
        return Err(IntegratorError::InvalidInitialLaw(
            "need at least one particle and dimension >= 1".into(),
        ));
    }
    let mut states = vec![0.0; n * dim];
    match law {
        InitialLaw::Normal { mean, var } => {
            if !var.is_finite() || *var < 0.0 || !mean.is_finite() {
                return Err(IntegratorError::InvalidInitialLaw(format!(
                    "Normal(mean = {mean}, var = {var})"
                )));
            }
            let sd = var.sqrt();
            for (j, &id) in ids.iter().enumerate() {
                let row = &mut states[j * dim..(j + 1) * dim];
                driver.initial_normals(id, row);
                for v in row {
                    *v = mean + sd * *v;
                }
            }
        }
        InitialLaw::PointMass(x) => {
            if !x.is_finite() {
                return Err(IntegratorError::InvalidInitialLaw(format!(
                    "PointMass({x})"
                )));
            }
            states.fill(*x);
        }
        InitialLaw::Samples(values) => {
            if values.len() != n * dim {
                return Err(IntegratorError::InvalidInitialLaw(format!(
                    "need {} values for {} particles in dimension {}, got {}",
                    n * dim,
                    n,
                    dim,
                    values.len()
                )));
            }
            states.copy_from_slice(values);
        }
    }
    Ensemble::with_ids(states, dim, ids)
}

/// Per-particle noise for one step; implemented by the keyed driver and by
/// caller-provided increment buffers.
trait NoiseSource: Sync {
    fn fill(&self, position: usize, particle_id: u64, step: u64, sqrt_dt: f64, out: &mut [f64]);
}

struct DriverNoise<'a>(&'a BrownianDriver);

impl NoiseSource for DriverNoise<'_> {
    #[inline]
    fn fill(&self, _position: usize, particle_id: u64, step: u64, sqrt_dt: f64, out: &mut [f64]) {
        self.0.increments(particle_id, step, sqrt_dt, out);
    }
}

/// Increments supplied directly (already scaled Brownian increments).
struct SliceNoise<'a> {
    dw: &'a [f64],
    m1: usize,
}

impl NoiseSource for SliceNoise<'_> {
    #[inline]
    fn fill(&self, position: usize, _id: u64, _step: u64, _sqrt_dt: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.dw[position * self.m1..(position + 1) * self.m1]);
    }
}

struct Scratch {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    dw: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize, m1: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            diffusion: vec![0.0; dim * m1],
            dw: vec![0.0; m1],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn advance_one<M: CoefficientModel + ?Sized>(
    x: &mut [f64],
    position: usize,
    id: u64,
    mu: &EmpiricalMeasure,
    model: &M,
    kind: SchemeKind,
    dt: f64,
    sqrt_dt: f64,
    step: u64,
    noise: &impl NoiseSource,
    s: &mut Scratch,
) -> bool {
    let dim = x.len();
    let m1 = s.dw.len();
    model.drift(x, mu, &mut s.drift);
    model.diffusion(x, mu, &mut s.diffusion);
    noise.fill(position, id, step, sqrt_dt, &mut s.dw);
    let (drift_scale, diff_scale) = match kind {
        SchemeKind::TamedEuler => {
            let bnorm = s.drift.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ssq = s.diffusion.iter().map(|v| v * v).sum::<f64>();
            (1.0 / (1.0 + dt * bnorm), 1.0 / (1.0 + dt * ssq).sqrt())
        }
        SchemeKind::ExplicitEuler => (1.0, 1.0),
    };
    let mut ok = true;
    for i in 0..dim {
        let mut incr = s.drift[i] * drift_scale * dt;
        for k in 0..m1 {
            incr += s.diffusion[i * m1 + k] * diff_scale * s.dw[k];
        }
        x[i] += incr;
        ok &= x[i].is_finite();
    }
    ok
}

#[allow(clippy::too_many_arguments)]
fn advance_states<M: CoefficientModel + ?Sized>(
    states: &mut [f64],
    ids: &[u64],
    dim: usize,
    m1: usize,
    mu: &EmpiricalMeasure,
    model: &M,
    kind: SchemeKind,
    dt: f64,
    step: u64,
    time: f64,
    noise: &impl NoiseSource,
) -> Result<(), IntegratorError> {
    let sqrt_dt = dt.sqrt();
    let n = ids.len();
    let mut first_failure: Option<usize> = None;
    if n < PAR_THRESHOLD {
        let mut scratch = Scratch::new(dim, m1);
        for (j, chunk) in states.chunks_mut(dim).enumerate() {
            if !advance_one(
                chunk, j, ids[j], mu, model, kind, dt, sqrt_dt, step, noise, &mut scratch,
            ) {
                first_failure = Some(j);
                break;
            }
        }
    } else {
        let failure = Mutex::new(None::<usize>);
        states
            .par_chunks_mut(PAR_CHUNK * dim)
            .enumerate()
            .for_each(|(c, block)| {
                let base = c * PAR_CHUNK;
                let mut scratch = Scratch::new(dim, m1);
                for (off, chunk) in block.chunks_mut(dim).enumerate() {
                    let j = base + off;
                    if !advance_one(
                        chunk, j, ids[j], mu, model, kind, dt, sqrt_dt, step, noise, &mut scratch,
                    ) {
                        let mut slot = failure.lock().expect("failure slot poisoned");
                        if slot.is_none_or(|prev| j < prev) {
                            *slot = Some(j);
                        }
                        return;
                    }
                }
            });
        first_failure = failure.into_inner().expect("failure slot poisoned");
    }
    if let Some(j) = first_failure {
        // pre-step state is still available in the measure snapshot
        let pre_state = mu.atom(j).to_vec();
        let mut drift = vec![0.0; dim];
        let mut diffusion = vec![0.0; dim * m1];
        model.drift(&pre_state, mu, &mut drift);
        model.diffusion(&pre_state, mu, &mut diffusion);
        return Err(IntegratorError::NonFinite {
            particle_id: ids[j],
            step,
            time,
            pre_state,
            drift,
            diffusion,
        });
    }
    Ok(())
}

/// One discrete step of the interacting particle system: snapshot the
/// empirical measure, advance every particle, bump the clock.
pub fn step_particle_system<M: CoefficientModel + ?Sized>(
    ensemble: &mut Ensemble,
    model: &M,
    scheme: &SchemeConfig,
    driver: &BrownianDriver,
) -> Result<(), IntegratorError> {
    scheme.validate()?;
    let mu = ensemble.measure()?;
    step_with_external_measure(ensemble, &mu, model, scheme.kind, scheme.dt, driver)
}

/// Advance one step against an externally supplied (frozen or reference)
/// measure snapshot instead of the ensemble's own.
pub(crate) fn step_with_external_measure<M: CoefficientModel + ?Sized>(
    ensemble: &mut Ensemble,
    mu: &EmpiricalMeasure,
    model: &M,
    kind: SchemeKind,
    dt: f64,
    driver: &BrownianDriver,
) -> Result<(), IntegratorError> {
    let (dim, m1) = model.dims();
    if dim != ensemble.dim {
        return Err(IntegratorError::DimensionMismatch {
            ensemble: ensemble.dim,
            model: dim,
        });
    }
    let step = ensemble.step_index;
    let time = ensemble.time;
    advance_states(
        &mut ensemble.states,
        &ensemble.ids,
        dim,
        m1,
        mu,
        model,
        kind,
        dt,
        step,
        time,
        &DriverNoise(driver),
    )?;
    ensemble.step_index += 1;
    ensemble.time = ensemble.step_index as f64 * dt;
    Ok(())
}

/// One step with caller-supplied Brownian increments (length N x m1, already
/// scaled to the step size). Used for path-refinement studies where several
/// step sizes must share one underlying Brownian path.
pub fn step_with_increments<M: CoefficientModel + ?Sized>(
    ensemble: &mut Ensemble,
    model: &M,
    kind: SchemeKind,
    dt: f64,
    dw: &[f64],
) -> Result<(), IntegratorError> {
    let (dim, m1) = model.dims();
    if dim != ensemble.dim {
        return Err(IntegratorError::DimensionMismatch {
            ensemble: ensemble.dim,
            model: dim,
        });
    }
    if dw.len() != ensemble.len() * m1 {
        return Err(IntegratorError::IncrementLength {
            got: dw.len(),
            expected: ensemble.len() * m1,
        });
    }
    let mu = ensemble.measure()?;
    let step = ensemble.step_index;
    let time = ensemble.time;
    advance_states(
        &mut ensemble.states,
        &ensemble.ids,
        dim,
        m1,
        &mu,
        model,
        kind,
        dt,
        step,
        time,
        &SliceNoise { dw, m1 },
    )?;
    ensemble.step_index += 1;
    ensemble.time = ensemble.step_index as f64 * dt;
    Ok(())
}

/// Which intermediate states [`integrate`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservationTimes {
    FinalOnly,
    /// Snapshots at these times (each must lie on the step grid).
    Times(Vec<f64>),
    /// Snapshot every k-th step plus the final state.
    EveryKthStep(u64),
}

impl ObservationTimes {
    fn resolve(&self, dt: f64, total_steps: u64) -> Result<Vec<u64>, IntegratorError> {
        let mut steps: Vec<u64> = match self {
            ObservationTimes::FinalOnly => vec![total_steps],
            ObservationTimes::EveryKthStep(k) => {
                let k = (*k).max(1);
                let mut v: Vec<u64> = (1..=total_steps / k).map(|i| i * k).collect();
                v.push(total_steps);
                v
            }
            ObservationTimes::Times(times) => {
                let mut v = Vec::with_capacity(times.len());
                for &t in times {
                    let k = (t / dt).round();
                    if !(0.0..=total_steps as f64).contains(&k)
                        || (k * dt - t).abs() > 1e-9 * t.abs().max(1.0)
                    {
                        return Err(IntegratorError::ObservationOffGrid(t));
                    }
                    v.push(k as u64);
                }
                v
            }
        };
        steps.sort_unstable();
        steps.dedup();
        Ok(steps)
    }
}

/// Trajectory snapshots at the requested observation times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Ensemble>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Ensemble {
        self.snapshots.last().expect("trajectory never empty")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|e| e.time).collect()
    }
}

/// Integrate the interacting particle system to `t_final`.
pub fn integrate<M: CoefficientModel + ?Sized>(
    ensemble: Ensemble,
    model: &M,
    scheme: &SchemeConfig,
    driver: &BrownianDriver,
    t_final: f64,
    observe: &ObservationTimes,
) -> Result<Trajectory, IntegratorError> {
    scheme.validate()?;
    let total_steps = steps_for(scheme.dt, t_final)?;
    let mut ensemble = ensemble;
    let obs = observe.resolve(scheme.dt, total_steps)?;
    let mut snapshots = Vec::with_capacity(obs.len().max(1));
    let mut next_obs = obs.iter().copied().peekable();
    if next_obs.peek() == Some(&0) {
        next_obs.next();
        snapshots.push(ensemble.clone());
    }
    for step in 0..total_steps {
        step_particle_system(&mut ensemble, model, scheme, driver)?;
        let done = step + 1;
        if done == total_steps {
            ensemble.time = t_final;
        }
        if next_obs.peek() == Some(&done) {
            next_obs.next();
            snapshots.push(ensemble.clone());
        }
    }
    if snapshots.is_empty() || total_steps == 0 {
        ensemble.time = t_final.max(ensemble.time);
        if snapshots.is_empty() {
            snapshots.push(ensemble);
        }
    }
    Ok(Trajectory { snapshots })
}

/// Integrate the frozen-measure (two-timescale) scheme: the empirical measure
/// is frozen at the outer mesh points t_k = k T / outer_m while the state
/// advances with fine tamed inner steps. With outer_m = T / inner_dt this
/// coincides with [`integrate`] bit for bit.
pub fn integrate_frozen_measure<M: CoefficientModel + ?Sized>(
    ensemble: Ensemble,
    model: &M,
    outer_m: u64,
    inner_dt: f64,
    driver: &BrownianDriver,
    t_final: f64,
    observe: &ObservationTimes,
) -> Result<Trajectory, IntegratorError> {
    if outer_m == 0 {
        return Err(IntegratorError::EmptyOuterMesh);
    }
    if !(inner_dt > 0.0) || !inner_dt.is_finite() {
        return Err(IntegratorError::InvalidTimeStep(inner_dt));
    }
    let outer_dt = t_final / outer_m as f64;
    let inner_steps = steps_for(inner_dt, outer_dt)?;
    let total_steps = inner_steps * outer_m;
    let obs = observe.resolve(inner_dt, total_steps)?;
    let mut ensemble = ensemble;
    let mut snapshots = Vec::with_capacity(obs.len().max(1));
    let mut next_obs = obs.iter().copied().peekable();
    if next_obs.peek() == Some(&0) {
        next_obs.next();
        snapshots.push(ensemble.clone());
    }
    for _outer in 0..outer_m {
        let frozen = ensemble.measure()?;
        for _ in 0..inner_steps {
            step_with_external_measure(
                &mut ensemble,
                &frozen,
                model,
                SchemeKind::TamedEuler,
                inner_dt,
                driver,
            )?;
            let done = ensemble.step_index;
            if done == total_steps {
                ensemble.time = t_final;
            }
            if next_obs.peek() == Some(&done) {
                next_obs.next();
                snapshots.push(ensemble.clone());
            }
        }
    }
    if snapshots.is_empty() {
        ensemble.time = t_final.max(ensemble.time);
        snapshots.push(ensemble);
    }
    Ok(Trajectory { snapshots })
}
