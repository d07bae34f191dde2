//! The outer filter-estimation / annihilation loop, its inner data-consistent
//! least-squares solve, the one-shot ACS variant, and an alternating
//! projection (Cadzow-type) baseline.
//!
//! All solvers work on a copy of the observed data scaled by a power of two
//! close to `1 / ||D_o||_F`. The scaling is exact in floating point, so
//! observed samples come back bit-identical and the stopping rule is
//! independent of the data's overall magnitude.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CfError, Result};
use crate::hankel::{average_onto_hankel, explicit_hankel, gram_matrix, HankelOperator};
use crate::nullspace::{check_rank, hermitian_eig_owned, FilterBank};
use crate::tensor::{
    nd_convolve_adjoint_add, nd_convolve_into, ConvKind, ConvSpec, KTensor, Mask, Shape5, C64,
    DIM_NAMES,
};

pub const DEFAULT_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_OUTER: usize = 200;
pub const DEFAULT_INNER_MAX: usize = 30;
pub const DEFAULT_INNER_GRAD_TOL: f64 = 1e-6;
pub const DEFAULT_ACS_INNER_FACTOR: usize = 10;

/// Half-open index box over the spatial dims; coil and time are always full.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcsBox {
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub z: (usize, usize),
}

impl AcsBox {
    /// Box of the given spatial extents centred on index `n / 2` of each dim.
    pub fn centered(shape: Shape5, extents: [usize; 3]) -> Result<Self> {
        let dims = shape.dims();
        let mut r = [(0, 0); 3];
        for d in 0..3 {
            let e = extents[d];
            if e == 0 || e > dims[d] {
                return Err(CfError::Acs(format!(
                    "extent {e} on {} does not fit in {}",
                    DIM_NAMES[d], dims[d]
                )));
            }
            let start = dims[d] / 2 - e / 2;
            let start = start.min(dims[d] - e);
            r[d] = (start, start + e);
        }
        Ok(Self { x: r[0], y: r[1], z: r[2] })
    }

    pub fn ranges(&self) -> [(usize, usize); 3] {
        [self.x, self.y, self.z]
    }

    pub fn extents(&self) -> [usize; 3] {
        self.ranges().map(|(a, b)| b.saturating_sub(a))
    }

    pub fn contains(&self, i: [usize; 5]) -> bool {
        self.ranges()
            .iter()
            .enumerate()
            .all(|(d, &(a, b))| i[d] >= a && i[d] < b)
    }

    pub fn check_within(&self, shape: Shape5) -> Result<()> {
        let dims = shape.dims();
        for (d, &(a, b)) in self.ranges().iter().enumerate() {
            if a >= b || b > dims[d] {
                return Err(CfError::Acs(format!(
                    "range {a}..{b} on {} is empty or exceeds extent {}",
                    DIM_NAMES[d], dims[d]
                )));
            }
        }
        Ok(())
    }

    /// Full sub-tensor shape of the box for data of shape `shape`.
    pub fn sub_shape(&self, shape: Shape5) -> Result<Shape5> {
        let e = self.extents();
        Shape5::new(e[0], e[1], e[2], shape.nc, shape.nt)
    }

    pub fn starts(&self) -> [usize; 5] {
        [self.x.0, self.y.0, self.z.0, 0, 0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub kernel_spec: ConvSpec,
    pub rank: usize,
    pub tol: f64,
    pub max_outer: usize,
    pub inner_max: usize,
    pub inner_grad_tol: f64,
    pub acs_region: Option<AcsBox>,
    /// Inner budget multiplier for the one-shot ACS solve.
    pub acs_inner_factor: usize,
}

impl ReconConfig {
    pub fn new(kernel_spec: ConvSpec, rank: usize) -> Self {
        Self {
            kernel_spec,
            rank,
            tol: DEFAULT_TOL,
            max_outer: DEFAULT_MAX_OUTER,
            inner_max: DEFAULT_INNER_MAX,
            inner_grad_tol: DEFAULT_INNER_GRAD_TOL,
            acs_region: None,
            acs_inner_factor: DEFAULT_ACS_INNER_FACTOR,
        }
    }

    pub fn validate(&self, data: Shape5) -> Result<()> {
        self.kernel_spec.check_spans_coils(data)?;
        check_rank(self.rank, self.kernel_spec.taps())?;
        if !(self.tol > 0.0) {
            return Err(CfError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_outer == 0 {
            return Err(CfError::InvalidConfig("max_outer must be at least 1".into()));
        }
        if !(self.inner_grad_tol >= 0.0) {
            return Err(CfError::InvalidConfig("inner_grad_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Zero-filled observations and their sampling mask.
#[derive(Clone, Debug)]
pub struct ObservedData {
    d_obs: KTensor,
    mask: Mask,
}

impl ObservedData {
    /// Requires `d_obs` to be exactly zero wherever `mask` is unobserved.
    pub fn new(d_obs: KTensor, mask: Mask) -> Result<Self> {
        if d_obs.shape() != mask.shape() {
            return Err(CfError::ShapeMismatch(format!(
                "data {} vs mask {}",
                d_obs.shape(),
                mask.shape()
            )));
        }
        let leaked = d_obs
            .as_slice()
            .iter()
            .zip(mask.as_slice())
            .any(|(z, &m)| !m && (z.re != 0.0 || z.im != 0.0));
        if leaked {
            return Err(CfError::DegenerateMask(
                "observed data is not zero-filled outside the mask".into(),
            ));
        }
        Ok(Self { d_obs, mask })
    }

    /// Zero-fills a fully sampled tensor with `mask`.
    pub fn from_full(full: &KTensor, mask: Mask) -> Result<Self> {
        let d_obs = mask.apply(full)?;
        Ok(Self { d_obs, mask })
    }

    pub fn d_obs(&self) -> &KTensor {
        &self.d_obs
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn shape(&self) -> Shape5 {
        self.d_obs.shape()
    }
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub d_hat: KTensor,
    pub outer_iters: usize,
    pub delta_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    pub inner_iters: usize,
}

/// Snapshot handed to observers after each outer iteration.
pub struct IterationState<'a> {
    pub iter: usize,
    pub delta: f64,
    pub objective: f64,
    estimate: &'a KTensor,
    scale: f64,
}

impl IterationState<'_> {
    /// Current estimate in the caller's units.
    pub fn estimate(&self) -> KTensor {
        let mut e = self.estimate.clone();
        e.scale(1.0 / self.scale);
        e
    }

    /// Current estimate in the solver's normalized units.
    pub fn normalized_estimate(&self) -> &KTensor {
        self.estimate
    }
}

pub type Observer<'o> = dyn FnMut(&IterationState<'_>) -> ControlFlow<()> + 'o;

/// Why the inner solve stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerStop {
    /// Gradient fell below `inner_grad_tol` relative to its first value.
    GradientTolerance,
    /// Gradient vanished or the search direction is annihilated by every filter.
    Stationary,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct InnerReport {
    pub steps: usize,
    /// Exact objective at every iterate visited, including the final one.
    pub objective_history: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub stop: InnerStop,
}

impl InnerReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

/// `sum_i ||D ⊠ F_i||_F^2`.
pub fn annihilation_objective(d: &KTensor, bank: &FilterBank) -> Result<f64> {
    let spec = bank.spec();
    let mut resid = KTensor::zeros(spec.output_shape(d.shape())?);
    let mut f = 0.0;
    for filt in bank.filters() {
        nd_convolve_into(d, filt, spec, &mut resid)?;
        f += resid.norm_sqr();
    }
    Ok(f)
}

/// Objective and its gradient `sum_i adj_i(D ⊠ F_i)` restricted to
/// unobserved samples (derivative with respect to `conj(X)`; the real
/// partials are twice its real and imaginary parts).
pub fn annihilation_gradient(d: &KTensor, mask: &Mask, bank: &FilterBank) -> Result<(f64, KTensor)> {
    let mut ws = Workspace::new(d.shape(), bank.spec())?;
    let f = ws.gradient(d, mask, bank)?;
    Ok((f, ws.grad))
}

/// Exact minimizing step along `-g` for the quadratic objective:
/// `alpha = ||g||^2 / sum_i ||g ⊠ F_i||^2`, or `None` when the denominator vanishes.
pub fn exact_step(grad: &KTensor, bank: &FilterBank) -> Result<Option<f64>> {
    let mut resid = KTensor::zeros(bank.spec().output_shape(grad.shape())?);
    let den = direction_energy(grad, bank, &mut resid)?;
    Ok((den > 0.0).then(|| grad.norm_sqr() / den))
}

fn direction_energy(dir: &KTensor, bank: &FilterBank, resid: &mut KTensor) -> Result<f64> {
    let mut den = 0.0;
    for filt in bank.filters() {
        nd_convolve_into(dir, filt, bank.spec(), resid)?;
        den += resid.norm_sqr();
    }
    Ok(den)
}

/// Scratch buffers reused across inner iterations: one data-sized gradient
/// and one convolution-output-sized residual.
struct Workspace {
    grad: KTensor,
    resid: KTensor,
}

impl Workspace {
    fn new(shape: Shape5, spec: &ConvSpec) -> Result<Self> {
        Ok(Self {
            grad: KTensor::zeros(shape),
            resid: KTensor::zeros(spec.output_shape(shape)?),
        })
    }

    /// Fills `self.grad` and returns the objective at `d`.
    fn gradient(&mut self, d: &KTensor, mask: &Mask, bank: &FilterBank) -> Result<f64> {
        let spec = bank.spec();
        self.grad.as_mut_slice().fill(C64::new(0.0, 0.0));
        let mut f = 0.0;
        for filt in bank.filters() {
            nd_convolve_into(d, filt, spec, &mut self.resid)?;
            f += self.resid.norm_sqr();
            nd_convolve_adjoint_add(&self.resid, filt, spec, &mut self.grad)?;
        }
        for (g, &m) in self.grad.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            if m {
                *g = C64::new(0.0, 0.0);
            }
        }
        Ok(f)
    }
}

/// Steepest descent with exact line search on the unobserved entries of `est`.
fn gd_els_in_place(
    est: &mut KTensor,
    mask: &Mask,
    bank: &FilterBank,
    max_steps: usize,
    grad_tol: f64,
    ws: &mut Workspace,
) -> Result<InnerReport> {
    let mut history = Vec::new();
    let mut steps = Vec::new();
    let mut g0 = 0.0;
    let mut stop = InnerStop::MaxIterations;
    let mut pending = true;
    for k in 0..=max_steps {
        let f = ws.gradient(est, mask, bank)?;
        history.push(f);
        pending = false;
        let gn2 = ws.grad.norm_sqr();
        let gn = gn2.sqrt();
        if k == 0 {
            g0 = gn;
        }
        if gn == 0.0 {
            stop = InnerStop::Stationary;
            break;
        }
        if k > 0 && gn <= grad_tol * g0 {
            stop = InnerStop::GradientTolerance;
            break;
        }
        if k == max_steps {
            break;
        }
        let den = direction_energy(&ws.grad, bank, &mut ws.resid)?;
        if !(den > 0.0) {
            stop = InnerStop::Stationary;
            break;
        }
        let alpha = gn2 / den;
        for (x, g) in est.as_mut_slice().iter_mut().zip(ws.grad.as_slice()) {
            *x -= g * alpha;
        }
        steps.push(alpha);
        pending = true;
    }
    if pending {
        history.push(annihilation_objective(est, bank)?);
    }
    Ok(InnerReport {
        steps: steps.len(),
        objective_history: history,
        step_sizes: steps,
        stop,
    })
}

/// Power of two nearest to `1 / norm`; multiplying by it is exact.
fn normalization(norm: f64) -> f64 {
    if norm > 0.0 && norm.is_finite() {
        2f64.powi(-(norm.log2().round() as i32))
    } else {
        1.0
    }
}

/// Solves `argmin_X sum_i ||(D_o + X) ⊠ F_i||^2` subject to `X ∘ M = 0`,
/// starting from `warm` (or zero) and returning the update `X`.
pub fn gd_els_solve(
    obs: &ObservedData,
    filters: &FilterBank,
    cfg: &ReconConfig,
    warm: Option<&KTensor>,
) -> Result<(KTensor, InnerReport)> {
    let shape = obs.shape();
    filters.spec().check_data(shape)?;
    let mut est = obs.d_obs.clone();
    if let Some(w) = warm {
        w.expect_shape(shape)?;
        for ((e, &x), &m) in est.as_mut_slice().iter_mut().zip(w.as_slice()).zip(obs.mask.as_slice()) {
            if !m {
                *e = x;
            }
        }
    }
    let mut ws = Workspace::new(shape, filters.spec())?;
    let report = gd_els_in_place(&mut est, &obs.mask, filters, cfg.inner_max, cfg.inner_grad_tol, &mut ws)?;
    drop(ws);
    for ((e, d), &m) in est.as_mut_slice().iter_mut().zip(obs.d_obs.as_slice()).zip(obs.mask.as_slice()) {
        *e = if m { C64::new(0.0, 0.0) } else { *e - d };
    }
    Ok((est, report))
}

/// Gram → eigendecomposition → the `prod(s) - rank` null-space filters of `d`.
pub fn estimate_filters(d: &KTensor, spec: &ConvSpec, rank: usize) -> Result<FilterBank> {
    check_rank(rank, spec.taps())?;
    let gram = gram_matrix(d, spec)?;
    let eig = hermitian_eig_owned(gram)?;
    FilterBank::from_eigen(&eig, rank, spec)
}

fn check_mask_not_degenerate(obs: &ObservedData) -> Result<bool> {
    let observed = obs.mask.observed();
    if observed == 0 {
        return Err(CfError::DegenerateMask("no sample is observed".into()));
    }
    Ok(observed == obs.mask.as_slice().len())
}

fn relative_change(cur: &KTensor, prev: &KTensor) -> Result<f64> {
    let den = prev.norm();
    let num = cur.distance(prev)?;
    Ok(if den > 0.0 { num / den } else if num == 0.0 { 0.0 } else { f64::INFINITY })
}

fn finish(mut est: KTensor, scale: f64, obs: &ObservedData) -> KTensor {
    est.scale(1.0 / scale);
    for ((e, d), &m) in est.as_mut_slice().iter_mut().zip(obs.d_obs.as_slice()).zip(obs.mask.as_slice()) {
        if m {
            *e = *d;
        }
    }
    est
}

fn trivial_result(obs: &ObservedData) -> ReconResult {
    ReconResult {
        d_hat: obs.d_obs.clone(),
        outer_iters: 0,
        delta_history: Vec::new(),
        objective_history: Vec::new(),
        inner_iters: 0,
    }
}

/// Alternates null-space filter estimation with the annihilation solve until
/// the relative change of the whole estimate drops to `cfg.tol`.
pub fn cf_reconstruct(obs: &ObservedData, cfg: &ReconConfig) -> Result<ReconResult> {
    cf_reconstruct_observed(obs, cfg, &mut |_| ControlFlow::Continue(()))
}

pub fn cf_reconstruct_observed(
    obs: &ObservedData,
    cfg: &ReconConfig,
    observer: &mut Observer<'_>,
) -> Result<ReconResult> {
    let shape = obs.shape();
    cfg.validate(shape)?;
    if check_mask_not_degenerate(obs)? {
        return Ok(trivial_result(obs));
    }
    let spec = &cfg.kernel_spec;
    let scale = normalization(obs.d_obs.norm());
    let mut est = obs.d_obs.clone();
    est.scale(scale);
    let mut prev = est.clone();
    let mut ws = Workspace::new(shape, spec)?;
    let mut deltas = Vec::new();
    let mut objectives = Vec::new();
    let mut inner_iters = 0;

    for n in 1..=cfg.max_outer {
        let bank = estimate_filters(&est, spec, cfg.rank)?;
        prev.as_mut_slice().copy_from_slice(est.as_slice());
        let report = gd_els_in_place(&mut est, &obs.mask, &bank, cfg.inner_max, cfg.inner_grad_tol, &mut ws)?;
        drop(bank);
        inner_iters += report.steps;
        let delta = relative_change(&est, &prev)?;
        deltas.push(delta);
        objectives.push(report.final_objective());
        let state = IterationState {
            iter: n,
            delta,
            objective: report.final_objective(),
            estimate: &est,
            scale,
        };
        if observer(&state).is_break() || delta <= cfg.tol {
            break;
        }
    }
    drop(prev);
    drop(ws);
    Ok(ReconResult {
        d_hat: finish(est, scale, obs),
        outer_iters: deltas.len(),
        delta_history: deltas,
        objective_history: objectives,
        inner_iters,
    })
}

/// Validates the ACS box against the mask and kernel and returns the
/// filters estimated from the (scaled) ACS sub-tensor.
pub fn acs_filters(obs: &ObservedData, cfg: &ReconConfig) -> Result<FilterBank> {
    let shape = obs.shape();
    let acs = cfg
        .acs_region
        .ok_or_else(|| CfError::Acs("no ACS region configured".into()))?;
    acs.check_within(shape)?;
    let sub_shape = acs.sub_shape(shape)?;
    let e = sub_shape.dims();
    let k = cfg.kernel_spec.kernel.dims();
    for d in 0..3 {
        if cfg.kernel_spec.kinds[d] == ConvKind::Valid && e[d] < k[d] {
            return Err(CfError::Acs(format!(
                "ACS extent {} on {} is smaller than the kernel extent {}",
                e[d], DIM_NAMES[d], k[d]
            )));
        }
    }
    let starts = acs.starts();
    for i in 0..sub_shape.len() {
        let u = sub_shape.unravel(i);
        let at = std::array::from_fn(|d| u[d] + starts[d]);
        if !obs.mask.get(at) {
            return Err(CfError::Acs(format!("sample {at:?} inside the ACS box is not observed")));
        }
    }
    let scale = normalization(obs.d_obs.norm());
    let mut sub = obs.d_obs.sub_tensor(starts, sub_shape)?;
    sub.scale(scale);
    estimate_filters(&sub, &cfg.kernel_spec, cfg.rank)
}

/// Estimates the null space once from the ACS block and enforces it over the
/// whole grid with a single, longer annihilation solve.
pub fn cf_reconstruct_with_acs(obs: &ObservedData, cfg: &ReconConfig) -> Result<ReconResult> {
    let shape = obs.shape();
    cfg.validate(shape)?;
    let bank = acs_filters(obs, cfg)?;
    if check_mask_not_degenerate(obs)? {
        return Ok(trivial_result(obs));
    }
    let scale = normalization(obs.d_obs.norm());
    let mut est = obs.d_obs.clone();
    est.scale(scale);
    let mut ws = Workspace::new(shape, &cfg.kernel_spec)?;
    let budget = cfg.inner_max.saturating_mul(cfg.acs_inner_factor.max(1));
    let start_norm = est.norm();
    let before = est.clone();
    let report = gd_els_in_place(&mut est, &obs.mask, &bank, budget, cfg.inner_grad_tol, &mut ws)?;
    let delta = if start_norm > 0.0 { est.distance(&before)? / start_norm } else { f64::INFINITY };
    drop(before);
    Ok(ReconResult {
        d_hat: finish(est, scale, obs),
        outer_iters: 0,
        delta_history: vec![delta],
        objective_history: vec![report.final_objective()],
        inner_iters: report.steps,
    })
}

/// Alternating projections on the explicit Hankel matrix: rank-`r` SVD
/// truncation, averaging back onto Hankel structure, and re-imposing the
/// observed samples. Small problems only.
pub fn cadzow_baseline(obs: &ObservedData, cfg: &ReconConfig) -> Result<ReconResult> {
    cadzow_baseline_observed(obs, cfg, &mut |_| ControlFlow::Continue(()))
}

pub fn cadzow_baseline_observed(
    obs: &ObservedData,
    cfg: &ReconConfig,
    observer: &mut Observer<'_>,
) -> Result<ReconResult> {
    let shape = obs.shape();
    cfg.validate(shape)?;
    let spec = cfg.kernel_spec;
    // fail fast on the size cap before any work
    {
        let op = HankelOperator::new(&obs.d_obs, spec)?;
        let entries = op.rows() * op.cols();
        if entries > crate::hankel::EXPLICIT_CAP {
            return Err(CfError::ExplicitCapExceeded {
                entries,
                cap: crate::hankel::EXPLICIT_CAP,
            });
        }
    }
    if check_mask_not_degenerate(obs)? && cfg.rank >= spec.taps() {
        return Ok(trivial_result(obs));
    }
    let scale = normalization(obs.d_obs.norm());
    let mut est = obs.d_obs.clone();
    est.scale(scale);
    let d_obs_scaled = est.clone();
    let mut deltas = Vec::new();
    let mut objectives = Vec::new();
    for n in 1..=cfg.max_outer {
        let op = HankelOperator::new(&est, spec)?;
        let h = explicit_hankel(&op)?;
        let low_rank = truncate_rank(&h, cfg.rank)?;
        let residual_energy = (h - &low_rank).norm_squared();
        let mut next = average_onto_hankel(&low_rank, &op)?;
        drop(low_rank);
        for ((x, d), &m) in next
            .as_mut_slice()
            .iter_mut()
            .zip(d_obs_scaled.as_slice())
            .zip(obs.mask.as_slice())
        {
            if m {
                *x = *d;
            }
        }
        let delta = relative_change(&next, &est)?;
        est = next;
        deltas.push(delta);
        objectives.push(residual_energy);
        let state = IterationState {
            iter: n,
            delta,
            objective: residual_energy,
            estimate: &est,
            scale,
        };
        if observer(&state).is_break() || delta <= cfg.tol {
            break;
        }
    }
    Ok(ReconResult {
        d_hat: finish(est, scale, obs),
        outer_iters: deltas.len(),
        delta_history: deltas,
        objective_history: objectives,
        inner_iters: 0,
    })
}

/// Best rank-`r` approximation `H V_r V_rᴴ` via the SVD.
fn truncate_rank(h: &DMatrix<C64>, rank: usize) -> Result<DMatrix<C64>> {
    let svd = h.clone().svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| CfError::InvalidConfig("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep = rank.min(order.len());
    let vr = DMatrix::from_fn(h.ncols(), keep, |i, j| v_t[(order[j], i)].conj());
    let hv = h * &vr;
    Ok(hv * vr.adjoint())
}
