//! Double-differenced linear model, RWLS accumulation and position solvers.
//!
//! Unknowns are the UE position (equivalently its coordinates relative to
//! the known reference receiver) and one absolute DD ambiguity per
//! (satellite, reference satellite) pair, in cycles.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ambiguity::{ils_search, ratio_test, FloatAmbiguities};
use crate::error::{Error, Result};
use crate::measurement::{select_satellites, AmbiguityId, DDMeasurements, LinkSigmas};
use crate::orbit::{enu_rotation, Vec3};
use crate::scenario::{DdCovariance, Scenario};

const GN_TOLERANCE: f64 = 1e-4;
const GN_MAX_ITERATIONS: usize = 10;
const CONDITION_SENTINEL_RATIO: f64 = 1e-14;
/// Relative eigenvalue floor for declaring normal equations singular.
const RANK_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    DelayOnly,
    Joint,
    PhaseOnly,
}

impl SolveMode {
    fn uses_code(self) -> bool {
        matches!(self, SolveMode::DelayOnly | SolveMode::Joint)
    }

    fn uses_phase(self) -> bool {
        matches!(self, SolveMode::Joint | SolveMode::PhaseOnly)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedEpoch {
    pub time: f64,
    /// `m x (3 + m)`: geometry over λ, then one unit ambiguity per row.
    pub phase_rows: DMatrix<f64>,
    /// `m x 3`.
    pub code_rows: DMatrix<f64>,
    /// Observed minus predicted, cycles. The ambiguity is left in.
    pub phase_residual: DVector<f64>,
    /// Observed minus predicted, meters.
    pub code_residual: DVector<f64>,
    /// Inverse DD covariance of the phase rows, 1/cycles².
    pub phase_weight: DMatrix<f64>,
    /// Inverse DD covariance of the code rows, 1/m².
    pub code_weight: DMatrix<f64>,
    pub ambiguity_ids: Vec<AmbiguityId>,
}

fn unit(from: &Vec3, to: &Vec3) -> Result<Vec3> {
    let d = to - from;
    let n = d.norm();
    if !(n > 1e-6) {
        return Err(Error::InvalidGeometry("receiver coincides with a satellite".into()));
    }
    Ok(d / n)
}

/// Inverse of `diag(a) + b 1 1^T`, tolerating infinite variances.
fn dd_weight(local: &[f64], shared: f64, mode: DdCovariance) -> DMatrix<f64> {
    let m = local.len();
    let inv: Vec<f64> = local.iter().map(|a| if a.is_finite() && *a > 0.0 { 1.0 / a } else { 0.0 }).collect();
    let mut w = DMatrix::from_diagonal(&DVector::from_vec(inv.clone()));
    match mode {
        DdCovariance::Diagonal => {
            for j in 0..m {
                let total = local[j] + shared;
                w[(j, j)] = if total.is_finite() && total > 0.0 { 1.0 / total } else { 0.0 };
            }
        }
        DdCovariance::Exact => {
            let s: f64 = inv.iter().sum();
            let gain = if shared.is_infinite() {
                if s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            } else {
                shared / (1.0 + shared * s)
            };
            for j in 0..m {
                for k in 0..m {
                    w[(j, k)] -= inv[j] * inv[k] * gain;
                }
            }
        }
    }
    w
}

fn variances(rows: &[LinkSigmas], reference: &LinkSigmas, phase: bool) -> (Vec<f64>, f64) {
    let pick = |s: &LinkSigmas| if phase { s.phase } else { s.delay };
    let local = rows.iter().map(|s| pick(s)[0].powi(2) + pick(s)[1].powi(2)).collect();
    let r = pick(reference);
    (local, r[0].powi(2) + r[1].powi(2))
}

/// Linearizes one epoch of DD rows about `approx_position`.
pub fn linearize_epoch(
    dd: &DDMeasurements,
    approx_position: &Vec3,
    ref_receiver: &Vec3,
    wavelength: f64,
    covariance: DdCovariance,
) -> Result<LinearizedEpoch> {
    let m = dd.rows.len();
    let sr = dd.ref_sat_state.position_ecef;
    let u_r = unit(approx_position, &sr)?;
    let rho = |p: &Vec3, s: &Vec3| (s - p).norm();
    let base_ref = rho(ref_receiver, &sr);
    let ue_ref = rho(approx_position, &sr);

    let mut phase_rows = DMatrix::zeros(m, 3 + m);
    let mut code_rows = DMatrix::zeros(m, 3);
    let mut phase_residual = DVector::zeros(m);
    let mut code_residual = DVector::zeros(m);
    let mut ids = Vec::with_capacity(m);
    for (i, row) in dd.rows.iter().enumerate() {
        let sj = row.sat_state.position_ecef;
        let u_j = unit(approx_position, &sj)?;
        let g = u_r - u_j;
        let predicted = (rho(approx_position, &sj) - ue_ref) - (rho(ref_receiver, &sj) - base_ref);
        for c in 0..3 {
            code_rows[(i, c)] = g[c];
            phase_rows[(i, c)] = g[c] / wavelength;
        }
        phase_rows[(i, 3 + i)] = 1.0;
        code_residual[i] = row.dd_pseudorange - predicted;
        phase_residual[i] = row.dd_phase - predicted / wavelength;
        ids.push(row.ambiguity_id(dd.ref_sat_id));
    }
    let sigmas: Vec<LinkSigmas> = dd.rows.iter().map(|r| r.sigmas).collect();
    let (lp, sp) = variances(&sigmas, &dd.ref_sigmas, true);
    let (lc, sc) = variances(&sigmas, &dd.ref_sigmas, false);
    Ok(LinearizedEpoch {
        time: dd.time,
        phase_rows,
        code_rows,
        phase_residual,
        code_residual,
        phase_weight: dd_weight(&lp, sp, covariance),
        code_weight: if dd.delay_valid {
            dd_weight(&lc, sc, covariance)
        } else {
            DMatrix::zeros(m, m)
        },
        ambiguity_ids: ids,
    })
}

/// Accumulated normal equations over position plus ambiguity columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RwlsState {
    pub information_matrix: DMatrix<f64>,
    pub information_vector: DVector<f64>,
    pub linearization_point: Vec3,
    pub ambiguity_index: BTreeMap<AmbiguityId, usize>,
    /// Ambiguity ids in column order (column `3 + k`).
    pub ambiguity_order: Vec<AmbiguityId>,
    pub mode: SolveMode,
}

impl RwlsState {
    pub fn new(linearization_point: Vec3, mode: SolveMode) -> Self {
        Self {
            information_matrix: DMatrix::zeros(3, 3),
            information_vector: DVector::zeros(3),
            linearization_point,
            ambiguity_index: BTreeMap::new(),
            ambiguity_order: Vec::new(),
            mode,
        }
    }

    pub fn dim(&self) -> usize {
        self.information_vector.len()
    }

    fn column(&mut self, id: AmbiguityId) -> usize {
        if let Some(&c) = self.ambiguity_index.get(&id) {
            return c;
        }
        let c = self.dim();
        self.ambiguity_index.insert(id, c);
        self.ambiguity_order.push(id);
        self.information_matrix = self.information_matrix.clone().resize(c + 1, c + 1, 0.0);
        self.information_vector = self.information_vector.clone().resize_vertically(c + 1, 0.0);
        c
    }

    /// Adds `A^T W A` and `A^T W r` for one epoch.
    pub fn update(&mut self, epoch: &LinearizedEpoch) {
        if self.mode.uses_code() && epoch.code_rows.nrows() > 0 {
            let aw = epoch.code_rows.transpose() * &epoch.code_weight;
            let n = &aw * &epoch.code_rows;
            let b = &aw * &epoch.code_residual;
            for i in 0..3 {
                self.information_vector[i] += b[i];
                for j in 0..3 {
                    self.information_matrix[(i, j)] += n[(i, j)];
                }
            }
        }
        if self.mode.uses_phase() && epoch.phase_rows.nrows() > 0 {
            let cols: Vec<usize> = (0..3)
                .chain(epoch.ambiguity_ids.iter().map(|id| self.column(*id)))
                .collect();
            let aw = epoch.phase_rows.transpose() * &epoch.phase_weight;
            let n = &aw * &epoch.phase_rows;
            let b = &aw * &epoch.phase_residual;
            for (li, &gi) in cols.iter().enumerate() {
                self.information_vector[gi] += b[li];
                for (lj, &gj) in cols.iter().enumerate() {
                    self.information_matrix[(gi, gj)] += n[(li, lj)];
                }
            }
        }
    }

    /// Solves the normal equations with Jacobi scaling; returns the
    /// solution and its covariance.
    pub fn solve(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.dim();
        let diag = self.information_matrix.diagonal();
        if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::RankDeficient);
        }
        let s = diag.map(|d| 1.0 / d.sqrt());
        let scaled = DMatrix::from_fn(n, n, |i, j| self.information_matrix[(i, j)] * s[i] * s[j]);
        let eig = scaled.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if !(lo > RANK_TOLERANCE * hi) {
            return Err(Error::RankDeficient);
        }
        let chol = scaled.cholesky().ok_or(Error::RankDeficient)?;
        let rhs = self.information_vector.component_mul(&s);
        let x = chol.solve(&rhs).component_mul(&s);
        let inv = chol.inverse();
        let cov = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] * s[i] * s[j]);
        Ok((x, cov))
    }
}

/// Functional form of [`RwlsState::update`].
pub fn rwls_update(mut state: RwlsState, epoch: &LinearizedEpoch) -> RwlsState {
    state.update(epoch);
    state
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionEstimate {
    pub position_ecef: Vec3,
    pub horizontal_error: f64,
    pub vertical_error: f64,
    pub ambiguity_ids: Vec<AmbiguityId>,
    pub ambiguity_truth: Vec<i64>,
    pub ambiguities_float: DVector<f64>,
    /// ILS best candidate; present when the ratio test ran.
    pub ambiguities_fixed: Option<Vec<i64>>,
    pub fixed_accepted: bool,
    pub ratio: Option<f64>,
    /// Position covariance, m².
    pub covariance: DMatrix<f64>,
    /// Marginal ambiguity covariance, cycles².
    pub ambiguity_covariance: DMatrix<f64>,
    pub iterations: usize,
}

impl PositionEstimate {
    pub fn float_errors(&self) -> Vec<f64> {
        self.ambiguities_float
            .iter()
            .zip(&self.ambiguity_truth)
            .map(|(f, t)| f - *t as f64)
            .collect()
    }

    pub fn rounded_errors(&self) -> Vec<i64> {
        self.ambiguities_float
            .iter()
            .zip(&self.ambiguity_truth)
            .map(|(f, t)| f.round() as i64 - t)
            .collect()
    }

    pub fn fixed_errors(&self) -> Option<Vec<i64>> {
        self.ambiguities_fixed
            .as_ref()
            .map(|v| v.iter().zip(&self.ambiguity_truth).map(|(a, t)| a - t).collect())
    }
}

/// Horizontal and vertical error in the ENU frame at `truth`.
pub fn horizontal_vertical_error(estimate: &Vec3, truth: &Vec3) -> (f64, f64) {
    let enu = enu_rotation(truth) * (estimate - truth);
    (enu.x.hypot(enu.y), enu.z.abs())
}

fn ambiguity_truth(epochs: &[DDMeasurements], order: &[AmbiguityId]) -> Vec<i64> {
    let mut truth = BTreeMap::new();
    for dd in epochs {
        for row in &dd.rows {
            truth.entry(row.ambiguity_id(dd.ref_sat_id)).or_insert(row.true_dd_ambiguity);
        }
    }
    order.iter().map(|id| truth.get(id).copied().unwrap_or(0)).collect()
}

/// Normal equations about `(x, ambiguities)`; the solution holds the
/// position step followed by ambiguity increments in column order.
fn accumulate(
    epochs: &[DDMeasurements],
    scenario: &Scenario,
    mode: SolveMode,
    x: Vec3,
    ambiguities: &mut BTreeMap<AmbiguityId, f64>,
    order: &[AmbiguityId],
) -> Result<RwlsState> {
    let lambda = scenario.wavelength();
    let mut state = RwlsState::new(x, mode);
    for id in order {
        state.column(*id);
    }
    for dd in epochs {
        let mut e = linearize_epoch(dd, &x, &scenario.reference, lambda, scenario.dd_covariance)?;
        for (i, id) in e.ambiguity_ids.iter().enumerate() {
            let current = *ambiguities.entry(*id).or_insert(e.phase_residual[i]);
            e.phase_residual[i] -= current;
        }
        state.update(&e);
    }
    Ok(state)
}

/// Iterated Gauss–Newton over all epochs in the given mode.
pub fn solve_with_mode(
    epochs: &[DDMeasurements],
    scenario: &Scenario,
    mode: SolveMode,
    initial: Vec3,
) -> Result<PositionEstimate> {
    if epochs.is_empty() {
        return Err(Error::InvalidInput("no epochs to solve".into()));
    }
    let mut x = initial;
    let mut ambiguities = BTreeMap::new();
    let mut order = Vec::new();
    let mut last_step = f64::INFINITY;
    for iteration in 1..=GN_MAX_ITERATIONS {
        let state = accumulate(epochs, scenario, mode, x, &mut ambiguities, &order)?;
        order = state.ambiguity_order.clone();
        let (sol, cov) = state.solve()?;
        let step = Vec3::new(sol[0], sol[1], sol[2]);
        x += step;
        for (k, id) in order.iter().enumerate() {
            *ambiguities.get_mut(id).expect("column has an estimate") += sol[3 + k];
        }
        last_step = step.norm();
        if last_step < GN_TOLERANCE {
            let (h, v) = horizontal_vertical_error(&x, &scenario.ue);
            let k = order.len();
            return Ok(PositionEstimate {
                position_ecef: x,
                horizontal_error: h,
                vertical_error: v,
                ambiguity_truth: ambiguity_truth(epochs, &order),
                ambiguities_float: DVector::from_iterator(k, order.iter().map(|id| ambiguities[id])),
                ambiguity_ids: order,
                ambiguities_fixed: None,
                fixed_accepted: false,
                ratio: None,
                covariance: cov.view((0, 0), (3, 3)).into_owned(),
                ambiguity_covariance: cov.view((3, 3), (k, k)).into_owned(),
                iterations: iteration,
            });
        }
    }
    Err(Error::Convergence {
        iterations: GN_MAX_ITERATIONS,
        last_step,
        last_position: [x.x, x.y, x.z],
    })
}

/// TDOA-style solve on DD pseudoranges, started at the reference receiver.
pub fn delay_only_solve(epochs: &[DDMeasurements], scenario: &Scenario) -> Result<PositionEstimate> {
    let rows: usize = epochs.iter().filter(|e| e.delay_valid).map(|e| e.rows.len()).sum();
    if rows < 3 {
        return Err(Error::InsufficientGeometry { visible: rows, required: 3 });
    }
    solve_with_mode(epochs, scenario, SolveMode::DelayOnly, scenario.reference)
}

/// Joint delay and phase float solution, started at the delay-only fix.
pub fn solve_float(epochs: &[DDMeasurements], scenario: &Scenario) -> Result<PositionEstimate> {
    let start = delay_only_solve(epochs, scenario)?;
    solve_with_mode(epochs, scenario, SolveMode::Joint, start.position_ecef)
}

/// Float solution, integer search, ratio test and conditional position.
pub fn fix_and_solve(epochs: &[DDMeasurements], scenario: &Scenario) -> Result<PositionEstimate> {
    let mut est = solve_float(epochs, scenario)?;
    let k = est.ambiguities_float.len();
    if k == 0 {
        return Ok(est);
    }
    let sym = (&est.ambiguity_covariance + est.ambiguity_covariance.transpose()) * 0.5;
    let fa = FloatAmbiguities::new(est.ambiguities_float.clone(), sym)?;
    let cands = ils_search(&fa, 2)?;
    let (best, second) = (&cands[0], &cands[1]);
    est.ratio = Some(second.quadratic_residual / best.quadratic_residual.max(1e-12));
    est.fixed_accepted = ratio_test(best, second, scenario.ratio_threshold);
    est.ambiguities_fixed = Some(best.values.clone());
    if est.fixed_accepted {
        let mut current: BTreeMap<AmbiguityId, f64> = est
            .ambiguity_ids
            .iter()
            .zip(est.ambiguities_float.iter())
            .map(|(id, v)| (*id, *v))
            .collect();
        let state = accumulate(epochs, scenario, SolveMode::Joint, est.position_ecef, &mut current, &est.ambiguity_ids)?;
        let (sol, cov) = state.solve()?;
        let q_xn = cov.view((0, 3), (3, k));
        let q_nn = cov.view((3, 3), (k, k)).into_owned();
        let chol = q_nn.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let diff = DVector::from_iterator(
            k,
            (0..k).map(|i| (est.ambiguities_float[i] - best.values[i] as f64) + sol[3 + i]),
        );
        let shift = q_xn * chol.solve(&diff);
        let dx = Vec3::new(sol[0] - shift[0], sol[1] - shift[1], sol[2] - shift[2]);
        let q_x = cov.view((0, 0), (3, 3)) - q_xn * chol.solve(&q_xn.transpose());
        est.position_ecef += dx;
        est.covariance = q_x;
        let (h, v) = horizontal_vertical_error(&est.position_ecef, &scenario.ue);
        est.horizontal_error = h;
        est.vertical_error = v;
    }
    Ok(est)
}

/// `sigma_max / sigma_min` of `a`; `+inf` once `sigma_min < 1e-14 sigma_max`.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::InvalidInput("condition number of an empty matrix".into()));
    }
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("condition number of a zero matrix".into()));
    }
    if a.nrows() < a.ncols() {
        return Ok(f64::INFINITY);
    }
    let sv = a.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo < CONDITION_SENTINEL_RATIO * hi {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

/// Condition number of the stack whose Gram matrix is `gram`, from
/// `sqrt(lambda_max / lambda_min)`.
pub fn condition_from_gram(gram: &DMatrix<f64>) -> Result<f64> {
    if gram.is_empty() {
        return Err(Error::InvalidInput("condition number of an empty matrix".into()));
    }
    let eig = gram.clone().symmetric_eigenvalues();
    let hi = eig.max();
    let lo = eig.min();
    if !(hi > 0.0) {
        return Err(Error::InvalidInput("condition number of a zero matrix".into()));
    }
    if lo < CONDITION_SENTINEL_RATIO * CONDITION_SENTINEL_RATIO * hi {
        return Ok(f64::INFINITY);
    }
    Ok((hi / lo).sqrt())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionTrace {
    pub times: Vec<f64>,
    pub condition_numbers: Vec<f64>,
    /// Epochs with fewer than two usable satellites.
    pub gaps: Vec<f64>,
}

/// Running phase-geometry Gram matrix over accumulated epochs.
#[derive(Debug, Clone, Default)]
pub struct PhaseGram {
    gram: DMatrix<f64>,
    index: BTreeMap<AmbiguityId, usize>,
    rows: usize,
}

impl PhaseGram {
    pub fn new() -> Self {
        Self {
            gram: DMatrix::zeros(3, 3),
            index: BTreeMap::new(),
            rows: 0,
        }
    }

    pub fn add(&mut self, epoch: &LinearizedEpoch) {
        let mut cols: Vec<usize> = vec![0, 1, 2];
        for id in &epoch.ambiguity_ids {
            let next = self.gram.nrows();
            let c = *self.index.entry(*id).or_insert(next);
            if c == next {
                self.gram = self.gram.clone().resize(next + 1, next + 1, 0.0);
            }
            cols.push(c);
        }
        let n = epoch.phase_rows.transpose() * &epoch.phase_rows;
        for (li, &gi) in cols.iter().enumerate() {
            for (lj, &gj) in cols.iter().enumerate() {
                self.gram[(gi, gj)] += n[(li, lj)];
            }
        }
        self.rows += epoch.phase_rows.nrows();
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.gram.nrows()
    }

    pub fn condition(&self) -> Result<f64> {
        if self.rows < self.columns() {
            return Ok(f64::INFINITY);
        }
        condition_from_gram(&self.gram)
    }

    /// Condition number after scaling every column to unit norm.
    pub fn equilibrated_condition(&self) -> Result<f64> {
        if self.rows < self.columns() {
            return Ok(f64::INFINITY);
        }
        let d = self.gram.diagonal().map(|v| 1.0 / v.sqrt());
        let n = self.columns();
        condition_from_gram(&DMatrix::from_fn(n, n, |i, j| self.gram[(i, j)] * d[i] * d[j]))
    }

    /// Position information after eliminating the ambiguities (Schur
    /// complement of the ambiguity block).
    pub fn position_schur(&self) -> Result<DMatrix<f64>> {
        let n = self.columns();
        let a = self.gram.view((0, 0), (3, 3)).into_owned();
        if n == 3 {
            return Ok(a);
        }
        let b = self.gram.view((0, 3), (3, n - 3));
        let d = self.gram.view((3, 3), (n - 3, n - 3)).into_owned();
        let chol = d.cholesky().ok_or(Error::RankDeficient)?;
        let schur = a - b * chol.solve(&b.transpose());
        Ok((&schur + schur.transpose()) * 0.5)
    }

    /// Condition number of [`PhaseGram::position_schur`].
    pub fn position_condition(&self) -> Result<f64> {
        condition_from_gram(&self.position_schur()?)
    }
}

/// Noiseless phase-geometry condition number of everything stacked so far,
/// sampled every `sample_interval` while accumulating scenario epochs.
pub fn condition_trace(scenario: &Scenario, duration: f64, sample_interval: f64) -> Result<ConditionTrace> {
    if duration == 0.0 {
        return Ok(ConditionTrace::default());
    }
    if !(duration > 0.0) || !(sample_interval > 0.0) || !(scenario.epoch_interval > 0.0) {
        return Err(Error::InvalidInput(format!(
            "duration ({duration}) and sample interval ({sample_interval}) must be positive"
        )));
    }
    if duration < sample_interval {
        return Err(Error::InvalidInput("duration shorter than the sample interval".into()));
    }
    let dt = scenario.epoch_interval;
    let n_epochs = ((duration / dt) + 1e-9).floor() as usize + 1;
    let per_sample = ((sample_interval / dt) + 1e-9).round().max(1.0) as usize;
    let lambda = scenario.wavelength();

    let times: Vec<f64> = (0..n_epochs).map(|k| scenario.start_time + k as f64 * dt).collect();
    let selections: Vec<Vec<crate::orbit::SatelliteState>> = times
        .par_iter()
        .map(|&t| select_satellites(scenario, t).map(|(s, _)| s))
        .collect::<Result<_>>()?;

    let mut trace = ConditionTrace::default();
    let mut gram = PhaseGram::new();
    let mut held: Option<u32> = None;
    for (k, (&t, sats)) in times.iter().zip(&selections).enumerate() {
        if sats.len() < 2 {
            trace.gaps.push(t);
        } else {
            let ref_id = match held {
                Some(id) if sats.iter().any(|s| s.sat_id == id) => id,
                _ => sats[0].sat_id,
            };
            held = Some(ref_id);
            let ref_state = *sats.iter().find(|s| s.sat_id == ref_id).expect("held reference present");
            let rows = sats
                .iter()
                .filter(|s| s.sat_id != ref_id)
                .map(|s| crate::measurement::DdRow {
                    sat_id: s.sat_id,
                    dd_pseudorange: 0.0,
                    dd_phase: 0.0,
                    true_dd_ambiguity: 0,
                    sat_state: *s,
                    sigmas: LinkSigmas {
                        delay: [1.0; 2],
                        phase: [1.0; 2],
                    },
                })
                .collect();
            let dd = DDMeasurements {
                time: t,
                ref_sat_id: ref_id,
                ref_sat_state: ref_state,
                ref_sigmas: LinkSigmas {
                    delay: [1.0; 2],
                    phase: [1.0; 2],
                },
                rows,
                delay_valid: false,
            };
            let lin = linearize_epoch(&dd, &scenario.ue, &scenario.reference, lambda, DdCovariance::Diagonal)?;
            gram.add(&lin);
        }
        if k > 0 && k % per_sample == 0 {
            trace.times.push(t - scenario.start_time);
            trace.condition_numbers.push(if gram.rows() == 0 { f64::INFINITY } else { gram.condition()? });
        }
    }
    Ok(trace)
}
