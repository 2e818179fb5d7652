//! Picard fixed-point iteration for the quasi-linear transmission problem:
//! coefficients and sources frozen along the previous iterate, linear solve,
//! contraction monitoring with automatic horizon halving, a uniqueness
//! probe, and the continuation monitor.

use crate::grid::{diff1, DiffMode, GridFunction, TorusGrid};
use crate::norms::{energy_norm, lp_norm, sobolev_norm, NormRegion, NormSpec};
use crate::timejets::{compat_jets, CoefficientModel, Jet, JetError};
use crate::waves::{
    solve_linear, Coefficients, LinearProblem, LinearSolution, Outcome, SourceTraj, Startup,
    Trajectory, WaveError, CFL_FACTOR,
};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QlError {
    #[error("no contraction after {halvings} halvings (T shrunk to {t_final:.3e})")]
    NoConvergence { halvings: usize, t_final: f64 },
    #[error("iteration cap {0} exceeded before the X1 distance fell below tolerance")]
    MaxIterExceeded(usize),
    #[error("jet order {s} unsupported (stencil cap demands s <= 3)")]
    OrderTooHigh { s: usize },
    #[error(transparent)]
    Wave(#[from] WaveError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Norm(#[from] crate::norms::NormError),
}

#[derive(Debug, Clone)]
pub struct PicardConfig {
    /// initial horizon; halved on contraction failure
    pub t_horizon: f64,
    /// X1 stopping tolerance for the iterate distance
    pub tol: f64,
    pub max_iter: usize,
    pub s: usize,
    /// optional ball radius; derived from the data when absent
    pub r_ball: Option<f64>,
    /// additive perturbation of the initial guess (uniqueness probes)
    pub seed_extra: Option<GridFunction>,
    /// external forcing on top of the model sources
    pub extra_f: SourceTraj,
}

impl PicardConfig {
    pub fn new(t_horizon: f64, tol: f64, s: usize) -> Self {
        PicardConfig {
            t_horizon,
            tol,
            max_iter: 25,
            s,
            r_ball: None,
            seed_extra: None,
            extra_f: SourceTraj::None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iterate: usize,
    /// X1 distance to the previous iterate
    pub distance: f64,
    /// contraction ratio r_n = d_{n+1} / d_n
    pub ratio: Option<f64>,
    /// sup_t E^{s+1} of the iterate
    pub high_norm: f64,
}

#[derive(Debug)]
pub struct QuasilinearSolution {
    pub trajectory: Trajectory,
    pub jets: Jet,
    pub history: Vec<IterationRecord>,
    pub t_final: f64,
    pub halvings: usize,
    pub r_ball: f64,
    pub converged_at: usize,
}

/// Freeze model coefficients and sources along a trajectory: one sampled
/// field per step, with the spacetime gradient from difference quotients.
fn sample_along(
    model: &CoefficientModel,
    traj: &Trajectory,
) -> (Coefficients, SourceTraj, SourceTraj) {
    let g = traj.states[0].grid();
    let n = g.dim();
    let dim1 = n + 1;
    let dt = traj.dt;
    let mut a_snaps = Vec::with_capacity(traj.len());
    let mut f_snaps = Vec::with_capacity(traj.len());
    let mut h_snaps = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        let u = &traj.states[k];
        let ut = if k == 0 {
            traj.states[1.min(traj.len() - 1)].sub(u).scale(1.0 / dt)
        } else {
            u.sub(&traj.states[k - 1]).scale(1.0 / dt)
        };
        let grads: Vec<GridFunction> = (0..n).map(|ax| diff1(u, ax, DiffMode::Torus)).collect();
        let mut a = GridFunction::zeros(g, dim1 * dim1);
        let mut f = GridFunction::zeros(g, 1);
        let mut h = GridFunction::zeros(g, 1);
        for p in 0..g.num_points() {
            let uv = [u.value(p, 0)];
            let mut duv = Vec::with_capacity(dim1);
            duv.push(ut.value(p, 0));
            for grad in &grads {
                duv.push(grad.value(p, 0));
            }
            for mu in 0..dim1 {
                for nu in 0..dim1 {
                    a.set(p, mu * dim1 + nu, model.a_entry(n, mu, nu, &uv, &duv));
                }
            }
            f.set(p, 0, model.f_val(&uv, &duv));
            h.set(p, 0, model.h_val(&uv, &duv));
        }
        a_snaps.push(a);
        f_snaps.push(f);
        h_snaps.push(h);
    }
    (
        Coefficients::Sampled { snapshots: a_snaps },
        SourceTraj::Sampled(f_snaps),
        SourceTraj::Sampled(h_snaps),
    )
}

fn merge_sources(a: SourceTraj, b: &SourceTraj, g: TorusGrid, steps: usize, dt: f64) -> SourceTraj {
    match (a, b) {
        (x, SourceTraj::None) => x,
        (SourceTraj::Sampled(mut snaps), extra) => {
            for (k, s) in snaps.iter_mut().enumerate() {
                let t = k as f64 * dt;
                let e = extra.eval(g, s.components(), t, k);
                *s = s.add(&e);
            }
            SourceTraj::Sampled(snaps)
        }
        (SourceTraj::None, extra) => {
            let mut snaps = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                snaps.push(extra.eval(g, 1, k as f64 * dt, k));
            }
            SourceTraj::Sampled(snaps)
        }
        (x, _) => x,
    }
}

/// One application of the fixed-point map: solve the linear problem with
/// coefficients and sources frozen along `u_traj`, from the shared data
/// jets.
pub fn picard_map(
    u_traj: &Trajectory,
    model: &CoefficientModel,
    jets: &Jet,
    extra_f: &SourceTraj,
    startup: Startup,
    s: usize,
) -> Result<LinearSolution, QlError> {
    let g = jets.grid();
    let (coeffs, f_model, h_model) = sample_along(model, u_traj);
    let steps = u_traj.len() - 1;
    let dt = u_traj.dt;
    let f = merge_sources(f_model, extra_f, g, steps, dt);
    let problem = LinearProblem {
        coeffs,
        f,
        h: h_model,
        mu: Vec::new(),
        psi: None,
        jets: jets.clone(),
        startup,
        s,
        dt,
        steps,
        gamma: model.gamma,
        kappa: model.kappa,
        damping: 0.0,
    };
    Ok(solve_linear(&problem)?)
}

/// X1 distance of two trajectories: the sup over steps of the plain energy
/// norm of the difference.
pub fn x1_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let dt = a.dt;
    let mut worst = 0.0f64;
    let steps = a.len().min(b.len());
    for k in 0..steps {
        let d = a.states[k].sub(&b.states[k]);
        let h1 = sobolev_norm(&d, 1, NormRegion::Torus).expect("norm").value;
        let vd = if k == 0 {
            0.0
        } else {
            let prev = a.states[k - 1].sub(&b.states[k - 1]);
            lp_norm(&d.sub(&prev).scale(1.0 / dt), 2.0, NormRegion::Torus)
        };
        worst = worst.max((h1 * h1 + vd * vd).sqrt());
    }
    worst
}

fn high_norm(traj: &Trajectory, s: usize) -> f64 {
    let mut worst = 0.0f64;
    for k in (s + 1)..traj.len() {
        let jet = traj.quotient_jet(k, s + 1);
        let e = energy_norm(jet.entries(), NormSpec::EnergyS { s: s + 1 })
            .expect("norm")
            .value;
        worst = worst.max(e);
    }
    worst
}

/// Fixed-point loop with automatic horizon halving on contraction failure.
pub fn solve_quasilinear(
    model: &CoefficientModel,
    data0: &GridFunction,
    data1: &GridFunction,
    config: &PicardConfig,
) -> Result<QuasilinearSolution, QlError> {
    let s = config.s;
    if s > 3 {
        return Err(QlError::OrderTooHigh { s });
    }
    let g = data0.grid();
    let jets = compat_jets(data0, data1, model, s + 1)?;
    let dt = CFL_FACTOR * g.spacing() * (model.kappa / model.gamma).sqrt();

    let e_data = energy_norm(jets.entries(), NormSpec::EnergyS { s: s + 1 })?.value;
    let r_ball = config.r_ball.unwrap_or_else(|| 2.0 * e_data.max(1.0));

    let mut t_horizon = config.t_horizon;
    let mut halvings = 0usize;
    'horizon: loop {
        let steps = ((t_horizon / dt).ceil() as usize).max(2);
        if halvings > 0 && t_horizon < 10.0 * dt {
            return Err(QlError::NoConvergence {
                halvings,
                t_final: t_horizon,
            });
        }
        // initial guess: Taylor extension of the compatibility jet
        let mut guess: Vec<GridFunction> = (0..=steps)
            .map(|k| jets.taylor_at(k as f64 * dt))
            .collect();
        if let Some(extra) = &config.seed_extra {
            for st in guess.iter_mut() {
                *st = st.add(extra);
            }
        }
        let mut current = Trajectory { dt, states: guess };
        let mut history: Vec<IterationRecord> = Vec::new();
        let mut prev_distance: Option<f64> = None;
        for n in 1..=config.max_iter {
            let sol = picard_map(&current, model, &jets, &config.extra_f, Startup::Jet, s)?;
            if sol.outcome != Outcome::Completed {
                halvings += 1;
                t_horizon /= 2.0;
                continue 'horizon;
            }
            let next = sol.trajectory;
            let d = x1_distance(&next, &current);
            let hn = high_norm(&next, s);
            let ratio = prev_distance.map(|dp| d / dp.max(1e-300));
            history.push(IterationRecord {
                iterate: n,
                distance: d,
                ratio,
                high_norm: hn,
            });
            if let Some(r) = ratio {
                if r >= 1.0 {
                    halvings += 1;
                    t_horizon /= 2.0;
                    continue 'horizon;
                }
            }
            if hn > r_ball {
                halvings += 1;
                t_horizon /= 2.0;
                continue 'horizon;
            }
            if d < config.tol {
                // drop ratios formed against converged (noise-level) steps
                let converged_at = n - 1;
                return Ok(QuasilinearSolution {
                    trajectory: next,
                    jets,
                    history,
                    t_final: t_horizon,
                    halvings,
                    r_ball,
                    converged_at: converged_at.max(1),
                });
            }
            prev_distance = Some(d);
            current = next;
        }
        return Err(QlError::MaxIterExceeded(config.max_iter));
    }
}

/// Contraction ratios of a run, excluding pairs that already sit at the
/// stopping tolerance.
pub fn contraction_ratios(sol: &QuasilinearSolution, tol: f64) -> Vec<f64> {
    sol.history
        .iter()
        .filter(|r| r.distance >= tol)
        .filter_map(|r| r.ratio)
        .collect()
}

#[derive(Debug)]
pub struct UniquenessReport {
    /// per-step plain energy distance of the two solutions
    pub distances: Vec<f64>,
    pub max_distance: f64,
    pub tol: f64,
}

/// Two differently-seeded solves of the same problem; the fixed point must
/// not depend on the seed.
pub fn uniqueness_probe(
    model: &CoefficientModel,
    data0: &GridFunction,
    data1: &GridFunction,
    config: &PicardConfig,
    perturbation: &GridFunction,
) -> Result<UniquenessReport, QlError> {
    let base = solve_quasilinear(model, data0, data1, config)?;
    let mut seeded = config.clone();
    seeded.seed_extra = Some(perturbation.clone());
    let other = solve_quasilinear(model, data0, data1, &seeded)?;
    let dt = base.trajectory.dt;
    let steps = base.trajectory.len().min(other.trajectory.len());
    let mut distances = Vec::with_capacity(steps);
    let mut max_d = 0.0f64;
    for k in 0..steps {
        let d = base.trajectory.states[k].sub(&other.trajectory.states[k]);
        let h1 = sobolev_norm(&d, 1, NormRegion::Torus)?.value;
        let vd = if k == 0 {
            0.0
        } else {
            let prev = base.trajectory.states[k - 1].sub(&other.trajectory.states[k - 1]);
            lp_norm(&d.sub(&prev).scale(1.0 / dt), 2.0, NormRegion::Torus)
        };
        let e = (h1 * h1 + vd * vd).sqrt();
        max_d = max_d.max(e);
        distances.push(e);
    }
    Ok(UniquenessReport {
        distances,
        max_distance: max_d,
        tol: config.tol,
    })
}

// ---------------------------------------------------------------------------
// Continuation monitor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Continuable,
    BlowupSuspected,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    /// W^{1,inf} cap beyond which blow-up is suspected
    pub w_cap: f64,
    /// fitted exponential growth-rate cap on E^{s+1}
    pub rate_cap: f64,
    /// smallest-singular-value floor for the comparison matrix
    pub sigma_floor: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            w_cap: 25.0,
            rate_cap: 2.0,
            sigma_floor: 0.5,
        }
    }
}

#[derive(Debug)]
pub struct ContinuationReport {
    pub times: Vec<f64>,
    pub w1inf: Vec<f64>,
    pub e_high: Vec<f64>,
    /// smallest singular value of the comparison matrix at the given delta
    pub sigma_min: f64,
    /// largest dyadic delta whose matrix клears the floor
    pub delta0: f64,
    pub growth_rate: f64,
    pub verdict: Verdict,
}

/// The scalar comparison matrix: identity minus the elliptic-gain coupling
/// two slots up minus the `delta C(K)` couplings into the first two columns.
pub fn comparison_matrix(s: usize, delta: f64, c_gain: f64, c_k: f64) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; s]; s];
    for k in 0..s {
        m[k][k] = 1.0;
        if k + 2 < s {
            m[k][k + 2] -= c_gain;
        }
        m[k][0] -= delta * c_k;
        if s > 1 {
            m[k][1] -= delta * c_k;
        }
    }
    m
}

pub fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        // partial pivot
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            if a[r][col] == 0.0 {
                continue;
            }
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// Smallest singular value via cyclic Jacobi on `M^T M`.
pub fn smallest_singular_value(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += m[k][i] * m[k][j];
            }
            a[i][j] = acc;
        }
    }
    for _sweep in 0..50 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min = f64::MAX;
    for i in 0..n {
        min = min.min(a[i][i].max(0.0));
    }
    min.sqrt()
}

fn w1inf_of(traj: &Trajectory, k: usize) -> f64 {
    let u = &traj.states[k];
    let g = u.grid();
    let mut m = u.linf();
    for axis in 0..g.dim() {
        m = m.max(diff1(u, axis, DiffMode::Torus).linf());
    }
    if k >= 1 {
        m = m.max(
            traj.states[k]
                .sub(&traj.states[k - 1])
                .scale(1.0 / traj.dt)
                .linf(),
        );
    }
    m
}

/// Track the continuation quantities of a solution trajectory and render the
/// verdict.
///
/// The elliptic-gain constant is measured from the run's own jets
/// (`X_k / X_{k+2}`); the state constant uses the frozen normalization
/// `C(K) = (1 + K)^2` with `K` the measured sup norm.
pub fn continuation_monitor(
    traj: &Trajectory,
    s: usize,
    delta: f64,
    config: &MonitorConfig,
) -> Result<ContinuationReport, QlError> {
    let dt = traj.dt;
    let mut times = Vec::new();
    let mut w1 = Vec::new();
    let mut e_high = Vec::new();
    let mut c_gain: f64 = 0.0;
    for k in 0..traj.len() {
        times.push(k as f64 * dt);
        w1.push(w1inf_of(traj, k));
        let jet = traj.quotient_jet(k, (s + 1).min(k.max(1)));
        let top = jet.order().min(s + 1);
        let e = energy_norm(&jet.entries()[..=top], NormSpec::EnergyS { s: top })?.value;
        e_high.push(e);
        // measured X_k / X_{k+2} over the slots that have a partner
        if k > s + 1 {
            for slot in 0..s.saturating_sub(2) {
                let xk = crate::norms::intersect_norm(jet.entry(slot), 2, (s + 1 - slot).min(4))?
                    .value;
                let xk2 =
                    crate::norms::intersect_norm(jet.entry(slot + 2), 2, (s - 1 - slot).min(4))?
                        .value;
                if xk2 > 1e-12 {
                    c_gain = c_gain.max(xk / xk2);
                }
            }
        }
    }
    let k_sup = w1.iter().fold(0.0f64, |m, &v| m.max(v));
    let c_k = (1.0 + k_sup).powi(2);
    let sigma_min = smallest_singular_value(&comparison_matrix(s, delta, c_gain, c_k));
    // largest dyadic delta clearing the floor
    let mut delta0 = 0.0;
    let mut d = 1.0;
    while d >= 1.0 / 1024.0 {
        if smallest_singular_value(&comparison_matrix(s, d, c_gain, c_k)) > config.sigma_floor {
            delta0 = d;
            break;
        }
        d /= 2.0;
    }
    // fitted exponential growth rate of E^{s+1} over the second half
    let half = e_high.len() / 2;
    let growth_rate = {
        let xs: Vec<f64> = times[half..].to_vec();
        let ys: Vec<f64> = e_high[half..]
            .iter()
            .map(|v| v.max(1e-300).ln())
            .collect();
        let m = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / m;
        let ybar = ys.iter().sum::<f64>() / m;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            sxx += (x - xbar) * (x - xbar);
            sxy += (x - xbar) * (y - ybar);
        }
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    };
    let verdict = if k_sup > config.w_cap {
        Verdict::BlowupSuspected
    } else if growth_rate < config.rate_cap {
        Verdict::Continuable
    } else {
        Verdict::Inconclusive
    };
    Ok(ContinuationReport {
        times,
        w1inf: w1,
        e_high,
        sigma_min,
        delta0,
        growth_rate,
        verdict,
    })
}

/// Window-continuation driver: march the quasi-linear solve window by
/// window, re-deriving compatibility jets from each window's end state, and
/// concatenate the trajectory. Stops early when the solver aborts or stops
/// contracting; used by the continuation corpus.
pub fn continue_windows(
    model: &CoefficientModel,
    data0: &GridFunction,
    data1: &GridFunction,
    config: &PicardConfig,
    windows: usize,
) -> (Trajectory, usize) {
    let g = data0.grid();
    let dt = CFL_FACTOR * g.spacing() * (model.kappa / model.gamma).sqrt();
    let mut all = Trajectory {
        dt,
        states: Vec::new(),
    };
    let mut d0 = data0.clone();
    let mut d1 = data1.clone();
    let mut completed = 0usize;
    for _ in 0..windows {
        match solve_quasilinear(model, &d0, &d1, config) {
            Ok(sol) => {
                let t = sol.trajectory;
                let skip = if all.states.is_empty() { 0 } else { 1 };
                all.states.extend(t.states[skip..].iter().cloned());
                let k = t.len() - 1;
                d0 = t.states[k].clone();
                d1 = t.states[k].sub(&t.states[k - 1]).scale(1.0 / dt);
                completed += 1;
            }
            Err(_) => break,
        }
    }
    (all, completed)
}

/// Per-iteration metrics CSV: (iterate, distance, ratio, high_norm).
pub fn history_csv(sol: &QuasilinearSolution) -> String {
    let mut s = String::from("iterate,distance,ratio,high_norm\n");
    for r in &sol.history {
        let ratio = r.ratio.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.iterate, r.distance, ratio, r.high_norm);
    }
    s
}
