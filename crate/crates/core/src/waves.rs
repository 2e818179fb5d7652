//! Leapfrog time integration of the linear transmission wave equation with
//! frozen coefficients, plus the weak-solution energy monitor and the
//! finite-propagation-speed checker.
//!
//! The second time derivative is isolated pointwise from the divergence-form
//! equation; the `d_t u` couplings (coefficient drift and optional damping)
//! are taken at the centered implicit level, which keeps the update a scalar
//! solve per point.

use crate::grid::{self, derivative, diff1, laplacian, DiffMode, GridFunction, TorusGrid};
use crate::norms::{energy_norm, lp_norm, NormRegion, NormSpec};
use crate::timejets::Jet;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WaveError {
    #[error("CFL violated: dt = {dt:.3e} exceeds {max:.3e}")]
    CflViolation { dt: f64, max: f64 },
    #[error("startup jet must provide at least position and velocity")]
    JetTooShort,
    #[error("correction source has {len} entries; d_t^{s} mu = 0 demands at most {s}")]
    MuDegreeTooHigh { len: usize, s: usize },
    #[error("A^00 rose above -kappa/2 along the trajectory at step {step}")]
    EllipticityLost { step: usize },
    #[error(transparent)]
    Norm(#[from] crate::norms::NormError),
}

pub const CFL_FACTOR: f64 = 0.4;

/// Weak-energy-estimate constant, calibrated once on the flat standing wave
/// at N = 64 and multiplied by the safety factor 4 (see the calibration test
/// that pins it).
pub const WEAK_ENERGY_C: f64 = 6.0;

/// Scalar time profile of a separable source term.
#[derive(Debug, Clone)]
pub enum TimeProfile {
    Constant,
    Sin { omega: f64 },
    Cos { omega: f64 },
    /// `sum_l c_l t^l`
    Poly(Vec<f64>),
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Sin { omega } => (omega * t).sin(),
            TimeProfile::Cos { omega } => (omega * t).cos(),
            TimeProfile::Poly(c) => {
                let mut acc = 0.0;
                for &ci in c.iter().rev() {
                    acc = acc * t + ci;
                }
                acc
            }
        }
    }

    /// `d_t^j` at `t = 0`.
    pub fn jet(&self, j: usize) -> f64 {
        match self {
            TimeProfile::Constant => {
                if j == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            TimeProfile::Sin { omega } => match j % 4 {
                1 => omega.powi(j as i32),
                3 => -omega.powi(j as i32),
                _ => 0.0,
            },
            TimeProfile::Cos { omega } => match j % 4 {
                0 => omega.powi(j as i32),
                2 => -omega.powi(j as i32),
                _ => 0.0,
            },
            TimeProfile::Poly(c) => {
                let mut fact = 1.0;
                for k in 1..=j {
                    fact *= k as f64;
                }
                c.get(j).copied().unwrap_or(0.0) * fact
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeparableSource {
    pub spatial: GridFunction,
    pub time: TimeProfile,
}

/// Source trajectory: separable terms or per-step samples.
#[derive(Debug, Clone)]
pub enum SourceTraj {
    None,
    Separable(Vec<SeparableSource>),
    Sampled(Vec<GridFunction>),
}

impl SourceTraj {
    pub fn eval(&self, g: TorusGrid, comps: usize, t: f64, step: usize) -> GridFunction {
        match self {
            SourceTraj::None => GridFunction::zeros(g, comps),
            SourceTraj::Separable(terms) => {
                let mut acc = GridFunction::zeros(g, comps);
                for term in terms {
                    acc = acc.axpy(term.time.eval(t), &term.spatial);
                }
                acc
            }
            SourceTraj::Sampled(snaps) => snaps[step.min(snaps.len() - 1)].clone(),
        }
    }

    /// Time jets at `t = 0`, for startup-consistent compatibility data.
    pub fn jets(&self, g: TorusGrid, comps: usize, order: usize) -> Vec<GridFunction> {
        match self {
            SourceTraj::None => vec![GridFunction::zeros(g, comps); order + 1],
            SourceTraj::Separable(terms) => (0..=order)
                .map(|j| {
                    let mut acc = GridFunction::zeros(g, comps);
                    for term in terms {
                        acc = acc.axpy(term.time.jet(j), &term.spatial);
                    }
                    acc
                })
                .collect(),
            SourceTraj::Sampled(_) => {
                panic!("sampled sources carry no jet structure")
            }
        }
    }
}

/// Coefficient trajectory `A^{mu nu}(t, x)` as an `(n+1)^2`-component field.
#[derive(Debug, Clone)]
pub enum Coefficients {
    Constant(GridFunction),
    /// polynomial in `t` through time jets: `A(t) = sum t^j/j! jets[j]`
    Jets(Vec<GridFunction>),
    /// frozen along an iterate: one field per step
    Sampled { snapshots: Vec<GridFunction> },
}

impl Coefficients {
    fn at(&self, t: f64, step: usize) -> GridFunction {
        match self {
            Coefficients::Constant(a) => a.clone(),
            Coefficients::Jets(jets) => {
                let mut acc = jets[0].clone();
                let mut w = 1.0;
                for (j, field) in jets.iter().enumerate().skip(1) {
                    w *= t / j as f64;
                    acc = acc.axpy(w, field);
                }
                acc
            }
            Coefficients::Sampled { snapshots } => snapshots[step.min(snapshots.len() - 1)].clone(),
        }
    }

    /// Two-level time difference for the sampled form, exact derivative for
    /// the polynomial form.
    fn dt_at(&self, t: f64, step: usize, dt: f64) -> GridFunction {
        match self {
            Coefficients::Constant(a) => GridFunction::zeros(a.grid(), a.components()),
            Coefficients::Jets(jets) => {
                let mut acc = jets
                    .get(1)
                    .cloned()
                    .unwrap_or_else(|| GridFunction::zeros(jets[0].grid(), jets[0].components()));
                let mut w = 1.0;
                for (j, field) in jets.iter().enumerate().skip(2) {
                    w *= t / (j - 1) as f64;
                    acc = acc.axpy(w, field);
                }
                acc
            }
            Coefficients::Sampled { snapshots } => {
                let k = step.min(snapshots.len() - 1);
                if k == 0 {
                    snapshots[1.min(snapshots.len() - 1)]
                        .sub(&snapshots[0])
                        .scale(1.0 / dt)
                } else {
                    snapshots[k].sub(&snapshots[k - 1]).scale(1.0 / dt)
                }
            }
        }
    }

    pub fn grid(&self) -> TorusGrid {
        match self {
            Coefficients::Constant(a) => a.grid(),
            Coefficients::Jets(jets) => jets[0].grid(),
            Coefficients::Sampled { snapshots } => snapshots[0].grid(),
        }
    }
}

/// How the second time level is seeded.
#[derive(Debug, Clone)]
pub enum Startup {
    /// Taylor sum of the compatibility jet (the production path).
    Jet,
    /// First-order `u_0 + dt u_1`; kept as the documented negative test.
    Naive,
    /// Explicit second level (dispersion oracles).
    Explicit(GridFunction),
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub coeffs: Coefficients,
    pub f: SourceTraj,
    /// interior source, applied through the indicator
    pub h: SourceTraj,
    /// polynomial correction `mu(t) = sum t^l/l! mu_l`
    pub mu: Vec<GridFunction>,
    pub psi: Option<GridFunction>,
    /// startup jet (u_0, u_1, ...)
    pub jets: Jet,
    pub startup: Startup,
    pub s: usize,
    pub dt: f64,
    pub steps: usize,
    pub gamma: f64,
    pub kappa: f64,
    /// velocity damping for static-limit diagnostics; zero in production
    pub damping: f64,
}

impl LinearProblem {
    pub fn validate(&self) -> Result<(), WaveError> {
        if self.jets.entries().len() < 2 {
            return Err(WaveError::JetTooShort);
        }
        let g = self.jets.grid();
        let max_dt = CFL_FACTOR * g.spacing() * (self.kappa / self.gamma).sqrt();
        if self.dt > max_dt {
            return Err(WaveError::CflViolation {
                dt: self.dt,
                max: max_dt,
            });
        }
        if self.mu.len() > self.s {
            return Err(WaveError::MuDegreeTooHigh {
                len: self.mu.len(),
                s: self.s,
            });
        }
        Ok(())
    }

    fn mu_at(&self, t: f64) -> Option<GridFunction> {
        if self.mu.is_empty() {
            return None;
        }
        let mut acc = self.mu[0].clone();
        let mut w = 1.0;
        for (l, m) in self.mu.iter().enumerate().skip(1) {
            w *= t / l as f64;
            acc = acc.axpy(w, m);
        }
        Some(acc)
    }
}

/// Per-step monitor records.
#[derive(Debug, Clone, Default)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    /// plain `E` (H1 + L2 of the velocity quotient)
    pub e_base: Vec<f64>,
    /// `E^s` of the difference-quotient jet
    pub e_s: Vec<f64>,
    /// script `E^{s-1}` of the quotient jet
    pub ec_sm1: Vec<f64>,
    /// the exactly-conserved quadratic of the constant-coefficient scheme
    pub leapfrog_energy: Vec<f64>,
    pub w1inf: Vec<f64>,
    pub l2: Vec<f64>,
    /// `1 + |d_t a|_inf`
    pub d2: Vec<f64>,
    /// `|f_eff|_L2`
    pub d3: Vec<f64>,
}

impl EnergyTrace {
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("t,e_base,e_s,ec_sm1,leapfrog_energy,w1inf,l2,d2,d3\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.times[i],
                self.e_base[i],
                self.e_s[i],
                self.ec_sm1[i],
                self.leapfrog_energy[i],
                self.w1inf[i],
                self.l2[i],
                self.d2[i],
                self.d3[i]
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    AbortedEnergyBlowup { step: usize },
    AbortedNonFinite { step: usize },
}

/// Stored time levels of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<GridFunction>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &GridFunction {
        &self.states[k]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Backward difference-quotient jet of order `r` at step `k`.
    pub fn quotient_jet(&self, k: usize, r: usize) -> Jet {
        let g = self.states[0].grid();
        let comps = self.states[0].components();
        let mut entries = Vec::with_capacity(r + 1);
        for m in 0..=r {
            if k < m {
                entries.push(GridFunction::zeros(g, comps));
                continue;
            }
            let mut acc = GridFunction::zeros(g, comps);
            for j in 0..=m {
                let c = (crate::norms::binomial(m, j) as f64) * if j % 2 == 0 { 1.0 } else { -1.0 };
                acc = acc.axpy(c, &self.states[k - j]);
            }
            entries.push(acc.scale(self.dt.powi(-(m as i32))));
        }
        Jet::new(entries)
    }

    pub fn csv_snapshots(&self, stride: usize) -> String {
        let g = self.states[0].grid();
        let mut s = String::from("t,point,value\n");
        for (k, st) in self.states.iter().enumerate().step_by(stride.max(1)) {
            for p in 0..g.num_points() {
                let _ = writeln!(s, "{},{},{}", k as f64 * self.dt, p, st.value(p, 0));
            }
        }
        s
    }
}

#[derive(Debug)]
pub struct LinearSolution {
    pub trajectory: Trajectory,
    pub trace: EnergyTrace,
    pub outcome: Outcome,
}

struct CoeffFields {
    a: GridFunction,
    dta: GridFunction,
    /// `d_0 A^{00} + d_i A^{i0}` (the implicit d_t u coupling)
    drift0: GridFunction,
}

fn coeff_fields(problem: &LinearProblem, t: f64, step: usize) -> CoeffFields {
    let a = problem.coeffs.at(t, step);
    let dta = problem.coeffs.dt_at(t, step, problem.dt);
    let g = a.grid();
    let n = g.dim();
    let dim1 = n + 1;
    let mut drift0 = dta.extract_component(0);
    for i in 1..=n {
        drift0 = drift0.add(&diff1(&a.extract_component(i * dim1), i - 1, DiffMode::Torus));
    }
    CoeffFields { a, dta, drift0 }
}

/// One leapfrog step: `(u at t - dt, u at t) -> u at t + dt`.
pub fn step(
    u_prev: &GridFunction,
    u_curr: &GridFunction,
    problem: &LinearProblem,
    t: f64,
    step_idx: usize,
    chi: &GridFunction,
) -> Result<GridFunction, WaveError> {
    let g = u_curr.grid();
    let n = g.dim();
    let dim1 = n + 1;
    let dt = problem.dt;
    let comps = u_curr.components();
    let fields = coeff_fields(problem, t, step_idx);
    let a = &fields.a;

    let a00 = a.extract_component(0);
    if a00.data().iter().any(|&v| v > -problem.kappa / 2.0) {
        return Err(WaveError::EllipticityLost { step: step_idx });
    }

    // explicit right-hand side
    let mut rhs = problem.f.eval(g, comps, t, step_idx);
    rhs = rhs.add(&chi.mul(&problem.h.eval(g, comps, t, step_idx)));
    if let Some(mu) = problem.mu_at(t) {
        rhs = rhs.add(&mu);
    }
    if let Some(psi) = &problem.psi {
        rhs = rhs.add(&psi.mul(u_curr));
    }
    // -2 A^{0i} d_i d_t u (two known levels)
    let v = u_curr.sub(u_prev).scale(1.0 / dt);
    for i in 1..=n {
        let div = diff1(&v, i - 1, DiffMode::Torus);
        rhs = rhs.axpy(-2.0, &a.extract_component(i).mul(&div));
    }
    // -A^{ij} d_i d_j u
    for i in 1..=n {
        for j in 1..=n {
            let mut alpha = [0usize; 3];
            alpha[i - 1] += 1;
            alpha[j - 1] += 1;
            let dij = derivative(u_curr, &alpha[..n], DiffMode::Torus);
            rhs = rhs.axpy(-1.0, &a.extract_component(i * dim1 + j).mul(&dij));
        }
    }
    // -(d_mu A^{mu j}) d_j u (spatial targets; the nu = 0 target is implicit)
    for j in 1..=n {
        let mut divj = fields.dta.extract_component(j);
        for i in 1..=n {
            divj = divj.add(&diff1(
                &a.extract_component(i * dim1 + j),
                i - 1,
                DiffMode::Torus,
            ));
        }
        let dju = diff1(u_curr, j - 1, DiffMode::Torus);
        rhs = rhs.axpy(-1.0, &divj.mul(&dju));
    }

    // pointwise implicit solve:
    // (A00/dt^2 - (sigma - drift0)/(2dt)) u+ =
    //    rhs + A00 (2u - u-)/dt^2 - (sigma - drift0) u-/(2dt)
    let sigma = problem.damping;
    let mut out = GridFunction::zeros(g, comps);
    for p in 0..g.num_points() {
        let a00p = a00.value(p, 0);
        let c0 = sigma - fields.drift0.value(p, 0);
        let denom = a00p / (dt * dt) - c0 / (2.0 * dt);
        for c in 0..comps {
            let num = rhs.value(p, c)
                + a00p * (2.0 * u_curr.value(p, c) - u_prev.value(p, c)) / (dt * dt)
                - c0 * u_prev.value(p, c) / (2.0 * dt);
            out.set(p, c, num / denom);
        }
    }
    Ok(out)
}

fn w1inf(u: &GridFunction, v: &GridFunction) -> f64 {
    let g = u.grid();
    let mut m = u.linf().max(v.linf());
    for axis in 0..g.dim() {
        m = m.max(diff1(u, axis, DiffMode::Torus).linf());
    }
    m
}

/// Full linear solve with per-step monitors.
pub fn solve_linear(problem: &LinearProblem) -> Result<LinearSolution, WaveError> {
    problem.validate()?;
    let g = problem.jets.grid();
    let comps = problem.jets.entry(0).components();
    let chi = grid::indicator(g);
    let dt = problem.dt;

    let u0 = problem.jets.entry(0).clone();
    let u1 = match &problem.startup {
        Startup::Jet => problem.jets.taylor_at(dt),
        Startup::Naive => problem.jets.entry(0).axpy(dt, problem.jets.entry(1)),
        Startup::Explicit(u) => u.clone(),
    };

    let mut states = vec![u0, u1];
    let mut trace = EnergyTrace::default();
    let mut outcome = Outcome::Completed;
    let record = |trace: &mut EnergyTrace, traj_states: &[GridFunction], k: usize, t: f64| {
        let traj = Trajectory {
            dt,
            states: traj_states.to_vec(),
        };
        let jet_s = traj.quotient_jet(k, problem.s.min(k));
        let pad = |jet: &Jet, order: usize| -> Vec<GridFunction> {
            let mut v: Vec<GridFunction> = jet.entries().to_vec();
            while v.len() < order + 1 {
                v.push(GridFunction::zeros(g, comps));
            }
            v
        };
        let full = pad(&jet_s, problem.s);
        trace.times.push(t);
        trace
            .e_base
            .push(energy_norm(&full[..2], NormSpec::EnergyBase).expect("norm").value);
        trace.e_s.push(
            energy_norm(&full, NormSpec::EnergyS { s: problem.s })
                .expect("norm")
                .value,
        );
        trace.ec_sm1.push(
            energy_norm(
                &full[..problem.s],
                NormSpec::EnergyCs {
                    s: problem.s.saturating_sub(1),
                },
            )
            .expect("norm")
            .value,
        );
        let lf = if k >= 1 {
            let v = traj_states[k].sub(&traj_states[k - 1]).scale(1.0 / dt);
            let lap = laplacian(&traj_states[k], DiffMode::Torus);
            let w = g.cell_volume();
            let kinetic: f64 = v.data().iter().map(|x| x * x).sum::<f64>() * w;
            let potential: f64 = lap
                .data()
                .iter()
                .zip(traj_states[k - 1].data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * w;
            kinetic - potential
        } else {
            0.0
        };
        trace.leapfrog_energy.push(lf);
        trace.w1inf.push(w1inf(&traj_states[k], &full[1]));
        trace.l2.push(lp_norm(&traj_states[k], 2.0, NormRegion::Torus));
        let dta = problem.coeffs.dt_at(t, k, dt);
        trace.d2.push(1.0 + dta.linf());
        let mut f_eff = problem.f.eval(g, comps, t, k);
        f_eff = f_eff.add(&chi.mul(&problem.h.eval(g, comps, t, k)));
        if let Some(mu) = problem.mu_at(t) {
            f_eff = f_eff.add(&mu);
        }
        if let Some(psi) = &problem.psi {
            f_eff = f_eff.add(&psi.mul(&traj_states[k]));
        }
        trace.d3.push(lp_norm(&f_eff, 2.0, NormRegion::Torus));
    };

    record(&mut trace, &states, 0, 0.0);
    record(&mut trace, &states, 1, dt);

    for k in 1..problem.steps {
        let t = k as f64 * dt;
        let next = step(&states[k - 1], &states[k], problem, t, k, &chi)?;
        if next.has_non_finite() {
            outcome = Outcome::AbortedNonFinite { step: k + 1 };
            break;
        }
        states.push(next);
        record(&mut trace, &states, k + 1, t + dt);
        // blow-up guard: base energy doubling within 10 steps, armed only
        // well above the problem's own scale so source-driven growth from
        // zero energy is not mistaken for blow-up
        let m = trace.e_base.len();
        if m > 10 {
            let scale_ref = trace.e_base[0]
                .max(trace.e_base[1])
                .max(trace.d3[0])
                .max(trace.d3[1]);
            let now = trace.e_base[m - 1];
            let then = trace.e_base[m - 11];
            if then.is_finite() && then > 10.0 * scale_ref && then > 0.0 && now > 2.0 * then {
                outcome = Outcome::AbortedEnergyBlowup { step: k + 1 };
                break;
            }
        }
    }

    Ok(LinearSolution {
        trajectory: Trajectory { dt, states },
        trace,
        outcome,
    })
}

/// Margin report of the weak energy estimate: the minimum over time pairs of
/// `c (E(t1) + d1(t1) + int (d2 E + d3)) - E(t2)`.
pub fn energy_estimate_check(trace: &EnergyTrace, c: f64) -> f64 {
    let k = trace.times.len();
    if k < 2 {
        return 0.0;
    }
    let dt = trace.times[1] - trace.times[0];
    // prefix integral of d2 E + d3
    let mut prefix = vec![0.0; k];
    for j in 1..k {
        prefix[j] =
            prefix[j - 1] + dt * (trace.d2[j] * trace.e_base[j] + trace.d3[j]);
    }
    let mut margin = f64::MAX;
    let mut best_start = f64::MAX;
    for j in 0..k {
        if j > 0 {
            let candidate = c * (best_start + prefix[j]) - trace.e_base[j];
            margin = margin.min(candidate);
        }
        let d1 = trace.d3[j] * 0.0 + trace.l2[j]; // p = q = 0 corpus: d1 = |u(t1)|_L2
        let start = trace.e_base[j] + d1 - prefix[j];
        best_start = best_start.min(start);
    }
    margin
}

/// Required constant for a nonnegative margin on a trace; the frozen
/// [`WEAK_ENERGY_C`] is the calibration problem's value times 4.
pub fn required_energy_constant(trace: &EnergyTrace) -> f64 {
    let k = trace.times.len();
    let dt = trace.times[1] - trace.times[0];
    let mut prefix = vec![0.0; k];
    for j in 1..k {
        prefix[j] = prefix[j - 1] + dt * (trace.d2[j] * trace.e_base[j] + trace.d3[j]);
    }
    let mut c_req: f64 = 0.0;
    for j1 in 0..k {
        let d1 = trace.l2[j1];
        for j2 in j1 + 1..k {
            let denom = trace.e_base[j1] + d1 + (prefix[j2] - prefix[j1]);
            if denom > 0.0 {
                c_req = c_req.max(trace.e_base[j2] / denom);
            }
        }
    }
    c_req
}

/// Finite-propagation report: leakage outside the inflated ball per recorded
/// time, for the physical cone (`c_max`) and for the scheme's domain of
/// dependence (`max(c_max, h/dt)`, one cell per step).
#[derive(Debug, Clone)]
pub struct SpeedReport {
    pub times: Vec<f64>,
    pub physical: Vec<f64>,
    pub discrete: Vec<f64>,
    pub support_radius: f64,
}

pub fn speed_check(
    sol_a: &Trajectory,
    sol_b: &Trajectory,
    center: &[f64],
    c_max: f64,
) -> SpeedReport {
    let g = sol_a.states[0].grid();
    let dt = sol_a.dt;
    // measured support radius of the initial perturbation
    let diff0 = sol_a.states[0].sub(&sol_b.states[0]);
    let diff1_ = sol_a.states[1].sub(&sol_b.states[1]);
    let mut r = 0.0f64;
    for p in 0..g.num_points() {
        if diff0.value(p, 0) != 0.0 || diff1_.value(p, 0) != 0.0 {
            r = r.max(g.distance(p, center));
        }
    }
    let cell_speed = g.spacing() / dt;
    let steps = sol_a.len().min(sol_b.len());
    let mut report = SpeedReport {
        times: Vec::new(),
        physical: Vec::new(),
        discrete: Vec::new(),
        support_radius: r,
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        let d = sol_a.states[k].sub(&sol_b.states[k]);
        let mut leak_phys = 0.0f64;
        let mut leak_disc = 0.0f64;
        let r_phys = r + c_max * t;
        let r_disc = r + cell_speed.max(c_max) * t;
        for p in 0..g.num_points() {
            let dist = g.distance(p, center);
            let v = d.value(p, 0).abs();
            if dist > r_phys {
                leak_phys = leak_phys.max(v);
            }
            if dist > r_disc {
                leak_disc = leak_disc.max(v);
            }
        }
        report.times.push(t);
        report.physical.push(leak_phys);
        report.discrete.push(leak_disc);
    }
    report
}

/// The fully discrete dispersion frequency of the flat leapfrog scheme on a
/// Fourier mode with symbol `lambda_h`.
pub fn dispersion_frequency(lambda_h: f64, dt: f64) -> f64 {
    (2.0 / dt) * ((lambda_h).sqrt() * dt / 2.0).asin()
}
