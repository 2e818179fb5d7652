//! Compatibility jets, correction sources, dyadic rescalings and the
//! projection of an interface problem to the periodic box.
//!
//! Formal time differentiation is realized as truncated power-series
//! arithmetic in `t`: coefficients, sources and solution entries are carried
//! as series whose coefficients are grid fields, so Leibniz and chain-rule
//! structure come out of plain series products.

use crate::grid::{self, derivative, diff1, DiffMode, GridFunction, TorusGrid};
use crate::norms::{energy_norm, NormSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JetError {
    #[error("ellipticity violated: |A^00| dropped to {min_abs:.3e} (< kappa/2 = {floor:.3e})")]
    EllipticityViolation { min_abs: f64, floor: f64 },
    #[error("no positive localization width found for the correction sources")]
    LocalizationFailure,
    #[error("delta {0} is not dyadic in (0, 1] or too fine for the grid")]
    BadDelta(f64),
    #[error("need s > n/2 for a positive scaling exponent (s = {s}, n = {n})")]
    SigmaNotPositive { s: usize, n: usize },
    #[error("jet of length {len} too short, need {need}")]
    JetTooShort { len: usize, need: usize },
    #[error("projected data is not the cutoff of the raw data (entry {entry})")]
    InconsistentProjection { entry: usize },
    #[error("malformed jet blob: {0}")]
    BadBlob(String),
    #[error(transparent)]
    Grid(#[from] grid::GridError),
    #[error(transparent)]
    Norm(#[from] crate::norms::NormError),
}

/// Time-derivative stack `(u_0, ..., u_r)` at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    entries: Vec<GridFunction>,
}

impl Jet {
    pub fn new(entries: Vec<GridFunction>) -> Self {
        assert!(!entries.is_empty());
        let g = entries[0].grid();
        let c = entries[0].components();
        assert!(
            entries.iter().all(|e| e.grid() == g && e.components() == c),
            "jet entries must share grid and components"
        );
        Jet { entries }
    }

    pub fn order(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entries(&self) -> &[GridFunction] {
        &self.entries
    }

    pub fn entry(&self, l: usize) -> &GridFunction {
        &self.entries[l]
    }

    pub fn grid(&self) -> TorusGrid {
        self.entries[0].grid()
    }

    /// Taylor evaluation `sum t^l / l! u_l`.
    pub fn taylor_at(&self, t: f64) -> GridFunction {
        let mut acc = self.entries[0].clone();
        let mut w = 1.0;
        for (l, u) in self.entries.iter().enumerate().skip(1) {
            w *= t / l as f64;
            acc = acc.axpy(w, u);
        }
        acc
    }

    /// Ordered blob list with an order header.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let blob = e.to_bytes();
            out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Jet, JetError> {
        let take_u32 = |at: usize| -> Result<u32, JetError> {
            bytes
                .get(at..at + 4)
                .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
                .ok_or_else(|| JetError::BadBlob("truncated header".into()))
        };
        let count = take_u32(0)? as usize;
        let mut at = 4;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let len = take_u32(at)? as usize;
            at += 4;
            let blob = bytes
                .get(at..at + len)
                .ok_or_else(|| JetError::BadBlob("truncated entry".into()))?;
            entries.push(GridFunction::from_bytes(blob)?);
            at += len;
        }
        if entries.is_empty() {
            return Err(JetError::BadBlob("empty jet".into()));
        }
        Ok(Jet::new(entries))
    }
}

// ---------------------------------------------------------------------------
// Scaling parameters
// ---------------------------------------------------------------------------

/// The box half-width `delta`, regularity order `s`, exponent
/// `sigma = min(1, s - n/2)` and coupling `eps = delta^sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub delta: f64,
    pub s: usize,
    pub sigma: f64,
    pub eps: f64,
}

impl ScalingParams {
    pub fn new(delta: f64, s: usize, n: usize) -> Result<Self, JetError> {
        if 2 * s <= n {
            return Err(JetError::SigmaNotPositive { s, n });
        }
        if !(delta > 0.0 && delta <= 1.0) || !is_dyadic(delta) {
            return Err(JetError::BadDelta(delta));
        }
        let sigma = 1.0f64.min(s as f64 - n as f64 / 2.0);
        Ok(ScalingParams {
            delta,
            s,
            sigma,
            eps: delta.powf(sigma),
        })
    }
}

fn is_dyadic(delta: f64) -> bool {
    let mut d = delta;
    while d < 1.0 {
        d *= 2.0;
    }
    d == 1.0
}

// ---------------------------------------------------------------------------
// Coefficient models
// ---------------------------------------------------------------------------

/// Truncated Taylor scalar: coefficients of a power series in `t`.
#[derive(Debug, Clone)]
pub struct TaylorVal {
    pub c: Vec<f64>,
}

/// The arithmetic a coefficient model is written against, instantiated by
/// plain numbers (pointwise evaluation) and by [`TaylorVal`] (jet
/// evaluation).
pub trait Alg: Clone {
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn add_const(&self, k: f64) -> Self;
    fn constant_like(&self, k: f64) -> Self;
}

impl Alg for f64 {
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn add_const(&self, k: f64) -> Self {
        self + k
    }
    fn constant_like(&self, k: f64) -> Self {
        k
    }
}

impl Alg for TaylorVal {
    fn add(&self, o: &Self) -> Self {
        TaylorVal {
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }
    fn sub(&self, o: &Self) -> Self {
        TaylorVal {
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }
    fn mul(&self, o: &Self) -> Self {
        let len = self.c.len();
        let mut c = vec![0.0; len];
        for i in 0..len {
            if self.c[i] == 0.0 {
                continue;
            }
            for j in 0..len - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        TaylorVal { c }
    }
    fn scale(&self, k: f64) -> Self {
        TaylorVal {
            c: self.c.iter().map(|a| a * k).collect(),
        }
    }
    fn add_const(&self, k: f64) -> Self {
        let mut c = self.c.clone();
        c[0] += k;
        TaylorVal { c }
    }
    fn constant_like(&self, k: f64) -> Self {
        let mut c = vec![0.0; self.c.len()];
        c[0] = k;
        TaylorVal { c }
    }
}

/// Built-in coefficient triples `(A, F, H)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    /// `A = diag(-1, 1, ..., 1)`, `F = H = 0`.
    Flat,
    /// Flat principal part with a constant interior source `H = level`.
    ConstantSource { level: f64 },
    /// `A^{00} = -(1 + a U^2)`, `A^{ii} = 1 + a U^2`, `H = h_amp U^2`.
    Quasilinear { amplitude: f64, h_amplitude: f64 },
    /// Flat principal part with the focusing source `F = -c U^3` and the
    /// interior coupling `H = h_amp U`.
    CubicFocusing { strength: f64, h_amplitude: f64 },
    /// Fully quasi-linear variant: the principal part reads the spatial
    /// gradient, `A^{00} = -(1 + a |DU|^2)`, `A^{ii} = 1 + a |DU|^2`.
    GradientCoupled { amplitude: f64 },
}

/// Smooth coefficient triple with its ellipticity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientModel {
    pub kind: ModelKind,
    pub gamma: f64,
    pub kappa: f64,
}

impl CoefficientModel {
    pub fn new(kind: ModelKind) -> Self {
        let (gamma, kappa) = match kind {
            ModelKind::Flat | ModelKind::ConstantSource { .. } => (1.0, 1.0),
            ModelKind::Quasilinear { amplitude, .. } => (1.0 + 4.0 * amplitude.abs(), 1.0),
            ModelKind::CubicFocusing { .. } => (1.0, 1.0),
            ModelKind::GradientCoupled { amplitude } => (1.0 + 4.0 * amplitude.abs(), 1.0),
        };
        CoefficientModel { kind, gamma, kappa }
    }

    pub fn components(&self) -> usize {
        1
    }

    pub fn depends_on_gradient(&self) -> bool {
        matches!(self.kind, ModelKind::GradientCoupled { .. })
    }

    /// `A^{mu nu}(U)` entry. `du` holds the spacetime gradient
    /// `(d_t U, d_1 U, ..., d_n U)` and is only read by gradient-coupled
    /// kinds.
    pub fn a_entry<S: Alg>(&self, n: usize, mu: usize, nu: usize, u: &[S], du: &[S]) -> S {
        let constant = |k: f64| u[0].constant_like(k);
        let flat = |mu: usize, nu: usize| {
            if mu == nu {
                constant(if mu == 0 { -1.0 } else { 1.0 })
            } else {
                constant(0.0)
            }
        };
        match self.kind {
            ModelKind::Flat
            | ModelKind::ConstantSource { .. }
            | ModelKind::CubicFocusing { .. } => flat(mu, nu),
            ModelKind::Quasilinear { amplitude, .. } => {
                if mu != nu {
                    constant(0.0)
                } else {
                    let bump = u[0].mul(&u[0]).scale(amplitude);
                    if mu == 0 {
                        bump.scale(-1.0).add_const(-1.0)
                    } else {
                        bump.add_const(1.0)
                    }
                }
            }
            ModelKind::GradientCoupled { amplitude } => {
                if mu != nu {
                    constant(0.0)
                } else {
                    let mut grad2 = u[0].constant_like(0.0);
                    for i in 1..=n {
                        grad2 = grad2.add(&du[i].mul(&du[i]));
                    }
                    let bump = grad2.scale(amplitude);
                    if mu == 0 {
                        bump.scale(-1.0).add_const(-1.0)
                    } else {
                        bump.add_const(1.0)
                    }
                }
            }
        }
    }

    /// `F(U, dU)`; vanishes at the origin for every kind.
    pub fn f_val<S: Alg>(&self, u: &[S], _du: &[S]) -> S {
        match self.kind {
            ModelKind::CubicFocusing { strength, .. } => {
                u[0].mul(&u[0]).mul(&u[0]).scale(-strength)
            }
            _ => u[0].constant_like(0.0),
        }
    }

    /// `H(U, dU)`: the interior source multiplied by the indicator.
    pub fn h_val<S: Alg>(&self, u: &[S], _du: &[S]) -> S {
        match self.kind {
            ModelKind::ConstantSource { level } => u[0].constant_like(level),
            ModelKind::Quasilinear { h_amplitude, .. } => u[0].mul(&u[0]).scale(h_amplitude),
            ModelKind::CubicFocusing { h_amplitude, .. } => u[0].scale(h_amplitude),
            _ => u[0].constant_like(0.0),
        }
    }

    /// Spot-check the ellipticity constants on a sampled state:
    /// `(1/gamma)|xi|^2 <= A^{ij} xi_i xi_j <= gamma |xi|^2` for 20
    /// deterministic directions (with factor-2 slack for states outside the
    /// nominal range) and `A^{00} <= -kappa/2`.
    pub fn check_ellipticity(
        &self,
        u: &GridFunction,
        du: Option<&GridFunction>,
    ) -> Result<(), JetError> {
        let g = u.grid();
        let n = g.dim();
        let mut rng = crate::det::DetRng::new(0xE111);
        let dirs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..n).map(|_| rng.next_sym()).collect())
            .collect();
        let zero_du = vec![0.0; n + 1];
        for p in 0..g.num_points() {
            let uv = [u.value(p, 0)];
            let duv: Vec<f64> = match du {
                Some(d) => (0..=n).map(|k| d.value(p, k)).collect(),
                None => zero_du.clone(),
            };
            let a00: f64 = self.a_entry(n, 0, 0, &uv, &duv);
            if a00 > -self.kappa / 2.0 {
                return Err(JetError::EllipticityViolation {
                    min_abs: a00.abs(),
                    floor: self.kappa / 2.0,
                });
            }
            for xi in &dirs {
                let xi2: f64 = xi.iter().map(|v| v * v).sum();
                let mut q = 0.0;
                for i in 1..=n {
                    for j in 1..=n {
                        let aij: f64 = self.a_entry(n, i, j, &uv, &duv);
                        q += aij * xi[i - 1] * xi[j - 1];
                    }
                }
                if q < xi2 / (2.0 * self.gamma) || q > 2.0 * self.gamma * xi2 {
                    return Err(JetError::EllipticityViolation {
                        min_abs: q / xi2,
                        floor: 1.0 / (2.0 * self.gamma),
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Series-of-fields machinery
// ---------------------------------------------------------------------------

/// Coefficient `l` of the truncated product of two field series.
fn product_coeff(a: &[GridFunction], b: &[GridFunction], l: usize) -> GridFunction {
    let g = a[0].grid();
    let comps = a[0].components().max(b[0].components());
    let mut acc = GridFunction::zeros(g, comps);
    for j in 0..=l {
        if j < a.len() && l - j < b.len() {
            acc = acc.add(&a[j].mul(&b[l - j]));
        }
    }
    acc
}

/// Time-derivative series: coefficients `(j+1) a_{j+1}`.
fn series_dt(a: &[GridFunction]) -> Vec<GridFunction> {
    if a.len() <= 1 {
        return vec![GridFunction::zeros(a[0].grid(), a[0].components())];
    }
    a.iter()
        .enumerate()
        .skip(1)
        .map(|(j, f)| f.scale(j as f64))
        .collect()
}

fn series_diff(a: &[GridFunction], axis: usize) -> Vec<GridFunction> {
    a.iter().map(|f| diff1(f, axis, DiffMode::Torus)).collect()
}

fn series_diff2(a: &[GridFunction], i: usize, j: usize) -> Vec<GridFunction> {
    let n = a[0].grid().dim();
    let mut alpha = [0usize; 3];
    alpha[i] += 1;
    alpha[j] += 1;
    a.iter()
        .map(|f| derivative(f, &alpha[..n], DiffMode::Torus))
        .collect()
}

/// Divide jets by factorials (jet entries to series coefficients), padding
/// with zeros to `len`.
fn jets_to_series(jets: &[GridFunction], len: usize, g: TorusGrid, comps: usize) -> Vec<GridFunction> {
    let mut fact = 1.0;
    (0..len)
        .map(|j| {
            if j > 0 {
                fact *= j as f64;
            }
            if j < jets.len() {
                jets[j].scale(1.0 / fact)
            } else {
                GridFunction::zeros(g, comps)
            }
        })
        .collect()
}

enum CoeffSource<'a> {
    Model(&'a CoefficientModel),
    /// time jets of the `(n+1)^2`-component field `g^{mu nu}`
    Jets(&'a [GridFunction]),
}

enum SrcSource<'a> {
    /// sources come from the same model as the coefficients
    Model,
    Jets {
        f: &'a [GridFunction],
        h: &'a [GridFunction],
    },
}

struct SeriesPieces {
    /// `g[mu*(n+1)+nu]` as coefficient series
    g: Vec<Vec<GridFunction>>,
    f: Vec<GridFunction>,
    h: Vec<GridFunction>,
}

/// Build coefficient and source series of length `len` along the solution
/// series `a`.
fn build_pieces(
    a: &[GridFunction],
    coeffs: &CoeffSource,
    sources: &SrcSource,
    len: usize,
    needs_gradient: bool,
) -> SeriesPieces {
    let g = a[0].grid();
    let n = g.dim();
    let dim1 = n + 1;

    let model = match coeffs {
        CoeffSource::Jets(gj) => {
            let all = jets_to_series(gj, len, g, dim1 * dim1);
            let g_series = (0..dim1 * dim1)
                .map(|c| all.iter().map(|fld| fld.extract_component(c)).collect())
                .collect();
            let (f, h) = match sources {
                SrcSource::Jets { f, h } => {
                    (jets_to_series(f, len, g, 1), jets_to_series(h, len, g, 1))
                }
                SrcSource::Model => unreachable!("jet coefficients pair with jet sources"),
            };
            return SeriesPieces { g: g_series, f, h };
        }
        CoeffSource::Model(m) => m,
    };

    // spatial/time gradient series, only when the model reads it
    let grad: Vec<Vec<GridFunction>> = if needs_gradient {
        let mut v = vec![series_dt(a)];
        for axis in 0..n {
            v.push(series_diff(a, axis));
        }
        v
    } else {
        Vec::new()
    };

    let mut g_out: Vec<Vec<GridFunction>> = vec![vec![GridFunction::zeros(g, 1); len]; dim1 * dim1];
    let mut f_out = vec![GridFunction::zeros(g, 1); len];
    let mut h_out = vec![GridFunction::zeros(g, 1); len];
    for p in 0..g.num_points() {
        let u_series = TaylorVal {
            c: (0..len)
                .map(|j| if j < a.len() { a[j].value(p, 0) } else { 0.0 })
                .collect(),
        };
        let du_series: Vec<TaylorVal> = if needs_gradient {
            (0..=n)
                .map(|k| TaylorVal {
                    c: (0..len)
                        .map(|j| grad[k].get(j).map(|fld| fld.value(p, 0)).unwrap_or(0.0))
                        .collect(),
                })
                .collect()
        } else {
            vec![u_series.constant_like(0.0); n + 1]
        };
        let uv = [u_series];
        for mu in 0..dim1 {
            for nu in 0..dim1 {
                let val = model.a_entry(n, mu, nu, &uv, &du_series);
                for j in 0..len {
                    g_out[mu * dim1 + nu][j].set(p, 0, val.c[j]);
                }
            }
        }
        let fv = model.f_val(&uv, &du_series);
        let hv = model.h_val(&uv, &du_series);
        for j in 0..len {
            f_out[j].set(p, 0, fv.c[j]);
            h_out[j].set(p, 0, hv.c[j]);
        }
    }
    SeriesPieces {
        g: g_out,
        f: f_out,
        h: h_out,
    }
}

/// Coefficient `l` of the right-hand series
/// `-2 g^{0i} d_i u' - g^{ij} d_i d_j u - (d_mu g^{mu nu}) d_nu u
///  + psi u + f + chi h + mu`.
fn rhs_coeff(
    l: usize,
    pieces: &SeriesPieces,
    a: &[GridFunction],
    psi: Option<&GridFunction>,
    chi: &GridFunction,
    mu: Option<&[GridFunction]>,
) -> GridFunction {
    let grid_ = a[0].grid();
    let n = grid_.dim();
    let dim1 = n + 1;
    let gidx = |mu: usize, nu: usize| &pieces.g[mu * dim1 + nu];
    let a_dt = series_dt(a);
    let mut acc = GridFunction::zeros(grid_, a[0].components());

    // -2 g^{0i} d_i (du/dt)
    for i in 0..n {
        let di_dt = series_diff(&a_dt, i);
        acc = acc.axpy(-2.0, &product_coeff(gidx(0, i + 1), &di_dt, l));
    }
    // - g^{ij} d_i d_j u
    for i in 0..n {
        for j in 0..n {
            let dij = series_diff2(a, i, j);
            acc = acc.axpy(-1.0, &product_coeff(gidx(i + 1, j + 1), &dij, l));
        }
    }
    // -(d_t g^{0 nu} + d_i g^{i nu}) d_nu u
    for nu in 0..dim1 {
        let mut div = series_dt(gidx(0, nu));
        for i in 0..n {
            let d = series_diff(gidx(i + 1, nu), i);
            for (j, src) in d.iter().enumerate() {
                if j < div.len() {
                    div[j] = div[j].add(src);
                } else {
                    div.push(src.clone());
                }
            }
        }
        let dnu_u: Vec<GridFunction> = if nu == 0 {
            a_dt.clone()
        } else {
            series_diff(a, nu - 1)
        };
        acc = acc.axpy(-1.0, &product_coeff(&div, &dnu_u, l));
    }
    // + psi u
    if let Some(psi) = psi {
        acc = acc.add(&psi.mul(&a[l]));
    }
    // + f + chi h
    acc = acc.add(&pieces.f[l]);
    acc = acc.add(&chi.mul(&pieces.h[l]));
    // + mu (given as jet entries)
    if let Some(mu) = mu {
        if l < mu.len() {
            let mut fact = 1.0;
            for j in 1..=l {
                fact *= j as f64;
            }
            acc = acc.add(&mu[l].scale(1.0 / fact));
        }
    }
    acc
}

/// Forward recursion for the jet entries `u_2 .. u_order`.
#[allow(clippy::too_many_arguments)]
fn jet_recursion(
    data0: &GridFunction,
    data1: &GridFunction,
    coeffs: CoeffSource,
    sources: SrcSource,
    psi: Option<&GridFunction>,
    mu: Option<&[GridFunction]>,
    order: usize,
    kappa: f64,
) -> Result<Jet, JetError> {
    let g = data0.grid();
    let chi = grid::indicator(g);
    let needs_gradient = matches!(&coeffs, CoeffSource::Model(m) if m.depends_on_gradient());
    let mut a: Vec<GridFunction> = vec![data0.clone(), data1.clone()];
    let mut w: Vec<GridFunction> = Vec::new();
    for l in 0..order.saturating_sub(1) {
        let len = l + 2;
        let pieces = build_pieces(&a, &coeffs, &sources, len, needs_gradient);
        let g00 = &pieces.g[0];
        let floor = kappa / 2.0;
        let min_abs = g00[0].data().iter().fold(f64::MAX, |m, &v| m.min(v.abs()));
        if min_abs < floor {
            return Err(JetError::EllipticityViolation { min_abs, floor });
        }
        let p_l = rhs_coeff(l, &pieces, &a, psi, &chi, mu);
        // (g00 * w)_l = p_l, solved for w_l = (l+1)(l+2) a_{l+2}
        let mut rhs = p_l;
        for j in 0..l {
            rhs = rhs.axpy(-1.0, &g00[l - j].mul(&w[j]));
        }
        let mut w_l = rhs;
        for p in 0..g.num_points() {
            let d = g00[0].value(p, 0);
            for c in 0..w_l.components() {
                let v = w_l.value(p, c) / d;
                w_l.set(p, c, v);
            }
        }
        let denom = ((l + 1) * (l + 2)) as f64;
        a.push(w_l.scale(1.0 / denom));
        w.push(w_l);
    }
    // entries u_j = j! a_j
    let mut fact = 1.0;
    let entries = a
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if j > 0 {
                fact *= j as f64;
            }
            f.scale(fact)
        })
        .collect();
    Ok(Jet::new(entries))
}

/// Compatibility jets of a quasi-linear model: the entries `u_2 .. u_order`
/// read off the series expansion of the evolution equation.
pub fn compat_jets(
    data0: &GridFunction,
    data1: &GridFunction,
    model: &CoefficientModel,
    order: usize,
) -> Result<Jet, JetError> {
    jet_recursion(
        data0,
        data1,
        CoeffSource::Model(model),
        SrcSource::Model,
        None,
        None,
        order,
        model.kappa,
    )
}

/// Compatibility jets of a linear problem with explicit coefficient and
/// source jets (optionally damped and mu-corrected).
#[allow(clippy::too_many_arguments)]
pub fn linear_jets(
    data0: &GridFunction,
    data1: &GridFunction,
    g_jets: &[GridFunction],
    f_jets: &[GridFunction],
    h_jets: &[GridFunction],
    psi: Option<&GridFunction>,
    mu: Option<&[GridFunction]>,
    order: usize,
    kappa: f64,
) -> Result<Jet, JetError> {
    jet_recursion(
        data0,
        data1,
        CoeffSource::Jets(g_jets),
        SrcSource::Jets {
            f: f_jets,
            h: h_jets,
        },
        psi,
        mu,
        order,
        kappa,
    )
}

/// `r!` times the series-coefficient-`r` defect of
/// `d_mu(g d_nu u) - psi u - f - chi h` on the given jets.
///
/// The correction sources are differences of two such calls, which makes
/// their vanishing on the inner box exact in floating point, not merely
/// small: both calls run the identical code path on bitwise-equal inputs
/// there.
fn equation_residual(
    r: usize,
    u: &Jet,
    g_jets: &[GridFunction],
    f_jets: &[GridFunction],
    h_jets: &[GridFunction],
    psi: &GridFunction,
    chi: &GridFunction,
) -> GridFunction {
    let g = u.grid();
    let a = jets_to_series(u.entries(), u.entries().len(), g, u.entry(0).components());
    let pieces = build_pieces(
        &a,
        &CoeffSource::Jets(g_jets),
        &SrcSource::Jets {
            f: f_jets,
            h: h_jets,
        },
        r + 1,
        false,
    );
    let w: Vec<GridFunction> = (0..=r)
        .map(|j| a[j + 2].scale(((j + 1) * (j + 2)) as f64))
        .collect();
    let lhs = product_coeff(&pieces.g[0], &w, r);
    let p_r = rhs_coeff(r, &pieces, &a, Some(psi), chi, None);
    let mut fact_r = 1.0;
    for j in 1..=r {
        fact_r *= j as f64;
    }
    lhs.sub(&p_r).scale(fact_r)
}

/// Correction sources `mu_0 .. mu_{s-1}` with the measured localization
/// width: the largest dyadic `eta` such that every `mu_l` vanishes
/// identically (exact zeros) on `Q_eta`.
pub struct MuSources {
    pub mu: Vec<GridFunction>,
    pub eta0: f64,
}

/// Everything the correction-source assembly needs from the projection.
pub struct ProjectionPieces<'a> {
    pub eps: f64,
    /// raw rescaled coefficient jets `b^{mu nu}` ((n+1)^2 components)
    pub b_jets: &'a [GridFunction],
    pub f_jets: &'a [GridFunction],
    pub h_jets: &'a [GridFunction],
    pub phi1: &'a GridFunction,
    pub psi: &'a GridFunction,
}

/// Minkowski plus scaled coefficient jets: `g = m + eps * b`.
pub fn coeff_jets_from_b(grid_: TorusGrid, eps: f64, b_jets: &[GridFunction]) -> Vec<GridFunction> {
    let dim1 = grid_.dim() + 1;
    b_jets
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let mut out = b.scale(eps);
            if j == 0 {
                for p in 0..grid_.num_points() {
                    for mu in 0..dim1 {
                        let c = mu * dim1 + mu;
                        let m = if mu == 0 { -1.0 } else { 1.0 };
                        let v = out.value(p, c) + m;
                        out.set(p, c, v);
                    }
                }
            }
            out
        })
        .collect()
}

pub fn mu_sources(
    projected: &Jet,
    raw: &Jet,
    pieces: &ProjectionPieces,
    s: usize,
) -> Result<MuSources, JetError> {
    let g = raw.grid();
    let need = s + 2;
    if raw.entries().len() < need || projected.entries().len() < need {
        return Err(JetError::JetTooShort {
            len: raw.entries().len().min(projected.entries().len()),
            need,
        });
    }
    for l in 0..=1 {
        let expect = pieces.phi1.mul(raw.entry(l));
        if expect.sub(projected.entry(l)).linf() > 1e-12 * (1.0 + raw.entry(l).linf()) {
            return Err(JetError::InconsistentProjection { entry: l });
        }
    }
    let chi = grid::indicator(g);
    let mul_phi =
        |jets: &[GridFunction]| -> Vec<GridFunction> { jets.iter().map(|f| pieces.phi1.mul(f)).collect() };
    let phib = mul_phi(pieces.b_jets);
    let g_proj = coeff_jets_from_b(g, pieces.eps, &phib);
    let g_raw = coeff_jets_from_b(g, pieces.eps, pieces.b_jets);
    let f_proj = mul_phi(pieces.f_jets);
    let h_proj = mul_phi(pieces.h_jets);
    let psi_zero = GridFunction::zeros(g, 1);

    let mut mu = Vec::with_capacity(s);
    for r in 0..s {
        let defect = equation_residual(r, projected, &g_proj, &f_proj, &h_proj, pieces.psi, &chi);
        let baseline = equation_residual(
            r,
            raw,
            &g_raw,
            pieces.f_jets,
            pieces.h_jets,
            &psi_zero,
            &chi,
        );
        mu.push(defect.sub(&baseline));
    }

    // largest dyadic box on which every mu_l is exactly zero
    let h = g.spacing();
    let mut eta0 = 0.0;
    let mut eta = 0.25;
    while eta >= 2.0 * h {
        let mut all_zero = true;
        'outer: for m in &mu {
            for p in 0..g.num_points() {
                let x = g.point(p);
                if (0..g.dim()).all(|ax| x[ax].abs() <= eta + 1e-14) && m.value(p, 0) != 0.0 {
                    all_zero = false;
                    break 'outer;
                }
            }
        }
        if all_zero {
            eta0 = eta;
            break;
        }
        eta /= 2.0;
    }
    if eta0 == 0.0 {
        return Err(JetError::LocalizationFailure);
    }
    Ok(MuSources { mu, eta0 })
}

// ---------------------------------------------------------------------------
// Rescaling and projection
// ---------------------------------------------------------------------------

/// Window resample realizing the dilation `x -> delta x` for dyadic `delta`:
/// output resolution `N delta` over the same box, values read at stride one
/// from the central window of the input.
pub fn dilate(f: &GridFunction, delta: f64) -> Result<GridFunction, JetError> {
    let g = f.grid();
    if !(delta > 0.0 && delta <= 1.0 && is_dyadic(delta)) {
        return Err(JetError::BadDelta(delta));
    }
    let res = g.resolution();
    let m = (res as f64 * delta).round() as usize;
    if m < 8 || (res - m) % 2 != 0 {
        return Err(JetError::BadDelta(delta));
    }
    let out_grid = TorusGrid::new(g.dim(), m)?;
    let off = (res - m) / 2;
    let comps = f.components();
    let mut out = GridFunction::zeros(out_grid, comps);
    for p in 0..out_grid.num_points() {
        let d = out_grid.digits(p);
        let mut src = [0usize; 3];
        for ax in 0..g.dim() {
            src[ax] = off + d[ax];
        }
        let q = g.index(&src[..g.dim()]);
        for c in 0..comps {
            out.set(p, c, f.value(q, c));
        }
    }
    Ok(out)
}

/// The barred problem on `Q_1`: solution, coefficient and source jets at
/// `t = 0`.
#[derive(Debug, Clone)]
pub struct ProblemFields {
    pub u_jets: Vec<GridFunction>,
    /// `(n+1)^2` components per jet
    pub a_jets: Vec<GridFunction>,
    pub f_jets: Vec<GridFunction>,
    pub h_jets: Vec<GridFunction>,
}

/// The rescaled problem: `g = m + eps b` with unit-box fields.
#[derive(Debug, Clone)]
pub struct RescaledProblem {
    pub params: ScalingParams,
    pub u_jets: Vec<GridFunction>,
    /// values `m^{mu nu}` extracted at the origin
    pub m_vals: Vec<f64>,
    pub b_jets: Vec<GridFunction>,
    pub f_jets: Vec<GridFunction>,
    pub h_jets: Vec<GridFunction>,
}

/// Apply the field rescalings `u = (U(dx) - U(0))/d`, `b = (A(dx) - m)/d^s`,
/// `f = d F(dx)`, `h = d H(dx)`; time jets pick up one power of `delta` per
/// time derivative.
pub fn rescale(fields: &ProblemFields, params: &ScalingParams) -> Result<RescaledProblem, JetError> {
    let delta = params.delta;
    let g = fields.u_jets[0].grid();
    let dim1 = g.dim() + 1;
    let center = g.nearest_index(&[0.0; 3][..g.dim()]);

    let origin_val = fields.u_jets[0].value(center, 0);
    let mut u_jets = Vec::with_capacity(fields.u_jets.len());
    for (l, uj) in fields.u_jets.iter().enumerate() {
        let d = dilate(uj, delta)?;
        let scaled = if l == 0 {
            d.map(|v| (v - origin_val) / delta)
        } else {
            d.scale(delta.powi(l as i32 - 1))
        };
        u_jets.push(scaled);
    }

    let m_vals: Vec<f64> = (0..dim1 * dim1)
        .map(|c| fields.a_jets[0].value(center, c))
        .collect();
    let mut b_jets = Vec::with_capacity(fields.a_jets.len());
    for (l, aj) in fields.a_jets.iter().enumerate() {
        let d = dilate(aj, delta)?;
        let b = if l == 0 {
            let mut out = d.clone();
            let w = delta.powf(params.sigma);
            for p in 0..out.grid().num_points() {
                for c in 0..dim1 * dim1 {
                    let v = (d.value(p, c) - m_vals[c]) / w;
                    out.set(p, c, v);
                }
            }
            out
        } else {
            d.scale(delta.powf(l as f64 - params.sigma))
        };
        b_jets.push(b);
    }

    let scale_source = |jets: &[GridFunction]| -> Result<Vec<GridFunction>, JetError> {
        jets.iter()
            .enumerate()
            .map(|(l, fj)| Ok(dilate(fj, delta)?.scale(delta.powi(1 + l as i32))))
            .collect()
    };

    Ok(RescaledProblem {
        params: *params,
        u_jets,
        m_vals,
        b_jets,
        f_jets: scale_source(&fields.f_jets)?,
        h_jets: scale_source(&fields.h_jets)?,
    })
}

/// Field role in the scaling estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingRole {
    /// `f_delta = (f(dx) - f(0))/d^sigma`, compared in `H^{2,s}`.
    FSigma,
    /// `g_delta = g(dx)`, compared in `H^{0,s-l}` with weight `d^l`.
    GEll,
    /// `h_delta = h(dx)`, compared in `H^{m_{s-l}, s-l}` with weight `d^l`.
    HEll,
}

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub delta: f64,
    /// ratio on the full box `Q_1` (intersection norms)
    pub ratio_box: f64,
    /// ratio on the half box `Q_1^+`
    pub ratio_plus: f64,
}

/// Measured left/right ratios of the rescaling inequalities for dyadic
/// `delta in {1, 1/2, 1/4}`.
pub fn scaling_check(
    f: &GridFunction,
    role: ScalingRole,
    params: &ScalingParams,
    l: usize,
) -> Result<Vec<ScalingRow>, JetError> {
    use crate::norms::{intersect_norm_box, m_weight, sobolev_norm, NormRegion};
    let s = params.s;
    assert!(l <= s);
    let (k_ord, s_ord, weight_pow) = match role {
        ScalingRole::FSigma => (2usize.min(s), s, 0.0),
        ScalingRole::GEll => (0, s - l, l as f64),
        ScalingRole::HEll => (m_weight(s - l), s - l, l as f64),
    };
    let g0 = f.grid();
    let f0 = f.value(g0.nearest_index(&[0.0; 3][..g0.dim()]), 0);
    let denom_box = intersect_norm_box(f, k_ord.min(s_ord), s_ord)?.value;
    let denom_plus = sobolev_norm(f, s_ord, NormRegion::BoxPlus)?.value;
    let mut rows = Vec::new();
    for delta in [1.0, 0.5, 0.25] {
        let d = dilate(f, delta)?;
        let scaled = match role {
            ScalingRole::FSigma => d.map(|v| (v - f0) / delta.powf(params.sigma)),
            _ => d,
        };
        let num_box = intersect_norm_box(&scaled, k_ord.min(s_ord), s_ord)?.value;
        let num_plus = sobolev_norm(&scaled, s_ord, NormRegion::BoxPlus)?.value;
        let w = delta.powf(weight_pow);
        rows.push(ScalingRow {
            delta,
            ratio_box: w * num_box / denom_box.max(1e-300),
            ratio_plus: w * num_plus / denom_plus.max(1e-300),
        });
    }
    Ok(rows)
}

/// The projected problem packaged for the hyperbolic solver.
#[derive(Debug, Clone)]
pub struct ProjectedProblem {
    /// `m + eps phi_1 b` jets, `(n+1)^2` components
    pub g_jets: Vec<GridFunction>,
    /// projected data `(phi_1 u_0, phi_1 u_1)`
    pub data: (GridFunction, GridFunction),
    /// full projected jets `phi_1 u_l`, the startup stack
    pub jets: Jet,
    pub f_jets: Vec<GridFunction>,
    pub h_jets: Vec<GridFunction>,
    pub mu: Vec<GridFunction>,
    pub eta0: f64,
    pub psi: GridFunction,
}

/// Project the rescaled interface problem to the torus: cutoff coefficients
/// and data, damped zero-order term, correction sources.
pub fn project_to_torus(
    problem: &RescaledProblem,
    phi1: &GridFunction,
    psi: &GridFunction,
    s: usize,
) -> Result<ProjectedProblem, JetError> {
    let g = problem.u_jets[0].grid();
    let g_raw = coeff_jets_from_b(g, problem.params.eps, &problem.b_jets);
    let raw = linear_jets(
        &problem.u_jets[0],
        &problem.u_jets[1],
        &g_raw,
        &problem.f_jets,
        &problem.h_jets,
        None,
        None,
        s + 1,
        1.0,
    )?;
    let projected = Jet::new(raw.entries().iter().map(|u| phi1.mul(u)).collect());
    let pieces = ProjectionPieces {
        eps: problem.params.eps,
        b_jets: &problem.b_jets,
        f_jets: &problem.f_jets,
        h_jets: &problem.h_jets,
        phi1,
        psi,
    };
    let mus = mu_sources(&projected, &raw, &pieces, s)?;
    let phib: Vec<GridFunction> = problem.b_jets.iter().map(|b| phi1.mul(b)).collect();
    Ok(ProjectedProblem {
        g_jets: coeff_jets_from_b(g, problem.params.eps, &phib),
        data: (projected.entry(0).clone(), projected.entry(1).clone()),
        jets: projected,
        f_jets: problem.f_jets.iter().map(|f| phi1.mul(f)).collect(),
        h_jets: problem.h_jets.iter().map(|h| phi1.mul(h)).collect(),
        mu: mus.mu,
        eta0: mus.eta0,
        psi: psi.clone(),
    })
}

/// Measured left/right ratio of the correction-source bound: the worst
/// `|mu_l|` in `H^{0, s-1-l}` against the right-hand aggregate built from
/// the coefficient, data-energy and source norms.
pub fn mu_norm_ratio(
    mus: &MuSources,
    problem: &RescaledProblem,
    projected: &Jet,
    s: usize,
) -> Result<f64, JetError> {
    use crate::norms::intersect_norm;
    let mut lhs: f64 = 0.0;
    for (l, m) in mus.mu.iter().enumerate() {
        let v = intersect_norm(m, 0, (s - 1).saturating_sub(l))?.value;
        lhs = lhs.max(v);
    }
    let top = s.min(projected.order());
    let e_s1 = energy_norm(&projected.entries()[..=top], NormSpec::EnergyS { s: top })?.value;
    let b0 = intersect_norm(&problem.b_jets[0], 0, s)?.value;
    let f0 = intersect_norm(&problem.f_jets[0], 0, s - 1)?.value;
    let h0 = intersect_norm(&problem.h_jets[0], 0, s - 1)?.value;
    let rhs = (1.0 + problem.params.eps * b0) * e_s1 + f0 + h0;
    Ok(lhs / rhs.max(1e-300))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{bump_psi, cutoff_phi, laplacian, make_grid};
    use std::f64::consts::PI;

    #[test]
    fn scaling_params_validation() {
        let p = ScalingParams::new(0.25, 2, 1).unwrap();
        assert_eq!(p.sigma, 1.0);
        assert_eq!(p.eps, 0.25);
        let p = ScalingParams::new(0.5, 1, 1).unwrap();
        assert!((p.sigma - 0.5).abs() < 1e-15);
        assert!((p.eps - 0.5f64.powf(0.5)).abs() < 1e-15);
        assert!(ScalingParams::new(0.5, 1, 2).is_err());
        assert!(ScalingParams::new(0.3, 2, 1).is_err());
    }

    #[test]
    fn zero_data_zero_sources_gives_zero_jets() {
        let g = make_grid(1, 32).unwrap();
        let zero = GridFunction::zeros(g, 1);
        let model = CoefficientModel::new(ModelKind::Quasilinear {
            amplitude: 0.3,
            h_amplitude: 0.5,
        });
        let jet = compat_jets(&zero, &zero, &model, 4).unwrap();
        for e in jet.entries() {
            assert_eq!(e.linf(), 0.0);
        }
    }

    /// Flat model, trigonometric data: the recursion reduces to the hand
    /// recursion `u_{l+2} = Lap_h u_l` with the discrete symbol.
    #[test]
    fn flat_model_matches_laplacian_recursion() {
        let g = make_grid(1, 64).unwrap();
        let data0 = GridFunction::sample(g, |x| (2.0 * PI * x[0]).sin());
        let data1 = GridFunction::zeros(g, 1);
        let model = CoefficientModel::new(ModelKind::Flat);
        let jet = compat_jets(&data0, &data1, &model, 4).unwrap();

        let mut expect = vec![data0.clone(), data1.clone()];
        for l in 0..3 {
            expect.push(laplacian(&expect[l], DiffMode::Torus));
        }
        for (l, (got, want)) in jet.entries().iter().zip(&expect).enumerate() {
            let scale = want.linf().max(1.0);
            assert!(
                got.sub(want).linf() <= 1e-12 * scale,
                "entry {l} deviates from the hand recursion"
            );
        }
        assert_eq!(jet.entry(1).linf(), 0.0);
        assert_eq!(jet.entry(3).linf(), 0.0);
    }

    /// Constant interior source: `u_2` jumps across the interface by exactly
    /// `H / A^{00}`.
    #[test]
    fn interior_source_jump_in_second_entry() {
        let g = make_grid(1, 64).unwrap();
        let zero = GridFunction::zeros(g, 1);
        let level = 0.7;
        let model = CoefficientModel::new(ModelKind::ConstantSource { level });
        let jet = compat_jets(&zero, &zero, &model, 2).unwrap();
        let half = g.resolution() / 2;
        let above = g.index(&[half + 1]);
        let below = g.index(&[half - 1]);
        let jump = jet.entry(2).value(above, 0) - jet.entry(2).value(below, 0);
        // A^{00} = -1: the Omega side carries -level
        assert_eq!(jump, -level);
        assert_eq!(jet.entry(2).value(below, 0), 0.0);
    }

    /// Truncated-Taylor composition of a polynomial coefficient matches the
    /// symbolic expansion up to order 4.
    #[test]
    fn taylor_composition_matches_symbolic_derivatives() {
        let amplitude = 0.3;
        let model = CoefficientModel::new(ModelKind::Quasilinear {
            amplitude,
            h_amplitude: 0.0,
        });
        // u(t) = 1 + 2t - t^2/2 + t^3/3 + t^4/4 (series coefficients)
        let u = TaylorVal {
            c: vec![1.0, 2.0, -0.5, 1.0 / 3.0, 0.25],
        };
        let du = vec![u.constant_like(0.0); 2];
        let a00 = model.a_entry(1, 0, 0, &[u.clone()], &du);
        // series of u^2 by hand
        let u2 = [
            1.0,
            4.0,
            3.0,
            2.0 / 3.0 - 2.0,
            0.5 + 4.0 / 3.0 + 0.25,
        ];
        for (j, &coef) in u2.iter().enumerate() {
            let want = if j == 0 {
                -1.0 - amplitude * coef
            } else {
                -amplitude * coef
            };
            assert!(
                (a00.c[j] - want).abs() < 1e-12,
                "order {j}: {} vs {want}",
                a00.c[j]
            );
        }
    }

    #[test]
    fn ellipticity_violation_detected() {
        let g = make_grid(1, 32).unwrap();
        // negative amplitude drives A^{00} toward zero on order-one data
        let model = CoefficientModel {
            kind: ModelKind::Quasilinear {
                amplitude: -0.9,
                h_amplitude: 0.0,
            },
            gamma: 2.0,
            kappa: 1.0,
        };
        let data0 = GridFunction::constant(g, 1, 1.0);
        let data1 = GridFunction::zeros(g, 1);
        let err = compat_jets(&data0, &data1, &model, 3).unwrap_err();
        assert!(matches!(err, JetError::EllipticityViolation { .. }));
        assert!(model.check_ellipticity(&data0, None).is_err());

        let good = CoefficientModel::new(ModelKind::Quasilinear {
            amplitude: 0.2,
            h_amplitude: 0.0,
        });
        assert!(good.check_ellipticity(&data0, None).is_ok());
    }

    #[test]
    fn gradient_coupled_model_supported() {
        let g = make_grid(1, 32).unwrap();
        let data0 = GridFunction::sample(g, |x| 0.1 * (2.0 * PI * x[0]).sin());
        let data1 = GridFunction::zeros(g, 1);
        let model = CoefficientModel::new(ModelKind::GradientCoupled { amplitude: 0.1 });
        let jet = compat_jets(&data0, &data1, &model, 3).unwrap();
        assert!(jet.entry(2).linf() > 0.0);
        assert!(!jet.entry(2).has_non_finite());
    }

    fn standard_setup(res: usize, s: usize) -> (TorusGrid, RescaledProblem) {
        let g = make_grid(1, res).unwrap();
        let dim1 = g.dim() + 1;
        let params = ScalingParams::new(0.5, s, 1).unwrap();
        let b0 = GridFunction::sample_vector(g, dim1 * dim1, |x, out| {
            let m = 0.4 * (PI * x[0]).cos();
            out[0] = -m;
            out[1] = 0.0;
            out[2] = 0.0;
            out[3] = m;
        });
        let b1 = b0.scale(0.25);
        let f0 = GridFunction::sample(g, |x| 0.3 * (2.0 * PI * x[0]).cos());
        // interior source vanishing to second order at the planes: keeps the
        // data compatible, so the high jet entries stay bounded
        let h0 = GridFunction::sample(g, |x| 0.5 * (PI * x[0]).sin().powi(2));
        let u0 = GridFunction::sample(g, |x| (PI * x[0]).sin());
        let u1 = GridFunction::sample(g, |x| 0.3 * (2.0 * PI * x[0]).cos());
        (
            g,
            RescaledProblem {
                params,
                u_jets: vec![u0, u1],
                m_vals: vec![-1.0, 0.0, 0.0, 1.0],
                b_jets: vec![
                    b0,
                    b1.clone(),
                    b1.scale(0.5),
                    b1.scale(0.25),
                    b1.scale(0.125),
                ],
                f_jets: vec![f0.clone(), f0.scale(0.5), f0.scale(0.25), f0.scale(0.125)],
                h_jets: vec![h0.clone(), h0.scale(0.5), h0.scale(0.25), h0.scale(0.125)],
            },
        )
    }

    /// Trivial cutoffs reproduce the raw problem: every correction source is
    /// identically zero on the whole torus.
    #[test]
    fn mu_vanishes_for_trivial_cutoffs() {
        let s = 3;
        let (g, problem) = standard_setup(64, s);
        let phi1 = GridFunction::constant(g, 1, 1.0);
        let psi = GridFunction::zeros(g, 1);
        let g_raw = coeff_jets_from_b(g, problem.params.eps, &problem.b_jets);
        let raw = linear_jets(
            &problem.u_jets[0],
            &problem.u_jets[1],
            &g_raw,
            &problem.f_jets,
            &problem.h_jets,
            None,
            None,
            s + 1,
            1.0,
        )
        .unwrap();
        let projected = Jet::new(raw.entries().iter().map(|u| phi1.mul(u)).collect());
        let pieces = ProjectionPieces {
            eps: problem.params.eps,
            b_jets: &problem.b_jets,
            f_jets: &problem.f_jets,
            h_jets: &problem.h_jets,
            phi1: &phi1,
            psi: &psi,
        };
        let mus = mu_sources(&projected, &raw, &pieces, s)
            .map(|m| m.mu)
            .unwrap_or_else(|e| match e {
                // trivial cutoffs localize everywhere; the detector reports
                // the largest box, so reaching here means zeros all over
                _ => panic!("unexpected {e}"),
            });
        for m in &mus {
            assert_eq!(m.linf(), 0.0, "trivial projection must leave no defect");
        }
    }

    /// Standard cutoffs: correction sources vanish exactly on a measured box
    /// of half-width at least 4h.
    #[test]
    fn mu_localization_on_standard_cutoffs() {
        let s = 3;
        let (g, problem) = standard_setup(64, s);
        let phi1 = cutoff_phi(g, 1.0).unwrap();
        let psi = bump_psi(g, &[0.55], &[-0.55], 0.08).unwrap();
        let proj = project_to_torus(&problem, &phi1, &psi, s).unwrap();
        let h = g.spacing();
        assert!(
            proj.eta0 >= 4.0 * h,
            "eta0 = {} below 4h = {}",
            proj.eta0,
            4.0 * h
        );
        assert_eq!(proj.mu.len(), s);
        assert!(proj.mu.iter().any(|m| m.linf() > 0.0));
    }

    /// The correction-source bound ratio is grid-stable under doubling.
    ///
    /// Measured at N in {64, 128}: both sides of the bound are dominated by
    /// high derivatives of the frozen exp-ramp cutoff, which the grid only
    /// resolves from N = 64 up (the profile converges, but slowly near its
    /// flat edge).
    #[test]
    fn mu_norm_ratio_grid_stable() {
        let s = 3;
        let measure = |res: usize| -> f64 {
            let (g, problem) = standard_setup(res, s);
            let phi1 = cutoff_phi(g, 1.0).unwrap();
            let psi = bump_psi(g, &[0.55], &[-0.55], 0.08).unwrap();
            let g_raw = coeff_jets_from_b(g, problem.params.eps, &problem.b_jets);
            let raw = linear_jets(
                &problem.u_jets[0],
                &problem.u_jets[1],
                &g_raw,
                &problem.f_jets,
                &problem.h_jets,
                None,
                None,
                s + 1,
                1.0,
            )
            .unwrap();
            let projected = Jet::new(raw.entries().iter().map(|u| phi1.mul(u)).collect());
            let pieces = ProjectionPieces {
                eps: problem.params.eps,
                b_jets: &problem.b_jets,
                f_jets: &problem.f_jets,
                h_jets: &problem.h_jets,
                phi1: &phi1,
                psi: &psi,
            };
            let mus = mu_sources(&projected, &raw, &pieces, s).unwrap();
            mu_norm_ratio(&mus, &problem, &projected, s).unwrap()
        };
        let (r64, r128) = (measure(64), measure(128));
        let drift = r128 / r64;
        assert!(
            (0.5..=2.0).contains(&drift),
            "mu bound ratio unstable: {r64} vs {r128}"
        );
    }

    #[test]
    fn dilate_identity_and_composition() {
        let g = make_grid(1, 64).unwrap();
        let f = GridFunction::sample(g, |x| (PI * x[0]).sin() + 0.2 * x[0]);
        let id = dilate(&f, 1.0).unwrap();
        assert_eq!(id, f);

        let two_step = dilate(&dilate(&f, 0.5).unwrap(), 0.5).unwrap();
        let direct = dilate(&f, 0.25).unwrap();
        assert_eq!(two_step, direct);

        assert!(matches!(dilate(&f, 0.3), Err(JetError::BadDelta(_))));
        assert!(matches!(dilate(&f, 1.0 / 16.0), Err(JetError::BadDelta(_))));
    }

    #[test]
    fn rescale_constant_coefficient_gives_zero_b() {
        let (g, problem) = standard_setup(64, 2);
        let dim1 = g.dim() + 1;
        let fields = ProblemFields {
            u_jets: problem.u_jets.clone(),
            a_jets: vec![GridFunction::sample_vector(g, dim1 * dim1, |_, out| {
                out[0] = -1.0;
                out[1] = 0.0;
                out[2] = 0.0;
                out[3] = 1.0;
            })],
            f_jets: problem.f_jets.clone(),
            h_jets: problem.h_jets.clone(),
        };
        for delta in [1.0, 0.5, 0.25] {
            let params = ScalingParams::new(delta, 2, 1).unwrap();
            let scaled = rescale(&fields, &params).unwrap();
            assert_eq!(scaled.b_jets[0].linf(), 0.0);
            assert_eq!(scaled.m_vals, vec![-1.0, 0.0, 0.0, 1.0]);
        }
    }

    /// Exact composition of the dilation for the field part (the sigma = 1
    /// weights are powers of two, so the composition is bitwise).
    #[test]
    fn rescale_composes_on_dyadic_pairs() {
        let g = make_grid(1, 128).unwrap();
        let f = GridFunction::sample(g, |x| (PI * x[0]).sin() + x[0] * x[0]);
        assert_eq!(ScalingParams::new(0.5, 2, 1).unwrap().sigma, 1.0);

        let f0 = f.value(g.nearest_index(&[0.0]), 0);
        let once = dilate(&f, 0.5).unwrap().map(|v| (v - f0) / 0.5);
        let f0_mid = once.value(once.grid().nearest_index(&[0.0]), 0);
        assert_eq!(f0_mid, 0.0);
        let twice = dilate(&once, 0.5).unwrap().map(|v| (v - f0_mid) / 0.5);
        let direct = dilate(&f, 0.25).unwrap().map(|v| (v - f0) / 0.25);
        assert_eq!(twice, direct);
    }

    #[test]
    fn scaling_ratios_bounded_and_grid_stable() {
        let roles = [ScalingRole::FSigma, ScalingRole::GEll, ScalingRole::HEll];
        for role in roles {
            let measure = |res: usize| -> f64 {
                let g = make_grid(1, res).unwrap();
                let params = ScalingParams::new(0.25, 3, 1).unwrap();
                let f = GridFunction::sample(g, |x| (PI * x[0]).cos() + 0.3 * x[0] * x[0]);
                let rows = scaling_check(&f, role, &params, 1).unwrap();
                rows.iter()
                    .fold(0.0f64, |m, r| m.max(r.ratio_box).max(r.ratio_plus))
            };
            let (a, b) = (measure(64), measure(128));
            let drift = b / a;
            assert!(
                (0.5..=2.0).contains(&drift),
                "{role:?}: scaling ratio unstable {a} vs {b}"
            );
        }
    }

    #[test]
    fn scaling_constant_field_f_role_is_zero() {
        let g = make_grid(1, 64).unwrap();
        let params = ScalingParams::new(0.5, 2, 1).unwrap();
        let f = GridFunction::constant(g, 1, 3.0);
        let rows = scaling_check(&f, ScalingRole::FSigma, &params, 0).unwrap();
        for r in rows {
            assert_eq!(r.ratio_box, 0.0);
            assert_eq!(r.ratio_plus, 0.0);
        }
    }

    #[test]
    fn projected_data_vanishes_outside_cutoff_support() {
        let s = 2;
        let (g, problem) = standard_setup(64, s);
        let phi1 = cutoff_phi(g, 1.0).unwrap();
        let psi = bump_psi(g, &[0.55], &[-0.55], 0.08).unwrap();
        let proj = project_to_torus(&problem, &phi1, &psi, s).unwrap();
        for p in 0..g.num_points() {
            if phi1.value(p, 0) == 0.0 {
                assert_eq!(proj.data.0.value(p, 0), 0.0);
                assert_eq!(proj.data.1.value(p, 0), 0.0);
            }
        }
    }

    #[test]
    fn jet_blob_roundtrip() {
        let g = make_grid(1, 16).unwrap();
        let jet = Jet::new(vec![
            GridFunction::sample(g, |x| x[0]),
            GridFunction::sample(g, |x| 1.0 - x[0] * x[0]),
        ]);
        let back = Jet::from_bytes(&jet.to_bytes()).unwrap();
        assert_eq!(jet, back);
        assert!(Jet::from_bytes(&jet.to_bytes()[..7]).is_err());
    }
}
