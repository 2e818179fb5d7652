//! Discrete intersection Sobolev norms, energy norms over time-derivative
//! jets, and a measured-constant harness for the calculus inequalities.
//!
//! Region norms never let a stencil cross the interface: derivatives inside
//! `Omega` or its complement use the one-sided machinery from [`crate::grid`],
//! which is what keeps `H^s` finite for fields that jump across the planes.

use crate::grid::{
    self, derivative, DiffMode, GridFunction, Region, TorusGrid,
};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NormError {
    #[error("derivative order {0} exceeds the stencil limit 4")]
    OrderTooLarge(usize),
    #[error("resolution {res} too coarse for order {s}")]
    TooCoarse { res: usize, s: usize },
    #[error("jet of length {len} too short for {need} entries")]
    JetTooShort { len: usize, need: usize },
    #[error("truncation order {r} exceeds {s}")]
    BadTruncation { r: usize, s: usize },
}

/// Integration/stencil domain of a norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormRegion {
    /// Whole torus, periodic stencils.
    Torus,
    /// Upper open half `Omega`, one-sided at the interface planes.
    Omega,
    /// Lower open half, one-sided at the interface planes.
    OmegaC,
    /// The box `Q_1` without the periodic identification (all axes bounded).
    BoxQ1,
    /// The half box `Q_1^+` without identification.
    BoxPlus,
    /// The half box `Q_1^-` without identification.
    BoxMinus,
}

impl NormRegion {
    pub fn diff_mode(self) -> DiffMode {
        match self {
            NormRegion::Torus => DiffMode::Torus,
            NormRegion::Omega => DiffMode::OmegaSide,
            NormRegion::OmegaC => DiffMode::OmegaCSide,
            NormRegion::BoxQ1 => DiffMode::Box,
            NormRegion::BoxPlus => DiffMode::BoxPlus,
            NormRegion::BoxMinus => DiffMode::BoxMinus,
        }
    }

    /// Quadrature weight of a grid point for this region.
    pub fn weight(self, g: TorusGrid, p: usize) -> f64 {
        let d = g.digits(p);
        let j = d[g.normal_axis()];
        let half = g.resolution() / 2;
        match self {
            NormRegion::Torus | NormRegion::BoxQ1 => 1.0,
            NormRegion::Omega => match g.region(p) {
                Region::Omega => 1.0,
                Region::Interface => 0.5,
                Region::OmegaC => 0.0,
            },
            NormRegion::OmegaC => match g.region(p) {
                Region::OmegaC => 1.0,
                Region::Interface => 0.5,
                Region::Omega => 0.0,
            },
            NormRegion::BoxPlus => {
                if j == half {
                    0.5
                } else if j > half {
                    1.0
                } else {
                    0.0
                }
            }
            NormRegion::BoxMinus => {
                if j == 0 || j == half {
                    0.5
                } else if j < half {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Jet weight exponents `m_l` of the energy norms: 2 for `l >= 2`, else `l`.
pub fn m_weight(l: usize) -> usize {
    if l >= 2 {
        2
    } else {
        l
    }
}

/// One squared term of a norm with a human-readable label.
#[derive(Debug, Clone)]
pub struct Contribution {
    pub label: String,
    pub squared: f64,
}

/// A measured norm with its per-term breakdown.
#[derive(Debug, Clone)]
pub struct NormReport {
    pub value: f64,
    pub contributions: Vec<Contribution>,
    pub resolution: usize,
}

impl NormReport {
    fn from_parts(resolution: usize, contributions: Vec<Contribution>) -> Self {
        let sq: f64 = contributions.iter().map(|c| c.squared).sum();
        NormReport {
            value: sq.sqrt(),
            contributions,
            resolution,
        }
    }

    /// `value^2` must equal the contribution sum up to accumulation noise.
    pub fn consistent(&self) -> bool {
        let sq: f64 = self.contributions.iter().map(|c| c.squared).sum();
        (self.value * self.value - sq).abs() <= 1e-12 * (1.0 + sq)
    }
}

/// All multi-indices over `n` axes with `|alpha| = order`.
pub fn multi_indices(n: usize, order: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    match n {
        1 => out.push([order, 0, 0]),
        2 => {
            for a in 0..=order {
                out.push([a, order - a, 0]);
            }
        }
        3 => {
            for a in 0..=order {
                for b in 0..=(order - a) {
                    out.push([a, b, order - a - b]);
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

fn check_order(g: TorusGrid, s: usize) -> Result<(), NormError> {
    if s > 4 {
        return Err(NormError::OrderTooLarge(s));
    }
    // one-sided stencils need at least 3 points per closed half segment and
    // repeated application must not consume the whole half box
    if g.resolution() / 2 < s + 2 {
        return Err(NormError::TooCoarse {
            res: g.resolution(),
            s,
        });
    }
    Ok(())
}

/// Replace interface-plane values by the quadratic side-limit extrapolation
/// from three in-side neighbours along the normal axis.
///
/// Interface points store the midpoint average of the two one-sided limits;
/// a one-sided stencil reading that average would implicitly see the other
/// side of a jump. Exact for fields that are polynomials of degree <= 2 on
/// the side, O(h^3) perturbation for smooth fields.
fn side_limit(f: &GridFunction, region: NormRegion) -> GridFunction {
    let g = f.grid();
    let res = g.resolution() as i64;
    let half = g.resolution() / 2;
    let normal = g.normal_axis();
    let comps = f.components();
    // (plane digit, direction of the side's interior)
    let planes: &[(usize, i64)] = match region {
        NormRegion::Torus | NormRegion::BoxQ1 => return f.clone(),
        NormRegion::Omega => &[(half, 1), (0, -1)],
        NormRegion::OmegaC => &[(0, 1), (half, -1)],
        NormRegion::BoxPlus => &[(half, 1)],
        NormRegion::BoxMinus => &[(0, 1), (half, -1)],
    };
    let mut out = f.clone();
    for p in 0..g.num_points() {
        let d = g.digits(p);
        for &(plane, dir) in planes {
            if d[normal] != plane {
                continue;
            }
            let at = |k: i64| -> usize {
                let mut dd = d;
                dd[normal] = ((plane as i64 + dir * k).rem_euclid(res)) as usize;
                g.index(&dd[..g.dim()])
            };
            for c in 0..comps {
                let v = 3.0 * f.value(at(1), c) - 3.0 * f.value(at(2), c) + f.value(at(3), c);
                out.set(p, c, v);
            }
        }
    }
    out
}

/// Squared L^p-style sum of `|D^alpha f|` over the region for all
/// `|alpha| = order`. For `p = 2` this is the seminorm squared.
///
/// Order-zero terms use the stored samples; derivative terms of restricted
/// regions act on the side-limit reconstruction so no stencil sees data from
/// across the interface.
fn seminorm_p(f: &GridFunction, order: usize, p: f64, region: NormRegion) -> f64 {
    let g = f.grid();
    let mode = region.diff_mode();
    let vol = g.cell_volume();
    let mut acc: f64 = 0.0;
    let mut sup: f64 = 0.0;
    let base;
    let f = if order == 0 {
        f
    } else {
        base = side_limit(f, region);
        &base
    };
    for alpha in multi_indices(g.dim(), order) {
        let d = derivative(f, &alpha[..g.dim()], mode);
        for pt in 0..g.num_points() {
            let w = region.weight(g, pt);
            if w == 0.0 {
                continue;
            }
            for c in 0..d.components() {
                let v = d.value(pt, c).abs();
                if p.is_finite() {
                    acc += w * v.powf(p) * vol;
                } else {
                    sup = sup.max(v);
                }
            }
        }
    }
    if p.is_finite() {
        acc
    } else {
        sup
    }
}

/// `W^{k,p}` seminorm `|f|_{k,p}` over a region (`p = f64::INFINITY` for sup).
pub fn wkp_seminorm(f: &GridFunction, k: usize, p: f64, region: NormRegion) -> f64 {
    let raw = seminorm_p(f, k, p, region);
    if p.is_finite() {
        raw.powf(1.0 / p)
    } else {
        raw
    }
}

/// Full `W^{s,p}` norm over a region.
pub fn wsp_norm(f: &GridFunction, s: usize, p: f64, region: NormRegion) -> f64 {
    if p.is_finite() {
        let mut acc = 0.0;
        for k in 0..=s {
            acc += seminorm_p(f, k, p, region);
        }
        acc.powf(1.0 / p)
    } else {
        (0..=s)
            .map(|k| seminorm_p(f, k, p, region))
            .fold(0.0f64, f64::max)
    }
}

/// `L^p` norm over a region.
pub fn lp_norm(f: &GridFunction, p: f64, region: NormRegion) -> f64 {
    wkp_seminorm(f, 0, p, region)
}

/// Discrete `H^s` norm over a region, one-sided stencils at the interface.
pub fn sobolev_norm(f: &GridFunction, s: usize, region: NormRegion) -> Result<NormReport, NormError> {
    let g = f.grid();
    check_order(g, s)?;
    let contributions = (0..=s)
        .map(|k| Contribution {
            label: format!("order{k}"),
            squared: seminorm_p(f, k, 2.0, region),
        })
        .collect();
    Ok(NormReport::from_parts(g.resolution(), contributions))
}

/// Intersection norm `H^{k,s}`: `H^s(Omega)`, `H^k(torus)`, `H^s(Omega^c)`
/// summed in squares.
pub fn intersect_norm(f: &GridFunction, k: usize, s: usize) -> Result<NormReport, NormError> {
    assert!(k <= s, "need k <= s in the intersection norm");
    let omega = sobolev_norm(f, s, NormRegion::Omega)?;
    let global = sobolev_norm(f, k, NormRegion::Torus)?;
    let comp = sobolev_norm(f, s, NormRegion::OmegaC)?;
    let contributions = vec![
        Contribution {
            label: format!("H{s}(Omega)"),
            squared: omega.value * omega.value,
        },
        Contribution {
            label: format!("H{k}(torus)"),
            squared: global.value * global.value,
        },
        Contribution {
            label: format!("H{s}(OmegaC)"),
            squared: comp.value * comp.value,
        },
    ];
    Ok(NormReport::from_parts(f.grid().resolution(), contributions))
}

/// Box-flavoured intersection norm on `Q_1` (no periodic wrap), used by the
/// rescaling checks.
pub fn intersect_norm_box(f: &GridFunction, k: usize, s: usize) -> Result<NormReport, NormError> {
    assert!(k <= s);
    let plus = sobolev_norm(f, s, NormRegion::BoxPlus)?;
    let global = sobolev_norm(f, k, NormRegion::BoxQ1)?;
    let minus = sobolev_norm(f, s, NormRegion::BoxMinus)?;
    let contributions = vec![
        Contribution {
            label: format!("H{s}(Q1+)"),
            squared: plus.value * plus.value,
        },
        Contribution {
            label: format!("H{k}(Q1)"),
            squared: global.value * global.value,
        },
        Contribution {
            label: format!("H{s}(Q1-)"),
            squared: minus.value * minus.value,
        },
    ];
    Ok(NormReport::from_parts(f.grid().resolution(), contributions))
}

/// Energy norm family over a time-derivative jet `(u_0, ..., u_r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormSpec {
    /// `E^s`: intersection norms `H^{m_{s-l}, s-l}` summed over the jet.
    EnergyS { s: usize },
    /// Script `E^s`: `H^{0, s-l}` flavour.
    EnergyCs { s: usize },
    /// `E^{s,r}`: truncation of `E^s` at jet entry `r`.
    EnergySr { s: usize, r: usize },
    /// `E = E^1`: plain `H^1(torus)` of `u_0` plus `L^2` of `u_1`.
    EnergyBase,
    /// `E^s(region)`: one-sided Sobolev norms over a region.
    EnergyRegion { s: usize, region: NormRegion },
}

/// Evaluate an energy norm on a jet given as a slice of grid functions.
pub fn energy_norm(jet: &[GridFunction], spec: NormSpec) -> Result<NormReport, NormError> {
    let need = match spec {
        NormSpec::EnergyS { s } | NormSpec::EnergyCs { s } | NormSpec::EnergyRegion { s, .. } => {
            s + 1
        }
        NormSpec::EnergySr { s, r } => {
            if r > s {
                return Err(NormError::BadTruncation { r, s });
            }
            r + 1
        }
        NormSpec::EnergyBase => 2,
    };
    if jet.len() < need {
        return Err(NormError::JetTooShort {
            len: jet.len(),
            need,
        });
    }
    let res = jet[0].grid().resolution();
    let mut contributions = Vec::new();
    match spec {
        NormSpec::EnergyS { s } => {
            for (l, u) in jet.iter().take(s + 1).enumerate() {
                let r = intersect_norm(u, m_weight(s - l), s - l)?;
                contributions.push(Contribution {
                    label: format!("dt{l}"),
                    squared: r.value * r.value,
                });
            }
        }
        NormSpec::EnergyCs { s } => {
            for (l, u) in jet.iter().take(s + 1).enumerate() {
                let r = intersect_norm(u, 0, s - l)?;
                contributions.push(Contribution {
                    label: format!("dt{l}"),
                    squared: r.value * r.value,
                });
            }
        }
        NormSpec::EnergySr { s, r } => {
            for (l, u) in jet.iter().take(r + 1).enumerate() {
                let rep = intersect_norm(u, m_weight(s - l), s - l)?;
                contributions.push(Contribution {
                    label: format!("dt{l}"),
                    squared: rep.value * rep.value,
                });
            }
        }
        NormSpec::EnergyBase => {
            let h1 = sobolev_norm(&jet[0], 1, NormRegion::Torus)?;
            let l2 = sobolev_norm(&jet[1], 0, NormRegion::Torus)?;
            contributions.push(Contribution {
                label: "H1(u0)".into(),
                squared: h1.value * h1.value,
            });
            contributions.push(Contribution {
                label: "L2(u1)".into(),
                squared: l2.value * l2.value,
            });
        }
        NormSpec::EnergyRegion { s, region } => {
            for (l, u) in jet.iter().take(s + 1).enumerate() {
                let r = sobolev_norm(u, s - l, region)?;
                contributions.push(Contribution {
                    label: format!("dt{l}"),
                    squared: r.value * r.value,
                });
            }
        }
    }
    Ok(NormReport::from_parts(res, contributions))
}

// ---------------------------------------------------------------------------
// Calculus inequality harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    Holder,
    SobolevEmbed,
    Interpolation,
    Multiplication,
    GagliardoNirenberg,
    Moser,
    ElemE,
    FPropB,
}

impl Inequality {
    pub const ALL: [Inequality; 8] = [
        Inequality::Holder,
        Inequality::SobolevEmbed,
        Inequality::Interpolation,
        Inequality::Multiplication,
        Inequality::GagliardoNirenberg,
        Inequality::Moser,
        Inequality::ElemE,
        Inequality::FPropB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Inequality::Holder => "holder",
            Inequality::SobolevEmbed => "sobolev_embed",
            Inequality::Interpolation => "interpolation",
            Inequality::Multiplication => "multiplication",
            Inequality::GagliardoNirenberg => "gagliardo_nirenberg",
            Inequality::Moser => "moser",
            Inequality::ElemE => "elem_mult",
            Inequality::FPropB => "composite_jet",
        }
    }
}

/// One measured row of the constant table.
#[derive(Debug, Clone)]
pub struct RatioRow {
    pub inequality: &'static str,
    pub params: String,
    pub resolution: usize,
    pub max_ratio: f64,
}

/// Frozen test family: trigonometric polynomials, piecewise polynomials and
/// scaled bumps. Deterministic for a given grid.
pub fn corpus(g: TorusGrid) -> Vec<(String, GridFunction)> {
    use std::f64::consts::PI;
    let chi = grid::indicator(g);
    let mut fields: Vec<(String, GridFunction)> = Vec::new();
    fields.push((
        "sin_2pi".into(),
        GridFunction::sample(g, |x| (2.0 * PI * x[0]).sin()),
    ));
    fields.push((
        "cos_2pi_n".into(),
        GridFunction::sample(g, |x| (2.0 * PI * x[x.len() - 1]).cos()),
    ));
    fields.push((
        "trig_mix".into(),
        GridFunction::sample(g, |x| {
            let mut v = 1.0;
            for (k, &xi) in x.iter().enumerate() {
                v *= ((k + 1) as f64 * PI * xi).sin() + 0.5;
            }
            v
        }),
    ));
    let xn2 = GridFunction::sample(g, |x| {
        let t = x[x.len() - 1];
        t * t
    });
    fields.push(("chi_xn2".into(), chi.mul(&xn2)));
    fields.push((
        "chi_sin_pi".into(),
        chi.mul(&GridFunction::sample(g, |x| (PI * x[x.len() - 1]).sin())),
    ));
    fields.push((
        "bump_plus".into(),
        grid::bump_at(g, &[0.0, 0.0, 0.5][3 - g.dim()..], 0.15),
    ));
    fields.push((
        "bump_wide".into(),
        grid::bump_at(g, &[0.0; 3][..g.dim()], 0.3),
    ));
    fields
}

fn ratio_or_zero(lhs: f64, rhs: f64) -> f64 {
    if rhs == 0.0 {
        if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        lhs / rhs
    }
}

/// Measure the worst LHS/RHS ratio of one inequality over the frozen corpus
/// at one resolution.
pub fn measure_inequality(name: Inequality, n: usize, res: usize) -> Result<RatioRow, NormError> {
    let g = TorusGrid::new(n, res).expect("valid grid");
    let items = corpus(g);
    let om = NormRegion::Omega;
    let inf = f64::INFINITY;
    let mut max_ratio: f64 = 0.0;
    let params;
    match name {
        Inequality::Holder => {
            params = "p=2,q=2,r=1".to_string();
            for (_, u) in &items {
                for (_, v) in &items {
                    let lhs = lp_norm(&u.mul(v), 1.0, om);
                    let rhs = lp_norm(u, 2.0, om) * lp_norm(v, 2.0, om);
                    max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
                }
            }
        }
        Inequality::SobolevEmbed => {
            // Morrey flavour: sp > n with p = 2, s = n
            let s = n;
            params = format!("s={s},p=2,sup");
            for (_, u) in &items {
                let lhs = lp_norm(u, inf, om);
                let rhs = wsp_norm(u, s, 2.0, om);
                max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
            }
        }
        Inequality::Interpolation => {
            params = "k=1,s=2,p=2,eps={1,1/2,1/4}".to_string();
            for (_, u) in &items {
                for eps in [1.0, 0.5, 0.25] {
                    let lhs = wkp_seminorm(u, 1, 2.0, om);
                    let rhs = eps * wkp_seminorm(u, 2, 2.0, om)
                        + eps.powi(-1) * lp_norm(u, 2.0, om);
                    max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
                }
            }
        }
        Inequality::Multiplication => {
            params = "s1=s2=s3=2,p=2".to_string();
            for (_, u) in &items {
                for (_, v) in &items {
                    let lhs = wsp_norm(&u.mul(v), 2, 2.0, om);
                    let rhs = wsp_norm(u, 2, 2.0, om) * wsp_norm(v, 2, 2.0, om);
                    max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
                }
            }
        }
        Inequality::GagliardoNirenberg => {
            params = "alpha=1,s=2,p=q=r=2".to_string();
            for (_, u) in &items {
                let lhs = wkp_seminorm(u, 1, 2.0, om);
                let rhs = lp_norm(u, 2.0, om).sqrt() * wsp_norm(u, 2, 2.0, om).sqrt();
                max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
            }
        }
        Inequality::Moser => {
            params = "f=u^2,s=2,p=2".to_string();
            for (_, u) in &items {
                let fu = u.mul(u);
                let lhs = wkp_seminorm(&fu, 2, 2.0, om);
                let rhs = (1.0 + lp_norm(u, inf, om)) * wsp_norm(u, 2, 2.0, om);
                max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
            }
        }
        Inequality::ElemE => {
            params = "s1=s2=s3=2,intersection".to_string();
            for (_, u) in &items {
                for (_, v) in &items {
                    let lhs = intersect_norm(&u.mul(v), 0, 2)?.value;
                    let rhs = intersect_norm(u, 0, 2)?.value * intersect_norm(v, 0, 2)?.value;
                    max_ratio = max_ratio.max(ratio_or_zero(lhs, rhs));
                }
            }
        }
        Inequality::FPropB => {
            // composite jets: d_t^l of u^2 at t=0 for a quadratic-in-t jet
            params = "f=u^2,s=2".to_string();
            let s = 2usize;
            for w in items.windows(3) {
                let jet = [&w[0].1, &w[1].1, &w[2].1];
                let mut lhs_max: f64 = 0.0;
                for l in 0..=s {
                    // d_t^l (u^2)|_0 = sum_j C(l,j) u_j u_{l-j}
                    let mut term = GridFunction::zeros(g, 1);
                    for j in 0..=l {
                        let c = binomial(l, j) as f64;
                        term = term.axpy(c, &jet[j].mul(jet[l - j]));
                    }
                    let norm = intersect_norm(&term, 0, s - l)?.value;
                    lhs_max = lhs_max.max(norm);
                }
                let jets: Vec<GridFunction> = jet.iter().map(|f| (*f).clone()).collect();
                let rhs = energy_norm(&jets, NormSpec::EnergyCs { s })?.value.powi(2);
                max_ratio = max_ratio.max(ratio_or_zero(lhs_max, rhs));
            }
        }
    }
    Ok(RatioRow {
        inequality: name.name(),
        params,
        resolution: res,
        max_ratio,
    })
}

/// Run one inequality over several resolutions; the acceptance view of this
/// table is grid stability, not any particular constant.
pub fn inequality_check(
    name: Inequality,
    n: usize,
    resolutions: &[usize],
) -> Result<Vec<RatioRow>, NormError> {
    resolutions
        .iter()
        .map(|&res| measure_inequality(name, n, res))
        .collect()
}

/// CSV rendering of constant tables: (inequality, parameters, N, max_ratio).
pub fn ratio_table_csv(rows: &[RatioRow]) -> String {
    let mut s = String::from("inequality,parameters,N,max_ratio\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.inequality, r.params, r.resolution, r.max_ratio
        );
    }
    s
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}
