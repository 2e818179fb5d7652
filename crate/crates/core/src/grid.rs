//! Periodic lattice on the box `[-1,1]^n` with opposite faces identified,
//! interface masks, cutoff fields and finite-difference stencils.
//!
//! The interface consists of the planes `x^n = 0` and `x^n = +-1` (one plane
//! after identification). The resolution is kept even so both planes lie
//! exactly on grid points; all index arithmetic is modulo `N` per axis.

use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("resolution {0} is odd; the interface would fall between grid points")]
    OddResolution(usize),
    #[error("resolution {0} is too small (need N >= 8)")]
    ResolutionTooSmall(usize),
    #[error("spatial dimension {0} unsupported (need 1 <= n <= 3)")]
    DimensionOutOfRange(usize),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("component counts {0} and {1} are incompatible")]
    ComponentMismatch(usize, usize),
    #[error("axis {axis} out of range for dimension {n}")]
    AxisOutOfRange { axis: usize, n: usize },
    #[error("cutoff width {0} outside (0, 1]")]
    CutoffWidthOutOfRange(f64),
    #[error("bump balls must keep 3*rho clear of the interface planes")]
    BallTouchesInterface,
    #[error("malformed grid-function blob: {0}")]
    BadBlob(String),
}

/// Uniform periodic lattice on `Q_1 = [-1,1]^n` with faces identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    n: usize,
    res: usize,
}

/// Point classification relative to the interface planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `0 < x^n < 1`
    Omega,
    /// `-1 < x^n < 0`
    OmegaC,
    /// `x^n = 0` or `x^n = +-1`
    Interface,
}

/// Stencil selection for derivatives.
///
/// The torus-flavoured modes wrap tangential axes periodically and keep the
/// normal-axis stencil inside one closed half; the box-flavoured modes never
/// wrap any axis (used for `Q_1` norms where `x = -1` and `x = +1` are
/// distinct ends).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMode {
    /// Periodic centered stencils everywhere.
    Torus,
    /// Stencils confined to the closed upper half `0 <= x^n <= 1`.
    OmegaSide,
    /// Stencils confined to the closed lower half `-1 <= x^n <= 0`.
    OmegaCSide,
    /// Non-wrapping stencils on the full box, all axes.
    Box,
    /// Non-wrapping stencils on the closed upper half box.
    BoxPlus,
    /// Non-wrapping stencils on the closed lower half box.
    BoxMinus,
}

impl TorusGrid {
    pub fn new(n: usize, res: usize) -> Result<Self, GridError> {
        if !(1..=3).contains(&n) {
            return Err(GridError::DimensionOutOfRange(n));
        }
        if res % 2 != 0 {
            return Err(GridError::OddResolution(res));
        }
        if res < 8 {
            return Err(GridError::ResolutionTooSmall(res));
        }
        Ok(TorusGrid { n, res })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn spacing(&self) -> f64 {
        2.0 / self.res as f64
    }

    pub fn num_points(&self) -> usize {
        self.res.pow(self.n as u32)
    }

    /// Cell volume `h^n` of the quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// The interface-normal axis (the `x^n` direction).
    pub fn normal_axis(&self) -> usize {
        self.n - 1
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.res.pow((self.n - 1 - axis) as u32)
    }

    pub fn coord(&self, digit: usize) -> f64 {
        -1.0 + digit as f64 * self.spacing()
    }

    pub fn digits(&self, mut idx: usize) -> [usize; 3] {
        let mut d = [0usize; 3];
        for axis in (0..self.n).rev() {
            d[axis] = idx % self.res;
            idx /= self.res;
        }
        d
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        let mut idx = 0;
        for axis in 0..self.n {
            idx = idx * self.res + (digits[axis] % self.res);
        }
        idx
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let d = self.digits(idx);
        let mut x = [0.0; 3];
        for axis in 0..self.n {
            x[axis] = self.coord(d[axis]);
        }
        x
    }

    /// Nearest grid index to a coordinate tuple.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let mut digits = [0usize; 3];
        for axis in 0..self.n {
            let j = ((x[axis] + 1.0) / h).round() as i64;
            digits[axis] = j.rem_euclid(self.res as i64) as usize;
        }
        self.index(&digits[..self.n])
    }

    pub fn region_of_digit(&self, j: usize) -> Region {
        let half = self.res / 2;
        if j == 0 || j == half {
            Region::Interface
        } else if j > half {
            Region::Omega
        } else {
            Region::OmegaC
        }
    }

    pub fn region(&self, idx: usize) -> Region {
        let d = self.digits(idx);
        self.region_of_digit(d[self.normal_axis()])
    }

    /// Periodic distance between two coordinates on one axis.
    pub fn axis_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        d.min(2.0 - d)
    }

    /// Periodic Euclidean distance between a grid point and a coordinate tuple.
    pub fn distance(&self, idx: usize, x: &[f64]) -> f64 {
        let p = self.point(idx);
        let mut sq = 0.0;
        for axis in 0..self.n {
            let d = self.axis_distance(p[axis], x[axis]);
            sq += d * d;
        }
        sq.sqrt()
    }
}

/// Vector-valued field sampled on a [`TorusGrid`].
///
/// Storage is row-major over axes (axis 0 slowest) with the component index
/// fastest. Values are immutable in spirit: operations return new fields.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    comps: usize,
    data: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: TorusGrid, comps: usize) -> Self {
        assert!(comps >= 1);
        GridFunction {
            grid,
            comps,
            data: vec![0.0; grid.num_points() * comps],
        }
    }

    pub fn constant(grid: TorusGrid, comps: usize, value: f64) -> Self {
        GridFunction {
            grid,
            comps,
            data: vec![value; grid.num_points() * comps],
        }
    }

    /// Sample a scalar closure of the point coordinates.
    pub fn sample(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = GridFunction::zeros(grid, 1);
        for p in 0..grid.num_points() {
            let x = grid.point(p);
            out.data[p] = f(&x[..grid.dim()]);
        }
        out
    }

    /// Sample a vector closure with `comps` outputs.
    pub fn sample_vector(grid: TorusGrid, comps: usize, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut out = GridFunction::zeros(grid, comps);
        let mut buf = vec![0.0; comps];
        for p in 0..grid.num_points() {
            let x = grid.point(p);
            f(&x[..grid.dim()], &mut buf);
            out.data[p * comps..(p + 1) * comps].copy_from_slice(&buf);
        }
        out
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn value(&self, point: usize, comp: usize) -> f64 {
        self.data[point * self.comps + comp]
    }

    pub fn set(&mut self, point: usize, comp: usize, v: f64) {
        self.data[point * self.comps + comp] = v;
    }

    pub fn same_grid(&self, other: &GridFunction) -> Result<(), GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            comps: self.comps,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> GridFunction {
        self.map(|v| k * v)
    }

    /// `self + k * other`.
    pub fn axpy(&self, k: f64, other: &GridFunction) -> GridFunction {
        self.zip(other, |a, b| a + k * b)
    }

    /// Pointwise product. A single-component factor broadcasts over the
    /// components of the other factor.
    pub fn mul(&self, other: &GridFunction) -> GridFunction {
        self.same_grid(other).expect("grid mismatch in mul");
        if self.comps == other.comps {
            return self.zip(other, |a, b| a * b);
        }
        let (scalar, vector) = if self.comps == 1 {
            (self, other)
        } else if other.comps == 1 {
            (other, self)
        } else {
            panic!(
                "incompatible component counts {} and {}",
                self.comps, other.comps
            );
        };
        let mut out = vector.clone();
        for p in 0..self.grid.num_points() {
            let s = scalar.data[p];
            for c in 0..vector.comps {
                out.data[p * vector.comps + c] *= s;
            }
        }
        out
    }

    fn zip(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        self.same_grid(other).expect("grid mismatch");
        assert_eq!(
            self.comps, other.comps,
            "component mismatch {} vs {}",
            self.comps, other.comps
        );
        GridFunction {
            grid: self.grid,
            comps: self.comps,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Discrete L2 norm over the whole torus with weight `h^n`.
    pub fn l2(&self) -> f64 {
        let w = self.grid.cell_volume();
        (self.data.iter().map(|&v| v * v).sum::<f64>() * w).sqrt()
    }

    pub fn extract_component(&self, comp: usize) -> GridFunction {
        let mut out = GridFunction::zeros(self.grid, 1);
        for p in 0..self.grid.num_points() {
            out.data[p] = self.value(p, comp);
        }
        out
    }

    /// Cyclic shift by `offset` grid cells along `axis` (value at `p` comes
    /// from `p - offset`).
    pub fn shift(&self, axis: usize, offset: i64) -> GridFunction {
        let g = self.grid;
        let res = g.resolution() as i64;
        let mut out = GridFunction::zeros(g, self.comps);
        for p in 0..g.num_points() {
            let mut d = g.digits(p);
            d[axis] = ((d[axis] as i64 - offset).rem_euclid(res)) as usize;
            let q = g.index(&d[..g.dim()]);
            for c in 0..self.comps {
                out.data[p * self.comps + c] = self.data[q * self.comps + c];
            }
        }
        out
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    Interior,
    Left,
    Right,
}

/// Where a digit sits inside the 1-d segment structure of `mode` along `axis`.
/// Returns `(End, wrap)`: `wrap` true means periodic centered stencils apply.
fn place(grid: TorusGrid, mode: DiffMode, axis: usize, j: usize) -> (End, bool) {
    let half = grid.resolution() / 2;
    let last = grid.resolution() - 1;
    let normal = axis == grid.normal_axis();
    match mode {
        DiffMode::Torus => (End::Interior, true),
        DiffMode::OmegaSide => {
            if !normal {
                return (End::Interior, true);
            }
            // segment [half .. N] with N identified to 0
            if j == half {
                (End::Left, false)
            } else if j == 0 {
                (End::Right, false)
            } else {
                (End::Interior, true)
            }
        }
        DiffMode::OmegaCSide => {
            if !normal {
                return (End::Interior, true);
            }
            if j == 0 {
                (End::Left, false)
            } else if j == half {
                (End::Right, false)
            } else {
                (End::Interior, true)
            }
        }
        DiffMode::Box => {
            if j == 0 {
                (End::Left, false)
            } else if j == last {
                (End::Right, false)
            } else {
                (End::Interior, false)
            }
        }
        DiffMode::BoxPlus => {
            if !normal {
                return place(grid, DiffMode::Box, 0, j);
            }
            if j == half {
                (End::Left, false)
            } else if j == last {
                (End::Right, false)
            } else {
                (End::Interior, false)
            }
        }
        DiffMode::BoxMinus => {
            if !normal {
                return place(grid, DiffMode::Box, 0, j);
            }
            if j == 0 {
                (End::Left, false)
            } else if j == half {
                (End::Right, false)
            } else {
                (End::Interior, false)
            }
        }
    }
}

fn apply_axis_stencil(
    f: &GridFunction,
    axis: usize,
    kernel: impl Fn(usize, &dyn Fn(i64) -> usize) -> ([i64; 4], [f64; 4], usize),
) -> GridFunction {
    let g = f.grid();
    let comps = f.components();
    let res = g.resolution() as i64;
    let mut out = GridFunction::zeros(g, comps);
    for p in 0..g.num_points() {
        let d = g.digits(p);
        let j = d[axis];
        let neighbor = |off: i64| -> usize {
            let mut dd = d;
            dd[axis] = ((j as i64 + off).rem_euclid(res)) as usize;
            g.index(&dd[..g.dim()])
        };
        let (offs, coefs, len) = kernel(j, &neighbor);
        for c in 0..comps {
            let mut acc = 0.0;
            for k in 0..len {
                acc += coefs[k] * f.value(neighbor(offs[k]), c);
            }
            out.data[p * comps + c] = acc;
        }
    }
    out
}

/// Second-order first derivative along `axis`.
///
/// Interior points use the centered stencil; segment ends (per `mode`) use
/// the three-point one-sided stencil that stays inside the segment.
pub fn diff1(f: &GridFunction, axis: usize, mode: DiffMode) -> GridFunction {
    let g = f.grid();
    assert!(axis < g.dim(), "axis {} out of range", axis);
    let h = g.spacing();
    apply_axis_stencil(f, axis, |j, _| {
        let (end, _) = place(g, mode, axis, j);
        match end {
            End::Interior => ([-1, 1, 0, 0], [-1.0 / (2.0 * h), 1.0 / (2.0 * h), 0.0, 0.0], 2),
            End::Left => (
                [0, 1, 2, 0],
                [-3.0 / (2.0 * h), 4.0 / (2.0 * h), -1.0 / (2.0 * h), 0.0],
                3,
            ),
            End::Right => (
                [0, -1, -2, 0],
                [3.0 / (2.0 * h), -4.0 / (2.0 * h), 1.0 / (2.0 * h), 0.0],
                3,
            ),
        }
    })
}

/// Compact second derivative along `axis` (the `[1, -2, 1]/h^2` stencil in
/// the interior, shifted one-sided at segment ends).
pub fn diff2(f: &GridFunction, axis: usize, mode: DiffMode) -> GridFunction {
    let g = f.grid();
    assert!(axis < g.dim(), "axis {} out of range", axis);
    let h2 = g.spacing() * g.spacing();
    apply_axis_stencil(f, axis, |j, _| {
        let (end, _) = place(g, mode, axis, j);
        match end {
            End::Interior => ([-1, 0, 1, 0], [1.0 / h2, -2.0 / h2, 1.0 / h2, 0.0], 3),
            End::Left => ([0, 1, 2, 0], [1.0 / h2, -2.0 / h2, 1.0 / h2, 0.0], 3),
            End::Right => ([0, -1, -2, 0], [1.0 / h2, -2.0 / h2, 1.0 / h2, 0.0], 3),
        }
    })
}

/// Mixed partial `D^alpha f`: per axis, `alpha_i` is realized as
/// `floor(alpha_i/2)` compact second derivatives plus one first derivative
/// when odd.
pub fn derivative(f: &GridFunction, alpha: &[usize], mode: DiffMode) -> GridFunction {
    let mut cur = f.clone();
    for (axis, &a) in alpha.iter().enumerate() {
        for _ in 0..a / 2 {
            cur = diff2(&cur, axis, mode);
        }
        if a % 2 == 1 {
            cur = diff1(&cur, axis, mode);
        }
    }
    cur
}

/// Compact discrete Laplacian (sum of per-axis second differences).
pub fn laplacian(f: &GridFunction, mode: DiffMode) -> GridFunction {
    let g = f.grid();
    let mut acc = diff2(f, 0, mode);
    for axis in 1..g.dim() {
        acc = acc.add(&diff2(f, axis, mode));
    }
    acc
}

/// Stencil scheme selector mirroring the interface conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffScheme {
    Centered,
    OneSidedIntoOmega,
    OneSidedIntoOmegaC,
}

/// First derivative with the named interface convention.
pub fn diff(f: &GridFunction, axis: usize, scheme: DiffScheme) -> GridFunction {
    match scheme {
        DiffScheme::Centered => diff1(f, axis, DiffMode::Torus),
        DiffScheme::OneSidedIntoOmega => diff1(f, axis, DiffMode::OmegaSide),
        DiffScheme::OneSidedIntoOmegaC => diff1(f, axis, DiffMode::OmegaCSide),
    }
}

// ---------------------------------------------------------------------------
// Masks and cutoffs
// ---------------------------------------------------------------------------

/// Characteristic function of `Omega` with the midpoint convention: 1 inside,
/// 0 on the complement, 1/2 on the interface planes. Makes the half-box
/// volume quadrature exact.
pub fn indicator(grid: TorusGrid) -> GridFunction {
    let mut out = GridFunction::zeros(grid, 1);
    for p in 0..grid.num_points() {
        out.data[p] = match grid.region(p) {
            Region::Omega => 1.0,
            Region::OmegaC => 0.0,
            Region::Interface => 0.5,
        };
    }
    out
}

/// Quadrature weights for a region: 1 in the open region, 1/2 on the
/// interface, 0 outside. `None` means the whole torus (weight 1 everywhere).
pub fn region_weight(grid: TorusGrid, region: Option<Region>, point: usize) -> f64 {
    match region {
        None => 1.0,
        Some(r) => {
            let here = grid.region(point);
            if here == r {
                1.0
            } else if here == Region::Interface && r != Region::Interface {
                0.5
            } else if r == Region::Interface && here == Region::Interface {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// The frozen smooth ramp profile shared by every cutoff in the crate:
/// 1 for `t <= 1`, 0 for `t >= 2`, `exp(1 - 1/(1 - (t-1)^2))` in between.
pub fn ramp_profile(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let u = t - 1.0;
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// Tensor-product cutoff `phi_eta(x) = prod_i phi(4 x^i / eta)` equal to 1 on
/// the box `|x|_inf <= eta/4` and 0 outside `|x|_inf >= eta/2`.
pub fn cutoff_phi(grid: TorusGrid, eta: f64) -> Result<GridFunction, GridError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(GridError::CutoffWidthOutOfRange(eta));
    }
    Ok(GridFunction::sample(grid, |x| {
        x.iter().map(|&xi| ramp_profile(4.0 * xi / eta)).product()
    }))
}

/// Radial bump equal to 1 on `B_rho(center)`, 0 outside `B_{2 rho}(center)`,
/// with the shared ramp in between (periodic distance).
pub fn bump_at(grid: TorusGrid, center: &[f64], rho: f64) -> GridFunction {
    let mut out = GridFunction::zeros(grid, 1);
    for p in 0..grid.num_points() {
        let r = grid.distance(p, center);
        out.data[p] = ramp_profile(r / rho);
    }
    out
}

/// Two-ball damping bump of the projected problem: 1 on `B_rho(x_plus)` and
/// `B_rho(x_minus)`, 0 outside the doubled balls; rejects placements whose
/// `3 rho` enlargements touch an interface plane.
pub fn bump_psi(
    grid: TorusGrid,
    x_plus: &[f64],
    x_minus: &[f64],
    rho: f64,
) -> Result<GridFunction, GridError> {
    let clear = |x: &[f64], lo: f64, hi: f64| -> bool {
        let xn = x[grid.normal_axis()];
        xn - 3.0 * rho > lo && xn + 3.0 * rho < hi
    };
    if !clear(x_plus, 0.0, 1.0) || !clear(x_minus, -1.0, 0.0) {
        return Err(GridError::BallTouchesInterface);
    }
    let a = bump_at(grid, x_plus, rho);
    let b = bump_at(grid, x_minus, rho);
    // supports are disjoint by construction, so the sum stays in [0,1]
    Ok(a.add(&b))
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

impl GridFunction {
    /// Flat binary blob: `u32` header `(n, N, m)` then `f64` little-endian
    /// samples in row-major axis order, components fastest.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.data.len() * 8);
        out.extend_from_slice(&(self.grid.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.resolution() as u32).to_le_bytes());
        out.extend_from_slice(&(self.comps as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<GridFunction, GridError> {
        if bytes.len() < 12 {
            return Err(GridError::BadBlob("header truncated".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (n, res, comps) = (word(0) as usize, word(1) as usize, word(2) as usize);
        let grid = TorusGrid::new(n, res)?;
        let expect = grid.num_points() * comps;
        if comps == 0 || bytes.len() != 12 + 8 * expect {
            return Err(GridError::BadBlob(format!(
                "payload length {} does not match header ({n}, {res}, {comps})",
                bytes.len()
            )));
        }
        let data = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(GridFunction { grid, comps, data })
    }

    /// CSV export: one row per grid point, coordinates then components.
    pub fn to_csv(&self) -> String {
        let g = self.grid;
        let mut s = String::new();
        for axis in 0..g.dim() {
            let _ = write!(s, "x{axis},");
        }
        let cols: Vec<String> = (0..self.comps).map(|c| format!("c{c}")).collect();
        s.push_str(&cols.join(","));
        s.push('\n');
        for p in 0..g.num_points() {
            let x = g.point(p);
            for axis in 0..g.dim() {
                let _ = write!(s, "{},", x[axis]);
            }
            let vals: Vec<String> = (0..self.comps)
                .map(|c| format!("{}", self.value(p, c)))
                .collect();
            s.push_str(&vals.join(","));
            s.push('\n');
        }
        s
    }
}

/// `make_grid` spelled as in the operation table.
pub fn make_grid(n: usize, res: usize) -> Result<TorusGrid, GridError> {
    TorusGrid::new(n, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction_and_spacing() {
        let g = make_grid(1, 8).unwrap();
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.num_points(), 8);

        let g2 = make_grid(2, 16).unwrap();
        assert_eq!(g2.num_points(), 256);
        // interface line x^2 = 0 contains 16 points
        let count = (0..g2.num_points())
            .filter(|&p| {
                let d = g2.digits(p);
                d[1] == 8
            })
            .count();
        assert_eq!(count, 16);

        assert_eq!(make_grid(1, 7), Err(GridError::OddResolution(7)));
        assert_eq!(make_grid(1, 4), Err(GridError::ResolutionTooSmall(4)));
        assert_eq!(make_grid(4, 16), Err(GridError::DimensionOutOfRange(4)));
    }

    #[test]
    fn indicator_values_and_volume() {
        for n in 1..=2 {
            let g = make_grid(n, 16).unwrap();
            let chi = indicator(g);
            let p_in = g.nearest_index(&[0.5, 0.5, 0.5][..n]);
            assert_eq!(chi.value(p_in, 0), 1.0);
            let p_if = g.nearest_index(&[0.0, 0.0, 0.0][..n]);
            assert_eq!(chi.value(p_if, 0), 0.5);
            // midpoint quadrature of the half box is exact for constants
            let vol: f64 = chi.data().iter().sum::<f64>() * g.cell_volume();
            let expect = 2f64.powi(n as i32 - 1);
            assert!((vol - expect).abs() < 1e-13, "vol {vol} != {expect}");
        }
    }

    #[test]
    fn indicator_partition_of_unity() {
        let g = make_grid(2, 16).unwrap();
        let chi = indicator(g);
        for p in 0..g.num_points() {
            let complement = match g.region(p) {
                Region::Omega => 0.0,
                Region::OmegaC => 1.0,
                Region::Interface => 0.5,
            };
            assert_eq!(chi.value(p, 0) + complement, 1.0);
        }
    }

    #[test]
    fn cutoff_phi_plateau_and_support() {
        let g = make_grid(1, 64).unwrap();
        let phi = cutoff_phi(g, 1.0).unwrap();
        let origin = g.nearest_index(&[0.0]);
        assert_eq!(phi.value(origin, 0), 1.0);
        let outside = g.nearest_index(&[0.5]);
        assert_eq!(phi.value(outside, 0), 0.0);
        for p in 0..g.num_points() {
            let v = phi.value(p, 0);
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(cutoff_phi(g, 0.0).is_err());
        assert!(cutoff_phi(g, 1.5).is_err());
    }

    #[test]
    fn bump_psi_plateau_interface_and_gradient() {
        let g = make_grid(1, 64).unwrap();
        let xp = [0.5];
        let xm = [-0.5];
        let psi = bump_psi(g, &xp, &xm, 0.1).unwrap();
        assert_eq!(psi.value(g.nearest_index(&xp), 0), 1.0);
        assert_eq!(psi.value(g.nearest_index(&[0.0]), 0), 0.0);
        let grad = diff1(&psi, 0, DiffMode::Torus);
        assert_eq!(grad.value(g.nearest_index(&xp), 0), 0.0);
        // 3*rho reach must clear the interface
        assert!(bump_psi(g, &[0.2], &xm, 0.1).is_err());
    }

    #[test]
    fn centered_diff_exactness_and_convergence() {
        // f = const -> 0 everywhere
        let g = make_grid(1, 32).unwrap();
        let c = GridFunction::constant(g, 1, 3.5);
        let d = diff1(&c, 0, DiffMode::Torus);
        assert!(d.linf() == 0.0);

        // measured order on sin(2 pi x) is 2.0 +- 0.1 under doubling
        let err_at = |res: usize| -> f64 {
            let g = make_grid(1, res).unwrap();
            let f = GridFunction::sample(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
            let exact = GridFunction::sample(g, |x| {
                2.0 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x[0]).cos()
            });
            diff1(&f, 0, DiffMode::Torus).sub(&exact).linf()
        };
        let (e1, e2) = (err_at(64), err_at(128));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");

        // frozen constant: max error <= C h^2 with C from the Taylor remainder
        // of the centered stencil, C = (2 pi)^3 / 6
        let h = 1.0 / 32.0;
        let c_frozen = (2.0 * std::f64::consts::PI).powi(3) / 6.0;
        assert!(err_at(64) <= c_frozen * h * h * 1.01);
    }

    #[test]
    fn one_sided_diff_exact_on_kink() {
        let g = make_grid(1, 32).unwrap();
        let f = GridFunction::sample(g, |x| x[0].abs());
        let iface = g.nearest_index(&[0.0]);
        let into_omega = diff(&f, 0, DiffScheme::OneSidedIntoOmega);
        let into_comp = diff(&f, 0, DiffScheme::OneSidedIntoOmegaC);
        assert!((into_omega.value(iface, 0) - 1.0).abs() < 1e-13);
        assert!((into_comp.value(iface, 0) + 1.0).abs() < 1e-13);
    }

    #[test]
    fn periodicity_bit_for_bit() {
        let g = make_grid(2, 16).unwrap();
        let f = GridFunction::sample(g, |x| {
            (std::f64::consts::PI * x[0]).sin() + 0.3 * (2.0 * std::f64::consts::PI * x[1]).cos()
        });
        for axis in 0..2 {
            let a = diff1(&f.shift(axis, 3), axis, DiffMode::Torus);
            let b = diff1(&f, axis, DiffMode::Torus).shift(axis, 3);
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn blob_roundtrip_and_csv_shape() {
        let g = make_grid(2, 8).unwrap();
        let f = GridFunction::sample_vector(g, 2, |x, out| {
            out[0] = x[0] + 2.0 * x[1];
            out[1] = x[0] * x[1];
        });
        let back = GridFunction::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(f, back);
        assert!(GridFunction::from_bytes(&f.to_bytes()[..10]).is_err());

        let csv = f.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + g.num_points());
        assert_eq!(lines[0], "x0,x1,c0,c1");
    }

    #[test]
    fn second_diff_symbol_on_fourier_mode() {
        let g = make_grid(1, 64).unwrap();
        let h = g.spacing();
        let f = GridFunction::sample(g, |x| (2.0 * std::f64::consts::PI * x[0]).sin());
        let lam = (2.0 - 2.0 * (2.0 * std::f64::consts::PI * h).cos()) / (h * h);
        let lap = laplacian(&f, DiffMode::Torus);
        let err = lap.axpy(lam, &f).linf();
        assert!(err < 1e-10 * lam, "symbol error {err}");
    }
}
