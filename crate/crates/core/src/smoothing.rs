//! Trivial extension across the interface and the interface-respecting
//! mollifier.
//!
//! The mollifier works per side: field values are reflected evenly across the
//! interface planes (index negation along the normal axis, which reflects
//! about `x^n = 0` and `x^n = +-1` simultaneously), convolved with a compact
//! radial kernel, then the two sides are recombined with the indicator
//! weights. Each side of the result therefore depends only on data from that
//! side, which is what makes the one-sided bounds uniform in the radius.

use crate::grid::{self, GridFunction, Region, TorusGrid};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothError {
    #[error("mollifier radius {0} outside (0, 1]")]
    RadiusOutOfRange(f64),
}

/// Compact nonnegative kernel with unit discrete mass.
///
/// Profile `(1 - (r / 2 lambda)^2)^3` inside radius `2 lambda`; polynomial
/// rather than Gaussian so the support is exactly compact.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    lambda: f64,
    /// integer offsets (per axis) and normalized weights
    taps: Vec<([i64; 3], f64)>,
}

impl MollifierKernel {
    pub fn new(grid: TorusGrid, lambda: f64) -> Result<Self, SmoothError> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(SmoothError::RadiusOutOfRange(lambda));
        }
        let h = grid.spacing();
        let support = 2.0 * lambda;
        let reach = (support / h).ceil() as i64;
        let n = grid.dim();
        let mut taps = Vec::new();
        let mut mass = 0.0;
        let mut offset = [0i64; 3];
        let visit = |o: [i64; 3], taps: &mut Vec<([i64; 3], f64)>, mass: &mut f64| {
            let r2: f64 = o[..n].iter().map(|&d| (d as f64 * h).powi(2)).sum();
            let r = r2.sqrt();
            if r < support {
                let t = r / support;
                let w = (1.0 - t * t).powi(3);
                *mass += w;
                taps.push((o, w));
            }
        };
        match n {
            1 => {
                for a in -reach..=reach {
                    offset[0] = a;
                    visit(offset, &mut taps, &mut mass);
                }
            }
            2 => {
                for a in -reach..=reach {
                    for b in -reach..=reach {
                        offset = [a, b, 0];
                        visit(offset, &mut taps, &mut mass);
                    }
                }
            }
            3 => {
                for a in -reach..=reach {
                    for b in -reach..=reach {
                        for c in -reach..=reach {
                            offset = [a, b, c];
                            visit(offset, &mut taps, &mut mass);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        let vol = grid.cell_volume();
        let norm = mass * vol;
        for tap in &mut taps {
            tap.1 /= norm;
        }
        Ok(MollifierKernel { lambda, taps })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Discrete mass `sum w h^n`; unit up to rounding by construction.
    pub fn mass(&self, grid: TorusGrid) -> f64 {
        self.taps.iter().map(|t| t.1).sum::<f64>() * grid.cell_volume()
    }

    fn convolve(&self, f: &GridFunction) -> GridFunction {
        let g = f.grid();
        let n = g.dim();
        let res = g.resolution() as i64;
        let comps = f.components();
        let vol = g.cell_volume();
        let mut out = GridFunction::zeros(g, comps);
        for p in 0..g.num_points() {
            let d = g.digits(p);
            let mut acc = vec![0.0; comps];
            for (off, w) in &self.taps {
                let mut q = [0usize; 3];
                for axis in 0..n {
                    q[axis] = ((d[axis] as i64 - off[axis]).rem_euclid(res)) as usize;
                }
                let qi = g.index(&q[..n]);
                for c in 0..comps {
                    acc[c] += w * f.value(qi, c);
                }
            }
            for c in 0..comps {
                out.data_mut()[p * comps + c] = acc[c] * vol;
            }
        }
        out
    }
}

/// Even reflection of the named side across both interface planes: along the
/// normal axis the map `j -> -j (mod N)` fixes the planes and carries each
/// open half onto the other.
fn reflect_side(f: &GridFunction, side: Region) -> GridFunction {
    let g = f.grid();
    let res = g.resolution() as i64;
    let comps = f.components();
    let normal = g.normal_axis();
    let mut out = f.clone();
    for p in 0..g.num_points() {
        let here = g.region(p);
        let keep = here == side || here == Region::Interface;
        if keep {
            continue;
        }
        let mut d = g.digits(p);
        d[normal] = ((-(d[normal] as i64)).rem_euclid(res)) as usize;
        let q = g.index(&d[..g.dim()]);
        for c in 0..comps {
            out.set(p, c, f.value(q, c));
        }
    }
    out
}

/// Trivial extension: copy on `Omega`, halve on the interface, zero on the
/// complement. Multiplication by the indicator field.
pub fn extend_zero(f: &GridFunction) -> GridFunction {
    grid::indicator(f.grid()).mul(f)
}

/// Interface-respecting mollifier `J_lambda`: per-side reflection,
/// convolution, and indicator blend.
pub fn mollify(f: &GridFunction, lambda: f64) -> Result<GridFunction, SmoothError> {
    let g = f.grid();
    let kernel = MollifierKernel::new(g, lambda)?;
    let plus = kernel.convolve(&reflect_side(f, Region::Omega));
    let minus = kernel.convolve(&reflect_side(f, Region::OmegaC));
    let chi = grid::indicator(g);
    let chi_c = chi.map(|v| 1.0 - v);
    Ok(chi.mul(&plus).add(&chi_c.mul(&minus)))
}
