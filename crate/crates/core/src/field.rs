//! Single neural field: grid geometry, difference-of-Gaussians lateral
//! kernels, the lateral interaction sum, forward-Euler integration and
//! bubble read-out.
//!
//! Activities are stored row-major: cell `(x, y)` lives at `y * width + x`,
//! `x` being the column. All stencils use zero padding at the grid border.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular cell lattice shared by every map of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            width: 40,
            height: 40,
        }
    }
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Grid { width, height })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Signed lookup; `None` outside the grid.
    #[inline]
    pub fn checked_index(&self, x: i64, y: i64) -> Option<usize> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(y as usize * self.width + x as usize)
        }
    }

    /// The foveal cell: integer grid midpoint.
    pub fn center(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }
}

/// Parameters of a difference-of-Gaussians interaction profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DogParams {
    pub a_exc: f64,
    pub sigma_exc: f64,
    pub a_inh: f64,
    pub sigma_inh: f64,
    /// Truncation radius in cells. Omitted means `ceil(3 * sigma_inh)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
}

impl DogParams {
    pub fn effective_radius(&self) -> usize {
        self.radius
            .unwrap_or_else(|| (3.0 * self.sigma_inh).ceil().max(1.0) as usize)
    }

    pub fn build(&self) -> Result<LateralKernel> {
        make_dog_kernel(
            self.a_exc,
            self.sigma_exc,
            self.a_inh,
            self.sigma_inh,
            self.effective_radius(),
        )
    }
}

/// Translation-invariant weight table `w(dx, dy)` for `|dx|, |dy| <= radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct LateralKernel {
    radius: usize,
    table: Vec<f64>,
}

impl LateralKernel {
    /// A kernel with no interaction at all.
    pub fn zero() -> Self {
        LateralKernel {
            radius: 0,
            table: vec![0.0],
        }
    }

    /// Normalised Gaussian (weights sum to 1 before truncation losses are
    /// renormalised away). Used to spread afferent projections.
    pub fn gaussian(sigma: f64, radius: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        let side = 2 * radius + 1;
        let r = radius as i64;
        let mut table = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                let d2 = (dx * dx + dy * dy) as f64;
                table.push((-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        let total: f64 = table.iter().sum();
        table.iter_mut().for_each(|w| *w /= total);
        Ok(LateralKernel { radius, table })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Weight at offset `(dx, dy)`; zero outside the support.
    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        let r = self.radius as i64;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        let side = 2 * r + 1;
        self.table[((dy + r) * side + (dx + r)) as usize]
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|&w| w == 0.0)
    }

    fn side(&self) -> usize {
        2 * self.radius + 1
    }
}

/// Tabulates `A_exc·exp(−d²/2σe²) − A_inh·exp(−d²/2σi²)` over the square
/// of half-width `radius`.
pub fn make_dog_kernel(
    a_exc: f64,
    sigma_exc: f64,
    a_inh: f64,
    sigma_inh: f64,
    radius: usize,
) -> Result<LateralKernel> {
    let finite = [a_exc, sigma_exc, a_inh, sigma_inh]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(Error::InvalidParameter(
            "kernel parameters must be finite".into(),
        ));
    }
    if !(a_exc > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "excitatory amplitude must be > 0, got {a_exc}"
        )));
    }
    if a_inh < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "inhibitory amplitude must be >= 0, got {a_inh}"
        )));
    }
    if !(sigma_exc > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sigma_exc must be > 0, got {sigma_exc}"
        )));
    }
    if !(sigma_inh > sigma_exc) {
        return Err(Error::InvalidParameter(format!(
            "sigma_inh ({sigma_inh}) must exceed sigma_exc ({sigma_exc})"
        )));
    }
    if radius < 1 {
        return Err(Error::InvalidParameter("kernel radius must be >= 1".into()));
    }
    let r = radius as i64;
    let side = 2 * radius + 1;
    let mut table = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            // Same expression for Δ and −Δ, so the table is exactly even.
            let d2 = (dx * dx + dy * dy) as f64;
            let w = a_exc * (-d2 / (2.0 * sigma_exc * sigma_exc)).exp()
                - a_inh * (-d2 / (2.0 * sigma_inh * sigma_inh)).exp();
            table.push(w);
        }
    }
    Ok(LateralKernel { radius, table })
}

/// Correlates `u` with `kernel` under zero padding:
/// `out(x) = Σ_y w(x − y)·u(y)`.
///
/// Sources are visited in row-major order and scattered into `out`, skipping
/// zero cells; the summation order is therefore fixed for a given input.
pub fn convolve_into(grid: Grid, u: &[f64], kernel: &LateralKernel, out: &mut [f64]) {
    debug_assert_eq!(u.len(), grid.len());
    debug_assert_eq!(out.len(), grid.len());
    out.iter_mut().for_each(|v| *v = 0.0);
    if kernel.is_zero() {
        return;
    }
    let (w, h) = (grid.width as i64, grid.height as i64);
    let r = kernel.radius as i64;
    let side = kernel.side();
    for sy in 0..h {
        for sx in 0..w {
            let s = u[(sy * w + sx) as usize];
            if s == 0.0 {
                continue;
            }
            let x0 = (sx - r).max(0);
            let x1 = (sx + r).min(w - 1);
            let y0 = (sy - r).max(0);
            let y1 = (sy + r).min(h - 1);
            for ty in y0..=y1 {
                // Target row ty sees offsets dy = ty − sy.
                let krow = ((ty - sy + r) as usize) * side;
                let kstart = krow + (x0 - sx + r) as usize;
                let n = (x1 - x0 + 1) as usize;
                let weights = &kernel.table[kstart..kstart + n];
                let orow = (ty * w + x0) as usize;
                for (o, &wt) in out[orow..orow + n].iter_mut().zip(weights) {
                    *o += wt * s;
                }
            }
        }
    }
}

/// A neural field `u(x, t)` with its time constant and rectification bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    grid: Grid,
    u: Vec<f64>,
    tau: f64,
    bounds: (f64, f64),
}

impl FieldMap {
    /// Zero field bounded to `[0, 1]`.
    pub fn new(grid: Grid, tau: f64) -> Result<Self> {
        Self::with_bounds(grid, tau, (0.0, 1.0))
    }

    pub fn with_bounds(grid: Grid, tau: f64, bounds: (f64, f64)) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty grid".into()));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time constant must be positive, got {tau}"
            )));
        }
        if !(bounds.0 <= bounds.1) {
            return Err(Error::InvalidParameter(format!(
                "bounds must satisfy u_min <= u_max, got {bounds:?}"
            )));
        }
        Ok(FieldMap {
            grid,
            u: grid.zeros(),
            tau,
            bounds,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn activity(&self) -> &[f64] {
        &self.u
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.u[self.grid.index(x, y)]
    }

    /// Overwrites the state, clamping every cell into the bounds.
    pub fn set_activity(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                found: values.len(),
            });
        }
        let (lo, hi) = self.bounds;
        for (u, &v) in self.u.iter_mut().zip(values) {
            *u = if v.is_finite() { v.clamp(lo, hi) } else { lo };
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.u
            .iter_mut()
            .for_each(|u| *u = 0.0_f64.clamp(self.bounds.0, self.bounds.1));
    }

    pub fn max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.u.iter().sum()
    }

    fn check_rate(&self, params: StepParams) -> Result<f64> {
        let rate = params.dt / self.tau;
        if !(rate < 1.0) || !(rate > 0.0) {
            return Err(Error::Unstable {
                dt: params.dt,
                tau: self.tau,
            });
        }
        Ok(rate)
    }

    /// In-place Euler update given a precomputed lateral term.
    pub(crate) fn advance(
        &mut self,
        lateral: &[f64],
        input: &[f64],
        params: StepParams,
    ) -> Result<()> {
        let rate = self.check_rate(params)?;
        if input.len() != self.grid.len() {
            return Err(Error::GridMismatch {
                expected: self.grid.len(),
                found: input.len(),
            });
        }
        let (lo, hi) = self.bounds;
        for ((u, &l), &i) in self.u.iter_mut().zip(lateral).zip(input) {
            let next = *u + rate * (-*u + l + i);
            // NaN never survives a step.
            *u = if next.is_nan() {
                lo
            } else {
                next.clamp(lo, hi)
            };
        }
        Ok(())
    }
}

/// Time increment shared by all maps of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub dt: f64,
}

/// `L(x) = Σ_y w(x − y)·u(y)` over the grid, zero outside.
pub fn lateral_term(field: &FieldMap, kernel: &LateralKernel) -> Vec<f64> {
    let mut out = field.grid.zeros();
    convolve_into(field.grid, &field.u, kernel, &mut out);
    out
}

/// One explicit Euler step of `τ·du/dt = −u + L + I`, clamped to the bounds.
pub fn euler_step(
    field: &FieldMap,
    input: &[f64],
    kernel: &LateralKernel,
    params: StepParams,
) -> Result<FieldMap> {
    field.check_rate(params)?;
    let lateral = lateral_term(field, kernel);
    let mut next = field.clone();
    next.advance(&lateral, input, params)?;
    Ok(next)
}

/// A connected region of supra-threshold activity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bubble {
    /// Activity-weighted centroid, `(x, y)` in cells.
    pub location: (f64, f64),
    /// Largest activity inside the region.
    pub amplitude: f64,
    pub cells: usize,
}

/// Labels 4-connected components of cells with `u >= threshold`, starting
/// the flood from `seed`.
fn flood(grid: Grid, u: &[f64], threshold: f64, seed: usize, visited: &mut [bool]) -> Bubble {
    let mut stack = vec![seed];
    visited[seed] = true;
    let (mut mass, mut mx, mut my, mut amp, mut cells) = (0.0, 0.0, 0.0, f64::NEG_INFINITY, 0);
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % grid.width) as i64, (i / grid.width) as i64);
        let v = u[i];
        mass += v;
        mx += v * x as f64;
        my += v * y as f64;
        amp = amp.max(v);
        cells += 1;
        for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
            if let Some(j) = grid.checked_index(nx, ny) {
                if !visited[j] && u[j] >= threshold {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let location = if mass > 0.0 {
        (mx / mass, my / mass)
    } else {
        // Non-positive threshold with an all-zero region: fall back to the seed.
        ((seed % grid.width) as f64, (seed / grid.width) as f64)
    };
    Bubble {
        location,
        amplitude: amp,
        cells,
    }
}

/// Centroid of the supra-threshold component holding the global maximum.
pub fn decode_peak(field: &FieldMap, threshold: f64) -> Option<Bubble> {
    let u = &field.u;
    let (imax, &vmax) =
        u.iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
                Some((_, b)) if *b >= *v => best,
                _ => Some((i, v)),
            })?;
    if vmax < threshold {
        return None;
    }
    let mut visited = vec![false; u.len()];
    Some(flood(field.grid, u, threshold, imax, &mut visited))
}

/// All supra-threshold components, strongest first.
pub fn find_bubbles(field: &FieldMap, threshold: f64) -> Vec<Bubble> {
    let u = &field.u;
    let mut visited = vec![false; u.len()];
    let mut out = Vec::new();
    for i in 0..u.len() {
        if !visited[i] && u[i] >= threshold {
            out.push(flood(field.grid, u, threshold, i, &mut visited));
        }
    }
    out.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    out
}
