//! Terrain as a Gaussian mixture over a flat base plane, plus a fitter
//! that compresses a raster height grid into that form.

use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::math::golden_section_min;
use crate::rng::stream;
use rand::Rng;

/// One elliptical Gaussian elevation component. Negative heights carve
/// valleys into the base plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub height: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl GaussianBump {
    /// Contribution of this component at ground position (x, y).
    pub fn contribution(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        let e = dx * dx / (2.0 * self.sigma_x * self.sigma_x)
            + dy * dy / (2.0 * self.sigma_y * self.sigma_y);
        self.height * (-e).exp()
    }
}

/// Smooth analytic terrain: a base elevation plus a sum of Gaussian bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainModel {
    pub base: f64,
    pub components: Vec<GaussianBump>,
}

impl TerrainModel {
    /// Flat terrain at the given base elevation.
    pub fn flat(base: f64) -> Self {
        Self { base, components: Vec::new() }
    }

    /// Surface elevation at ground position (x, y).
    pub fn elevation(&self, x: f64, y: f64) -> f64 {
        let mut z = self.base;
        for c in &self.components {
            z += c.contribution(x, y);
        }
        z
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if !self.base.is_finite() {
            return Err(TerrainError::NonFinite);
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.sigma_x > 0.0 && c.sigma_y > 0.0) {
                return Err(TerrainError::NonPositiveSigma { index: i });
            }
            if !(c.height.is_finite()
                && c.center_x.is_finite()
                && c.center_y.is_finite()
                && c.sigma_x.is_finite()
                && c.sigma_y.is_finite())
            {
                return Err(TerrainError::NonFinite);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerrainError {
    NonPositiveSigma { index: usize },
    NonFinite,
    EmptyGrid,
    NonPositiveCellSize,
    SizeMismatch { expected: usize, actual: usize },
}

impl fmt::Display for TerrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerrainError::NonPositiveSigma { index } => {
                write!(f, "component {index} has a non-positive sigma")
            }
            TerrainError::NonFinite => write!(f, "terrain parameter is not finite"),
            TerrainError::EmptyGrid => write!(f, "height grid has no cells"),
            TerrainError::NonPositiveCellSize => write!(f, "cell size must be positive"),
            TerrainError::SizeMismatch { expected, actual } => {
                write!(f, "grid expects {expected} values, got {actual}")
            }
        }
    }
}

impl core::error::Error for TerrainError {}

/// A regular raster of elevation samples. Row 0 is the northernmost row;
/// `(origin_x, origin_y)` is the outer corner of the south-west cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightGrid {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl HeightGrid {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        n_rows: usize,
        n_cols: usize,
        values: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if n_rows == 0 || n_cols == 0 {
            return Err(TerrainError::EmptyGrid);
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(TerrainError::NonPositiveCellSize);
        }
        if values.len() != n_rows * n_cols {
            return Err(TerrainError::SizeMismatch {
                expected: n_rows * n_cols,
                actual: values.len(),
            });
        }
        if !(origin_x.is_finite() && origin_y.is_finite()) || values.iter().any(|v| !v.is_finite())
        {
            return Err(TerrainError::NonFinite);
        }
        Ok(Self { origin_x, origin_y, cell_size, n_rows, n_cols, values })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    /// Ground coordinates of the cell center. Row index grows southwards,
    /// y grows northwards.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.origin_x + (col as f64 + 0.5) * self.cell_size;
        let y = self.origin_y + ((self.n_rows - 1 - row) as f64 + 0.5) * self.cell_size;
        (x, y)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Root-mean-square misfit of a terrain model against a height grid,
/// evaluated at cell centers.
pub fn model_rmse(model: &TerrainModel, grid: &HeightGrid) -> f64 {
    let mut sse = 0.0;
    for r in 0..grid.n_rows {
        for c in 0..grid.n_cols {
            let (x, y) = grid.cell_center(r, c);
            let d = grid.value(r, c) - model.elevation(x, y);
            sse += d * d;
        }
    }
    (sse / grid.values.len() as f64).sqrt()
}

/// Knobs for [`fit_gaussians`].
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Full coordinate-descent passes over all components.
    pub rounds: u32,
    /// Golden-section iterations per scalar parameter.
    pub golden_iters: u32,
    /// Initial bump sigma, in cell sizes.
    pub sigma_init_cells: f64,
    /// Lower sigma bound during refinement, in cell sizes.
    pub min_sigma_cells: f64,
    /// Extra randomly perturbed fits; the best result wins.
    pub restarts: u32,
    /// Relative SSE improvement below which refinement stops early.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rounds: 12,
            golden_iters: 35,
            sigma_init_cells: 2.0,
            min_sigma_cells: 0.3,
            restarts: 0,
            tol: 1e-12,
        }
    }
}

struct FitState<'g> {
    grid: &'g HeightGrid,
    base: f64,
    centers: Vec<(f64, f64)>,
    /// grid value minus base minus all current components, per cell.
    residual: Vec<f64>,
}

impl<'g> FitState<'g> {
    fn new(grid: &'g HeightGrid, base: f64) -> Self {
        let mut centers = Vec::with_capacity(grid.values.len());
        for r in 0..grid.n_rows {
            for c in 0..grid.n_cols {
                centers.push(grid.cell_center(r, c));
            }
        }
        let residual = grid.values.iter().map(|v| v - base).collect();
        Self { grid, base, centers, residual }
    }

    /// Moves the base to its least-squares optimum for the current
    /// components by absorbing the mean residual.
    fn rebalance_base(&mut self) {
        let mean = self.residual.iter().sum::<f64>() / self.residual.len() as f64;
        self.base += mean;
        for r in &mut self.residual {
            *r -= mean;
        }
    }

    fn apply(&mut self, bump: &GaussianBump, sign: f64) {
        for (r, &(x, y)) in self.residual.iter_mut().zip(&self.centers) {
            *r += sign * bump.contribution(x, y);
        }
    }

    /// SSE if `bump` replaced the component currently removed from the
    /// residual.
    fn sse_with(&self, bump: &GaussianBump) -> f64 {
        let mut sse = 0.0;
        for (r, &(x, y)) in self.residual.iter().zip(&self.centers) {
            let d = r - bump.contribution(x, y);
            sse += d * d;
        }
        sse
    }

    fn sse(&self) -> f64 {
        self.residual.iter().map(|r| r * r).sum()
    }

    /// Cell index with the largest absolute residual; first wins on ties.
    fn peak(&self) -> usize {
        let mut best = 0;
        let mut best_abs = self.residual[0].abs();
        for (i, r) in self.residual.iter().enumerate().skip(1) {
            if r.abs() > best_abs {
                best = i;
                best_abs = r.abs();
            }
        }
        best
    }
}

fn refine_component(
    state: &mut FitState<'_>,
    bump: &mut GaussianBump,
    cfg: &FitConfig,
    sigma_floor: f64,
) {
    state.apply(bump, 1.0);
    let mut current = *bump;
    let mut current_sse = state.sse_with(&current);
    let residual_peak = state
        .residual
        .iter()
        .fold(0.0_f64, |m, r| m.max(r.abs()));

    for param in 0..5 {
        let (lo, hi) = match param {
            0 => {
                let hw = current.height.abs().max(residual_peak).max(1e-9);
                (current.height - hw, current.height + hw)
            }
            1 => (current.center_x - 2.0 * current.sigma_x, current.center_x + 2.0 * current.sigma_x),
            2 => (current.center_y - 2.0 * current.sigma_y, current.center_y + 2.0 * current.sigma_y),
            3 => ((current.sigma_x / 3.0).max(sigma_floor), current.sigma_x * 3.0),
            4 => ((current.sigma_y / 3.0).max(sigma_floor), current.sigma_y * 3.0),
            _ => unreachable!(),
        };
        let (best_v, best_sse) = golden_section_min(
            |v| {
                let mut cand = current;
                match param {
                    0 => cand.height = v,
                    1 => cand.center_x = v,
                    2 => cand.center_y = v,
                    3 => cand.sigma_x = v,
                    4 => cand.sigma_y = v,
                    _ => unreachable!(),
                }
                state.sse_with(&cand)
            },
            lo,
            hi,
            cfg.golden_iters,
        );
        // strict improvement only, so refinement can never worsen the fit
        if best_sse < current_sse - cfg.tol * (1.0 + current_sse) {
            match param {
                0 => current.height = best_v,
                1 => current.center_x = best_v,
                2 => current.center_y = best_v,
                3 => current.sigma_x = best_v,
                4 => current.sigma_y = best_v,
                _ => unreachable!(),
            }
            current_sse = best_sse;
        }
    }

    *bump = current;
    state.apply(bump, -1.0);
}

fn refine_all(state: &mut FitState<'_>, comps: &mut [GaussianBump], cfg: &FitConfig) {
    let sigma_floor = cfg.min_sigma_cells * state.grid.cell_size;
    let mut prev_sse = state.sse();
    for _ in 0..cfg.rounds {
        for bump in comps.iter_mut() {
            refine_component(state, bump, cfg, sigma_floor);
        }
        state.rebalance_base();
        let sse = state.sse();
        if prev_sse - sse <= cfg.tol * (1.0 + prev_sse) {
            break;
        }
        prev_sse = sse;
    }
}

/// Fits `count` Gaussian bumps to a height grid.
///
/// The base plane starts at the grid median, a robust estimate of the
/// plain level that keeps valleys representable as negative bumps, and
/// moves to its least-squares optimum after every refinement round.
/// Components are seeded greedily at the largest absolute residual,
/// then locally refined by coordinate-wise golden-section search. With
/// `cfg.restarts > 0` the seeded parameters are additionally perturbed
/// `restarts` times using streams derived from `seed`, and the best
/// fit wins. The result is deterministic for fixed inputs. Returns the
/// model and its RMSE against the grid.
pub fn fit_gaussians(
    grid: &HeightGrid,
    count: usize,
    cfg: &FitConfig,
    seed: u64,
) -> (TerrainModel, f64) {
    let base = {
        let mut sorted = grid.values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    };
    let mut state = FitState::new(grid, base);

    let sigma_init = cfg.sigma_init_cells * grid.cell_size;
    let sigma_floor = cfg.min_sigma_cells * grid.cell_size;
    let mut seeded = Vec::with_capacity(count);
    for _ in 0..count {
        let peak = state.peak();
        let (x, y) = state.centers[peak];
        let mut bump = GaussianBump {
            height: state.residual[peak],
            center_x: x,
            center_y: y,
            sigma_x: sigma_init,
            sigma_y: sigma_init,
        };
        state.apply(&bump, -1.0);
        // shape the fresh component to the residual right away, so the
        // next peak search sees this feature mostly absorbed instead of
        // re-seeding its leftovers
        refine_component(&mut state, &mut bump, cfg, sigma_floor);
        refine_component(&mut state, &mut bump, cfg, sigma_floor);
        seeded.push(bump);
    }

    let mut best = seeded.clone();
    refine_all(&mut state, &mut best, cfg);
    let mut best_sse = state.sse();
    let mut best_base = state.base;

    for restart in 1..=cfg.restarts {
        let mut rng = stream(seed, "fit-restart", &[restart as u64]);
        let mut comps = seeded.clone();
        let mut state = FitState::new(grid, base);
        for bump in &mut comps {
            bump.height *= rng.gen_range(0.9..=1.1);
            bump.center_x += bump.sigma_x * rng.gen_range(-0.5..=0.5);
            bump.center_y += bump.sigma_y * rng.gen_range(-0.5..=0.5);
            bump.sigma_x *= rng.gen_range(0.8..=1.25);
            bump.sigma_y *= rng.gen_range(0.8..=1.25);
            state.apply(bump, -1.0);
        }
        refine_all(&mut state, &mut comps, cfg);
        let sse = state.sse();
        if sse < best_sse {
            best = comps;
            best_sse = sse;
            best_base = state.base;
        }
    }

    let model = TerrainModel { base: best_base, components: best };
    let rmse = model_rmse(&model, grid);
    (model, rmse)
}
