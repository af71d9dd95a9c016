//! On-disk formats: terrain model JSON, raster height grids, scenario
//! files in engineering units, and optimizer configuration.
//!
//! Scenario files speak dB, dBm, and degrees; everything is converted
//! to linear ratios, watts, and radians at load so the library never
//! sees a logarithmic quantity.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use terradeploy_core::deploy::{ConstraintBounds, FitnessWeights};
use terradeploy_core::energy::{EnergyParams, DEFAULT_ALTITUDE_EXPONENT};
use terradeploy_core::optimizer::{GaConfig, PsoConfig};
use terradeploy_core::scenario::LosParams;
use terradeploy_core::sensing::{AntennaParams, Band, EbdParams, LinkParams, Target};
use terradeploy_core::{Aabb2, GaussianBump, HeightGrid, Point3, Scenario, TerrainModel};

/// Decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

// ---------------------------------------------------------------------------
// Terrain model JSON

#[derive(Deserialize)]
struct TerrainFile {
    base: f64,
    #[serde(default)]
    components: Vec<BumpFile>,
}

#[derive(Deserialize)]
struct BumpFile {
    h: f64,
    mux: f64,
    muy: f64,
    sigx: f64,
    sigy: f64,
}

impl From<BumpFile> for GaussianBump {
    fn from(b: BumpFile) -> Self {
        GaussianBump {
            height: b.h,
            center_x: b.mux,
            center_y: b.muy,
            sigma_x: b.sigx,
            sigma_y: b.sigy,
        }
    }
}

pub fn parse_terrain_json(text: &str) -> Result<TerrainModel> {
    let file: TerrainFile = serde_json::from_str(text).context("parsing terrain JSON")?;
    let model = TerrainModel {
        base: file.base,
        components: file.components.into_iter().map(GaussianBump::from).collect(),
    };
    model.validate().map_err(|e| anyhow!("invalid terrain model: {e}"))?;
    Ok(model)
}

pub fn load_terrain(path: &Path) -> Result<TerrainModel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading terrain model {}", path.display()))?;
    parse_terrain_json(&text).with_context(|| format!("in {}", path.display()))
}

/// Serializes a terrain model with 17 significant digits so that
/// reloading reproduces it bit for bit.
pub fn terrain_to_json(model: &TerrainModel) -> String {
    let mut s = String::new();
    let _ = write!(s, "{{\n  \"base\": {:.16e},\n  \"components\": [", model.base);
    for (i, c) in model.components.iter().enumerate() {
        let sep = if i == 0 { "" } else { "," };
        let _ = write!(
            s,
            "{sep}\n    {{ \"h\": {:.16e}, \"mux\": {:.16e}, \"muy\": {:.16e}, \"sigx\": {:.16e}, \"sigy\": {:.16e} }}",
            c.height, c.center_x, c.center_y, c.sigma_x, c.sigma_y
        );
    }
    if model.components.is_empty() {
        s.push_str("]\n}\n");
    } else {
        s.push_str("\n  ]\n}\n");
    }
    s
}

// ---------------------------------------------------------------------------
// Raster height grids

const DEFAULT_NODATA: f64 = -9999.0;

/// Parses an ESRI ASCII grid. The first data row is the northern edge;
/// cells holding the NODATA value are rejected because the fitter has
/// no hole-filling story.
pub fn parse_esri_ascii(text: &str) -> Result<HeightGrid> {
    let mut tokens = text.split_whitespace().peekable();
    let mut ncols: Option<usize> = None;
    let mut nrows: Option<usize> = None;
    let mut xll: Option<f64> = None;
    let mut yll: Option<f64> = None;
    let mut cell: Option<f64> = None;
    let mut nodata = DEFAULT_NODATA;

    while let Some(&tok) = tokens.peek() {
        let key = tok.to_ascii_lowercase();
        let is_header = matches!(
            key.as_str(),
            "ncols" | "nrows" | "xllcorner" | "yllcorner" | "cellsize" | "nodata_value"
        );
        if !is_header {
            break;
        }
        tokens.next();
        let value = tokens.next().ok_or_else(|| anyhow!("header key {key} has no value"))?;
        match key.as_str() {
            "ncols" => ncols = Some(value.parse().with_context(|| format!("ncols {value}"))?),
            "nrows" => nrows = Some(value.parse().with_context(|| format!("nrows {value}"))?),
            "xllcorner" => xll = Some(value.parse()?),
            "yllcorner" => yll = Some(value.parse()?),
            "cellsize" => cell = Some(value.parse()?),
            "nodata_value" => nodata = value.parse()?,
            _ => unreachable!(),
        }
    }

    let ncols = ncols.ok_or_else(|| anyhow!("missing ncols header"))?;
    let nrows = nrows.ok_or_else(|| anyhow!("missing nrows header"))?;
    let xll = xll.ok_or_else(|| anyhow!("missing xllcorner header"))?;
    let yll = yll.ok_or_else(|| anyhow!("missing yllcorner header"))?;
    let cell = cell.ok_or_else(|| anyhow!("missing cellsize header"))?;

    let mut values = Vec::with_capacity(nrows * ncols);
    for (i, tok) in tokens.enumerate() {
        let v: f64 = tok
            .parse()
            .with_context(|| format!("grid cell {} is not a number: {tok:?}", i))?;
        if v == nodata {
            bail!("NODATA cell at row {} col {}", i / ncols, i % ncols);
        }
        values.push(v);
    }
    if values.len() != nrows * ncols {
        bail!("expected {} cells, found {}", nrows * ncols, values.len());
    }
    HeightGrid::new(xll, yll, cell, nrows, ncols, values)
        .map_err(|e| anyhow!("invalid grid: {e}"))
}

/// Writes an ESRI ASCII grid, northern row first, full precision.
pub fn grid_to_esri_ascii(grid: &HeightGrid) -> String {
    let (ox, oy) = grid.origin();
    let mut s = String::new();
    let _ = writeln!(s, "ncols {}", grid.n_cols());
    let _ = writeln!(s, "nrows {}", grid.n_rows());
    let _ = writeln!(s, "xllcorner {ox}");
    let _ = writeln!(s, "yllcorner {oy}");
    let _ = writeln!(s, "cellsize {}", grid.cell_size());
    let _ = writeln!(s, "NODATA_value {DEFAULT_NODATA}");
    for r in 0..grid.n_rows() {
        for c in 0..grid.n_cols() {
            if c > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:.16e}", grid.value(r, c));
        }
        s.push('\n');
    }
    s
}

/// Parses a bare CSV grid: one grid row per line, northern row first.
/// The file carries no georeferencing, so the origin defaults to (0,0)
/// with a 1 m cell.
pub fn parse_csv_grid(text: &str) -> Result<HeightGrid> {
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0usize;
    for (li, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("line {}: {t:?}", li + 1)))
            .collect::<Result<_>>()?;
        match ncols {
            None => ncols = Some(row.len()),
            Some(n) if n != row.len() => {
                bail!("line {}: expected {} columns, found {}", li + 1, n, row.len())
            }
            _ => {}
        }
        values.extend_from_slice(&row);
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| anyhow!("grid file is empty"))?;
    HeightGrid::new(0.0, 0.0, 1.0, nrows, ncols, values).map_err(|e| anyhow!("invalid grid: {e}"))
}

/// Loads a height grid, dispatching on the file extension:
/// `.asc`/`.txt` ESRI ASCII, `.csv` bare rows.
pub fn load_grid(path: &Path) -> Result<HeightGrid> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading grid {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let grid = match ext.as_str() {
        "asc" | "txt" => parse_esri_ascii(&text),
        "csv" => parse_csv_grid(&text),
        other => bail!("unsupported grid extension {other:?} (expected .asc, .txt, or .csv)"),
    };
    grid.with_context(|| format!("in {}", path.display()))
}

// ---------------------------------------------------------------------------
// Scenario JSON

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    targets: Vec<TargetFile>,
    uav_bands: Vec<[f64; 2]>,
    ebd: EbdFile,
    antenna: AntennaFile,
    link: LinkFile,
    energy: EnergyFile,
    bounds: BoundsFile,
    weights: WeightsFile,
    #[serde(default)]
    los: Option<LosFile>,
    #[serde(default)]
    terrain: Option<TerrainFile>,
    #[serde(default)]
    terrain_path: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    pos: [f64; 3],
    channels: Vec<f64>,
    tx_power_dbm: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EbdFile {
    #[serde(rename = "K")]
    k: u32,
    #[serde(rename = "P_fa")]
    p_fa: f64,
    #[serde(rename = "L")]
    l: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AntennaFile {
    alpha_a_deg: f64,
    alpha_e_deg: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    beta0_db: f64,
    #[serde(rename = "Nt")]
    nt: u32,
    noise_dbm: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyFile {
    #[serde(rename = "P0_w")]
    p0_w: f64,
    #[serde(rename = "Hs_m")]
    hs_m: f64,
    td_s: f64,
    #[serde(rename = "Hsafe_m")]
    hsafe_m: f64,
    #[serde(default = "default_exponent")]
    exponent: f64,
}

fn default_exponent() -> f64 {
    DEFAULT_ALTITUDE_EXPONENT
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    region: [f64; 4],
    #[serde(rename = "Smin_m")]
    smin_m: f64,
    #[serde(rename = "Rmin_m")]
    rmin_m: f64,
    #[serde(rename = "Hsafe_m")]
    hsafe_m: f64,
    #[serde(rename = "Hmax_m")]
    hmax_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct WeightsFile {
    lambda_S: f64,
    lambda_E: f64,
    lambda_pen: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LosFile {
    #[serde(default = "default_ko")]
    ko: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_ko() -> f64 {
    LosParams::default().box_sigmas
}

fn default_epsilon() -> f64 {
    LosParams::default().epsilon
}

/// A scenario plus the terrain it plays out on. Terrain may be inline,
/// referenced by path, or absent (flat ground at elevation zero).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub terrain: TerrainModel,
}

pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    parse_scenario(&text, path.parent()).with_context(|| format!("in {}", path.display()))
}

/// Parses a scenario from JSON text. `dir` anchors a relative
/// `terrain_path`, so it should be the scenario file's directory.
pub fn parse_scenario(text: &str, dir: Option<&Path>) -> Result<LoadedScenario> {
    let file: ScenarioFile = serde_json::from_str(text).context("parsing scenario JSON")?;

    let terrain = match (file.terrain, &file.terrain_path) {
        (Some(_), Some(_)) => bail!("scenario has both terrain and terrain_path; pick one"),
        (Some(t), None) => {
            let model = TerrainModel {
                base: t.base,
                components: t.components.into_iter().map(GaussianBump::from).collect(),
            };
            model.validate().map_err(|e| anyhow!("invalid inline terrain: {e}"))?;
            model
        }
        (None, Some(p)) => {
            let p = Path::new(p);
            let resolved = if p.is_absolute() || dir.is_none() {
                p.to_path_buf()
            } else {
                dir.unwrap().join(p)
            };
            load_terrain(&resolved)?
        }
        (None, None) => TerrainModel::flat(0.0),
    };

    let targets = file
        .targets
        .into_iter()
        .map(|t| Target {
            position: Point3::new(t.pos[0], t.pos[1], t.pos[2]),
            channels: t.channels,
            tx_power: dbm_to_watts(t.tx_power_dbm),
        })
        .collect();

    let uav_bands = file
        .uav_bands
        .into_iter()
        .map(|[lo, hi]| Band { min_mhz: lo, max_mhz: hi })
        .collect();

    let [xmin, xmax, ymin, ymax] = file.bounds.region;
    let scenario = Scenario {
        targets,
        uav_bands,
        ebd: EbdParams {
            samples: file.ebd.k,
            elements: file.ebd.l,
            p_fa: file.ebd.p_fa,
        },
        antenna: AntennaParams {
            beamwidth_az: file.antenna.alpha_a_deg.to_radians(),
            beamwidth_el: file.antenna.alpha_e_deg.to_radians(),
        },
        link: LinkParams {
            ref_gain: db_to_linear(file.link.beta0_db),
            elements: file.link.nt,
            noise_power: dbm_to_watts(file.link.noise_dbm),
        },
        energy: EnergyParams {
            hover_power: file.energy.p0_w,
            scale_height: file.energy.hs_m,
            hover_duration: file.energy.td_s,
            safe_altitude: file.energy.hsafe_m,
            altitude_exponent: file.energy.exponent,
        },
        bounds: ConstraintBounds {
            region: Aabb2::new(xmin, xmax, ymin, ymax),
            min_target_distance: file.bounds.smin_m,
            min_uav_distance: file.bounds.rmin_m,
            safe_altitude: file.bounds.hsafe_m,
            max_altitude: file.bounds.hmax_m,
        },
        weights: FitnessWeights {
            detection: file.weights.lambda_S,
            energy: file.weights.lambda_E,
            penalty: file.weights.lambda_pen,
        },
        los: file
            .los
            .map(|l| LosParams { box_sigmas: l.ko, epsilon: l.epsilon })
            .unwrap_or_default(),
    };
    scenario.validate().map_err(|e| anyhow!("invalid scenario: {e}"))?;
    Ok(LoadedScenario { scenario, terrain })
}

// ---------------------------------------------------------------------------
// Optimizer configuration JSON

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct OptConfigFile {
    ga: GaFile,
    pso: PsoFile,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GaFile {
    population: usize,
    generations: usize,
    mutation_prob: f64,
    elites: usize,
    tournament: usize,
    mutation_deltas: Option<[f64; 5]>,
    full_offspring: bool,
}

impl Default for GaFile {
    fn default() -> Self {
        let d = GaConfig::default();
        Self {
            population: d.population,
            generations: d.generations,
            mutation_prob: d.mutation_prob,
            elites: d.elites,
            tournament: d.tournament,
            mutation_deltas: d.mutation_deltas,
            full_offspring: d.full_offspring,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PsoFile {
    particles: usize,
    iterations: usize,
    inertia_start: f64,
    inertia_end: f64,
    cognitive: f64,
    social: f64,
    passes: usize,
}

impl Default for PsoFile {
    fn default() -> Self {
        let d = PsoConfig::default();
        Self {
            particles: d.particles,
            iterations: d.iterations,
            inertia_start: d.inertia_start,
            inertia_end: d.inertia_end,
            cognitive: d.cognitive,
            social: d.social,
            passes: d.passes,
        }
    }
}

pub fn parse_opt_config(text: &str) -> Result<(GaConfig, PsoConfig)> {
    let file: OptConfigFile = serde_json::from_str(text).context("parsing optimizer config")?;
    let ga = GaConfig {
        population: file.ga.population,
        generations: file.ga.generations,
        mutation_prob: file.ga.mutation_prob,
        elites: file.ga.elites,
        tournament: file.ga.tournament,
        mutation_deltas: file.ga.mutation_deltas,
        full_offspring: file.ga.full_offspring,
    };
    let pso = PsoConfig {
        particles: file.pso.particles,
        iterations: file.pso.iterations,
        inertia_start: file.pso.inertia_start,
        inertia_end: file.pso.inertia_end,
        cognitive: file.pso.cognitive,
        social: file.pso.social,
        passes: file.pso.passes,
    };
    ga.validate().map_err(|e| anyhow!("invalid ga config: {e}"))?;
    pso.validate().map_err(|e| anyhow!("invalid pso config: {e}"))?;
    Ok((ga, pso))
}

/// Loads the optimizer configuration, or the defaults when no path is
/// given.
pub fn load_opt_config(path: Option<&Path>) -> Result<(GaConfig, PsoConfig)> {
    match path {
        None => Ok((GaConfig::default(), PsoConfig::default())),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            parse_opt_config(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

/// A small two-UAV scenario shared by tests across the crate.
#[cfg(test)]
pub fn tests_scenario_text() -> String {
    r#"{
        "targets": [
            {"pos": [500.0, 600.0, 10.0], "channels": [150.0], "tx_power_dbm": 30.0},
            {"pos": [1500.0, 400.0, 0.0], "channels": [120.0, 260.0], "tx_power_dbm": 20.0}
        ],
        "uav_bands": [[100.0, 200.0], [250.0, 350.0]],
        "ebd": {"K": 1000, "P_fa": 0.001, "L": 4},
        "antenna": {"alpha_a_deg": 60.0, "alpha_e_deg": 45.0},
        "link": {"beta0_db": -40.0, "Nt": 4, "noise_dbm": -90.0},
        "energy": {"P0_w": 200.0, "Hs_m": 8000.0, "td_s": 60.0, "Hsafe_m": 50.0},
        "bounds": {"region": [0.0, 3000.0, 0.0, 3000.0], "Smin_m": 300.0, "Rmin_m": 150.0, "Hsafe_m": 50.0, "Hmax_m": 1500.0},
        "weights": {"lambda_S": 2.0, "lambda_E": 0.005, "lambda_pen": 1000000.0}
    }"#
    .to_string()
}
