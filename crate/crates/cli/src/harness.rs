//! Monte Carlo experiment harness: runs deployment schemes across
//! fleet sizes and seeds, collects per-run records, and emits
//! machine-readable reports.
//!
//! Scheduling never touches the numbers. Every seed is derived up
//! front from the plan, records are slotted by plan index, and floats
//! are printed with 17 significant digits, so reports are byte
//! identical at any worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use terradeploy_core::deploy::DeployError;
use terradeploy_core::optimizer::{
    baseline_non_optimized, baseline_pso_only, optimize, GaConfig, OptimizeOutcome, PsoConfig,
};
use terradeploy_core::rng::{stream, stream_seed};
use terradeploy_core::sensing::{Band, Target};
use terradeploy_core::{Aabb2, Scenario, TerrainContext, TerrainModel};
use rand::Rng;

use crate::formats::{parse_scenario, LoadedScenario};

const PLACEMENT_ATTEMPTS: usize = 10_000;

// ---------------------------------------------------------------------------
// Plan

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    GaPso,
    PsoOnly,
    NonOptimized,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::GaPso => "ga_pso",
            Scheme::PsoOnly => "pso_only",
            Scheme::NonOptimized => "non_optimized",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ga_pso" => Ok(Scheme::GaPso),
            "pso_only" => Ok(Scheme::PsoOnly),
            "non_optimized" => Ok(Scheme::NonOptimized),
            other => bail!("unknown scheme {other:?} (expected ga_pso, pso_only, non_optimized)"),
        }
    }
}

/// Where randomized targets land. Fixed keeps the template positions;
/// uniform placement redraws (x, y) per run inside `region` (the
/// deployable region when absent) while keeping template altitudes,
/// channels, and powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetPlacement {
    Fixed,
    UniformRandom { region: Option<Aabb2> },
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub scenario: LoadedScenario,
    pub schemes: Vec<Scheme>,
    pub uav_counts: Vec<usize>,
    pub runs: usize,
    pub placement: TargetPlacement,
    pub root_seed: u64,
    pub ga: GaConfig,
    pub pso: PsoConfig,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            bail!("plan needs at least one scheme");
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                bail!("scheme {} listed twice", s.name());
            }
        }
        if self.uav_counts.is_empty() {
            bail!("plan needs at least one UAV count");
        }
        if self.uav_counts.iter().any(|&m| m == 0) {
            bail!("UAV counts must be positive");
        }
        if self.runs == 0 {
            bail!("plan needs at least one run");
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    scenario: serde_json::Value,
    schemes: Vec<String>,
    uav_counts: Vec<usize>,
    runs: usize,
    #[serde(default)]
    target_placement: Option<PlacementFile>,
    root_seed: u64,
    #[serde(default)]
    ga: Option<serde_json::Value>,
    #[serde(default)]
    pso: Option<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlacementFile {
    Name(String),
    Uniform {
        uniform_random: UniformFile,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UniformFile {
    #[serde(default)]
    region: Option<[f64; 4]>,
}

pub fn parse_plan(text: &str, dir: Option<&Path>) -> Result<ExperimentPlan> {
    let file: PlanFile = serde_json::from_str(text).context("parsing experiment plan")?;

    let scenario = match &file.scenario {
        serde_json::Value::String(path) => {
            let p = Path::new(path);
            let resolved = if p.is_absolute() || dir.is_none() {
                p.to_path_buf()
            } else {
                dir.unwrap().join(p)
            };
            crate::formats::load_scenario(&resolved)?
        }
        inline @ serde_json::Value::Object(_) => {
            parse_scenario(&inline.to_string(), dir).context("inline scenario")?
        }
        _ => bail!("scenario must be a path string or an inline scenario object"),
    };

    let schemes = file
        .schemes
        .iter()
        .map(|s| Scheme::from_name(s))
        .collect::<Result<Vec<_>>>()?;

    let placement = match file.target_placement {
        None => TargetPlacement::Fixed,
        Some(PlacementFile::Name(name)) => match name.as_str() {
            "fixed" => TargetPlacement::Fixed,
            "uniform_random" => TargetPlacement::UniformRandom { region: None },
            other => bail!("unknown target placement {other:?}"),
        },
        Some(PlacementFile::Uniform { uniform_random }) => TargetPlacement::UniformRandom {
            region: uniform_random.region.map(|[a, b, c, d]| Aabb2::new(a, b, c, d)),
        },
    };

    let opt_text = serde_json::json!({
        "ga": file.ga.unwrap_or(serde_json::json!({})),
        "pso": file.pso.unwrap_or(serde_json::json!({})),
    });
    let (ga, pso) = crate::formats::parse_opt_config(&opt_text.to_string())?;

    let plan = ExperimentPlan {
        scenario,
        schemes,
        uav_counts: file.uav_counts,
        runs: file.runs,
        placement,
        root_seed: file.root_seed,
        ga,
        pso,
    };
    plan.validate()?;
    Ok(plan)
}

pub fn load_plan(path: &Path) -> Result<ExperimentPlan> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
    parse_plan(&text, path.parent()).with_context(|| format!("in {}", path.display()))
}

// ---------------------------------------------------------------------------
// Records

/// One scheme execution on one scenario instance. Failed runs carry a
/// diagnostic in `error` and NaN metrics; they never abort the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scheme: &'static str,
    pub m: usize,
    pub run: usize,
    pub seed: u64,
    pub scenario_hash: String,
    pub p_sum: f64,
    pub e_avg_ex: f64,
    pub fitness: f64,
    pub feasible: bool,
    pub error: String,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Canonical text form of a scenario instance; the run record stores
/// its FNV-1a hash so paired runs can be verified to have seen the
/// same inputs.
fn canonical_scenario_string(s: &Scenario, terrain: &TerrainModel) -> String {
    let mut t = String::new();
    for tg in &s.targets {
        let _ = write!(t, "t {:.16e} {:.16e} {:.16e} {:.16e};", tg.position.x, tg.position.y, tg.position.z, tg.tx_power);
        for c in &tg.channels {
            let _ = write!(t, " {:.16e}", c);
        }
        t.push('\n');
    }
    for b in &s.uav_bands {
        let _ = writeln!(t, "b {:.16e} {:.16e}", b.min_mhz, b.max_mhz);
    }
    let _ = writeln!(t, "ebd {} {} {:.16e}", s.ebd.samples, s.ebd.elements, s.ebd.p_fa);
    let _ = writeln!(t, "ant {:.16e} {:.16e}", s.antenna.beamwidth_az, s.antenna.beamwidth_el);
    let _ = writeln!(t, "link {:.16e} {} {:.16e}", s.link.ref_gain, s.link.elements, s.link.noise_power);
    let _ = writeln!(
        t,
        "energy {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
        s.energy.hover_power, s.energy.scale_height, s.energy.hover_duration, s.energy.safe_altitude, s.energy.altitude_exponent
    );
    let _ = writeln!(
        t,
        "bounds {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
        s.bounds.region.min_x, s.bounds.region.max_x, s.bounds.region.min_y, s.bounds.region.max_y,
        s.bounds.min_target_distance, s.bounds.min_uav_distance, s.bounds.safe_altitude, s.bounds.max_altitude
    );
    let _ = writeln!(t, "weights {:.16e} {:.16e} {:.16e}", s.weights.detection, s.weights.energy, s.weights.penalty);
    let _ = writeln!(t, "los {:.16e} {:.16e}", s.los.box_sigmas, s.los.epsilon);
    let _ = writeln!(t, "terrain {:.16e}", terrain.base);
    for c in &terrain.components {
        let _ = writeln!(
            t,
            "g {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            c.height, c.center_x, c.center_y, c.sigma_x, c.sigma_y
        );
    }
    t
}

// ---------------------------------------------------------------------------
// Execution

struct Job {
    scheme: Scheme,
    m: usize,
    run: usize,
    seed: u64,
}

/// Draws per-run target positions: uniform (x, y) in the placement
/// box, rejected until the point keeps at least the UAV-target
/// separation from the deployable region boundary, at the template
/// target's altitude.
fn sample_targets(
    template: &[Target],
    bounds: &terradeploy_core::deploy::ConstraintBounds,
    placement_region: Option<&Aabb2>,
    root_seed: u64,
    m: usize,
    run: usize,
) -> Result<Vec<Target>> {
    let sub = placement_region.unwrap_or(&bounds.region);
    let margin = bounds.min_target_distance;
    let r = &bounds.region;
    let mut rng = stream(root_seed, "targets", &[m as u64, run as u64]);
    let mut out = Vec::with_capacity(template.len());
    for t in template {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.gen_range(sub.min_x..=sub.max_x);
            let y = rng.gen_range(sub.min_y..=sub.max_y);
            let inside = x - r.min_x >= margin
                && r.max_x - x >= margin
                && y - r.min_y >= margin
                && r.max_y - y >= margin;
            if inside {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) = placed.ok_or_else(|| {
            anyhow!(
                "could not place a target at least {margin} m inside the region after {PLACEMENT_ATTEMPTS} draws"
            )
        })?;
        let mut t = t.clone();
        t.position.x = x;
        t.position.y = y;
        out.push(t);
    }
    Ok(out)
}

/// The scenario a given (m, run) job actually optimizes: template
/// bands cycled out to m UAVs, targets resampled when the plan asks
/// for random placement. Identical across schemes by construction.
fn instantiate_scenario(plan: &ExperimentPlan, m: usize, run: usize) -> Result<Scenario> {
    let template = &plan.scenario.scenario;
    let bands: Vec<Band> =
        (0..m).map(|i| template.uav_bands[i % template.uav_bands.len()]).collect();
    let targets = match plan.placement {
        TargetPlacement::Fixed => template.targets.clone(),
        TargetPlacement::UniformRandom { ref region } => sample_targets(
            &template.targets,
            &template.bounds,
            region.as_ref(),
            plan.root_seed,
            m,
            run,
        )?,
    };
    let mut s = template.clone();
    s.uav_bands = bands;
    s.targets = targets;
    s.validate().map_err(|e| anyhow!("instantiated scenario invalid: {e}"))?;
    Ok(s)
}

fn run_job(plan: &ExperimentPlan, tc: &TerrainContext<'_>, job: &Job) -> RunRecord {
    let mut record = RunRecord {
        scheme: job.scheme.name(),
        m: job.m,
        run: job.run,
        seed: job.seed,
        scenario_hash: String::new(),
        p_sum: f64::NAN,
        e_avg_ex: f64::NAN,
        fitness: f64::NAN,
        feasible: false,
        error: String::new(),
    };
    let scenario = match instantiate_scenario(plan, job.m, job.run) {
        Ok(s) => s,
        Err(e) => {
            record.error = format!("{e:#}");
            return record;
        }
    };
    record.scenario_hash =
        format!("{:016x}", fnv1a64(canonical_scenario_string(&scenario, tc.terrain).as_bytes()));

    let outcome: Result<OptimizeOutcome, DeployError> = match job.scheme {
        Scheme::GaPso => optimize(&scenario, tc, &plan.ga, &plan.pso, job.seed),
        Scheme::PsoOnly => baseline_pso_only(&scenario, tc, &plan.pso, job.seed),
        Scheme::NonOptimized => baseline_non_optimized(&scenario, tc),
    };
    match outcome {
        Ok(out) => {
            record.p_sum = out.report.p_sum;
            record.e_avg_ex = out.report.avg_excess_energy;
            record.fitness = out.report.fitness;
            record.feasible = out.report.violations.is_feasible();
        }
        Err(e) => record.error = e.to_string(),
    }
    record
}

/// Executes every (scheme, m, run) cell of the plan on up to `workers`
/// threads. Record order and content are independent of the worker
/// count.
pub fn run_experiment(plan: &ExperimentPlan, workers: usize) -> Result<Vec<RunRecord>> {
    plan.validate()?;
    let jobs: Vec<Job> = plan
        .schemes
        .iter()
        .flat_map(|&scheme| {
            plan.uav_counts.iter().flat_map(move |&m| {
                (0..plan.runs).map(move |run| Job {
                    scheme,
                    m,
                    run,
                    seed: stream_seed(plan.root_seed, scheme.name(), &[m as u64, run as u64]),
                })
            })
        })
        .collect();

    let tc = TerrainContext::new(&plan.scenario.terrain, &plan.scenario.scenario.los);
    let workers = workers.max(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<RunRecord>>> = (0..jobs.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= jobs.len() {
                    break;
                }
                let record = run_job(plan, &tc, &jobs[idx]);
                *slots[idx].lock().unwrap() = Some(record);
            });
        }
    });

    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every job slot filled"))
        .collect())
}

// ---------------------------------------------------------------------------
// Statistics

/// Student-t confidence interval: mean and half-width at the given
/// two-sided level.
pub fn confidence_interval(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        bail!("confidence interval needs at least 2 samples, got {n}");
    }
    if !(level > 0.0 && level < 1.0) {
        bail!("confidence level must lie in (0,1), got {level}");
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .expect("valid t distribution")
        .inverse_cdf((1.0 + level) / 2.0);
    Ok((mean, t * var.sqrt() / nf.sqrt()))
}

pub fn median(samples: &[f64]) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Serialize, PartialEq)]
struct MetricSummary {
    mean: f64,
    ci_half_width: Option<f64>,
    median: f64,
}

#[derive(Debug, Serialize, PartialEq)]
struct GroupSummary {
    p_sum: MetricSummary,
    e_avg_ex: MetricSummary,
    runs: usize,
    failed: usize,
}

const CI_LEVEL: f64 = 0.95;

fn summarize_metric(values: &[f64]) -> MetricSummary {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ci = if values.len() >= 2 {
        Some(confidence_interval(values, CI_LEVEL).expect("n >= 2").1)
    } else {
        None
    };
    MetricSummary { mean, ci_half_width: ci, median: median(values) }
}

type SummaryTree = BTreeMap<String, BTreeMap<String, GroupSummary>>;

fn group_records(records: &[RunRecord]) -> Result<SummaryTree> {
    let mut grouped: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry((r.scheme.to_string(), r.m)).or_default().push(r);
    }
    let mut tree: SummaryTree = BTreeMap::new();
    for ((scheme, m), rs) in grouped {
        let ok: Vec<&&RunRecord> = rs.iter().filter(|r| r.ok()).collect();
        if ok.is_empty() {
            bail!("every run failed for scheme {scheme}, M={m}");
        }
        let p: Vec<f64> = ok.iter().map(|r| r.p_sum).collect();
        let e: Vec<f64> = ok.iter().map(|r| r.e_avg_ex).collect();
        tree.entry(scheme).or_default().insert(
            m.to_string(),
            GroupSummary {
                p_sum: summarize_metric(&p),
                e_avg_ex: summarize_metric(&e),
                runs: rs.len(),
                failed: rs.len() - ok.len(),
            },
        );
    }
    Ok(tree)
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scheme",
        "m",
        "run",
        "seed",
        "scenario_hash",
        "p_sum",
        "e_avg_ex",
        "fitness",
        "feasible",
        "error",
    ])
    .expect("header");
    for r in records {
        let metric = |x: f64| if x.is_nan() && !r.ok() { String::new() } else { format!("{x:.16e}") };
        w.write_record([
            r.scheme.to_string(),
            r.m.to_string(),
            r.run.to_string(),
            r.seed.to_string(),
            r.scenario_hash.clone(),
            metric(r.p_sum),
            metric(r.e_avg_ex),
            metric(r.fitness),
            r.feasible.to_string(),
            r.error.clone(),
        ])
        .expect("record");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("runs.csv data row {}", i + 1))?;
        if row.len() != 10 {
            bail!("runs.csv data row {}: expected 10 columns, found {}", i + 1, row.len());
        }
        let error = row[9].to_string();
        let metric = |field: &str, name: &str| -> Result<f64> {
            if field.is_empty() && !error.is_empty() {
                Ok(f64::NAN)
            } else {
                field.parse::<f64>().with_context(|| format!("row {}: bad {name} {field:?}", i + 1))
            }
        };
        out.push(RunRecord {
            scheme: Scheme::from_name(&row[0])?.name(),
            m: row[1].parse().with_context(|| format!("row {}: bad m", i + 1))?,
            run: row[2].parse().with_context(|| format!("row {}: bad run", i + 1))?,
            seed: row[3].parse().with_context(|| format!("row {}: bad seed", i + 1))?,
            scenario_hash: row[4].to_string(),
            p_sum: metric(&row[5], "p_sum")?,
            e_avg_ex: metric(&row[6], "e_avg_ex")?,
            fitness: metric(&row[7], "fitness")?,
            feasible: match &row[8] {
                "true" => true,
                "false" => false,
                other => bail!("row {}: bad feasible {other:?}", i + 1),
            },
            error,
        });
    }
    Ok(out)
}

pub fn summary_json(records: &[RunRecord]) -> Result<String> {
    let tree = group_records(records)?;
    let mut s = serde_json::to_string_pretty(&tree).expect("serializable");
    s.push('\n');
    Ok(s)
}

/// Metric-versus-fleet-size curves, one row per (scheme, m, metric),
/// ready for external plotting.
pub fn curves_csv(records: &[RunRecord]) -> Result<String> {
    let tree = group_records(records)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scheme", "m", "metric", "mean", "ci_half_width"]).expect("header");
    for (scheme, by_m) in &tree {
        let mut ms: Vec<usize> =
            by_m.keys().map(|k| k.parse().expect("m keys are integers")).collect();
        ms.sort_unstable();
        for m in ms {
            let g = &by_m[&m.to_string()];
            for (metric, stats) in [("p_sum", &g.p_sum), ("e_avg_ex", &g.e_avg_ex)] {
                w.write_record([
                    scheme.clone(),
                    m.to_string(),
                    metric.to_string(),
                    format!("{:.16e}", stats.mean),
                    stats.ci_half_width.map(|c| format!("{c:.16e}")).unwrap_or_default(),
                ])
                .expect("record");
            }
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("flush")).expect("utf8"))
}

/// Writes runs.csv, summary.json, and curves.csv into `out_dir`.
/// Existing files are clobbered only with `force`.
pub fn emit_report(records: &[RunRecord], out_dir: &Path, force: bool) -> Result<()> {
    if records.is_empty() {
        bail!("no records to report");
    }
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let files = [
        ("runs.csv", runs_csv(records)),
        ("summary.json", summary_json(records)?),
        ("curves.csv", curves_csv(records)?),
    ];
    if !force {
        for (name, _) in &files {
            let p = out_dir.join(name);
            if p.exists() {
                bail!("{} already exists; pass --force to overwrite", p.display());
            }
        }
    }
    for (name, content) in files {
        let p = out_dir.join(name);
        fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::GaPso, Scheme::PsoOnly, Scheme::NonOptimized] {
            assert_eq!(Scheme::from_name(s.name()).unwrap(), s);
        }
        assert!(Scheme::from_name("ga-pso").is_err());
    }

    #[test]
    fn confidence_interval_zero_variance() {
        let (mean, half) = confidence_interval(&[3.5; 8], 0.95).unwrap();
        assert_eq!(mean, 3.5);
        assert_eq!(half, 0.0);
    }

    #[test]
    fn confidence_interval_matches_alternating_sequence_oracle() {
        // 0,1,0,1,... with n=100: mean 0.5, s = sqrt(25/99) = 0.502519,
        // t_{99,0.975} = 1.9842169515086832 from a reference table.
        let samples: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let (mean, half) = confidence_interval(&samples, 0.95).unwrap();
        assert_eq!(mean, 0.5);
        let s = (25.0 / 99.0f64).sqrt();
        let expected = 1.9842169515086832 * s / 10.0;
        assert!((half - expected).abs() < 1e-9, "half {half} vs {expected}");
        assert!((half - 0.0997).abs() < 2e-4);
    }

    #[test]
    fn confidence_interval_widens_with_level() {
        let samples = [1.0, 2.0, 4.0, 8.0, 9.0];
        let (_, h95) = confidence_interval(&samples, 0.95).unwrap();
        let (_, h99) = confidence_interval(&samples, 0.99).unwrap();
        assert!(h99 > h95);
    }

    #[test]
    fn confidence_interval_rejects_tiny_samples() {
        assert!(confidence_interval(&[1.0], 0.95).is_err());
        assert!(confidence_interval(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    fn record(scheme: Scheme, m: usize, run: usize, p: f64) -> RunRecord {
        RunRecord {
            scheme: scheme.name(),
            m,
            run,
            seed: 7,
            scenario_hash: "00ff".into(),
            p_sum: p,
            e_avg_ex: 2.0 * p,
            fitness: p - 1.0,
            feasible: true,
            error: String::new(),
        }
    }

    #[test]
    fn runs_csv_round_trips_records_exactly() {
        let mut failed = record(Scheme::PsoOnly, 3, 1, f64::NAN);
        failed.e_avg_ex = f64::NAN;
        failed.fitness = f64::NAN;
        failed.feasible = false;
        failed.error = "it broke, badly".into();
        let records = vec![
            record(Scheme::GaPso, 2, 0, 1.0 / 3.0),
            record(Scheme::GaPso, 2, 1, 0.7251),
            failed,
        ];
        let text = runs_csv(&records);
        let back = parse_runs_csv(&text).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.scheme, b.scheme);
            assert_eq!(a.m, b.m);
            assert_eq!(a.run, b.run);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.scenario_hash, b.scenario_hash);
            assert_eq!(a.feasible, b.feasible);
            assert_eq!(a.error, b.error);
            if a.ok() {
                assert_eq!(a.p_sum.to_bits(), b.p_sum.to_bits());
                assert_eq!(a.e_avg_ex.to_bits(), b.e_avg_ex.to_bits());
                assert_eq!(a.fitness.to_bits(), b.fitness.to_bits());
            } else {
                assert!(b.p_sum.is_nan());
            }
        }
        // The comma inside the error message survives quoting.
        assert!(text.contains("\"it broke, badly\""));
    }

    #[test]
    fn summary_means_match_hand_arithmetic() {
        let records = vec![
            record(Scheme::GaPso, 2, 0, 1.0),
            record(Scheme::GaPso, 2, 1, 3.0),
            record(Scheme::NonOptimized, 2, 0, 0.5),
            record(Scheme::NonOptimized, 2, 1, 0.7),
        ];
        let text = summary_json(&records).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["ga_pso"]["2"]["p_sum"]["mean"].as_f64().unwrap(), 2.0);
        assert_eq!(v["ga_pso"]["2"]["e_avg_ex"]["mean"].as_f64().unwrap(), 4.0);
        assert_eq!(v["ga_pso"]["2"]["runs"].as_u64().unwrap(), 2);
        assert_eq!(v["ga_pso"]["2"]["failed"].as_u64().unwrap(), 0);
        assert_eq!(v["non_optimized"]["2"]["p_sum"]["median"].as_f64().unwrap(), 0.6);
    }

    #[test]
    fn single_run_groups_report_null_ci() {
        let records = vec![record(Scheme::GaPso, 2, 0, 1.0)];
        let text = summary_json(&records).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(v["ga_pso"]["2"]["p_sum"]["ci_half_width"].is_null());
    }

    #[test]
    fn curves_order_schemes_and_counts() {
        let records = vec![
            record(Scheme::PsoOnly, 3, 0, 1.0),
            record(Scheme::PsoOnly, 2, 0, 1.0),
            record(Scheme::GaPso, 2, 0, 1.0),
        ];
        let text = curves_csv(&records).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scheme,m,metric,mean,ci_half_width");
        assert!(lines[1].starts_with("ga_pso,2,p_sum"));
        assert!(lines[2].starts_with("ga_pso,2,e_avg_ex"));
        assert!(lines[3].starts_with("pso_only,2,p_sum"));
        assert!(lines[5].starts_with("pso_only,3,p_sum"));
        // Single-run groups leave the CI column empty.
        assert!(lines[1].ends_with(","));
    }

    #[test]
    fn plan_file_parses_inline_scenario_and_placement() {
        let scenario = crate::formats::tests_scenario_text();
        let text = format!(
            r#"{{
                "scenario": {scenario},
                "schemes": ["ga_pso", "non_optimized"],
                "uav_counts": [2, 3],
                "runs": 4,
                "target_placement": {{"uniform_random": {{"region": [500.0, 2500.0, 500.0, 2500.0]}}}},
                "root_seed": 99,
                "ga": {{"generations": 5}},
                "pso": {{"iterations": 3}}
            }}"#
        );
        let plan = parse_plan(&text, None).unwrap();
        assert_eq!(plan.schemes, vec![Scheme::GaPso, Scheme::NonOptimized]);
        assert_eq!(plan.uav_counts, vec![2, 3]);
        assert_eq!(plan.runs, 4);
        assert_eq!(plan.root_seed, 99);
        assert_eq!(plan.ga.generations, 5);
        assert_eq!(plan.pso.iterations, 3);
        match plan.placement {
            TargetPlacement::UniformRandom { region: Some(r) } => {
                assert_eq!(r.min_x, 500.0);
                assert_eq!(r.max_y, 2500.0);
            }
            other => panic!("unexpected placement {other:?}"),
        }
    }

    #[test]
    fn plan_file_rejects_duplicate_schemes_and_unknown_names() {
        let scenario = crate::formats::tests_scenario_text();
        let dup = format!(
            r#"{{"scenario": {scenario}, "schemes": ["ga_pso", "ga_pso"], "uav_counts": [1], "runs": 1, "root_seed": 1}}"#
        );
        assert!(parse_plan(&dup, None).unwrap_err().to_string().contains("twice"));
        let unknown = format!(
            r#"{{"scenario": {scenario}, "schemes": ["annealing"], "uav_counts": [1], "runs": 1, "root_seed": 1}}"#
        );
        assert!(parse_plan(&unknown, None).is_err());
    }

    #[test]
    fn sampled_targets_respect_region_margin() {
        let loaded = parse_scenario(&crate::formats::tests_scenario_text(), None).unwrap();
        let b = &loaded.scenario.bounds;
        for run in 0..100 {
            let targets =
                sample_targets(&loaded.scenario.targets, b, None, 42, 2, run).unwrap();
            assert_eq!(targets.len(), loaded.scenario.targets.len());
            for (t, template) in targets.iter().zip(&loaded.scenario.targets) {
                let p = t.position;
                assert!(p.x - b.region.min_x >= b.min_target_distance);
                assert!(b.region.max_x - p.x >= b.min_target_distance);
                assert!(p.y - b.region.min_y >= b.min_target_distance);
                assert!(b.region.max_y - p.y >= b.min_target_distance);
                assert_eq!(p.z, template.position.z);
                assert_eq!(t.channels, template.channels);
                assert_eq!(t.tx_power, template.tx_power);
            }
        }
    }

    #[test]
    fn sampling_is_scheme_independent_but_run_dependent() {
        let loaded = parse_scenario(&crate::formats::tests_scenario_text(), None).unwrap();
        let b = &loaded.scenario.bounds;
        let a = sample_targets(&loaded.scenario.targets, b, None, 42, 2, 0).unwrap();
        let a2 = sample_targets(&loaded.scenario.targets, b, None, 42, 2, 0).unwrap();
        let c = sample_targets(&loaded.scenario.targets, b, None, 42, 2, 1).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, c);
    }

    #[test]
    fn impossible_margin_reports_placement_failure() {
        let loaded = parse_scenario(&crate::formats::tests_scenario_text(), None).unwrap();
        let mut bounds = loaded.scenario.bounds;
        // Region is 3000 wide; a 2000 m margin leaves nothing.
        bounds.min_target_distance = 2000.0;
        let err = sample_targets(&loaded.scenario.targets, &bounds, None, 42, 2, 0)
            .unwrap_err()
            .to_string();
        assert!(err.contains("could not place"), "{err}");
    }

    #[test]
    fn experiment_records_follow_plan_order_and_pair_hashes() {
        let loaded = parse_scenario(&crate::formats::tests_scenario_text(), None).unwrap();
        let plan = ExperimentPlan {
            scenario: loaded,
            schemes: vec![Scheme::NonOptimized, Scheme::PsoOnly],
            uav_counts: vec![1, 2],
            runs: 2,
            placement: TargetPlacement::UniformRandom { region: None },
            root_seed: 11,
            ga: GaConfig { population: 6, generations: 2, ..GaConfig::default() },
            pso: PsoConfig { particles: 4, iterations: 2, ..PsoConfig::default() },
        };
        let records = run_experiment(&plan, 3).unwrap();
        assert_eq!(records.len(), 8);
        // Scheme-major, then m, then run.
        let key: Vec<(&str, usize, usize)> =
            records.iter().map(|r| (r.scheme, r.m, r.run)).collect();
        assert_eq!(
            key,
            vec![
                ("non_optimized", 1, 0),
                ("non_optimized", 1, 1),
                ("non_optimized", 2, 0),
                ("non_optimized", 2, 1),
                ("pso_only", 1, 0),
                ("pso_only", 1, 1),
                ("pso_only", 2, 0),
                ("pso_only", 2, 1),
            ]
        );
        for r in &records {
            assert!(r.ok(), "run failed: {}", r.error);
            assert!(r.p_sum.is_finite());
        }
        // Paired runs across schemes saw the same scenario instance,
        // and optimizer seeds are disjoint between schemes.
        for i in 0..4 {
            assert_eq!(records[i].scenario_hash, records[i + 4].scenario_hash);
            assert_ne!(records[i].seed, records[i + 4].seed);
        }
        // Different runs saw different target draws.
        assert_ne!(records[0].scenario_hash, records[1].scenario_hash);

        // Worker count changes nothing.
        let again = run_experiment(&plan, 1).unwrap();
        assert_eq!(records, again);
    }
}
