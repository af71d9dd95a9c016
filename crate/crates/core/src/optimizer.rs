//! Two-stage metaheuristic: a genetic algorithm searches the joint
//! deployment space, then particle-swarm refinement polishes one UAV at
//! a time against the frozen rest of the fleet.
//!
//! Every candidate is pushed through [`repair`] before evaluation, so
//! the population only ever contains states the fitness function can
//! score, and traces are comparable across schemes. All randomness is
//! drawn from labeled [`stream`]s, which makes results a pure function
//! of the root seed.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::deploy::{
    fitness, repair, repair_masked, ConstraintBounds, DeployError, Deployment, FitnessReport,
};
use crate::geometry::Point3;
use crate::los::{los_query, LosQuery};
use crate::math::{golden_section_min, wrap_angle};
use crate::rng::stream;
use crate::scenario::{Scenario, TerrainContext};
use crate::sensing::{Band, UavState};
use crate::terrain::TerrainModel;

/// Components per UAV in the flat genome: x, y, z, azimuth, elevation.
const GENES_PER_UAV: usize = 5;
/// Velocity and mutation scales are this fraction of each component's
/// feasible span.
const SPAN_FRACTION: f64 = 0.1;
/// Coordinate sweeps the non-optimized baseline spends on boresight
/// polish.
const BASELINE_SWEEPS: usize = 3;
/// Golden-section iterations per boresight polish.
const BASELINE_POLISH_ITERS: u32 = 30;
/// Altitude increment of the baseline's line-of-sight climb (m).
const BASELINE_CLIMB_STEP: f64 = 10.0;

/// Genetic-algorithm stage settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    /// Per-component mutation probability.
    pub mutation_prob: f64,
    /// Survivors copied unchanged each generation in full-offspring
    /// mode; ordinary mode keeps the whole sorted population and
    /// elitism falls out of truncation.
    pub elites: usize,
    /// Tournament size for parent selection.
    pub tournament: usize,
    /// Mutation half-widths for (x, y, z, azimuth, elevation); `None`
    /// uses [`SPAN_FRACTION`] of each feasible span.
    pub mutation_deltas: Option<[f64; 5]>,
    /// Replace all non-elites each generation instead of inserting one
    /// offspring pair.
    pub full_offspring: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            mutation_prob: 0.1,
            elites: 5,
            tournament: 4,
            mutation_deltas: None,
            full_offspring: false,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.population < 2 {
            return Err("GA population must be at least 2");
        }
        if self.elites < 1 || self.elites >= self.population {
            return Err("GA elite count must lie in [1, population)");
        }
        if self.tournament < 1 {
            return Err("GA tournament size must be at least 1");
        }
        if !(self.mutation_prob >= 0.0 && self.mutation_prob <= 1.0) {
            return Err("GA mutation probability must lie in [0,1]");
        }
        if let Some(d) = &self.mutation_deltas {
            if d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err("GA mutation deltas must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

/// Particle-swarm refinement settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub particles: usize,
    /// Velocity updates per swarm.
    pub iterations: usize,
    /// Inertia weight at the first and last iteration; interpolated
    /// linearly between them.
    pub inertia_start: f64,
    pub inertia_end: f64,
    /// Pull toward each particle's own best.
    pub cognitive: f64,
    /// Pull toward the swarm best.
    pub social: f64,
    /// Full cycles over the fleet.
    pub passes: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            particles: 30,
            iterations: 50,
            inertia_start: 0.7,
            inertia_end: 0.4,
            cognitive: 1.5,
            social: 2.0,
            passes: 1,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.particles < 1 {
            return Err("PSO swarm needs at least one particle");
        }
        if self.passes < 1 {
            return Err("PSO needs at least one pass over the fleet");
        }
        let coeffs = [self.inertia_start, self.inertia_end, self.cognitive, self.social];
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err("PSO coefficients must be finite and nonnegative");
        }
        if self.inertia_start < self.inertia_end {
            return Err("PSO inertia must not increase over iterations");
        }
        Ok(())
    }
}

/// Result of a single optimization stage: the incumbent it settled on
/// and the best fitness after each generation or iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub deployment: Deployment,
    pub report: FitnessReport,
    pub trace: Vec<f64>,
}

/// Result of a whole scheme run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub deployment: Deployment,
    pub report: FitnessReport,
    pub ga_trace: Vec<f64>,
    pub pso_trace: Vec<f64>,
}

fn spans(cb: &ConstraintBounds) -> [f64; 5] {
    [
        cb.region.max_x - cb.region.min_x,
        cb.region.max_y - cb.region.min_y,
        cb.max_altitude - cb.safe_altitude,
        2.0 * PI,
        PI,
    ]
}

fn sample_uav<R: Rng>(
    rng: &mut R,
    band: Band,
    cb: &ConstraintBounds,
    terrain: &TerrainModel,
) -> UavState {
    let x = rng.gen_range(cb.region.min_x..cb.region.max_x);
    let y = rng.gen_range(cb.region.min_y..cb.region.max_y);
    let floor = terrain.elevation(x, y) + cb.safe_altitude;
    let z = if cb.max_altitude > floor { rng.gen_range(floor..cb.max_altitude) } else { floor };
    UavState {
        position: Point3::new(x, y, z),
        azimuth: rng.gen_range(-PI..PI),
        elevation: rng.gen_range(-FRAC_PI_2..FRAC_PI_2),
        band,
    }
}

fn encode_uav(u: &UavState) -> [f64; 5] {
    [u.position.x, u.position.y, u.position.z, u.azimuth, u.elevation]
}

fn decode_uav(g: &[f64; 5], band: Band) -> UavState {
    UavState {
        position: Point3::new(g[0], g[1], g[2]),
        azimuth: g[3],
        elevation: g[4],
        band,
    }
}

fn encode(d: &Deployment) -> Vec<f64> {
    let mut g = Vec::with_capacity(d.uavs.len() * GENES_PER_UAV);
    for u in &d.uavs {
        g.extend_from_slice(&encode_uav(u));
    }
    g
}

fn decode(g: &[f64], bands: &[Band]) -> Deployment {
    debug_assert_eq!(g.len(), bands.len() * GENES_PER_UAV);
    let uavs = bands
        .iter()
        .enumerate()
        .map(|(m, band)| {
            let s = &g[m * GENES_PER_UAV..(m + 1) * GENES_PER_UAV];
            decode_uav(&[s[0], s[1], s[2], s[3], s[4]], *band)
        })
        .collect();
    Deployment::new(uavs)
}

#[derive(Clone)]
struct Individual {
    genome: Vec<f64>,
    report: FitnessReport,
}

fn sort_population(pop: &mut [Individual]) {
    // stable sort: equal fitness keeps insertion order
    pop.sort_by(|a, b| b.report.fitness.total_cmp(&a.report.fitness));
}

fn tournament<R: Rng>(pop: &[Individual], size: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..pop.len());
    for _ in 1..size {
        let c = rng.gen_range(0..pop.len());
        if pop[c].report.fitness > pop[best].report.fitness {
            best = c;
        }
    }
    best
}

fn uniform_crossover<R: Rng>(a: &[f64], b: &[f64], rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = Vec::with_capacity(a.len());
    let mut c2 = Vec::with_capacity(a.len());
    for j in 0..a.len() {
        if rng.gen::<f64>() < 0.5 {
            c1.push(a[j]);
            c2.push(b[j]);
        } else {
            c1.push(b[j]);
            c2.push(a[j]);
        }
    }
    (c1, c2)
}

fn mutate<R: Rng>(g: &mut [f64], deltas: &[f64; 5], prob: f64, rng: &mut R) {
    for (j, x) in g.iter_mut().enumerate() {
        if rng.gen::<f64>() < prob {
            let d = deltas[j % GENES_PER_UAV];
            if d > 0.0 {
                *x += rng.gen_range(-d..d);
            }
        }
    }
}

struct Evaluator<'a> {
    scenario: &'a Scenario,
    tc: &'a TerrainContext<'a>,
}

impl Evaluator<'_> {
    fn repair_and_eval(&self, d: &Deployment) -> Result<(Deployment, FitnessReport), DeployError> {
        let r = repair(d, &self.scenario.targets, &self.scenario.bounds, self.tc.terrain);
        let rep = fitness(&r, self.scenario, &self.scenario.weights, self.tc)?;
        Ok((r, rep))
    }

    fn repair_masked_and_eval(
        &self,
        d: &Deployment,
        movable: &[bool],
    ) -> Result<(Deployment, FitnessReport), DeployError> {
        let r = repair_masked(d, movable, &self.scenario.targets, &self.scenario.bounds, self.tc.terrain);
        let rep = fitness(&r, self.scenario, &self.scenario.weights, self.tc)?;
        Ok((r, rep))
    }

    fn eval(&self, d: &Deployment) -> Result<FitnessReport, DeployError> {
        fitness(d, self.scenario, &self.scenario.weights, self.tc)
    }
}

/// Runs the population stage and returns its best repaired deployment.
pub fn ga_stage(
    scenario: &Scenario,
    tc: &TerrainContext<'_>,
    cfg: &GaConfig,
    seed: u64,
) -> Result<StageOutcome, DeployError> {
    cfg.validate().map_err(DeployError::Invalid)?;
    let ev = Evaluator { scenario, tc };
    let bands = &scenario.uav_bands;
    let cb = &scenario.bounds;
    let deltas = cfg.mutation_deltas.unwrap_or_else(|| {
        let mut d = spans(cb);
        for x in &mut d {
            *x *= SPAN_FRACTION;
        }
        d
    });

    let mut rng = stream(seed, "ga-init", &[]);
    let mut pop = Vec::with_capacity(cfg.population + 2);
    for _ in 0..cfg.population {
        let uavs = bands.iter().map(|b| sample_uav(&mut rng, *b, cb, tc.terrain)).collect();
        let (r, rep) = ev.repair_and_eval(&Deployment::new(uavs))?;
        pop.push(Individual { genome: encode(&r), report: rep });
    }
    sort_population(&mut pop);

    let mut trace = Vec::with_capacity(cfg.generations);
    for g in 0..cfg.generations {
        let mut rng = stream(seed, "ga-gen", &[g as u64]);
        let spawn = |pop: &[Individual], rng: &mut rand_chacha::ChaCha8Rng| {
            let a = tournament(pop, cfg.tournament, rng);
            let b = tournament(pop, cfg.tournament, rng);
            let (mut g1, mut g2) = uniform_crossover(&pop[a].genome, &pop[b].genome, rng);
            mutate(&mut g1, &deltas, cfg.mutation_prob, rng);
            mutate(&mut g2, &deltas, cfg.mutation_prob, rng);
            (g1, g2)
        };

        if cfg.full_offspring {
            let keep = cfg.elites;
            let needed = cfg.population - keep;
            let mut offspring = Vec::with_capacity(needed + 1);
            while offspring.len() < needed {
                let (g1, g2) = spawn(&pop, &mut rng);
                offspring.push(g1);
                offspring.push(g2);
            }
            offspring.truncate(needed);
            let mut next: Vec<Individual> = pop[..keep].to_vec();
            for genome in offspring {
                let (r, rep) = ev.repair_and_eval(&decode(&genome, bands))?;
                next.push(Individual { genome: encode(&r), report: rep });
            }
            pop = next;
        } else {
            let (g1, g2) = spawn(&pop, &mut rng);
            for genome in [g1, g2] {
                let (r, rep) = ev.repair_and_eval(&decode(&genome, bands))?;
                pop.push(Individual { genome: encode(&r), report: rep });
            }
        }
        sort_population(&mut pop);
        pop.truncate(cfg.population);
        trace.push(pop[0].report.fitness);
    }

    let best = decode(&pop[0].genome, bands);
    let report = pop[0].report;
    Ok(StageOutcome { deployment: best, report, trace })
}

struct Particle {
    pos: [f64; 5],
    vel: [f64; 5],
    best_pos: [f64; 5],
    best_report: FitnessReport,
}

/// Refines one UAV at a time with a swarm while the rest of the fleet
/// stays frozen; cycles through the fleet `passes` times.
pub fn pso_stage(
    start: &Deployment,
    scenario: &Scenario,
    tc: &TerrainContext<'_>,
    cfg: &PsoConfig,
    seed: u64,
) -> Result<StageOutcome, DeployError> {
    cfg.validate().map_err(DeployError::Invalid)?;
    let ev = Evaluator { scenario, tc };
    let cb = &scenario.bounds;
    let span = spans(cb);
    let (mut cur, mut cur_report) = ev.repair_and_eval(start)?;
    let fleet = cur.uavs.len();
    let mut trace = Vec::with_capacity(cfg.passes * fleet * cfg.iterations);

    for pass in 0..cfg.passes {
        for m in 0..fleet {
            let band = cur.uavs[m].band;
            let mut movable = vec![false; fleet];
            movable[m] = true;
            let eval_pos = |pos: &[f64; 5]| -> Result<([f64; 5], FitnessReport), DeployError> {
                let mut cand = cur.clone();
                cand.uavs[m] = decode_uav(pos, band);
                let (r, rep) = ev.repair_masked_and_eval(&cand, &movable)?;
                Ok((encode_uav(&r.uavs[m]), rep))
            };

            let mut init_rng = stream(seed, "pso-init", &[pass as u64, m as u64]);
            let mut vel_rng = stream(seed, "pso-vel", &[pass as u64, m as u64]);
            let mut upd_rng = stream(seed, "pso", &[pass as u64, m as u64]);

            let mut swarm = Vec::with_capacity(cfg.particles);
            for k in 0..cfg.particles {
                let pos = if k == 0 {
                    encode_uav(&cur.uavs[m])
                } else {
                    encode_uav(&sample_uav(&mut init_rng, band, cb, tc.terrain))
                };
                let (pos, report) = eval_pos(&pos)?;
                swarm.push(Particle { pos, vel: [0.0; 5], best_pos: pos, best_report: report });
            }
            for p in &mut swarm {
                for j in 0..GENES_PER_UAV {
                    let v = SPAN_FRACTION * span[j];
                    p.vel[j] = vel_rng.gen_range(-v..v);
                }
            }
            let mut gbest = 0;
            for k in 1..cfg.particles {
                if swarm[k].best_report.fitness > swarm[gbest].best_report.fitness {
                    gbest = k;
                }
            }
            let mut gbest_pos = swarm[gbest].best_pos;
            let mut gbest_report = swarm[gbest].best_report;

            for t in 0..cfg.iterations {
                let frac = if cfg.iterations > 1 {
                    t as f64 / (cfg.iterations - 1) as f64
                } else {
                    0.0
                };
                let w = cfg.inertia_start + (cfg.inertia_end - cfg.inertia_start) * frac;
                for p in &mut swarm {
                    let r1: f64 = upd_rng.gen();
                    let r2: f64 = upd_rng.gen();
                    for j in 0..GENES_PER_UAV {
                        p.vel[j] = w * p.vel[j]
                            + cfg.cognitive * r1 * (p.best_pos[j] - p.pos[j])
                            + cfg.social * r2 * (gbest_pos[j] - p.pos[j]);
                        p.pos[j] += p.vel[j];
                    }
                    let (pos, report) = eval_pos(&p.pos)?;
                    p.pos = pos;
                    if report.fitness > p.best_report.fitness {
                        p.best_pos = pos;
                        p.best_report = report;
                    }
                    if report.fitness > gbest_report.fitness {
                        gbest_pos = pos;
                        gbest_report = report;
                    }
                }
                trace.push(gbest_report.fitness.max(cur_report.fitness));
            }

            if gbest_report.fitness > cur_report.fitness {
                cur.uavs[m] = decode_uav(&gbest_pos, band);
                cur_report = gbest_report;
            }
        }
    }

    Ok(StageOutcome { deployment: cur, report: cur_report, trace })
}

/// GA exploration followed by per-UAV PSO refinement.
pub fn optimize(
    scenario: &Scenario,
    tc: &TerrainContext<'_>,
    ga: &GaConfig,
    pso: &PsoConfig,
    seed: u64,
) -> Result<OptimizeOutcome, DeployError> {
    let coarse = ga_stage(scenario, tc, ga, seed)?;
    let fine = pso_stage(&coarse.deployment, scenario, tc, pso, seed)?;
    Ok(OptimizeOutcome {
        deployment: fine.deployment,
        report: fine.report,
        ga_trace: coarse.trace,
        pso_trace: fine.trace,
    })
}

/// Deterministic heuristic placement with no metaheuristic search: each
/// UAV flies to the centroid of the targets its band can hear, climbs
/// until it has line of sight to them, aims the boresight at their
/// centroid, and finally gets a few golden-section sweeps over its
/// boresight angles.
pub fn baseline_non_optimized(
    scenario: &Scenario,
    tc: &TerrainContext<'_>,
) -> Result<OptimizeOutcome, DeployError> {
    let ev = Evaluator { scenario, tc };
    let cb = &scenario.bounds;
    let eps = scenario.los.epsilon;

    let mut uavs = Vec::with_capacity(scenario.uav_count());
    for band in &scenario.uav_bands {
        let mut assigned: Vec<&crate::sensing::Target> = scenario
            .targets
            .iter()
            .filter(|t| t.channels.iter().any(|&c| band.contains(c)))
            .collect();
        if assigned.is_empty() {
            assigned = scenario.targets.iter().collect();
        }
        let n = assigned.len() as f64;
        let cx = assigned.iter().map(|t| t.position.x).sum::<f64>() / n;
        let cy = assigned.iter().map(|t| t.position.y).sum::<f64>() / n;
        let cz = assigned.iter().map(|t| t.position.z).sum::<f64>() / n;

        let x = cx.clamp(cb.region.min_x, cb.region.max_x);
        let y = cy.clamp(cb.region.min_y, cb.region.max_y);
        let mut z = tc.terrain.elevation(x, y) + cb.safe_altitude;
        loop {
            let sees_all = assigned.iter().all(|t| {
                match LosQuery::new(Point3::new(x, y, z), t.position, eps) {
                    Ok(q) => los_query(&tc.bvh, tc.terrain, &q).visible,
                    Err(_) => true,
                }
            });
            if sees_all || z + BASELINE_CLIMB_STEP > cb.max_altitude {
                break;
            }
            z += BASELINE_CLIMB_STEP;
        }

        let (dx, dy, dz) = (cx - x, cy - y, cz - z);
        let horiz = dx.hypot(dy);
        let (azimuth, elevation) = if horiz == 0.0 && dz == 0.0 {
            (0.0, 0.0)
        } else {
            (libm::atan2(dy, dx), libm::atan2(dz, horiz))
        };
        uavs.push(UavState { position: Point3::new(x, y, z), azimuth, elevation, band: *band });
    }

    let (mut d, mut report) = ev.repair_and_eval(&Deployment::new(uavs))?;

    for _ in 0..BASELINE_SWEEPS {
        for m in 0..d.uavs.len() {
            let az0 = d.uavs[m].azimuth;
            let bw = scenario.antenna.beamwidth_az;
            let (best_az, neg) = golden_section_min(
                |az| {
                    let mut c = d.clone();
                    c.uavs[m].azimuth = wrap_angle(az);
                    ev.eval(&c).map(|r| -r.fitness).unwrap_or(f64::INFINITY)
                },
                az0 - bw,
                az0 + bw,
                BASELINE_POLISH_ITERS,
            );
            if -neg > report.fitness {
                d.uavs[m].azimuth = wrap_angle(best_az);
                report = ev.eval(&d)?;
            }

            let el0 = d.uavs[m].elevation;
            let bw = scenario.antenna.beamwidth_el;
            let lo = (el0 - bw).max(-FRAC_PI_2);
            let hi = (el0 + bw).min(FRAC_PI_2);
            let (best_el, neg) = golden_section_min(
                |el| {
                    let mut c = d.clone();
                    c.uavs[m].elevation = el;
                    ev.eval(&c).map(|r| -r.fitness).unwrap_or(f64::INFINITY)
                },
                lo,
                hi,
                BASELINE_POLISH_ITERS,
            );
            if -neg > report.fitness {
                d.uavs[m].elevation = best_el;
                report = ev.eval(&d)?;
            }
        }
    }

    Ok(OptimizeOutcome { deployment: d, report, ga_trace: Vec::new(), pso_trace: Vec::new() })
}

/// Swarm refinement from a single random deployment, skipping the
/// population stage.
pub fn baseline_pso_only(
    scenario: &Scenario,
    tc: &TerrainContext<'_>,
    cfg: &PsoConfig,
    seed: u64,
) -> Result<OptimizeOutcome, DeployError> {
    let mut rng = stream(seed, "baseline-init", &[]);
    let uavs = scenario
        .uav_bands
        .iter()
        .map(|b| sample_uav(&mut rng, *b, &scenario.bounds, tc.terrain))
        .collect();
    let stage = pso_stage(&Deployment::new(uavs), scenario, tc, cfg, seed)?;
    Ok(OptimizeOutcome {
        deployment: stage.deployment,
        report: stage.report,
        ga_trace: Vec::new(),
        pso_trace: stage.trace,
    })
}
