//! Deployment encoding, constraint violation measures, the repair
//! projection, and the penalty-scalarized fitness.
//!
//! Violations are graded deficits (meters, radians), not flags, so the
//! penalty term gives the search a gradient toward feasibility.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::energy::{avg_excess_energy, EnergyError};
use crate::geometry::Point3;
use crate::los::Aabb2;
use crate::math::wrap_angle;
use crate::scenario::{Scenario, TerrainContext};
use crate::sensing::{cooperative_sum, SensingError, Target, UavState};
use crate::terrain::TerrainModel;

/// Deterministic heading used to separate exactly coincident points.
const SPREAD_ANGLE: f64 = 2.399963229728653;
/// Relative overshoot when pushing to a separation bound, so the
/// resulting deficit measures exactly zero despite rounding.
const PUSH_SLACK: f64 = 1e-9;
/// Maximum pairwise-displacement rounds inside repair.
const REPAIR_ROUNDS: usize = 50;

/// Positions and boresights of the whole fleet; the optimizer's
/// decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub uavs: Vec<UavState>,
}

impl Deployment {
    pub fn new(uavs: Vec<UavState>) -> Self {
        Self { uavs }
    }

    pub fn validate(&self) -> Result<(), DeployError> {
        if self.uavs.is_empty() {
            return Err(DeployError::Invalid("deployment needs at least one UAV"));
        }
        for u in &self.uavs {
            if !u.position.is_finite() || !u.azimuth.is_finite() || !u.elevation.is_finite() {
                return Err(DeployError::Invalid("deployment contains non-finite values"));
            }
        }
        Ok(())
    }
}

/// Feasible-set geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintBounds {
    /// Deployable ground region.
    pub region: Aabb2,
    /// Minimum UAV-to-target 3D distance (m).
    pub min_target_distance: f64,
    /// Minimum UAV-to-UAV 3D distance (m).
    pub min_uav_distance: f64,
    /// Minimum altitude above local terrain (m).
    pub safe_altitude: f64,
    /// Maximum absolute altitude (m).
    pub max_altitude: f64,
}

impl ConstraintBounds {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.region.min_x < self.region.max_x && self.region.min_y < self.region.max_y) {
            return Err("deployable region is degenerate");
        }
        if !(self.min_target_distance > 0.0 && self.min_uav_distance > 0.0) {
            return Err("separation bounds must be positive");
        }
        if !(self.safe_altitude > 0.0 && self.max_altitude > self.safe_altitude) {
            return Err("altitude bounds must satisfy 0 < safe < max");
        }
        Ok(())
    }
}

/// Weights of the scalarized objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessWeights {
    /// Reward per unit of sum detection probability.
    pub detection: f64,
    /// Cost per joule of average excess hover energy.
    pub energy: f64,
    /// Cost per unit of summed violation measures.
    pub penalty: f64,
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<(), &'static str> {
        let ok = self.detection >= 0.0
            && self.energy >= 0.0
            && self.penalty >= 0.0
            && self.detection.is_finite()
            && self.energy.is_finite()
            && self.penalty.is_finite();
        if ok {
            Ok(())
        } else {
            Err("weights must be finite and nonnegative")
        }
    }
}

/// Per-constraint nonnegative deficits; all zero iff feasible.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Violations {
    /// Ground distance outside the deployable region, summed (m).
    pub region: f64,
    /// UAV-target separation deficits, summed (m).
    pub target_separation: f64,
    /// UAV-UAV separation deficits, summed (m).
    pub uav_separation: f64,
    /// Angular excess outside the boresight boxes, summed (rad).
    pub orientation: f64,
    /// Altitude-floor and ceiling deficits, summed (m).
    pub altitude: f64,
}

impl Violations {
    pub fn total(&self) -> f64 {
        self.region + self.target_separation + self.uav_separation + self.orientation + self.altitude
    }

    pub fn is_feasible(&self) -> bool {
        self.region == 0.0
            && self.target_separation == 0.0
            && self.uav_separation == 0.0
            && self.orientation == 0.0
            && self.altitude == 0.0
    }
}

/// Objective components and the scalar they combine into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessReport {
    pub p_sum: f64,
    pub avg_excess_energy: f64,
    pub violations: Violations,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeployError {
    Invalid(&'static str),
    Sensing(SensingError),
    Energy(EnergyError),
}

impl fmt::Display for DeployError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeployError::Invalid(m) => write!(f, "{m}"),
            DeployError::Sensing(e) => write!(f, "{e}"),
            DeployError::Energy(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for DeployError {}

impl From<SensingError> for DeployError {
    fn from(e: SensingError) -> Self {
        DeployError::Sensing(e)
    }
}

impl From<EnergyError> for DeployError {
    fn from(e: EnergyError) -> Self {
        DeployError::Energy(e)
    }
}

fn region_distance(region: &Aabb2, x: f64, y: f64) -> f64 {
    let dx = if x < region.min_x {
        region.min_x - x
    } else if x > region.max_x {
        x - region.max_x
    } else {
        0.0
    };
    let dy = if y < region.min_y {
        region.min_y - y
    } else if y > region.max_y {
        y - region.max_y
    } else {
        0.0
    };
    dx.hypot(dy)
}

/// Evaluates the five constraint deficits of a deployment.
pub fn violations(
    d: &Deployment,
    targets: &[Target],
    cb: &ConstraintBounds,
    terrain: &TerrainModel,
) -> Violations {
    let mut v = Violations::default();
    for u in &d.uavs {
        v.region += region_distance(&cb.region, u.position.x, u.position.y);
        v.orientation += (u.azimuth.abs() - PI).max(0.0) + (u.elevation.abs() - FRAC_PI_2).max(0.0);
        let floor = terrain.elevation(u.position.x, u.position.y) + cb.safe_altitude;
        v.altitude += (floor - u.position.z).max(0.0) + (u.position.z - cb.max_altitude).max(0.0);
        for t in targets {
            v.target_separation += (cb.min_target_distance - u.position.dist(&t.position)).max(0.0);
        }
    }
    for m in 0..d.uavs.len() {
        for l in m + 1..d.uavs.len() {
            let dist = d.uavs[m].position.dist(&d.uavs[l].position);
            v.uav_separation += (cb.min_uav_distance - dist).max(0.0);
        }
    }
    v
}

fn clamp_into_boxes(u: &mut UavState, cb: &ConstraintBounds, terrain: &TerrainModel) {
    u.azimuth = wrap_angle(u.azimuth);
    u.elevation = u.elevation.clamp(-FRAC_PI_2, FRAC_PI_2);
    u.position.x = u.position.x.clamp(cb.region.min_x, cb.region.max_x);
    u.position.y = u.position.y.clamp(cb.region.min_y, cb.region.max_y);
    let floor = terrain.elevation(u.position.x, u.position.y) + cb.safe_altitude;
    u.position.z = if floor <= cb.max_altitude {
        u.position.z.clamp(floor, cb.max_altitude)
    } else {
        // contradictory bounds: keep terrain safety, report the ceiling miss
        floor
    };
}

fn spread_direction(index: usize) -> (f64, f64) {
    let a = SPREAD_ANGLE * (index as f64 + 1.0);
    (a.cos(), a.sin())
}

fn altitude_box(x: f64, y: f64, cb: &ConstraintBounds, terrain: &TerrainModel) -> (f64, f64) {
    (terrain.elevation(x, y) + cb.safe_altitude, cb.max_altitude)
}

/// Moves `u` to distance `want` from `anchor` along their connecting
/// line (or a deterministic heading when coincident), then clamps it
/// back into the region and altitude boxes.
fn push_radial(
    u: &mut UavState,
    anchor: Point3,
    want: f64,
    index: usize,
    cb: &ConstraintBounds,
    terrain: &TerrainModel,
) {
    let p = u.position;
    let dist = p.dist(&anchor);
    u.position = if dist == 0.0 {
        let (cx, cy) = spread_direction(index);
        Point3::new(anchor.x + want * cx, anchor.y + want * cy, anchor.z)
    } else {
        let s = want / dist;
        Point3::new(
            anchor.x + (p.x - anchor.x) * s,
            anchor.y + (p.y - anchor.y) * s,
            anchor.z + (p.z - anchor.z) * s,
        )
    };
    clamp_into_boxes(u, cb, terrain);
}

/// When a clamp has shortened a push (the anchor sits near a region
/// edge, say), re-establish `want` separation through the altitude
/// axis alone, which only the floor and ceiling can obstruct. Leaves
/// `u` untouched when neither direction has the headroom.
fn recover_gap_vertically(
    u: &mut UavState,
    anchor: Point3,
    want: f64,
    cb: &ConstraintBounds,
    terrain: &TerrainModel,
) {
    let q = u.position;
    let dxy = (q.x - anchor.x).hypot(q.y - anchor.y);
    let need = want * want - dxy * dxy;
    if need <= 0.0 {
        return;
    }
    let s = need.sqrt();
    let (floor, ceil) = altitude_box(q.x, q.y, cb, terrain);
    let up = anchor.z + s;
    let down = anchor.z - s;
    if up >= floor && up <= ceil {
        u.position.z = up;
    } else if down >= floor && down <= ceil {
        u.position.z = down;
    }
}

/// Repair with a movability mask: only UAVs with `movable[m] = true` are
/// displaced; the rest are treated as fixed obstacles. Used by the
/// per-UAV refinement stage.
pub fn repair_masked(
    d: &Deployment,
    movable: &[bool],
    targets: &[Target],
    cb: &ConstraintBounds,
    terrain: &TerrainModel,
) -> Deployment {
    debug_assert_eq!(movable.len(), d.uavs.len());
    let mut uavs = d.uavs.clone();
    for (m, u) in uavs.iter_mut().enumerate() {
        if movable[m] {
            clamp_into_boxes(u, cb, terrain);
        }
    }
    for _ in 0..REPAIR_ROUNDS {
        let mut moved = false;

        for m in 0..uavs.len() {
            if !movable[m] {
                continue;
            }
            for t in targets {
                if uavs[m].position.dist(&t.position) >= cb.min_target_distance {
                    continue;
                }
                moved = true;
                let want = cb.min_target_distance * (1.0 + PUSH_SLACK);
                push_radial(&mut uavs[m], t.position, want, m, cb, terrain);
                if uavs[m].position.dist(&t.position) < cb.min_target_distance {
                    recover_gap_vertically(&mut uavs[m], t.position, want, cb, terrain);
                }
            }
        }

        for m in 0..uavs.len() {
            for l in m + 1..uavs.len() {
                if !movable[m] && !movable[l] {
                    continue;
                }
                let pm = uavs[m].position;
                let pl = uavs[l].position;
                let dist = pm.dist(&pl);
                if dist >= cb.min_uav_distance {
                    continue;
                }
                moved = true;
                let want = cb.min_uav_distance * (1.0 + PUSH_SLACK);
                let deficit = want - dist;
                let (ux, uy, uz) = if dist == 0.0 {
                    let (cx, cy) = spread_direction(m + uavs.len() * l);
                    (cx, cy, 0.0)
                } else {
                    ((pl.x - pm.x) / dist, (pl.y - pm.y) / dist, (pl.z - pm.z) / dist)
                };
                // split the displacement between whichever ends can move
                let (share_m, share_l) = match (movable[m], movable[l]) {
                    (true, true) => (0.5 * deficit, 0.5 * deficit),
                    (true, false) => (deficit, 0.0),
                    (false, true) => (0.0, deficit),
                    (false, false) => unreachable!(),
                };
                if movable[m] {
                    uavs[m].position =
                        Point3::new(pm.x - ux * share_m, pm.y - uy * share_m, pm.z - uz * share_m);
                    clamp_into_boxes(&mut uavs[m], cb, terrain);
                }
                if movable[l] {
                    uavs[l].position =
                        Point3::new(pl.x + ux * share_l, pl.y + uy * share_l, pl.z + uz * share_l);
                    clamp_into_boxes(&mut uavs[l], cb, terrain);
                }
                // a clamp can pinch the pair back together; give the
                // deficit to one end through the altitude axis
                if movable[l] && uavs[m].position.dist(&uavs[l].position) < cb.min_uav_distance {
                    let anchor = uavs[m].position;
                    recover_gap_vertically(&mut uavs[l], anchor, want, cb, terrain);
                }
                if movable[m] && uavs[m].position.dist(&uavs[l].position) < cb.min_uav_distance {
                    let anchor = uavs[l].position;
                    recover_gap_vertically(&mut uavs[m], anchor, want, cb, terrain);
                }
            }
        }

        if !moved {
            break;
        }
    }
    Deployment { uavs }
}

/// Projects a deployment toward feasibility: wraps azimuths, clamps
/// elevations, ground positions, and altitudes, then resolves pairwise
/// separation deficits by symmetric displacement along the offending
/// segments (re-clamping each round, up to a fixed round budget).
/// Region, orientation, and altitude deficits are exactly zero
/// afterward; separation deficits are zero whenever the displacement
/// loop converges, residual otherwise. Idempotent bit for bit.
pub fn repair(
    d: &Deployment,
    targets: &[Target],
    cb: &ConstraintBounds,
    terrain: &TerrainModel,
) -> Deployment {
    let movable = vec![true; d.uavs.len()];
    repair_masked(d, &movable, targets, cb, terrain)
}

/// Scores a deployment: cooperative detection reward minus energy cost
/// minus penalty-weighted constraint deficits.
pub fn fitness(
    d: &Deployment,
    scenario: &Scenario,
    fw: &FitnessWeights,
    tc: &TerrainContext<'_>,
) -> Result<FitnessReport, DeployError> {
    d.validate()?;
    let ctx = scenario.sensing_context(tc);
    let (p_sum, _) = cooperative_sum(&d.uavs, &scenario.targets, &ctx)?;
    let energy = avg_excess_energy(&d.uavs, tc.terrain, &scenario.energy)?;
    let v = violations(d, &scenario.targets, &scenario.bounds, tc.terrain);
    let fitness = fw.detection * p_sum - fw.energy * energy - fw.penalty * v.total();
    Ok(FitnessReport { p_sum, avg_excess_energy: energy, violations: v, fitness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::Band;

    fn bounds() -> ConstraintBounds {
        ConstraintBounds {
            region: Aabb2::new(0.0, 2000.0, 0.0, 5000.0),
            min_target_distance: 500.0,
            min_uav_distance: 200.0,
            safe_altitude: 50.0,
            max_altitude: 6000.0,
        }
    }

    fn uav(x: f64, y: f64, z: f64) -> UavState {
        UavState {
            position: Point3::new(x, y, z),
            azimuth: 0.5,
            elevation: 0.1,
            band: Band { min_mhz: 100.0, max_mhz: 200.0 },
        }
    }

    fn target(x: f64, y: f64, z: f64) -> Target {
        Target { position: Point3::new(x, y, z), channels: vec![150.0], tx_power: 0.1 }
    }

    #[test]
    fn feasible_deployment_measures_zero() {
        let d = Deployment::new(vec![uav(100.0, 100.0, 60.0), uav(100.0, 400.0, 60.0)]);
        let targets = [target(3000.0, 3000.0, 100.0)];
        let v = violations(&d, &targets, &bounds(), &TerrainModel::flat(0.0));
        assert!(v.is_feasible(), "{v:?}");
        assert_eq!(v.total(), 0.0);
    }

    #[test]
    fn coincident_uavs_show_the_full_separation_deficit() {
        let d = Deployment::new(vec![uav(100.0, 100.0, 60.0), uav(100.0, 100.0, 60.0)]);
        let v = violations(&d, &[], &bounds(), &TerrainModel::flat(0.0));
        assert_eq!(v.uav_separation, 200.0);
    }

    #[test]
    fn altitude_deficit_is_the_shortfall_below_the_floor() {
        let d = Deployment::new(vec![uav(100.0, 100.0, 25.0)]);
        let v = violations(&d, &[], &bounds(), &TerrainModel::flat(0.0));
        assert_eq!(v.altitude, 25.0);
    }

    #[test]
    fn region_deficit_is_euclidean_distance_to_the_box() {
        let d = Deployment::new(vec![uav(-300.0, -400.0, 60.0)]);
        let v = violations(&d, &[], &bounds(), &TerrainModel::flat(0.0));
        assert_eq!(v.region, 500.0);
    }

    #[test]
    fn orientation_deficit_counts_angular_excess() {
        let mut u = uav(100.0, 100.0, 60.0);
        u.azimuth = 4.0;
        u.elevation = 2.0;
        let d = Deployment::new(vec![u]);
        let v = violations(&d, &[], &bounds(), &TerrainModel::flat(0.0));
        let expected = (4.0 - PI) + (2.0 - FRAC_PI_2);
        assert!((v.orientation - expected).abs() < 1e-15);
    }

    #[test]
    fn target_deficit_accumulates_over_pairs() {
        let d = Deployment::new(vec![uav(100.0, 100.0, 60.0)]);
        let targets = [target(100.0, 100.0, 360.0)];
        let v = violations(&d, &targets, &bounds(), &TerrainModel::flat(0.0));
        assert_eq!(v.target_separation, 200.0);
    }

    #[test]
    fn repair_leaves_feasible_deployments_untouched() {
        let flat = TerrainModel::flat(0.0);
        let d = Deployment::new(vec![uav(100.0, 100.0, 60.0), uav(100.0, 400.0, 60.0)]);
        let targets = [target(3000.0, 3000.0, 100.0)];
        let r = repair(&d, &targets, &bounds(), &flat);
        assert_eq!(r, d);
    }

    #[test]
    fn repair_wraps_azimuth_and_lifts_to_the_floor() {
        let flat = TerrainModel::flat(0.0);
        let mut u = uav(100.0, 100.0, 10.0);
        u.azimuth = 4.0;
        let d = Deployment::new(vec![u]);
        let r = repair(&d, &[], &bounds(), &flat);
        assert!((r.uavs[0].azimuth - (4.0 - 2.0 * PI)).abs() < 1e-15);
        assert_eq!(r.uavs[0].position.z, 50.0);
        assert!(violations(&r, &[], &bounds(), &flat).is_feasible());
    }

    #[test]
    fn repair_resolves_separations_and_is_idempotent() {
        let flat = TerrainModel::flat(0.0);
        let d = Deployment::new(vec![
            uav(100.0, 100.0, 60.0),
            uav(100.0, 100.0, 60.0),
            uav(150.0, 120.0, 70.0),
        ]);
        let targets = [target(120.0, 110.0, 65.0)];
        let r = repair(&d, &targets, &bounds(), &flat);
        let v = violations(&r, &targets, &bounds(), &flat);
        assert!(v.is_feasible(), "residual violations: {v:?}");
        let again = repair(&r, &targets, &bounds(), &flat);
        assert_eq!(again, r);
    }

    #[test]
    fn masked_repair_never_moves_frozen_uavs() {
        let flat = TerrainModel::flat(0.0);
        let frozen = uav(100.0, 100.0, 60.0);
        let d = Deployment::new(vec![frozen, uav(100.0, 100.0, 60.0)]);
        let r = repair_masked(&d, &[false, true], &[], &bounds(), &flat);
        assert_eq!(r.uavs[0], frozen);
        assert!(r.uavs[0].position.dist(&r.uavs[1].position) >= 200.0);
    }

    #[test]
    fn unsatisfiable_geometry_returns_residual_separation_only() {
        let flat = TerrainModel::flat(0.0);
        let cb = ConstraintBounds {
            region: Aabb2::new(0.0, 10.0, 0.0, 10.0),
            min_target_distance: 500.0,
            min_uav_distance: 200.0,
            safe_altitude: 50.0,
            max_altitude: 51.0,
        };
        let d = Deployment::new(vec![uav(1.0, 1.0, 50.0), uav(2.0, 2.0, 50.0), uav(3.0, 3.0, 50.0)]);
        let r = repair(&d, &[], &cb, &flat);
        let v = violations(&r, &[], &cb, &flat);
        assert_eq!(v.region, 0.0);
        assert_eq!(v.orientation, 0.0);
        assert_eq!(v.altitude, 0.0);
        assert!(v.uav_separation > 0.0, "this box cannot hold three UAVs 200 m apart");
    }
}
