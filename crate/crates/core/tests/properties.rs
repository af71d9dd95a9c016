//! Randomized structural properties of the core algorithms: angle
//! wrapping, antenna gain, objective assembly, OR fusion, constraint
//! repair, and line-of-sight agreement between the pruned bisection and
//! the dense reference march.

use proptest::prelude::*;

use terradeploy_core::deploy::{ConstraintBounds, FitnessWeights};
use terradeploy_core::energy::{EnergyParams, DEFAULT_ALTITUDE_EXPONENT};
use terradeploy_core::los::los_dense_oracle;
use terradeploy_core::math::wrap_angle;
use terradeploy_core::scenario::LosParams;
use terradeploy_core::sensing::{
    antenna_gain, AntennaParams, Band, EbdParams, LinkParams, Target,
};
use terradeploy_core::{
    cooperative_sum, fitness, los_query, repair, violations, Aabb2, Bvh, Deployment, GaussianBump,
    LosQuery, Point3, Scenario, TerrainContext, TerrainModel, UavState,
};

use core::f64::consts::{FRAC_PI_2, PI};

const LOW_BAND: Band = Band { min_mhz: 100.0, max_mhz: 200.0 };
const HIGH_BAND: Band = Band { min_mhz: 250.0, max_mhz: 350.0 };

/// Two targets, two band classes, mild terrain-free geometry. The LoS
/// tolerance is coarse because these properties exercise the objective
/// algebra, not the bisection resolution.
fn structural_scenario() -> Scenario {
    Scenario {
        targets: vec![
            Target {
                position: Point3::new(500.0, 600.0, -5.0),
                channels: vec![150.0],
                tx_power: 1.0,
            },
            Target {
                position: Point3::new(1500.0, 400.0, -5.0),
                channels: vec![120.0, 260.0],
                tx_power: 0.1,
            },
        ],
        uav_bands: vec![LOW_BAND, HIGH_BAND],
        ebd: EbdParams { samples: 1000, elements: 4, p_fa: 1e-3 },
        antenna: AntennaParams {
            beamwidth_az: 60f64.to_radians(),
            beamwidth_el: 45f64.to_radians(),
        },
        link: LinkParams { ref_gain: 1e-4, elements: 4, noise_power: 1e-12 },
        energy: EnergyParams {
            hover_power: 200.0,
            scale_height: 8000.0,
            hover_duration: 60.0,
            safe_altitude: 50.0,
            altitude_exponent: DEFAULT_ALTITUDE_EXPONENT,
        },
        bounds: ConstraintBounds {
            region: Aabb2::new(0.0, 3000.0, 0.0, 3000.0),
            min_target_distance: 300.0,
            min_uav_distance: 150.0,
            safe_altitude: 50.0,
            max_altitude: 1500.0,
        },
        weights: FitnessWeights { detection: 2.0, energy: 0.005, penalty: 1e6 },
        los: LosParams { box_sigmas: 2.0, epsilon: 1e-3 },
    }
}

fn arb_uav() -> impl Strategy<Value = UavState> {
    (
        -500.0..3500.0f64,
        -500.0..3500.0f64,
        1.0..1400.0f64,
        -PI..PI,
        -FRAC_PI_2..FRAC_PI_2,
        prop::bool::ANY,
    )
        .prop_map(|(x, y, z, azimuth, elevation, low)| UavState {
            position: Point3::new(x, y, z),
            azimuth,
            elevation,
            band: if low { LOW_BAND } else { HIGH_BAND },
        })
}

fn arb_bump(height: core::ops::Range<f64>) -> impl Strategy<Value = GaussianBump> {
    (height, 200.0..2800.0f64, 200.0..2800.0f64, 20.0..80.0f64, 20.0..80.0f64).prop_map(
        |(h, cx, cy, sx, sy)| GaussianBump {
            height: h,
            center_x: cx,
            center_y: cy,
            sigma_x: sx,
            sigma_y: sy,
        },
    )
}

fn arb_model(count: core::ops::Range<usize>, height: core::ops::Range<f64>) -> impl Strategy<Value = TerrainModel> {
    (-50.0..50.0f64, prop::collection::vec(arb_bump(height), count))
        .prop_map(|(base, components)| TerrainModel { base, components })
}

proptest! {
    #[test]
    fn wrap_angle_lands_in_the_half_open_interval(theta in -1e4..1e4f64) {
        let w = wrap_angle(theta);
        prop_assert!(w > -PI && w <= PI, "wrap({theta}) = {w} escaped (-pi, pi]");
        prop_assert_eq!(wrap_angle(w), w, "wrapping twice moved the angle");
    }

    #[test]
    fn wrap_angle_is_periodic(theta in -20.0..20.0f64, k in -3i32..=3) {
        let shifted = wrap_angle(theta + 2.0 * PI * f64::from(k));
        let direct = wrap_angle(theta);
        // the difference is either ~0 or ~2*pi when the pair straddles the seam
        let gap = (shifted - direct).abs();
        let off_seam = gap.min((gap - 2.0 * PI).abs());
        prop_assert!(off_seam < 1e-9, "wrap({theta} + {k}*2pi) = {shifted}, wrap({theta}) = {direct}");
    }

    #[test]
    fn antenna_gain_stays_in_the_unit_interval(
        uav in arb_uav(),
        tx in -500.0..3500.0f64,
        ty in -500.0..3500.0f64,
        tz in -400.0..900.0f64,
        los in prop::bool::ANY,
    ) {
        let sc = structural_scenario();
        let target = Target { position: Point3::new(tx, ty, tz), channels: vec![150.0], tx_power: 1.0 };
        prop_assume!(target.position != uav.position);
        let g = antenna_gain(&uav, &target, &sc.antenna, los).unwrap();
        prop_assert!((0.0..=1.0).contains(&g), "gain {g} outside [0, 1]");
        if !los {
            prop_assert_eq!(g, 0.0, "gain must vanish without line of sight");
        }
    }

    #[test]
    fn antenna_gain_is_symmetric_about_the_boresight(
        boresight in -PI..PI,
        offset in 0.0..1.5f64,
        dist in 50.0..2000.0f64,
        elevation in -0.6..0.6f64,
    ) {
        let ap = structural_scenario().antenna;
        let uav = UavState {
            position: Point3::new(0.0, 0.0, 100.0),
            azimuth: boresight,
            elevation,
            band: LOW_BAND,
        };
        let place = |az: f64| Target {
            position: Point3::new(dist * az.cos(), dist * az.sin(), 100.0 + dist * elevation.tan()),
            channels: vec![150.0],
            tx_power: 1.0,
        };
        let left = antenna_gain(&uav, &place(boresight + offset), &ap, true).unwrap();
        let right = antenna_gain(&uav, &place(boresight - offset), &ap, true).unwrap();
        prop_assert!(
            (left - right).abs() <= 1e-9 * (1.0 + left.abs()),
            "mirrored offsets scored {left} vs {right}"
        );
    }

    #[test]
    fn fitness_is_the_weighted_sum_of_its_parts(
        mut uavs in prop::collection::vec(arb_uav(), 1..4),
        model in arb_model(0..3, -100.0..150.0),
    ) {
        let sc = structural_scenario();
        let tc = TerrainContext::new(&model, &sc.los);
        // the energy model only covers UAVs strictly above the surface,
        // so reinterpret the generated altitude as a lift above terrain
        for u in &mut uavs {
            u.position.z += model.elevation(u.position.x, u.position.y);
        }
        let d = Deployment::new(uavs);
        let report = fitness(&d, &sc, &sc.weights, &tc).unwrap();

        let ctx = sc.sensing_context(&tc);
        let (p_sum, _) = cooperative_sum(&d.uavs, &sc.targets, &ctx).unwrap();
        let energy = terradeploy_core::energy::avg_excess_energy(&d.uavs, &model, &sc.energy).unwrap();
        let v = violations(&d, &sc.targets, &sc.bounds, &model);

        prop_assert_eq!(report.p_sum, p_sum);
        prop_assert_eq!(report.avg_excess_energy, energy);
        prop_assert_eq!(report.violations, v);
        let expected = sc.weights.detection * p_sum
            - sc.weights.energy * energy
            - sc.weights.penalty * v.total();
        let scale = 1.0 + expected.abs();
        prop_assert!(
            (report.fitness - expected).abs() <= 1e-9 * scale,
            "reported {} but the parts combine to {}",
            report.fitness,
            expected
        );
    }

    #[test]
    fn adding_a_uav_never_lowers_the_cooperative_sum(
        fleet in prop::collection::vec(arb_uav(), 1..4),
        extra in arb_uav(),
        model in arb_model(0..3, -100.0..150.0),
    ) {
        let sc = structural_scenario();
        let tc = TerrainContext::new(&model, &sc.los);
        let ctx = sc.sensing_context(&tc);
        let (without, _) = cooperative_sum(&fleet, &sc.targets, &ctx).unwrap();
        let mut grown = fleet.clone();
        grown.push(extra);
        let (with, _) = cooperative_sum(&grown, &sc.targets, &ctx).unwrap();
        prop_assert!(
            with >= without,
            "sum fell from {without} to {with} after adding a UAV"
        );
    }

    #[test]
    fn repair_zeroes_the_box_deficits(
        uavs in prop::collection::vec(arb_uav(), 1..5),
        model in arb_model(0..3, 20.0..300.0),
        wild_az in -40.0..40.0f64,
        wild_el in -4.0..4.0f64,
    ) {
        let sc = structural_scenario();
        let mut d = Deployment::new(uavs);
        // push one UAV far out of every box to exercise the clamps
        d.uavs[0].azimuth = wild_az;
        d.uavs[0].elevation = wild_el;
        d.uavs[0].position.z = -500.0;

        let repaired = repair(&d, &sc.targets, &sc.bounds, &model);
        let v = violations(&repaired, &sc.targets, &sc.bounds, &model);
        prop_assert_eq!(v.region, 0.0, "region deficit survived repair");
        prop_assert_eq!(v.orientation, 0.0, "orientation deficit survived repair");
        prop_assert_eq!(v.altitude, 0.0, "altitude deficit survived repair");
        prop_assert!(v.target_separation >= 0.0 && v.uav_separation >= 0.0);

        if v.is_feasible() {
            let again = repair(&repaired, &sc.targets, &sc.bounds, &model);
            prop_assert_eq!(again, repaired, "repair moved an already feasible deployment");
        }
    }

    #[test]
    fn segments_above_every_summit_are_visible_both_ways(
        model in arb_model(1..6, -80.0..150.0),
        x0 in -500.0..3500.0f64,
        y0 in -500.0..3500.0f64,
        x1 in -500.0..3500.0f64,
        y1 in -500.0..3500.0f64,
        lift in 1.0..200.0f64,
    ) {
        prop_assume!((x0, y0) != (x1, y1));
        let summit: f64 = model.base
            + model.components.iter().map(|c| c.height.max(0.0)).sum::<f64>();
        let from = Point3::new(x0, y0, summit + lift);
        let to = Point3::new(x1, y1, summit + lift + 0.5);

        let bvh = Bvh::build(&model, 2.0);
        let q = LosQuery::new(from, to, 1e-4).unwrap();
        let fast = los_query(&bvh, &model, &q);
        let dense = los_dense_oracle(&model, from, to, 1e-3).unwrap();
        prop_assert!(fast.visible, "bisection flagged a segment that clears every summit");
        prop_assert!(dense.visible, "dense march flagged a segment that clears every summit");
    }

    #[test]
    fn segments_buried_in_a_hill_are_blocked_both_ways(
        model in arb_model(1..6, 50.0..150.0),
        dir in 0.0..PI,
    ) {
        let c = &model.components[0];
        let reach = 0.3 * c.sigma_x.min(c.sigma_y);
        let from = Point3::new(
            c.center_x - reach * dir.cos(),
            c.center_y - reach * dir.sin(),
            model.base + 20.0,
        );
        let to = Point3::new(
            c.center_x + reach * dir.cos(),
            c.center_y + reach * dir.sin(),
            model.base + 20.0,
        );
        // every height is positive, and within 0.3 sigma the first bump
        // alone holds the surface above base + h * exp(-0.09) > base + 45
        let bvh = Bvh::build(&model, 2.0);
        let q = LosQuery::new(from, to, 1e-4).unwrap();
        let fast = los_query(&bvh, &model, &q);
        let dense = los_dense_oracle(&model, from, to, 1e-3).unwrap();
        prop_assert!(!fast.visible, "bisection missed a buried segment");
        prop_assert!(!dense.visible, "dense march missed a buried segment");
    }

    #[test]
    fn bvh_shape_tracks_the_component_count(model in arb_model(0..40, -100.0..150.0)) {
        let bvh = Bvh::build(&model, 2.0);
        let g = model.components.len();
        prop_assert_eq!(bvh.leaf_count(), g);
        prop_assert_eq!(bvh.is_empty(), g == 0);
        if g > 0 {
            let bound = (g as f64).log2().ceil() as usize + 1;
            prop_assert!(
                bvh.height() <= bound,
                "height {} exceeds the balance bound {} for {} leaves",
                bvh.height(),
                bound,
                g
            );
            let root = bvh.root_box().unwrap();
            for (_, leaf) in bvh.leaves() {
                prop_assert!(
                    root.contains(leaf.min_x, leaf.min_y) && root.contains(leaf.max_x, leaf.max_y),
                    "leaf box escapes the root box"
                );
            }
        } else {
            prop_assert!(bvh.root_box().is_none());
        }
    }
}
