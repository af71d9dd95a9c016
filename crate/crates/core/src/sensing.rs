//! Spectrum sensing: eigenvalue-based detection in closed form, the
//! directional antenna pattern, link SINR, and band-gated cooperative
//! OR-fusion of per-link detection probabilities.
//!
//! The closed forms (threshold, detection probability) are what the
//! optimizer maximizes. `simulate_ebd` draws raw samples and measures
//! empirical rates; it exists to validate the closed forms and is never
//! called on the optimization path.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::{Complex, DMatrix};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::Point3;
use crate::los::{los_query, Bvh, LosError, LosQuery};
use crate::math::{q, q_inv, wrap_angle};
use crate::rng::stream;
use crate::terrain::TerrainModel;

/// 2*sqrt(2 ln 2): converts a half-power beamwidth into a Gaussian sigma.
const HALF_POWER_TO_SIGMA: f64 = 2.3548200450309493;

/// Eigenvalue-based detector parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbdParams {
    /// Samples per sensing window (K).
    pub samples: u32,
    /// Sensing elements, i.e. covariance dimension (L).
    pub elements: u32,
    /// Target false-alarm probability.
    pub p_fa: f64,
}

impl EbdParams {
    pub fn validate(&self) -> Result<(), SensingError> {
        if self.samples < 2 {
            return Err(SensingError::InvalidEbdParams("samples must be >= 2"));
        }
        if self.elements < 1 {
            return Err(SensingError::InvalidEbdParams("elements must be >= 1"));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(SensingError::InvalidEbdParams("p_fa must lie in (0,1)"));
        }
        Ok(())
    }

    /// The closed forms assume samples >> elements; callers should warn
    /// the user when this returns true.
    pub fn closed_form_marginal(&self) -> bool {
        self.samples < 10 * self.elements
    }
}

/// Directional antenna mainlobe, parameterized by half-power beamwidths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AntennaParams {
    /// Azimuth half-power beamwidth (rad).
    pub beamwidth_az: f64,
    /// Elevation half-power beamwidth (rad).
    pub beamwidth_el: f64,
}

impl AntennaParams {
    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.beamwidth_az > 0.0 && self.beamwidth_az < core::f64::consts::PI) {
            return Err(SensingError::InvalidAntennaParams("azimuth beamwidth must lie in (0, pi)"));
        }
        if !(self.beamwidth_el > 0.0 && self.beamwidth_el < core::f64::consts::FRAC_PI_2) {
            return Err(SensingError::InvalidAntennaParams("elevation beamwidth must lie in (0, pi/2)"));
        }
        Ok(())
    }

    pub fn sigma_az(&self) -> f64 {
        self.beamwidth_az / HALF_POWER_TO_SIGMA
    }

    pub fn sigma_el(&self) -> f64 {
        self.beamwidth_el / HALF_POWER_TO_SIGMA
    }
}

/// Everything that scales one sensing link's SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Target transmit power (W).
    pub tx_power: f64,
    /// Reference channel gain at 1 m, linear.
    pub ref_gain: f64,
    /// Receive antenna element count.
    pub elements: u32,
    /// Noise power (W).
    pub noise_power: f64,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.tx_power > 0.0 && self.ref_gain > 0.0 && self.elements > 0 && self.noise_power > 0.0)
        {
            return Err(SensingError::InvalidLinkBudget("all link budget fields must be positive"));
        }
        Ok(())
    }
}

/// Per-link constants shared by every target; combine with a target's
/// transmit power to get its [`LinkBudget`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub ref_gain: f64,
    pub elements: u32,
    pub noise_power: f64,
}

impl LinkParams {
    pub fn budget(&self, tx_power: f64) -> LinkBudget {
        LinkBudget {
            tx_power,
            ref_gain: self.ref_gain,
            elements: self.elements,
            noise_power: self.noise_power,
        }
    }
}

/// An open frequency interval in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub min_mhz: f64,
    pub max_mhz: f64,
}

impl Band {
    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.min_mhz < self.max_mhz) || !self.min_mhz.is_finite() || !self.max_mhz.is_finite() {
            return Err(SensingError::InvalidBand);
        }
        Ok(())
    }

    /// Open-interval membership; a channel equal to an edge is out of band.
    pub fn contains(&self, f_mhz: f64) -> bool {
        self.min_mhz < f_mhz && f_mhz < self.max_mhz
    }
}

/// A transmitter to detect.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub position: Point3,
    /// Channels the target may occupy (MHz), strictly increasing.
    pub channels: Vec<f64>,
    /// Transmit power (W).
    pub tx_power: f64,
}

impl Target {
    pub fn validate(&self) -> Result<(), SensingError> {
        if self.channels.is_empty() {
            return Err(SensingError::InvalidTarget("channel set is empty"));
        }
        if self.channels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SensingError::InvalidTarget("channels must be strictly increasing"));
        }
        if !self.position.is_finite() || !(self.tx_power > 0.0) || !self.tx_power.is_finite() {
            return Err(SensingError::InvalidTarget("position/power must be finite and positive"));
        }
        Ok(())
    }
}

/// One UAV's decision variables plus its fixed sensing band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub position: Point3,
    /// Boresight azimuth (rad), in (-pi, pi].
    pub azimuth: f64,
    /// Boresight elevation (rad), in [-pi/2, pi/2].
    pub elevation: f64,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensingError {
    InvalidEbdParams(&'static str),
    InvalidAntennaParams(&'static str),
    InvalidLinkBudget(&'static str),
    InvalidBand,
    InvalidTarget(&'static str),
    CoincidentPositions,
    NonPositiveDistance { value: f64 },
    Los(LosError),
}

impl fmt::Display for SensingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensingError::InvalidEbdParams(m) => write!(f, "invalid detector parameters: {m}"),
            SensingError::InvalidAntennaParams(m) => write!(f, "invalid antenna parameters: {m}"),
            SensingError::InvalidLinkBudget(m) => write!(f, "invalid link budget: {m}"),
            SensingError::InvalidBand => write!(f, "band must satisfy f_min < f_max"),
            SensingError::InvalidTarget(m) => write!(f, "invalid target: {m}"),
            SensingError::CoincidentPositions => write!(f, "UAV and target positions coincide"),
            SensingError::NonPositiveDistance { value } => {
                write!(f, "link distance must be positive, got {value}")
            }
            SensingError::Los(e) => write!(f, "line-of-sight query failed: {e}"),
        }
    }
}

impl core::error::Error for SensingError {}

impl From<LosError> for SensingError {
    fn from(e: LosError) -> Self {
        SensingError::Los(e)
    }
}

/// Detection threshold on the eigenvalue ratio:
/// `1 + sqrt(2/K) * Qinv(P_fa)`.
pub fn ebd_threshold(p: &EbdParams) -> Result<f64, SensingError> {
    p.validate()?;
    Ok(1.0 + (2.0 / p.samples as f64).sqrt() * q_inv(p.p_fa))
}

/// Closed-form detection probability at the given linear SNR:
/// `Q((Qinv(P_fa) - snr*sqrt(K/2)) / (1 + snr))`.
///
/// Total on finite snr >= 0; at snr = 0 it reduces to P_fa.
pub fn detection_probability(snr: f64, p: &EbdParams) -> f64 {
    debug_assert!(snr >= 0.0 && snr.is_finite());
    let k = p.samples as f64;
    q((q_inv(p.p_fa) - snr * (k / 2.0).sqrt()) / (1.0 + snr))
}

/// Mainlobe gain toward a target: angular offsets from boresight are
/// wrapped (azimuth) into (-pi, pi], and the gain is the separable
/// Gaussian pattern gated by the beamwidth cutoffs and the LoS flag.
pub fn antenna_gain(
    uav: &UavState,
    target: &Target,
    ap: &AntennaParams,
    los: bool,
) -> Result<f64, SensingError> {
    let dx = target.position.x - uav.position.x;
    let dy = target.position.y - uav.position.y;
    let dz = target.position.z - uav.position.z;
    if dx == 0.0 && dy == 0.0 && dz == 0.0 {
        return Err(SensingError::CoincidentPositions);
    }
    // full-quadrant azimuth; elevation from the ground-plane distance
    let az_to_target = dy.atan2(dx);
    let el_to_target = (dz / dx.hypot(dy)).atan();
    let d_az = wrap_angle(az_to_target - uav.azimuth);
    let d_el = el_to_target - uav.elevation;
    if d_az.abs() > ap.beamwidth_az || d_el.abs() > ap.beamwidth_el {
        return Ok(0.0);
    }
    if !los {
        return Ok(0.0);
    }
    let sa = ap.sigma_az();
    let se = ap.sigma_el();
    Ok((-d_az * d_az / (2.0 * sa * sa) - d_el * d_el / (2.0 * se * se)).exp())
}

/// Link SNR: `tx_power * ref_gain * elements * gain / (d^2 * noise)`.
pub fn sinr(lb: &LinkBudget, gain: f64, d: f64) -> Result<f64, SensingError> {
    if !(d > 0.0) {
        return Err(SensingError::NonPositiveDistance { value: d });
    }
    Ok(lb.tx_power * lb.ref_gain * lb.elements as f64 * gain / (d * d * lb.noise_power))
}

/// Immutable surroundings for link evaluations.
pub struct SensingContext<'a> {
    pub terrain: &'a TerrainModel,
    pub bvh: &'a Bvh,
    pub ebd: &'a EbdParams,
    pub antenna: &'a AntennaParams,
    pub link: &'a LinkParams,
    /// Interval tolerance handed to every LoS query.
    pub los_epsilon: f64,
}

impl SensingContext<'_> {
    /// Detection probability of the (uav, target) pair ignoring the band
    /// gate. Channel frequency does not enter the SNR model, so this is
    /// shared by all of the target's channels.
    fn pair_probability(&self, uav: &UavState, target: &Target) -> Result<f64, SensingError> {
        let q = LosQuery::new(uav.position, target.position, self.los_epsilon)
            .map_err(|e| match e {
                LosError::DegenerateSegment => SensingError::CoincidentPositions,
                other => SensingError::Los(other),
            })?;
        let los = los_query(self.bvh, self.terrain, &q).visible;
        let gain = antenna_gain(uav, target, self.antenna, los)?;
        let d = uav.position.dist(&target.position);
        let budget = self.link.budget(target.tx_power);
        let snr = sinr(&budget, gain, d)?;
        Ok(detection_probability(snr, self.ebd))
    }
}

/// Per-link detection probability on one channel: zero when the channel
/// falls outside the UAV's band (open interval), otherwise the closed
/// form evaluated with LoS-gated antenna gain. Note a blocked but
/// in-band link floors at P_fa, not at zero.
pub fn link_detection_probability(
    uav: &UavState,
    target: &Target,
    f_mhz: f64,
    ctx: &SensingContext<'_>,
) -> Result<f64, SensingError> {
    if !uav.band.contains(f_mhz) {
        return Ok(0.0);
    }
    ctx.pair_probability(uav, target)
}

/// Cooperative sum detection probability.
///
/// Fuses per-link probabilities with the OR rule per target and channel,
/// `P = 1 - prod_m (1 - P_m)`, and sums the fused values over every
/// target channel. Returns the scalar and the per-target rows of fused
/// probabilities aligned with each target's channel list.
pub fn cooperative_sum(
    uavs: &[UavState],
    targets: &[Target],
    ctx: &SensingContext<'_>,
) -> Result<(f64, Vec<Vec<f64>>), SensingError> {
    let mut matrix = Vec::with_capacity(targets.len());
    let mut p_sum = 0.0;
    for target in targets {
        // channel-independent pair probabilities, computed on demand
        let mut pair: Vec<Option<f64>> = vec![None; uavs.len()];
        let mut row = Vec::with_capacity(target.channels.len());
        for &f in &target.channels {
            let mut miss_all = 1.0;
            for (m, uav) in uavs.iter().enumerate() {
                let p = if uav.band.contains(f) {
                    match pair[m] {
                        Some(p) => p,
                        None => {
                            let p = ctx.pair_probability(uav, target)?;
                            pair[m] = Some(p);
                            p
                        }
                    }
                } else {
                    0.0
                };
                miss_all *= 1.0 - p;
            }
            let fused = 1.0 - miss_all;
            p_sum += fused;
            row.push(fused);
        }
        matrix.push(row);
    }
    Ok((p_sum, matrix))
}

/// Draws raw detector samples and measures empirical detection and
/// false-alarm rates against the closed-form threshold.
///
/// Per trial, K complex Gaussian vectors of dimension L are drawn under
/// H0 (unit-variance noise) and under H1 (noise plus a rank-one signal
/// whose aggregate power across the L elements equals `snr`, matching
/// the closed form's top-eigenvalue mean 1 + snr). The test statistic is
/// the extreme-eigenvalue ratio of the sample covariance. Deterministic
/// for fixed (p, snr, trials, seed); the same noise draws are reused
/// across snr values for a given seed and trial index.
pub fn simulate_ebd(
    p: &EbdParams,
    snr: f64,
    trials: u32,
    seed: u64,
) -> Result<(f64, f64), SensingError> {
    p.validate()?;
    if p.elements < 2 {
        return Err(SensingError::InvalidEbdParams("simulator needs elements >= 2"));
    }
    if trials < 1 {
        return Err(SensingError::InvalidEbdParams("trials must be >= 1"));
    }
    let threshold = ebd_threshold(p)?;
    let l = p.elements as usize;
    let k = p.samples as usize;
    let amp = (snr / l as f64).sqrt();
    let inv_sqrt2 = core::f64::consts::FRAC_1_SQRT_2;

    let mut detections = 0u32;
    let mut false_alarms = 0u32;
    let mut y = vec![Complex::new(0.0, 0.0); l];
    for trial in 0..trials {
        let mut rng = stream(seed, "ebd-trial", &[trial as u64]);
        for hypothesis in 0..2 {
            let mut acc = DMatrix::<Complex<f64>>::zeros(l, l);
            for _ in 0..k {
                for slot in y.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *slot = Complex::new(re * inv_sqrt2, im * inv_sqrt2);
                }
                if hypothesis == 1 {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let s = Complex::new(re * inv_sqrt2, im * inv_sqrt2) * amp;
                    for slot in y.iter_mut() {
                        *slot += s;
                    }
                }
                for i in 0..l {
                    for j in i..l {
                        acc[(i, j)] += y[i] * y[j].conj();
                    }
                }
            }
            let scale = 1.0 / k as f64;
            for i in 0..l {
                for j in i..l {
                    let v = acc[(i, j)] * scale;
                    acc[(i, j)] = v;
                    if i != j {
                        acc[(j, i)] = v.conj();
                    }
                }
            }
            let eig = acc.symmetric_eigen();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in eig.eigenvalues.iter() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let detected = hi / lo > threshold;
            if hypothesis == 0 {
                if detected {
                    false_alarms += 1;
                }
            } else if detected {
                detections += 1;
            }
        }
    }
    Ok((
        detections as f64 / trials as f64,
        false_alarms as f64 / trials as f64,
    ))
}
