//! Altitude-dependent hover energy and the fleet's average excess over
//! the safety-floor cost.

use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::sensing::UavState;
use crate::terrain::TerrainModel;

/// Fixed exponent of the air-density hover model.
pub const DEFAULT_ALTITUDE_EXPONENT: f64 = 2.128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Hover power at zero relative altitude (W).
    pub hover_power: f64,
    /// Atmospheric scale height (m); the model diverges as h approaches it.
    pub scale_height: f64,
    /// Hover duration per sensing session (s).
    pub hover_duration: f64,
    /// Safety floor above terrain (m); the excess-energy reference point.
    pub safe_altitude: f64,
    /// Exponent of the density correction, default [`DEFAULT_ALTITUDE_EXPONENT`].
    pub altitude_exponent: f64,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let ok = self.hover_power > 0.0
            && self.scale_height > 0.0
            && self.hover_duration > 0.0
            && self.safe_altitude > 0.0
            && self.altitude_exponent > 0.0
            && self.safe_altitude < self.scale_height
            && self.hover_power.is_finite()
            && self.scale_height.is_finite()
            && self.hover_duration.is_finite()
            && self.altitude_exponent.is_finite();
        if ok {
            Ok(())
        } else {
            Err(EnergyError::InvalidParams)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnergyError {
    InvalidParams,
    AltitudeOutOfRange { value: f64 },
    UavOutsideDomain { index: usize, altitude: f64 },
    EmptyFleet,
}

impl fmt::Display for EnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnergyError::InvalidParams => write!(f, "energy parameters out of range"),
            EnergyError::AltitudeOutOfRange { value } => {
                write!(f, "relative altitude {value} outside (0, scale_height)")
            }
            EnergyError::UavOutsideDomain { index, altitude } => write!(
                f,
                "UAV {index} at relative altitude {altitude} outside (0, scale_height)"
            ),
            EnergyError::EmptyFleet => write!(f, "deployment has no UAVs"),
        }
    }
}

impl core::error::Error for EnergyError {}

/// Hover energy at relative altitude h above terrain:
/// `P0 * t_d * (1 - h/H_s)^(-exponent)`, valid for 0 < h < H_s.
pub fn hover_energy(h: f64, ep: &EnergyParams) -> Result<f64, EnergyError> {
    if !(h > 0.0 && h < ep.scale_height) {
        return Err(EnergyError::AltitudeOutOfRange { value: h });
    }
    Ok(ep.hover_power * ep.hover_duration * (1.0 - h / ep.scale_height).powf(-ep.altitude_exponent))
}

/// Fleet-average hover energy in excess of the safety-floor cost:
/// `(1/M) * sum_m [E(h_m) - E(H_safe)]` with `h_m = z_m - terrain(x_m, y_m)`.
///
/// Terms go negative for UAVs hovering below the safety floor; that is
/// reported as-is, not clamped, since the repair operator keeps
/// optimizer candidates at or above the floor. Altitudes outside the
/// model domain are rejected with the offending UAV index.
pub fn avg_excess_energy(
    uavs: &[UavState],
    terrain: &TerrainModel,
    ep: &EnergyParams,
) -> Result<f64, EnergyError> {
    if uavs.is_empty() {
        return Err(EnergyError::EmptyFleet);
    }
    let floor = hover_energy(ep.safe_altitude, ep)?;
    let mut sum = 0.0;
    for (index, uav) in uavs.iter().enumerate() {
        let h = uav.position.z - terrain.elevation(uav.position.x, uav.position.y);
        let e = hover_energy(h, ep)
            .map_err(|_| EnergyError::UavOutsideDomain { index, altitude: h })?;
        sum += e - floor;
    }
    Ok(sum / uavs.len() as f64)
}
