//! The full problem description: targets, fleet bands, physical
//! constants, constraint bounds, and objective weights.

use alloc::vec::Vec;
use core::fmt;

use crate::deploy::{ConstraintBounds, FitnessWeights};
use crate::energy::{EnergyError, EnergyParams};
use crate::los::Bvh;
use crate::sensing::{
    AntennaParams, Band, EbdParams, LinkParams, SensingContext, SensingError, Target,
};
use crate::terrain::TerrainModel;

/// Line-of-sight evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosParams {
    /// Half-width of each component's bounding box, in sigmas.
    pub box_sigmas: f64,
    /// Bisection tolerance on the segment parameter.
    pub epsilon: f64,
}

impl Default for LosParams {
    fn default() -> Self {
        Self { box_sigmas: 2.0, epsilon: 1e-5 }
    }
}

/// A complete sensing-deployment problem. The UAV count is the length
/// of `uav_bands`; bands are fixed per UAV and are not decision
/// variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub targets: Vec<Target>,
    pub uav_bands: Vec<Band>,
    pub ebd: EbdParams,
    pub antenna: AntennaParams,
    pub link: LinkParams,
    pub energy: EnergyParams,
    pub bounds: ConstraintBounds,
    pub weights: FitnessWeights,
    pub los: LosParams,
}

impl Scenario {
    pub fn uav_count(&self) -> usize {
        self.uav_bands.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.targets.is_empty() {
            return Err(ScenarioError::Invalid("scenario needs at least one target"));
        }
        if self.uav_bands.is_empty() {
            return Err(ScenarioError::Invalid("scenario needs at least one UAV band"));
        }
        for t in &self.targets {
            t.validate()?;
        }
        for b in &self.uav_bands {
            b.validate()?;
        }
        self.ebd.validate()?;
        self.antenna.validate()?;
        if !(self.link.ref_gain > 0.0 && self.link.elements > 0 && self.link.noise_power > 0.0) {
            return Err(ScenarioError::Invalid("link constants must be positive"));
        }
        self.energy.validate()?;
        self.bounds.validate().map_err(ScenarioError::Invalid)?;
        self.weights.validate().map_err(ScenarioError::Invalid)?;
        if !(self.los.box_sigmas > 0.0) {
            return Err(ScenarioError::Invalid("box_sigmas must be positive"));
        }
        if !(self.los.epsilon > 0.0 && self.los.epsilon < 1.0) {
            return Err(ScenarioError::Invalid("los epsilon must lie in (0,1)"));
        }
        if self.bounds.safe_altitude != self.energy.safe_altitude {
            return Err(ScenarioError::Invalid(
                "safe altitude differs between bounds and energy parameters",
            ));
        }
        if self.bounds.max_altitude >= self.energy.scale_height {
            return Err(ScenarioError::Invalid(
                "max altitude must stay below the energy model's scale height",
            ));
        }
        Ok(())
    }

    /// Per-link evaluation context over a prepared terrain.
    pub fn sensing_context<'a>(&'a self, tc: &'a TerrainContext<'a>) -> SensingContext<'a> {
        SensingContext {
            terrain: tc.terrain,
            bvh: &tc.bvh,
            ebd: &self.ebd,
            antenna: &self.antenna,
            link: &self.link,
            los_epsilon: self.los.epsilon,
        }
    }
}

/// Terrain plus its acceleration structure, built once and shared by
/// every fitness evaluation.
#[derive(Debug, Clone)]
pub struct TerrainContext<'a> {
    pub terrain: &'a TerrainModel,
    pub bvh: Bvh,
}

impl<'a> TerrainContext<'a> {
    pub fn new(terrain: &'a TerrainModel, los: &LosParams) -> Self {
        Self { terrain, bvh: Bvh::build(terrain, los.box_sigmas) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    Invalid(&'static str),
    Sensing(SensingError),
    Energy(EnergyError),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Invalid(m) => write!(f, "invalid scenario: {m}"),
            ScenarioError::Sensing(e) => write!(f, "invalid scenario: {e}"),
            ScenarioError::Energy(e) => write!(f, "invalid scenario: {e}"),
        }
    }
}

impl core::error::Error for ScenarioError {}

impl From<SensingError> for ScenarioError {
    fn from(e: SensingError) -> Self {
        ScenarioError::Sensing(e)
    }
}

impl From<EnergyError> for ScenarioError {
    fn from(e: EnergyError) -> Self {
        ScenarioError::Energy(e)
    }
}
