//! Per-scene optimization of the view and time decoders.

mod losses;
mod model;
mod optimize;

pub use losses::{time_loss, view_loss, LossTerms, TimeTargets, ViewTargets};
pub use model::{ModelHeader, SavedModel, TimeModel, Training, ViewModel};
pub use optimize::{new_time_model, new_view_model, optimize_time, optimize_view, LossReport, Trained};

use serde::{Deserialize, Serialize};

use crate::geometry::MergeMode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub iterations: usize,
    pub lr: f32,
    /// Learning-rate factor applied at one and two thirds of the run.
    pub lr_decay: f32,
    pub seed: u64,
    /// Decoder capacity factor.
    pub capacity: usize,
    /// Emit a [`LossReport`] every this many iterations (0 = never).
    pub log_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { iterations: 20_000, lr: 1e-4, lr_decay: 0.4, seed: 0, capacity: 16, log_every: 500 }
    }
}

impl OptimConfig {
    /// Jacobian supervision weight for frames `width` pixels wide.
    pub fn lambda(width: usize) -> f32 {
        20.0 / width as f32
    }

    /// Per-plane regularization weight for frames `width` pixels wide.
    pub fn gamma(width: usize) -> f32 {
        1.0 / width as f32
    }

    pub fn lr_at(&self, iteration: usize) -> f32 {
        let t = self.iterations;
        let drops = (iteration >= t / 3) as i32 + (iteration >= 2 * t / 3) as i32;
        self.lr * self.lr_decay.powi(drops)
    }
}

/// Switches for the view objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewVariant {
    pub planes: usize,
    pub merge: MergeMode,
    pub plane_regularization: bool,
    /// Restrict the per-plane term to each plane's disparity band.
    pub plane_masks: bool,
    pub jacobian_supervision: bool,
    pub occlusion_mask: bool,
}

impl Default for ViewVariant {
    fn default() -> Self {
        Self {
            planes: 6,
            merge: MergeMode::Max,
            plane_regularization: true,
            plane_masks: true,
            jacobian_supervision: true,
            occlusion_mask: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    /// One two-channel decoder, the previous-frame branch read at a shifted
    /// coordinate.
    #[default]
    NonUniform,
    /// One two-channel Jacobian serves both directions.
    SingleJacobian,
    /// A four-channel decoder queried once at the frame time.
    DualJacobian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    SinglePlane,
    NoPlaneReg,
    NoDispMask,
    SumMerge,
    SingleJac,
    DualJac,
    AppearanceOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::SinglePlane,
        Ablation::NoPlaneReg,
        Ablation::NoDispMask,
        Ablation::SumMerge,
        Ablation::SingleJac,
        Ablation::DualJac,
        Ablation::AppearanceOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::SinglePlane => "single-plane",
            Ablation::NoPlaneReg => "no-plane-reg",
            Ablation::NoDispMask => "no-disp-mask",
            Ablation::SumMerge => "sum-merge",
            Ablation::SingleJac => "single-jac",
            Ablation::DualJac => "dual-jac",
            Ablation::AppearanceOnly => "appearance-only",
        }
    }

    pub fn is_time(self) -> bool {
        matches!(self, Ablation::SingleJac | Ablation::DualJac)
    }

    pub fn apply_view(self, v: &mut ViewVariant) -> Result<()> {
        match self {
            Ablation::SinglePlane => v.planes = 1,
            Ablation::NoPlaneReg => v.plane_regularization = false,
            Ablation::NoDispMask => v.plane_masks = false,
            Ablation::SumMerge => v.merge = MergeMode::Sum,
            Ablation::AppearanceOnly => {
                v.planes = 1;
                v.plane_regularization = false;
                v.jacobian_supervision = false;
                v.occlusion_mask = false;
            }
            Ablation::SingleJac | Ablation::DualJac => {
                return Err(Error::Config(format!("{} applies to time optimization", self.name())))
            }
        }
        Ok(())
    }

    pub fn time_mode(self) -> Result<TimeMode> {
        match self {
            Ablation::SingleJac => Ok(TimeMode::SingleJacobian),
            Ablation::DualJac => Ok(TimeMode::DualJacobian),
            _ => Err(Error::Config(format!("{} applies to view optimization", self.name()))),
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_drops_at_thirds() {
        let c = OptimConfig { iterations: 300, ..Default::default() };
        assert_eq!(c.lr_at(0), 1e-4);
        assert_eq!(c.lr_at(99), 1e-4);
        assert!((c.lr_at(100) - 4e-5).abs() < 1e-12);
        assert!((c.lr_at(299) - 1.6e-5).abs() < 1e-12);
        assert_eq!(OptimConfig::lambda(160), 0.125);
        assert_eq!(OptimConfig::gamma(320), 1.0 / 320.0);
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
            assert_eq!(serde_json::to_string(&a).unwrap(), format!("\"{}\"", a.name()));
        }
        let mut v = ViewVariant::default();
        Ablation::AppearanceOnly.apply_view(&mut v).unwrap();
        assert_eq!((v.planes, v.jacobian_supervision, v.plane_regularization), (1, false, false));
        assert!(Ablation::DualJac.apply_view(&mut v).is_err());
        assert!(Ablation::SumMerge.time_mode().is_err());
    }
}
