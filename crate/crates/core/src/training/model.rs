//! Trained networks with their metadata, and their checkpoint encoding.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{OptimConfig, TimeMode, ViewVariant};
use crate::coords::{assemble_coord, frame_spacing, non_uniform_tau, Branch, CoordInput, EncodingConfig, ViewTimeCoord};
use crate::decoder::checkpoint::CONFIG_PREFIX;
use crate::decoder::{Blender, BlenderConfig, BlenderTrainConfig, Checkpoint, CoordDecoder, DecoderConfig, ParamStore};
use crate::geometry::{merge_planes, shifted_planes, MergeMode, PlaneSpec};
use crate::scenegen::Side;
use crate::tensor::{AdamState, Tensor};
use crate::{Error, Result};

const NET_PREFIX: &str = "net/";
const HEADER_ENTRY: &str = "header";

/// Multi-plane view decoder plus what is needed to interpret its output.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewModel {
    pub decoder: CoordDecoder,
    pub planes: PlaneSpec,
    pub merge: MergeMode,
    pub encoding: EncodingConfig,
    pub variant: ViewVariant,
}

impl ViewModel {
    pub fn coord(&self, u: f32, t: f32) -> Result<Vec<f32>> {
        assemble_coord(CoordInput::View(ViewTimeCoord::new(u, t)?), &self.encoding)
    }

    /// Canonical planes `(1, K, H, W)` at `(u, t)`.
    pub fn planes_at(&self, leaves: &[Tensor], u: f32, t: f32) -> Result<Tensor> {
        self.decoder.forward(leaves, &self.coord(u, t)?)
    }

    /// Shifted planes and the merged disparity map at view `u`.
    pub fn reconstruct(&self, leaves: &[Tensor], u: f32, t: f32) -> Result<(Tensor, Tensor)> {
        let shifted = shifted_planes(&self.planes_at(leaves, u, t)?, &self.planes, u)?;
        let merged = merge_planes(&shifted, self.merge)?;
        Ok((shifted, merged))
    }

    /// Disparity map at `(u, t)` without gradient tracking.
    pub fn jacobian(&self, u: f32, t: f32) -> Result<Tensor> {
        let leaves = self.decoder.params().bind(false)?;
        Ok(self.reconstruct(&leaves, u, t)?.1)
    }
}

/// Time decoder for one stereo view.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeModel {
    pub decoder: CoordDecoder,
    pub mode: TimeMode,
    pub side: Side,
    pub frames: usize,
    pub encoding: EncodingConfig,
}

impl TimeModel {
    pub fn delta(&self) -> f32 {
        frame_spacing(self.frames)
    }

    /// Raw decoder output at coordinate `tau`.
    pub fn query(&self, leaves: &[Tensor], tau: f32) -> Result<Tensor> {
        self.decoder.forward(leaves, &assemble_coord(CoordInput::Time(tau), &self.encoding)?)
    }

    /// Jacobian of one branch for target time `t`.
    pub fn branch(&self, leaves: &[Tensor], t: f32, branch: Branch) -> Result<Tensor> {
        match self.mode {
            TimeMode::NonUniform => self.query(leaves, non_uniform_tau(t, branch, self.delta(), &self.encoding)),
            TimeMode::SingleJacobian => self.query(leaves, t),
            TimeMode::DualJacobian => {
                let start = if branch == Branch::Next { 0 } else { 2 };
                Ok(self.query(leaves, t)?.slice_channels(start, 2)?)
            }
        }
    }

    /// `(J_next, J_prev)` for target time `t`, sharing the forward pass
    /// where the mode allows.
    pub fn branches(&self, leaves: &[Tensor], t: f32) -> Result<(Tensor, Tensor)> {
        match self.mode {
            TimeMode::NonUniform => Ok((self.branch(leaves, t, Branch::Next)?, self.branch(leaves, t, Branch::Prev)?)),
            TimeMode::SingleJacobian => {
                let j = self.query(leaves, t)?;
                Ok((j.clone(), j))
            }
            TimeMode::DualJacobian => {
                let j = self.query(leaves, t)?;
                Ok((j.slice_channels(0, 2)?, j.slice_channels(2, 2)?))
            }
        }
    }
}

/// Checkpoint metadata, stored as canonical JSON and hashed into the
/// container digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelHeader {
    View {
        decoder: DecoderConfig,
        planes: PlaneSpec,
        merge: MergeMode,
        encoding: EncodingConfig,
        variant: ViewVariant,
        training: Option<OptimConfig>,
    },
    Time {
        decoder: DecoderConfig,
        mode: TimeMode,
        side: Side,
        frames: usize,
        encoding: EncodingConfig,
        training: Option<OptimConfig>,
    },
    Blender {
        config: BlenderConfig,
        training: Option<BlenderTrainConfig>,
    },
}

/// Any network that can be written to or read from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    View(ViewModel),
    Time(TimeModel),
    Blender(Blender),
}

impl SavedModel {
    fn params(&self) -> &ParamStore {
        match self {
            SavedModel::View(m) => m.decoder.params(),
            SavedModel::Time(m) => m.decoder.params(),
            SavedModel::Blender(b) => b.params(),
        }
    }

    fn header(&self, training: Option<Training<'_>>) -> ModelHeader {
        match self {
            SavedModel::View(m) => ModelHeader::View {
                decoder: *m.decoder.config(),
                planes: m.planes.clone(),
                merge: m.merge,
                encoding: m.encoding,
                variant: m.variant,
                training: training.and_then(Training::optim),
            },
            SavedModel::Time(m) => ModelHeader::Time {
                decoder: *m.decoder.config(),
                mode: m.mode,
                side: m.side,
                frames: m.frames,
                encoding: m.encoding,
                training: training.and_then(Training::optim),
            },
            SavedModel::Blender(b) => ModelHeader::Blender {
                config: *b.config(),
                training: match training {
                    Some(Training::Blender(c)) => Some(*c),
                    _ => None,
                },
            },
        }
    }

    /// Serializes the model, optionally with its optimizer state and the
    /// training configuration that produced it.
    pub fn to_checkpoint(&self, adam: Option<&AdamState>, training: Option<Training<'_>>) -> Checkpoint {
        let json = serde_json::to_vec(&self.header(training)).expect("header serializes");
        let mut ck = Checkpoint::new(Sha256::digest(&json).into());
        ck.push(format!("{CONFIG_PREFIX}{HEADER_ENTRY}"), &[json.len()], json.iter().map(|&b| b as f32).collect());
        ck.add_params(NET_PREFIX, self.params());
        if let Some(state) = adam {
            ck.add_adam(NET_PREFIX, self.params(), state);
        }
        ck
    }

    pub fn header_of(ck: &Checkpoint) -> Result<ModelHeader> {
        let bad = |msg: &str| Error::Format { what: "checkpoint", msg: msg.to_string() };
        let entry = ck.get(&format!("{CONFIG_PREFIX}{HEADER_ENTRY}")).ok_or_else(|| bad("no model header"))?;
        let bytes: Vec<u8> = entry
            .data
            .iter()
            .map(|&v| if (0.0..=255.0).contains(&v) && v.fract() == 0.0 { Ok(v as u8) } else { Err(bad("header bytes")) })
            .collect::<Result<_>>()?;
        let digest: [u8; 32] = Sha256::digest(&bytes).into();
        if digest != ck.digest {
            return Err(bad("config digest does not match header"));
        }
        serde_json::from_slice(&bytes).map_err(|e| bad(&format!("header: {e}")))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let params = ck.params_with_prefix(NET_PREFIX);
        Ok(match Self::header_of(ck)? {
            ModelHeader::View { decoder, planes, merge, encoding, variant, .. } => SavedModel::View(ViewModel {
                decoder: CoordDecoder::from_params(decoder, params)?,
                planes,
                merge,
                encoding,
                variant,
            }),
            ModelHeader::Time { decoder, mode, side, frames, encoding, .. } => SavedModel::Time(TimeModel {
                decoder: CoordDecoder::from_params(decoder, params)?,
                mode,
                side,
                frames,
                encoding,
            }),
            ModelHeader::Blender { config, .. } => SavedModel::Blender(Blender::from_params(config, params)?),
        })
    }

    /// Optimizer state stored alongside the parameters, if any.
    pub fn adam_of(ck: &Checkpoint) -> Result<Option<AdamState>> {
        let params = ck.params_with_prefix(NET_PREFIX);
        if ck.entries.iter().any(|e| e.name.starts_with(crate::decoder::checkpoint::ADAM_PREFIX)) {
            Ok(Some(ck.adam(NET_PREFIX, &params)?))
        } else {
            Ok(None)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }

    pub fn save(&self, path: &Path, adam: Option<&AdamState>, training: Option<Training<'_>>) -> Result<()> {
        self.to_checkpoint(adam, training).write(path)
    }

    pub fn into_view(self) -> Result<ViewModel> {
        match self {
            SavedModel::View(m) => Ok(m),
            _ => Err(Error::Config("checkpoint does not hold a view network".into())),
        }
    }

    pub fn into_time(self) -> Result<TimeModel> {
        match self {
            SavedModel::Time(m) => Ok(m),
            _ => Err(Error::Config("checkpoint does not hold a time network".into())),
        }
    }

    pub fn into_blender(self) -> Result<Blender> {
        match self {
            SavedModel::Blender(b) => Ok(b),
            _ => Err(Error::Config("checkpoint does not hold a blender".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Training<'a> {
    Optim(&'a OptimConfig),
    Blender(&'a BlenderTrainConfig),
}

impl Training<'_> {
    fn optim(self) -> Option<OptimConfig> {
        match self {
            Training::Optim(c) => Some(c.clone()),
            Training::Blender(_) => None,
        }
    }
}
