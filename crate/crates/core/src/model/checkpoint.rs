//! `ModelState` <-> container mapping.
//!
//! Arrays are namespaced `param/<name>`, `adam_g/{m,v}/<name>` and
//! `adam_d/{m,v}/<name>`; the header carries the architecture, step, seed
//! and optimizer step counts.

use std::collections::BTreeMap;
use std::path::Path;

use cidn_tensor::Tensor;
use sha2::{Digest, Sha256};

use super::{AdamState, ArchConfig, ModelState, Padding, ParamStore, BRIGHTNESS_DIM};
use crate::container::Container;
use crate::error::{Error, Result};

/// Short, stable identifier of serialized checkpoint bytes.
pub fn checkpoint_id(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..6])
}

fn put_adam(c: &mut Container, prefix: &str, s: &AdamState) {
    for (name, t) in &s.m {
        c.arrays.insert(format!("{prefix}/m/{name}"), t.clone());
    }
    for (name, t) in &s.v {
        c.arrays.insert(format!("{prefix}/v/{name}"), t.clone());
    }
}

impl ModelState {
    pub fn to_container(&self) -> Container {
        let mut c = Container::default();
        let a = &self.arch;
        for (k, v) in [
            ("base_channels", a.base_channels as u64),
            ("res_blocks", a.res_blocks as u64),
            ("disc_channels", a.disc_channels as u64),
            ("padding", matches!(a.padding, Padding::Cyclic) as u64),
            ("brightness_dim", BRIGHTNESS_DIM as u64),
            ("step", self.step),
            ("seed", self.seed),
            ("adam_g_t", self.opt_generator.t),
            ("adam_d_t", self.opt_discriminator.t),
        ] {
            c.header.insert(k.into(), v);
        }
        for (name, t) in self.params.iter() {
            c.arrays.insert(format!("param/{name}"), t.clone());
        }
        put_adam(&mut c, "adam_g", &self.opt_generator);
        put_adam(&mut c, "adam_d", &self.opt_discriminator);
        c
    }

    pub fn from_container(c: Container) -> Result<Self> {
        let usize_field = |k: &str| c.header_value(k).map(|v| v as usize);
        let arch = ArchConfig {
            base_channels: usize_field("base_channels")?,
            res_blocks: usize_field("res_blocks")?,
            disc_channels: usize_field("disc_channels")?,
            padding: match c.header_value("padding")? {
                0 => Padding::Reflect,
                1 => Padding::Cyclic,
                p => return Err(Error::Checkpoint(format!("unknown padding mode {p}"))),
            },
        };
        let dim = usize_field("brightness_dim")?;
        if dim != BRIGHTNESS_DIM {
            return Err(Error::Checkpoint(format!(
                "brightness code length {dim}, this build uses {BRIGHTNESS_DIM}"
            )));
        }
        if arch.base_channels == 0 || arch.disc_channels == 0 {
            return Err(Error::Checkpoint("zero channel width in header".into()));
        }
        let step = c.header_value("step")?;
        let seed = c.header_value("seed")?;
        let mut opt_generator = AdamState {
            t: c.header_value("adam_g_t")?,
            ..AdamState::default()
        };
        let mut opt_discriminator = AdamState {
            t: c.header_value("adam_d_t")?,
            ..AdamState::default()
        };

        let expected: BTreeMap<String, Vec<usize>> = arch.layer_table().entries.into_iter().collect();
        let mut params = BTreeMap::new();
        for (key, tensor) in c.arrays {
            let (kind, name) = key
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("unexpected array `{key}`")))?;
            let (slot, name) = match kind {
                "param" => (&mut params, name),
                "adam_g" | "adam_d" => {
                    let opt = if kind == "adam_g" {
                        &mut opt_generator
                    } else {
                        &mut opt_discriminator
                    };
                    match name.split_once('/') {
                        Some(("m", n)) => (&mut opt.m, n),
                        Some(("v", n)) => (&mut opt.v, n),
                        _ => return Err(Error::Checkpoint(format!("unexpected array `{key}`"))),
                    }
                }
                _ => return Err(Error::Checkpoint(format!("unexpected array `{key}`"))),
            };
            match expected.get(name) {
                Some(shape) if shape == tensor.shape() => {}
                Some(shape) => {
                    return Err(Error::Checkpoint(format!(
                        "array `{key}` has shape {:?}, expected {shape:?}",
                        tensor.shape()
                    )))
                }
                None => return Err(Error::Checkpoint(format!("unknown parameter in `{key}`"))),
            }
            slot.insert(name.to_string(), tensor);
        }
        if let Some(missing) = expected.keys().find(|k| !params.contains_key(*k)) {
            return Err(Error::Checkpoint(format!("missing parameter `{missing}`")));
        }
        if params.values().any(|t: &Tensor<f32>| !t.all_finite()) {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(ModelState {
            arch,
            params: ParamStore::from_map(params),
            opt_generator,
            opt_discriminator,
            step,
            seed,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(Container::from_bytes(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(path)?)
            .map_err(|e| match e {
                Error::Checkpoint(m) if !m.starts_with(&path.display().to_string()) => {
                    Error::Checkpoint(format!("{}: {m}", path.display()))
                }
                other => other,
            })
    }
}
