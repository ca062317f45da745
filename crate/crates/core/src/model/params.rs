use std::collections::BTreeMap;
use std::sync::Arc;

use cidn_tensor::{Tape, Tensor, Var};
use rand_distr::{Distribution, Normal};

use super::ArchConfig;
use crate::rng::{self, tag};

/// The six independently optimized sub-networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    ContentEncoder,
    BrightnessEncoder,
    DecoderLow,
    DecoderNormal,
    DiscriminatorsLow,
    DiscriminatorsNormal,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::ContentEncoder,
        ParamGroup::BrightnessEncoder,
        ParamGroup::DecoderLow,
        ParamGroup::DecoderNormal,
        ParamGroup::DiscriminatorsLow,
        ParamGroup::DiscriminatorsNormal,
    ];

    /// Encoders and decoders, updated by the generator step.
    pub const GENERATOR: [ParamGroup; 4] = [
        ParamGroup::ContentEncoder,
        ParamGroup::BrightnessEncoder,
        ParamGroup::DecoderLow,
        ParamGroup::DecoderNormal,
    ];

    pub const DISCRIMINATOR: [ParamGroup; 2] =
        [ParamGroup::DiscriminatorsLow, ParamGroup::DiscriminatorsNormal];

    pub fn prefix(self) -> &'static str {
        match self {
            ParamGroup::ContentEncoder => "enc_c.",
            ParamGroup::BrightnessEncoder => "enc_b.",
            ParamGroup::DecoderLow => "dec_x.",
            ParamGroup::DecoderNormal => "dec_y.",
            ParamGroup::DiscriminatorsLow => "dis_x.",
            ParamGroup::DiscriminatorsNormal => "dis_y.",
        }
    }

    pub fn of(name: &str) -> Option<ParamGroup> {
        Self::ALL.into_iter().find(|g| name.starts_with(g.prefix()))
    }
}

/// Ordered name/shape listing of every parameter.
#[derive(Default)]
pub(crate) struct LayerTable {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl LayerTable {
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) {
        self.entries
            .push((format!("{name}.weight"), vec![cout, cin, k, k]));
        self.entries.push((format!("{name}.bias"), vec![cout]));
    }

    pub fn linear(&mut self, name: &str, cin: usize, cout: usize) {
        self.entries.push((format!("{name}.weight"), vec![cout, cin]));
        self.entries.push((format!("{name}.bias"), vec![cout]));
    }
}

/// Learnable parameters keyed by dotted name.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Arc<Tensor<f32>>>,
}

impl ParamStore {
    /// Weights ~ N(0, 0.02), biases zero, drawn in name order from a stream
    /// keyed by `seed`.
    pub fn init(arch: &ArchConfig, seed: u64) -> Self {
        let normal = Normal::new(0.0f32, 0.02).expect("valid std");
        let mut tensors = BTreeMap::new();
        let mut table = arch.layer_table().entries;
        table.sort_by(|a, b| a.0.cmp(&b.0));
        for (i, (name, shape)) in table.into_iter().enumerate() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let mut rng = rng::stream(seed, &[tag::INIT, i as u64]);
                Tensor::from_fn(&shape, |_| normal.sample(&mut rng))
            };
            tensors.insert(name, Arc::new(t));
        }
        ParamStore { tensors }
    }

    pub(crate) fn from_map(tensors: BTreeMap<String, Tensor<f32>>) -> Self {
        ParamStore {
            tensors: tensors.into_iter().map(|(k, v)| (k, Arc::new(v))).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.get(name).map(|t| t.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn names_in(&self, group: ParamGroup) -> impl Iterator<Item = &str> {
        self.tensors
            .keys()
            .map(String::as_str)
            .filter(move |n| n.starts_with(group.prefix()))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub(crate) fn set(&mut self, name: &str, value: Tensor<f32>) {
        let slot = self
            .tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        assert_eq!(slot.shape(), value.shape(), "shape change for {name}");
        *slot = Arc::new(value);
    }

    /// Binds every parameter as an untracked constant.
    pub fn bind(&self) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Var::constant(Arc::clone(v))))
                .collect(),
        }
    }

    /// Binds the parameters of `groups` as tracked leaves on `tape` and the
    /// rest as constants.
    pub fn bind_tracked(&self, tape: &Tape<f32>, groups: &[ParamGroup]) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| {
                    let tracked = ParamGroup::of(k).is_some_and(|g| groups.contains(&g));
                    let var = if tracked {
                        tape.leaf(Arc::clone(v))
                    } else {
                        Var::constant(Arc::clone(v))
                    };
                    (k.clone(), var)
                })
                .collect(),
        }
    }
}

/// Parameters materialized as graph variables for one forward pass.
pub struct Bound {
    vars: BTreeMap<String, Var<f32>>,
}

impl Bound {
    pub fn var(&self, name: &str) -> &Var<f32> {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var<f32>)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }
}
