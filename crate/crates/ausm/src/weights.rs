//! Model parameter storage.
//!
//! A [`WeightBundle`] maps parameter paths like
//! `compressor.layer0.ssm.w_delta` to tensors. Initialization is
//! deterministic per (seed, dims): every element is a pure function of the
//! seed, the path, and the element index, so two bundles built from equal
//! metadata are element-wise equal and adding a parameter never perturbs
//! existing ones.

use crate::atb1;
use crate::error::{Error, Result};
use crate::rng::{fnv1a64, param_value};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Channel, state, layer, and query-count configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Fusion feature dimension D.
    pub d: usize,
    /// SSM state width per channel.
    pub s: usize,
    /// History-compressor layer count.
    pub l_comp: usize,
    /// Decoder layer count (history and pixel decoders).
    pub l_dec: usize,
    /// Detection query count.
    pub n_det: usize,
    /// ID-vector pool size.
    pub n_id: usize,
    /// Foreground class count (background is class index k).
    pub k_classes: usize,
    /// Backbone patch size.
    pub patch: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            d: 256,
            s: 16,
            l_comp: 6,
            l_dec: 6,
            n_det: 100,
            n_id: 100,
            k_classes: 4,
            patch: 8,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d", self.d),
            ("s", self.s),
            ("l_comp", self.l_comp),
            ("l_dec", self.l_dec),
            ("n_det", self.n_det),
            ("n_id", self.n_id),
            ("k_classes", self.k_classes),
            ("patch", self.patch),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("dimension {name} must be >= 1")));
            }
        }
        Ok(())
    }

    pub fn ffn_hidden(&self) -> usize {
        4 * self.d
    }
}

enum Init {
    /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

struct ParamSpec {
    path: String,
    shape: Vec<usize>,
    init: Init,
}

fn attn_block(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    for name in ["wq", "wk", "wv", "wo"] {
        specs.push(ParamSpec {
            path: format!("{prefix}.{name}"),
            shape: vec![d, d],
            init: Init::Uniform { fan_in: d },
        });
    }
    for name in ["bq", "bk", "bv", "bo"] {
        specs.push(ParamSpec {
            path: format!("{prefix}.{name}"),
            shape: vec![d],
            init: Init::Uniform { fan_in: d },
        });
    }
}

fn norm_block(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    specs.push(ParamSpec {
        path: format!("{prefix}.gamma"),
        shape: vec![d],
        init: Init::Ones,
    });
    specs.push(ParamSpec {
        path: format!("{prefix}.beta"),
        shape: vec![d],
        init: Init::Zeros,
    });
}

fn ffn_block(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize, hidden: usize) {
    specs.push(ParamSpec {
        path: format!("{prefix}.w1"),
        shape: vec![d, hidden],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: format!("{prefix}.b1"),
        shape: vec![hidden],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: format!("{prefix}.w2"),
        shape: vec![hidden, d],
        init: Init::Uniform { fan_in: hidden },
    });
    specs.push(ParamSpec {
        path: format!("{prefix}.b2"),
        shape: vec![d],
        init: Init::Uniform { fan_in: hidden },
    });
}

fn parameter_specs(dims: &ModelDims) -> Vec<ParamSpec> {
    let d = dims.d;
    let s = dims.s;
    let hidden = dims.ffn_hidden();
    let patch_in = dims.patch * dims.patch * 3;
    let mut specs = Vec::new();

    specs.push(ParamSpec {
        path: "backbone.patch_proj.weight".into(),
        shape: vec![patch_in, d],
        init: Init::Uniform { fan_in: patch_in },
    });
    specs.push(ParamSpec {
        path: "backbone.patch_proj.bias".into(),
        shape: vec![d],
        init: Init::Uniform { fan_in: patch_in },
    });
    specs.push(ParamSpec {
        path: "backbone.initial_frame".into(),
        shape: vec![d],
        init: Init::Uniform { fan_in: d },
    });

    for l in 0..dims.l_comp {
        let p = format!("compressor.layer{l}");
        norm_block(&mut specs, &format!("{p}.ssm_norm"), d);
        specs.push(ParamSpec {
            path: format!("{p}.ssm.a_log"),
            shape: vec![d, s],
            init: Init::Uniform { fan_in: d },
        });
        specs.push(ParamSpec {
            path: format!("{p}.ssm.w_delta"),
            shape: vec![d, d],
            init: Init::Uniform { fan_in: d },
        });
        specs.push(ParamSpec {
            path: format!("{p}.ssm.b_delta"),
            shape: vec![d],
            init: Init::Uniform { fan_in: d },
        });
        specs.push(ParamSpec {
            path: format!("{p}.ssm.w_b"),
            shape: vec![d, s],
            init: Init::Uniform { fan_in: d },
        });
        specs.push(ParamSpec {
            path: format!("{p}.ssm.w_c"),
            shape: vec![d, s],
            init: Init::Uniform { fan_in: d },
        });
        specs.push(ParamSpec {
            path: format!("{p}.ssm.d_skip"),
            shape: vec![d],
            init: Init::Uniform { fan_in: d },
        });
        norm_block(&mut specs, &format!("{p}.attn_norm"), d);
        attn_block(&mut specs, &format!("{p}.attn"), d);
        norm_block(&mut specs, &format!("{p}.ffn_norm"), d);
        ffn_block(&mut specs, &format!("{p}.ffn"), d, hidden);
    }

    for (stack, layers) in [("history_decoder", dims.l_dec), ("pixel_decoder", dims.l_dec)] {
        for l in 0..layers {
            let p = format!("{stack}.layer{l}");
            norm_block(&mut specs, &format!("{p}.q_norm"), d);
            norm_block(&mut specs, &format!("{p}.kv_norm"), d);
            attn_block(&mut specs, &format!("{p}.attn"), d);
            norm_block(&mut specs, &format!("{p}.ffn_norm"), d);
            ffn_block(&mut specs, &format!("{p}.ffn"), d, hidden);
        }
    }

    specs.push(ParamSpec {
        path: "pixel_decoder.mask_features.weight".into(),
        shape: vec![d, d],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: "pixel_decoder.mask_features.bias".into(),
        shape: vec![d],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: "pixel_decoder.class_head.weight".into(),
        shape: vec![d, dims.k_classes + 1],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: "pixel_decoder.class_head.bias".into(),
        shape: vec![dims.k_classes + 1],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: "identity.pool".into(),
        shape: vec![dims.n_id, d],
        init: Init::Uniform { fan_in: d },
    });
    specs.push(ParamSpec {
        path: "queries.detection".into(),
        shape: vec![dims.n_det, d],
        init: Init::Uniform { fan_in: d },
    });
    specs
}

/// Named parameter map plus the metadata it was built from.
#[derive(Clone, Debug)]
pub struct WeightBundle {
    dims: ModelDims,
    seed: u64,
    params: BTreeMap<String, Tensor>,
}

impl WeightBundle {
    /// Build all parameters deterministically from (seed, dims).
    pub fn init(seed: u64, dims: ModelDims) -> Result<WeightBundle> {
        dims.validate()?;
        let mut params = BTreeMap::new();
        for spec in parameter_specs(&dims) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f32).sqrt();
                    let h = fnv1a64(&spec.path);
                    (0..n as u64).map(|i| param_value(seed, h, i, bound)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
            };
            params.insert(spec.path, Tensor::from_vec(&spec.shape, data)?);
        }
        Ok(WeightBundle { dims, seed, params })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fetch a parameter. Bundles are validated at construction; a missing
    /// path is a programming error.
    pub fn get(&self, path: &str) -> &Tensor {
        self.params
            .get(path)
            .unwrap_or_else(|| panic!("missing parameter: {path}"))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn total_elements(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    /// Write the bundle as an ATB1 file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "weights",
            "dims": self.dims,
            "seed": self.seed,
        });
        let entries: Vec<(&str, &Tensor)> = self
            .params
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .collect();
        atb1::write(path, Some(meta), &entries)
    }

    /// Load a bundle from an ATB1 file, checking completeness and shapes.
    pub fn load(path: &Path) -> Result<WeightBundle> {
        let (meta, tensors) = atb1::read(path)?;
        let meta = meta.ok_or_else(|| Error::Format {
            offset: 8,
            message: "weights file lacks a meta object".into(),
        })?;
        let dims: ModelDims = serde_json::from_value(
            meta.get("dims")
                .cloned()
                .ok_or_else(|| Error::Format {
                    offset: 8,
                    message: "weights meta lacks dims".into(),
                })?,
        )?;
        let seed = meta.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
        let mut params: BTreeMap<String, Tensor> = tensors.into_iter().collect();
        let mut checked = BTreeMap::new();
        for spec in parameter_specs(&dims) {
            let t = params
                .remove(&spec.path)
                .ok_or_else(|| Error::MissingParam(spec.path.clone()))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::dimension(
                    format!("parameter {}", spec.path),
                    t.shape(),
                    &spec.shape,
                ));
            }
            checked.insert(spec.path, t);
        }
        Ok(WeightBundle {
            dims,
            seed,
            params: checked,
        })
    }
}
