//! Cascade downsampling backbone over sparse 4D tensors: one submanifold
//! input block followed by four downsampling modules, each a strided conv
//! block plus two submanifold blocks. Every block is conv + batch norm +
//! ReLU.

use super::conv::{batchnorm_relu, sparse_conv4d, BatchNormParams};
use super::rulebook::build_rulebook;
use super::tensor::SparseTensor4D;
use super::{ConvSpec4D, Sparse4DError};
use crate::weights::{Init, WeightBundle, WeightsError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub in_channels: usize,
    /// Output channels of the input block and of each downsampling module.
    pub stage_channels: [usize; 5],
    /// Strides of the four downsampling modules on (x, y, z, t).
    pub strides: [[usize; 4]; 4],
    pub kernel: [usize; 4],
    pub padding: [usize; 4],
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            in_channels: 64,
            stage_channels: [16, 32, 64, 128, 128],
            strides: [[2, 2, 2, 1], [2, 2, 2, 1], [1, 1, 2, 1], [1, 1, 2, 1]],
            kernel: [3, 3, 3, 3],
            padding: [1, 1, 1, 1],
        }
    }
}

impl BackboneConfig {
    fn block_specs(&self) -> Vec<(String, ConvSpec4D)> {
        let mut blocks = Vec::new();
        let submanifold = |name: String, cin: usize, cout: usize| {
            (
                name,
                ConvSpec4D {
                    kernel: self.kernel,
                    stride: [1; 4],
                    padding: self.padding,
                    in_channels: cin,
                    out_channels: cout,
                    submanifold: true,
                },
            )
        };
        blocks.push(submanifold("backbone.input".into(), self.in_channels, self.stage_channels[0]));
        for m in 0..4 {
            let cin = self.stage_channels[m];
            let cout = self.stage_channels[m + 1];
            blocks.push((
                format!("backbone.down{m}.conv"),
                ConvSpec4D {
                    kernel: self.kernel,
                    stride: self.strides[m],
                    padding: self.padding,
                    in_channels: cin,
                    out_channels: cout,
                    submanifold: false,
                },
            ));
            blocks.push(submanifold(format!("backbone.down{m}.sub0"), cout, cout));
            blocks.push(submanifold(format!("backbone.down{m}.sub1"), cout, cout));
        }
        blocks
    }

    /// Parameter (name, shape, init) list for seeding or validating bundles.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>, Init)> {
        let mut specs = Vec::new();
        for (name, conv) in self.block_specs() {
            let kvol = conv.kernel_volume();
            specs.push((
                format!("{name}.conv.weight"),
                vec![kvol, conv.in_channels, conv.out_channels],
                Init::Normal {
                    fan_in: kvol * conv.in_channels,
                },
            ));
            for (suffix, init) in [
                ("bn.gamma", Init::Ones),
                ("bn.beta", Init::Zeros),
                ("bn.mean", Init::Zeros),
                ("bn.var", Init::Ones),
            ] {
                specs.push((format!("{name}.{suffix}"), vec![conv.out_channels], init));
            }
        }
        specs
    }

    /// Spatial shape after the input block and after each downsampling
    /// module; pure stride arithmetic.
    pub fn stage_shapes(&self, input: [i32; 4]) -> Result<Vec<[i32; 4]>, Sparse4DError> {
        let mut shapes = vec![input];
        let mut cur = input;
        for m in 0..4 {
            let spec = ConvSpec4D {
                kernel: self.kernel,
                stride: self.strides[m],
                padding: self.padding,
                in_channels: 1,
                out_channels: 1,
                submanifold: false,
            };
            cur = spec.output_shape(cur)?;
            shapes.push(cur);
        }
        Ok(shapes)
    }
}

struct Block {
    spec: ConvSpec4D,
    weight: Vec<f32>,
    bn: BatchNormParams,
}

/// The assembled backbone with loaded parameters.
pub struct SpConv4dBackbone {
    config: BackboneConfig,
    blocks: Vec<Block>,
}

impl SpConv4dBackbone {
    /// Bind a weight bundle to the topology, validating every shape.
    pub fn from_bundle(config: &BackboneConfig, bundle: &WeightBundle) -> Result<Self, Sparse4DError> {
        let mut blocks = Vec::new();
        for (name, spec) in config.block_specs() {
            spec.validate()?;
            let kvol = spec.kernel_volume();
            let fetch = |suffix: &str, shape: &[usize]| -> Result<Vec<f32>, Sparse4DError> {
                bundle
                    .get(&format!("{name}.{suffix}"), shape)
                    .map(|s| s.to_vec())
                    .map_err(|e: WeightsError| Sparse4DError::TopologyMismatch(e.to_string()))
            };
            let weight = fetch("conv.weight", &[kvol, spec.in_channels, spec.out_channels])?;
            let bn = BatchNormParams {
                gamma: fetch("bn.gamma", &[spec.out_channels])?,
                beta: fetch("bn.beta", &[spec.out_channels])?,
                mean: fetch("bn.mean", &[spec.out_channels])?,
                var: fetch("bn.var", &[spec.out_channels])?,
                eps: 1e-5,
            };
            blocks.push(Block { spec, weight, bn });
        }
        Ok(Self {
            config: config.clone(),
            blocks,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn forward(&self, x: &SparseTensor4D) -> Result<SparseTensor4D, Sparse4DError> {
        if x.channels() != self.config.in_channels {
            return Err(Sparse4DError::ChannelMismatch {
                expected: self.config.in_channels,
                actual: x.channels(),
            });
        }
        let mut cur = x.clone();
        for block in &self.blocks {
            let rulebook = build_rulebook(cur.indices(), cur.spatial_shape(), &block.spec)?;
            let conv = sparse_conv4d(&cur, &block.weight, None, &block.spec, &rulebook)?;
            cur = batchnorm_relu(&conv, &block.bn)?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightBundle;

    fn tiny_config() -> BackboneConfig {
        BackboneConfig {
            in_channels: 3,
            stage_channels: [4, 4, 6, 6, 8],
            ..BackboneConfig::default()
        }
    }

    #[test]
    fn stage_shapes_follow_stride_arithmetic() {
        let cfg = BackboneConfig::default();
        let shapes = cfg.stage_shapes([1888, 1280, 64, 2]).unwrap();
        assert_eq!(shapes.last().unwrap(), &[472, 320, 4, 2]);
        for s in &shapes {
            assert_eq!(s[3], 2);
        }
    }

    #[test]
    fn forward_reaches_expected_shape() {
        let cfg = tiny_config();
        let bundle = WeightBundle::seeded(9, &cfg.param_specs());
        let net = SpConv4dBackbone::from_bundle(&cfg, &bundle).unwrap();
        let indices = vec![[0, 0, 0, 0], [7, 5, 9, 1], [15, 15, 15, 0]];
        let feats = vec![0.5f32; 3 * 3];
        let x = SparseTensor4D::new(indices, feats, 3, [16, 16, 16, 2]).unwrap();
        let y = net.forward(&x).unwrap();
        assert_eq!(y.spatial_shape(), [4, 4, 1, 2]);
        assert_eq!(y.channels(), 8);
        assert!(!y.is_empty());
    }

    #[test]
    fn empty_input_keeps_downsampled_shape() {
        let cfg = tiny_config();
        let bundle = WeightBundle::seeded(9, &cfg.param_specs());
        let net = SpConv4dBackbone::from_bundle(&cfg, &bundle).unwrap();
        let x = SparseTensor4D::empty(3, [16, 16, 16, 2]);
        let y = net.forward(&x).unwrap();
        assert!(y.is_empty());
        assert_eq!(y.spatial_shape(), [4, 4, 1, 2]);
    }

    #[test]
    fn bundle_topology_mismatch_is_rejected() {
        let cfg = tiny_config();
        let mut other = cfg.clone();
        other.stage_channels = [4, 4, 6, 6, 16];
        let bundle = WeightBundle::seeded(9, &other.param_specs());
        assert!(matches!(
            SpConv4dBackbone::from_bundle(&cfg, &bundle),
            Err(Sparse4DError::TopologyMismatch(_))
        ));
    }
}
