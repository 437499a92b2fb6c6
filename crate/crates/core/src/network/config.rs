use crate::error::{Error, Result};

pub const FULL_DILATIONS: [usize; 8] = [1, 2, 3, 4, 4, 3, 2, 1];

/// One enhanced dense block: a chain of dilated 3x3 convolutions where
/// each layer after the first reads the concatenation of all earlier layer
/// outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseBlockConfig {
    pub growth: usize,
    pub layer_dilations: Vec<usize>,
    pub kernel: usize,
}

impl DenseBlockConfig {
    pub fn new(growth: usize) -> Self {
        DenseBlockConfig {
            growth,
            layer_dilations: FULL_DILATIONS.to_vec(),
            kernel: 3,
        }
    }

    pub fn output_channels(&self) -> usize {
        self.growth * self.layer_dilations.len()
    }

    /// Widths of the concat stages that follow layers 2..n.
    pub fn concat_widths(&self) -> Vec<usize> {
        (2..=self.layer_dilations.len()).map(|k| k * self.growth).collect()
    }

    /// Input width of layer `i` (0-based) given the block input width.
    pub fn layer_input(&self, block_input: usize, i: usize) -> usize {
        if i == 0 {
            block_input
        } else {
            i * self.growth
        }
    }
}

/// Layer graph of the despeckling network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub lowlevel_channels: usize,
    pub blocks: Vec<DenseBlockConfig>,
    pub bottleneck_channels: usize,
    /// Divisor applied to every width of the full-size network.
    pub scale_factor: usize,
}

impl ModelConfig {
    /// The full-size network: 128 low-level channels, growth 16,
    /// bottleneck 256.
    pub fn full_scale() -> Self {
        Self::scaled(1).expect("scale 1 divides every width")
    }

    /// Full-size widths divided by `factor`; depth and dilations unchanged.
    pub fn scaled(factor: usize) -> Result<Self> {
        if factor == 0 || 16 % factor != 0 {
            return Err(Error::config(format!(
                "scale factor {factor} must divide the block growth of 16"
            )));
        }
        Ok(ModelConfig {
            lowlevel_channels: 128 / factor,
            blocks: vec![DenseBlockConfig::new(16 / factor); 3],
            bottleneck_channels: 256 / factor,
            scale_factor: factor,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.len() != 3 {
            return Err(Error::config(format!(
                "network needs three dense blocks, got {}",
                self.blocks.len()
            )));
        }
        if self.lowlevel_channels == 0 {
            return Err(Error::config("layer `lowlevel` has zero output channels"));
        }
        if self.bottleneck_channels == 0 {
            return Err(Error::config("layer `bottleneck` has zero output channels"));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            let name = block_name(b);
            if block.growth == 0 {
                return Err(Error::config(format!("layer `{name}` has zero growth")));
            }
            if block.layer_dilations.is_empty() {
                return Err(Error::config(format!("layer `{name}` has no convolutions")));
            }
            if block.kernel == 0 || block.kernel % 2 == 0 {
                return Err(Error::config(format!(
                    "layer `{name}` kernel {} must be odd",
                    block.kernel
                )));
            }
            if let Some(i) = block.layer_dilations.iter().position(|&d| d == 0) {
                return Err(Error::config(format!("layer `{name}.conv{}` has dilation 0", i + 1)));
            }
        }
        Ok(())
    }

    /// Input width of each dense block.
    pub fn block_inputs(&self) -> Vec<usize> {
        let mut width = self.lowlevel_channels;
        self.blocks
            .iter()
            .map(|b| {
                let input = width;
                width += b.output_channels();
                input
            })
            .collect()
    }

    /// Widths after each inter-block concatenation.
    pub fn inter_block_concats(&self) -> Vec<usize> {
        self.block_inputs()
            .iter()
            .zip(&self.blocks)
            .map(|(i, b)| i + b.output_channels())
            .collect()
    }
}

pub(crate) fn block_name(i: usize) -> String {
    format!("block{}", (b'A' + i as u8) as char)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_widths() {
        let c = ModelConfig::full_scale();
        c.validate().unwrap();
        assert_eq!(c.blocks[0].concat_widths(), vec![32, 48, 64, 80, 96, 112, 128]);
        assert_eq!(c.block_inputs(), vec![128, 256, 384]);
        assert_eq!(c.inter_block_concats(), vec![256, 384, 512]);
    }

    #[test]
    fn scale_eight_widths() {
        let c = ModelConfig::scaled(8).unwrap();
        assert_eq!((c.lowlevel_channels, c.blocks[0].growth, c.bottleneck_channels), (16, 2, 32));
        assert_eq!(c.inter_block_concats(), vec![32, 48, 64]);
        assert_eq!(c.blocks[2].layer_dilations, FULL_DILATIONS.to_vec());
        assert!(ModelConfig::scaled(3).is_err());
    }

    #[test]
    fn validation_names_layer() {
        let mut c = ModelConfig::scaled(8).unwrap();
        c.blocks[1].layer_dilations[4] = 0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("blockB.conv5"), "{msg}");
        c.blocks.pop();
        assert!(c.validate().is_err());
    }
}
