use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{BlockVariant, DropBlockConfig};

/// The five networks of the ablation ladder, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    UNet18,
    UNetSA,
    SDUNet,
    Backbone,
    SAUNet,
}

impl Variant {
    pub const LADDER: [Variant; 5] = [
        Variant::UNet18,
        Variant::UNetSA,
        Variant::SDUNet,
        Variant::Backbone,
        Variant::SAUNet,
    ];

    pub fn block(self) -> BlockVariant {
        match self {
            Variant::UNet18 | Variant::UNetSA => BlockVariant::Plain,
            Variant::SDUNet => BlockVariant::DropBlock,
            Variant::Backbone | Variant::SAUNet => BlockVariant::Structured,
        }
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::UNetSA | Variant::SAUNet)
    }

    /// Command-line identifier.
    pub fn slug(self) -> &'static str {
        match self {
            Variant::UNet18 => "unet18",
            Variant::UNetSA => "unet-sa",
            Variant::SDUNet => "sd-unet",
            Variant::Backbone => "backbone",
            Variant::SAUNet => "sa-unet",
        }
    }

    /// Row label in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::UNet18 => "U-Net",
            Variant::UNetSA => "U-Net + SA",
            Variant::SDUNet => "SD-UNet",
            Variant::Backbone => "Backbone",
            Variant::SAUNet => "SA-UNet",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', ' ', '+'], "-");
        match key.as_str() {
            "unet18" | "unet-18" | "u-net-18" | "unet" | "u-net" => Ok(Variant::UNet18),
            "unet-sa" | "u-net-sa" | "u-net--sa" | "unetsa" => Ok(Variant::UNetSA),
            "sd-unet" | "sdunet" => Ok(Variant::SDUNet),
            "backbone" => Ok(Variant::Backbone),
            "sa-unet" | "saunet" => Ok(Variant::SAUNet),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

/// Declarative description of a network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArchitectureSpec {
    pub variant: Variant,
    /// Channels after the first convolution; doubled at every down-sampling.
    pub base_channels: usize,
    /// Number of pooling / up-sampling stages.
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Kernel side of the transposed up-convolutions.
    pub upconv_kernel: usize,
    pub dropblock: DropBlockConfig,
}

impl ArchitectureSpec {
    pub fn new(variant: Variant) -> Self {
        ArchitectureSpec {
            variant,
            base_channels: 16,
            depth: 3,
            in_channels: 3,
            out_channels: 1,
            upconv_kernel: 3,
            dropblock: DropBlockConfig::DRIVE,
        }
    }

    pub fn with_base_channels(mut self, base: usize) -> Self {
        self.base_channels = base;
        self
    }

    pub fn with_dropblock(mut self, cfg: DropBlockConfig) -> Self {
        self.dropblock = cfg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.depth == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts and depth must be positive".into()));
        }
        if self.upconv_kernel == 0 {
            return Err(Error::Config("up-convolution kernel must be positive".into()));
        }
        self.dropblock.validate()
    }

    /// Channels of encoder stage `i`; `i == depth` is the bottleneck.
    pub fn stage_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    /// Spatial sizes must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Whether two specs describe the same parameter layout.
    pub fn same_architecture(&self, other: &ArchitectureSpec) -> bool {
        self.variant == other.variant
            && self.base_channels == other.base_channels
            && self.depth == other.depth
            && self.in_channels == other.in_channels
            && self.out_channels == other.out_channels
            && self.upconv_kernel == other.upconv_kernel
    }
}
