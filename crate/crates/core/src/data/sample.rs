use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lineage {
    Original,
    Augmented {
        parent: String,
        method: String,
        params: String,
    },
}

/// An RGB image `[3, h, w]` in [0, 1] with its binary vessel mask `[1, h, w]`.
#[derive(Debug, Clone)]
pub struct FundusSample<T: Scalar> {
    pub id: String,
    pub image: Tensor<T>,
    pub mask: Tensor<T>,
    pub fov: Option<Tensor<T>>,
    pub lineage: Lineage,
}

fn is_binary<T: Scalar>(t: &Tensor<T>) -> bool {
    t.data().iter().all(|&v| v == T::zero() || v == T::one())
}

impl<T: Scalar> FundusSample<T> {
    pub fn new(id: impl Into<String>, image: Tensor<T>, mask: Tensor<T>, fov: Option<Tensor<T>>) -> Result<Self> {
        let s = FundusSample {
            id: id.into(),
            image,
            mask,
            fov,
            lineage: Lineage::Original,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.image.dims();
        if dims.len() != 3 || dims[0] != 3 {
            return Err(Error::Data(format!("{}: image must be [3, h, w], got {dims:?}", self.id)));
        }
        if self.mask.dims() != [1, dims[1], dims[2]] {
            return Err(Error::Data(format!(
                "{}: mask {:?} does not match image {dims:?}",
                self.id,
                self.mask.shape()
            )));
        }
        if !is_binary(&self.mask) {
            return Err(Error::Data(format!("{}: mask is not binary", self.id)));
        }
        if let Some(fov) = &self.fov {
            if fov.shape() != self.mask.shape() || !is_binary(fov) {
                return Err(Error::Data(format!("{}: fov must be a binary mask-shaped tensor", self.id)));
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.image.dims()[1]
    }

    pub fn width(&self) -> usize {
        self.image.dims()[2]
    }

    pub fn positive_fraction(&self) -> f64 {
        let pos = self.mask.data().iter().filter(|&&v| v == T::one()).count();
        pos as f64 / self.mask.numel() as f64
    }

    pub(crate) fn derived(&self, suffix: &str, image: Tensor<T>, mask: Tensor<T>, fov: Option<Tensor<T>>, method: &str, params: String) -> Self {
        FundusSample {
            id: format!("{}#{suffix}", self.id),
            image,
            mask,
            fov,
            lineage: Lineage::Augmented {
                parent: self.id.clone(),
                method: method.to_string(),
                params,
            },
        }
    }
}
