use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 1,
            DType::U8 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::U8),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }
}

/// Row-major tensor with 1 to 4 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::InvalidShape(format!(
            "tensor rank must be in [1, 4], got {}",
            shape.len()
        )));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::InvalidShape(format!("dimension {pos} of {shape:?} is zero")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("element count of {shape:?} overflows")))
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {n} elements but payload has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn from_u8(shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        Self::new(shape, TensorData::U8(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::F32(v) => Some(v),
            TensorData::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.data {
            TensorData::U8(v) => Some(v),
            TensorData::F32(_) => None,
        }
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }
}

/// Dense `H x W x C` float features, one node per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
}

impl FeatureGrid {
    /// Validates `C >= 2`, `C` even and finite values.
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        check_shape(&[height, width, channels])?;
        if channels < 2 || !channels.is_multiple_of(2) {
            return Err(Error::InvalidShape(format!(
                "feature channels must be even and >= 2, got {channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::InvalidShape(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidShape(format!("non-finite feature value at offset {pos}")));
        }
        Ok(Self { height, width, channels, values })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let values = t
            .as_f32()
            .ok_or_else(|| Error::Format("feature grid must be float32".into()))?;
        match *t.shape() {
            [h, w, c] => Self::new(h, w, c, values.to_vec()),
            ref s => Err(Error::InvalidShape(format!("feature grid must be [H,W,C], got {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width, self.channels],
            data: TensorData::F32(self.values.clone()),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn nodes(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Feature vector of node `i` in row-major order.
    pub fn node(&self, i: usize) -> &[f32] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// `H x W` mask with entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        check_shape(&[height, width])?;
        if values.len() != height * width {
            return Err(Error::InvalidShape(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::Format(format!(
                "mask entry {} at offset {pos} is not 0 or 1",
                values[pos]
            )));
        }
        Ok(Self { height, width, values })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Result<Self> {
        Self::new(height, width, vec![value as u8; height * width])
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let values = t
            .as_u8()
            .ok_or_else(|| Error::Format("binary mask must be uint8".into()))?;
        match *t.shape() {
            [h, w] => Self::new(h, w, values.to_vec()),
            ref s => Err(Error::InvalidShape(format!("binary mask must be [H,W], got {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: TensorData::U8(self.values.clone()),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.values[r * self.width + c] == 1
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| 1 - v).collect(),
        }
    }
}

/// Half-open pixel box: rows `[r0, r1)`, columns `[c0, c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl BoundingBox {
    pub fn new(r0: usize, c0: usize, r1: usize, c1: usize) -> Self {
        Self { r0, c0, r1, c1 }
    }

    pub fn area(&self) -> usize {
        self.r1.saturating_sub(self.r0) * self.c1.saturating_sub(self.c0)
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.r0 >= self.r1 || self.c0 >= self.c1 || self.r1 > height || self.c1 > width {
            return Err(Error::InvalidBox(format!(
                "{self:?} is empty or exceeds {height}x{width}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_rejects_zero_dims_and_bad_rank() {
        assert!(matches!(Tensor::from_f32(vec![2, 0], vec![]), Err(Error::InvalidShape(_))));
        assert!(matches!(Tensor::from_u8(vec![], vec![]), Err(Error::InvalidShape(_))));
        assert!(matches!(
            Tensor::from_u8(vec![1, 1, 1, 1, 1], vec![0]),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(Tensor::from_f32(vec![3], vec![1.0]), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn feature_grid_channel_rules() {
        assert!(FeatureGrid::new(1, 1, 3, vec![0.0; 3]).is_err());
        assert!(FeatureGrid::new(1, 1, 2, vec![0.0, f32::NAN]).is_err());
        let g = FeatureGrid::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.node(1), &[3.0, 4.0]);
        assert_eq!(FeatureGrid::from_tensor(&g.to_tensor()).unwrap(), g);
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(BinaryMask::new(1, 2, vec![0, 2]).is_err());
        let m = BinaryMask::new(1, 2, vec![0, 1]).unwrap();
        assert_eq!(m.complement().values(), &[1, 0]);
    }
}
