//! Scalar 3D volumes, stacks of probability maps and binary label volumes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `[depth, height, width]`
pub type Dims = [usize; 3];

pub(crate) fn voxel_count(dims: Dims) -> usize {
    dims.iter().product()
}

/// Flat indices of the in-bounds 6-connected neighbours of voxel `i`.
pub fn lattice_neighbors(dims: Dims, i: usize) -> impl Iterator<Item = usize> {
    let [_, h, w] = dims;
    let (z, y, x) = (i / (h * w), (i / w) % h, i % w);
    let plane = h * w;
    [
        (z > 0).then(|| i - plane),
        (y > 0).then(|| i - w),
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
        (y + 1 < h).then(|| i + w),
        (z + 1 < dims[0]).then(|| i + plane),
    ]
    .into_iter()
    .flatten()
}

/// Sum of `values` after sorting ascending, so the result does not depend
/// on the order the terms were produced in.
pub(crate) fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    dims: Dims,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidShape { shape: dims.to_vec(), reason: "volume extents must be positive".into() });
        }
        if voxel_count(dims) != data.len() {
            return Err(Error::InvalidShape {
                shape: dims.to_vec(),
                reason: format!("holds {} values but the dims require {}", data.len(), voxel_count(dims)),
            });
        }
        Ok(Volume { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut([usize; 3]) -> f64) -> Self {
        let [_, h, w] = dims;
        let data = (0..voxel_count(dims)).map(|i| f([i / (h * w), (i / w) % h, i % w])).collect();
        Volume { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, [z, y, x]: [usize; 3]) -> f64 {
        self.data[(z * self.dims[1] + y) * self.dims[2] + x]
    }

    /// Single-channel network input `[1, D, H, W]`.
    pub fn to_tensor(&self) -> Tensor {
        let [d, h, w] = self.dims;
        Tensor::new([1, d, h, w], self.data.clone()).expect("volume dims are positive")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[1, d, h, w] | &[d, h, w] => Volume::new([d, h, w], t.data().to_vec()),
            s => Err(Error::InvalidShape { shape: s.to_vec(), reason: "expected a single-channel volume".into() }),
        }
    }

    /// Voxels with value `>= threshold` become foreground.
    pub fn threshold(&self, threshold: f64) -> LabelVolume {
        LabelVolume::new(self.dims, self.data.iter().map(|&v| u8::from(v >= threshold)).collect())
            .expect("dims already validated")
    }

    /// Zero mean, unit variance. A constant volume becomes all zeros.
    pub fn standardized(&self) -> Volume {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let sd = (self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let data = self.data.iter().map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }).collect();
        Volume { dims: self.dims, data }
    }
}

/// `K` foreground-probability maps over one lattice. Node `i` of map `k`
/// is represented by `(p, 1 - p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    dims: Dims,
    maps: Vec<Vec<f64>>,
}

impl ProbabilityMap {
    pub fn new(dims: Dims, maps: Vec<Vec<f64>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::InvalidShape { shape: dims.to_vec(), reason: "at least one probability map is required".into() });
        }
        let n = voxel_count(dims);
        for (k, m) in maps.iter().enumerate() {
            if m.len() != n {
                return Err(Error::shape(format!("probability map {k}"), dims.to_vec(), [m.len()]));
            }
            if let Some(&p) = m.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::OutOfRange { name: "probability", value: p, range: "[0, 1]" });
            }
        }
        Ok(ProbabilityMap { dims, maps })
    }

    pub fn from_volumes(volumes: &[Volume]) -> Result<Self> {
        let first = volumes.first().ok_or_else(|| Error::InvalidShape {
            shape: vec![],
            reason: "at least one probability map is required".into(),
        })?;
        for v in volumes {
            if v.dims() != first.dims() {
                return Err(Error::shape("probability map dims", first.dims().to_vec(), v.dims().to_vec()));
            }
        }
        ProbabilityMap::new(first.dims(), volumes.iter().map(|v| v.data().to_vec()).collect())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxels(&self) -> usize {
        voxel_count(self.dims)
    }

    /// Number of networks `K`.
    pub fn count(&self) -> usize {
        self.maps.len()
    }

    pub fn map(&self, k: usize) -> &[f64] {
        &self.maps[k]
    }

    pub fn maps(&self) -> &[Vec<f64>] {
        &self.maps
    }

    pub fn node(&self, k: usize, i: usize) -> [f64; 2] {
        let p = self.maps[k][i];
        [p, 1.0 - p]
    }

    pub fn mean(&self, i: usize) -> f64 {
        let mut ps: Vec<f64> = self.maps.iter().map(|m| m[i]).collect();
        order_free_sum(&mut ps) / self.count() as f64
    }

    pub fn mean_volume(&self) -> Volume {
        Volume { dims: self.dims, data: (0..self.voxels()).map(|i| self.mean(i)).collect() }
    }

    /// Mean over networks thresholded at 0.5.
    pub fn thresholded_mean(&self) -> LabelVolume {
        self.mean_volume().threshold(0.5)
    }

    pub fn reordered(&self, order: &[usize]) -> ProbabilityMap {
        ProbabilityMap { dims: self.dims, maps: order.iter().map(|&k| self.maps[k].clone()).collect() }
    }
}

/// Binary segmentation, optionally with the real-valued field it was
/// thresholded from.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    dims: Dims,
    labels: Vec<u8>,
    pub x: Option<Vec<f64>>,
}

impl LabelVolume {
    pub fn new(dims: Dims, labels: Vec<u8>) -> Result<Self> {
        if voxel_count(dims) != labels.len() || dims.contains(&0) {
            return Err(Error::shape("label volume", dims.to_vec(), [labels.len()]));
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::OutOfRange { name: "label", value: l as f64, range: "{0, 1}" });
        }
        Ok(LabelVolume { dims, labels, x: None })
    }

    pub fn from_volume(v: &Volume) -> Result<Self> {
        let labels = v
            .data()
            .iter()
            .map(|&l| match l {
                0.0 => Ok(0),
                1.0 => Ok(1),
                other => Err(Error::OutOfRange { name: "label", value: other, range: "{0, 1}" }),
            })
            .collect::<Result<_>>()?;
        LabelVolume::new(v.dims(), labels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn foreground(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn to_volume(&self) -> Volume {
        Volume { dims: self.dims, data: self.labels.iter().map(|&l| l as f64).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corner_and_interior_neighbour_counts() {
        let dims = [3, 3, 3];
        assert_eq!(lattice_neighbors(dims, 0).count(), 3);
        assert_eq!(lattice_neighbors(dims, 13).count(), 6);
        assert_eq!(lattice_neighbors([1, 1, 1], 0).count(), 0);
        let mut n: Vec<_> = lattice_neighbors([2, 3, 4], 5).collect();
        n.sort();
        assert_eq!(n, vec![1, 4, 6, 9, 17]);
    }

    #[test]
    fn standardized_moments() {
        let v = Volume::new([1, 1, 4], vec![1.0, 2.0, 3.0, 6.0]).unwrap().standardized();
        let mean = v.data().iter().sum::<f64>() / 4.0;
        let var = v.data().iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        let flat = Volume::new([1, 1, 2], vec![3.0, 3.0]).unwrap().standardized();
        assert_eq!(flat.data(), &[0.0, 0.0]);
    }

    #[test]
    fn probability_range_enforced() {
        assert!(ProbabilityMap::new([1, 1, 2], vec![vec![0.2, 1.1]]).is_err());
        assert!(ProbabilityMap::new([1, 1, 2], vec![vec![0.2, 1.0], vec![0.0]]).is_err());
        assert!(ProbabilityMap::new([1, 1, 2], vec![]).is_err());
    }

    #[test]
    fn labels_are_binary() {
        assert!(LabelVolume::new([1, 1, 2], vec![0, 2]).is_err());
        let v = Volume::new([1, 1, 2], vec![0.0, 0.5]).unwrap();
        assert!(LabelVolume::from_volume(&v).is_err());
    }
}
