//! Dense L-mode tensors and generalized unfoldings.
//!
//! Storage is a flat `Vec<f64>` in which the earliest mode varies fastest
//! (column-major for matrices). An unfolding over a mode subset `S` is a
//! `p x q` matrix, itself stored as a 2-mode [`Tensor`], whose row index
//! enumerates the multi-index over `S` and whose column index enumerates the
//! multi-index over the complement, both in ascending mode order with the
//! earliest listed mode varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::InvalidDims(dims.to_vec()));
    }
    Ok(dims.iter().product())
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_dims(&dims)?;
        if data.len() != n {
            return Err(Error::LengthMismatch {
                dims,
                len: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        })
    }

    pub fn filled(dims: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        t.data.fill(value);
        Ok(t)
    }

    /// Build a tensor by evaluating `f` at every 0-based multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let n = check_dims(dims)?;
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..n {
            data.push(f(&idx));
            advance(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// A `rows x cols` matrix from row-major input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Format {
                what: "matrix",
                reason: "ragged rows".into(),
            });
        }
        Self::from_fn(&[r, c], |ix| rows[ix[0]][ix[1]])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flattening in the storage layout.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in index.iter().zip(&self.dims) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Matrix accessor for 2-mode tensors.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row + self.dims[0] * col]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    fn same_dims(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(self.dims.clone(), other.dims.clone()));
        }
        Ok(())
    }

    pub fn scale(&self, a: f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        axpy(-1.0, other, self)
    }
}

/// Odometer increment with the first index varying fastest.
pub(crate) fn advance(idx: &mut [usize], dims: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

/// Strictly increasing list of 1-based mode indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeSubset(Vec<usize>);

impl ModeSubset {
    /// Validate `modes` against a tensor with `order` modes. Input order does
    /// not matter; duplicates are rejected.
    pub fn new(mut modes: Vec<usize>, order: usize) -> Result<Self> {
        let err = |modes: &[usize], reason| Error::InvalidModes {
            modes: modes.to_vec(),
            order,
            reason,
        };
        if modes.is_empty() {
            return Err(err(&modes, "subset is empty"));
        }
        if modes.iter().any(|&m| m == 0 || m > order) {
            return Err(err(&modes, "mode index out of range"));
        }
        modes.sort_unstable();
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(err(&modes, "repeated mode"));
        }
        if modes.len() == order {
            return Err(err(&modes, "complement is empty"));
        }
        Ok(Self(modes))
    }

    pub fn modes(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, mode: usize) -> bool {
        self.0.binary_search(&mode).is_ok()
    }

    pub fn complement(&self, order: usize) -> Vec<usize> {
        (1..=order).filter(|&m| !self.contains(m)).collect()
    }

    /// Re-check against a concrete order (subsets may be built for one order
    /// and applied to another tensor).
    pub fn validate(&self, order: usize) -> Result<()> {
        Self::new(self.0.clone(), order).map(|_| ())
    }

    /// Row and column extents `(p, q)` of the unfolding over `dims`.
    pub fn shape(&self, dims: &[usize]) -> (usize, usize) {
        let mut p = 1;
        let mut q = 1;
        for (m, &d) in dims.iter().enumerate() {
            if self.contains(m + 1) {
                p *= d;
            } else {
                q *= d;
            }
        }
        (p, q)
    }

    /// Per-mode offsets into the `p x q` unfolding: mode `m` contributes
    /// `index * weight[m]` to either the row (if in `S`) or the column.
    fn weights(&self, dims: &[usize]) -> (Vec<usize>, usize) {
        let (p, _) = self.shape(dims);
        let mut w = vec![0; dims.len()];
        let mut row = 1;
        let mut col = p;
        for (m, &d) in dims.iter().enumerate() {
            if self.contains(m + 1) {
                w[m] = row;
                row *= d;
            } else {
                w[m] = col;
                col *= d;
            }
        }
        (w, p)
    }
}

/// Visit every entry of a tensor with extents `dims` alongside its offset in
/// the unfolding over `s`.
fn for_each_unfolded(dims: &[usize], s: &ModeSubset, mut f: impl FnMut(usize, usize)) {
    let (w, _) = s.weights(dims);
    let n: usize = dims.iter().product();
    let mut idx = vec![0usize; dims.len()];
    let mut target = 0usize;
    for flat in 0..n {
        f(flat, target);
        for (m, (i, &d)) in idx.iter_mut().zip(dims).enumerate() {
            *i += 1;
            target += w[m];
            if *i < d {
                break;
            }
            target -= w[m] * d;
            *i = 0;
        }
    }
}

pub fn unfold(x: &Tensor, s: &ModeSubset) -> Result<Tensor> {
    s.validate(x.order())?;
    let (p, q) = s.shape(&x.dims);
    let mut out = vec![0.0; p * q];
    for_each_unfolded(&x.dims, s, |src, dst| out[dst] = x.data[src]);
    Tensor::new(vec![p, q], out)
}

pub fn refold(m: &Tensor, s: &ModeSubset, dims: &[usize]) -> Result<Tensor> {
    check_dims(dims)?;
    s.validate(dims.len())?;
    let (p, q) = s.shape(dims);
    if m.dims != [p, q] {
        return Err(Error::DimMismatch(m.dims.clone(), vec![p, q]));
    }
    let mut out = vec![0.0; p * q];
    for_each_unfolded(dims, s, |dst, src| out[dst] = m.data[src]);
    Tensor::new(dims.to_vec(), out)
}

/// `refold_S(z v^T)` without materializing the intermediate matrix.
pub fn refold_outer(z: &[bool], v: &[f64], s: &ModeSubset, dims: &[usize]) -> Result<Tensor> {
    check_dims(dims)?;
    s.validate(dims.len())?;
    let (p, q) = s.shape(dims);
    if z.len() != p || v.len() != q {
        return Err(Error::DimMismatch(vec![z.len(), v.len()], vec![p, q]));
    }
    let mut out = vec![0.0; p * q];
    for_each_unfolded(dims, s, |dst, src| {
        let (r, c) = (src % p, src / p);
        if z[r] {
            out[dst] = v[c];
        }
    });
    Tensor::new(dims.to_vec(), out)
}

pub fn inner(x: &Tensor, y: &Tensor) -> Result<f64> {
    x.same_dims(y)?;
    Ok(dot(&x.data, &y.data))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn frobenius_norm(x: &Tensor) -> f64 {
    dot(&x.data, &x.data).sqrt()
}

/// `y + a x`.
pub fn axpy(a: f64, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    x.same_dims(y)?;
    Ok(Tensor {
        dims: y.dims.clone(),
        data: x
            .data
            .iter()
            .zip(&y.data)
            .map(|(xi, yi)| yi + a * xi)
            .collect(),
    })
}

/// Observation indicator tensor, 1 = observed.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskTensor(Tensor);

impl MaskTensor {
    pub fn new(t: Tensor) -> Result<Self> {
        if let Some(&bad) = t.data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryMask(bad));
        }
        Ok(Self(t))
    }

    pub fn from_observed(dims: &[usize], observed: &[bool]) -> Result<Self> {
        let data = observed
            .iter()
            .map(|&o| if o { 1.0 } else { 0.0 })
            .collect();
        Ok(Self(Tensor::new(dims.to_vec(), data)?))
    }

    pub fn all_observed(dims: &[usize]) -> Result<Self> {
        Ok(Self(Tensor::filled(dims, 1.0)?))
    }

    pub fn dims(&self) -> &[usize] {
        self.0.dims()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn is_observed(&self, flat: usize) -> bool {
        self.0.data[flat] == 1.0
    }

    pub fn observed_count(&self) -> usize {
        self.0.data.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn missing_count(&self) -> usize {
        self.0.len() - self.observed_count()
    }
}

pub fn apply_mask(x: &Tensor, mask: &MaskTensor) -> Result<Tensor> {
    x.same_dims(&mask.0)?;
    Ok(Tensor {
        dims: x.dims.clone(),
        data: x
            .data
            .iter()
            .zip(&mask.0.data)
            .map(|(&v, &m)| if m == 1.0 { v } else { 0.0 })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn subset(m: &[usize], order: usize) -> ModeSubset {
        ModeSubset::new(m.to_vec(), order).unwrap()
    }

    fn all_subsets(order: usize) -> Vec<ModeSubset> {
        (1..(1usize << order) - 1)
            .map(|bits| {
                let modes = (0..order)
                    .filter(|b| bits >> b & 1 == 1)
                    .map(|b| b + 1)
                    .collect();
                ModeSubset::new(modes, order).unwrap()
            })
            .collect()
    }

    /// X[i,j,k] = 4i + 2j + k with 0-based indices.
    fn cube() -> Tensor {
        Tensor::from_fn(&[2, 2, 2], |ix| (4 * ix[0] + 2 * ix[1] + ix[2]) as f64).unwrap()
    }

    #[test]
    fn identity_unfolding_on_matrix() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(unfold(&x, &subset(&[1], 2)).unwrap(), x);
    }

    #[test]
    fn cube_unfold_mode_two() {
        let m = unfold(&cube(), &subset(&[2], 3)).unwrap();
        assert_eq!(m.dims(), &[2, 4]);
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|r| (0..4).map(|c| m.at(r, c)).collect())
            .collect();
        assert_eq!(
            rows,
            vec![vec![0.0, 4.0, 1.0, 5.0], vec![2.0, 6.0, 3.0, 7.0]]
        );
        assert_eq!(refold(&m, &subset(&[2], 3), &[2, 2, 2]).unwrap(), cube());
    }

    #[test]
    fn unfold_matches_enumeration_oracle() {
        // Brute-force: compute row/col indices directly from the multi-index.
        let dims = [3, 2, 4, 2];
        let x = Tensor::from_fn(&dims, |ix| {
            ix.iter()
                .enumerate()
                .map(|(m, &i)| (i as f64) * 10f64.powi(m as i32))
                .sum()
        })
        .unwrap();
        for s in all_subsets(4) {
            let m = unfold(&x, &s).unwrap();
            let comp = s.complement(4);
            let mut idx = vec![0usize; 4];
            for _ in 0..x.len() {
                let mix = |modes: &[usize]| {
                    let (mut o, mut st) = (0, 1);
                    for &md in modes {
                        o += idx[md - 1] * st;
                        st *= dims[md - 1];
                    }
                    o
                };
                let (r, c) = (mix(s.modes()), mix(&comp));
                assert_eq!(m.at(r, c), x.get(&idx));
                advance(&mut idx, &dims);
            }
        }
    }

    #[test]
    fn degenerate_column_refold() {
        let dims = [3, 2, 1];
        let s = subset(&[1, 2], 3);
        let col = Tensor::new(vec![6, 1], (0..6).map(f64::from).collect()).unwrap();
        let t = refold(&col, &s, &dims).unwrap();
        assert_eq!(t.dims(), &dims);
        assert_eq!(t.data(), col.data());
    }

    #[test]
    fn refold_rejects_wrong_shape() {
        let m = Tensor::zeros(&[3, 3]).unwrap();
        assert!(matches!(
            refold(&m, &subset(&[1], 2), &[2, 3]),
            Err(Error::DimMismatch(..))
        ));
    }

    #[test]
    fn subset_validation() {
        assert!(ModeSubset::new(vec![], 3).is_err());
        assert!(ModeSubset::new(vec![1, 2, 3], 3).is_err());
        assert!(ModeSubset::new(vec![4], 3).is_err());
        assert!(ModeSubset::new(vec![0], 3).is_err());
        assert!(ModeSubset::new(vec![2, 2], 3).is_err());
        assert_eq!(subset(&[3, 1], 3).modes(), &[1, 3]);
        assert!(Tensor::zeros(&[2, 0]).is_err());
        assert!(Tensor::zeros(&[]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn norms_and_inner() {
        let ones = Tensor::filled(&[2, 2, 2], 1.0).unwrap();
        assert_eq!(frobenius_norm(&ones), 8f64.sqrt());
        assert_eq!(frobenius_norm(&Tensor::zeros(&[3]).unwrap()), 0.0);
        let x = cube();
        assert_eq!(inner(&x, &Tensor::zeros(&[2, 2, 2]).unwrap()).unwrap(), 0.0);
        assert_eq!(
            inner(&x, &x).unwrap(),
            (0..8).map(|i| (i * i) as f64).sum::<f64>()
        );
        assert!(inner(&x, &Tensor::zeros(&[2, 4]).unwrap()).is_err());
    }

    #[test]
    fn axpy_cases() {
        let x = cube();
        let y = Tensor::filled(&[2, 2, 2], 3.0).unwrap();
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(
            axpy(5.0, &Tensor::zeros(&[2, 2, 2]).unwrap(), &y).unwrap(),
            y
        );
        let z = axpy(2.0, &x, &y).unwrap();
        for i in 0..8 {
            assert_eq!(z.data()[i], 3.0 + 2.0 * x.data()[i]);
        }
        assert_eq!(x.vec(), vec![0.0, 4.0, 2.0, 6.0, 1.0, 5.0, 3.0, 7.0]);
    }

    #[test]
    fn mask_cases() {
        let x = cube();
        let dims = [2, 2, 2];
        assert_eq!(
            apply_mask(&x, &MaskTensor::all_observed(&dims).unwrap()).unwrap(),
            x
        );
        let none = MaskTensor::from_observed(&dims, &[false; 8]).unwrap();
        assert!(apply_mask(&x, &none).unwrap().is_zero());
        assert!(MaskTensor::new(Tensor::filled(&dims, 0.5).unwrap()).is_err());
        let obs: Vec<bool> = (0..8).map(|i| i % 3 != 1).collect();
        let m = MaskTensor::from_observed(&dims, &obs).unwrap();
        let y = apply_mask(&x, &m).unwrap();
        for (i, &seen) in obs.iter().enumerate() {
            assert_eq!(y.data()[i], if seen { x.data()[i] } else { 0.0 });
        }
    }

    fn arb_tensor() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..4, 2..=4).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            prop::collection::vec(-10.0f64..10.0, n)
                .prop_map(move |data| Tensor::new(dims.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_isometry(x in arb_tensor(), seed in any::<u64>()) {
            let y = x.scale(-0.5);
            let y = Tensor::new(
                y.dims().to_vec(),
                y.data().iter().enumerate().map(|(i, v)| v + ((seed >> (i % 64)) & 1) as f64).collect(),
            ).unwrap();
            let xy = inner(&x, &y).unwrap();
            for s in all_subsets(x.order()) {
                let ux = unfold(&x, &s).unwrap();
                prop_assert_eq!(&refold(&ux, &s, x.dims()).unwrap(), &x);
                let uy = unfold(&y, &s).unwrap();
                let got = inner(&ux, &uy).unwrap();
                prop_assert!((got - xy).abs() <= 1e-12 * xy.abs().max(1.0));
            }
            let n2 = frobenius_norm(&x).powi(2);
            prop_assert!((n2 - inner(&x, &x).unwrap()).abs() <= 1e-12 * n2.max(1.0));
        }

        #[test]
        fn mask_is_idempotent(x in arb_tensor(), bits in any::<u64>()) {
            let obs: Vec<bool> = (0..x.len()).map(|i| (bits >> (i % 64)) & 1 == 1).collect();
            let m = MaskTensor::from_observed(x.dims(), &obs).unwrap();
            let once = apply_mask(&x, &m).unwrap();
            prop_assert_eq!(apply_mask(&once, &m).unwrap(), once);
        }
    }
}
