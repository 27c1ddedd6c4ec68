use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::NetError;

/// Per-column min/max scaling onto [-1, 1], fitted on training rows only.
///
/// Constant columns map to 0. Values outside the fitted range are clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl ChannelScaler {
    pub fn fit(train: ArrayView2<f64>) -> Result<Self, NetError> {
        if train.nrows() == 0 {
            return Err(NetError::Empty("scaler training matrix"));
        }
        if train.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("scaler training matrix"));
        }
        let mins = train
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let maxs = train
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(ChannelScaler { mins, maxs })
    }

    pub fn width(&self) -> usize {
        self.mins.len()
    }

    pub fn scale_value(&self, column: usize, v: f64) -> f64 {
        let (lo, hi) = (self.mins[column], self.maxs[column]);
        if hi <= lo {
            return 0.0;
        }
        (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NetError> {
        if x.ncols() != self.width() {
            return Err(NetError::DimensionMismatch {
                what: "scaler input",
                expected: self.width(),
                found: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("scaler input"));
        }
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| self.scale_value(j, v));
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Array1<f64>, NetError> {
        let view = ArrayView2::from_shape((1, row.len()), row).expect("row view");
        Ok(self.transform(view)?.row(0).to_owned())
    }
}

/// One scaler per input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub channels: Vec<ChannelScaler>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn maps_range_to_unit_interval() {
        let train = array![[0.0, 5.0, 2.0], [10.0, 5.0, 4.0], [5.0, 5.0, 3.0]];
        let s = ChannelScaler::fit(train.view()).unwrap();
        let out = s.transform(train.view()).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![-1.0, 1.0, 0.0]);
        assert_eq!(out.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(out.column(2).to_vec(), vec![-1.0, 1.0, 0.0]);
        let held = array![[-5.0, 7.0, 100.0]];
        assert_eq!(s.transform(held.view()).unwrap().row(0).to_vec(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_wrong_width_and_nan() {
        let s = ChannelScaler::fit(array![[0.0, 1.0]].view()).unwrap();
        assert!(s.transform(array![[0.0]].view()).is_err());
        assert!(s.transform(array![[f64::NAN, 0.0]].view()).is_err());
        assert!(ChannelScaler::fit(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    proptest! {
        #[test]
        fn output_stays_in_range(
            train in proptest::collection::vec(-1e3f64..1e3, 12),
            probe in proptest::collection::vec(-1e4f64..1e4, 3),
        ) {
            let m = Array2::from_shape_vec((4, 3), train).unwrap();
            let s = ChannelScaler::fit(m.view()).unwrap();
            let fitted = s.transform(m.view()).unwrap();
            prop_assert!(fitted.iter().all(|v| (-1.0..=1.0).contains(v)));
            let p = s.transform_row(&probe).unwrap();
            prop_assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}
