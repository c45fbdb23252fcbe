//! Frozen point-set encoder: a shared per-point map followed by
//! coordinatewise max pooling, so the output does not depend on point order.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Result, ZslError};

/// An unordered collection of points in 3-space, one point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    points: Array2<f64>,
}

impl PointSet {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(ZslError::arg("point set is empty"));
        }
        if points.ncols() != 3 {
            return Err(ZslError::arg(format!("points must be 3-dimensional, got {}", points.ncols())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::Validation("point coordinates must be finite".into()));
        }
        Ok(PointSet { points })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// Weights of the per-point map `3 -> hidden -> out`, tanh after each layer.
/// Never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl EncoderParams {
    pub fn init(hidden: usize, out_dim: usize, seed: u64) -> Result<Self> {
        if hidden == 0 || out_dim == 0 {
            return Err(ZslError::arg("encoder dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng));
            let b = Array1::from_shape_fn(fan_out, |_| 0.1 * dist.sample(&mut rng));
            (w, b)
        };
        let (w1, b1) = layer(3, hidden);
        let (w2, b2) = layer(hidden, out_dim);
        Ok(EncoderParams { w1, b1, w2, b2 })
    }

    pub fn out_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// Per-point features, one row per point.
    pub fn point_features(&self, ps: &PointSet) -> Array2<f64> {
        let h = (ps.points.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        (h.dot(&self.w2) + &self.b2).mapv(f64::tanh)
    }

    /// Max-pooled set feature.
    pub fn encode(&self, ps: &PointSet) -> Result<Array1<f64>> {
        if ps.is_empty() {
            return Err(ZslError::arg("point set is empty"));
        }
        let feats = self.point_features(ps);
        Ok(feats.fold_axis(Axis(0), f64::NEG_INFINITY, |&acc, &v| acc.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand_distr::StandardNormal;

    fn random_set(n: usize, seed: u64) -> PointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointSet::new(Array2::from_shape_fn((n, 3), |_| StandardNormal.sample(&mut rng))).unwrap()
    }

    #[test]
    fn permutation_gives_identical_bits() {
        let enc = EncoderParams::init(16, 8, 3).unwrap();
        let ps = random_set(20, 1);
        let base = enc.encode(&ps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut order: Vec<usize> = (0..20).collect();
        order.shuffle(&mut rng);
        let perm = PointSet::new(ps.points().select(Axis(0), &order)).unwrap();
        let out = enc.encode(&perm).unwrap();
        assert!(base.iter().zip(out.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn single_point_equals_its_feature() {
        let enc = EncoderParams::init(16, 8, 3).unwrap();
        let ps = random_set(1, 5);
        assert_eq!(enc.encode(&ps).unwrap(), enc.point_features(&ps).row(0));
    }

    #[test]
    fn duplicate_point_does_not_change_output() {
        let enc = EncoderParams::init(16, 8, 3).unwrap();
        let ps = random_set(10, 2);
        let mut pts = ps.points().clone();
        pts.push_row(ps.points().row(4)).unwrap();
        let dup = PointSet::new(pts).unwrap();
        // oracle: recompute the max-pool over the duplicated rows directly
        let feats = enc.point_features(&dup);
        let mut oracle = vec![f64::NEG_INFINITY; enc.out_dim()];
        for row in feats.rows() {
            for (o, &v) in oracle.iter_mut().zip(row) {
                if v > *o {
                    *o = v;
                }
            }
        }
        assert_eq!(enc.encode(&dup).unwrap().to_vec(), oracle);
        assert_eq!(enc.encode(&dup).unwrap(), enc.encode(&ps).unwrap());
    }

    #[test]
    fn adding_points_never_lowers_a_coordinate() {
        let enc = EncoderParams::init(16, 8, 4).unwrap();
        let ps = random_set(10, 6);
        let extra = random_set(3, 7);
        let mut pts = ps.points().clone();
        for r in extra.points().rows() {
            pts.push_row(r).unwrap();
        }
        let before = enc.encode(&ps).unwrap();
        let after = enc.encode(&PointSet::new(pts).unwrap()).unwrap();
        assert!(before.iter().zip(after.iter()).all(|(b, a)| a >= b));
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(matches!(PointSet::new(Array2::zeros((0, 3))), Err(ZslError::Argument(_))));
    }
}
