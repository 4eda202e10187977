use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STDDEV_FLOOR: f64 = 1e-6;

/// Per-dimension mean and (population) standard deviation of dense features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseStats {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl DenseStats {
    /// Fits on training vectors only.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for row in rows {
            if n == 0 {
                sum = vec![0.0; row.len()];
                sq = vec![0.0; row.len()];
            } else if row.len() != sum.len() {
                return Err(Error::data(format!(
                    "dense vectors of length {} and {}",
                    sum.len(),
                    row.len()
                )));
            }
            for (i, &x) in row.iter().enumerate() {
                sum[i] += x;
                sq[i] += x * x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::data("cannot fit normalization on zero rows"));
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let stddev = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / nf - m * m).max(0.0).sqrt())
            .collect();
        Ok(DenseStats { mean, stddev })
    }

    /// `(x − mean) / max(stddev, 1e-6)` per dimension.
    pub fn normalize(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.mean.len() {
            return Err(Error::data(format!(
                "expected {} dense values, got {}",
                self.mean.len(),
                values.len()
            )));
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.stddev))
            .map(|(x, (m, s))| (x - m) / s.max(STDDEV_FLOOR))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn mean_maps_to_zero() {
        let stats = DenseStats {
            mean: vec![1.0, -2.0],
            stddev: vec![3.0, 0.5],
        };
        assert_eq!(stats.normalize(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(stats.normalize(&[1.0]).is_err());
    }

    #[test]
    fn zero_stddev_uses_floor() {
        let rows = [vec![4.0], vec![4.0]];
        let stats = DenseStats::fit(rows.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(stats.stddev, vec![0.0]);
        let z = stats.normalize(&[4.5]).unwrap()[0];
        assert!(z.is_finite());
        assert!((z - 0.5e6).abs() < 1e-3);
    }

    #[test]
    fn normalized_training_column_has_unit_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..2000)
            .map(|_| vec![rng.random_range(0.0..30.0), 86_400.0 * rng.random_range(0.0..365.0)])
            .collect();
        let stats = DenseStats::fit(rows.iter().map(Vec::as_slice)).unwrap();
        let z: Vec<Vec<f64>> = rows.iter().map(|r| stats.normalize(r).unwrap()).collect();
        for d in 0..2 {
            // recompute the moments directly, two-pass
            let col: Vec<f64> = z.iter().map(|r| r[d]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-3, "std {}", var.sqrt());
        }
    }
}
