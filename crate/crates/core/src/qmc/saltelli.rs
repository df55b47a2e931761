use super::sobol::{SobolGenerator, MAX_DIMENSION};
use crate::estimate::FeatureEstimate;
use crate::{Error, Matrix, Result};

pub const MIN_ENSEMBLE: usize = 64;

/// A one-dimensional input distribution addressed by its quantile function.
pub trait Marginal {
    /// Feature-space value at uniform coordinate `u ∈ (0, 1)`.
    fn quantile(&self, u: f64) -> f64;
    /// Constant inputs are held fixed and get no Sobol dimensions.
    fn is_constant(&self) -> bool;
    /// Value used for constant inputs.
    fn center(&self) -> f64;
}

impl Marginal for FeatureEstimate {
    fn quantile(&self, u: f64) -> f64 {
        self.value + self.uncertainty.quantile(u)
    }

    fn is_constant(&self) -> bool {
        self.is_point_mass()
    }

    fn center(&self) -> f64 {
        self.value
    }
}

/// Saltelli sample matrices in feature space.
///
/// `a` and `b` are `m × K` over every input; constant inputs repeat their
/// center in each row. `ab[i]` is `a` with the column of the i-th varying
/// input (`varying[i]`) taken from `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QmcMatrices {
    pub a: Matrix,
    pub b: Matrix,
    pub ab: Vec<Matrix>,
    /// Input indices that vary, in Sobol-dimension order.
    pub varying: Vec<usize>,
}

impl QmcMatrices {
    pub fn ensemble_size(&self) -> usize {
        self.a.rows()
    }

    /// Number of varying inputs k.
    pub fn k(&self) -> usize {
        self.varying.len()
    }
}

/// Builds Saltelli matrices from feature estimates; point-mass estimates are
/// constant columns.
pub fn build_saltelli(gen: &mut SobolGenerator, m: usize, estimates: &[FeatureEstimate]) -> Result<QmcMatrices> {
    let marginals: Vec<&dyn Marginal> = estimates.iter().map(|e| e as &dyn Marginal).collect();
    build_saltelli_from(gen, m, &marginals)
}

/// Draws `m` points in `[0,1)^{2k}` for the k varying inputs; the first k
/// coordinates feed `A`, the last k feed `B`.
pub fn build_saltelli_from(gen: &mut SobolGenerator, m: usize, inputs: &[&dyn Marginal]) -> Result<QmcMatrices> {
    if m < MIN_ENSEMBLE {
        return Err(Error::Config(format!("QMC ensemble size {m} below {MIN_ENSEMBLE}")));
    }
    let width = inputs.len();
    let varying: Vec<usize> = (0..width).filter(|&j| !inputs[j].is_constant()).collect();
    let k = varying.len();
    if 2 * k > MAX_DIMENSION {
        return Err(Error::UnsupportedDimension(2 * k));
    }
    if k > 0 && gen.dimension() < 2 * k {
        return Err(Error::Config(format!(
            "Sobol generator has {} dimensions, Saltelli needs {}",
            gen.dimension(),
            2 * k
        )));
    }

    let mut a = Matrix::zeros(m, width);
    let mut b = Matrix::zeros(m, width);
    for (j, input) in inputs.iter().enumerate() {
        if input.is_constant() {
            let c = input.center();
            for i in 0..m {
                a.set(i, j, c);
                b.set(i, j, c);
            }
        }
    }
    if k > 0 {
        let mut point = vec![0.0; gen.dimension()];
        for i in 0..m {
            gen.next_into(&mut point);
            for (slot, &j) in varying.iter().enumerate() {
                a.set(i, j, inputs[j].quantile(point[slot]));
                b.set(i, j, inputs[j].quantile(point[k + slot]));
            }
        }
    }
    let ab = varying
        .iter()
        .map(|&j| {
            let mut hybrid = a.clone();
            for i in 0..m {
                hybrid.set(i, j, b.get(i, j));
            }
            hybrid
        })
        .collect();
    Ok(QmcMatrices { a, b, ab, varying })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::UncertaintyDist;

    fn normal(value: f64, sigma: f64) -> FeatureEstimate {
        FeatureEstimate {
            feature_id: "f".into(),
            value,
            uncertainty: UncertaintyDist::normal(sigma),
            n: 10,
            population: 100,
        }
    }

    #[test]
    fn point_mass_only_gives_constant_matrices() {
        let mut gen = SobolGenerator::new(2).unwrap();
        let q = build_saltelli(&mut gen, 64, &[normal(3.0, 0.0)]).unwrap();
        assert!(q.ab.is_empty());
        assert_eq!(q.a, q.b);
        assert!(q.a.column(0).iter().all(|&v| v == 3.0));
        assert_eq!(gen.index(), 1, "no points consumed");
    }

    #[test]
    fn hybrids_differ_in_one_column() {
        let est = [normal(1.0, 1.0), normal(5.0, 0.0), normal(-2.0, 0.5)];
        let mut gen = SobolGenerator::new(4).unwrap();
        let q = build_saltelli(&mut gen, 128, &est).unwrap();
        assert_eq!(q.varying, vec![0, 2]);
        for (slot, &j) in q.varying.iter().enumerate() {
            for c in 0..3 {
                let same = (0..128).all(|i| q.ab[slot].get(i, c) == q.a.get(i, c));
                assert_eq!(same, c != j, "slot {slot} column {c}");
            }
            assert_eq!(q.ab[slot].column(j), q.b.column(j));
        }
    }

    #[test]
    fn small_ensemble_column_means() {
        // m = 8 is below the production floor, so map the first Sobol points directly
        let mut gen = SobolGenerator::new(4).unwrap();
        let pts = gen.next_points(8);
        let est = [normal(10.0, 1.0), normal(-3.0, 1.0)];
        for (slot, e) in est.iter().enumerate() {
            let mean: f64 = (0..8).map(|i| e.quantile(pts.get(i, slot))).sum::<f64>() / 8.0;
            assert!((mean - e.value).abs() < 0.4, "{mean}");
        }
    }

    #[test]
    fn empirical_median_maps_to_estimate() {
        let e = FeatureEstimate {
            feature_id: "m".into(),
            value: 4.0,
            uncertainty: UncertaintyDist::empirical(vec![-1.0, 0.0, 1.0]),
            n: 10,
            population: 100,
        };
        assert_eq!(e.quantile(0.5), 4.0);
    }

    #[test]
    fn rejects_small_m_and_wide_inputs() {
        let mut gen = SobolGenerator::new(2).unwrap();
        assert!(build_saltelli(&mut gen, 63, &[normal(0.0, 1.0)]).is_err());
        let wide: Vec<_> = (0..33).map(|_| normal(0.0, 1.0)).collect();
        let mut gen = SobolGenerator::new(64).unwrap();
        assert!(matches!(build_saltelli(&mut gen, 64, &wide), Err(Error::UnsupportedDimension(66))));
    }
}
