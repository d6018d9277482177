//! Named measure families used by sweeps and checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sphere::{DiscreteMeasure, UnitVector};

/// Point mass at `e_1`.
pub fn point_mass<T: Real>(dim: usize) -> Result<DiscreteMeasure<T>> {
    Ok(DiscreteMeasure::point_mass(UnitVector::basis(dim, 0)?))
}

/// Equal weights on `±e_{axis+1}`.
pub fn antipodal_on_axis<T: Real>(dim: usize, axis: usize) -> Result<DiscreteMeasure<T>> {
    let e = UnitVector::basis(dim, axis)?;
    DiscreteMeasure::new(vec![e.clone(), e.negated()], vec![T::one(), T::one()])
}

/// Equal weights on `±e_1`.
pub fn antipodal<T: Real>(dim: usize) -> Result<DiscreteMeasure<T>> {
    antipodal_on_axis(dim, 0)
}

/// Uniform measure on the `dim + 1` vertices of a regular simplex inscribed in
/// the sphere; every pairwise overlap equals `-1/dim`.
pub fn simplex<T: Real>(dim: usize) -> Result<DiscreteMeasure<T>> {
    if dim == 0 {
        return Err(Error::EmptyVector);
    }
    // Coordinates of e_i - centroid in the Helmert basis of the hyperplane Σ y = 0 in R^{dim+1}.
    let vertices = (0..=dim)
        .map(|i| {
            let coords = (1..=dim)
                .map(|k| {
                    let norm = ((k * (k + 1)) as f64).sqrt();
                    let c = if i < k {
                        1.0
                    } else if i == k {
                        -(k as f64)
                    } else {
                        0.0
                    };
                    T::lit(c / norm)
                })
                .collect();
            UnitVector::new(coords)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = vec![T::one(); dim + 1];
    DiscreteMeasure::new(vertices, weights)
}

/// `atoms` Gaussian directions with Uniform(0, 1] weights, reproducible from `seed`.
pub fn random<T: Real>(dim: usize, atoms: usize, seed: u64) -> Result<DiscreteMeasure<T>> {
    random_with(dim, atoms, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_with<T: Real, R: Rng + ?Sized>(dim: usize, atoms: usize, rng: &mut R) -> Result<DiscreteMeasure<T>> {
    if atoms == 0 {
        return Err(Error::EmptyMeasure);
    }
    let mut points = Vec::with_capacity(atoms);
    while points.len() < atoms {
        let coords: Vec<T> = (0..dim).map(|_| T::standard_normal(rng)).collect();
        match UnitVector::new(coords) {
            Ok(p) => points.push(p),
            Err(Error::DegenerateDirection) => continue,
            Err(e) => return Err(e),
        }
    }
    let weights = (0..atoms).map(|_| T::one() - T::uniform01(rng)).collect();
    DiscreteMeasure::new(points, weights)
}

/// Serializable description of a measure source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum MeasureSpec {
    PointMass { dim: usize },
    Antipodal { dim: usize },
    Simplex { dim: usize },
    Random { dim: usize, atoms: usize, seed: u64 },
    Inline { measure: crate::sphere::MeasureDocument },
    File { path: String },
}

impl MeasureSpec {
    pub fn build<T: Real>(&self) -> Result<DiscreteMeasure<T>> {
        match self {
            MeasureSpec::PointMass { dim } => point_mass(*dim),
            MeasureSpec::Antipodal { dim } => antipodal(*dim),
            MeasureSpec::Simplex { dim } => simplex(*dim),
            MeasureSpec::Random { dim, atoms, seed } => random(*dim, *atoms, *seed),
            MeasureSpec::Inline { measure } => DiscreteMeasure::from_document(measure),
            MeasureSpec::File { path } => DiscreteMeasure::from_json(&std::fs::read_to_string(path)?),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MeasureSpec::PointMass { dim } => format!("point_mass({dim})"),
            MeasureSpec::Antipodal { dim } => format!("antipodal({dim})"),
            MeasureSpec::Simplex { dim } => format!("simplex({dim})"),
            MeasureSpec::Random { dim, atoms, seed } => format!("random({dim},{atoms},{seed})"),
            MeasureSpec::Inline { .. } => "inline".to_string(),
            MeasureSpec::File { path } => format!("file({path})"),
        }
    }
}
