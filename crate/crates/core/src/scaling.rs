//! Transport of samples and distributions between intensities.
//!
//! Under a change of intensity from 1 to `λ` the typical cell shrinks by
//! `λ^(-1/3)` in every direction, so volumes scale by `1/λ`, surface areas
//! by `λ^(-2/3)` and face counts not at all.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{GammaParams, GenGammaParams, LognormalParams, Model};
use crate::sampling::FeatureSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Volume,
    Surface,
    Faces,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Volume, Feature::Surface, Feature::Faces];

    /// Power of length carried by the feature, divided by three.
    pub fn exponent(self) -> f64 {
        match self {
            Feature::Volume => 1.0,
            Feature::Surface => 2.0 / 3.0,
            Feature::Faces => 0.0,
        }
    }

    /// `λ^exponent`. The surface factor is formed as `cbrt(λ)²`, so for
    /// exact cubes such as 8 it is exact too.
    pub fn factor(self, lambda: f64) -> f64 {
        match self {
            Feature::Volume => lambda,
            Feature::Surface => {
                let c = lambda.cbrt();
                c * c
            }
            Feature::Faces => 1.0,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Feature::Volume => "volume",
            Feature::Surface => "surface",
            Feature::Faces => "faces",
        })
    }
}

impl FromStr for Feature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "volume" => Ok(Feature::Volume),
            "surface" | "surface_area" => Ok(Feature::Surface),
            "faces" => Ok(Feature::Faces),
            other => Err(format!("unknown feature '{other}' (expected volume, surface or faces)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("intensity must be positive and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("face counts have no parametric family to rescale")]
    NoParametricFaces,
}

fn check(lambda: f64) -> Result<(), ScalingError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(ScalingError::InvalidIntensity(lambda))
    }
}

/// Maps a sample observed at intensity 1 to intensity `lambda`.
pub fn scale_sample(values: &[f64], feature: Feature, lambda: f64) -> Result<Vec<f64>, ScalingError> {
    check(lambda)?;
    let f = feature.factor(lambda);
    Ok(values.iter().map(|v| v / f).collect())
}

/// `x ↦ F_1(λ^e x)`: the distribution function at intensity `lambda` given the one at 1.
pub fn scale_cdf<F: Fn(f64) -> f64>(cdf_at_1: F, feature: Feature, lambda: f64) -> Result<impl Fn(f64) -> f64, ScalingError> {
    check(lambda)?;
    let f = feature.factor(lambda);
    Ok(move |x: f64| cdf_at_1(f * x))
}

/// `x ↦ λ^e f_1(λ^e x)`. For face counts this is the identity on the PMF.
pub fn scale_density<F: Fn(f64) -> f64>(density_at_1: F, feature: Feature, lambda: f64) -> Result<impl Fn(f64) -> f64, ScalingError> {
    check(lambda)?;
    let f = feature.factor(lambda);
    Ok(move |x: f64| f * density_at_1(f * x))
}

/// Fitted parameters at intensity `lambda` from parameters at intensity 1.
pub fn scale_params(model: &Model, feature: Feature, lambda: f64) -> Result<Model, ScalingError> {
    check(lambda)?;
    if feature == Feature::Faces {
        return Err(ScalingError::NoParametricFaces);
    }
    let f = feature.factor(lambda);
    Ok(match *model {
        Model::GenGamma(p) => Model::GenGamma(GenGammaParams {
            a: p.a / f,
            std_errors: p.std_errors.map(|[sa, sb, sk]| [sa / f, sb, sk]),
            ..p
        }),
        Model::Gamma(p) => Model::Gamma(GammaParams {
            a: p.a / f,
            std_errors: p.std_errors.map(|[sa, sk]| [sa / f, sk]),
            ..p
        }),
        Model::Lognormal(p) => Model::Lognormal(LognormalParams {
            mu: p.mu - feature.exponent() * lambda.ln(),
            ..p
        }),
    })
}

/// Rescales every column of `sample` from its own intensity to `target`.
pub fn scale_feature_sample(sample: &FeatureSample, target: f64) -> Result<FeatureSample, ScalingError> {
    check(target)?;
    let ratio = target / sample.lambda;
    Ok(FeatureSample {
        lambda: target,
        volumes: scale_sample(&sample.volumes, Feature::Volume, ratio)?,
        surface_areas: scale_sample(&sample.surface_areas, Feature::Surface, ratio)?,
        ..sample.clone()
    })
}
