//! Homogeneous Poisson configurations around the origin and the exact typical
//! cell they induce.
//!
//! Sites are drawn in concentric shells and clipped against in order of
//! increasing distance. Once every site within the search radius `R` has been
//! applied and the cell's circumradius `ρ` satisfies `2ρ <= R`, no farther site
//! can touch the cell: its bisector lies beyond distance `ρ` from the origin.
//! The returned cell therefore equals the cell of the origin in the infinite
//! process, with no boundary effect.

use std::f64::consts::PI;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ConvexPolytope, GeometryError, HalfSpace};
use crate::scaling::Feature;

/// Growth rounds allowed before a cell build is declared failed.
pub const MAX_GROWTH_ROUNDS: u32 = 30;

pub const DEFAULT_GROWTH_FACTOR: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("intensity must be positive and finite, got {0}")]
    InvalidIntensity(f64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("cell did not stabilise after {rounds} growth rounds (search radius {radius})")]
    NoTermination { rounds: u32, radius: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid feature sample: {0}")]
    InvalidSample(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub lambda: f64,
    pub n_cells: usize,
    pub seed: u64,
    /// Radius of the first sampling ball; defaults to `2 λ^(-1/3)`.
    pub initial_radius: Option<f64>,
    pub growth_factor: f64,
}

impl SimulationConfig {
    pub fn new(lambda: f64, n_cells: usize, seed: u64) -> Self {
        Self {
            lambda,
            n_cells,
            seed,
            initial_radius: None,
            growth_factor: DEFAULT_GROWTH_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        check_lambda(self.lambda)?;
        if self.n_cells == 0 {
            return Err(SamplingError::InvalidConfig("n_cells must be at least 1".into()));
        }
        self.cell_options().validate()
    }

    pub fn cell_options(&self) -> CellOptions {
        CellOptions {
            initial_radius: self.initial_radius,
            growth_factor: self.growth_factor,
            ..CellOptions::default()
        }
    }
}

/// Knobs for a single typical-cell build.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOptions {
    pub initial_radius: Option<f64>,
    pub growth_factor: f64,
    /// Keep growing the sampling ball at least up to this radius.
    pub min_search_radius: f64,
    /// Apply every sampled site, even those too far away to cut.
    pub exhaustive: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            initial_radius: None,
            growth_factor: DEFAULT_GROWTH_FACTOR,
            min_search_radius: 0.0,
            exhaustive: false,
        }
    }
}

impl CellOptions {
    fn validate(&self) -> Result<(), SamplingError> {
        if !(self.growth_factor > 1.0 && self.growth_factor.is_finite()) {
            return Err(SamplingError::InvalidConfig(format!(
                "growth_factor must exceed 1, got {}",
                self.growth_factor
            )));
        }
        if let Some(r) = self.initial_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(SamplingError::InvalidConfig(format!(
                    "initial_radius must be positive, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// A finished cell together with the search radius that certified it.
#[derive(Debug, Clone)]
pub struct CellBuild {
    pub cell: ConvexPolytope,
    pub search_radius: f64,
    pub rounds: u32,
    pub sites_sampled: usize,
}

fn check_lambda(lambda: f64) -> Result<(), SamplingError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SamplingError::InvalidIntensity(lambda))
    }
}

/// Independent random stream for cell `index` of a run seeded with `seed`.
pub fn cell_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Poisson points with intensity `lambda` in the shell `r_in < |x| <= r_out`.
pub fn sample_poisson_shell<R: Rng + ?Sized>(
    lambda: f64,
    r_in: f64,
    r_out: f64,
    rng: &mut R,
) -> Vec<DVec3> {
    assert!(
        0.0 <= r_in && r_in <= r_out,
        "shell radii must satisfy 0 <= r_in <= r_out"
    );
    let (inner3, outer3) = (r_in.powi(3), r_out.powi(3));
    let mean = lambda * 4.0 / 3.0 * PI * (outer3 - inner3);
    if !(mean > 0.0) {
        return Vec::new();
    }
    let count = Poisson::new(mean)
        .expect("positive finite Poisson mean")
        .sample(rng) as usize;
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let r = (inner3 + u * (outer3 - inner3)).cbrt();
            let dir: [f64; 3] = UnitSphere.sample(rng);
            DVec3::from_array(dir) * r
        })
        .collect()
}

/// Voronoi cell of the origin in `{0} ∪ Φ_λ`, built with the default options.
pub fn typical_cell<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<ConvexPolytope, SamplingError> {
    Ok(build_typical_cell(lambda, rng, &CellOptions::default())?.cell)
}

fn sorted_by_norm(mut pts: Vec<DVec3>) -> Vec<DVec3> {
    pts.sort_by(|a, b| a.length_squared().total_cmp(&b.length_squared()));
    pts
}

pub fn build_typical_cell<R: Rng + ?Sized>(
    lambda: f64,
    rng: &mut R,
    opts: &CellOptions,
) -> Result<CellBuild, SamplingError> {
    check_lambda(lambda)?;
    opts.validate()?;
    let mut radius = opts.initial_radius.unwrap_or(2.0 / lambda.cbrt());
    // Keeping the seed box wider than R/2 means a surviving box face forces
    // ρ > R/2, so the stopping test can never accept a truncated cell.
    let mut half_width = 2.0 * radius;
    let mut cell = ConvexPolytope::initial_cell(half_width)?;
    let mut sites = sorted_by_norm(sample_poisson_shell(lambda, 0.0, radius, rng));
    let mut next = 0;
    let mut rho = cell.circumradius();
    let mut rounds = 0;

    loop {
        while next < sites.len() {
            let site = sites[next];
            if !opts.exhaustive && site.length() > 2.0 * rho {
                // sorted: nothing farther in this pool can cut either
                next = sites.len();
                break;
            }
            next += 1;
            if cell.clip_in_place(&HalfSpace::bisector(site)?)? {
                rho = cell.circumradius();
            }
        }

        if 2.0 * rho <= radius && radius >= opts.min_search_radius && !cell.has_seed_faces() {
            debug_assert_eq!(cell.euler_characteristic(), 2);
            return Ok(CellBuild {
                cell,
                search_radius: radius,
                rounds,
                sites_sampled: sites.len(),
            });
        }

        rounds += 1;
        if rounds > MAX_GROWTH_ROUNDS {
            return Err(SamplingError::NoTermination { rounds, radius });
        }
        let grown = radius * opts.growth_factor;
        sites.extend(sorted_by_norm(sample_poisson_shell(lambda, radius, grown, rng)));
        radius = grown;

        if cell.has_seed_faces() && radius >= 2.0 * half_width {
            half_width = 2.0 * radius;
            cell = ConvexPolytope::initial_cell(half_width)?;
            rho = cell.circumradius();
            next = 0;
        }
    }
}

/// Length of the origin's cell in a 1D Poisson process of intensity `lambda`:
/// half the gap to the nearest site on each side.
pub fn typical_cell_length_1d<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> f64 {
    let gap = Exp::new(lambda).expect("positive intensity");
    0.5 * (gap.sample(rng) + gap.sample(rng))
}

/// Measured features of `n` independent typical cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSample {
    pub lambda: f64,
    pub seed: u64,
    pub volumes: Vec<f64>,
    pub surface_areas: Vec<f64>,
    pub face_counts: Vec<u32>,
    pub vertex_counts: Vec<u32>,
}

impl FeatureSample {
    pub fn new(
        lambda: f64,
        seed: u64,
        volumes: Vec<f64>,
        surface_areas: Vec<f64>,
        face_counts: Vec<u32>,
        vertex_counts: Vec<u32>,
    ) -> Result<Self, SamplingError> {
        let s = Self {
            lambda,
            seed,
            volumes,
            surface_areas,
            face_counts,
            vertex_counts,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        check_lambda(self.lambda)?;
        let n = self.volumes.len();
        let bad = |m: String| Err(SamplingError::InvalidSample(m));
        if n == 0 {
            return bad("empty sample".into());
        }
        if self.surface_areas.len() != n || self.face_counts.len() != n || self.vertex_counts.len() != n {
            return bad("column lengths differ".into());
        }
        for i in 0..n {
            let (v, s, f, nv) = (
                self.volumes[i],
                self.surface_areas[i],
                self.face_counts[i],
                self.vertex_counts[i],
            );
            if !(v > 0.0 && v.is_finite() && s > 0.0 && s.is_finite()) {
                return bad(format!("row {i}: volume and surface area must be positive"));
            }
            // a convex polytope with F faces has between F/2 + 2 and 2F - 4 vertices
            if f < 4 || nv < 4 || nv > 2 * f - 4 || 2 * nv < f + 4 {
                return bad(format!("row {i}: {f} faces and {nv} vertices is not a polytope"));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.volumes.len()
    }

    /// A column as floats; face counts are converted exactly.
    pub fn column(&self, feature: Feature) -> Vec<f64> {
        match feature {
            Feature::Volume => self.volumes.clone(),
            Feature::Surface => self.surface_areas.clone(),
            Feature::Faces => self.face_counts.iter().map(|&f| f64::from(f)).collect(),
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.n());
        Self {
            lambda: self.lambda,
            seed: self.seed,
            volumes: self.volumes[..n].to_vec(),
            surface_areas: self.surface_areas[..n].to_vec(),
            face_counts: self.face_counts[..n].to_vec(),
            vertex_counts: self.vertex_counts[..n].to_vec(),
        }
    }

    fn from_rows(lambda: f64, seed: u64, rows: Vec<crate::geometry::CellMeasures>) -> Self {
        let to_u32 = |c: usize| u32::try_from(c).expect("face count fits in u32");
        Self {
            lambda,
            seed,
            volumes: rows.iter().map(|m| m.volume).collect(),
            surface_areas: rows.iter().map(|m| m.surface_area).collect(),
            face_counts: rows.iter().map(|m| to_u32(m.faces)).collect(),
            vertex_counts: rows.iter().map(|m| to_u32(m.vertices)).collect(),
        }
    }
}

fn simulate_one(cfg: &SimulationConfig, opts: &CellOptions, index: usize) -> Result<crate::geometry::CellMeasures, SamplingError> {
    let mut rng = cell_rng(cfg.seed, index as u64);
    Ok(build_typical_cell(cfg.lambda, &mut rng, opts)?.cell.measure())
}

/// Simulates and measures `cfg.n_cells` typical cells on the current rayon pool.
///
/// Cell `i` always uses [`cell_rng`]`(seed, i)`, so the result does not depend
/// on the number of worker threads.
pub fn simulate_batch(cfg: &SimulationConfig) -> Result<FeatureSample, SamplingError> {
    cfg.validate()?;
    let opts = cfg.cell_options();
    let rows = (0..cfg.n_cells)
        .into_par_iter()
        .map(|i| simulate_one(cfg, &opts, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureSample::from_rows(cfg.lambda, cfg.seed, rows))
}

/// Single-threaded [`simulate_batch`].
pub fn simulate_batch_serial(cfg: &SimulationConfig) -> Result<FeatureSample, SamplingError> {
    cfg.validate()?;
    let opts = cfg.cell_options();
    let rows = (0..cfg.n_cells)
        .map(|i| simulate_one(cfg, &opts, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureSample::from_rows(cfg.lambda, cfg.seed, rows))
}
