//! Goodness-of-fit distances between empirical summaries and fitted models.

use serde::{Deserialize, Serialize};

use crate::fitting::{Family, Model};
use crate::statistics::{trapezoid, DensityEstimate, EmpiricalDistribution};

/// Kolmogorov-Smirnov distance `sup_x |F_n(x) - G(x)|`.
///
/// At each distinct sample value both one-sided limits of the step function
/// are compared against `G`, which makes the result exact when `G` is
/// continuous and nondecreasing.
pub fn sup_distance(emp: &EmpiricalDistribution, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut prev = 0.0;
    let mut worst: f64 = 0.0;
    for (x, fx) in emp.steps() {
        let g = cdf(x);
        worst = worst.max((fx - g).abs()).max((prev - g).abs());
        prev = fx;
    }
    worst
}

/// Total variation distance between a density estimate and a density `g`:
/// `½ ∫ |f - g|`, with the integral over `f`'s grid done by the trapezoid
/// rule and `g`'s mass outside the grid (where `f` vanishes) added exactly.
pub fn tv_distance(f: &DensityEstimate, g: impl Fn(f64) -> f64, mass_outside_grid: f64) -> f64 {
    let diff: Vec<f64> = f.grid.iter().zip(&f.density).map(|(&x, &d)| (d - g(x)).abs()).collect();
    0.5 * (trapezoid(&f.grid, &diff) + mass_outside_grid.max(0.0))
}

/// [`tv_distance`] against a fitted model, using its CDF for the tails.
pub fn tv_distance_model(f: &DensityEstimate, model: &Model) -> f64 {
    let (lo, hi) = (f.grid[0], f.grid[f.grid.len() - 1]);
    let outside = model.cdf(lo) + (1.0 - model.cdf(hi));
    tv_distance(f, |x| model.pdf(x), outside)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub family: Family,
    pub sup_distance: f64,
    pub tv_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub bandwidth: f64,
    /// Best first: ascending TV distance, ties broken by sup distance.
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn ranking(&self) -> Vec<Family> {
        self.rows.iter().map(|r| r.family).collect()
    }

    pub fn row(&self, family: Family) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.family == family)
    }
}

pub fn compare_families(emp: &EmpiricalDistribution, kde: &DensityEstimate, models: &[Model]) -> Comparison {
    let mut rows: Vec<ComparisonRow> = models
        .iter()
        .map(|m| ComparisonRow {
            family: m.family(),
            sup_distance: sup_distance(emp, |x| m.cdf(x)),
            tv_distance: tv_distance_model(kde, m),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.tv_distance
            .total_cmp(&b.tv_distance)
            .then(a.sup_distance.total_cmp(&b.sup_distance))
    });
    Comparison {
        bandwidth: kde.bandwidth,
        rows,
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xs, ys) = (a.values(), b.values());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of [`ks_two_sample`] at level `alpha`:
/// `c(α) √((n + m) / (n m))` with `c(α) = √(-½ ln(α/2))`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::{GammaParams, GenGammaParams, LognormalParams};
    use crate::statistics::{kde_epanechnikov, linear_grid};
    use proptest::prelude::*;

    fn gg() -> Model {
        Model::GenGamma(GenGammaParams::new(0.380, 1.287, 3.583).unwrap())
    }

    #[test]
    fn exact_quantiles_are_within_one_over_n() {
        let m = gg();
        for n in [1usize, 5, 100, 1000] {
            let xs: Vec<f64> = (1..=n).map(|i| m.quantile(i as f64 / (n + 1) as f64)).collect();
            let emp = EmpiricalDistribution::new(xs).unwrap();
            let d = sup_distance(&emp, |x| m.cdf(x));
            assert!(d <= 1.0 / n as f64 + 1e-12, "n={n}: {d}");
        }
    }

    #[test]
    fn sup_distance_brute_force_oracle() {
        // dense evaluation of |F_n - G| just left and right of every jump
        let xs = vec![0.2, 0.5, 0.5, 0.9, 1.4, 2.0];
        let emp = EmpiricalDistribution::new(xs.clone()).unwrap();
        let g = |x: f64| 1.0 - (-x).exp();
        let mut brute: f64 = 0.0;
        for x in linear_grid(0.0, 3.0, 300_001) {
            let fn_ = xs.iter().filter(|&&v| v <= x).count() as f64 / 6.0;
            brute = brute.max((fn_ - g(x)).abs());
        }
        let d = sup_distance(&emp, g);
        assert!(d >= brute - 1e-12 && d - brute < 1e-4, "{d} vs {brute}");
    }

    #[test]
    fn identical_densities_have_zero_tv() {
        let m = gg();
        let grid = linear_grid(0.0, 6.0, 512);
        let f = DensityEstimate {
            density: grid.iter().map(|&x| m.pdf(x)).collect(),
            grid,
            bandwidth: 0.05,
        };
        assert!(tv_distance_model(&f, &m) < 1e-4);
    }

    #[test]
    fn disjoint_supports_have_unit_tv() {
        let grid = linear_grid(0.0, 1.0, 1001);
        let f = DensityEstimate {
            density: vec![1.0; 1001],
            grid,
            bandwidth: 1.0,
        };
        let tv = tv_distance(&f, |_| 0.0, 1.0);
        assert!((tv - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_orders_by_tv_then_sup() {
        let m = gg();
        let xs: Vec<f64> = (1..=2000).map(|i| m.quantile(i as f64 / 2001.0)).collect();
        let emp = EmpiricalDistribution::from_slice(&xs).unwrap();
        let grid = linear_grid(0.0, 4.0, 512);
        let kde = kde_epanechnikov(&xs, 0.1, &grid).unwrap();
        let models = [
            Model::Lognormal(LognormalParams::new(-0.2, 0.6).unwrap()),
            m,
            Model::Gamma(GammaParams::new(0.4, 2.0).unwrap()),
        ];
        let cmp = compare_families(&emp, &kde, &models);
        assert_eq!(cmp.ranking()[0], Family::GenGamma);
        assert!(cmp.rows.windows(2).all(|w| w[0].tv_distance <= w[1].tv_distance));
        assert_eq!(compare_families(&emp, &kde, &[m]).rows.len(), 1);
    }

    #[test]
    fn ks_two_sample_examples() {
        let a = EmpiricalDistribution::new(vec![1.0, 2.0, 3.0]).unwrap();
        let b = EmpiricalDistribution::new(vec![4.0, 5.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let c = EmpiricalDistribution::new(vec![1.5, 2.5, 3.5]).unwrap();
        assert!((ks_two_sample(&a, &c) - 1.0 / 3.0).abs() < 1e-15);
        assert!((ks_critical_value(10_000, 10_000, 0.01) - 1.6276 * (2.0f64 / 10_000.0).sqrt()).abs() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn distances_are_scale_invariant(xs in proptest::collection::vec(0.05f64..3.0, 20..200), log_c in -3.0f64..3.0) {
            let c = log_c.exp();
            let p = GenGammaParams::new(0.380, 1.287, 3.583).unwrap();
            let m = Model::GenGamma(p);
            let ys: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let mc = Model::GenGamma(GenGammaParams::new(c * p.a, p.b, p.k).unwrap());

            let (e1, e2) = (EmpiricalDistribution::from_slice(&xs).unwrap(), EmpiricalDistribution::from_slice(&ys).unwrap());
            let d1 = sup_distance(&e1, |x| m.cdf(x));
            let d2 = sup_distance(&e2, |x| mc.cdf(x));
            prop_assert!((d1 - d2).abs() < 1e-6);
            prop_assert!((0.0..=1.0).contains(&d1));

            let h = 0.2;
            let g1 = linear_grid(0.0, 3.0 + 3.0 * h, 256);
            let g2: Vec<f64> = g1.iter().map(|x| c * x).collect();
            let k1 = kde_epanechnikov(&xs, h, &g1).unwrap();
            let k2 = kde_epanechnikov(&ys, c * h, &g2).unwrap();
            let (t1, t2) = (tv_distance_model(&k1, &m), tv_distance_model(&k2, &mc));
            prop_assert!((t1 - t2).abs() < 1e-6, "{} {}", t1, t2);
            prop_assert!(t1 >= 0.0 && t1 <= 1.0 + 1e-3);
        }
    }
}
