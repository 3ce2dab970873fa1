//! Simulates a batch of typical cells and prints the summary tables:
//! moments, face distribution, fits and goodness-of-fit distances.
//!
//!     cargo run --release --example reproduce -- [n_cells] [seed]

use std::time::Instant;

use pvcell::distances::compare_families;
use pvcell::fitting::{fit_gamma, fit_gengamma, fit_lognormal, Model};
use pvcell::sampling::{simulate_batch, SimulationConfig};
use pvcell::scaling::Feature;
use pvcell::statistics::{
    cv_bandwidth, default_candidates, default_grid, face_pmf, kde_epanechnikov, moments, EmpiricalDistribution,
    DEFAULT_CANDIDATES, DEFAULT_GRID_POINTS,
};

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(100_000, |s| s.parse().expect("n_cells"));
    let seed: u64 = args.next().map_or(42, |s| s.parse().expect("seed"));

    let t = Instant::now();
    let sample = simulate_batch(&SimulationConfig::new(1.0, n, seed)).expect("simulation");
    println!("simulated {n} cells in {:.1?}", t.elapsed());

    for feature in Feature::ALL {
        let m = moments(&sample.column(feature)).unwrap();
        println!(
            "{feature:>8}: mu1 {:.5} sigma {:.5} mu2 {:.5} mu3 {:.5} mu4 {:.5}",
            m.mu1, m.sigma, m.mu2, m.mu3, m.mu4
        );
    }
    let pmf = face_pmf(&sample.face_counts);
    println!("faces: mode {:?}, p(14) {:.6}, p(15) {:.6}", pmf.mode(), pmf.probability(14), pmf.probability(15));

    for (feature, h) in [(Feature::Volume, 0.05), (Feature::Surface, 0.25)] {
        let xs = sample.column(feature);
        let t = Instant::now();
        let gg = fit_gengamma(&xs).unwrap();
        let ga = fit_gamma(&xs).unwrap();
        let ln = fit_lognormal(&xs).unwrap();
        println!("{feature} fits in {:.1?}", t.elapsed());
        let p = gg.params;
        println!(
            "  gengamma a {:.4} b {:.4} k {:.4} se {:?} flags {:?}",
            p.a, p.b, p.k, p.std_errors, gg.flags
        );
        println!("  gamma a {:.4} k {:.4}; lognormal mu {:.4} sigma {:.4}", ga.params.a, ga.params.k, ln.params.mu, ln.params.sigma);

        let t = Instant::now();
        let cv = cv_bandwidth(&xs, &default_candidates(&xs, DEFAULT_CANDIDATES)).unwrap();
        println!("  cv bandwidth {:.4} ({:?}) in {:.1?}", cv.bandwidth, cv.flag, t.elapsed());

        let t = Instant::now();
        let emp = EmpiricalDistribution::from_slice(&xs).unwrap();
        let kde = kde_epanechnikov(&xs, h, &default_grid(&xs, h, DEFAULT_GRID_POINTS)).unwrap();
        let mode = kde.grid[kde.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
        let models = [Model::from(ga.params), Model::from(p), Model::from(ln.params)];
        let cmp = compare_families(&emp, &kde, &models);
        println!("  kde mode {mode:.3}; distances in {:.1?}", t.elapsed());
        for r in &cmp.rows {
            println!("  {:>10}: sup {:.4} tv {:.4}", r.family, r.sup_distance, r.tv_distance);
        }
    }
}
