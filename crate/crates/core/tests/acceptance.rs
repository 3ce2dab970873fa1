//! Acceptance checks against reference values.
//!
//! Runs as a plain binary (`harness = false`) so every criterion prints its
//! PASS/FAIL line whether or not it succeeds. The large λ = 1 batch is
//! simulated once and shared.

use std::process::ExitCode;
use std::time::Instant;

use glam::DVec3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pvcell::distances::{compare_families, ks_critical_value, ks_two_sample, sup_distance, tv_distance_model};
use pvcell::fitting::{fit_gamma, fit_gengamma, fit_lognormal, Family, Model};
use pvcell::geometry::{initial_cell, ConvexPolytope, HalfSpace};
use pvcell::sampling::{
    build_typical_cell, cell_rng, simulate_batch, simulate_batch_serial, typical_cell_length_1d, CellOptions,
    FeatureSample, SimulationConfig,
};
use pvcell::scaling::{scale_sample, Feature};
use pvcell::statistics::{
    default_grid, face_pmf, kde_epanechnikov, linear_grid, moments, EmpiricalDistribution, DEFAULT_GRID_POINTS,
};

const SEED: u64 = 42;
const N_LARGE: usize = 1_000_000;
const N_MOMENTS: usize = 100_000;

/// Face-count frequencies of 10⁶ reference cells, F = 4..=36.
const REFERENCE_FACE_COUNTS: [u64; 33] = [
    5, 35, 316, 1822, 6190, 15051, 30685, 52528, 77421, 100094, 114163, 120015, 115188, 101151, 82277, 62408,
    44944, 30477, 19466, 11682, 6756, 3631, 1890, 975, 435, 224, 95, 52, 18, 3, 1, 1, 1,
];

/// Reference (sup, TV) distances for Gamma, generalized Gamma and lognormal fits.
const VOLUME_DISTANCES: [(Family, f64, f64); 3] = [
    (Family::Gamma, 0.013, 0.018),
    (Family::GenGamma, 0.005, 0.005),
    (Family::Lognormal, 0.041, 0.089),
];
const SURFACE_DISTANCES: [(Family, f64, f64); 3] = [
    (Family::Gamma, 0.020, 0.035),
    (Family::GenGamma, 0.002, 0.003),
    (Family::Lognormal, 0.037, 0.082),
];

struct Outcome {
    passed: bool,
    detail: String,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISS"
    }
}

fn volume_moments(sample: &FeatureSample) -> Outcome {
    let m = moments(&sample.volumes).unwrap();
    let (a, b) = (within(m.mu1, 1.000, 0.004), within(m.sigma, 0.412, 0.004));
    Outcome {
        passed: a && b,
        detail: format!(
            "n={} mean {:.5} (1.000±0.004 {}) sigma {:.5} (0.412±0.004 {})",
            sample.n(),
            m.mu1,
            mark(a),
            m.sigma,
            mark(b)
        ),
    }
}

fn surface_moments(sample: &FeatureSample) -> Outcome {
    let m = moments(&sample.surface_areas).unwrap();
    let (a, b) = (within(m.mu1, 5.827, 0.015), within(m.sigma, 1.438, 0.01));
    Outcome {
        passed: a && b,
        detail: format!(
            "n={} mean {:.5} (5.827±0.015 {}) sigma {:.5} (1.438±0.01 {})",
            sample.n(),
            m.mu1,
            mark(a),
            m.sigma,
            mark(b)
        ),
    }
}

fn face_distribution(sample: &FeatureSample) -> Outcome {
    let pmf = face_pmf(&sample.face_counts);
    let total: u64 = REFERENCE_FACE_COUNTS.iter().sum();
    let reference: Vec<(u32, f64)> = REFERENCE_FACE_COUNTS
        .iter()
        .enumerate()
        .map(|(i, &c)| (4 + i as u32, c as f64 / total as f64))
        .collect();
    let tv = pmf.total_variation(&reference);
    let mode = pmf.mode();
    Outcome {
        passed: tv < 0.01 && mode == Some(15),
        detail: format!("n={} TV {:.5} (<0.01) mode {:?} (15) p(15) {:.6}", sample.n(), tv, mode, pmf.probability(15)),
    }
}

fn gengamma_volume_fit(sample: &FeatureSample) -> Outcome {
    let fit = fit_gengamma(&sample.volumes).unwrap();
    let p = fit.params;
    let se = p.std_errors.unwrap_or([f64::NAN; 3]);
    let oks = [within(p.a, 0.380, 0.02), within(p.b, 1.287, 0.02), within(p.k, 3.583, 0.02)];
    Outcome {
        passed: oks.iter().all(|&o| o),
        detail: format!(
            "n={} a {:.4} ({}) b {:.4} ({}) k {:.4} ({}) vs (0.380,1.287,3.583)±0.02; se ({:.4},{:.4},{:.4}) flags {:?}",
            sample.n(),
            p.a,
            mark(oks[0]),
            p.b,
            mark(oks[1]),
            p.k,
            mark(oks[2]),
            se[0],
            se[1],
            se[2],
            fit.flags
        ),
    }
}

fn distance_tables(sample: &FeatureSample) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (feature, h, table) in [
        (Feature::Volume, 0.05, VOLUME_DISTANCES),
        (Feature::Surface, 0.25, SURFACE_DISTANCES),
    ] {
        let xs = sample.column(feature);
        let models = [
            Model::from(fit_gamma(&xs).unwrap().params),
            Model::from(fit_gengamma(&xs).unwrap().params),
            Model::from(fit_lognormal(&xs).unwrap().params),
        ];
        let emp = EmpiricalDistribution::from_slice(&xs).unwrap();
        let kde = kde_epanechnikov(&xs, h, &default_grid(&xs, h, DEFAULT_GRID_POINTS)).unwrap();
        let cmp = compare_families(&emp, &kde, &models);

        let by_sup = {
            let mut rows = cmp.rows.clone();
            rows.sort_by(|a, b| a.sup_distance.total_cmp(&b.sup_distance));
            rows.iter().map(|r| r.family).collect::<Vec<_>>()
        };
        let expected = vec![Family::GenGamma, Family::Gamma, Family::Lognormal];
        let order_ok = cmp.ranking() == expected && by_sup == expected;
        passed &= order_ok;
        parts.push(format!("{feature}: order {}", mark(order_ok)));
        for (family, sup_ref, tv_ref) in table {
            let row = cmp.row(family).unwrap();
            let (s_ok, t_ok) = (within(row.sup_distance, sup_ref, 0.005), within(row.tv_distance, tv_ref, 0.01));
            passed &= s_ok && t_ok;
            parts.push(format!(
                "{family} sup {:.4}/{sup_ref} {} tv {:.4}/{tv_ref} {}",
                row.sup_distance,
                mark(s_ok),
                row.tv_distance,
                mark(t_ok)
            ));
        }

        // quadrature check: halving the grid spacing barely moves TV
        let gg = models[1];
        let grid = &kde.grid;
        let fine = linear_grid(grid[0], grid[grid.len() - 1], 2 * grid.len() - 1);
        let kde_fine = kde_epanechnikov(&xs, h, &fine).unwrap();
        let shift = (tv_distance_model(&kde_fine, &gg) - tv_distance_model(&kde, &gg)).abs();
        parts.push(format!("tv grid halving shift {shift:.1e}"));
    }
    Outcome {
        passed,
        detail: parts.join("; "),
    }
}

fn one_dimensional_oracle() -> Outcome {
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let ys: Vec<f64> = (0..n).map(|_| typical_cell_length_1d(1.0, &mut rng)).collect();
    let emp = EmpiricalDistribution::new(ys).unwrap();
    let d = sup_distance(&emp, |y| if y <= 0.0 { 0.0 } else { 1.0 - (1.0 + 2.0 * y) * (-2.0 * y).exp() });
    Outcome {
        passed: d < 0.002,
        detail: format!("n={n} sup distance {d:.5} (<0.002)"),
    }
}

fn scaling_lemmas() -> Outcome {
    let n = 10_000;
    let lambda = 8.0;
    let base = simulate_batch(&SimulationConfig::new(1.0, n, SEED + 1)).unwrap();
    let fresh = simulate_batch(&SimulationConfig::new(lambda, n, SEED + 2)).unwrap();
    let crit = ks_critical_value(n, n, 0.01);
    let mut passed = true;
    let mut parts = Vec::new();
    for feature in [Feature::Volume, Feature::Surface] {
        let scaled = scale_sample(&base.column(feature), feature, lambda).unwrap();
        let d = ks_two_sample(
            &EmpiricalDistribution::new(scaled).unwrap(),
            &EmpiricalDistribution::new(fresh.column(feature)).unwrap(),
        );
        passed &= d < crit;
        parts.push(format!("{feature} KS {d:.4}"));
    }
    let tv = face_pmf(&base.face_counts).total_variation(&face_pmf(&fresh.face_counts).as_pairs());
    passed &= tv < 0.02;
    Outcome {
        passed,
        detail: format!("λ={lambda} n={n}: {} (critical {crit:.4}); faces TV {tv:.4} (<0.02)", parts.join(", ")),
    }
}

fn random_halfspace(rng: &mut ChaCha8Rng, max_offset: f64) -> HalfSpace {
    loop {
        let n = DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if n.length_squared() > 1e-2 {
            return HalfSpace::new(n, rng.random_range(0.05..max_offset)).unwrap();
        }
    }
}

fn geometry_suite() -> Outcome {
    let cells = 10_000;
    let opts = CellOptions::default();
    let mut euler_ok = 0;
    for i in 0..cells {
        let build = build_typical_cell(1.0, &mut cell_rng(SEED, i as u64), &opts).unwrap();
        if build.cell.euler_characteristic() == 2 && build.cell.validate().is_ok() {
            euler_ok += 1;
        }
    }

    let sets = 1_000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_order, mut worst_split): (f64, f64) = (0.0, 0.0);
    let mut topology_ok = true;
    for _ in 0..sets {
        let count = rng.random_range(4..20);
        let planes: Vec<HalfSpace> = (0..count).map(|_| random_halfspace(&mut rng, 1.5)).collect();
        let mut shuffled = planes.clone();
        shuffled.shuffle(&mut rng);
        let build = |hs: &[HalfSpace]| -> ConvexPolytope {
            let mut cell = initial_cell(1.0).unwrap();
            for h in hs {
                cell.clip_in_place(h).unwrap();
            }
            cell
        };
        let (a, b) = (build(&planes), build(&shuffled));
        let (ma, mb) = (a.measure(), b.measure());
        worst_order = worst_order
            .max((ma.volume - mb.volume).abs() / ma.volume)
            .max((ma.surface_area - mb.surface_area).abs() / ma.surface_area);
        topology_ok &= ma.faces == mb.faces && ma.vertices == mb.vertices;

        let cut = random_halfspace(&mut rng, 1.0);
        let cut = HalfSpace {
            offset: cut.offset * rng.random_range(-1.0..1.0),
            ..cut
        };
        let (inside, outside) = a.split(&cut);
        let vol = |p: Option<ConvexPolytope>| p.map_or(0.0, |c| c.measure().volume);
        worst_split = worst_split.max((vol(inside) + vol(outside) - ma.volume).abs() / ma.volume);
    }
    Outcome {
        passed: euler_ok == cells && worst_order < 1e-9 && worst_split < 1e-9 && topology_ok,
        detail: format!(
            "Euler+validity {euler_ok}/{cells}; {sets} half-space sets: order rel err {worst_order:.1e}, split rel err {worst_split:.1e}, topology {}",
            mark(topology_ok)
        ),
    }
}

fn security_radius() -> Outcome {
    let cells = 1_000;
    let mut worst: f64 = 0.0;
    let mut faces_ok = true;
    for i in 0..cells {
        let build = build_typical_cell(1.0, &mut cell_rng(SEED, i), &CellOptions::default()).unwrap();
        let opts = CellOptions {
            min_search_radius: 2.0 * build.search_radius,
            exhaustive: true,
            ..CellOptions::default()
        };
        let wide = build_typical_cell(1.0, &mut cell_rng(SEED, i), &opts).unwrap();
        let (a, b) = (build.cell.measure(), wide.cell.measure());
        worst = worst
            .max((a.volume - b.volume).abs() / a.volume)
            .max((a.surface_area - b.surface_area).abs() / a.surface_area);
        faces_ok &= a.faces == b.faces;
    }
    Outcome {
        passed: worst <= 1e-9 && faces_ok,
        detail: format!("{cells} cells rebuilt at twice the radius: worst rel change {worst:.1e}, faces {}", mark(faces_ok)),
    }
}

fn determinism() -> Outcome {
    let cfg = SimulationConfig::new(1.0, 20_000, SEED);
    let serial = simulate_batch_serial(&cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let parallel = pool.install(|| simulate_batch(&cfg)).unwrap();
    let bits = |s: &FeatureSample| -> Vec<u64> {
        s.volumes.iter().chain(&s.surface_areas).map(|x| x.to_bits()).collect()
    };
    let same = bits(&serial) == bits(&parallel)
        && serial.face_counts == parallel.face_counts
        && serial.vertex_counts == parallel.vertex_counts;
    Outcome {
        passed: same,
        detail: format!("n={} serial vs 4-thread pool bit-identical: {same}", cfg.n_cells),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let t = Instant::now();
    let large = simulate_batch(&SimulationConfig::new(1.0, N_LARGE, SEED)).unwrap();
    let sim_time = t.elapsed();
    let small = large.head(N_MOMENTS);
    println!("simulated {N_LARGE} cells at λ=1 in {sim_time:.1?}");

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("volume moments", Box::new(|| volume_moments(&small))),
        ("surface moments", Box::new(|| surface_moments(&small))),
        ("face distribution", Box::new(|| face_distribution(&small))),
        ("generalized gamma volume fit", Box::new(|| gengamma_volume_fit(&large))),
        ("distance tables", Box::new(|| distance_tables(&large))),
        ("1D oracle", Box::new(one_dimensional_oracle)),
        ("scaling lemmas", Box::new(scaling_lemmas)),
        ("geometry properties", Box::new(geometry_suite)),
        ("security radius", Box::new(security_radius)),
        ("determinism", Box::new(determinism)),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = check();
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<30} {} [{:.1?}] {}",
            i + 1,
            name,
            if outcome.passed { "PASS" } else { "FAIL" },
            t.elapsed(),
            outcome.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1?}",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
