use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use serde_json::json;

use pvcell::distances::compare_families;
use pvcell::fitting::{self, Family, FitError, FitReport, Model};
use pvcell::io::{self as pio, DataFormat, Header, IoError};
use pvcell::sampling::{simulate_batch, FeatureSample, SamplingError, SimulationConfig};
use pvcell::scaling::{scale_feature_sample, scale_params, Feature, ScalingError};
use pvcell::statistics::{default_grid, face_pmf, kde_epanechnikov, moments, EmpiricalDistribution};

use crate::{ExportArgs, FamilyArg, FeatureArg, FitArgs, Format, ScaleArgs, SimulateArgs, What};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Unit-intensity KDE bandwidths used for the distance comparison.
const VOLUME_BANDWIDTH: f64 = 0.05;
const SURFACE_BANDWIDTH: f64 = 0.25;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Result<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: anyhow!(msg.into()),
    }
}

fn data(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_DATA,
        error: error.into(),
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        data(e)
    }
}

impl From<SamplingError> for Failure {
    fn from(e: SamplingError) -> Self {
        let code = match e {
            SamplingError::InvalidIntensity(_) | SamplingError::InvalidConfig(_) => EXIT_USAGE,
            SamplingError::InvalidSample(_) => EXIT_DATA,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, error: e.into() }
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        let code = match e {
            FitError::NoConvergence { .. } | FitError::InvalidParams(_) => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        };
        Failure { code, error: e.into() }
    }
}

impl From<ScalingError> for Failure {
    fn from(e: ScalingError) -> Self {
        usage(e.to_string())
    }
}

fn feature(f: FeatureArg) -> Feature {
    match f {
        FeatureArg::Volume => Feature::Volume,
        FeatureArg::Surface => Feature::Surface,
        FeatureArg::Faces => Feature::Faces,
    }
}

fn families(f: FamilyArg) -> Vec<Family> {
    match f {
        FamilyArg::Gamma => vec![Family::Gamma],
        FamilyArg::Gengamma => vec![Family::GenGamma],
        FamilyArg::Lognormal => vec![Family::Lognormal],
        FamilyArg::All => Family::ALL.to_vec(),
    }
}

fn continuous(f: FeatureArg, what: &str) -> Result<Feature> {
    match feature(f) {
        Feature::Faces => Err(usage(format!("{what} needs --feature volume or surface"))),
        other => Ok(other),
    }
}

fn data_format(explicit: Option<Format>, path: Option<&Path>) -> DataFormat {
    match explicit {
        Some(Format::Csv) => DataFormat::Csv,
        Some(Format::Json) => DataFormat::Json,
        None if path.and_then(|p| p.extension()).is_some_and(|e| e == "json") => DataFormat::Json,
        None => DataFormat::Csv,
    }
}

fn create(path: &Path) -> Result<File> {
    File::create(path)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(data)
}

/// Opens `path`, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path) -> Result<FeatureSample> {
    pio::load_dataset(path)
        .with_context(|| format!("cannot read dataset {}", path.display()))
        .map_err(data)
}

/// Loads a dataset and, if asked, moves it to another intensity.
fn load_at(path: &Path, lambda: Option<f64>) -> Result<FeatureSample> {
    let sample = load(path)?;
    match lambda {
        Some(l) => Ok(scale_feature_sample(&sample, l)?),
        None => Ok(sample),
    }
}

fn default_bandwidth(feature: Feature, lambda: f64) -> f64 {
    let h = match feature {
        Feature::Surface => SURFACE_BANDWIDTH,
        _ => VOLUME_BANDWIDTH,
    };
    h / feature.factor(lambda)
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(data)?;
    writeln!(w).map_err(data)?;
    w.flush().map_err(data)
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    if args.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_NUMERICAL,
                error: e.into(),
            })?;
    }
    let cfg = SimulationConfig::new(args.lambda, args.n, args.seed);
    let started = Instant::now();
    let sample = simulate_batch(&cfg)?;
    let format = data_format(args.format, Some(&args.out));
    pio::write_dataset(&sample, format, create(&args.out)?)?;
    eprintln!(
        "wrote {} cells to {} in {:.1?}",
        sample.n(),
        args.out.display(),
        started.elapsed()
    );

    println!("{:<8} {:>14} {:>14} {:>14} {:>14} {:>14}", "feature", "mu1", "sigma", "mu2", "mu3", "mu4");
    for f in Feature::ALL {
        match moments(&sample.column(f)) {
            Ok(m) => println!(
                "{:<8} {:>14.5} {:>14.5} {:>14.5} {:>14.5} {:>14.5}",
                f.to_string(),
                m.mu1,
                m.sigma,
                m.mu2,
                m.mu3,
                m.mu4
            ),
            Err(_) => println!("{:<8} {:>14.5} {:>14} (need 2 cells for moments)", f.to_string(), sample.column(f)[0], "-"),
        }
    }
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<()> {
    let f = continuous(args.feature, "fit")?;
    let sample = load_at(&args.input, args.lambda)?;
    let xs = sample.column(f);
    let mut reports: Vec<FitReport> = Vec::new();
    for family in families(args.family) {
        let report = fitting::fit(family, &xs).map_err(|e| {
            let mut failure = Failure::from(e);
            failure.error = failure.error.context(format!("{family} fit of {f}"));
            failure
        })?;
        for flag in &report.flags {
            eprintln!("warning: {family} fit flagged {flag:?}");
        }
        reports.push(report);
    }

    if args.family != FamilyArg::All {
        return write_json(args.out.as_deref(), &reports[0]);
    }
    let h = args.bandwidth.unwrap_or_else(|| default_bandwidth(f, sample.lambda));
    if !(h > 0.0 && h.is_finite()) {
        return Err(usage("--bandwidth must be positive"));
    }
    let models = reports
        .iter()
        .map(FitReport::model)
        .collect::<std::result::Result<Vec<Model>, _>>()?;
    let emp = EmpiricalDistribution::from_slice(&xs).map_err(data)?;
    let kde = kde_epanechnikov(&xs, h, &default_grid(&xs, h, pvcell::statistics::DEFAULT_GRID_POINTS)).map_err(data)?;
    let comparison = compare_families(&emp, &kde, &models);
    if let Some(path) = &args.table {
        pio::write_comparison_csv(&comparison, Some(&Header::of(&sample)), create(path)?)?;
    }
    write_json(
        args.out.as_deref(),
        &json!({
            "feature": f,
            "lambda": sample.lambda,
            "fits": reports,
            "comparison": comparison,
        }),
    )
}

pub fn scale(args: ScaleArgs) -> Result<()> {
    let text = fs::read(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))
        .map_err(data)?;
    let report = serde_json::from_slice::<FitReport>(&text).ok();
    match report {
        Some(report) => {
            let f = feature(args.feature.ok_or_else(|| usage("scaling a fit report needs --feature"))?);
            if !(args.from_lambda > 0.0 && args.from_lambda.is_finite()) {
                return Err(usage("--from-lambda must be positive"));
            }
            let ratio = args.lambda / args.from_lambda;
            let scaled = scale_params(&report.model()?, f, ratio)?;
            let (params, std_errors) = scaled.named_params();
            // every log-density shifts by ln of the scale factor
            let loglik = report.loglik + report.n as f64 * f.factor(ratio).ln();
            write_json(
                args.out.as_deref(),
                &FitReport {
                    params,
                    std_errors,
                    loglik,
                    ..report
                },
            )
        }
        None => {
            let sample = pio::read_dataset(&text[..])?;
            let scaled = scale_feature_sample(&sample, args.lambda)?;
            let format = data_format(args.format, args.out.as_deref());
            pio::write_dataset(&scaled, format, sink(args.out.as_deref())?)?;
            Ok(())
        }
    }
}

pub fn export(args: ExportArgs) -> Result<()> {
    let sample = load_at(&args.input, args.lambda)?;
    let header = Header::of(&sample);
    let out = sink(args.out.as_deref())?;
    match args.what {
        What::Kde => {
            let f = continuous(args.feature, "kde export")?;
            let xs = sample.column(f);
            let h = args.bandwidth.unwrap_or_else(|| default_bandwidth(f, sample.lambda));
            if !(h > 0.0 && h.is_finite()) {
                return Err(usage("--bandwidth must be positive"));
            }
            if args.grid_points < 2 {
                return Err(usage("--grid-points must be at least 2"));
            }
            let est = kde_epanechnikov(&xs, h, &default_grid(&xs, h, args.grid_points)).map_err(data)?;
            pio::write_density_csv(&est, Some(&header), out)?;
        }
        What::Ecdf => {
            let emp = EmpiricalDistribution::new(sample.column(feature(args.feature))).map_err(data)?;
            pio::write_ecdf_csv(&emp, Some(&header), out)?;
        }
        What::Pmf => {
            if args.feature != FeatureArg::Faces {
                return Err(usage("pmf export needs --feature faces"));
            }
            pio::write_pmf_csv(&face_pmf(&sample.face_counts), Some(&header), out)?;
        }
        What::Qq => {
            let f = continuous(args.feature, "qq export")?;
            let family = match args.family {
                FamilyArg::All => return Err(usage("qq export needs a single --family")),
                other => families(other)[0],
            };
            let xs = sample.column(f);
            let model = fitting::fit(family, &xs)?.model()?;
            let emp = EmpiricalDistribution::new(xs).map_err(data)?;
            pio::write_qq_csv(&pio::qq_points(&emp, &model), Some(&header), out)?;
        }
    }
    Ok(())
}
