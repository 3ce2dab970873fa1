//! Dataset files and plot-ready CSV exports.
//!
//! A CSV dataset starts with one comment line holding a JSON provenance
//! header, followed by a regular table:
//!
//! ```text
//! # {"lambda":1.0,"seed":42,"n":2,"version":"0.1.0"}
//! cell_id,volume,surface_area,faces,vertices
//! 0,9.8405549811591537e-1,5.7948764744504377e0,15,26
//! ```
//!
//! Floats are written with 17 significant digits so that they read back bit-identically.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distances::Comparison;
use crate::fitting::Model;
use crate::sampling::{FeatureSample, SamplingError};
use crate::statistics::{DensityEstimate, EmpiricalDistribution, FacePmf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Sample(#[from] SamplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Json,
}

impl std::str::FromStr for DataFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "json" => Ok(DataFormat::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Provenance carried by every dataset and export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub lambda: f64,
    pub seed: u64,
    pub n: usize,
    #[serde(alias = "software_version")]
    pub version: String,
}

impl Header {
    pub fn of(sample: &FeatureSample) -> Self {
        Self {
            lambda: sample.lambda,
            seed: sample.seed,
            n: sample.n(),
            version: VERSION.to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!("# {}", serde_json::to_string(self).expect("header serializes"))
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    lambda: f64,
    seed: u64,
    n: usize,
    #[serde(alias = "version")]
    software_version: String,
    volumes: Vec<f64>,
    surface_areas: Vec<f64>,
    face_counts: Vec<u32>,
    vertex_counts: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    cell_id: usize,
    volume: f64,
    surface_area: f64,
    faces: u32,
    vertices: u32,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_dataset<W: Write>(sample: &FeatureSample, format: DataFormat, out: W) -> Result<(), IoError> {
    let mut out = BufWriter::new(out);
    match format {
        DataFormat::Csv => {
            writeln!(out, "{}", Header::of(sample).comment_line())?;
            writeln!(out, "cell_id,volume,surface_area,faces,vertices")?;
            for i in 0..sample.n() {
                writeln!(
                    out,
                    "{i},{},{},{},{}",
                    fmt_f64(sample.volumes[i]),
                    fmt_f64(sample.surface_areas[i]),
                    sample.face_counts[i],
                    sample.vertex_counts[i]
                )?;
            }
        }
        DataFormat::Json => {
            let doc = JsonDataset {
                lambda: sample.lambda,
                seed: sample.seed,
                n: sample.n(),
                software_version: VERSION.to_string(),
                volumes: sample.volumes.clone(),
                surface_areas: sample.surface_areas.clone(),
                face_counts: sample.face_counts.clone(),
                vertex_counts: sample.vertex_counts.clone(),
            };
            serde_json::to_writer(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads either dataset format, detected from the first non-blank byte.
pub fn read_dataset<R: Read>(input: R) -> Result<FeatureSample, IoError> {
    let mut reader = BufReader::new(input);
    let first = loop {
        let buf = reader.fill_buf()?;
        match buf.iter().position(|b| !b.is_ascii_whitespace()) {
            Some(i) => break Some(buf[i]),
            None if buf.is_empty() => break None,
            None => {
                let len = buf.len();
                reader.consume(len);
            }
        }
    };
    match first {
        None => Err(IoError::Format("dataset is empty".into())),
        Some(b'{') => read_json_dataset(reader),
        Some(b'#') => read_csv_dataset(reader),
        Some(_) => Err(IoError::Format("dataset must start with a '#' header line or a JSON object".into())),
    }
}

fn read_json_dataset<R: BufRead>(reader: R) -> Result<FeatureSample, IoError> {
    let doc: JsonDataset = serde_json::from_reader(reader)?;
    let sample = FeatureSample::new(
        doc.lambda,
        doc.seed,
        doc.volumes,
        doc.surface_areas,
        doc.face_counts,
        doc.vertex_counts,
    )?;
    if sample.n() != doc.n {
        return Err(IoError::Format(format!("header says n = {} but {} cells follow", doc.n, sample.n())));
    }
    Ok(sample)
}

fn read_csv_dataset<R: BufRead>(mut reader: R) -> Result<FeatureSample, IoError> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let json = line.trim().trim_start_matches('#').trim();
    let header: Header = serde_json::from_str(json).map_err(|e| IoError::Format(format!("bad header line: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let mut sample = FeatureSample {
        lambda: header.lambda,
        seed: header.seed,
        volumes: Vec::with_capacity(header.n),
        surface_areas: Vec::with_capacity(header.n),
        face_counts: Vec::with_capacity(header.n),
        vertex_counts: Vec::with_capacity(header.n),
    };
    for (i, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        if row.cell_id != i {
            return Err(IoError::Format(format!("row {i} has cell_id {}", row.cell_id)));
        }
        sample.volumes.push(row.volume);
        sample.surface_areas.push(row.surface_area);
        sample.face_counts.push(row.faces);
        sample.vertex_counts.push(row.vertices);
    }
    if sample.n() != header.n {
        return Err(IoError::Format(format!("header says n = {} but {} rows follow", header.n, sample.n())));
    }
    sample.validate()?;
    Ok(sample)
}

pub fn save_dataset(sample: &FeatureSample, format: DataFormat, path: &Path) -> Result<(), IoError> {
    write_dataset(sample, format, File::create(path)?)
}

pub fn load_dataset(path: &Path) -> Result<FeatureSample, IoError> {
    read_dataset(File::open(path)?)
}

fn start<W: Write>(out: W, header: Option<&Header>, columns: &str) -> Result<BufWriter<W>, IoError> {
    let mut out = BufWriter::new(out);
    if let Some(h) = header {
        writeln!(out, "{}", h.comment_line())?;
    }
    writeln!(out, "{columns}")?;
    Ok(out)
}

pub fn write_density_csv<W: Write>(est: &DensityEstimate, header: Option<&Header>, out: W) -> Result<(), IoError> {
    let mut out = start(out, header, "x,density")?;
    for (x, d) in est.grid.iter().zip(&est.density) {
        writeln!(out, "{},{}", fmt_f64(*x), fmt_f64(*d))?;
    }
    out.flush()?;
    Ok(())
}

/// One row per jump of the step function: the value and `F_n` at it.
pub fn write_ecdf_csv<W: Write>(emp: &EmpiricalDistribution, header: Option<&Header>, out: W) -> Result<(), IoError> {
    let mut out = start(out, header, "x,ecdf")?;
    for (x, f) in emp.steps() {
        writeln!(out, "{},{}", fmt_f64(x), fmt_f64(f))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_pmf_csv<W: Write>(pmf: &FacePmf, header: Option<&Header>, out: W) -> Result<(), IoError> {
    let mut out = start(out, header, "F,n_f,p_f")?;
    for (f, n, p) in pmf.rows() {
        writeln!(out, "{f},{n},{p:.6}")?;
    }
    out.flush()?;
    Ok(())
}

/// Empirical against fitted quantiles at the plotting positions `i / (n + 1)`.
pub fn qq_points(emp: &EmpiricalDistribution, model: &Model) -> Vec<(f64, f64)> {
    emp.plotting_positions()
        .into_iter()
        .map(|(p, x)| (x, model.quantile(p)))
        .collect()
}

pub fn write_qq_csv<W: Write>(points: &[(f64, f64)], header: Option<&Header>, out: W) -> Result<(), IoError> {
    let mut out = start(out, header, "empirical,fitted")?;
    for (e, f) in points {
        writeln!(out, "{},{}", fmt_f64(*e), fmt_f64(*f))?;
    }
    out.flush()?;
    Ok(())
}

/// Metrics as rows and families as columns, best family first.
pub fn write_comparison_csv<W: Write>(cmp: &Comparison, header: Option<&Header>, out: W) -> Result<(), IoError> {
    let names: Vec<String> = cmp.rows.iter().map(|r| r.family.to_string()).collect();
    let mut out = start(out, header, &format!("metric,{}", names.join(",")))?;
    let line = |vals: Vec<f64>| vals.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",");
    writeln!(out, "sup_distance,{}", line(cmp.rows.iter().map(|r| r.sup_distance).collect()))?;
    writeln!(out, "tv_distance,{}", line(cmp.rows.iter().map(|r| r.tv_distance).collect()))?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statistics::face_pmf;
    use proptest::prelude::*;

    fn sample() -> FeatureSample {
        FeatureSample::new(
            1.0,
            42,
            vec![0.984_055_498_115_915_4, 1.0 / 3.0, 2.5e-3],
            vec![5.794_876_474_450_438, std::f64::consts::PI, 0.1],
            vec![15, 4, 12],
            vec![26, 4, 20],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_dataset(&s, DataFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# {\"lambda\":1.0,\"seed\":42,\"n\":3,\"version\":"));
        assert_eq!(text.lines().nth(1), Some("cell_id,volume,surface_area,faces,vertices"));
        assert_eq!(read_dataset(&buf[..]).unwrap(), s);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_dataset(&s, DataFormat::Json, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\"software_version\""));
        assert_eq!(read_dataset(&buf[..]).unwrap(), s);
    }

    #[test]
    fn either_version_key_is_accepted() {
        let text = "# {\"lambda\":2.0,\"seed\":1,\"n\":1,\"software_version\":\"x\"}\ncell_id,volume,surface_area,faces,vertices\n0,0.5,3.0,14,24\n";
        let s = read_dataset(text.as_bytes()).unwrap();
        assert_eq!((s.lambda, s.n()), (2.0, 1));
    }

    #[test]
    fn bad_datasets_are_rejected() {
        let head = "# {\"lambda\":1.0,\"seed\":1,\"n\":2,\"version\":\"x\"}\ncell_id,volume,surface_area,faces,vertices\n";
        assert!(read_dataset("".as_bytes()).is_err());
        assert!(read_dataset("cell_id,volume\n".as_bytes()).is_err());
        assert!(read_dataset(format!("{head}0,0.5,3.0,14,24\n").as_bytes()).is_err());
        assert!(read_dataset(format!("{head}0,0.5,3.0,14,24\n1,abc,3.0,14,24\n").as_bytes()).is_err());
        assert!(read_dataset(format!("{head}0,0.5,3.0,14,24\n1,-0.5,3.0,14,24\n").as_bytes()).is_err());
    }

    #[test]
    fn exports_have_expected_layout() {
        let pmf = face_pmf(&[14, 15, 15, 16]);
        let mut buf = Vec::new();
        write_pmf_csv(&pmf, None, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "F,n_f,p_f\n14,1,0.250000\n15,2,0.500000\n16,1,0.250000\n");

        let emp = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_ecdf_csv(&emp, Some(&Header::of(&sample())), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1) == Some("x,ecdf"));
    }

    proptest! {
        #[test]
        fn float_format_round_trips(x in proptest::num::f64::POSITIVE | proptest::num::f64::NORMAL) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
