//! File formats.
//!
//! Every CSV file starts with one `# {...}` line holding the run manifest as
//! compact JSON, followed by a header row and the body. Floats are written
//! with 17 significant digits (`{:.16e}`) so they round-trip bit for bit.
//! Summaries are pretty-printed JSON objects with the manifest under
//! `"manifest"` and SHA-256 digests of the CSV files under `"outputs"`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::maps::IntMat2;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ARNOLD_GAS_OUT";

pub const TREE_COLUMNS: [&str; 6] = ["stage", "n1", "n2", "dx", "dp", "abs_d"];
pub const TRAJECTORY_COLUMNS: [&str; 7] = [
    "t",
    "affected",
    "norm",
    "max_disp",
    "median_disp",
    "twin_distance",
    "twin_discrepancy",
];
pub const SPECTRUM_COLUMNS: [&str; 7] = [
    "t",
    "m1",
    "m2",
    "re_nk",
    "im_nk",
    "abs_delta_twin",
    "abs_delta_linear",
];
pub const STATES_COLUMNS: [&str; 11] = [
    "t", "i", "x", "p", "dx", "dp", "affected", "n1", "n2", "twin_x", "twin_p",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub generator: Option<String>,
    pub seed: Option<u64>,
    pub model: IntMat2,
    pub parameters: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, model: IntMat2, parameters: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            version: TOOL_VERSION.to_string(),
            generator: seed.map(|_| crate::gas::GENERATOR.to_string()),
            seed,
            model,
            parameters,
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes manifest line, header and rows; returns the file's SHA-256.
pub fn write_csv<I>(path: &Path, manifest: &RunManifest, header: &[&str], rows: I) -> Result<String>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# {}", serde_json::to_string(manifest)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    drop(w);
    sha256_file(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Summary wrapper written next to the CSV outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary<T> {
    pub manifest: RunManifest,
    pub outputs: BTreeMap<String, String>,
    pub results: T,
}

/// Reads a CSV written by [`write_csv`]: the manifest and the data records.
pub fn read_csv(path: &Path) -> Result<(RunManifest, Vec<csv::StringRecord>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::InvalidInput(format!("{} has no manifest line", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(json.trim_end())?;
    let mut csv_reader = csv::Reader::from_reader(reader);
    let records = csv_reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((manifest, records))
}

/// `--out` if given, else `$ARNOLD_GAS_OUT`, else `./out`.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn float_format_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: f64 = fmt_f64(v).parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let manifest = RunManifest::new("test", Some(3), IntMat2::CAT, serde_json::json!({"a": 1}));
        let rows = vec![vec!["1".to_string(), fmt_f64(0.1)], vec!["2".to_string(), fmt_opt(None)]];
        let digest = write_csv(&path, &manifest, &["k", "v"], rows).unwrap();
        assert_eq!(digest.len(), 64);
        let (m, recs) = read_csv(&path).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0][1].parse::<f64>().unwrap(), 0.1);
        assert_eq!(&recs[1][1], "");
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# {\"command\":\"test\""));
        assert_eq!(text.lines().nth(1), Some("k,v"));
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_csv(&path).is_err());
    }
}
