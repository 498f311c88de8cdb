use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tool version, digest of the effective configuration and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    /// Hashes the canonical JSON of `config`: object keys sorted, no whitespace.
    pub fn new<T: Serialize>(config: &T, seed: u64) -> Result<Self, CliError> {
        let canonical = serde_json::to_vec(&serde_json::to_value(config)?)?;
        Ok(Provenance {
            tool: "qem",
            version: VERSION,
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            seed,
        })
    }

    pub fn comment(&self) -> String {
        format!("# {} {} config {} seed {}", self.tool, self.version, self.config_sha256, self.seed)
    }
}

/// Round-trip exact float text with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Equal-width bins over the range of `values`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let mut lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn to_csv(&self, provenance: &Provenance) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bin_lower", "bin_upper", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([fmt_f64(self.edges[i]), fmt_f64(self.edges[i + 1]), c.to_string()])?;
        }
        with_comment(provenance, w)
    }
}

/// Prepends the provenance comment line to a finished CSV document.
pub fn with_comment(provenance: &Provenance, w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let body = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    let body = String::from_utf8(body).expect("csv output is utf-8");
    Ok(format!("{}\n{body}", provenance.comment()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes named documents into `dir`, or to stdout when there is no directory.
pub struct Sink {
    dir: Option<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Sink { dir }
    }

    pub fn emit(&self, name: &str, content: &str) -> Result<(), CliError> {
        match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(name);
                std::fs::write(&path, content)?;
                println!("wrote {}", path.display());
            }
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(content.as_bytes())?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 2.956, -1.0 / 3.0, 1e-300, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn histogram_counts_every_value() {
        let values: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let h = Histogram::new(&values, 10);
        assert_eq!(h.edges.len(), 11);
        assert_eq!(h.counts.iter().sum::<u64>(), 100);
        assert_eq!(h.edges[0], 0.0);
        assert_eq!(h.edges[10], 1.0);
        assert_eq!(h.counts, vec![10; 10]);
    }

    #[test]
    fn degenerate_histogram() {
        let h = Histogram::new(&[0.5, 0.5], 4);
        assert_eq!(h.counts.iter().sum::<u64>(), 2);
        assert!(h.edges[0] < 0.5 && h.edges[4] > 0.5);
    }

    #[test]
    fn provenance_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"a": 1, "b": [2, 3]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"b": [2, 3], "a": 1}"#).unwrap();
        let pa = Provenance::new(&a, 1).unwrap();
        assert_eq!(pa, Provenance::new(&b, 1).unwrap());
        assert_eq!(pa.config_sha256.len(), 64);
        assert!(pa.comment().starts_with("# qem "));
    }
}
