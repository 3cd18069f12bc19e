//! CSV artifacts: a provenance comment, a header row, then data rows.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{LabError, Result};

/// Shortest round-trip scientific form, so equal bits give equal text.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self, provenance: &str) -> Result<Vec<u8>> {
        let mut out = format!("# lfunlab {provenance}\n").into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        drop(w);
        Ok(out)
    }

    pub fn write(&self, cfg: &RunConfig) -> Result<PathBuf> {
        let bytes = self.render(&cfg.provenance())?;
        write_bytes(&cfg.output, &bytes)?;
        Ok(cfg.output.clone())
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| LabError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

/// Data lines of a CSV artifact with the `#` provenance lines removed.
pub fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let mut t = Table::new(&["n", "value"]);
        t.push(vec!["1".into(), num(0.5)]);
        t.push(vec!["2".into(), "a,b".into()]);
        let s = String::from_utf8(t.render("command=x").unwrap()).unwrap();
        assert_eq!(s, "# lfunlab command=x\nn,value\n1,5e-1\n2,\"a,b\"\n");
        assert_eq!(data_lines(&s).len(), 3);
    }

    #[test]
    fn num_round_trips() {
        for x in [0.1, -2.5e-300, 1.0 / 3.0, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), f64::to_bits(x));
        }
    }
}
