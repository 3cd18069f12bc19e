//! `key = value` run configuration with per-command schemas.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    DeltaCheck,
    PeterssonCheck,
    EigenExtract,
    VoronoiCheck,
    ShiftedCompare,
    EnvelopeTrend,
    SecondMoment,
    Afe,
    Ledger,
    RelationsCheck,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::DeltaCheck,
        Command::PeterssonCheck,
        Command::EigenExtract,
        Command::VoronoiCheck,
        Command::ShiftedCompare,
        Command::EnvelopeTrend,
        Command::SecondMoment,
        Command::Afe,
        Command::Ledger,
        Command::RelationsCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::DeltaCheck => "delta-check",
            Command::PeterssonCheck => "petersson-check",
            Command::EigenExtract => "eigen-extract",
            Command::VoronoiCheck => "voronoi-check",
            Command::ShiftedCompare => "shifted-compare",
            Command::EnvelopeTrend => "envelope-trend",
            Command::SecondMoment => "second-moment",
            Command::Afe => "afe",
            Command::Ledger => "ledger",
            Command::RelationsCheck => "relations-check",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::DeltaCheck => "Delta-symbol detection of n = 0 for |n| <= Q^2",
            Command::PeterssonCheck => "Petersson geometric side in weights with no cusp forms",
            Command::EigenExtract => "Hecke eigenvalues of a one-dimensional space from the Petersson formula",
            Command::VoronoiCheck => "Voronoi summation: fitted eta and held-out residuals",
            Command::ShiftedCompare => "Shifted convolution sum through the delta and Voronoi stages",
            Command::EnvelopeTrend => "Direct shifted sums against the envelope over a grid of X",
            Command::SecondMoment => "Spectral and geometric sides of the second moment",
            Command::Afe => "Central value from the approximate functional equation",
            Command::Ledger => "Envelope formulas of the second-moment bounds",
            Command::RelationsCheck => "Hecke, Deligne, Fricke and Weil checks",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::UnknownCommand(s.to_string()))
    }

    /// Keys accepted by this command, their kinds and defaults (None: optional, no default).
    pub fn schema(self) -> &'static [(&'static str, Kind, Option<&'static str>)] {
        use Kind::*;
        match self {
            Command::DeltaCheck => &[("Q", Real, Some("10")), ("tol", Real, Some("1e-8"))],
            Command::PeterssonCheck => &[
                ("k", IntList, Some("4,6,8,10")),
                ("N", Int, Some("1")),
                ("n_max", Int, Some("20")),
                ("tol", Real, Some("1e-6")),
                ("c_max", Int, Some("200000")),
            ],
            Command::EigenExtract => &[
                ("k", Int, Some("12")),
                ("N", Int, Some("1")),
                ("n_max", Int, Some("30")),
                ("tol", Real, Some("1e-6")),
                ("tail", Text, Some("certified")),
                ("c_max", Int, Some("200000")),
                ("cutoff", Int, Some("20000")),
                ("oracle", Text, None),
            ],
            Command::VoronoiCheck => &[
                ("form", Text, Some("1.12.delta")),
                ("q_max", Int, Some("25")),
                ("tol", Real, Some("1e-4")),
            ],
            Command::ShiftedCompare => &[
                ("form", Text, Some("5.4.eta")),
                ("form2", Text, None),
                ("P", Int, Some("5")),
                ("ell", IntList, Some("1")),
                ("X", Real, Some("40")),
                ("Y", Real, Some("240")),
                ("Q", Real, None),
                ("tol_delta", Real, Some("1e-6")),
                ("tol_vm", Real, Some("1e-3")),
                ("tol_vn", Real, Some("1e-2")),
                ("reach_vm", Real, Some("40")),
                ("reach_vn", Real, Some("20")),
            ],
            Command::EnvelopeTrend => &[
                ("form", Text, Some("5.4.eta")),
                ("P", Int, Some("5")),
                ("ell", Int, Some("1")),
                ("X", RealList, Some("20,40,80,160")),
                ("Y_over_X", Real, Some("6")),
                ("slack", Real, Some("2")),
            ],
            Command::SecondMoment => &[
                ("fM", Int, Some("11")),
                ("fk", Int, Some("2")),
                ("form", Text, None),
                ("M", Int, Some("5")),
                ("kappa", Int, Some("4")),
                ("X", Real, Some("16")),
                ("tail_tol", Real, Some("1e-3")),
                ("rel_tol", Real, Some("1e-2")),
            ],
            Command::Afe => &[
                ("f", Text, Some("5.4.eta")),
                ("g", Text, Some("11.2.eta")),
                ("A", IntList, Some("2,3")),
                ("T", RealList, Some("8,16")),
                ("sigma", Real, Some("1")),
                ("n_max", Int, Some("440000")),
                ("tol", Real, Some("1e-6")),
                ("dyadic_tol", Real, Some("1e-4")),
            ],
            Command::Ledger => &[
                ("P", Int, Some("5")),
                ("M", Int, Some("11")),
                ("X", Real, Some("100")),
                ("delta", Real, Some("0.01")),
            ],
            Command::RelationsCheck => &[
                ("forms", TextList, Some("1.12.delta,5.4.eta,11.2.eta")),
                ("limit", Int, Some("10000")),
                ("weil", Int, Some("500")),
                ("fricke_tol", Real, Some("1e-12")),
            ],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Int,
    Real,
    Text,
    IntList,
    RealList,
    TextList,
}

impl Kind {
    pub fn expected(self) -> &'static str {
        match self {
            Kind::Int => "an integer",
            Kind::Real => "a real number",
            Kind::Text => "text",
            Kind::IntList => "a comma-separated list of integers",
            Kind::RealList => "a comma-separated list of real numbers",
            Kind::TextList => "a comma-separated list",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
    IntList(Vec<i64>),
    RealList(Vec<f64>),
    TextList(Vec<String>),
}

impl Value {
    pub fn parse(key: &str, raw: &str, kind: Kind) -> Result<Self> {
        let bad = || LabError::Type {
            key: key.to_string(),
            value: raw.to_string(),
            expected: kind.expected(),
        };
        let s = raw.trim();
        let items = || s.split(',').map(str::trim).filter(|t| !t.is_empty());
        let v = match kind {
            Kind::Int => Value::Int(s.parse().map_err(|_| bad())?),
            Kind::Real => {
                let x: f64 = s.parse().map_err(|_| bad())?;
                if !x.is_finite() {
                    return Err(bad());
                }
                Value::Real(x)
            }
            Kind::Text => {
                if s.is_empty() {
                    return Err(bad());
                }
                Value::Text(s.to_string())
            }
            Kind::IntList => Value::IntList(items().map(|t| t.parse().map_err(|_| bad())).collect::<Result<_>>()?),
            Kind::RealList => Value::RealList(
                items()
                    .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad))
                    .collect::<Result<_>>()?,
            ),
            Kind::TextList => Value::TextList(items().map(str::to_string).collect()),
        };
        let empty = match &v {
            Value::IntList(l) => l.is_empty(),
            Value::RealList(l) => l.is_empty(),
            Value::TextList(l) => l.is_empty(),
            _ => false,
        };
        if empty {
            return Err(bad());
        }
        Ok(v)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Text(v) => f.write_str(v),
            Value::IntList(v) => f.write_str(&join(v)),
            Value::RealList(v) => f.write_str(&join(v)),
            Value::TextList(v) => f.write_str(&join(v)),
        }
    }
}

/// Raw `key = value` pairs as read from a file, before any schema is applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub entries: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| LabError::Syntax {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected key = value, found {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(LabError::Syntax {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if entries.iter().any(|(e, _)| e == k) {
                return Err(LabError::Syntax {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("duplicate key {k:?}"),
                });
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, Value>,
    pub output: PathBuf,
    pub threads: usize,
}

const GENERAL_KEYS: [&str; 3] = ["command", "output", "threads"];

impl RunConfig {
    /// Merges file entries and flag values (flags win) and validates them against the
    /// command schema. The command comes from the flags side if given, else the file.
    pub fn resolve(command: Option<Command>, file: &ConfigFile, flags: &[(String, String)]) -> Result<Self> {
        let command = match command {
            Some(c) => c,
            None => Command::parse(
                file.get("command")
                    .ok_or_else(|| LabError::Config("no command given".into()))?,
            )?,
        };
        let schema = command.schema();
        for (k, _) in file.entries.iter().chain(flags) {
            if !GENERAL_KEYS.contains(&k.as_str()) && !schema.iter().any(|(s, _, _)| s == k) {
                return Err(LabError::UnknownKey {
                    key: k.clone(),
                    command: command.name().into(),
                });
            }
        }
        let lookup = |key: &str| -> Option<&str> {
            flags
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .or_else(|| file.get(key))
        };
        let mut params = BTreeMap::new();
        for &(key, kind, default) in schema {
            if let Some(raw) = lookup(key).or(default) {
                params.insert(key.to_string(), Value::parse(key, raw, kind)?);
            }
        }
        let threads = match lookup("threads") {
            Some(raw) => match Value::parse("threads", raw, Kind::Int)? {
                Value::Int(t) if t >= 1 => t as usize,
                _ => {
                    return Err(LabError::Type {
                        key: "threads".into(),
                        value: raw.into(),
                        expected: "a positive integer",
                    })
                }
            },
            None => 1,
        };
        let output = lookup("output")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(format!("{}.csv", command.name())));
        Ok(Self {
            command,
            params,
            output,
            threads,
        })
    }

    /// `key=value` pairs of everything that was resolved, in a fixed order.
    pub fn provenance(&self) -> String {
        let mut s = format!("command={}", self.command);
        for (k, v) in &self.params {
            s.push_str(&format!(" {k}={v}"));
        }
        s.push_str(&format!(" threads={} output={}", self.threads, self.output.display()));
        s
    }

    fn raw(&self, key: &str) -> Result<&Value> {
        self.params
            .get(key)
            .ok_or_else(|| LabError::Config(format!("{} needs a value for {key}", self.command)))
    }

    fn mismatch(&self, key: &str, expected: &'static str) -> LabError {
        LabError::Type {
            key: key.into(),
            value: self.params.get(key).map(|v| v.to_string()).unwrap_or_default(),
            expected,
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    pub fn int(&self, key: &str) -> Result<i64> {
        match self.raw(key)? {
            Value::Int(v) => Ok(*v),
            _ => Err(self.mismatch(key, Kind::Int.expected())),
        }
    }

    /// A positive integer, with the key named in the error otherwise.
    pub fn count(&self, key: &str) -> Result<u64> {
        match self.int(key)? {
            v if v >= 1 => Ok(v as u64),
            _ => Err(self.mismatch(key, "a positive integer")),
        }
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        match self.raw(key)? {
            Value::Real(v) => Ok(*v),
            Value::Int(v) => Ok(*v as f64),
            _ => Err(self.mismatch(key, Kind::Real.expected())),
        }
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        match self.real(key)? {
            v if v > 0.0 => Ok(v),
            _ => Err(self.mismatch(key, "a positive real number")),
        }
    }

    pub fn text(&self, key: &str) -> Result<&str> {
        match self.raw(key)? {
            Value::Text(v) => Ok(v),
            _ => Err(self.mismatch(key, Kind::Text.expected())),
        }
    }

    pub fn ints(&self, key: &str) -> Result<Vec<i64>> {
        match self.raw(key)? {
            Value::IntList(v) => Ok(v.clone()),
            Value::Int(v) => Ok(vec![*v]),
            _ => Err(self.mismatch(key, Kind::IntList.expected())),
        }
    }

    pub fn reals(&self, key: &str) -> Result<Vec<f64>> {
        match self.raw(key)? {
            Value::RealList(v) => Ok(v.clone()),
            Value::Real(v) => Ok(vec![*v]),
            _ => Err(self.mismatch(key, Kind::RealList.expected())),
        }
    }

    pub fn texts(&self, key: &str) -> Result<Vec<String>> {
        match self.raw(key)? {
            Value::TextList(v) => Ok(v.clone()),
            Value::Text(v) => Ok(vec![v.clone()]),
            _ => Err(self.mismatch(key, Kind::TextList.expected())),
        }
    }
}

/// Reads a config file that names its own command.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::resolve(None, &ConfigFile::read(path)?, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> ConfigFile {
        ConfigFile::parse(text, Path::new("test.conf")).unwrap()
    }

    fn flags(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_and_flags_only() {
        let c = RunConfig::resolve(Some(Command::DeltaCheck), &file(""), &flags(&[("Q", "20"), ("tol", "1e-9")])).unwrap();
        assert_eq!(c.real("Q").unwrap(), 20.0);
        assert_eq!(c.real("tol").unwrap(), 1e-9);
        assert_eq!(c.threads, 1);
    }

    #[test]
    fn flag_beats_file() {
        let f = file("# tolerances\ntol = 1e-6\nQ = 10 # small\n");
        let c = RunConfig::resolve(Some(Command::DeltaCheck), &f, &flags(&[("tol", "1e-8")])).unwrap();
        assert_eq!(c.real("tol").unwrap(), 1e-8);
        assert_eq!(c.real("Q").unwrap(), 10.0);
    }

    #[test]
    fn type_error_names_the_key() {
        let e = RunConfig::resolve(Some(Command::DeltaCheck), &file("Q = banana"), &[]).unwrap_err();
        match &e {
            LabError::Type { key, expected, .. } => {
                assert_eq!(key, "Q");
                assert_eq!(*expected, "a real number");
            }
            other => panic!("{other:?}"),
        }
        assert!(e.to_string().contains("Q"));
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::resolve(Some(Command::Ledger), &file("bogus = 3"), &[]).unwrap_err();
        assert!(matches!(&e, LabError::UnknownKey { key, .. } if key == "bogus"));
    }

    #[test]
    fn command_from_file() {
        let c = RunConfig::resolve(None, &file("command = afe\nA = 2\n"), &[]).unwrap();
        assert_eq!(c.command, Command::Afe);
        assert_eq!(c.ints("A").unwrap(), vec![2]);
        assert!(RunConfig::resolve(None, &file("command = nope"), &[]).is_err());
        assert!(RunConfig::resolve(None, &file(""), &[]).is_err());
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let e = ConfigFile::parse("Q = 1\nnot a pair\n", Path::new("x")).unwrap_err();
        assert!(matches!(e, LabError::Syntax { line: 2, .. }));
        assert!(ConfigFile::parse("Q = 1\nQ = 2", Path::new("x")).is_err());
    }

    #[test]
    fn lists_and_negatives() {
        let c = RunConfig::resolve(Some(Command::ShiftedCompare), &file("ell = 1, -1, 3"), &[]).unwrap();
        assert_eq!(c.ints("ell").unwrap(), vec![1, -1, 3]);
        assert!(!c.has("Q"));
        assert!(RunConfig::resolve(Some(Command::ShiftedCompare), &file("ell = 1,x"), &[]).is_err());
    }

    #[test]
    fn provenance_lists_every_resolved_key() {
        let c = RunConfig::resolve(Some(Command::DeltaCheck), &file(""), &flags(&[("threads", "4")])).unwrap();
        let p = c.provenance();
        assert!(p.starts_with("command=delta-check"));
        assert!(p.contains("Q=10") && p.contains("tol=0.00000001") && p.contains("threads=4"));
    }

    #[test]
    fn bad_threads() {
        assert!(RunConfig::resolve(Some(Command::Ledger), &file("threads = 0"), &[]).is_err());
    }

    #[test]
    fn every_default_parses() {
        for c in Command::ALL {
            RunConfig::resolve(Some(c), &ConfigFile::default(), &[]).unwrap();
            assert_eq!(Command::parse(c.name()).unwrap(), c);
        }
    }
}
