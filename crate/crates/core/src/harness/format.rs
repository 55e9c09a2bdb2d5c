//! Plain-text file formats.
//!
//! * Tensor: a `# dims R C` header, then `R` lines of `C` whitespace-separated
//!   values written with 17 significant digits.
//! * Index list: one decimal index per line.
//! * Placement map: a header line `n T C`, then one `k j p j'` line per
//!   assignment.
//! * Config: flat `key = value` lines with dotted keys; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::embed::{Assignment, PlacementMap};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// 17 significant digits round-trip every finite f64.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn tensor_to_string(m: &Matrix) -> String {
    let mut s = format!("# dims {} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|&v| format_value(v)).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_tensor(text: &str, path: &Path) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (rows, cols) = match fields.as_slice() {
        ["#", "dims", r, c] => (
            r.parse::<usize>()
                .map_err(|e| parse_err(path, 1, e.to_string()))?,
            c.parse::<usize>()
                .map_err(|e| parse_err(path, 1, e.to_string()))?,
        ),
        _ => return Err(parse_err(path, 1, "expected '# dims R C'")),
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in lines {
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| parse_err(path, i + 1, e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != cols {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {cols} values, found {}", values.len()),
            ));
        }
        data.extend(values);
        seen += 1;
    }
    if seen != rows {
        return Err(parse_err(
            path,
            1,
            format!("expected {rows} rows, found {seen}"),
        ));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn write_tensor(path: &Path, m: &Matrix) -> Result<()> {
    write(path, &tensor_to_string(m))
}

pub fn read_tensor(path: &Path) -> Result<Matrix> {
    parse_tensor(&read(path)?, path)
}

pub fn write_index(path: &Path, index: &[usize]) -> Result<()> {
    let mut s = String::new();
    for i in index {
        let _ = writeln!(s, "{i}");
    }
    write(path, &s)
}

pub fn read_index(path: &Path) -> Result<Vec<usize>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| parse_err(path, i + 1, e.to_string()))
        })
        .collect()
}

pub fn placement_to_string(map: &PlacementMap) -> String {
    let mut s = format!("{} {} {}\n", map.bits, map.candidates, map.cols);
    for a in &map.assignments {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            a.copy, a.source_col, a.host_plane, a.host_col
        );
    }
    s
}

pub fn write_placement(path: &Path, map: &PlacementMap) -> Result<()> {
    write(path, &placement_to_string(map))
}

/// Reads a placement map; the pruned index comes from its own file.
pub fn read_placement(path: &Path, index: Vec<usize>) -> Result<PlacementMap> {
    let text = read(path)?;
    let mut rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|e| parse_err(path, i + 1, e.to_string()))
                })
                .collect::<Result<Vec<_>>>()
                .map(|v| (i + 1, v))
        });
    let (_, header) = rows
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing header"))??;
    let [bits, candidates, cols] = header[..] else {
        return Err(parse_err(path, 1, "expected 'n T C'"));
    };
    let mut map = PlacementMap::empty(bits, candidates, cols, index);
    for row in rows {
        let (line, v) = row?;
        let [copy, source_col, host_plane, host_col] = v[..] else {
            return Err(parse_err(path, line, "expected 'k j p j''"));
        };
        map.assignments.push(Assignment {
            copy,
            source_col,
            host_plane,
            host_col,
        });
    }
    map.validate()?;
    Ok(map)
}

/// Flat `key = value` configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, i + 1, "expected 'key = value'"))?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(parse_err(path, i + 1, format!("bad key '{key}'")));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parses `key` if present.
    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("{key} = {v}: {e}")))
            })
            .transpose()
    }

    /// Comma-separated list under `key`.
    pub fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|e| Error::Config(format!("{key}: '{s}': {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::Config(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
