//! Plain CSV and `key=value` manifest helpers shared by every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::radial_field::RadialGrid;

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

pub fn write_header<W: Write>(out: &mut W, columns: &[&str]) -> Result<()> {
    writeln!(out, "{}", columns.join(","))?;
    Ok(())
}

pub fn write_row<W: Write>(out: &mut W, values: &[f64]) -> Result<()> {
    let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    writeln!(out, "{}", cells.join(","))?;
    Ok(())
}

/// Reads a numeric CSV whose header must equal `expected`.
pub fn read_columns<R: BufRead>(input: R, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV".into()))??;
    let names: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    if names != expected {
        return Err(Error::Parse(format!(
            "expected header {:?}, found {:?}",
            expected.join(","),
            header.trim()
        )));
    }
    let mut columns = vec![Vec::new(); expected.len()];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != expected.len() {
            return Err(Error::Parse(format!(
                "line {}: expected {} columns, found {}",
                lineno + 2,
                expected.len(),
                cells.len()
            )));
        }
        for (col, cell) in columns.iter_mut().zip(cells) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}: {cell:?}", lineno + 2)))?;
            col.push(v);
        }
    }
    Ok(columns)
}

/// Recovers a uniform grid from a column of cell centres.
pub fn grid_from_centers(r: &[f64]) -> Result<RadialGrid> {
    let n = r.len();
    if n == 0 {
        return Err(Error::Parse("no rows".into()));
    }
    let h = 2.0 * r[0];
    let grid = RadialGrid::new(h * n as f64, n)?;
    let tol = 1e-9 * grid.r_max();
    if r.iter()
        .enumerate()
        .any(|(i, &ri)| (ri - grid.center(i)).abs() > tol)
    {
        return Err(Error::Parse(
            "r column is not a uniform cell-centred grid".into(),
        ));
    }
    Ok(grid)
}

/// Ordered `key=value` manifest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", i + 1)))?;
            m.set(k.trim(), v.trim());
        }
        Ok(m)
    }

    pub fn as_map(&self) -> BTreeMap<&str, &str> {
        self.entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }
}

/// Writes `bytes` to `path` through a uniquely named temporary file and a
/// rename, so concurrent writers of one path never leave a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp_name = format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    let tmp = match dir {
        Some(d) => d.join(tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
