//! CSV and JSON serialization of results.
//!
//! CSV files are comma-separated with a header row whose column names carry
//! a unit annotation such as `t[time]`. Floats are written with 17
//! significant digits so files round-trip exactly and repeat byte for byte.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::counting::{CountingResult, QuasiDistribution};
use crate::propagation::{AdiabaticFrame, StepControl};

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column-oriented numeric table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    /// Columns are given as `name[unit]`.
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        debug_assert!(columns.iter().all(|c| c.ends_with(']') && c.contains('[')));
        debug_assert!(columns.iter().all(|c| !c.contains(',')));
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends the rows of a table with the same columns.
    pub fn extend(&mut self, other: Table) {
        assert_eq!(self.columns, other.columns, "column mismatch");
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Provenance attached to JSON records.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub engine_version: String,
    pub protocol: String,
    pub protocol_hash: String,
    pub step_control: StepControl,
    pub steps: usize,
}

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One row per spectral point: eigenvalue and weight.
pub fn spectrum_table(result: &CountingResult) -> Table {
    let mut t = Table::new(["Q[particles]", "p[probability]"]);
    for line in &result.spectrum {
        t.push(vec![line.q, line.p]);
    }
    t
}

/// One row per moment order.
pub fn moments_table(result: &CountingResult) -> Table {
    let mut t = Table::new(["k[order]", "moment[particles^k]"]);
    for (k, m) in result.moments.iter().enumerate() {
        t.push(vec![k as f64, *m]);
    }
    t
}

/// One row per counting-field sample.
pub fn chi_table(q: &QuasiDistribution) -> Table {
    let mut t = Table::new(["r[1/particles]", "chi_re[1]", "chi_im[1]"]);
    for (r, z) in q.r_grid.iter().zip(&q.chi) {
        t.push(vec![*r, z.re, z.im]);
    }
    t
}

/// One row per charge grid point.
pub fn p0_table(q: &QuasiDistribution) -> Table {
    let mut t = Table::new(["Q[particles]", "P0[1/particles]"]);
    for (x, p) in q.q_grid.iter().zip(&q.p0) {
        t.push(vec![*x, *p]);
    }
    t
}

/// Adiabatic levels labelled by diabatic character, with the label of the
/// level carrying the particle. Three sites give `E0, E_minus, E_plus` and
/// labels `0, −1, +1`; two sites give `E0, E1` and labels `0, 1`.
pub fn levels_table(frame: &AdiabaticFrame) -> Table {
    let three = frame.dim() == 3;
    let mut t = if three {
        Table::new([
            "t[time]",
            "E0[energy]",
            "E_minus[energy]",
            "E_plus[energy]",
            "followed[level]",
        ])
    } else {
        Table::new(["t[time]", "E0[energy]", "E1[energy]", "followed[level]"])
    };
    for (time, energies, label) in frame.diabatic_rows() {
        let mut row = vec![time];
        row.extend(energies);
        let code = if three {
            [0.0, -1.0, 1.0][label]
        } else {
            label as f64
        };
        row.push(code);
        t.push(row);
    }
    t
}

pub fn counting_result_json(result: &CountingResult, meta: &Metadata) -> Value {
    json!({ "metadata": meta, "counting": result })
}

pub fn quasi_json(q: &QuasiDistribution, meta: &Metadata) -> Value {
    let chi: Vec<[f64; 2]> = q.chi.iter().map(|z| [z.re, z.im]).collect();
    json!({ "metadata": meta, "quasi": q, "chi": chi })
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s.into_bytes()
}
