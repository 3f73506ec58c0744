//! Output files: trajectory and snapshot CSV, SVG plots and the run manifest.
//!
//! Every file is written to a temporary sibling first and renamed into place,
//! so a failed run never leaves a truncated file behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{FrameworkChoice, SimConfig};
use crate::engine::{
    equivalence_report, max_casimir_drift, plant_balance_residual, Record, SimLog, Simulation,
    Snapshot,
};
use crate::error::{Error, Result};
use crate::model::Framework;

/// Round-trip formatting: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(
    header: &[&str],
    rows: impl Iterator<Item = Vec<f64>>,
    path: &Path,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))
            .map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_trajectory_csv(log: &SimLog, path: &Path) -> Result<()> {
    write_records_csv(&log.records, path)
}

pub fn write_records_csv(records: &[Record], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyLog);
    }
    let bytes = csv_bytes(
        &Record::COLUMNS,
        records.iter().map(|r| r.values().to_vec()),
        path,
    )?;
    write_atomic(path, &bytes)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<Record>> {
    let data = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::FileNotFound(path.to_path_buf())
        }
        _ => data(e.to_string()),
    })?;
    let header = r.headers().map_err(|e| data(e.to_string()))?;
    if header.iter().ne(Record::COLUMNS) {
        return Err(data(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row.map_err(|e| data(e.to_string()))?;
        let mut v = [0.0; 11];
        for (slot, cell) in v.iter_mut().zip(row.iter()) {
            *slot = cell
                .parse()
                .map_err(|_| data(format!("row {}: bad number {cell:?}", line + 2)))?;
        }
        if row.len() != v.len() {
            return Err(data(format!("row {}: {} columns", line + 2, row.len())));
        }
        out.push(Record::from_values(&v));
    }
    Ok(out)
}

/// `fields_t<t>.csv` with the time printed without trailing zeros.
pub fn snapshot_file_name(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("fields_t{s}.csv")
}

/// Writes one file per snapshot into `dir` and returns the file names.
pub fn write_fields_csv(log: &SimLog, dir: &Path) -> Result<Vec<String>> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    log.snapshots
        .iter()
        .map(|s| {
            let name = snapshot_file_name(s.t);
            write_snapshot(s, &dir.join(&name))?;
            Ok(name)
        })
        .collect()
}

fn write_snapshot(s: &Snapshot, path: &Path) -> Result<()> {
    let header: Vec<&str> = s.columns.iter().map(|(n, _)| *n).collect();
    let n = s.columns[0].1.len();
    let rows = (0..n).map(|i| s.columns.iter().map(|(_, f)| f[i]).collect());
    let bytes = csv_bytes(&header, rows, path)?;
    write_atomic(path, &bytes)
}

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

fn panel(out: &mut String, top: f64, title: &str, t: &[f64], series: &[Series]) {
    const LEFT: f64 = 70.0;
    const WIDTH: f64 = 560.0;
    const HEIGHT: f64 = 200.0;
    let (t0, t1) = (t[0], *t.last().unwrap());
    let all = series.iter().flat_map(|s| s.values.iter().copied());
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if hi - lo < 1e-300 {
        lo -= 0.5;
        hi += 0.5;
    }
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let x = |v: f64| LEFT + WIDTH * (v - t0) / span_t;
    let y = |v: f64| top + HEIGHT * (1.0 - (v - lo) / (hi - lo));

    out.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"{:.1}\" font-size=\"13\">{title}</text>\n",
        top - 8.0
    ));
    out.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{top}\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    for (v, yy) in [(hi, top + 4.0), (lo, top + HEIGHT)] {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{yy:.1}\" font-size=\"10\" text-anchor=\"end\">{v:.4}</text>\n",
            LEFT - 4.0
        ));
    }
    for (v, anchor) in [(t0, "start"), (t1, "end")] {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"{anchor}\">t = {v}</text>\n",
            x(v),
            top + HEIGHT + 14.0
        ));
    }
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = t
            .iter()
            .zip(&s.values)
            .map(|(&a, &b)| format!("{:.2},{:.2}", x(a), y(b)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            s.color,
            pts.join(" ")
        ));
        let ly = top + 14.0 + 14.0 * k as f64;
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\">{}</text>\n",
            LEFT + WIDTH - 110.0,
            LEFT + WIDTH - 90.0,
            s.color,
            LEFT + WIDTH - 85.0,
            ly + 4.0,
            s.label
        ));
    }
}

/// Tip deflections and energies against time as one standalone SVG.
pub fn render_svg(log: &SimLog, path: &Path) -> Result<()> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let col = |f: fn(&Record) -> f64| log.records.iter().map(f).collect::<Vec<_>>();
    let t = col(|r| r.t);
    let mut svg = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"560\" \
         font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
    );
    panel(
        &mut svg,
        30.0,
        "tip deflection",
        &t,
        &[
            Series {
                label: "w(L)",
                color: "#1f77b4",
                values: col(|r| r.w_l),
            },
            Series {
                label: "w_hat(L)",
                color: "#d62728",
                values: col(|r| r.what_l),
            },
        ],
    );
    panel(
        &mut svg,
        310.0,
        "energies",
        &t,
        &[
            Series {
                label: "H",
                color: "#1f77b4",
                values: col(|r| r.h),
            },
            Series {
                label: "H_cl",
                color: "#2ca02c",
                values: col(|r| r.hcl),
            },
            Series {
                label: "H_tilde",
                color: "#d62728",
                values: col(|r| r.htilde),
            },
        ],
    );
    svg.push_str("</svg>\n");
    write_atomic(path, svg.as_bytes())
}

/// Scalars that can be recomputed from `trajectory.csv`, plus the
/// equivalence deviation when both formulations ran.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_w_l: f64,
    pub final_htilde: f64,
    pub max_casimir_drift: f64,
    /// Plant balance `max |dH - int u y_bar dt| / max |H|`.
    pub max_balance_residual: f64,
    /// Exact-mode `max |u_JB - u_SD|`; absent for single-formulation runs.
    pub max_equivalence_deviation: Option<f64>,
}

impl Summary {
    pub fn from_records(records: &[Record], dt: f64, equivalence: Option<f64>) -> Result<Self> {
        let last = records.last().ok_or(Error::EmptyLog)?;
        Ok(Summary {
            final_w_l: last.w_l,
            final_htilde: last.htilde,
            max_casimir_drift: max_casimir_drift(records),
            max_balance_residual: plant_balance_residual(records, dt),
            max_equivalence_deviation: equivalence,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub framework: String,
    pub dt: f64,
    pub config: SimConfig,
    pub files: Vec<String>,
    pub summary: Summary,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Listed files that are missing under `dir`.
    pub fn missing_files(&self, dir: &Path) -> Vec<PathBuf> {
        self.files
            .iter()
            .map(|f| dir.join(f))
            .filter(|p| !p.is_file())
            .collect()
    }
}

pub const TRAJECTORY: &str = "trajectory.csv";
pub const TRAJECTORY_SD: &str = "trajectory_sd.csv";
pub const MANIFEST: &str = "manifest.json";
pub const PLOT: &str = "plot.svg";

/// Runs `config` and writes every output into `out`.
///
/// With both formulations the jet-bundle log is the primary trajectory, the
/// Stokes-Dirac log goes to `trajectory_sd.csv` and the manifest carries the
/// exact-mode control-law deviation.
pub fn write_run(config: &SimConfig, out: &Path, svg: bool) -> Result<RunManifest> {
    let primary = config.sim.framework.primary();
    let log = Simulation::new(config, primary)?.run()?;
    let secondary = match config.sim.framework {
        FrameworkChoice::Both => Some(Simulation::new(config, Framework::Sd)?.run()?),
        _ => None,
    };
    let equivalence = match config.sim.framework {
        FrameworkChoice::Both => Some(equivalence_report(config)?.exact_max_du),
        _ => None,
    };

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = vec![TRAJECTORY.to_string()];
    write_trajectory_csv(&log, &out.join(TRAJECTORY))?;
    if let Some(sd) = &secondary {
        write_trajectory_csv(sd, &out.join(TRAJECTORY_SD))?;
        files.push(TRAJECTORY_SD.to_string());
    }
    files.extend(write_fields_csv(&log, out)?);
    if svg {
        render_svg(&log, &out.join(PLOT))?;
        files.push(PLOT.to_string());
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        framework: match config.sim.framework {
            FrameworkChoice::Both => "both".to_string(),
            _ => primary.name().to_string(),
        },
        dt: log.dt,
        config: config.clone(),
        files,
        summary: Summary::from_records(&log.records, log.dt, equivalence)?,
    };
    manifest.write(&out.join(MANIFEST))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_closed_loop;

    fn short_log() -> SimLog {
        let mut c = SimConfig::preset("paper-fig1").unwrap();
        c.sim.t_final = 0.2;
        c.sim.snapshots = vec![0.0, 0.1];
        run_closed_loop(&c).unwrap()
    }

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, f64::MAX, 0.0, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn trajectory_round_trip_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let log = short_log();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&log, &path).unwrap();
        assert_eq!(read_trajectory_csv(&path).unwrap(), log.records);

        let names = write_fields_csv(&log, dir.path()).unwrap();
        assert_eq!(names, ["fields_t0.csv", "fields_t0.1.csv"]);
        let text = std::fs::read_to_string(dir.path().join(&names[1])).unwrap();
        assert!(text.starts_with("z,w,p,w_hat,p_hat\n"));
        assert_eq!(text.lines().count(), 102);

        let svg = dir.path().join("plot.svg");
        render_svg(&log, &svg).unwrap();
        let s = std::fs::read_to_string(svg).unwrap();
        assert!(s.starts_with("<svg") && s.contains("polyline") && !s.contains("href"));
    }

    #[test]
    fn empty_log_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = short_log();
        log.records.clear();
        let path = dir.path().join("trajectory.csv");
        assert!(matches!(
            write_trajectory_csv(&log, &path),
            Err(Error::EmptyLog)
        ));
        assert!(matches!(render_svg(&log, &path), Err(Error::EmptyLog)));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn malformed_csv_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,u\n1,2\n").unwrap();
        assert!(matches!(
            read_trajectory_csv(&path),
            Err(Error::Data { .. })
        ));
        assert!(matches!(
            read_trajectory_csv(&dir.path().join("none.csv")),
            Err(Error::FileNotFound(_))
        ));
    }
}
