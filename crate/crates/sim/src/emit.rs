//! Run outputs: record CSV, metrics JSON and SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::experiment::BrakingCell;
use crate::metrics::Metrics;
use crate::run::SimRecord;

/// Column order of the record CSV.
pub const RECORD_HEADER: [&str; 27] = [
    "t",
    "leader_x",
    "leader_y",
    "leader_theta",
    "follower_x",
    "follower_y",
    "follower_theta",
    "x_lf",
    "y_lf",
    "gamma",
    "x_est",
    "y_est",
    "gamma_est",
    "v_hat",
    "omega_hat",
    "v_l",
    "omega_l",
    "v_cmd",
    "omega_cmd",
    "v_f",
    "omega_f",
    "link",
    "pose_ok",
    "eps_x",
    "eps_y",
    "eps_gamma",
    "lyapunov",
];

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn record_row(r: &SimRecord) -> Vec<String> {
    let nums = [
        r.t,
        r.leader.x,
        r.leader.y,
        r.leader.theta,
        r.follower.x,
        r.follower.y,
        r.follower.theta,
        r.s_true.x_lf,
        r.s_true.y_lf,
        r.s_true.gamma,
        r.s_est.x_lf,
        r.s_est.y_lf,
        r.s_est.gamma,
        r.u_hat.v,
        r.u_hat.omega,
        r.u_l.v,
        r.u_l.omega,
        r.u_cmd.v,
        r.u_cmd.omega,
        r.u_f.v,
        r.u_f.omega,
    ];
    let mut row: Vec<String> = nums.iter().map(|v| v.to_string()).collect();
    row.push(r.link.as_str().to_string());
    row.push(u8::from(r.pose_ok).to_string());
    row.extend(r.eps.iter().map(|v| v.to_string()));
    row.push(r.v.to_string());
    row
}

pub fn write_records<W: Write>(records: &[SimRecord], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_HEADER)?;
    for r in records {
        out.write_record(record_row(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn records_csv(records: &[SimRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(records, &mut buf).expect("writing to memory");
    buf
}

pub fn write_records_file(records: &[SimRecord], path: &Path) -> Result<(), EmitError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    write_records(records, std::io::BufWriter::new(f)).map_err(|source| EmitError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_metrics_file(metrics: &Metrics, path: &Path) -> Result<(), EmitError> {
    let text = serde_json::to_string_pretty(metrics).map_err(|source| EmitError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn braking_csv<W: Write>(cells: &[BrakingCell], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["v_level", "estimator", "mean_distance", "std_distance", "completed"])?;
    for c in cells {
        let est = match c.estimator {
            crate::config::EstimatorKind::Oisac => "oisac",
            crate::config::EstimatorKind::Ekf => "ekf",
        };
        out.write_record([
            c.v_level.to_string(),
            est.to_string(),
            c.mean.to_string(),
            c.std.to_string(),
            c.completed.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Minimal SVG line chart with axis ranges taken from the data.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], equal_aspect: bool) -> String {
    let (w, h, pad) = (640.0, 420.0, 50.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let (pw, ph) = (w - 2.0 * pad, h - 2.0 * pad);
    let (mut sx, mut sy) = (pw / (x1 - x0), ph / (y1 - y0));
    if equal_aspect {
        let s = sx.min(sy);
        (sx, sy) = (s, s);
    }
    let px = |x: f64| pad + (x - x0) * sx;
    let py = |y: f64| h - pad - (y - y0) * sy;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#,
        w / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{y_label}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (v, anchor_x, anchor_y) in [(x0, px(x0), h - pad + 15.0), (x1, px(x1), h - pad + 15.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{anchor_x:.1}" y="{anchor_y:.1}" text-anchor="middle">{v:.3}</text>"#
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            pad - 4.0,
            py(v) + 4.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let mut d = String::new();
        for &(x, y) in s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(d, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.color,
            d.trim_end()
        );
        let ly = pad + 15.0 + 15.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{}">{}</text>"#,
            w - pad - 100.0,
            s.color,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn trajectory_svg(records: &[SimRecord]) -> String {
    line_plot(
        "Trajectories",
        "x [m]",
        "y [m]",
        &[
            Series {
                label: "leader",
                color: "#1f77b4",
                points: records.iter().map(|r| (r.leader.x, r.leader.y)).collect(),
            },
            Series {
                label: "follower",
                color: "#d62728",
                points: records.iter().map(|r| (r.follower.x, r.follower.y)).collect(),
            },
        ],
        true,
    )
}

pub fn error_svg(records: &[SimRecord]) -> String {
    let comp = |i: usize| records.iter().map(|r| (r.t, r.eps[i])).collect();
    line_plot(
        "Formation error",
        "t [s]",
        "error",
        &[
            Series {
                label: "eps_x [m]",
                color: "#1f77b4",
                points: comp(0),
            },
            Series {
                label: "eps_y [m]",
                color: "#2ca02c",
                points: comp(1),
            },
            Series {
                label: "eps_gamma [rad]",
                color: "#d62728",
                points: comp(2),
            },
        ],
        false,
    )
}

/// Writes `records.csv`, `metrics.json`, `trajectory.svg` and `error.svg`
/// into `dir`, creating it if needed.
pub fn emit(records: &[SimRecord], metrics: &Metrics, dir: &Path) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let csv_path = dir.join("records.csv");
    write_records_file(records, &csv_path)?;
    let metrics_path = dir.join("metrics.json");
    write_metrics_file(metrics, &metrics_path)?;
    let traj = dir.join("trajectory.svg");
    fs::write(&traj, trajectory_svg(records)).map_err(io_err(&traj))?;
    let err = dir.join("error.svg");
    fs::write(&err, error_svg(records)).map_err(io_err(&err))?;
    Ok(vec![csv_path, metrics_path, traj, err])
}
