//! CSV and SVG output for sweeps and single fits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::simulation::{Method, RunRecord, SweepResult};
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

pub const RESULTS_HEADER: [&str; 13] = [
    "p",
    "rho",
    "n",
    "rep",
    "method",
    "kl",
    "pe",
    "ee_a",
    "ee_omega",
    "w_underfit",
    "w_smallest_correct",
    "w_overfit",
    "seconds",
];

pub const METRICS: [&str; 4] = ["kl", "pe", "ee_a", "ee_omega"];

pub fn metric_value(m: &MetricsRecord, name: &str) -> Option<f64> {
    match name {
        "kl" => Some(m.kl),
        "pe" => Some(m.pe),
        "ee_a" => Some(m.ee_a),
        "ee_omega" => Some(m.ee_omega),
        _ => None,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn record_row(r: &RunRecord) -> Vec<String> {
    let w = r.weights;
    vec![
        r.p.to_string(),
        r.rho.to_string(),
        r.n.to_string(),
        r.rep.to_string(),
        r.method.to_string(),
        r.metrics.kl.to_string(),
        r.metrics.pe.to_string(),
        r.metrics.ee_a.to_string(),
        r.metrics.ee_omega.to_string(),
        opt(w.map(|w| w.underfit)),
        opt(w.map(|w| w.smallest_correct)),
        opt(w.map(|w| w.overfit)),
        opt(r.seconds),
    ]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_results_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv_writer(path.as_ref())?;
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record(record_row(r))?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Writes `results.csv`, `failures.csv` (only if something failed) and one
/// SVG per metric and `(p, ρ)` cell into `dir`. Returns the files written.
pub fn emit_results(res: &SweepResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let results = dir.join("results.csv");
    write_results_csv(&res.records, &results)?;
    written.push(results);

    if !res.failures.is_empty() {
        let path = dir.join("failures.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["p", "rho", "n", "rep", "error"])?;
        for f in &res.failures {
            w.write_record([
                f.p.to_string(),
                f.rho.to_string(),
                f.n.to_string(),
                f.rep.to_string(),
                f.error.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    let mut cells: BTreeMap<(usize, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in &res.records {
        cells.entry((r.p, r.rho.to_bits())).or_default().push(r);
    }
    for ((p, rho_bits), recs) in cells {
        let rho = f64::from_bits(rho_bits);
        for metric in METRICS {
            let path = dir.join(format!("{metric}_p{p}_rho{rho}.svg"));
            let svg = render_metric_svg(&recs, metric, &format!("{metric}  p={p}  rho={rho}"));
            std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Mean of `metric` by method and `n`.
pub fn mean_by_method(records: &[&RunRecord], metric: &str) -> BTreeMap<Method, BTreeMap<usize, f64>> {
    let mut acc: BTreeMap<Method, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in records {
        if let Some(v) = metric_value(&r.metrics, metric) {
            let e = acc.entry(r.method).or_default().entry(r.n).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(m, by_n)| (m, by_n.into_iter().map(|(n, (s, c))| (n, s / c as f64)).collect()))
        .collect()
}

fn colour(m: Method) -> &'static str {
    match m {
        Method::DagMa => "#d62728",
        Method::LargestCandidate => "#1f77b4",
        Method::InitialGraph => "#2ca02c",
        Method::OracleTrueGraph => "#7f7f7f",
    }
}

/// Line chart of `log10(mean metric)` against `n`, one polyline per method.
pub fn render_metric_svg(records: &[&RunRecord], metric: &str, title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 170.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;

    let means = mean_by_method(records, metric);
    let points: Vec<(Method, Vec<(f64, f64)>)> = means
        .iter()
        .map(|(&m, by_n)| {
            let pts = by_n
                .iter()
                .filter(|(_, &v)| v > 0.0 && v.is_finite())
                .map(|(&n, &v)| (n as f64, v.log10()))
                .collect();
            (m, pts)
        })
        .collect();
    let all = points.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let sy = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, (W - R + L) / 2.0);
    let _ = writeln!(
        s,
        r#"<path d="M{L} {T} V{} H{}" fill="none" stroke="black"/>"#,
        H - B,
        W - R
    );
    let xs: std::collections::BTreeSet<usize> = means.values().flat_map(|m| m.keys().copied()).collect();
    for n in xs {
        let x = sx(n as f64);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{n}</text>"#, H - B + 18.0);
    }
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, L - 6.0, sy(y) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (W - R + L) / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">log10 mean {metric}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (m, pts)) in points.iter().enumerate() {
        let c = colour(*m);
        if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, coords.join(" "));
            for &(x, y) in pts {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, sx(x), sy(y));
            }
        }
        let ly = T + 10.0 + 20.0 * i as f64;
        let lx = W - R + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{m}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// `model_index,k,weight` with 1-based model indices.
pub fn write_weights_csv(k: &[usize], w: &[f64], path: impl AsRef<Path>) -> Result<()> {
    if k.len() != w.len() {
        return Err(Error::InvalidInput("k and w differ in length".into()));
    }
    let path = path.as_ref();
    let mut out = csv_writer(path)?;
    out.write_record(["model_index", "k", "weight"])?;
    for (i, (k, w)) in k.iter().zip(w).enumerate() {
        out.write_record([(i + 1).to_string(), k.to_string(), w.to_string()])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
