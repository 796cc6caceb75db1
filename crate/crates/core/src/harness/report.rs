use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::metrics::{QualityMetrics, Verdict};

/// Column order of every experiment CSV.
pub const CSV_HEADER: [&str; 14] = [
    "hide",
    "sanitizer",
    "t",
    "mse_ip",
    "psnr_ip",
    "ssim_ip",
    "ncc_ip",
    "mse_se",
    "psnr_se",
    "ssim_se",
    "ncc_se",
    "verdict_ip",
    "verdict_se",
    "time_ms",
];

/// One aggregate over all containers of a hide method under one sanitizer
/// setting.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub hide: String,
    /// Sanitizer name, or `none` for the pre-sanitization baseline.
    pub sanitizer: String,
    pub t: Option<usize>,
    pub ip: QualityMetrics,
    pub se: QualityMetrics,
    pub verdict: Verdict,
    /// Mean wall time per image, when timing is enabled.
    pub time_ms: Option<f64>,
}

impl ResultRow {
    pub fn record(&self) -> Vec<String> {
        let num = |v: f64| v.to_string();
        vec![
            self.hide.clone(),
            self.sanitizer.clone(),
            self.t.map(|t| t.to_string()).unwrap_or_default(),
            num(self.ip.mse),
            num(self.ip.psnr_db),
            num(self.ip.ssim),
            num(self.ip.ncc),
            num(self.se.mse),
            num(self.se.psnr_db),
            num(self.se.ssim),
            num(self.se.ncc),
            Verdict::label(self.verdict.ip_success).into(),
            Verdict::label(self.verdict.se_success).into(),
            self.time_ms.map(num).unwrap_or_default(),
        ]
    }
}

/// Writes `rows` to `<outdir>/<name>.csv` and returns the path.
pub fn write_csv(rows: &[ResultRow], outdir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(outdir)?;
    let path = outdir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush()?;
    Ok(path)
}

/// Writes a CSV with an arbitrary header, used for paired and audio tables.
pub fn write_table(outdir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    std::fs::create_dir_all(outdir)?;
    let path = outdir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(path)
}

/// A named line on a plot.
#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Dashed stroke.
    pub dashed: bool,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Renders a self-contained SVG line plot. `hlines` draws labelled
/// horizontal reference lines, e.g. the verdict thresholds.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series], hlines: &[(f64, &str)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 170.0, 40.0, 50.0);
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .chain(hlines.iter().map(|l| l.0))
        .filter(|v| v.is_finite());
    let (y0, y1) = ys.fold((0.0f64, 1.0f64), |(a, b), y| (a.min(y), b.max(y)));
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + ph + 16.0,
            trim(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            trim(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );
    for (v, label) in hlines {
        let y = sy(*v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" x2="{:.1}" y1="{y:.1}" y2="{y:.1}" stroke="#999" stroke-dasharray="2 3"/>"##,
            left + pw
        );
        let _ = writeln!(s, r##"<text x="{:.1}" y="{:.1}" fill="#666">{}</text>"##, left + 4.0, y - 3.0, escape(label));
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(svg: &str, outdir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(outdir)?;
    let path = outdir.join(format!("{name}.svg"));
    std::fs::write(&path, svg)?;
    Ok(path)
}

/// Writes the result CSV and, for sweeps, one NCC-versus-t SVG per run.
pub fn emit_report(rows: &[ResultRow], outdir: &Path, name: &str, plot: bool) -> Result<Vec<PathBuf>> {
    let mut written = vec![write_csv(rows, outdir, name)?];
    if plot {
        written.push(write_svg(&sweep_svg(rows, name), outdir, name)?);
    }
    Ok(written)
}

/// IP and SE NCC against t for every (hide, sanitizer) pair with a timestep.
pub fn sweep_svg(rows: &[ResultRow], title: &str) -> String {
    let mut keys: Vec<(String, String)> = rows
        .iter()
        .filter(|r| r.t.is_some())
        .map(|r| (r.hide.clone(), r.sanitizer.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    let mut series = Vec::new();
    for (hide, san) in &keys {
        let pick = |f: fn(&ResultRow) -> f64| -> Vec<(f64, f64)> {
            rows.iter()
                .filter(|r| &r.hide == hide && &r.sanitizer == san)
                .filter_map(|r| r.t.map(|t| (t as f64, f(r))))
                .collect()
        };
        series.push(Series {
            label: format!("{hide}/{san} IP"),
            points: pick(|r| r.ip.ncc),
            dashed: false,
        });
        series.push(Series {
            label: format!("{hide}/{san} SE"),
            points: pick(|r| r.se.ncc),
            dashed: true,
        });
    }
    let (tip, tse) = rows
        .first()
        .map(|r| (r.verdict.theta_ip, r.verdict.theta_se))
        .unwrap_or((crate::metrics::THETA_IP, crate::metrics::THETA_SE));
    line_plot_svg(title, "timestep t", "NCC", &series, &[(tip, "theta IP"), (tse, "theta SE")])
}
