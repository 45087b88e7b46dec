//! Results files: `#` provenance lines, a header row, one row per estimate.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::config::SchemeName;

pub const CONFIG_BEGIN: &str = "# config begin";
pub const CONFIG_END: &str = "# config end";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: String,
    pub beta: f64,
    pub alpha: f64,
    /// `d` for grids, coloring and ALOHA, `theta` for CSMA.
    pub d_or_theta: f64,
    pub samples: usize,
    pub failures: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub capacity: f64,
    pub stderr: f64,
    pub seed: u64,
    pub code_version: String,
}

pub const HEADER: [&str; 12] = [
    "scheme",
    "beta",
    "alpha",
    "d_or_theta",
    "samples",
    "failures",
    "lambda",
    "sigma",
    "capacity",
    "stderr",
    "seed",
    "code_version",
];

/// Ten significant digits, so files compare equal across platforms whose
/// libm differs in the last bit.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else {
        "nan".to_string()
    }
}

impl ResultRow {
    fn fields(&self) -> [String; 12] {
        [
            self.scheme.clone(),
            self.beta.to_string(),
            self.alpha.to_string(),
            num(self.d_or_theta),
            self.samples.to_string(),
            self.failures.to_string(),
            num(self.lambda),
            num(self.sigma),
            num(self.capacity),
            num(self.stderr),
            self.seed.to_string(),
            self.code_version.clone(),
        ]
    }
}

/// Writes provenance comments, optionally wrapping an echoed config.
pub fn write_preamble(out: &mut impl Write, title: &str, version: &str, config: Option<&str>) -> io::Result<()> {
    writeln!(out, "# {title}")?;
    writeln!(out, "# code_version={version}")?;
    if let Some(cfg) = config {
        writeln!(out, "{CONFIG_BEGIN}")?;
        for line in cfg.lines() {
            if line.is_empty() {
                writeln!(out, "#")?;
            } else {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "{CONFIG_END}")?;
    }
    Ok(())
}

/// CSV writer for result rows, flushing after each so interrupted sweeps
/// keep what they finished.
pub struct RowWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RowWriter<W> {
    pub fn new(out: W) -> io::Result<Self> {
        let mut inner = csv::WriterBuilder::new().from_writer(out);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(RowWriter { inner })
    }

    pub fn write(&mut self, row: &ResultRow) -> io::Result<()> {
        self.inner.write_record(row.fields())?;
        self.inner.flush()
    }
}

/// Which parameter a sweep family varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Beta,
    Alpha,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Beta => "beta",
            Family::Alpha => "alpha",
        }
    }

    pub fn x(&self, row: &ResultRow) -> f64 {
        match self {
            Family::Beta => row.beta,
            Family::Alpha => row.alpha,
        }
    }
}

/// Every scheme's capacity over the triangular grid's at the same point,
/// one column per scheme.
pub fn write_scaled(
    out: &mut impl Write,
    points: &[(f64, f64)],
    schemes: &[SchemeName],
    rows: &[ResultRow],
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["beta".to_string(), "alpha".to_string()];
    header.extend(schemes.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let tri = SchemeName::TRIANGULAR.to_string();
    for &(beta, alpha) in points {
        let at = |name: &str| {
            rows.iter()
                .find(|r| r.scheme == name && r.beta == beta && r.alpha == alpha)
                .map(|r| r.capacity)
        };
        let reference = at(&tri).unwrap_or(f64::NAN);
        let mut record = vec![beta.to_string(), alpha.to_string()];
        for s in schemes {
            record.push(num(at(&s.to_string()).unwrap_or(f64::NAN) / reference));
        }
        w.write_record(&record)?;
    }
    w.flush()
}

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

/// A bare line chart of `y` against `x` for each named series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let pts = series
        .iter()
        .flat_map(|(_, p)| p.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, 0.0f64, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 >= x1 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14">{title}</text>"#, left);
    let (ax0, ay0) = (sx(x0), sy(y0));
    let _ = writeln!(
        s,
        r#"<path d="M{ax0:.1},{:.1} L{ax0:.1},{ay0:.1} L{:.1},{ay0:.1}" stroke="black" fill="none"/>"#,
        sy(y1),
        sx(x1)
    );
    for k in 0..=4 {
        let xv = x0 + (x1 - x0) * k as f64 / 4.0;
        let yv = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
            sx(xv),
            ay0 + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            ax0 - 6.0,
            sy(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{y_label}</text>"#,
        (top + h - bottom) / 2.0
    );
    for (k, (name, p)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = p
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
                path.join(" ")
            );
        }
        let ly = top + 18.0 * k as f64;
        let lx = w - right + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: &str, beta: f64, c: f64) -> ResultRow {
        ResultRow {
            scheme: scheme.into(),
            beta,
            alpha: 4.0,
            d_or_theta: 25.0,
            samples: 1,
            failures: 0,
            lambda: 1.0,
            sigma: c,
            capacity: c,
            stderr: 0.0,
            seed: 1,
            code_version: "v".into(),
        }
    }

    #[test]
    fn scaled_rows_divide_by_the_triangular_grid() {
        let rows = [row("grid:tri", 10.0, 0.4), row("aloha", 10.0, 0.2)];
        let mut buf = Vec::new();
        write_scaled(
            &mut buf,
            &[(10.0, 4.0)],
            &[SchemeName::TRIANGULAR, SchemeName::Aloha],
            &rows,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "beta,alpha,grid:tri,aloha\n10,4,1.000000000e0,5.000000000e-1\n");
    }

    #[test]
    fn preamble_marks_the_config() {
        let mut buf = Vec::new();
        write_preamble(&mut buf, "t", "v1", Some("[a]\nx = 1\n\n[b]")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# t\n# code_version=v1\n# config begin\n# [a]\n# x = 1\n#\n# [b]\n# config end\n"
        );
    }

    #[test]
    fn chart_has_one_polyline_per_series() {
        let svg = line_chart(
            "c",
            "beta",
            "capacity",
            &[
                ("a".into(), vec![(1.0, 0.1), (2.0, 0.2)]),
                ("b".into(), vec![(1.0, 0.3), (2.0, f64::NAN)]),
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
