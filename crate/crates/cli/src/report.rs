//! Output files: tables (CSV or JSON), SVG charts and the run manifest.
//!
//! CSV files start with a `# schema: <id>` comment line followed by the
//! header. Reals are written with Rust's shortest round-trip formatting, so
//! parsing a cell back gives the identical `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Float(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Float(v) => serde_json::Number::from_f64(*v)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Cell::Int(v) => (*v).into(),
            Cell::Text(s) => s.clone().into(),
            Cell::Empty => serde_json::Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        // seeds may exceed i64; keep them exact as text
        if v <= i64::MAX as u64 {
            Cell::Int(v as i64)
        } else {
            Cell::Text(v.to_string())
        }
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub schema: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, schema: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            schema: schema.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf> {
        match format {
            Format::Csv => {
                let path = dir.join(format!("{}.csv", self.name));
                write_csv(&path, &self.schema, &self.columns, &self.rows)?;
                Ok(path)
            }
            Format::Json => {
                let path = dir.join(format!("{}.json", self.name));
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|r| serde_json::Value::Array(r.iter().map(Cell::to_json).collect()))
                    .collect();
                let doc = serde_json::json!({
                    "schema": self.schema,
                    "columns": self.columns,
                    "rows": rows,
                });
                write_text(&path, &serde_json::to_string_pretty(&doc)?)?;
                Ok(path)
            }
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv(path: &Path, schema: &str, header: &[String], rows: &[Vec<Cell>]) -> Result<()> {
    let mut buf = format!("# schema: {schema}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

/// A parsed CSV table: schema id, header and raw cells.
#[derive(Debug, Clone)]
pub struct CsvContents {
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvContents {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column(name).with_context(|| format!("no column {name}"))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().with_context(|| format!("bad float {:?}", r[c])))
            .collect()
    }
}

pub fn read_csv(path: &Path) -> Result<CsvContents> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let schema = first
        .strip_prefix("# schema: ")
        .with_context(|| format!("{} lacks a schema line", path.display()))?
        .to_string();
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(CsvContents { schema, header, rows })
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers only, no connecting line.
    pub markers: bool,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            markers: false,
        }
    }

    pub fn scatter(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.into(),
            points,
            markers: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64, log: bool) -> String {
    let v = if log { 10f64.powf(v) } else { v };
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn log_x(mut self) -> Self {
        self.log_x = true;
        self
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn project(&self, (x, y): (f64, f64)) -> Option<(f64, f64)> {
        let x = if self.log_x { x.log10() } else { x };
        let y = if self.log_y { y.log10() } else { y };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    /// SVG document text.
    pub fn render(&self) -> String {
        let (w, h) = (720.0, 460.0);
        let (left, right, top, bottom) = (80.0, 170.0, 40.0, 60.0);
        let pw = w - left - right;
        let ph = h - top - bottom;
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().filter_map(|&p| self.project(p)))
            .collect();
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            match (lo.is_finite(), hi > lo) {
                (false, _) => (0.0, 1.0),
                (true, true) => (lo, hi),
                (true, false) => (lo - 0.5, lo + 0.5),
            }
        };
        let (x0, x1) = bounds(|p| p.0);
        let (y0, y1) = bounds(|p| p.1);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            left + pw / 2.0,
            escape(&self.title)
        );
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
                top + ph + 18.0,
                tick_label(fx, self.log_x)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 6.0,
                sy(fy) + 4.0,
                tick_label(fy, self.log_y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}{}</text>"#,
            left + pw / 2.0,
            h - 15.0,
            escape(&self.x_label),
            if self.log_x { " (log)" } else { "" }
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{y}" text-anchor="middle" transform="rotate(-90 18 {y})">{}{}</text>"#,
            escape(&self.y_label),
            if self.log_y { " (log)" } else { "" },
            y = top + ph / 2.0
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let proj: Vec<(f64, f64)> = series
                .points
                .iter()
                .filter_map(|&p| self.project(p))
                .map(|(x, y)| (sx(x), sy(y)))
                .collect();
            if series.markers {
                for (x, y) in &proj {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}" fill-opacity="0.7"/>"#
                    );
                }
            } else if !proj.is_empty() {
                let path: Vec<String> = proj.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            let ly = top + 14.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="12" height="4" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                left + pw + 12.0,
                ly - 4.0,
                left + pw + 30.0,
                ly,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    /// Every seed used, keyed by a path such as `rep/0/data`.
    pub seeds: BTreeMap<String, u64>,
    pub library_version: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    /// CSV schema id per output file.
    pub schemas: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, f64>,
}

/// Collects outputs, seeds and tolerances for one run and writes the
/// manifest last.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub format: Format,
    manifest: RunManifest,
    start: Instant,
}

impl RunContext {
    pub fn new(out_dir: &Path, subcommand: &str, command_line: Vec<String>, format: Format) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            format,
            manifest: RunManifest {
                command_line,
                subcommand: subcommand.to_string(),
                config: serde_json::Value::Null,
                seeds: BTreeMap::new(),
                library_version: env!("CARGO_PKG_VERSION").to_string(),
                threads: rayon::current_num_threads(),
                wall_clock_seconds: 0.0,
                outputs: Vec::new(),
                schemas: BTreeMap::new(),
                tolerances: BTreeMap::new(),
            },
            start: Instant::now(),
        })
    }

    pub fn set_config(&mut self, config: &impl Serialize) -> Result<()> {
        self.manifest.config = serde_json::to_value(config)?;
        Ok(())
    }

    pub fn seed(&mut self, key: impl Into<String>, value: u64) {
        self.manifest.seeds.insert(key.into(), value);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.manifest.tolerances.insert(key.to_string(), value);
    }

    fn record(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.manifest.outputs.push(name);
    }

    pub fn table(&mut self, table: &Table) -> Result<PathBuf> {
        let path = table.write(&self.out_dir, self.format)?;
        self.record(&path);
        let key = path.file_name().unwrap().to_string_lossy().into_owned();
        self.manifest.schemas.insert(key, table.schema.clone());
        Ok(path)
    }

    pub fn chart(&mut self, name: &str, chart: &Chart) -> Result<PathBuf> {
        let path = self.out_dir.join(format!("{name}.svg"));
        chart.write(&path)?;
        self.record(&path);
        Ok(path)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.out_dir.join(format!("{name}.json"));
        write_text(&path, &serde_json::to_string_pretty(value)?)?;
        self.record(&path);
        Ok(path)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Writes `manifest.json` and returns the final manifest.
    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        let path = self.out_dir.join("manifest.json");
        write_text(&path, &serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}
