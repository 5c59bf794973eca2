//! Tables, checks and the files an experiment writes: CSV rows, a JSON
//! summary and optional SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::EstimatorResult;
use crate::transport::{rate_fit, RateFit};

/// How a column is written.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// A parameter of the row: `name`.
    Param,
    /// Exact value: `name`, `name_se` = "exact".
    Exact,
    /// Monte Carlo value: `name`, `name_se`, `name_n`.
    MonteCarlo,
    /// Empirical distance without a standard error: `name`, `name_n`.
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: Kind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub value: f64,
    pub se: f64,
    pub n: usize,
}

impl Cell {
    pub fn value(v: f64) -> Self {
        Self { value: v, se: 0.0, n: 0 }
    }

    pub fn mc(r: &EstimatorResult) -> Self {
        Self {
            value: r.estimate,
            se: r.std_error,
            n: r.n,
        }
    }

    pub fn mc_raw(value: f64, se: f64, n: usize) -> Self {
        Self { value, se, n }
    }

    pub fn empirical(value: f64, n: usize) -> Self {
        Self { value, se: 0.0, n }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, Kind)]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|(n, k)| Column { name: (*n).into(), kind: *k }).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("table {} has no column {name}", self.name)))?;
        Ok(self.rows.iter().map(|r| r[i].value).collect())
    }

    fn header(&self) -> Vec<String> {
        let mut h = Vec::new();
        for c in &self.columns {
            h.push(c.name.clone());
            match c.kind {
                Kind::Param => {}
                Kind::Exact => h.push(format!("{}_se", c.name)),
                Kind::MonteCarlo => {
                    h.push(format!("{}_se", c.name));
                    h.push(format!("{}_n", c.name));
                }
                Kind::Empirical => h.push(format!("{}_n", c.name)),
            }
        }
        h
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut rec = Vec::new();
            for (c, cell) in self.columns.iter().zip(row) {
                rec.push(fmt_f64(cell.value));
                match c.kind {
                    Kind::Param => {}
                    Kind::Exact => rec.push("exact".into()),
                    Kind::MonteCarlo => {
                        rec.push(fmt_f64(cell.se));
                        rec.push(cell.n.to_string());
                    }
                    Kind::Empirical => rec.push(cell.n.to_string()),
                }
            }
            w.write_record(rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Read one numeric column back from a CSV file by header name.
pub fn read_csv_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let i = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no column {name}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: f64 = rec[i]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{}: '{}' is not a number", path.display(), &rec[i])))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// A log-log fit of column `y` against column `x` of `table`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    pub table: String,
    pub x: String,
    pub y: String,
    pub fit: RateFit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
    pub config: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub provenance: Provenance,
    pub constants: BTreeMap<String, f64>,
    pub columns: BTreeMap<String, Vec<Column>>,
    pub fits: Vec<FitRecord>,
    pub checks: Vec<Check>,
    pub caveats: Vec<String>,
    pub files: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&FitRecord> {
        self.fits.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub name: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_log: bool,
    pub series: Vec<Series>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

impl Plot {
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 420.0, 60.0);
        let tx = |v: f64| if self.log_log { v.ln() } else { v };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(x, y)| !self.log_log || (*x > 0.0 && *y > 0.0))
            .map(|(x, y)| (tx(x), tx(y)))
            .collect();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, self.title);
        if pts.is_empty() {
            s.push_str("</svg>\n");
            return s;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in &pts {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let _ = writeln!(
            s,
            r#"<path d="M{pad} {} H{} M{pad} {} V{pad}" stroke="black" fill="none"/>"#,
            h - pad,
            w - pad,
            h - pad
        );
        let scale = if self.log_log { " (log-log)" } else { "" };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}{scale}</text>"#,
            w / 2.0,
            h - 20.0,
            self.x_label
        );
        let _ = writeln!(
            s,
            r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{}</text>"#,
            h / 2.0,
            h / 2.0,
            self.y_label
        );
        let inv = |v: f64| if self.log_log { v.exp() } else { v };
        for (v, anchor, x, y) in [(x0, "start", px(x0), h - pad + 16.0), (x1, "end", px(x1), h - pad + 16.0)] {
            let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{:.3e}</text>"#, inv(v));
        }
        for (v, y) in [(y0, py(y0)), (y1, py(y1))] {
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{:.3e}</text>"#, pad - 4.0, inv(v));
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let d: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| !self.log_log || (*x > 0.0 && *y > 0.0))
                .enumerate()
                .map(|(i, (x, y))| format!("{}{:.2} {:.2}", if i == 0 { "M" } else { "L" }, px(tx(*x)), py(tx(*y))))
                .collect();
            if !d.is_empty() {
                let _ = writeln!(s, r#"<path d="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#, d.join(" "));
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                w - pad - 150.0,
                pad + 16.0 * k as f64,
                series.label
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Everything one experiment produces, before it is written.
#[derive(Clone, Debug)]
pub struct Output {
    pub experiment: String,
    pub provenance: Provenance,
    pub constants: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    pub fits: Vec<FitRecord>,
    pub checks: Vec<Check>,
    pub caveats: Vec<String>,
    pub plots: Vec<Plot>,
}

impl Output {
    pub fn new(experiment: &str, provenance: Provenance) -> Self {
        Self {
            experiment: experiment.into(),
            provenance,
            constants: BTreeMap::new(),
            tables: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            caveats: Vec::new(),
            plots: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no table {name}")))
    }

    /// Fit `y` against `x` from a table already added.
    pub fn add_fit(&mut self, name: &str, table: &str, x: &str, y: &str) -> Result<RateFit> {
        let t = self.table(table)?;
        let pts: Vec<(f64, f64)> = t.column(x)?.into_iter().zip(t.column(y)?).collect();
        let fit = rate_fit(&pts)?;
        self.fits.push(FitRecord {
            name: name.into(),
            table: table.into(),
            x: x.into(),
            y: y.into(),
            fit: fit.clone(),
        });
        Ok(fit)
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, pass, detail));
    }

    /// Write CSV tables, recompute every fit from the written files, then write
    /// the JSON summary and plots.
    pub fn finish(mut self, dir: &Path) -> Result<Report> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for t in &self.tables {
            let name = format!("{}_{}", self.experiment, t.file_name());
            fs::write(dir.join(&name), t.to_csv()?)?;
            files.push(name);
        }
        let mut reread = Vec::new();
        for f in &self.fits {
            let path = dir.join(format!("{}_{}.csv", self.experiment, f.table));
            let xs = read_csv_column(&path, &f.x)?;
            let ys = read_csv_column(&path, &f.y)?;
            let again = rate_fit(&xs.into_iter().zip(ys).collect::<Vec<_>>())?;
            let diff = (again.slope - f.fit.slope).abs().max((again.intercept - f.fit.intercept).abs());
            reread.push(Check::new(
                &format!("csv re-read fit {}", f.name),
                diff <= 1e-9,
                format!("slope {} vs {}", fmt_f64(again.slope), fmt_f64(f.fit.slope)),
            ));
        }
        self.checks.extend(reread);
        for p in &self.plots {
            let name = format!("{}_{}.svg", self.experiment, p.name);
            fs::write(dir.join(&name), p.to_svg())?;
            files.push(name);
        }
        let json_name = format!("{}.json", self.experiment);
        files.push(json_name.clone());
        let report = Report {
            experiment: self.experiment.clone(),
            provenance: self.provenance.clone(),
            constants: self.constants.clone(),
            columns: self.tables.iter().map(|t| (t.name.clone(), t.columns.clone())).collect(),
            fits: self.fits.clone(),
            checks: self.checks.clone(),
            caveats: self.caveats.clone(),
            files,
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        fs::write(dir.join(json_name), text)?;
        Ok(report)
    }
}

/// Files written by [`Output::finish`] for `experiment` in `dir`.
pub fn output_paths(dir: &Path, report: &Report) -> Vec<PathBuf> {
    report.files.iter().map(|f| dir.join(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Table::new(
            "t",
            &[("x", Kind::Param), ("e", Kind::Exact), ("m", Kind::MonteCarlo), ("w", Kind::Empirical)],
        );
        let vals = [0.1, 1.0 / 3.0, 2.5e-17, 123456.789];
        for v in vals {
            t.push(vec![
                Cell::value(v),
                Cell::value(v * 2.0),
                Cell::mc_raw(v, 0.01, 10),
                Cell::empirical(v, 5),
            ])
            .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, t.to_csv().unwrap()).unwrap();
        assert_eq!(read_csv_column(&p, "x").unwrap(), vals.to_vec());
        assert_eq!(read_csv_column(&p, "m_n").unwrap(), vec![10.0; 4]);
        let header = t.to_csv().unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "x,e,e_se,m,m_se,m_n,w,w_n");
        assert!(t.push(vec![Cell::value(1.0)]).is_err());
    }

    #[test]
    fn finish_writes_files_and_rechecks_fits() {
        let mut out = Output::new(
            "demo",
            Provenance {
                seed: 1,
                version: "0".into(),
                config: String::new(),
            },
        );
        let mut t = Table::new("rows", &[("n", Kind::Param), ("v", Kind::Exact)]);
        for n in [10.0, 20.0, 40.0f64] {
            t.push(vec![Cell::value(n), Cell::value(n.powf(-0.5))]).unwrap();
        }
        out.tables.push(t);
        let f = out.add_fit("v vs n", "rows", "n", "v").unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        out.plots.push(Plot {
            name: "v".into(),
            title: "v".into(),
            x_label: "n".into(),
            y_label: "v".into(),
            log_log: true,
            series: vec![Series {
                label: "v".into(),
                points: vec![(10.0, 1.0), (20.0, 0.5)],
            }],
        });
        let dir = tempfile::tempdir().unwrap();
        let r = out.finish(dir.path()).unwrap();
        assert!(r.passed());
        assert_eq!(r.files, vec!["demo_rows.csv", "demo_v.svg", "demo.json"]);
        for p in output_paths(dir.path(), &r) {
            assert!(p.exists());
        }
    }
}
