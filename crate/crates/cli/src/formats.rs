//! Plain-text data formats.
//!
//! Numeric tables are long-format CSV with a header row and 1-based ids:
//!
//! | file       | columns                                   |
//! |------------|-------------------------------------------|
//! | curves     | `sample_id,covariate_id,t,value`          |
//! | scores     | `sample_id,covariate_id,d,score`          |
//! | responses  | `sample_id,y`                             |
//! | coefficients | `covariate_id,d,value`                  |
//! | fitted     | `sample_id,fitted`                        |
//!
//! Rows may appear in any order but every id combination must occur exactly
//! once. Floats are written with 17 significant digits so that reading a file
//! back reproduces the values bit for bit.
//!
//! A partition file holds one group per line as comma-separated 1-based
//! covariate indices. Blank lines and lines starting with `#` are ignored.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use shapealign::detect::{CoefficientScores, GroupingStructure};
use shapealign::funcdata::{CurveSet, ScoreMatrix};

use crate::error::{CliError, CliResult};

pub const CURVES_HEADER: [&str; 4] = ["sample_id", "covariate_id", "t", "value"];
pub const SCORES_HEADER: [&str; 4] = ["sample_id", "covariate_id", "d", "score"];
pub const RESPONSES_HEADER: [&str; 2] = ["sample_id", "y"];

/// 17 significant digits in scientific form; round-trips every `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct Row {
    line: u64,
    record: csv::StringRecord,
}

fn read_rows(path: &Path, header: &[&str]) -> CliResult<Vec<Row>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let found = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header '{}', found '{}'", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let record = rec.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        rows.push(Row { line, record });
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows".into()));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        kind => parse_err(path, line, format!("{kind:?}")),
    }
}

fn parse_err(path: &Path, line: u64, msg: String) -> CliError {
    CliError::Parse { path: path.to_path_buf(), line, msg }
}

impl Row {
    fn field<T: FromStr>(&self, path: &Path, idx: usize, name: &str) -> CliResult<T> {
        let raw = &self.record[idx];
        raw.parse()
            .map_err(|_| parse_err(path, self.line, format!("cannot parse {name} '{raw}'")))
    }

    fn id(&self, path: &Path, idx: usize, name: &str) -> CliResult<usize> {
        let v: usize = self.field(path, idx, name)?;
        if v == 0 {
            return Err(parse_err(path, self.line, format!("{name} is 1-based, found 0")));
        }
        Ok(v)
    }

    fn float(&self, path: &Path, idx: usize, name: &str) -> CliResult<f64> {
        let v: f64 = self.field(path, idx, name)?;
        if !v.is_finite() {
            return Err(parse_err(path, self.line, format!("{name} is not finite")));
        }
        Ok(v)
    }
}

/// Dense fill of a long table; rejects duplicates and reports the first gap.
struct Filler {
    values: Vec<Option<f64>>,
}

impl Filler {
    fn new(len: usize) -> Self {
        Self { values: vec![None; len] }
    }

    fn put(&mut self, path: &Path, line: u64, idx: usize, v: f64) -> CliResult<()> {
        if self.values[idx].replace(v).is_some() {
            return Err(parse_err(path, line, "duplicate entry".into()));
        }
        Ok(())
    }

    fn finish(self, path: &Path, describe: impl Fn(usize) -> String) -> CliResult<Vec<f64>> {
        if let Some(gap) = self.values.iter().position(Option::is_none) {
            return Err(CliError::Usage(format!("{}: missing entry for {}", path.display(), describe(gap))));
        }
        Ok(self.values.into_iter().flatten().collect())
    }
}

pub fn read_scores(path: &Path) -> CliResult<ScoreMatrix<f64>> {
    let rows = read_rows(path, &SCORES_HEADER)?;
    let mut parsed = Vec::with_capacity(rows.len());
    for r in &rows {
        parsed.push((
            r.line,
            r.id(path, 0, "sample_id")?,
            r.id(path, 1, "covariate_id")?,
            r.id(path, 2, "d")?,
            r.float(path, 3, "score")?,
        ));
    }
    let n = parsed.iter().map(|r| r.1).max().unwrap_or(0);
    let p = parsed.iter().map(|r| r.2).max().unwrap_or(0);
    let dim = parsed.iter().map(|r| r.3).max().unwrap_or(0);
    let mut fill = Filler::new(n * p * dim);
    for &(line, i, j, d, v) in &parsed {
        fill.put(path, line, ((i - 1) * p + j - 1) * dim + d - 1, v)?;
    }
    let flat = fill.finish(path, |k| {
        format!("sample {}, covariate {}, d {}", k / (p * dim) + 1, (k / dim) % p + 1, k % dim + 1)
    })?;
    let mut scores = ScoreMatrix::zeros(n, p, dim);
    for (k, v) in flat.into_iter().enumerate() {
        scores.set(k / (p * dim), (k / dim) % p, k % dim, v);
    }
    Ok(scores)
}

/// Curves in sample-major order, with the sorted grid and the number of covariates.
pub struct CurveTable {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub n_samples: usize,
    pub n_covariates: usize,
}

impl CurveTable {
    pub fn into_curve_set(self, responses: Vec<f64>) -> CliResult<CurveSet<f64>> {
        if responses.len() != self.n_samples {
            return Err(CliError::Usage(format!(
                "curves have {} samples but responses have {}",
                self.n_samples,
                responses.len()
            )));
        }
        Ok(CurveSet::new(self.grid, self.values, responses, self.n_covariates)?)
    }
}

pub fn read_curves(path: &Path) -> CliResult<CurveTable> {
    let rows = read_rows(path, &CURVES_HEADER)?;
    let mut parsed = Vec::with_capacity(rows.len());
    for r in &rows {
        parsed.push((
            r.line,
            r.id(path, 0, "sample_id")?,
            r.id(path, 1, "covariate_id")?,
            r.float(path, 2, "t")?,
            r.float(path, 3, "value")?,
        ));
    }
    let mut grid: Vec<f64> = parsed.iter().map(|r| r.3).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let n = parsed.iter().map(|r| r.1).max().unwrap_or(0);
    let p = parsed.iter().map(|r| r.2).max().unwrap_or(0);
    let len = grid.len();
    let mut fill = Filler::new(n * p * len);
    for &(line, i, j, t, v) in &parsed {
        let k = grid.binary_search_by(|g| g.total_cmp(&t)).expect("grid holds every t");
        fill.put(path, line, ((i - 1) * p + j - 1) * len + k, v)?;
    }
    let values = fill.finish(path, |k| {
        format!("sample {}, covariate {}, t = {}", k / (p * len) + 1, (k / len) % p + 1, grid[k % len])
    })?;
    Ok(CurveTable { grid, values, n_samples: n, n_covariates: p })
}

pub fn read_responses(path: &Path) -> CliResult<Vec<f64>> {
    let rows = read_rows(path, &RESPONSES_HEADER)?;
    let n = rows.iter().map(|r| r.id(path, 0, "sample_id")).collect::<CliResult<Vec<_>>>()?;
    let mut fill = Filler::new(n.iter().copied().max().unwrap_or(0));
    for (r, i) in rows.iter().zip(n) {
        fill.put(path, r.line, i - 1, r.float(path, 1, "y")?)?;
    }
    fill.finish(path, |k| format!("sample {}", k + 1))
}

fn write_table<R>(path: &Path, header: &[&str], rows: R) -> CliResult<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let io = |e: std::io::Error| CliError::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io(source),
        kind => CliError::Usage(format!("{}: {kind:?}", path.display())),
    })?;
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        kind => CliError::Usage(format!("{}: {kind:?}", path.display())),
    };
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush().map_err(io)
}

pub fn write_curves(path: &Path, curves: &CurveSet<f64>) -> CliResult<()> {
    let grid = curves.grid();
    let rows = (0..curves.n_samples()).flat_map(|n| {
        (0..curves.n_covariates()).flat_map(move |j| {
            grid.iter().zip(curves.curve(n, j)).map(move |(t, v)| {
                vec![(n + 1).to_string(), (j + 1).to_string(), fmt_float(*t), fmt_float(*v)]
            })
        })
    });
    write_table(path, &CURVES_HEADER, rows)
}

pub fn write_scores(path: &Path, scores: &ScoreMatrix<f64>) -> CliResult<()> {
    let (p, dim) = (scores.n_covariates(), scores.dim());
    let rows = (0..scores.n_samples()).flat_map(|n| {
        (0..p).flat_map(move |j| {
            (0..dim).map(move |d| {
                vec![(n + 1).to_string(), (j + 1).to_string(), (d + 1).to_string(), fmt_float(scores.get(n, j, d))]
            })
        })
    });
    write_table(path, &SCORES_HEADER, rows)
}

pub fn write_responses(path: &Path, y: &[f64]) -> CliResult<()> {
    write_table(path, &RESPONSES_HEADER, y.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), fmt_float(*v)]))
}

pub fn write_fitted(path: &Path, fitted: &[f64]) -> CliResult<()> {
    write_table(
        path,
        &["sample_id", "fitted"],
        fitted.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), fmt_float(*v)]),
    )
}

pub fn write_coefficients(path: &Path, b: &CoefficientScores<f64>) -> CliResult<()> {
    let rows = b.rows().into_iter().enumerate().flat_map(|(j, row)| {
        row.into_iter()
            .enumerate()
            .map(move |(d, v)| vec![(j + 1).to_string(), (d + 1).to_string(), fmt_float(v)])
    });
    write_table(path, &["covariate_id", "d", "value"], rows)
}

fn parse_group(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<usize>().map_err(|_| format!("cannot parse covariate index '{s}'"))
        })
        .collect()
}

/// Inline partition such as `1,2,3;4,5`.
pub fn parse_partition(text: &str) -> CliResult<GroupingStructure> {
    let blocks = text
        .split(';')
        .filter(|g| !g.trim().is_empty())
        .map(parse_group)
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Usage)?;
    Ok(GroupingStructure::from_one_based(blocks)?)
}

pub fn read_partition(path: &Path) -> CliResult<GroupingStructure> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut blocks = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        blocks.push(parse_group(line).map_err(|msg| parse_err(path, i as u64 + 1, msg))?);
    }
    GroupingStructure::from_one_based(blocks)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn format_partition(g: &GroupingStructure) -> String {
    g.to_one_based()
        .iter()
        .map(|b| b.iter().map(ToString::to_string).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

pub fn write_partition(path: &Path, g: &GroupingStructure) -> CliResult<()> {
    write_text(path, &format_partition(g))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}
