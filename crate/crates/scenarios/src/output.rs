//! CSV files written by the runners. Numbers use Rust's shortest round-trip
//! formatting, so reading a file back gives the written values exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use multilane_core::micro::LaneChangeEvent;
use multilane_core::DensityField64;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-lane `(mean, std)` at a sequence of times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeanSeries {
    pub lanes: usize,
    pub times: Vec<f64>,
    pub stats: Vec<Vec<(f64, f64)>>,
}

impl MeanSeries {
    pub fn new(lanes: usize) -> Self {
        Self {
            lanes,
            ..Self::default()
        }
    }

    pub fn push(&mut self, t: f64, stats: Vec<(f64, f64)>) {
        debug_assert_eq!(stats.len(), self.lanes);
        self.times.push(t);
        self.stats.push(stats);
    }

    pub fn last(&self) -> Option<&[(f64, f64)]> {
        self.stats.last().map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), OutputError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn snapshots_csv(lanes: usize, snapshots: &[DensityField64]) -> String {
    let mut s = String::from("t,x");
    for j in 1..=lanes {
        let _ = write!(s, ",rho_{j}");
    }
    s.push('\n');
    for field in snapshots {
        for i in 0..field.grid.cells {
            let _ = write!(s, "{:?},{:?}", field.time, field.grid.center(i));
            for lane in &field.rho {
                let _ = write!(s, ",{:?}", lane[i]);
            }
            s.push('\n');
        }
    }
    s
}

/// Header `t,x,rho_1,...,rho_J`, one row per cell per snapshot.
pub fn write_snapshots(path: &Path, lanes: usize, snapshots: &[DensityField64]) -> Result<(), OutputError> {
    write_file(path, &snapshots_csv(lanes, snapshots))
}

pub fn means_csv(series: &MeanSeries) -> String {
    let mut s = String::from("t");
    for j in 1..=series.lanes {
        let _ = write!(s, ",mean_{j},std_{j}");
    }
    s.push('\n');
    for (t, stats) in series.times.iter().zip(&series.stats) {
        let _ = write!(s, "{t:?}");
        for (m, sd) in stats {
            let _ = write!(s, ",{m:?},{sd:?}");
        }
        s.push('\n');
    }
    s
}

/// Header `t,mean_1,std_1,...,mean_J,std_J`.
pub fn write_means(path: &Path, series: &MeanSeries) -> Result<(), OutputError> {
    write_file(path, &means_csv(series))
}

pub fn events_csv(events: &[LaneChangeEvent<f64>]) -> String {
    let mut s = String::from("t,vehicle,from_lane,to_lane,x\n");
    for e in events {
        let _ = writeln!(
            s,
            "{:?},{},{},{},{:?}",
            e.time, e.vehicle, e.from_lane, e.to_lane, e.position
        );
    }
    s
}

/// Header `t,vehicle,from_lane,to_lane,x`.
pub fn write_events(path: &Path, events: &[LaneChangeEvent<f64>]) -> Result<(), OutputError> {
    write_file(path, &events_csv(events))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    write_file(path, text)
}

/// Numeric CSV table: header names and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn parse_table(text: &str, path: &Path) -> Result<Table, OutputError> {
    let malformed = |line: usize, message: String| OutputError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| malformed(1, "missing header".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| malformed(i + 2, e.to_string()))?;
        if row.len() != header.len() {
            return Err(malformed(
                i + 2,
                format!("{} fields, header has {}", row.len(), header.len()),
            ));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path) -> Result<Table, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_table(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use multilane_core::Grid64;

    fn field(values: &[f64]) -> DensityField64 {
        let grid = Grid64::new(0.0, 1.0, 4).unwrap();
        DensityField64::uniform(grid, values, 1.0).unwrap()
    }

    #[test]
    fn uniform_snapshot_has_header_and_one_row_per_cell() {
        let text = snapshots_csv(2, &[field(&[0.3, 0.1])]);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x,rho_1,rho_2");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0.0,0.125,0.3,0.1");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn empty_series_is_header_only() {
        assert_eq!(snapshots_csv(3, &[]), "t,x,rho_1,rho_2,rho_3\n");
        assert_eq!(means_csv(&MeanSeries::new(1)), "t,mean_1,std_1\n");
        assert_eq!(events_csv(&[]), "t,vehicle,from_lane,to_lane,x\n");
    }

    #[test]
    fn values_round_trip_exactly() {
        let awkward = [1.0 / 3.0, 2.0f64.sqrt() / 7.0, 1e-300, 0.1 + 0.2];
        let mut series = MeanSeries::new(2);
        series.push(awkward[0], vec![(awkward[1], awkward[2]), (awkward[3], 0.0)]);
        let table = parse_table(&means_csv(&series), Path::new("mem")).unwrap();
        assert_eq!(table.rows, vec![vec![awkward[0], awkward[1], awkward[2], awkward[3], 0.0]]);
        assert_eq!(table.column("mean_2").unwrap(), vec![awkward[3]]);
    }

    #[test]
    fn malformed_row_names_the_line() {
        let err = parse_table("a,b\n1,2\n3\n", Path::new("x.csv")).unwrap_err();
        assert!(err.to_string().starts_with("x.csv:3:"), "{err}");
    }
}
