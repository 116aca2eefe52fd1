//! Trajectory and grid-function CSV files.
//!
//! Trajectories use the header `t,x1,...,xn` with one row per grid point.
//! Values are written in the shortest decimal form that reads back to the
//! same double.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::nabla::GridFunction;
use crate::timescale::TimeScale;
use crate::variational::{Problem, Trajectory};

use super::CliError;

fn file_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn write_trajectory<W: Write>(x: &Trajectory, out: W) -> Result<(), csv::Error> {
    let gf = x.grid_function();
    let ts = gf.time_scale();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=gf.dim()).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for (i, &t) in ts.points().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(gf.value(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(x: &Trajectory, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| file_err(path, e))?;
    write_trajectory(x, file).map_err(|e| file_err(path, e))
}

/// Rows of `t` followed by `width` values; the `t` column must reproduce the
/// grid exactly.
fn read_rows<R: Read>(input: R, ts: &TimeScale, width: usize) -> Result<Vec<f64>, String> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.len() != width + 1 {
        return Err(format!("expected {} columns, found {}", width + 1, header.len()));
    }
    let mut values = Vec::with_capacity(ts.len() * width);
    let mut row_count = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parse = |k: usize| -> Result<f64, String> {
            let field = rec.get(k).unwrap_or("");
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("row {}: {field:?} is not a finite number", line + 2))
        };
        let t = parse(0)?;
        if row_count >= ts.len() || ts.point(row_count) != t {
            return Err(format!("row {}: t = {t} does not match the time scale", line + 2));
        }
        for k in 1..=width {
            values.push(parse(k)?);
        }
        row_count += 1;
    }
    if row_count != ts.len() {
        return Err(format!("expected {} rows, found {row_count}", ts.len()));
    }
    Ok(values)
}

pub fn read_trajectory<R: Read>(input: R, p: &Problem) -> Result<Trajectory, String> {
    let values = read_rows(input, p.time_scale(), p.dim())?;
    Trajectory::from_values(p, values).map_err(|e| e.to_string())
}

pub fn load_trajectory(path: &Path, p: &Problem) -> Result<Trajectory, CliError> {
    let file = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
    read_trajectory(file, p).map_err(|e| file_err(path, e))
}

/// Scalar grid function with columns `t,value`.
pub fn load_function(path: &Path, ts: &Arc<TimeScale>) -> Result<GridFunction, CliError> {
    let file = std::fs::File::open(path).map_err(|e| file_err(path, e))?;
    let values = read_rows(file, ts, 1).map_err(|e| file_err(path, e))?;
    GridFunction::from_values(Arc::clone(ts), 1, values).map_err(|e| file_err(path, e))
}
