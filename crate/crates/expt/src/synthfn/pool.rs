//! Design-pool CSV files and the episode debug dump.

use std::path::Path;

use super::episode::Episode;
use super::SynthError;
use crate::nncore::tensor::Tensor;

/// Read a pool file: header `x_0,...,x_{d-1}`, one design per row.
pub fn read_pool_csv(path: &Path) -> Result<Tensor<f64>, SynthError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let d = headers.len();
    for (i, h) in headers.iter().enumerate() {
        let expect = format!("x_{i}");
        if h != expect {
            return Err(SynthError::InvalidSpec(format!(
                "pool header column {i} is {h:?}, expected {expect:?}"
            )));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != d {
            return Err(SynthError::InvalidSpec(format!(
                "pool row {r} has {} fields, expected {d}",
                record.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                SynthError::InvalidSpec(format!("pool row {r}: unparseable value {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(SynthError::NonFiniteInput { row: r });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(SynthError::EmptyPool);
    }
    Ok(Tensor::from_vec(rows, d, data))
}

/// Write a pool file in the same format `read_pool_csv` expects.
pub fn write_pool_csv(path: &Path, pool: &Tensor<f64>) -> Result<(), SynthError> {
    let mut writer = csv::Writer::from_path(path)?;
    let header: Vec<String> = (0..pool.cols()).map(|i| format!("x_{i}")).collect();
    writer.write_record(&header)?;
    for r in 0..pool.rows() {
        let row: Vec<String> = pool.row(r).iter().map(|v| format!("{v}")).collect();
        writer.write_record(&row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Dump one episode for inspection: pool columns plus `y` and
/// `role ∈ {context, target}`.
pub fn write_episode_csv(path: &Path, episode: &Episode) -> Result<(), SynthError> {
    let d = episode.dimension();
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..d).map(|i| format!("x_{i}")).collect();
    header.push("y".into());
    header.push("role".into());
    writer.write_record(&header)?;
    let mut emit = |x: &Tensor<f64>, y: &[f64], role: &str| -> Result<(), csv::Error> {
        for r in 0..x.rows() {
            let mut row: Vec<String> = x.row(r).iter().map(|v| format!("{v}")).collect();
            row.push(format!("{}", y[r]));
            row.push(role.into());
            writer.write_record(&row)?;
        }
        Ok(())
    };
    emit(&episode.context_x, &episode.context_y, "context")?;
    emit(&episode.target_x, &episode.target_y, "target")?;
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
