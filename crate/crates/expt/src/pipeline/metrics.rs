//! The shared metrics ledger: one CSV per output directory, one row per
//! adaptation run.
//!
//! The first line pins the generator hash so rows from different task
//! distributions can never be silently mixed; the header follows, then data
//! rows. Appends rewrite the whole file to a temp path and rename it into
//! place, so readers never observe a torn write.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

/// One adaptation run's summary. Column order is the field order here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub task: String,
    pub kernel_kind: String,
    pub seed: u64,
    pub checkpoint_step: u64,
    pub q: usize,
    pub score_median: f64,
    pub score_max: f64,
    pub score_mean: f64,
    pub few_shot_best: f64,
    pub wall_time_s: f64,
}

pub const METRICS_HEADER: &str = "run_id,task,kernel_kind,seed,checkpoint_step,q,\
score_median,score_max,score_mean,few_shot_best,wall_time_s";

fn hash_line(generator_hash: &str) -> String {
    format!("# generator_hash={generator_hash}")
}

fn serialize_rows(rows: &[MetricsRow]) -> Result<String, PipelineError> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| PipelineError::Io(format!("metrics encode: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| PipelineError::Io(format!("metrics encode: {e}")))?;
    String::from_utf8(bytes).map_err(|e| PipelineError::Io(format!("metrics encode: {e}")))
}

/// Append one row, creating the file (hash line + header) on first use.
/// Existing files must carry the same generator hash. The rewrite lands via
/// temp-file rename, so a crash never leaves a half-written ledger.
pub fn emit_metrics(
    path: &Path,
    row: &MetricsRow,
    generator_hash: &str,
) -> Result<(), PipelineError> {
    let mut content = if path.exists() {
        let (existing_hash, _) = read_metrics(path)?;
        if existing_hash != generator_hash {
            return Err(PipelineError::Config(format!(
                "{}: generator hash {} does not match this run's {}; \
                 point the run at a fresh metrics file",
                path.display(),
                &existing_hash[..existing_hash.len().min(8)],
                &generator_hash[..generator_hash.len().min(8)],
            )));
        }
        std::fs::read_to_string(path).map_err(|e| PipelineError::Io(e.to_string()))?
    } else {
        format!("{}\n{METRICS_HEADER}\n", hash_line(generator_hash))
    };
    if !content.ends_with('\n') {
        content.push('\n');
    }
    content.push_str(&serialize_rows(std::slice::from_ref(row))?);

    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(e.to_string()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("metrics.csv")
    ));
    std::fs::write(&tmp, content).map_err(|e| PipelineError::Io(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::Io(e.to_string()))?;
    Ok(())
}

/// Load a metrics ledger: its generator hash and all rows.
pub fn read_metrics(path: &Path) -> Result<(String, Vec<MetricsRow>), PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| PipelineError::Io(format!("{}: empty metrics file", path.display())))?;
    let hash = first
        .strip_prefix("# generator_hash=")
        .ok_or_else(|| {
            PipelineError::Io(format!(
                "{}: expected a generator-hash line, got {first:?}",
                path.display()
            ))
        })?
        .to_string();
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(rest.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?);
    }
    Ok((hash, rows))
}

/// `mean ± population-std` at millipoint precision, e.g. `0.620 ± 0.016`.
pub fn format_mean_std(values: &[f64]) -> String {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    format!("{:.3} ± {:.3}", mean, var.sqrt())
}

/// Aggregate rows into one line per (method, task, kernel, checkpoint, q)
/// group: seed count and mean ± std of each score column.
pub fn summarize_rows(rows: &[MetricsRow]) -> String {
    use std::collections::BTreeMap;
    // The method is the run_id prefix before '/', by construction.
    let mut groups: BTreeMap<(String, String, String, u64, usize), Vec<&MetricsRow>> =
        BTreeMap::new();
    for row in rows {
        let method = row.run_id.split('/').next().unwrap_or("?").to_string();
        groups
            .entry((method, row.task.clone(), row.kernel_kind.clone(), row.checkpoint_step, row.q))
            .or_default()
            .push(row);
    }
    let mut out = String::new();
    for ((method, task, kernel, step, q), members) in groups {
        let col = |f: fn(&MetricsRow) -> f64| -> Vec<f64> { members.iter().map(|r| f(r)).collect() };
        out.push_str(&format!(
            "{method} on {task} (kernel {kernel}, step {step}, q {q}, {} seeds): \
             median {} | max {} | mean {} | few-shot best {}\n",
            members.len(),
            format_mean_std(&col(|r| r.score_median)),
            format_mean_std(&col(|r| r.score_max)),
            format_mean_std(&col(|r| r.score_mean)),
            format_mean_std(&col(|r| r.few_shot_best)),
        ));
    }
    out
}
