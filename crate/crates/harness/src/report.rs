//! Report files: pretty JSON, JSONL and plain-text summary tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_err, Result};
use crate::eval::{EvalReport, HeatmapReport};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Write `bytes` through a sibling temporary file and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Write `name.json` (full report) and `name.trials.jsonl` (one trial per line).
pub fn write_eval(dir: &Path, name: &str, report: &EvalReport) -> Result<()> {
    write_json(&dir.join(format!("{name}.json")), report)?;
    write_jsonl(&dir.join(format!("{name}.trials.jsonl")), &report.records)
}

pub fn eval_table(reports: &[EvalReport]) -> String {
    let mut s = format!(
        "{:<24} {:>6} {:>8} {:>17} {:>8} {:>8} {:>9} {:>9} {:>7}\n",
        "label", "N", "success", "CI", "pos", "rot", "pos_err", "rot_err", "faults"
    );
    for r in reports {
        s.push_str(&format!(
            "{:<24} {:>6} {:>7.1}% {:>7.1}%-{:>6.1}% {:>7.1}% {:>7.1}% {:>7.2}cm {:>7.1}deg {:>7}\n",
            r.label,
            r.trials,
            100.0 * r.success_rate,
            100.0 * r.ci_low,
            100.0 * r.ci_high,
            100.0 * r.position_success_rate,
            100.0 * r.orientation_success_rate,
            100.0 * r.mean_pos_err,
            r.mean_rot_err.to_degrees(),
            r.faults
        ));
    }
    s
}

pub fn heatmap_table(h: &HeatmapReport) -> String {
    let mut s = format!("{:>10}", "pos \\ rot");
    for r in &h.orientation_thresholds_deg {
        s.push_str(&format!(" {:>7}", format!("{r}deg")));
    }
    s.push('\n');
    for (p, row) in h.position_thresholds.iter().zip(&h.success) {
        s.push_str(&format!("{:>10}", format!("{}cm", p * 100.0)));
        for v in row {
            s.push_str(&format!(" {:>6.1}%", 100.0 * v));
        }
        s.push('\n');
    }
    s
}
