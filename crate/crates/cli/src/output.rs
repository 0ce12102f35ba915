use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use doc_coord_core::Trajectory;
use serde::Serialize;

use crate::CommonArgs;

pub const OUT_ENV: &str = "DOC_COORD_OUT";
const DEFAULT_OUT: &str = "doc-coord-out";

/// `--out`, then `$DOC_COORD_OUT`, then the scenario's own setting.
pub fn output_dir(args: &CommonArgs, configured: Option<&Path>) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| configured.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

pub fn write_trajectory(dir: &Path, name: &str, traj: &Trajectory) -> Result<PathBuf> {
    let (path, mut out) = create(dir, name)?;
    traj.write_csv(&mut out)
        .and_then(|_| out.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Time column plus one column per labelled series, all sampled on `times`.
pub fn write_columns(
    dir: &Path,
    name: &str,
    times: &[f64],
    columns: &[(String, Vec<f64>)],
) -> Result<PathBuf> {
    let (path, mut out) = create(dir, name)?;
    let mut write = || -> std::io::Result<()> {
        let header: Vec<&str> = std::iter::once("t")
            .chain(columns.iter().map(|(label, _)| label.as_str()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (k, t) in times.iter().enumerate() {
            write!(out, "{t:.16e}")?;
            for (_, values) in columns {
                write!(out, ",{:.16e}", values[k])?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
