//! CSV tables and the JSON metadata document.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use trispin::experiments::SweepResult;

use crate::config::RunConfig;

/// 17 significant digits: round-trips every f64.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(result: &SweepResult, w: impl io::Write) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(result.header())?;
    for i in 0..result.rows() {
        out.write_record(result.row(i).into_iter().map(format_value))?;
    }
    out.flush()?;
    Ok(())
}

fn table_summary(r: &SweepResult, file: Option<&str>) -> Value {
    #[derive(Serialize)]
    struct Axis<'a> {
        name: &'a str,
        unit: &'a str,
        points: usize,
    }
    let axes: Vec<Axis> = r
        .axes
        .iter()
        .map(|a| Axis {
            name: &a.name,
            unit: &a.unit,
            points: a.values.len(),
        })
        .collect();
    let columns: Vec<&str> = r.columns.iter().map(|(n, _)| n.as_str()).collect();
    json!({
        "file": file,
        "experiment": r.experiment,
        "axes": axes,
        "columns": columns,
        "scalars": r.scalars,
        "fits": r.fits,
    })
}

pub fn metadata(cfg: &RunConfig, result: &SweepResult, tables: &[(String, String)]) -> Value {
    let name = cfg.experiment();
    let mut main = table_summary(result, Some(&format!("{name}.csv")));
    let secondary: serde_json::Map<String, Value> = tables
        .iter()
        .map(|(k, file)| (k.clone(), table_summary(&result.tables[k], Some(file))))
        .collect();
    main["tables"] = Value::Object(secondary);
    json!({
        "tool": "trispin",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": name,
        "seed": cfg.seed,
        "shots": cfg.shots,
        "config": cfg,
        "result": main,
    })
}

/// Writes `<experiment>.csv`, one `<experiment>.<table>.csv` per secondary
/// table and `<experiment>.meta`. Returns the paths written.
pub fn write_outputs(cfg: &RunConfig, result: &SweepResult, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = cfg.experiment();
    let to_io = |e: csv::Error| io::Error::other(e.to_string());
    let mut written = Vec::new();
    let main = dir.join(format!("{name}.csv"));
    write_csv(result, fs::File::create(&main)?).map_err(to_io)?;
    written.push(main);
    let mut tables = Vec::new();
    for (k, t) in &result.tables {
        let file = format!("{name}.{k}.csv");
        let path = dir.join(&file);
        write_csv(t, fs::File::create(&path)?).map_err(to_io)?;
        written.push(path);
        tables.push((k.clone(), file));
    }
    let meta = dir.join(format!("{name}.meta"));
    let doc = serde_json::to_string_pretty(&metadata(cfg, result, &tables)).map_err(io::Error::other)?;
    fs::write(&meta, doc + "\n")?;
    written.push(meta);
    Ok(written)
}
