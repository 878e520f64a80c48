//! gnuplot data blocks from a sweep CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::CSV_HEADER;

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOutput {
    pub data_path: PathBuf,
    pub script_path: PathBuf,
    /// Curve names in order of first appearance.
    pub curves: Vec<String>,
    pub warnings: Vec<String>,
}

struct Row {
    x: f64,
    mse: f64,
    stderr: f64,
}

/// Writes `<stem>.dat` (one gnuplot index block per curve) and `<stem>.gp`
/// next to the CSV, or into `out_dir`.
pub fn emit_plot_data(csv_path: &Path, out_dir: Option<&Path>) -> Result<PlotOutput> {
    let text = fs::read_to_string(csv_path)?;
    let mut curves: Vec<(String, Vec<Row>)> = Vec::new();
    let mut warnings = Vec::new();

    if text.trim().is_empty() {
        warnings.push(format!("{} is empty", csv_path.display()));
    } else {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != CSV_HEADER {
            return Err(Error::Malformed(format!("unexpected header {header:?}")));
        }
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|_| {
                    Error::Malformed(format!("row {}: column {} is not a number: {:?}", line + 2, CSV_HEADER[i], &rec[i]))
                })
            };
            let row = Row { x: num(0)?, mse: num(2)?, stderr: num(3)? };
            let name = rec[1].to_string();
            match curves.iter_mut().find(|(n, _)| *n == name) {
                Some((_, rows)) => rows.push(row),
                None => curves.push((name, vec![row])),
            }
        }
        if curves.is_empty() {
            warnings.push(format!("{} has no data rows", csv_path.display()));
        }
    }

    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| csv_path.parent().map(Path::to_path_buf).unwrap_or_default());
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(&dir)?;
    }
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let data_path = dir.join(format!("{stem}.dat"));
    let script_path = dir.join(format!("{stem}.gp"));

    let mut data = String::new();
    for (i, (name, rows)) in curves.iter_mut().enumerate() {
        rows.sort_by(|a, b| a.x.total_cmp(&b.x));
        if i > 0 {
            data.push_str("\n\n");
        }
        let _ = writeln!(data, "# {name}");
        let _ = writeln!(data, "# sweep_value mse_mean mse_stderr");
        for r in rows.iter() {
            let _ = writeln!(data, "{} {:e} {:e}", r.x, r.mse, r.stderr);
        }
    }
    fs::write(&data_path, &data)?;

    let mut script = String::new();
    if !curves.is_empty() {
        let xs: Vec<f64> = curves.iter().flat_map(|(_, r)| r.iter().map(|r| r.x)).collect();
        let (lo, hi) = xs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        let _ = writeln!(script, "set logscale y");
        if lo > 0.0 && hi / lo >= 10.0 {
            let _ = writeln!(script, "set logscale x");
        }
        let _ = writeln!(script, "set xlabel \"sweep value\"\nset ylabel \"MSE\"\nset key outside");
        let data_name = data_path.file_name().and_then(|s| s.to_str()).unwrap_or("sweep.dat");
        let plots: Vec<String> = curves
            .iter()
            .enumerate()
            .map(|(i, (name, _))| format!("\"{data_name}\" index {i} using 1:2 with linespoints title \"{}\"", name.replace('"', "'")))
            .collect();
        let _ = writeln!(script, "plot {}", plots.join(", \\\n     "));
    }
    fs::write(&script_path, &script)?;

    Ok(PlotOutput { data_path, script_path, curves: curves.into_iter().map(|(n, _)| n).collect(), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("fig.csv");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn one_block_per_curve() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("sweep_value,algorithm,mse_mean,mse_stderr,trials,seconds\n");
        for np in [4, 8, 16] {
            for alg in ["HiHTP", "HiIHT", "OMP"] {
                body += &format!("{np},{alg},1e-2,1e-3,10,0.01\n");
            }
        }
        let out = emit_plot_data(&write(dir.path(), &body), None).unwrap();
        assert_eq!(out.curves, vec!["HiHTP", "HiIHT", "OMP"]);
        let data = fs::read_to_string(&out.data_path).unwrap();
        assert_eq!(data.matches("\n\n\n").count(), 2);
        let script = fs::read_to_string(&out.script_path).unwrap();
        assert!(script.contains("set logscale y") && script.contains("index 2"));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn empty_csv_gives_empty_files_and_warning() {
        let dir = tempfile::tempdir().unwrap();
        let out = emit_plot_data(&write(dir.path(), ""), None).unwrap();
        assert!(out.curves.is_empty());
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(fs::read_to_string(&out.data_path).unwrap(), "");
        let header_only = emit_plot_data(&write(dir.path(), "sweep_value,algorithm,mse_mean,mse_stderr,trials,seconds\n"), None).unwrap();
        assert_eq!(header_only.warnings.len(), 1);
    }

    #[test]
    fn malformed_csv_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_plot_data(&write(dir.path(), "a,b\n1,2\n"), None), Err(Error::Malformed(_))));
        let bad = "sweep_value,algorithm,mse_mean,mse_stderr,trials,seconds\n4,HiIHT,oops,0,1,0\n";
        assert!(matches!(emit_plot_data(&write(dir.path(), bad), None), Err(Error::Malformed(_))));
    }
}
