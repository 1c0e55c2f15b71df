//! Configuration sweeps: a scenario template crossed with `--vary` grids,
//! run in parallel, reported as one JSON file per configuration plus a CSV
//! summary. Failing rows are recorded and the sweep continues.

use crate::pipeline::{run_scenario, PipelineConfig};
use crate::report::{RunReport, CSV_HEADER};
use crate::scenario::{resolve, Overrides, Scenario, ScenarioFile};
use anyhow::{bail, Context, Result};
use ratemech::game::Mechanism;
use rayon::prelude::*;
use std::path::Path;

/// One `--vary` axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Axis {
    Eta(Vec<f64>),
    Zeta(Vec<f64>),
    Seed(Vec<u64>),
    Mechanism(Vec<Mechanism>),
}

impl Axis {
    fn len(&self) -> usize {
        match self {
            Axis::Eta(v) => v.len(),
            Axis::Zeta(v) => v.len(),
            Axis::Seed(v) => v.len(),
            Axis::Mechanism(v) => v.len(),
        }
    }

    /// Apply choice `idx`, returning the id fragment for the row name.
    fn apply(&self, idx: usize, ov: &mut Overrides) -> String {
        match self {
            Axis::Eta(v) => {
                ov.eta = Some(v[idx]);
                format!("eta={}", v[idx])
            }
            Axis::Zeta(v) => {
                ov.zeta = Some(v[idx]);
                format!("zeta={}", v[idx])
            }
            Axis::Seed(v) => {
                ov.seed = Some(v[idx]);
                format!("seed={}", v[idx])
            }
            Axis::Mechanism(v) => {
                ov.mechanism = Some(v[idx]);
                format!("mechanism={}", v[idx])
            }
        }
    }
}

/// Parse one `--vary KEY=V1,V2,...` argument. Seeds additionally accept
/// inclusive ranges `a..b`.
pub fn parse_axis(arg: &str) -> Result<Axis> {
    let (key, values) = arg
        .split_once('=')
        .with_context(|| format!("--vary expects KEY=V1,V2,..., got `{arg}`"))?;
    if values.is_empty() {
        bail!("--vary {key}= lists no values");
    }
    let parts: Vec<&str> = values.split(',').collect();
    match key {
        "eta" | "zeta" => {
            let grid: Vec<f64> = parts
                .iter()
                .map(|p| {
                    p.parse::<f64>()
                        .with_context(|| format!("bad {key} value `{p}`"))
                })
                .collect::<Result<_>>()?;
            if grid.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                bail!("{key} values must be positive and finite");
            }
            Ok(if key == "eta" {
                Axis::Eta(grid)
            } else {
                Axis::Zeta(grid)
            })
        }
        "seed" => {
            let mut grid = Vec::new();
            for p in &parts {
                if let Some((lo, hi)) = p.split_once("..") {
                    let lo: u64 = lo
                        .parse()
                        .with_context(|| format!("bad seed range `{p}`"))?;
                    let hi: u64 = hi
                        .parse()
                        .with_context(|| format!("bad seed range `{p}`"))?;
                    if lo > hi {
                        bail!("empty seed range `{p}`");
                    }
                    grid.extend(lo..=hi);
                } else {
                    grid.push(
                        p.parse::<u64>()
                            .with_context(|| format!("bad seed `{p}`"))?,
                    );
                }
            }
            Ok(Axis::Seed(grid))
        }
        "mechanism" => {
            let grid: Vec<Mechanism> = parts
                .iter()
                .map(|p| match *p {
                    "wbb" => Ok(Mechanism::Wbb),
                    "sbb" => Ok(Mechanism::Sbb),
                    other => bail!("unknown mechanism `{other}` (expected wbb or sbb)"),
                })
                .collect::<Result<_>>()?;
            Ok(Axis::Mechanism(grid))
        }
        other => bail!("--vary does not understand key `{other}` (try eta, zeta, seed, mechanism)"),
    }
}

/// All override combinations in grid order (last axis fastest), each with
/// its id suffix. An empty axis list yields the single base configuration.
pub fn combinations(base: Overrides, axes: &[Axis]) -> Vec<(Overrides, String)> {
    let total: usize = axes.iter().map(Axis::len).product();
    let mut out = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut choice = vec![0usize; axes.len()];
        for (k, axis) in axes.iter().enumerate().rev() {
            choice[k] = flat % axis.len();
            flat /= axis.len();
        }
        let mut ov = base;
        let mut suffix = String::new();
        for (k, axis) in axes.iter().enumerate() {
            let frag = axis.apply(choice[k], &mut ov);
            suffix.push('+');
            suffix.push_str(&frag);
        }
        out.push((ov, suffix));
    }
    out
}

pub struct SweepOutcome {
    pub reports: Vec<RunReport>,
    /// Worst row: fail beats out-of-scope beats pass.
    pub exit_code: i32,
}

/// Resolve and run every configuration, write per-row reports and the CSV
/// summary under `out_dir`. Row order follows the grid, not completion.
pub fn run_sweep(
    file: &ScenarioFile,
    base: Overrides,
    axes: &[Axis],
    fallback_name: &str,
    hash: &str,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<SweepOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let combos = combinations(base, axes);
    let scenarios: Vec<Scenario> = combos
        .iter()
        .map(|(ov, suffix)| {
            let mut sc = resolve(file, ov, fallback_name, hash.to_string())?;
            sc.id = format!("{}{}", sc.name, suffix);
            Ok(sc)
        })
        .collect::<Result<_>>()?;

    let reports: Vec<RunReport> = scenarios
        .par_iter()
        .map(|sc| run_scenario(sc, cfg))
        .collect();

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for report in &reports {
        csv.push_str(&report.csv_row());
        csv.push('\n');
        let path = out_dir.join(format!("{}.json", report.scenario_id));
        std::fs::write(&path, report.to_json())
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, csv)
        .with_context(|| format!("cannot write {}", summary_path.display()))?;

    let exit_code = reports
        .iter()
        .map(|r| r.status.exit_code())
        .fold(0, |worst, code| match (worst, code) {
            (1, _) | (_, 1) => 1,
            (2, _) | (_, 2) => 2,
            _ => 0,
        });
    Ok(SweepOutcome { reports, exit_code })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_parse_values_and_ranges() {
        assert_eq!(
            parse_axis("eta=0.1,0.01").unwrap(),
            Axis::Eta(vec![0.1, 0.01])
        );
        assert_eq!(
            parse_axis("seed=1..3,9").unwrap(),
            Axis::Seed(vec![1, 2, 3, 9])
        );
        assert_eq!(
            parse_axis("mechanism=wbb,sbb").unwrap(),
            Axis::Mechanism(vec![Mechanism::Wbb, Mechanism::Sbb])
        );
        assert!(parse_axis("eta=-1").is_err());
        assert!(parse_axis("budget=1").is_err());
        assert!(parse_axis("eta").is_err());
    }

    #[test]
    fn combinations_cross_in_grid_order() {
        let axes = [
            parse_axis("mechanism=wbb,sbb").unwrap(),
            parse_axis("seed=1..2").unwrap(),
        ];
        let combos = combinations(Overrides::default(), &axes);
        let suffixes: Vec<&str> = combos.iter().map(|(_, s)| s.as_str()).collect();
        assert_eq!(
            suffixes,
            vec![
                "+mechanism=wbb+seed=1",
                "+mechanism=wbb+seed=2",
                "+mechanism=sbb+seed=1",
                "+mechanism=sbb+seed=2",
            ]
        );
    }

    #[test]
    fn no_axes_means_one_base_row() {
        let combos = combinations(Overrides::default(), &[]);
        assert_eq!(combos.len(), 1);
        assert_eq!(combos[0].1, "");
    }
}
