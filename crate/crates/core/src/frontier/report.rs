use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{in_range, summarize_range, ConfigTag, FrontierPoint, SweepMode};
use crate::error::{Error, Result};

pub const FRONTIER_CSV_HEADER: &str =
    "scenario,policy,rf,cost_rate,lambda,alpha,mean_loss,std_loss,avg_trades,n_test_paths,mode,seed";

/// Averages of two frontiers over the same threshold range and the relative
/// improvement of the variant. Losses are negative, so a higher mean and a
/// lower std both count as improvements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub base_mean: f64,
    pub base_std: f64,
    pub variant_mean: f64,
    pub variant_std: f64,
    pub mean_improvement_pct: f64,
    pub std_improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub comparison: Comparison,
}

fn grid_in_range(points: &[FrontierPoint], lo: f64, hi: f64) -> Vec<f64> {
    let mut a: Vec<f64> = in_range(points, lo, hi).iter().map(|p| p.alpha).collect();
    a.sort_by(f64::total_cmp);
    a
}

pub fn compare_configs(base: &[FrontierPoint], variant: &[FrontierPoint], lo: f64, hi: f64) -> Result<Comparison> {
    let (gb, gv) = (grid_in_range(base, lo, hi), grid_in_range(variant, lo, hi));
    if gb.len() != gv.len() || gb.iter().zip(&gv).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::config(format!(
            "frontiers use different thresholds in [{lo}, {hi}] ({} vs {} points)",
            gb.len(),
            gv.len()
        )));
    }
    let (base_mean, base_std) = summarize_range(base, lo, hi)?;
    let (variant_mean, variant_std) = summarize_range(variant, lo, hi)?;
    Ok(Comparison {
        base_mean,
        base_std,
        variant_mean,
        variant_std,
        mean_improvement_pct: (variant_mean - base_mean) / base_mean.abs() * 100.0,
        std_improvement_pct: (base_std - variant_std) / base_std * 100.0,
    })
}

/// Plain-text table with one row per configuration.
pub fn format_comparison_table(title: &str, base_name: &str, variant_name: &str, rows: &[ComparisonRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(
        s,
        "{:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "config",
        format!("{base_name} mean"),
        format!("{base_name} std"),
        format!("{variant_name} mean"),
        format!("{variant_name} std"),
        "mean impr.",
        "std impr."
    );
    for r in rows {
        let c = &r.comparison;
        let _ = writeln!(
            s,
            "{:<10} {:>12.3} {:>12.3} {:>12.3} {:>12.3} {:>11.2}% {:>11.2}%",
            r.label,
            c.base_mean,
            c.base_std,
            c.variant_mean,
            c.variant_std,
            c.mean_improvement_pct,
            c.std_improvement_pct
        );
    }
    s
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> Result<()> {
    writeln!(w, "config,base_mean,base_std,variant_mean,variant_std,mean_improvement_pct,std_improvement_pct")?;
    for r in rows {
        check_field(&r.label)?;
        let c = &r.comparison;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.label,
            c.base_mean,
            c.base_std,
            c.variant_mean,
            c.variant_std,
            c.mean_improvement_pct,
            c.std_improvement_pct
        )?;
    }
    Ok(())
}

fn check_field(s: &str) -> Result<()> {
    if s.contains([',', '\n', '\r', '"']) {
        return Err(Error::config(format!("'{s}' cannot be written as a CSV field")));
    }
    Ok(())
}

/// Floats use the shortest representation that parses back exactly.
pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], mut w: W) -> Result<()> {
    writeln!(w, "{FRONTIER_CSV_HEADER}")?;
    for p in points {
        check_field(&p.tag.scenario)?;
        check_field(&p.tag.policy)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            p.tag.scenario,
            p.tag.policy,
            p.tag.rf as u8,
            p.tag.cost_rate,
            p.tag.lambda,
            p.alpha,
            p.mean_loss,
            p.std_loss,
            p.avg_trades,
            p.n_test_paths,
            p.mode.name(),
            p.seed
        )?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T> {
    field.parse().map_err(|_| Error::format(format!("line {line}: bad {what} '{field}'")))
}

pub fn read_frontier_csv<R: BufRead>(r: R) -> Result<Vec<FrontierPoint>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end_matches('\r') != FRONTIER_CSV_HEADER {
        return Err(Error::format("frontier CSV header missing or wrong"));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let n = k + 2;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::format(format!("line {n}: expected 12 fields, found {}", f.len())));
        }
        let rf = match f[2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::format(format!("line {n}: bad rf flag '{other}'"))),
        };
        out.push(FrontierPoint {
            tag: ConfigTag {
                scenario: f[0].to_string(),
                policy: f[1].to_string(),
                rf,
                cost_rate: parse(f[3], "cost rate", n)?,
                lambda: parse(f[4], "lambda", n)?,
            },
            alpha: parse(f[5], "alpha", n)?,
            mean_loss: parse(f[6], "mean loss", n)?,
            std_loss: parse(f[7], "std loss", n)?,
            avg_trades: parse(f[8], "trade count", n)?,
            n_test_paths: parse(f[9], "path count", n)?,
            mode: parse::<SweepMode>(f[10], "mode", n)?,
            seed: parse(f[11], "seed", n)?,
        });
    }
    Ok(out)
}
