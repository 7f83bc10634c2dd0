//! CSV, plain-text tables and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::Result;
use crate::experiments::{ErrorSet, ExperimentRecord, InfSupRecord, Refinement, VibrationRecord};

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn convergence_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("refinement,n,dt,step");
    for name in ErrorSet::NAMES {
        let _ = write!(out, ",{name},{name}_rate");
    }
    out.push_str(",wall_clock,iterations_total,iterations_max\n");
    for r in records {
        let kind = match r.refinement {
            Refinement::Space => "space",
            Refinement::Time => "time",
        };
        let _ = write!(out, "{kind},{},{},{}", r.n, sci(r.dt), sci(r.step));
        let rates = r.rates.map(|x| x.to_array());
        for (k, e) in r.errors.to_array().iter().enumerate() {
            let rate = rates.map(|a| sci(a[k])).unwrap_or_default();
            let _ = write!(out, ",{},{rate}", sci(*e));
        }
        let _ = writeln!(
            out,
            ",{:.3},{},{}",
            r.wall_clock, r.iterations.total, r.iterations.max
        );
    }
    out
}

/// Aligned error/rate table, one row per level.
pub fn rate_table(records: &[ExperimentRecord]) -> String {
    let head = match records.first().map(|r| r.refinement) {
        Some(Refinement::Time) => "dt",
        _ => "h",
    };
    let mut out = format!("{head:>10}");
    for name in ErrorSet::NAMES {
        let _ = write!(out, " {name:>10} {:>6}", "rate");
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{:>10.4e}", r.step);
        let rates = r.rates.map(|x| x.to_array());
        for (k, e) in r.errors.to_array().iter().enumerate() {
            let rate = rates.map(|a| format!("{:.2}", a[k])).unwrap_or_default();
            let _ = write!(out, " {e:>10.3e} {rate:>6}");
        }
        out.push('\n');
    }
    out
}

pub fn vibration_csv(record: &VibrationRecord) -> String {
    let mut out = String::from(
        "step,time,fluid_kinetic,plate_kinetic,rotational,elastic,total_energy,max_displacement,max_wdot,interface_mismatch,wdot_integral,iterations\n",
    );
    for s in &record.series {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.step,
            sci(s.time),
            sci(s.fluid_kinetic),
            sci(s.plate_kinetic),
            sci(s.rotational),
            sci(s.elastic),
            sci(s.total_energy),
            sci(s.max_displacement),
            sci(s.max_wdot),
            sci(s.interface_mismatch),
            sci(s.wdot_integral),
            s.iterations
        );
    }
    out
}

pub fn infsup_csv(records: &[InfSupRecord]) -> String {
    let mut out = String::from("n,h,beta,beta_div,iterations\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.n, sci(r.h), sci(r.beta), sci(r.beta_div), r.iterations);
    }
    out
}

/// Writes `manifest.toml`: the resolved configuration plus provenance entries.
pub fn write_manifest(dir: &Path, config: &RunConfig, provenance: &[(&str, String)]) -> Result<PathBuf> {
    let mut text = String::from("[provenance]\n");
    let _ = writeln!(text, "crate_version = {:?}", env!("CARGO_PKG_VERSION"));
    for (k, v) in provenance {
        let _ = writeln!(text, "{k} = {v:?}");
    }
    text.push_str("\n[config]\n");
    // Nest the config under a table by prefixing its own tables.
    for line in config.to_toml()?.lines() {
        if let Some(rest) = line.strip_prefix('[') {
            let _ = writeln!(text, "[config.{rest}");
        } else {
            let _ = writeln!(text, "{line}");
        }
    }
    write_file(dir, "manifest.toml", &text)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}
