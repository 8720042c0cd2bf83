//! Run outputs: assertion summary, manifest, and columnar series files.

use anyhow::{Context, Result};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct Assertion {
    pub name: String,
    /// Module-level invariant this instantiates.
    pub invariant: String,
    pub measured: f64,
    pub tolerance: f64,
    /// How `measured` relates to `tolerance` for a pass.
    pub relation: String,
    pub pass: bool,
}

#[derive(Default)]
pub struct Report {
    pub assertions: Vec<Assertion>,
    pub series_files: Vec<String>,
    out_dir: PathBuf,
}

impl Report {
    pub fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir.join("series"))
            .with_context(|| format!("creating output directory {}", out_dir.display()))?;
        Ok(Self { assertions: Vec::new(), series_files: Vec::new(), out_dir: out_dir.to_path_buf() })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// `measured <= tolerance` assertion.
    pub fn check_le(&mut self, name: &str, invariant: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured <= tolerance;
        self.push(name, invariant, measured, tolerance, "<=", pass);
        pass
    }

    /// `measured >= tolerance` assertion.
    pub fn check_ge(&mut self, name: &str, invariant: &str, measured: f64, tolerance: f64) -> bool {
        let pass = measured >= tolerance;
        self.push(name, invariant, measured, tolerance, ">=", pass);
        pass
    }

    /// `|measured - target| <= width` assertion, recorded as the deviation.
    pub fn check_within(
        &mut self,
        name: &str,
        invariant: &str,
        measured: f64,
        target: f64,
        width: f64,
    ) -> bool {
        let pass = (measured - target).abs() <= width;
        self.push(&format!("{name} (target {target} ± {width})"), invariant, measured, width, "within", pass);
        pass
    }

    pub fn check_bool(&mut self, name: &str, invariant: &str, pass: bool) -> bool {
        self.push(name, invariant, if pass { 1.0 } else { 0.0 }, 1.0, "==", pass);
        pass
    }

    fn push(&mut self, name: &str, invariant: &str, measured: f64, tolerance: f64, relation: &str, pass: bool) {
        log::info!("[{}] {name}: {measured:.6e} {relation} {tolerance:.6e}", if pass { "pass" } else { "FAIL" });
        self.assertions.push(Assertion {
            name: name.to_string(),
            invariant: invariant.to_string(),
            measured,
            tolerance,
            relation: relation.to_string(),
            pass,
        });
    }

    /// Write a whitespace-columnar series file under `series/`.
    pub fn write_series(&mut self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<()> {
        let path = self.out_dir.join("series").join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "{header}")?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        self.series_files.push(format!("series/{name}"));
        Ok(())
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// Write summary.json and manifest.json; returns the process exit code.
    pub fn finalize(
        &self,
        recipe: &str,
        seed: u64,
        config_echo: &str,
    ) -> Result<i32> {
        fs::write(self.out_dir.join("config-echo.toml"), config_echo)?;
        let summary = serde_json::json!({
            "recipe": recipe,
            "passed": self.assertions.iter().filter(|a| a.pass).count(),
            "failed": self.assertions.iter().filter(|a| !a.pass).count(),
            "assertions": self.assertions,
        });
        fs::write(
            self.out_dir.join("summary.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
        let manifest = serde_json::json!({
            "recipe": recipe,
            "seed": seed,
            "series_files": self.series_files,
            "tolerances": self.assertions.iter().map(|a| {
                serde_json::json!({ "name": a.name, "tolerance": a.tolerance, "relation": a.relation })
            }).collect::<Vec<_>>(),
            "all_passed": self.all_passed(),
        });
        fs::write(
            self.out_dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        for a in &self.assertions {
            println!(
                "  [{}] {} = {:.6e} ({} {:.6e})",
                if a.pass { "pass" } else { "FAIL" },
                a.name,
                a.measured,
                a.relation,
                a.tolerance
            );
        }
        Ok(if self.all_passed() { 0 } else { 1 })
    }
}
