//! Human-readable summary of run artifacts.

use std::fs;
use std::path::Path;

/// Files a completed run may leave behind, per suite.
const KNOWN_ARTIFACTS: [(&str, &str); 11] = [
    ("norms", "norms_constants.csv"),
    ("smoothing", "smoothing.csv"),
    ("elliptic", "born_sweep.csv"),
    ("elliptic", "regularity_gain.csv"),
    ("timejets", "mu_localization.csv"),
    ("timejets", "scaling.csv"),
    ("waves", "energy_drift.csv"),
    ("waves", "energy_margin.csv"),
    ("waves", "speed.csv"),
    ("quasilinear", "picard_history.csv"),
    ("quasilinear", "continuation.csv"),
];

pub fn report(dir: &Path) -> Result<String, String> {
    let manifest = dir.join("manifest.csv");
    if !manifest.exists() {
        let expected: Vec<&str> = std::iter::once("manifest.csv")
            .chain(KNOWN_ARTIFACTS.iter().map(|(_, f)| *f))
            .collect();
        return Err(format!(
            "no manifest in {}; expected artifacts include: {}",
            dir.display(),
            expected.join(", ")
        ));
    }
    let text = fs::read_to_string(&manifest).map_err(|e| e.to_string())?;
    let mut rows: Vec<Vec<String>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|s| s.to_string()).collect::<Vec<_>>())
        .filter(|r| r.len() >= 5)
        .collect();
    rows.sort_by(|a, b| a[0].cmp(&b[0]).then(a[1].cmp(&b[1])));

    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<34} {:>14} {:<26} {}\n",
        "suite", "item", "value", "threshold", "status"
    ));
    let mut failures = 0usize;
    for r in &rows {
        if r.len() < 5 {
            continue;
        }
        let pass = r[4] == "true";
        if !pass {
            failures += 1;
        }
        out.push_str(&format!(
            "{:<12} {:<34} {:>14} {:<26} {}\n",
            r[0],
            r[1],
            abbreviate(&r[2]),
            r[3],
            if pass { "pass" } else { "FAIL" }
        ));
    }
    out.push_str(&format!(
        "\n{} checks, {} failing\n",
        rows.len(),
        failures
    ));
    for (suite, file) in KNOWN_ARTIFACTS {
        if dir.join(file).exists() {
            out.push_str(&format!("artifact [{suite}]: {file}\n"));
        }
    }
    Ok(out)
}

fn abbreviate(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) => format!("{x:.6e}"),
        Err(_) => v.to_string(),
    }
}
