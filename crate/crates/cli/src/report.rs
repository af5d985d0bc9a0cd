//! Cross-run summary table.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::commands::Outcome;
use crate::manifest::{read_manifest, FileRecord, Run, RunManifest, MANIFEST_FILE};
use crate::{Cli, CliError, EXIT_OK};

struct Row {
    run: String,
    m: RunManifest,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn range<T: ToString + PartialEq>(lo: Option<T>, hi: Option<T>) -> String {
    match (lo, hi) {
        (Some(a), Some(b)) if a == b => a.to_string(),
        (Some(a), Some(b)) => format!("{}..{}", a.to_string(), b.to_string()),
        _ => "-".into(),
    }
}

pub(crate) fn report(cli: &Cli, dirs: &[PathBuf]) -> Result<Outcome, CliError> {
    if dirs.is_empty() {
        return Err(CliError::usage("report needs at least one run directory"));
    }
    let mut rows = Vec::new();
    let mut inputs = Vec::new();
    for d in dirs {
        match read_manifest(d) {
            Ok(m) => {
                let bytes = std::fs::read(d.join(MANIFEST_FILE)).unwrap_or_default();
                inputs.push(FileRecord::of(&d.join(MANIFEST_FILE).display().to_string(), &bytes));
                rows.push(Row {
                    run: d.display().to_string(),
                    m,
                });
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", d.display()),
        }
    }
    if rows.is_empty() {
        return Err(CliError::usage("no readable run manifests"));
    }

    let mut md = String::from("# Run report\n\n");
    md.push_str("| run | command | status | system | epsilon | N | N final | scaling | sinks | verdict |\n");
    md.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    let mut csv = String::from(
        "run,command,status,system,epsilon_min,epsilon_max,n_min,n_max,n_final,scaling,sink_count,verdict\n",
    );
    for r in &rows {
        let s = &r.m.summary;
        writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.run,
            r.m.command,
            r.m.status,
            opt(s.system.clone()),
            range(s.epsilon_min, s.epsilon_max),
            range(s.n_min, s.n_max),
            opt(s.n_final),
            opt(s.scaling.clone()),
            opt(s.sink_count),
            opt(s.verdict.clone()),
        )
        .unwrap();
        let quote = |t: String| {
            if t.contains(',') {
                format!("\"{}\"", t.replace('"', "\"\""))
            } else {
                t
            }
        };
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            quote(r.run.clone()),
            r.m.command,
            r.m.status,
            quote(opt(s.system.clone())),
            opt(s.epsilon_min.map(|e| format!("{e:.16e}"))),
            opt(s.epsilon_max.map(|e| format!("{e:.16e}"))),
            opt(s.n_min),
            opt(s.n_max),
            opt(s.n_final),
            quote(opt(s.scaling.clone())),
            opt(s.sink_count),
            opt(s.verdict.clone()),
        )
        .unwrap();
    }

    // emergence and census runs of the same system side by side
    let mut links = String::new();
    for e in rows.iter().filter(|r| r.m.command == "emergence") {
        for c in rows.iter().filter(|r| r.m.command == "sinks") {
            if e.m.summary.system.is_some() && e.m.summary.system == c.m.summary.system {
                writeln!(
                    links,
                    "- {}: N_final = {}, census count = {}",
                    opt(e.m.summary.system.clone()),
                    opt(e.m.summary.n_final),
                    opt(c.m.summary.sink_count)
                )
                .unwrap();
            }
        }
    }
    if !links.is_empty() {
        md.push_str("\n## Emergence against sink census\n\n");
        md.push_str(&links);
    }

    let mut run = Run::start(&cli.out_dir(), "report", serde_json::json!({}), None, inputs)?;
    run.manifest.summary.runs = Some(rows.len());
    let res = run
        .write("report.md", md.as_bytes())
        .and_then(|_| run.write("report.csv", csv.as_bytes()))
        .map(|_| EXIT_OK);
    let manifest = run.finish(&res)?;
    let code = res?;
    let stdout = if cli.json {
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"
    } else {
        md
    };
    Ok(Outcome { code, stdout })
}
