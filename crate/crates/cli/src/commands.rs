use std::fmt::Write as _;

use emergence_core::dynsys::{PhasePoint, SystemKind, SystemSpec};
use emergence_core::emergence::{emergence_curve, CENTER_RESTRICTION_NOTE};
use emergence_core::jets::{binomial, verify_covered_domain_with, Verdict, VerifyOptions, MAX_INDEX_SET};
use emergence_core::sinks::{basin_measure_estimate, sink_census};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{self, JetsConfig, RunConfig};
use crate::manifest::{FileRecord, Run};
use crate::{plot, report, Cli, CliError, Command, EXIT_INCONCLUSIVE, EXIT_NEGATIVE, EXIT_OK};

pub(crate) struct Outcome {
    pub code: i32,
    pub stdout: String,
}

pub(crate) fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Systems => systems(cli),
        Command::Emergence => {
            let (cfg, inputs) = require_config(cli)?;
            with_run(cli, "emergence", cfg, inputs, emergence)
        }
        Command::Sinks => {
            let (cfg, inputs) = require_config(cli)?;
            with_run(cli, "sinks", cfg, inputs, sinks)
        }
        Command::Orbit => {
            let (cfg, inputs) = require_config(cli)?;
            with_run(cli, "orbit", cfg, inputs, orbit)
        }
        Command::VerifyParablender { d, k, subcritical } => {
            let (mut cfg, inputs) = match &cli.config {
                Some(_) => require_config(cli)?,
                None => (RunConfig::default(), Vec::new()),
            };
            let base = cfg.jets.clone();
            let d = d.or(base.as_ref().map(|j| j.d));
            let k = k.or(base.as_ref().map(|j| j.k));
            let (Some(d), Some(k)) = (d, k) else {
                return Err(CliError::usage(
                    "verify-parablender needs --d and --k (or a \"jets\" config section)",
                ));
            };
            let size = binomial(d + k, k);
            if size > MAX_INDEX_SET {
                return Err(CliError::usage(format!(
                    "|E| = binomial({}, {k}) = {size} exceeds the limit {MAX_INDEX_SET}",
                    d + k
                )));
            }
            let mut jets = base.unwrap_or(JetsConfig {
                d,
                k,
                subcritical: false,
                orbit_samples: 100_000,
                orbit_steps: 20,
            });
            jets.d = d;
            jets.k = k;
            jets.subcritical |= *subcritical;
            cfg.jets = Some(jets);
            with_run(cli, "verify-parablender", cfg, inputs, verify)
        }
        Command::Report { dirs } => report::report(cli, dirs),
    }
}

fn require_config(cli: &Cli) -> Result<(RunConfig, Vec<FileRecord>), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::usage("this command needs --config PATH"))?;
    let (cfg, bytes) = config::load(path)?;
    Ok((cfg, vec![FileRecord::of(&path.display().to_string(), &bytes)]))
}

type Body = fn(&mut Run, &RunConfig, Option<u64>) -> Result<(i32, String), CliError>;

/// Apply the seed override, start the manifest, run `body`, finalize.
fn with_run(
    cli: &Cli,
    command: &str,
    mut cfg: RunConfig,
    inputs: Vec<FileRecord>,
    body: Body,
) -> Result<Outcome, CliError> {
    if let Some(s) = cli.seed {
        if let Some(q) = cfg.emergence.as_mut() {
            q.seed = s;
        }
        if let Some(sc) = cfg.sinks.as_mut() {
            sc.seed = s;
        }
    }
    let seed = match command {
        "emergence" => Some(cfg.emergence.get_or_insert_with(Default::default).seed),
        "sinks" => Some(cfg.sinks.get_or_insert_with(Default::default).seed),
        "verify-parablender" => Some(cli.seed.unwrap_or(0)),
        _ => None,
    };
    let snapshot = serde_json::to_value(&cfg).expect("config serializes");
    config::validate_config(&snapshot)?;
    let mut run = Run::start(&cli.out_dir(), command, snapshot, seed, inputs)?;
    if let Some(sys) = &cfg.system {
        run.manifest.summary.system = Some(describe(sys.kind()));
        for n in system_notes(sys) {
            run.note(n);
        }
    }
    let result = body(&mut run, &cfg, seed);
    let code = result.as_ref().map(|r| r.0).map_err(Clone::clone);
    let manifest = run.finish(&code)?;
    let (code, text) = result?;
    let stdout = if cli.json {
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"
    } else {
        text
    };
    Ok(Outcome { code, stdout })
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// Short human description such as `henon(a=0, b=0.3)`.
pub(crate) fn describe(kind: &SystemKind) -> String {
    match kind {
        SystemKind::Henon { a, b } => format!("henon(a={a}, b={b})"),
        SystemKind::Identity { dim } => format!("identity(dim={dim})"),
        SystemKind::Rotation { alpha, dim } => format!("rotation(alpha={alpha}, dim={dim})"),
        SystemKind::Doubling => "doubling".into(),
        SystemKind::ParablenderCore { d, k, contraction } => {
            format!("parablender_core(d={d}, k={k}, contraction={contraction})")
        }
        SystemKind::ParablenderFull {
            d,
            k,
            contraction,
            source_width,
        } => format!("parablender_full(d={d}, k={k}, contraction={contraction}, source_width={source_width})"),
        SystemKind::PlantedSinks { n, rate } => format!("planted_sinks(n={n}, rate={rate})"),
    }
}

fn system_notes(sys: &SystemSpec) -> Vec<String> {
    let mut out = vec![format!(
        "phase box lo {:?} hi {:?}, metric normalizer {}",
        sys.phase_box().lo,
        sys.phase_box().hi,
        sys.metric_normalizer()
    )];
    if let Some(l) = sys.layout() {
        let segs: Vec<String> = l.branches.iter().map(|s| format!("[{}, {}]", s.lo, s.hi)).collect();
        out.push(format!("parablender branch intervals {}", segs.join(" ")));
        if let Some(s) = l.source {
            out.push(format!(
                "source interval I_S = [{}, {}], |I_S| = {}",
                s.lo,
                s.hi,
                s.len()
            ));
        }
        if let (Some(p), Some(f)) = (l.saddle, l.fold) {
            out.push(format!(
                "saddle interval [{}, {}], folding interval [{}, {}]",
                p.lo, p.hi, f.lo, f.hi
            ));
        }
    }
    out
}

fn emergence(run: &mut Run, cfg: &RunConfig, _seed: Option<u64>) -> Result<(i32, String), CliError> {
    let sys = cfg.system()?;
    let param = cfg.param()?;
    let query = cfg.emergence.clone().unwrap_or_default();
    run.note(CENTER_RESTRICTION_NOTE);
    let curve = emergence_curve(sys, &param, &query)?;
    run.write("curve.csv", curve.to_csv().as_bytes())?;
    run.write("curve.json", &pretty(&curve))?;
    let title = format!("Emergence of {}", describe(sys.kind()));
    run.write("curve.svg", plot::curve_svg(&curve, &title).as_bytes())?;

    run.note(format!("survivor fraction {}", curve.survivor_fraction));
    if curve.unreliable {
        run.note("fewer than half of the sampled initial points survive: run flagged unreliable");
    }
    if curve.stabilization > 0.0 {
        run.note(format!(
            "N changed by up to {:.1}% between the last two orbit lengths",
            100.0 * curve.stabilization
        ));
    }
    let ns: Vec<usize> = curve.points.iter().map(|p| p.n_centers).collect();
    let eps: Vec<f64> = curve.points.iter().map(|p| p.epsilon).collect();
    let s = &mut run.manifest.summary;
    s.epsilon_min = eps.iter().cloned().reduce(f64::min);
    s.epsilon_max = eps.iter().cloned().reduce(f64::max);
    s.n_min = ns.iter().copied().min();
    s.n_max = ns.iter().copied().max();
    s.n_final = ns.last().copied();
    s.scaling = Some(curve.scaling.to_string());
    s.slope = curve.fit.as_ref().map(|f| f.slope);
    s.survivor_fraction = Some(curve.survivor_fraction);

    let mut text = String::new();
    writeln!(text, "{}: N = {:?} over epsilon = {:?}", describe(sys.kind()), ns, eps).unwrap();
    if let Some(f) = &curve.fit {
        writeln!(text, "slope {:.4} (r2 {:.4}), class {}", f.slope, f.r2, curve.scaling).unwrap();
    }
    writeln!(text, "wrote {}", run.dir().display()).unwrap();
    Ok((EXIT_OK, text))
}

fn sinks(run: &mut Run, cfg: &RunConfig, seed: Option<u64>) -> Result<(i32, String), CliError> {
    let sys = cfg.system()?;
    let param = cfg.param()?;
    let sc = cfg.sinks.clone().unwrap_or_default();
    let census = sink_census(sys, &param, sc.max_period, &sc.grid)?;
    run.write("census.csv", census.to_csv().as_bytes())?;
    run.write("census.json", &pretty(&census))?;
    if sc.basin_samples > 0 {
        let mut csv = String::from("sink,period,fraction,stderr,samples\n");
        for (i, s) in census.sinks.iter().enumerate() {
            let b = basin_measure_estimate(
                sys,
                &param,
                s,
                sc.basin_samples,
                sc.basin_steps,
                seed.unwrap_or(0).wrapping_add(i as u64),
            )?;
            writeln!(
                csv,
                "{i},{},{:.16e},{:.16e},{}",
                s.period, b.fraction, b.stderr, b.samples
            )
            .unwrap();
        }
        run.write("basins.csv", csv.as_bytes())?;
    }
    run.manifest.summary.sink_count = Some(census.sinks.len());
    let mut text = format!(
        "{}: {} sinks of period <= {}\n",
        describe(sys.kind()),
        census.sinks.len(),
        sc.max_period
    );
    for s in &census.sinks {
        let m: Vec<String> = s.moduli().iter().map(|m| format!("{m:.10}")).collect();
        writeln!(
            text,
            "  period {} at {:?}, |multipliers| {}",
            s.period,
            s.point.as_slice(),
            m.join(", ")
        )
        .unwrap();
    }
    writeln!(text, "wrote {}", run.dir().display()).unwrap();
    Ok((EXIT_OK, text))
}

fn verify(run: &mut Run, cfg: &RunConfig, seed: Option<u64>) -> Result<(i32, String), CliError> {
    let jets = cfg.jets.clone().expect("filled in by dispatch");
    let mut opts = VerifyOptions::default();
    if jets.subcritical {
        opts.contraction = 1.0 / 3.0;
        run.note("sub-critical fixture: vertical contraction 1/3");
    }
    let cert = verify_covered_domain_with(jets.d, jets.k, &opts)?;
    let mut violations = None;
    if cert.verdict == Verdict::Covered && jets.orbit_samples > 0 {
        violations = Some(cert.sample_orbits(jets.orbit_samples, jets.orbit_steps, seed.unwrap_or(0))?);
    }
    run.write("certificate.json", &pretty(&cert))?;
    let mut txt = cert.render_text();
    if let Some(v) = violations {
        writeln!(
            txt,
            "random jet orbits: {} x {} steps, {v} box violations",
            jets.orbit_samples, jets.orbit_steps
        )
        .unwrap();
    }
    run.write("certificate.txt", txt.as_bytes())?;
    let s = &mut run.manifest.summary;
    s.verdict = Some(verdict_name(cert.verdict).into());
    s.literal_box_closes = Some(cert.literal_box_closes);
    s.orbit_violations = violations;
    if violations.is_some_and(|v| v > 0) {
        return Err(CliError::io(format!(
            "{} random orbits left the certified box",
            violations.unwrap_or(0)
        )));
    }
    let code = match cert.verdict {
        Verdict::Covered => EXIT_OK,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        Verdict::NotCovered => EXIT_NEGATIVE,
    };
    Ok((code, txt))
}

pub(crate) fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Covered => "covered",
        Verdict::NotCovered => "not_covered",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn orbit(run: &mut Run, cfg: &RunConfig, _seed: Option<u64>) -> Result<(i32, String), CliError> {
    let sys = cfg.system()?;
    let param = cfg.param()?;
    let oc = cfg
        .orbit
        .clone()
        .ok_or_else(|| CliError::usage("config has no \"orbit\" section"))?;
    let z0 = PhasePoint::from_slice(&oc.start)?;
    let traj = sys.orbit(&param, &z0, oc.steps)?;
    let mut csv = String::from(if sys.dim() == 2 {
        "step,x,y,escaped\n"
    } else {
        "step,x,escaped\n"
    });
    for (t, p) in traj.points.iter().enumerate() {
        write!(csv, "{t}").unwrap();
        for c in p.as_slice() {
            write!(csv, ",{c:.16e}").unwrap();
        }
        writeln!(csv, ",{}", p.escaped).unwrap();
    }
    run.write("orbit.csv", csv.as_bytes())?;
    let title = format!("Orbit of {}", describe(sys.kind()));
    run.write("orbit.svg", plot::orbit_svg(&traj, sys.phase_box(), &title).as_bytes())?;
    let mut text = format!("{} points", traj.points.len());
    if let Some(t) = traj.escape_time() {
        write!(text, ", escaped at step {t}").unwrap();
        run.note(format!("trajectory escaped the phase box at step {t}"));
    }
    writeln!(text, "\nwrote {}", run.dir().display()).unwrap();
    Ok((EXIT_OK, text))
}

struct Entry {
    label: &'static str,
    kind: SystemKind,
    fields: &'static str,
}

fn catalogue() -> Vec<Entry> {
    vec![
        Entry {
            label: "Henon",
            kind: SystemKind::Henon { a: -1.4, b: -0.3 },
            fields: "a, b",
        },
        Entry {
            label: "Identity",
            kind: SystemKind::Identity { dim: 1 },
            fields: "dim (1 or 2)",
        },
        Entry {
            label: "Rotation",
            kind: SystemKind::Rotation {
                alpha: std::f64::consts::SQRT_2 - 1.0,
                dim: 1,
            },
            fields: "alpha, dim (1 or 2)",
        },
        Entry {
            label: "Doubling",
            kind: SystemKind::Doubling,
            fields: "-",
        },
        Entry {
            label: "ParablenderCore",
            kind: SystemKind::ParablenderCore {
                d: 1,
                k: 1,
                contraction: 2.0 / 3.0,
            },
            fields: "d, k, contraction",
        },
        Entry {
            label: "ParablenderFull",
            kind: SystemKind::ParablenderFull {
                d: 1,
                k: 1,
                contraction: 2.0 / 3.0,
                source_width: 1.0 / 16.0,
            },
            fields: "d, k, contraction, source_width",
        },
        Entry {
            label: "PlantedSinks",
            kind: SystemKind::PlantedSinks { n: 4, rate: 0.5 },
            fields: "n, rate",
        },
    ]
}

fn systems(cli: &Cli) -> Result<Outcome, CliError> {
    let rows: Vec<(Entry, SystemSpec)> = catalogue()
        .into_iter()
        .map(|e| {
            let s = SystemSpec::new(e.kind.clone()).expect("catalogue entries are valid");
            (e, s)
        })
        .collect();
    let stdout = if cli.json {
        let arr: Vec<Value> = rows
            .iter()
            .map(|(e, s)| {
                json!({
                    "name": e.label,
                    "type": e.kind.name(),
                    "dim": s.dim(),
                    "param_dim": s.param_dim(),
                    "fields": e.fields,
                    "phase_box": s.phase_box(),
                    "example": s,
                })
            })
            .collect();
        serde_json::to_string_pretty(&arr).expect("serializable") + "\n"
    } else {
        let mut t = format!(
            "{:<16} {:<17} {:>3} {:>6}  {:<32} {}\n",
            "NAME", "TYPE", "DIM", "PARAMS", "FIELDS", "PHASE BOX"
        );
        for (e, s) in &rows {
            let b = s.phase_box();
            let params = if s.param_dim() == 0 {
                "-".to_string()
            } else {
                "k".to_string()
            };
            writeln!(
                t,
                "{:<16} {:<17} {:>3} {:>6}  {:<32} {}",
                e.label,
                e.kind.name(),
                s.dim(),
                params,
                e.fields,
                b.lo.iter()
                    .zip(&b.hi)
                    .map(|(l, h)| format!("[{l}, {h}]"))
                    .collect::<Vec<_>>()
                    .join(" x ")
            )
            .unwrap();
        }
        t
    };
    Ok(Outcome { code: EXIT_OK, stdout })
}
