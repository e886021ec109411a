mod args;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::Parser;
use nilflow_core::geometry::{bchd_multiply, distance_bounds, ricci_form};
use nilflow_core::heatkernel::{
    bounded_suite, inversion_invariance_test, log_sobolev_suite, log_sobolev_test,
    projection_convergence_study, quasi_invariance_test, MCReport, Verdict,
};
use nilflow_core::norms::check_norm_inequalities;
use nilflow_core::stochastic::{simulate_trials, SimConfig, Simulator};
use nilflow_core::{validate_extension, zoo, Element, ExtensionSpec, NilError};
use serde_json::json;

use args::{Cli, Command, SimArgs, TestKind};
use output::{parse_vector, Manifest, Sink};

/// Rows simulated per batch before they are written out.
const CSV_CHUNK: usize = 4096;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    /// A test ran and its verdict was fail.
    Test,
    Usage(String),
    /// The spec could not be parsed or failed a structural check.
    Spec(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Test | Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Spec(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Parameter errors from the library come from flag values.
impl From<NilError> for Failure {
    fn from(e: NilError) -> Self {
        match e {
            NilError::InvalidParameter(_) | NilError::Dimension { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(Failure::Runtime(e.into())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Test => {}
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Spec(msg) => eprintln!("spec error: {msg}"),
                Failure::Runtime(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let start = Instant::now();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut manifest = Manifest::new(cli.command.name(), argv);
    match cli.command {
        Command::Zoo {
            model,
            size,
            seed,
            out,
        } => {
            let size = size.unwrap_or(match model.as_str() {
                "step3kl" => 16,
                "beta" | "pathspace" => 3,
                _ => 2,
            });
            let desc = zoo::build_by_name(&model, size, seed)?;
            manifest.spec(&desc.spec);
            manifest.seed = Some(seed);
            manifest.config = json!({ "model": model, "size": size, "params": desc.params });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_json(&desc.spec)?;
            manifest.finish(sink, start)?;
        }
        Command::Validate { spec, tol, out } => {
            let spec = read_spec(&spec)?;
            let report = validate_extension(&spec, tol);
            manifest.spec(&spec);
            manifest.config = json!({ "tol": tol });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_json(&report)?;
            manifest.finish(sink, start)?;
            if !report.is_valid() {
                return Err(Failure::Spec(check_diagnostic(&report)));
            }
        }
        Command::Norms {
            spec,
            tol,
            restarts,
            slack,
            out,
        } => {
            let spec = load_valid_spec(&spec, tol)?;
            let report = check_norm_inequalities(&spec, restarts, slack);
            manifest.spec(&spec);
            manifest.config = json!({ "tol": tol, "restarts": restarts, "slack": slack });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_json(&report)?;
            manifest.finish(sink, start)?;
            if !report.all_pass() {
                for c in report.inequalities.iter().filter(|c| !c.passed) {
                    eprintln!("FAIL {}: {} > {}", c.name, c.lhs, c.rhs);
                }
                return Err(Failure::Test);
            }
        }
        Command::Multiply {
            spec,
            tol,
            g,
            h,
            out,
        } => {
            let spec = load_valid_spec(&spec, tol)?;
            let g = element(&spec, &g, "--g")?;
            let h = element(&spec, &h, "--h")?;
            let prod = bchd_multiply(&spec, &g, &h)?;
            manifest.spec(&spec);
            manifest.config = json!({ "tol": tol, "g": g.coords(), "h": h.coords() });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_line(&output::format_vector(prod.coords()))?;
            manifest.finish(sink, start)?;
        }
        Command::Ricci { spec, tol, out } => {
            let spec = load_valid_spec(&spec, tol)?;
            manifest.spec(&spec);
            manifest.config = json!({ "tol": tol });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_json(&ricci_form(&spec))?;
            manifest.finish(sink, start)?;
        }
        Command::Distance {
            spec,
            tol,
            y,
            budget,
            out,
        } => {
            let spec = load_valid_spec(&spec, tol)?;
            let y = element(&spec, &y, "--y")?;
            let bounds = distance_bounds(&spec, &y, budget)?;
            manifest.spec(&spec);
            manifest.config = json!({ "tol": tol, "y": y.coords(), "budget": budget });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_json(&bounds)?;
            manifest.finish(sink, start)?;
        }
        Command::Simulate { spec, sim, out } => {
            let spec = load_valid_spec(&spec, sim.tol)?;
            let config = sim_config(&sim)?;
            manifest.spec(&spec);
            manifest.seed = Some(config.seed);
            manifest.config = serde_json::to_value(&config).context("serializing config")?;
            let mut sink = Sink::new(out.as_deref())?;
            let mut csv = sink.csv(&spec, config.seed)?;
            let simulator = Simulator::new(&spec, config.engine);
            let mut lo = 0;
            while lo < config.trials {
                let hi = (lo + CSV_CHUNK).min(config.trials);
                let rows = simulate_trials(&spec, &simulator, &config, lo..hi)?;
                for (i, g) in (lo..hi).zip(&rows) {
                    csv.row(i, g.coords())?;
                }
                lo = hi;
            }
            csv.finish()?;
            manifest.finish(sink, start)?;
        }
        Command::Verify {
            spec,
            test,
            sim,
            h,
            p,
            ells,
            out,
        } => {
            let spec = load_valid_spec(&spec, sim.tol)?;
            let config = sim_config(&sim)?;
            let report = verify(&spec, test, &config, h.as_deref(), p, ells.as_deref())?;
            manifest.spec(&spec);
            manifest.seed = Some(config.seed);
            manifest.config = json!({
                "test": test.name(),
                "sim": config,
                "tol": sim.tol,
                "h": h,
                "p": p,
                "ells": ells,
            });
            let mut sink = Sink::new(out.as_deref())?;
            sink.write_json(&json!({
                "spec_sha256": spec.hash_hex(),
                "manifest": sink.manifest_label(),
                "report": report,
            }))?;
            manifest.finish(sink, start)?;
            eprintln!("{}: {}", report.test, report.verdict);
            if report.verdict == Verdict::Fail {
                return Err(Failure::Test);
            }
        }
    }
    Ok(())
}

fn sim_config(sim: &SimArgs) -> Result<SimConfig, Failure> {
    let config = SimConfig::new(sim.t, sim.steps, sim.trials, sim.seed).with_engine(sim.engine);
    config.validate()?;
    Ok(config)
}

fn verify(
    spec: &ExtensionSpec,
    test: TestKind,
    config: &SimConfig,
    h: Option<&str>,
    p: f64,
    ells: Option<&str>,
) -> Result<MCReport, Failure> {
    let report = match test {
        TestKind::Inversion => inversion_invariance_test(spec, &bounded_suite(spec), config, None)?,
        TestKind::Logsob => log_sobolev_test(spec, &log_sobolev_suite(spec), config)?,
        TestKind::Quasi => {
            let h = match h {
                Some(text) => element(spec, text, "--h")?,
                None => spec.basis(0),
            };
            quasi_invariance_test(spec, &h, p, &bounded_suite(spec), config)?
        }
        TestKind::Convergence => {
            let ells = match ells {
                Some(text) => parse_ranks(text)?,
                None => default_ranks(spec.m()),
            };
            projection_convergence_study(spec, &ells, config)?
        }
    };
    Ok(report)
}

/// Powers of two below `m`.
fn default_ranks(m: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |k| Some(k * 2))
        .take_while(|&k| k < m)
        .collect()
}

fn parse_ranks(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Failure::Usage(format!("--ells: `{s}`: {e}")))
        })
        .collect()
}

fn element(spec: &ExtensionSpec, text: &str, flag: &str) -> Result<Element, Failure> {
    let coords = parse_vector(text).map_err(|e| Failure::Usage(format!("{flag}: {e}")))?;
    if coords.len() != spec.dim() {
        return Err(Failure::Usage(format!(
            "{flag}: expected {} coordinates, found {}",
            spec.dim(),
            coords.len()
        )));
    }
    Ok(Element::from_coords(spec.m(), coords)?)
}

fn read_spec(path: &str) -> Result<ExtensionSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read `{path}`: {e}")))?;
    serde_json::from_str(&text).map_err(|e| Failure::Spec(format!("{path}: {e}")))
}

/// Reads a spec and rejects it unless every structural check passes.
fn load_valid_spec(path: &str, tol: f64) -> Result<ExtensionSpec, Failure> {
    let spec = read_spec(path)?;
    let report = validate_extension(&spec, tol);
    if report.is_valid() {
        Ok(spec)
    } else {
        Err(Failure::Spec(check_diagnostic(&report)))
    }
}

fn check_diagnostic(report: &nilflow_core::ValidationReport) -> String {
    report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| {
            format!(
                "check `{}` failed ({}): {}",
                c.check.name(),
                c.check.describe(),
                c.detail
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Test.code(), 1);
        assert_eq!(Failure::Usage(String::new()).code(), 2);
        assert_eq!(Failure::Spec(String::new()).code(), 3);
        let bad_flag: Failure = NilError::InvalidParameter("t".into()).into();
        assert_eq!(bad_flag.code(), 2);
        let shape: Failure = NilError::NonFinite("omega").into();
        assert_eq!(shape.code(), 1);
    }

    #[test]
    fn default_ranks_are_powers_of_two_below_m() {
        assert_eq!(default_ranks(16), vec![1, 2, 4, 8]);
        assert_eq!(default_ranks(5), vec![1, 2, 4]);
        assert!(default_ranks(1).is_empty());
    }
}
