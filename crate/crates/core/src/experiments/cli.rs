//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::runners::{run_experiment, ExperimentReport};
use super::{run_checks, ExperimentConfig, ExperimentKind, SweepResult};
use crate::error::{Error, Result};
use crate::output::fmt_f64;

#[derive(Debug, Parser)]
#[command(name = "ghostlab", version, about = "Delayed-activation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form versus simulated toy loss profile.
    Fig2a(RunArgs),
    /// Gradient descent on the toy loss over a learning-rate grid.
    #[command(alias = "fig2bcd")]
    Fig2(RunArgs),
    /// Latent flow, fixed points and ghosts during RNN training at two rates.
    Fig3(RunArgs),
    /// Stuck-run detection and the confidence intervention.
    Fig4(RunArgs),
    /// Learning-rate sweep.
    #[command(name = "figS1")]
    FigS1(RunArgs),
    /// Rank sweep with a linear readout.
    #[command(name = "figS2")]
    FigS2(RunArgs),
    /// Free-form RNN run driven by `--config` and `--override`.
    Custom(RunArgs),
    /// Numerical self-test; exits nonzero on any failure.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config; defaults to the preset of the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of seeds (indices 0..n).
    #[arg(long)]
    seeds: Option<u64>,
    /// `key=value`, repeatable; applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Use full-size cohorts (100 runs for fig4).
    #[arg(long = "paper-scale")]
    full_scale: bool,
}

fn build_config(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let c = ExperimentConfig::from_json(&text)?;
            if c.kind != kind {
                return Err(Error::InvalidConfig(format!(
                    "{} holds a `{}` config",
                    path.display(),
                    c.kind.as_str()
                )));
            }
            c
        }
        None => ExperimentConfig::preset(kind),
    };
    if args.full_scale {
        config.apply_full_scale();
    }
    if let Some(n) = args.seeds {
        config.set_seed_count(n);
    }
    for o in &args.overrides {
        config.apply_override(o)?;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    config.resolve()
}

fn sweep_lines(sweep: &SweepResult) -> String {
    let mut s = String::from("cell params learned stuck neither median_epochs_to_learned final_loss_mean\n");
    for c in &sweep.cells {
        let params: Vec<String> = c.params.iter().map(|(k, v)| format!("{k}={}", fmt_f64(*v))).collect();
        s.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            c.cell,
            params.join(","),
            c.outcomes.learned,
            c.outcomes.stuck,
            c.outcomes.neither,
            c.median_epochs_to_learned.map(fmt_f64).unwrap_or_else(|| "-".into()),
            fmt_f64(c.final_loss_mean)
        ));
    }
    s
}

fn summarize(report: &ExperimentReport) -> String {
    match report {
        ExperimentReport::Fig2a(r) => r
            .confidences
            .iter()
            .zip(&r.max_deviation)
            .map(|(c, d)| format!("c={c}: max |numeric - analytic| = {}\n", fmt_f64(*d)))
            .collect(),
        ExperimentReport::Fig2(r) => {
            let mut s = String::from("alpha final_loss_mean regimes\n");
            for c in &r.sweep.cells {
                let regimes: Vec<&str> = c.seeds.iter().filter_map(|x| x.final_regime.as_deref()).collect();
                s.push_str(&format!(
                    "{} {} {}\n",
                    fmt_f64(c.param("alpha").unwrap_or(f64::NAN)),
                    fmt_f64(c.final_loss_mean),
                    regimes.join(",")
                ));
            }
            s
        }
        ExperimentReport::Fig3(r) => r
            .arms
            .iter()
            .map(|a| {
                let learned = a.runs.iter().filter(|x| x.metadata.epochs_to_learned.is_some()).count();
                let bif = a.runs.iter().filter(|x| !x.bifurcations.is_empty()).count();
                format!(
                    "{} alpha={}: {} runs, {learned} reached accuracy 1, {bif} with a bifurcation\n",
                    a.label,
                    fmt_f64(a.alpha),
                    a.runs.len()
                )
            })
            .collect(),
        ExperimentReport::Fig4(r) => {
            let recovered = r.stuck.iter().filter(|s| s.recovered).count();
            let control = r.stuck.iter().filter(|s| s.control_recovered == Some(true)).count();
            format!(
                "cohort {}: learned {}, stuck {}, neither {}; after intervention {recovered}/{} recovered, control {control}/{}\n",
                r.cohort,
                r.outcomes.learned,
                r.outcomes.stuck,
                r.outcomes.neither,
                r.stuck.len(),
                r.stuck.len()
            )
        }
        ExperimentReport::Sweep(s) => sweep_lines(s),
    }
}

fn execute(command: Command) -> Result<i32> {
    let (kind, args) = match command {
        Command::Check { seed } => {
            let report = run_checks(seed)?;
            print!("{}", report.render());
            return Ok(if report.all_passed() { 0 } else { 1 });
        }
        Command::Fig2a(a) => (ExperimentKind::Fig2a, a),
        Command::Fig2(a) => (ExperimentKind::Fig2, a),
        Command::Fig3(a) => (ExperimentKind::Fig3, a),
        Command::Fig4(a) => (ExperimentKind::Fig4, a),
        Command::FigS1(a) => (ExperimentKind::FigS1, a),
        Command::FigS2(a) => (ExperimentKind::FigS2, a),
        Command::Custom(a) => (ExperimentKind::Custom, a),
    };
    let config = build_config(kind, &args)?;
    let report = run_experiment(&config)?;
    print!("{}", summarize(&report));
    println!("outputs in {}", config.out_dir.display());
    Ok(0)
}

/// Parse `args` (program name first), run, and return the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_input_is_a_usage_error() {
        assert_eq!(cli_main(["ghostlab", "fig9"]), 2);
        assert_eq!(cli_main(["ghostlab", "fig2", "--bogus"]), 2);
        assert_eq!(cli_main(["ghostlab"]), 2);
    }

    #[test]
    fn overrides_reach_the_config() {
        let args = RunArgs {
            config: None,
            out: Some("somewhere".into()),
            seeds: Some(3),
            overrides: vec!["T=50".into()],
            full_scale: false,
        };
        let c = build_config(ExperimentKind::Fig2, &args).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.out_dir, PathBuf::from("somewhere"));
        assert!((c.derived.toy_r_star - 9.8696e-4).abs() < 1e-8);
    }
}
