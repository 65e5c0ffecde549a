use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pbsa::harness::{
    emit_all, emit_sweep, load_scenario, sweep, Axis, EmitFormat, Labeled, Mode, Scenario, Sim,
};

#[derive(Parser)]
#[command(name = "pbsa", version, about = "Policy-based SDN security simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (every variant) and print its report.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// table, delimited or records
        #[arg(long, default_value = "table")]
        emit: EmitFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this variant.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run the scenario once per point of an axis.
    Sweep {
        scenario: PathBuf,
        /// pe_count, switch_count, as_count or request_rate
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values, or `start..=end:step`.
        #[arg(long)]
        points: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "delimited")]
        emit: EmitFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and print one switch's flow table.
    DumpFlows {
        scenario: PathBuf,
        #[arg(long)]
        switch: String,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Load and validate a scenario.
    Validate { scenario: PathBuf },
}

fn load(path: &PathBuf, seed: Option<u64>, mode: Option<Mode>) -> Result<Scenario> {
    let mut s = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(m) = mode {
        s.mode = m;
    }
    Ok(s)
}

fn parse_points(text: &str) -> Result<Vec<f64>> {
    if let Some((range, step)) = text.split_once(':') {
        let (a, b) = range
            .split_once("..=")
            .context("range points are written start..=end:step")?;
        let (a, b, step): (f64, f64, f64) = (a.trim().parse()?, b.trim().parse()?, step.trim().parse()?);
        if !(step > 0.0) || b < a {
            bail!("empty point range `{text}`");
        }
        let n = ((b - a) / step).floor() as usize;
        return Ok((0..=n).map(|i| a + step * i as f64).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad point `{p}`")))
        .collect()
}

fn write_out(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pick_variants(s: &Scenario, only: Option<&str>) -> Result<Vec<pbsa::harness::Variant>> {
    let all = s.variant_list();
    match only {
        None => Ok(all),
        Some(name) => {
            let v: Vec<_> = all.into_iter().filter(|v| v.name == name).collect();
            if v.is_empty() {
                bail!("scenario {} has no variant `{name}`", s.name);
            }
            Ok(v)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            emit,
            out,
            variant,
        } => {
            let s = load(&scenario, seed, mode)?;
            let mut reports = Vec::new();
            for v in pick_variants(&s, variant.as_deref())? {
                reports.push(Sim::new(&s.with_variant(&v))?.with_variant_name(&v.name).run());
            }
            let items: Vec<Labeled<'_>> = reports
                .iter()
                .map(|r| Labeled {
                    axis: "variant",
                    value: r.variant.clone(),
                    report: r,
                })
                .collect();
            write_out(&emit_all(&items, emit), out.as_ref())
        }
        Command::Sweep {
            scenario,
            axis,
            points,
            seed,
            emit,
            out,
        } => {
            let s = load(&scenario, seed, None)?;
            let points = parse_points(&points)?;
            let series = sweep(&s, axis, &points)?;
            write_out(&emit_sweep(axis, &series, emit), out.as_ref())
        }
        Command::DumpFlows {
            scenario,
            switch,
            variant,
        } => {
            let s = load(&scenario, None, None)?;
            let v = pick_variants(&s, variant.as_deref())?.remove(0);
            let mut sim = Sim::new(&s.with_variant(&v))?;
            sim.run();
            let Some(sw) = sim.switch(&switch) else {
                bail!("scenario {} has no switch `{switch}`", s.name);
            };
            print!("{}", sw.render_dump());
            Ok(())
        }
        Command::Validate { scenario } => {
            let s = load(&scenario, None, None)?;
            let switches: usize = s.domains.iter().map(|d| d.switches.len()).sum();
            let hosts: usize = s.domains.iter().map(|d| d.hosts.len()).sum();
            let pes: usize = s.domains.iter().map(|d| d.resolved.len()).sum();
            println!(
                "{}: ok ({} domains, {switches} switches, {hosts} hosts, {pes} policy expressions, {} traffic entries, {} variants)",
                s.name,
                s.domains.len(),
                s.traffic.len(),
                s.variants.len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
