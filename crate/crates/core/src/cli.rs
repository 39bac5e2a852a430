//! Command-line front end. Each subcommand runs one recipe stage and writes
//! its artifacts under the output directory.

use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::calibrate::{CalibrationResult, Estimate};
use crate::correct::{correct_frame, CorrectionSpec};
use crate::error::{Error, Result};
use crate::recipe::{evaluate_correction, Recipe, PRESETS};
use crate::report::{run_report, ReportOptions};
use crate::storage::{
    frames_from_csv, frames_to_csv, load_dataset, read_text, save_dataset, save_ring_trace, save_stitched, write_file, write_json,
    MANIFEST_FILE,
};
use crate::sweep::SweepDataset;
use crate::time::Time;

#[derive(Debug, Parser)]
#[command(name = "wcd", version, about = "Waveform capture on simulated carry-chain delay lines")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Preset name or path to a recipe file.
    #[arg(long, short)]
    pub config: Option<String>,
    /// Output directory [default: $WCD_OUT/<recipe>, or wcd-out/<recipe>].
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Derive every seed of the recipe from this value.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Phase-sweep acquisition; one dataset directory per channel.
    Sweep(Common),
    /// Carry-time fit, transfer function and single-shot precision.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Saved dataset directories (or a directory of them) instead of a
        /// fresh acquisition.
        #[arg(long)]
        data: Vec<PathBuf>,
    },
    /// Pulse-shrinkage rate of the first channel.
    Shrink {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Shrinkage correction. With `--input` it filters a frames CSV
    /// (`-` for stdin) instead of running a recipe.
    Correct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Destination of filter mode; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 15)]
        gap_threshold: usize,
        #[arg(long, default_value_t = 0.95)]
        dilation: f64,
    },
    /// Ring-oscillator simulation: node traces, stitched captures and, if
    /// configured, the per-gate timescale.
    Ro(Common),
    /// Every end-to-end check against configured ground truth.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        property_cases: usize,
    },
    /// List the built-in presets.
    Presets,
}

struct Ctx {
    recipe: Recipe,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn new(common: &Common, default: &str) -> Result<Self> {
        let mut recipe = Recipe::resolve(common.config.as_deref().unwrap_or(default))?;
        if let Some(s) = common.seed {
            recipe = recipe.with_seed(s);
        }
        let out = common.out.clone().unwrap_or_else(|| {
            let root = std::env::var_os("WCD_OUT").map_or_else(|| PathBuf::from("wcd-out"), PathBuf::from);
            root.join(&recipe.name)
        });
        write_file(&out.join("recipe.config"), recipe.to_config()?)?;
        Ok(Ctx { recipe, out, quiet: common.quiet })
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.out.join(name);
        write_json(&p, value)?;
        Ok(p)
    }

    fn datasets(&self, dirs: &[PathBuf]) -> Result<Vec<SweepDataset>> {
        if dirs.is_empty() {
            return self.recipe.acquire();
        }
        let mut found = Vec::new();
        for d in dirs {
            if d.join(MANIFEST_FILE).exists() {
                found.push(d.clone());
                continue;
            }
            let mut subs: Vec<PathBuf> = std::fs::read_dir(d)
                .map_err(|source| crate::storage::StorageError::Io { path: d.clone(), source })?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(MANIFEST_FILE).exists())
                .collect();
            subs.sort();
            found.extend(subs);
        }
        if found.is_empty() {
            return Err(Error::InsufficientData("no dataset directories found".into()));
        }
        found.iter().map(|d| Ok(load_dataset(d)?)).collect()
    }
}

fn channel_dir(out: &Path, c: usize) -> PathBuf {
    out.join(format!("channel_{c:02}"))
}

fn cmd_sweep(common: &Common) -> Result<()> {
    let ctx = Ctx::new(common, "fig3a")?;
    for (c, ds) in ctx.recipe.acquire()?.iter().enumerate() {
        let dir = channel_dir(&ctx.out, c);
        save_dataset(ds, &dir)?;
        ctx.say(format!("{}: {} frames x {} taps", dir.display(), ds.frames.len(), ds.k()));
    }
    Ok(())
}

fn transfer_csv(cal: &CalibrationResult) -> String {
    let (r, f) = (&cal.transfer.rising, &cal.transfer.falling);
    let cell = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.3}"));
    let mut s = String::from("tap,t_rise_ps,t_fall_ps,dt_rise_ps,dt_fall_ps\n");
    for x in r.first.min(f.first)..=r.last.max(f.last) {
        let dt = |tf: &crate::calibrate::TransferFunction| tf.time_at(x).and_then(|_| tf.delta_t_ps[x - tf.first]);
        s.push_str(&format!("{x},{},{},{},{}\n", cell(r.time_at(x)), cell(f.time_at(x)), cell(dt(r)), cell(dt(f))));
    }
    s
}

fn cmd_calibrate(common: &Common, data: &[PathBuf]) -> Result<()> {
    let ctx = Ctx::new(common, "fig4")?;
    let sets = ctx.datasets(data)?;
    let cal = ctx.recipe.calibrate(&sets)?;
    ctx.json("calibration.json", &cal)?;
    write_file(&ctx.out.join("transfer.csv"), transfer_csv(&cal))?;
    let e = |e: Estimate| format!("{:.4} ± {:.4} ps", e.value, e.std_err);
    ctx.say(format!("tau_rise  {}", e(cal.tau_rise_ps)));
    ctx.say(format!("tau_fall  {}", e(cal.tau_fall_ps)));
    ctx.say(format!("precision {:.2} ps (rise {:.2}, fall {:.2})", cal.precision_ps(), cal.precision_rise_ps, cal.precision_fall_ps));
    Ok(())
}

fn cmd_shrink(common: &Common, data: Option<&PathBuf>) -> Result<()> {
    let ctx = Ctx::new(common, "fig3c")?;
    let sets = ctx.datasets(data.map(std::slice::from_ref).unwrap_or_default())?;
    let s = ctx.recipe.shrink(&sets[0])?;
    ctx.json("shrink.json", &s)?;
    ctx.say(format!("shrink rate {:.4} ± {:.4} carries per carry over {} pulses", s.rate, s.rate_err, s.samples.len()));
    Ok(())
}

fn filter_frames(input: &Path, output: Option<&Path>, spec: &CorrectionSpec) -> Result<()> {
    let text = if input == Path::new("-") {
        let mut s = String::new();
        std::io::stdin()
            .read_to_string(&mut s)
            .map_err(|source| crate::storage::StorageError::Io { path: input.into(), source })?;
        s
    } else {
        read_text(input)?
    };
    let frames = frames_from_csv(&text, None)?.iter().map(|f| correct_frame(f, spec)).collect::<Result<Vec<_>>>()?;
    let csv = frames_to_csv(&frames);
    match output {
        Some(p) => write_file(p, csv)?,
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|source| crate::storage::StorageError::Io { path: "<stdout>".into(), source })?,
    }
    Ok(())
}

fn cmd_correct(common: &Common) -> Result<()> {
    let ctx = Ctx::new(common, "fig6")?;
    let data = ctx.recipe.acquire()?;
    let rate = ctx.recipe.shrink(&data[0])?.rate;
    let spec = ctx.recipe.correction_spec(Some(rate))?;
    let truth = ctx.recipe.acquire_truth()?;
    for (c, ds) in data.iter().enumerate() {
        let dir = channel_dir(&ctx.out, c);
        save_dataset(ds, &dir)?;
        let corrected: Vec<_> = ds.frames.iter().map(|f| correct_frame(f, &spec)).collect::<Result<_>>()?;
        write_file(&dir.join("corrected.csv"), frames_to_csv(&corrected))?;
        write_file(&dir.join("corrected.pgm"), crate::storage::frames_to_pgm(&corrected))?;
    }
    let outcome = evaluate_correction(&data[0], &truth, &spec)?;
    ctx.json("correction.json", &outcome)?;
    ctx.say(format!(
        "dilation {:.4}: mean |width error| {:.2} -> {:.2} carries over {} pulses",
        spec.dilation, outcome.raw_mean_abs_error, outcome.corrected_mean_abs_error, outcome.pulses
    ));
    Ok(())
}

fn cmd_ro(common: &Common) -> Result<()> {
    let ctx = Ctx::new(common, "fig7")?;
    let r = &ctx.recipe;
    let cal = if r.sweep.is_some() { Some(r.calibrate(&r.acquire()?)?) } else { None };
    if r.stitch.is_some() {
        let (trace, series) = r.stitch(cal.as_ref().map(|c| c.tau_rise_ps.value))?;
        save_ring_trace(&trace, &ctx.out.join("nodes"))?;
        save_stitched(&series, &ctx.out)?;
        ctx.say(format!("{} nodes, {} events, {} stitched samples per node", trace.nodes.len(), trace.events, series[0].bits.len()));
    } else {
        let ring = r.ring.as_ref().ok_or_else(|| Error::InvalidSpec(format!("recipe {:?} has no ring", r.name)))?;
        let lookahead = r.measure.as_ref().map_or(100_000.0, |m| m.capture_period_ps * 4.0);
        let trace = r.simulate_ring(Time::from_ps(ring.release_ps + lookahead))?;
        save_ring_trace(&trace, &ctx.out.join("nodes"))?;
    }
    if r.measure.is_some() {
        let nominal = |v| Estimate { value: v, std_err: 0.0 };
        let (tr, tf) = cal.as_ref().map_or((nominal(r.chain.tau_rise_ps), nominal(r.chain.tau_fall_ps)), |c| (c.tau_rise_ps, c.tau_fall_ps));
        let m = r.measure_ring(tr, tf)?;
        ctx.json("timescale.json", &m)?;
        ctx.say(format!("{:.2} ± {:.2} ps per gate from {} pulses", m.per_node_ps, m.per_node_err_ps, m.pulses));
    }
    Ok(())
}

fn cmd_report(common: &Common, property_cases: usize) -> Result<bool> {
    let out = common.out.clone().unwrap_or_else(|| {
        std::env::var_os("WCD_OUT").map_or_else(|| PathBuf::from("wcd-out"), PathBuf::from).join("report")
    });
    let mut opts = ReportOptions::new(out.join("determinism"));
    opts.property_cases = property_cases;
    if let Some(s) = common.seed {
        opts.seed = s;
    }
    let report = run_report(&opts)?;
    write_json(&out.join("report.json"), &report)?;
    if !common.quiet {
        print!("{}", report.table());
    }
    Ok(report.passed())
}

pub fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Sweep(c) => cmd_sweep(c)?,
        Command::Calibrate { common, data } => cmd_calibrate(common, data)?,
        Command::Shrink { common, data } => cmd_shrink(common, data.as_ref())?,
        Command::Correct { input: Some(input), output, gap_threshold, dilation, .. } => {
            let spec = CorrectionSpec { gap_threshold: *gap_threshold, dilation: *dilation };
            spec.validate()?;
            filter_frames(input, output.as_deref(), &spec)?;
        }
        Command::Correct { common, .. } => cmd_correct(common)?,
        Command::Ro(c) => cmd_ro(c)?,
        Command::Report { common, property_cases } => return cmd_report(common, *property_cases),
        Command::Presets => {
            for (name, _) in PRESETS {
                let r = Recipe::preset(name)?;
                println!("{name:<14} {}", r.description);
            }
        }
    }
    Ok(true)
}

/// Entry point of the `wcd` binary.
pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
