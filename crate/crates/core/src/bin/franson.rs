use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use franson_core::analysis::{hbt_g2, hom_scan, HbtSource};
use franson_core::config::{load_config, ExperimentConfig, Mode};
use franson_core::error::{Error, Result};
use franson_core::pipeline::{analyze_stage, correlate_stage, run_phase_scan, simulate_stage, ScanResult};

#[derive(Parser)]
#[command(
    name = "franson",
    version,
    about = "Franson-type two-photon interference: simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every phase setting and write time tags to OUT/tags/
    Simulate(RunArgs),
    /// Correlate time-tag files into OUT/hist/ (default input: OUT/tags/*.txt)
    Correlate {
        #[command(flatten)]
        common: CommonArgs,
        /// Time-tag files; the phase comes from a `# phase: <rad>` header or else run.phase_scan
        tags: Vec<PathBuf>,
    },
    /// Normalize, fit and summarize the histograms in OUT
    Analyze(CommonArgs),
    /// Simulate (or evaluate the model), correlate and analyze in one go
    Scan(RunArgs),
    /// Two-photon interference dip on detectors (1,2) versus delay mismatch
    Hom {
        #[command(flatten)]
        run: RunArgs,
        /// Delay mismatches, ps (comma separated)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        mismatches: Option<Vec<i64>>,
    },
    /// g2(0) of the source from a single-coupler correlation measurement
    Hbt {
        #[command(flatten)]
        run: RunArgs,
        /// Replace the source by a Poissonian one with this mean photon number
        #[arg(long)]
        poissonian: Option<f64>,
    },
    /// Print the default configuration
    Defaults,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (flat `key = value`); defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "franson-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Total cycles (overrides run.n_cycles)
    #[arg(long)]
    cycles: Option<u64>,
    /// Master seed (overrides run.master_seed)
    #[arg(long)]
    seed: Option<u64>,
    /// analytic or montecarlo (overrides run.mode)
    #[arg(long)]
    mode: Option<Mode>,
    /// Worker threads (overrides run.workers)
    #[arg(long)]
    workers: Option<usize>,
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_run(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = load(&args.common)?;
    if let Some(m) = args.mode {
        cfg.run.mode = m;
    }
    if cfg.run.mode == Mode::Analytic {
        for (flag, given) in [
            ("--cycles", args.cycles.is_some()),
            ("--seed", args.seed.is_some()),
            ("--workers", args.workers.is_some()),
        ] {
            if given {
                eprintln!("warning: {flag} is ignored in analytic mode");
            }
        }
    } else {
        if let Some(n) = args.cycles {
            cfg.run.n_cycles = n;
        }
        if let Some(s) = args.seed {
            cfg.run.master_seed = s;
        }
        if let Some(w) = args.workers {
            cfg.run.workers = w;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn report(result: &ScanResult, out: &Path) {
    for f in &result.fits {
        let v2 = f.visibility_corrected.map_or("-".to_string(), |v| format!("{v:.4}"));
        println!(
            "pair ({},{}): V1 = {:.4} ± {:.4}  V2 = {v2}",
            f.pair.0, f.pair.1, f.visibility_raw, f.visibility_stderr
        );
    }
    if let Some(o) = &result.summary.overlap {
        println!(
            "overlap: gamma^2 = {:.4}, gamma = {:.4}, above 1/sqrt(2): {}",
            o.gamma_squared, o.gamma, o.exceeds_nonlocality_threshold
        );
    }
    println!("wrote {}", out.display());
}

fn tag_files(out: &Path) -> Result<Vec<PathBuf>> {
    let dir = out.join("tags");
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

fn default_mismatches() -> Vec<i64> {
    let mut m: Vec<i64> = (-12..=12).map(|k| k * 50).collect();
    m.extend([-1000, 1000]);
    m.sort_unstable();
    m
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_config_string());
        }
        Command::Simulate(args) => {
            let mut cfg = load_run(&args)?;
            if cfg.run.mode == Mode::Analytic {
                eprintln!("warning: simulate always runs the Monte Carlo engine; run.mode ignored");
                cfg.run.mode = Mode::MonteCarlo;
            }
            let files = simulate_stage(&cfg, &args.common.out)?;
            println!(
                "wrote {} time-tag files to {}",
                files.len(),
                args.common.out.join("tags").display()
            );
        }
        Command::Correlate { common, tags } => {
            let cfg = load(&common)?;
            let tags = if tags.is_empty() { tag_files(&common.out)? } else { tags };
            let data = correlate_stage(&cfg, &tags, &common.out)?;
            println!("wrote {} settings to {}", data.len(), common.out.join("hist").display());
        }
        Command::Analyze(common) => {
            let cfg = load(&common)?;
            let result = analyze_stage(&cfg, &common.out)?;
            report(&result, &common.out);
        }
        Command::Scan(args) => {
            let cfg = load_run(&args)?;
            let result = run_phase_scan(&cfg, Some(&args.common.out))?;
            report(&result, &args.common.out);
        }
        Command::Hom { run, mismatches } => {
            let cfg = load_run(&run)?;
            let ms = mismatches.unwrap_or_else(default_mismatches);
            let scan = hom_scan(&cfg, &ms)?;
            let out = &run.common.out;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let mut csv = String::from("mismatch_ps,rate,reference,relative_rate\n");
            for p in &scan.points {
                let _ = writeln!(csv, "{},{},{},{}", p.mismatch, p.rate, p.reference, p.relative_rate());
            }
            write(&out.join("hom.csv"), &csv)?;
            let width = scan.fitted_width.map_or("none".to_string(), |w| w.to_string());
            let summary = format!(
                "mode: {}\nplateau: {}\ndip_visibility: {}\nfitted_width_ps: {width}\npredicted_width_ps: {}\n",
                cfg.run.mode, scan.plateau, scan.dip_visibility, scan.predicted_width
            );
            write(&out.join("hom_summary.txt"), &summary)?;
            println!("HOM dip visibility {:.4}, width {width} ps", scan.dip_visibility);
        }
        Command::Hbt { run, poissonian } => {
            let cfg = load_run(&run)?;
            if cfg.run.mode == Mode::Analytic {
                eprintln!("warning: hbt always runs the Monte Carlo engine; run.mode ignored");
            }
            let source = match poissonian {
                Some(mean_photons) => HbtSource::Poissonian { mean_photons },
                None => HbtSource::Configured,
            };
            let r = hbt_g2(&cfg, cfg.run.n_cycles, source)?;
            let out = &run.common.out;
            fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            let sat_mean = r.satellite_areas.iter().sum::<f64>() / r.satellite_areas.len() as f64;
            let text = format!(
                "g2: {}\ng2_stderr: {}\nexpected: {}\ncentral_area: {}\nsatellite_mean: {}\nn_cycles: {}\n",
                r.g2, r.g2_stderr, r.expected, r.central_area, sat_mean, r.n_cycles
            );
            write(&out.join("hbt.txt"), &text)?;
            println!("g2(0) = {:.5} ± {:.5}", r.g2, r.g2_stderr);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
