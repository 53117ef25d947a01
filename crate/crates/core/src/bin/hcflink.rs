use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use hcflink::budget::LinkMode;
use hcflink::constellation::{gmi_monte_carlo, optimize_shaping, quadrature, Constellation, ShapingConfig};
use hcflink::fiber::GasLine;
use hcflink::report::{self, compare, Aggregate, Tolerances};
use hcflink::scenario::{load_scenario, ReferenceTable, Scenario};
use hcflink::waveform::{measure_channel, DspConfig, ImpairmentSpec};
use hcflink::Error;

const EXIT_COMPARE_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "hcflink", version, about = "Bi-directional hollow-core fibre WDM link simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; data files resolve relative to it.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory or file, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Bidi,
    Unidi,
}

impl From<Mode> for LinkMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Bidi => LinkMode::Bidi,
            Mode::Unidi => LinkMode::Unidi,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the channel plan; with --out, also write it as CSV.
    Plan,
    /// Evaluate every channel and write results, aggregates and a manifest.
    Simulate,
    /// Re-evaluate the scenario over several span lengths.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        lengths_km: Vec<f64>,
        /// Multiplies the whole attenuation curve (what-if for lower-loss fibre).
        #[arg(long, default_value_t = 1.0)]
        attenuation_scale: f64,
    },
    /// Monte-Carlo GMI of a constellation over a list of SNRs.
    Gmi {
        #[command(flatten)]
        format: FormatArg,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        snr_db: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Also print the Gauss-Hermite value of this order.
        #[arg(long)]
        quadrature: Option<usize>,
    },
    /// Waveform-level measurement of one channel (best 3 of N traces).
    Waveform {
        #[command(flatten)]
        format: FormatArg,
        /// JSON with optional `dsp` and `impairments` objects.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        snr_db: Option<f64>,
        #[arg(long)]
        linewidth_hz: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        rotation_rad: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        frequency_offset_hz: Option<f64>,
        /// Baseband gas line `offset_hz,fwhm_hz,peak_loss_db`; repeatable.
        #[arg(long, allow_hyphen_values = true)]
        gas_line: Vec<String>,
        #[arg(long)]
        gla_compensation: bool,
        #[arg(long)]
        symbols: Option<usize>,
        #[arg(long, default_value_t = 5)]
        traces: usize,
    },
    /// Optimise a constellation for GMI at a target SNR and save it as CSV.
    Shape {
        #[arg(long)]
        bits: u32,
        #[arg(long, allow_negative_numbers = true)]
        snr_db: f64,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Compare an aggregate file against a reference table.
    Compare {
        /// aggregate.json, or a run directory containing one.
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        gmi_tol: f64,
        #[arg(long, default_value_t = 0.03)]
        decoded_tol: f64,
    },
}

#[derive(Args)]
struct FormatArg {
    /// Constellation CSV (`label_bits,i,q`).
    #[arg(long, conflicts_with = "square_qam")]
    constellation: Option<PathBuf>,
    /// Gray square QAM with this many bits per symbol.
    #[arg(long)]
    square_qam: Option<u32>,
}

impl FormatArg {
    fn load(&self, default_bits: u32) -> hcflink::Result<Constellation> {
        match (&self.constellation, self.square_qam) {
            (Some(p), _) => Constellation::load(p),
            (None, Some(m)) => Constellation::square_qam(m),
            (None, None) => Constellation::square_qam(default_bits),
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct WaveformFile {
    #[serde(default)]
    dsp: DspConfig,
    #[serde(default)]
    impairments: ImpairmentSpec,
}

enum Failure {
    Compare,
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let config = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config));
        if config {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Compare) => ExitCode::from(EXIT_COMPARE_FAIL),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn scenario(c: &Common) -> Result<Scenario, Failure> {
    let path = c
        .scenario
        .as_deref()
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("--scenario is required")))?;
    let mut s = load_scenario(path)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(m) = c.mode {
        s.mode = m.into();
    }
    for w in &s.warnings {
        log::warn!("{w}");
    }
    Ok(s)
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    c.out
        .as_deref()
        .ok_or_else(|| Failure::Config(anyhow::anyhow!("--out is required")))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let c = &cli.common;
    match &cli.cmd {
        Cmd::Plan => {
            let s = scenario(c)?;
            let plan = &s.link.plan;
            println!("{:<5} {:>8} {:>12} {:>14} {:>14}", "band", "channels", "width_thz", "first_thz", "last_thz");
            for b in &plan.bands {
                let ch = plan.band_channels(b.name);
                println!(
                    "{:<5} {:>8} {:>12.4} {:>14.6} {:>14.6}",
                    b.name.as_str(),
                    ch.len(),
                    b.bandwidth_hz / 1e12,
                    ch.first().map_or(0.0, |c| c.frequency_hz / 1e12),
                    ch.last().map_or(0.0, |c| c.frequency_hz / 1e12),
                );
            }
            println!(
                "total {} channels, {:.4} THz, {} excluded",
                plan.len(),
                plan.total_bandwidth_hz() / 1e12,
                plan.excluded_channels.len()
            );
            if let Some(out) = &c.out {
                let mut text = String::from("channel_id,band,freq_hz,wavelength_nm,excluded\n");
                for ch in plan.channels() {
                    text.push_str(&format!(
                        "{},{},{},{},{}\n",
                        ch.id,
                        ch.band,
                        report::fmt_g(ch.frequency_hz),
                        report::fmt_g(ch.wavelength_nm()),
                        plan.is_excluded(ch.id)
                    ));
                }
                std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Cmd::Simulate => {
            let s = scenario(c)?;
            let out = out_dir(c)?;
            let ev = report::run(&s, out)?;
            print_aggregate(&ev.aggregate);
        }
        Cmd::Sweep {
            lengths_km,
            attenuation_scale,
        } => {
            let mut s = scenario(c)?;
            let out = out_dir(c)?;
            // fit once at the scenario's own length, then hold the fit fixed
            let base = report::evaluate(&s)?;
            if let Some(cal) = &base.calibration {
                s.link.trx_snr_db = cal.trx_snr_db.clone();
                s.fec = s.fec.with_gap(cal.ngmi_gap);
                s.reference = None;
            }
            if *attenuation_scale != 1.0 {
                s.link.fiber = s.link.fiber.scaled_attenuation(*attenuation_scale)?;
            }
            let mut text = String::from("length_km,gmi_tbps,decoded_tbps,mean_penalty_db\n");
            for &len in lengths_km {
                let mut point = s.clone();
                point.link.fiber = point.link.fiber.clone().with_length(len);
                let ev = report::evaluate(&point)?;
                let a = &ev.aggregate;
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    report::fmt_g(len),
                    report::fmt_g(a.total.gmi_tbps),
                    report::fmt_g(a.total.decoded_tbps),
                    a.bidi_penalty.map_or("".into(), |p| report::fmt_g(p.mean_db))
                ));
            }
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("sweep.csv");
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            print!("{text}");
        }
        Cmd::Gmi {
            format,
            snr_db,
            samples,
            quadrature: order,
        } => {
            let con = format.load(4)?;
            let seed = c.seed.unwrap_or(1);
            println!("snr_db,gmi,std_error,ngmi{}", if order.is_some() { ",gmi_quadrature" } else { "" });
            for (i, &snr) in snr_db.iter().enumerate() {
                let e = gmi_monte_carlo(&con, snr, *samples, hcflink::seed::mix(seed, i as u64))?;
                let q = match order {
                    Some(n) => format!(",{:.6}", quadrature::gmi_quadrature(&con, snr, *n)?),
                    None => String::new(),
                };
                println!("{snr},{:.6},{:.2e},{:.6}{q}", e.gmi, e.std_error, e.ngmi(con.bits()));
            }
        }
        Cmd::Waveform {
            format,
            config,
            snr_db,
            linewidth_hz,
            rotation_rad,
            frequency_offset_hz,
            gas_line,
            gla_compensation,
            symbols,
            traces,
        } => {
            let con = format.load(4)?;
            let mut wf = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    serde_json::from_str::<WaveformFile>(&text).map_err(|e| Error::parse(p, e))?
                }
                None => WaveformFile::default(),
            };
            let imp = &mut wf.impairments;
            if snr_db.is_some() {
                imp.snr_awgn_db = *snr_db;
            }
            if let Some(v) = linewidth_hz {
                imp.laser_linewidth_hz = *v;
            }
            if let Some(v) = rotation_rad {
                imp.polarization_rotation_rad = *v;
            }
            if let Some(v) = frequency_offset_hz {
                imp.frequency_offset_hz = *v;
            }
            for g in gas_line {
                imp.gla_lines.push(parse_gas_line(g)?);
            }
            if *gla_compensation {
                wf.dsp.gla_enabled = true;
            }
            if let Some(n) = symbols {
                wf.dsp.n_symbols = *n;
            }
            let m = measure_channel(&wf.dsp, &wf.impairments, &con, *traces, c.seed.unwrap_or(1))?;
            for (i, t) in m.traces.iter().enumerate() {
                println!(
                    "trace {i}: snr {:.3} dB (pre-eq {:.3}, post-eq {:.3}){}{}",
                    t.snr_db,
                    t.snr_pre_equalizer_db,
                    t.snr_post_equalizer_db,
                    if t.diverged { " diverged" } else { "" },
                    if m.used.contains(&i) { " *" } else { "" }
                );
            }
            println!("snr {:.3} dB, gmi {:.4} bit/2D", m.snr_db, m.gmi);
            if let Some(out) = &c.out {
                let text = serde_json::to_string_pretty(&m).context("serialising measurement")?;
                std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Cmd::Shape {
            bits,
            snr_db,
            iterations,
            step,
        } => {
            let mut cfg = ShapingConfig::default();
            if let Some(n) = iterations {
                cfg.iterations = *n;
            }
            if let Some(s) = step {
                cfg.step = *s;
            }
            if let Some(seed) = c.seed {
                cfg.seed = seed;
            }
            let o = optimize_shaping(*bits, *snr_db, &cfg)?;
            println!(
                "{:?}: GMI {:.5} vs square {:.5} at {} dB",
                o.status, o.gmi, o.baseline_gmi, o.target_snr_db
            );
            if let Some(out) = &c.out {
                let note = format!(
                    "{}-point constellation optimised for GMI at {} dB SNR (AWGN)\n{} iterations, step {}, seed {}\nGMI {:.5} bit/2D, square QAM {:.5}",
                    1u64 << bits,
                    snr_db,
                    cfg.iterations,
                    cfg.step,
                    cfg.seed,
                    o.gmi,
                    o.baseline_gmi
                );
                o.constellation.save(out, Some(&note))?;
            }
        }
        Cmd::Compare {
            results,
            reference,
            gmi_tol,
            decoded_tol,
        } => {
            let path = if results.is_dir() {
                results.join(report::AGGREGATE_JSON)
            } else {
                results.clone()
            };
            let agg = Aggregate::load(&path)?;
            let r = ReferenceTable::load(reference)?;
            let rep = compare(
                &agg,
                &r,
                Tolerances {
                    gmi_rel: *gmi_tol,
                    decoded_rel: *decoded_tol,
                },
            )?;
            print!("{}", rep.render());
            if !rep.passed() {
                return Err(Failure::Compare);
            }
        }
    }
    Ok(())
}

fn parse_gas_line(s: &str) -> hcflink::Result<GasLine> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidArgument(format!("gas line `{s}`: {e}")))?;
    match v.as_slice() {
        [c, w, l] => GasLine::new(*c, *w, *l),
        _ => Err(Error::InvalidArgument(format!("gas line `{s}`: expected offset_hz,fwhm_hz,peak_loss_db"))),
    }
}

fn print_aggregate(a: &Aggregate) {
    println!("{:<6} {:>10} {:>12} {:>9}", "band", "gmi_tbps", "decoded_tbps", "channels");
    for (b, cell) in &a.bands {
        println!(
            "{:<6} {:>10.2} {:>12.2} {:>9}",
            b.as_str(),
            cell.both.gmi_tbps,
            cell.both.decoded_tbps,
            cell.both.channels
        );
    }
    for (d, cell) in &a.directions {
        println!("{:<6} {:>10.2} {:>12.2} {:>9}", d.as_str(), cell.gmi_tbps, cell.decoded_tbps, cell.channels);
    }
    println!(
        "{:<6} {:>10.2} {:>12.2} {:>9}",
        "total", a.total.gmi_tbps, a.total.decoded_tbps, a.total.channels
    );
    if let Some(p) = a.bidi_penalty {
        println!("bi-di penalty: mean {:.3} dB, max {:.3} dB", p.mean_db, p.max_db);
    }
    if let Some(cal) = &a.calibration {
        let trx: Vec<String> = cal.trx_snr_db.iter().map(|(b, v)| format!("{b} {v:.2}")).collect();
        println!("calibrated trx SNR (dB): {}; NGMI gap {:.4}", trx.join(", "), cal.ngmi_gap);
    }
}
