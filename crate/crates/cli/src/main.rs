use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use mscfft::flowgraph::{
    bit_reverse_order, build_plan, fft_fixed, fft_float, naive_dft, to_float, FixedFrame, FloatFrame,
};
use mscfft::frame_io::{parse_frames, write_frames, FrameData};
use mscfft::metrics::{
    comparison_table, cost_census, frame_sqnr, measure_sqnr, normalization_kv, normalization_rows, normalization_text,
    parse_design_records, random_pm1_frame, INPUT_AMPLITUDE,
};
use mscfft::mscpipe::{
    build_architecture, check_allocation, run_frames, run_frames_traced, ArchitecturePlan, ButterflyMode,
};
use mscfft::rotor::{distinct_alphas, mrot_order, w16_shared_recipes, w8_csd_recipe};
use mscfft::{CFx, DecompositionSpec, FixedConfig, FixedFormat, Frame, Order, Overflow, Rounding, ScalingPolicy};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "mscfft", version, about = "128-point 4-parallel MSC FFT simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run frames from a file through the cycle-accurate pipeline.
    Transform(TransformArgs),
    /// Measure SQNR on random ±1 frames.
    Sqnr(SqnrArgs),
    /// Print the architecture, cost census, CSD recipes and normalization table.
    Report(ReportArgs),
    /// Run the invariant suite; exit 1 on any failure.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct FormatArgs {
    /// Word length in bits.
    #[arg(long, default_value_t = 12)]
    wordlen: u32,
    /// Fractional bits (default: wordlen - 1).
    #[arg(long)]
    fracbits: Option<u32>,
    /// truncate | half-away | half-even
    #[arg(long, default_value = "half-even")]
    rounding: Rounding,
    /// saturate | wrap
    #[arg(long, default_value = "saturate")]
    overflow: Overflow,
    /// none | per-stage | mask:0b...
    #[arg(long, default_value = "per-stage")]
    scaling: ScalingPolicy,
}

impl FormatArgs {
    fn config(&self, wordlen: u32) -> Result<FixedConfig> {
        let frac = self.fracbits.unwrap_or(wordlen - 1);
        if frac >= wordlen {
            return Err(usage(anyhow!("--fracbits {frac} must be below --wordlen {wordlen}")));
        }
        let format = FixedFormat::new(wordlen, frac)
            .map_err(|e| usage(anyhow!("{e}")))?
            .with_rounding(self.rounding)
            .with_overflow(self.overflow);
        Ok(FixedConfig {
            format,
            scaling: self.scaling,
            ..FixedConfig::default()
        })
    }
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    format: FormatArgs,
    /// Input frame file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output frame file (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output order: natural | bitrev
    #[arg(long, default_value = "natural")]
    order: Order,
    /// Write the double-precision transform, scaled like the fixed output,
    /// and print the per-frame SQNR of the fixed output against it.
    #[arg(long)]
    float: bool,
    /// Write a `cycle path stage event raw_re raw_im exponent` trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SqnrArgs {
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long, default_value_t = 10_000)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Word lengths 10 through 16.
    #[arg(long)]
    sweep: bool,
    /// key=value output.
    #[arg(long)]
    kv: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    format: FormatArgs,
    /// Comparison designs as CSV (default: the built-in table).
    #[arg(long)]
    designs: Option<PathBuf>,
    /// key=value output.
    #[arg(long)]
    kv: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Exchange the data of paths 1 and 4 (negative control).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(e))
}

fn architecture(cfg: &FixedConfig) -> Result<ArchitecturePlan> {
    let plan = build_plan(&DecompositionSpec::msc128())?;
    Ok(build_architecture(&plan, cfg)?)
}

fn to_input(frame: &FrameData, format: FixedFormat) -> Result<FixedFrame> {
    let natural = |f: FixedFrame| -> Result<FixedFrame> {
        Ok(match f.order {
            Order::Natural => f,
            Order::BitReversed => bit_reverse_order(&f)?,
        })
    };
    match frame {
        FrameData::Fixed(f) if f.samples.iter().all(|s| s.format() == format) => natural(f.clone()),
        FrameData::Fixed(f) => natural(Frame {
            samples: f
                .samples
                .iter()
                .map(|s| {
                    let (re, im) = s.to_f64();
                    CFx::quantize(re, im, format)
                })
                .collect(),
            order: f.order,
        }),
        FrameData::Float(f) => natural(Frame {
            samples: f.samples.iter().map(|s| CFx::quantize(s.re, s.im, format)).collect(),
            order: f.order,
        }),
    }
}

fn reorder<T: Clone>(f: Frame<T>, order: Order) -> Result<Frame<T>> {
    Ok(if f.order == order { f } else { bit_reverse_order(&f)? })
}

fn cmd_transform(a: &TransformArgs) -> Result<u8> {
    let cfg = a.format.config(a.format.wordlen)?;
    let text = fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .map_err(usage)?;
    let parsed = parse_frames(&text).map_err(|e| usage(anyhow!("{}:{e}", a.input.display())))?;
    if parsed.is_empty() {
        return Err(usage(anyhow!("{}: no frames", a.input.display())));
    }
    let arch = architecture(&cfg)?;
    let mut inputs = Vec::with_capacity(parsed.len());
    for (i, f) in parsed.iter().enumerate() {
        if f.len() != arch.n {
            return Err(usage(anyhow!(
                "frame {i}: {} samples, the pipeline takes {}",
                f.len(),
                arch.n
            )));
        }
        inputs.push(to_input(f, cfg.format)?);
    }
    let run = run_frames_traced(&inputs, &arch, &cfg, a.trace.is_some())?;
    let mut summary = String::new();
    let r = &run.report;
    let _ = writeln!(
        summary,
        "frames={} latency_cycles={} cycles_per_frame={} total_cycles={} throughput_samples_per_cycle={} overflows={}",
        inputs.len(),
        r.latency_cycles,
        r.cycles_per_frame,
        r.total_cycles,
        r.throughput_samples_per_cycle,
        run.overflows
    );
    let frames: Vec<FrameData> = if a.float {
        let gain = cfg.scaling.gain(arch.plan.stages.len() as u32);
        let mut out = Vec::new();
        for (i, (x, y)) in inputs.iter().zip(&run.outputs).enumerate() {
            let reference = fft_float(&to_float(x), &arch.plan)?;
            let sqnr = frame_sqnr(y, &reference, gain);
            let _ = writeln!(
                summary,
                "frame={i} sqnr_db={}",
                sqnr.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
            );
            let scaled: FloatFrame = Frame {
                samples: reference.samples.iter().map(|s| s / gain).collect(),
                order: reference.order,
            };
            out.push(FrameData::Float(reorder(scaled, a.order)?));
        }
        out
    } else {
        run.outputs
            .iter()
            .map(|y| reorder(y.clone(), a.order).map(FrameData::Fixed))
            .collect::<Result<_>>()?
    };
    let body = write_frames(&frames);
    if let (Some(path), Some(trace)) = (&a.trace, &run.trace) {
        let mut t = String::from("# cycle path stage event raw_re raw_im exponent\n");
        for rec in trace {
            let _ = writeln!(t, "{rec}");
        }
        fs::write(path, t).with_context(|| format!("writing {}", path.display()))?;
    }
    match &a.out {
        Some(path) => {
            fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
            print!("{summary}");
        }
        None => {
            print!("{body}");
            eprint!("{summary}");
        }
    }
    Ok(0)
}

fn cmd_sqnr(a: &SqnrArgs) -> Result<u8> {
    let lengths: Vec<u32> = if a.sweep {
        (10..=16).collect()
    } else {
        vec![a.format.wordlen]
    };
    if a.frames == 0 {
        return Err(usage(anyhow!("--frames must be positive")));
    }
    for wl in lengths {
        let cfg = a.format.config(wl)?;
        let r = measure_sqnr(a.frames, cfg.format, cfg.scaling, a.seed)?;
        if a.kv {
            print!("{}", r.to_kv());
        } else {
            println!("{r}");
        }
    }
    Ok(0)
}

fn mode_name(m: ButterflyMode) -> String {
    match m {
        ButterflyMode::Serial => "serial".into(),
        ButterflyMode::CrossPath { path_bit } => format!("cross(bit{path_bit})"),
    }
}

fn fmt_set<'a>(s: impl IntoIterator<Item = &'a mscfft::TwiddleExponent>) -> String {
    let v: Vec<String> = s.into_iter().map(|t| t.to_string()).collect();
    format!("{{{}}}", v.join(", "))
}

fn cmd_report(a: &ReportArgs) -> Result<u8> {
    let cfg = a.format.config(a.format.wordlen)?;
    let arch = architecture(&cfg)?;
    let cost = cost_census(&arch, &cfg)?;
    let designs = match &a.designs {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(usage)?;
            parse_design_records(&text).map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
        }
        None => comparison_table(),
    };
    let rows = normalization_rows(&designs);
    let w8 = w8_csd_recipe(cfg.w8_frac_bits)?;
    let w16 = w16_shared_recipes();
    let mut out = String::new();
    if a.kv {
        let _ = writeln!(
            out,
            "n={}\npaths={}\nstages={}\nlatency_cycles={}",
            arch.n,
            arch.paths,
            arch.stages.len(),
            arch.latency()
        );
        for (s, sp) in arch.stages.iter().zip(&arch.plan.stages) {
            let i = s.stage_index;
            let _ = writeln!(
                out,
                "stage{i}.base={}\nstage{i}.mode={}\nstage{i}.commutator_delay={}",
                sp.twiddle_base,
                mode_name(s.mode),
                s.commutator.delay
            );
            for (p, (k, set)) in s.rotators.iter().zip(&s.allocated_exponents).enumerate() {
                let _ = writeln!(
                    out,
                    "stage{i}.path{}.kind={}\nstage{i}.path{}.exponents={}",
                    p + 1,
                    k.name(),
                    p + 1,
                    fmt_set(set)
                );
            }
        }
        out += &cost.to_kv();
        let _ = writeln!(out, "recipe.w8.{}.ops={}", w8.target, w8.op_count());
        for r in w16.recipes() {
            let _ = writeln!(out, "recipe.w16.{}.ops={}", r.target, r.op_count());
        }
        let _ = writeln!(out, "recipe.w16.shared_adders={}", w16.adder_count());
        out += &normalization_kv(&rows);
    } else {
        let _ = writeln!(
            out,
            "architecture: N={} P={} factors={:?} stages={} PEs={} latency={} cycles, 32 cycles/frame",
            arch.n,
            arch.paths,
            arch.plan.spec.radix_factors,
            arch.stages.len(),
            arch.stages.len() * arch.paths,
            arch.latency()
        );
        let _ = writeln!(out, "\nstage base mode         delay  path1 path2 path3 path4");
        for (s, sp) in arch.stages.iter().zip(&arch.plan.stages) {
            let kinds: Vec<String> = s.rotators.iter().map(|k| format!("{:<5}", k.name())).collect();
            let _ = writeln!(
                out,
                "{:>5} {:>4} {:<12} {:>5}  {}",
                s.stage_index,
                sp.twiddle_base,
                mode_name(s.mode),
                s.commutator.delay,
                kinds.join(" ").trim_end()
            );
        }
        let _ = writeln!(out, "\nrotation allocation:");
        for s in &arch.stages {
            for (p, set) in s.allocated_exponents.iter().enumerate() {
                let _ = writeln!(out, "  stage {} path {}: {}", s.stage_index, p + 1, fmt_set(set));
            }
        }
        let _ = writeln!(out, "\ncost census:\n{cost}");
        let _ = writeln!(out, "\nCSD recipes:\n{w8}");
        for r in w16.recipes() {
            let _ = writeln!(out, "{r}");
        }
        let _ = writeln!(out, "W16 shared adders: {}", w16.adder_count());
        let _ = writeln!(
            out,
            "\nnormalization (90 nm, 1.0 V, 440 MS/s):\n{}",
            normalization_text(&rows).trim_end()
        );
    }
    print!("{out}");
    Ok(0)
}

fn cmd_verify(a: &VerifyArgs) -> Result<u8> {
    let cfg = a.format.config(a.format.wordlen)?;
    let mut arch = architecture(&cfg)?;
    if a.inject_fault {
        arch = arch.scrambled(0, 3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut results: Vec<(&str, bool, String)> = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..a.frames {
        let x: Vec<_> = (0..arch.n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let want = naive_dft(&x);
        let got = bit_reverse_order(&fft_float(&Frame::natural(x), &arch.plan)?)?;
        for (g, w) in got.samples.iter().zip(&want) {
            worst = worst.max((g - w).norm());
        }
    }
    results.push(("oracle_equivalence", worst < 1e-9, format!("max |error| {worst:.2e}")));

    let frames: Vec<FixedFrame> = (0..a.frames)
        .map(|_| random_pm1_frame(&mut rng, cfg.format, INPUT_AMPLITUDE))
        .collect();
    let run = run_frames(&frames, &arch, &cfg)?;
    let mut mismatched = 0;
    for (x, y) in frames.iter().zip(&run.outputs) {
        mismatched += (fft_fixed(x, &arch.plan, &cfg)?.frame != *y) as usize;
    }
    results.push((
        "pipeline_bit_exact",
        mismatched == 0,
        format!("{mismatched} of {} frames differ", frames.len()),
    ));

    let alloc = check_allocation(&arch, &run.rotations);
    results.push((
        "rotator_allocation",
        alloc.is_clean() && alloc.matches_allocation(&arch),
        format!("{} violations in {} rotations", alloc.violations.len(), alloc.checked),
    ));

    let w8 = w8_csd_recipe(cfg.w8_frac_bits)?;
    let w16 = w16_shared_recipes();
    let lo = -(1i128 << (cfg.format.word_length() - 1));
    let mut wrong = 0;
    for x in lo..-lo {
        wrong += (w8.evaluate(x) != w8.target as i128 * x) as u32;
        for r in w16.recipes() {
            wrong += (r.evaluate(x) != r.target as i128 * x) as u32;
        }
    }
    results.push((
        "csd_exhaustive",
        wrong == 0 && w8.op_count() <= 4 && w16.adder_count() <= 3,
        format!("{wrong} wrong products over {} inputs", -2 * lo),
    ));

    let mrot_ok = [8u32, 16, 32, 64]
        .iter()
        .all(|&l| mrot_order(l).ok() == Some(l / 8 + 1) && distinct_alphas(l).ok() == Some((l / 8 + 1) as usize));
    results.push(("mrot_law", mrot_ok, "L in {8, 16, 32, 64}".into()));

    let failed = results.iter().filter(|r| !r.1).count();
    for (name, ok, detail) in &results {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} properties pass", results.len() - failed, results.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Transform(a) => cmd_transform(a),
        Command::Sqnr(a) => cmd_sqnr(a),
        Command::Report(a) => cmd_report(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
