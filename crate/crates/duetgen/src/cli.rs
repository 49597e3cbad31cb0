//! Command-line surface over the library.
//!
//! One binary, eight subcommands, each a thin composition of library calls:
//!
//! | subcommand   | does |
//! |--------------|------|
//! | `synth`      | generate the built-in synthetic duet scenes |
//! | `encode`     | motion pair (`.idm`) → representation pair (`.idr`) |
//! | `decode`     | representation → positions, with optional round-trip report |
//! | `train`      | fit the denoiser on a directory of duets |
//! | `sample`     | generate motion (reactive or duet) from a checkpoint |
//! | `eval`       | metrics report for generated vs. reference sets |
//! | `gradcheck`  | finite-difference verification of all gradients |
//! | `export-csv` | decoded joint positions as CSV for external viewers |
//!
//! Every run is deterministic given its flags and seed. Next to every file
//! it writes, the tool drops a `<name>.run.json` sidecar recording the full
//! invocation for provenance (the binary formats themselves are fixed and
//! cannot embed it). Exit codes: 0 success, 1 configuration error, 2 data
//! error, 3 numerical failure.
//!
//! `DUETGEN_THREADS` sets the worker thread count; the `--threads` flag
//! overrides it.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::body::{canonical, BodyModel};
use crate::data::formats::{
    read_motion, read_music, read_rep, write_motion, write_music, write_rep,
};
use crate::data::synth::{generate, Scenario, ScenarioSpec};
use crate::data::Role;
use crate::denoiser::{Denoiser, DenoiserConfig, DenoiserMode};
use crate::diffusion::train::TrainItem;
use crate::diffusion::{
    sample_duet, sample_follower, train, NoiseSchedule, SampleOptions, TrainConfig,
    DEFAULT_BETA_END, DEFAULT_BETA_START, DESK_STEPS,
};
use crate::error::{Error, ErrorKind, Result};
use crate::eval::metrics::RhythmConfig;
use crate::eval::music::MusicFeatures;
use crate::eval::report::{metrics_report, EvaluatedDuet};
use crate::gradcheck;
use crate::guidance::GuidanceConfig;
use crate::rep::{decode, encode, ContactConfig};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "duetgen",
    version,
    about = "Two-dancer motion generation toolkit",
    disable_help_subcommand = true
)]
struct Cli {
    /// Worker threads (overrides DUETGEN_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Generate the built-in synthetic duet scenes.
    Synth(SynthArgs),
    /// Encode a leader/follower motion pair into representation files.
    Encode(EncodeArgs),
    /// Decode a representation; optionally compare against a reference
    /// motion and/or dump positions as CSV.
    Decode(DecodeArgs),
    /// Train the denoiser on a directory of synthetic duets.
    Train(TrainArgs),
    /// Sample motion from a trained checkpoint.
    Sample(SampleArgs),
    /// Compute the metrics report for a generated set vs. a reference set.
    Eval(EvalArgs),
    /// Verify all hand-written gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Export decoded joint positions (frame, joint, x, y, z) as CSV.
    ExportCsv(ExportCsvArgs),
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Scene to generate: orbit, mirror, handhold, approach-touch, walk,
    /// or "all".
    #[arg(long, default_value = "all")]
    scenario: String,
    /// Clip length in seconds.
    #[arg(long, default_value_t = 8.0)]
    duration: f64,
    /// Metronome tempo in beats per minute.
    #[arg(long, default_value_t = 120.0)]
    bpm: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory for `<scene>_{leader,follower}.idm` and `<scene>_music.idf`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EncodeArgs {
    /// Leader motion (`.idm`).
    #[arg(long)]
    leader: PathBuf,
    /// Follower motion (`.idm`).
    #[arg(long)]
    follower: PathBuf,
    #[arg(long)]
    out_leader: PathBuf,
    #[arg(long)]
    out_follower: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DecodeArgs {
    /// Representation file (`.idr`).
    #[arg(long)]
    input: PathBuf,
    /// Reference motion (`.idm`) for a round-trip error report.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Role of the reference motion: leader or follower.
    #[arg(long, default_value = "follower")]
    role: String,
    /// Write decoded body points (all joints and surface points) as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Directory of `<stem>_{leader,follower}.idm` + `<stem>_music.idf`.
    #[arg(long)]
    data_dir: PathBuf,
    /// reactive (follower given leader) or duet (both dancers).
    #[arg(long, default_value = "reactive")]
    mode: String,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Diffusion steps in the training schedule.
    #[arg(long, default_value_t = DESK_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    ff_width: usize,
    /// Contact loss weight (0 disables the term).
    #[arg(long, default_value_t = crate::diffusion::LossWeights::default().contact)]
    lambda_contact: f64,
    /// Output checkpoint path (`.idc`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SampleArgs {
    /// Trained checkpoint (`.idc`).
    #[arg(long)]
    model: PathBuf,
    /// Music features (`.idf`); its length sets the clip length.
    #[arg(long)]
    music: PathBuf,
    /// Leader representation (`.idr`) — required in reactive mode. Produce
    /// it with `encode`; the contact labels it carries come from the real
    /// pair, which a raw motion file cannot provide.
    #[arg(long)]
    leader: Option<PathBuf>,
    /// reactive (generate the follower) or duet (generate both dancers).
    #[arg(long, default_value = "reactive")]
    mode: String,
    /// Contact guidance scale (0 disables).
    #[arg(long = "a-con", default_value_t = GuidanceConfig::default().contact_scale)]
    a_con: f64,
    /// Penetration guidance scale (0 disables).
    #[arg(long = "a-pene", default_value_t = GuidanceConfig::default().penetration_scale)]
    a_pene: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reverse-diffusion steps.
    #[arg(long, default_value_t = DESK_STEPS)]
    steps: usize,
    /// Filename stem for the generated files.
    #[arg(long, default_value = "sample")]
    stem: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Directory of generated duets:
    /// `<stem>_{leader,follower}.idr` + `<stem>_music.idf`.
    #[arg(long)]
    generated_dir: PathBuf,
    /// Directory of reference duets: `<stem>_{leader,follower}.idr`.
    #[arg(long)]
    reference_dir: PathBuf,
    /// Write the report (with the run config embedded) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Random configurations per suite.
    #[arg(long, default_value_t = 50)]
    configs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct ExportCsvArgs {
    /// Representation file (`.idr`).
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path (columns: frame, joint, x, y, z).
    #[arg(long)]
    output: PathBuf,
}

/// Run the CLI on the given argument list (the first element is the program
/// name) and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(err.kind())
        }
    }
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DUETGEN_THREADS") {
            Ok(s) => Some(s.trim().parse::<usize>().map_err(|_| {
                Error::config(format!("DUETGEN_THREADS must be a positive integer, got {s:?}"))
            })?),
            Err(_) => None,
        },
    };
    if requested == Some(0) {
        return Err(Error::config("thread count must be at least 1".to_string()));
    }
    Ok(requested)
}

fn execute(cli: &Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads)?;
    if let Some(n) = threads {
        // The pool can only be installed once per process; later calls with
        // the same request are harmless no-ops.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let model = canonical::model();
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, &model, threads),
        Command::Encode(a) => cmd_encode(a, &model, threads),
        Command::Decode(a) => cmd_decode(a, &model, threads),
        Command::Train(a) => cmd_train(a, &model, threads),
        Command::Sample(a) => cmd_sample(a, &model, threads),
        Command::Eval(a) => cmd_eval(a, &model, threads),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ExportCsv(a) => cmd_export_csv(a, &model, threads),
    }
}

// ---------------------------------------------------------------------------
// Provenance sidecars and small file helpers
// ---------------------------------------------------------------------------

/// Write `<output>.run.json` next to an output file, recording the full
/// invocation. Deliberately timestamp-free so equal invocations produce
/// byte-identical artifacts.
fn write_sidecar(
    output: &Path,
    command: &str,
    args: &impl Serialize,
    threads: Option<usize>,
) -> Result<()> {
    let mut name = output
        .file_name()
        .ok_or_else(|| Error::config(format!("output path {} has no file name", output.display())))?
        .to_os_string();
    name.push(".run.json");
    let path = output.with_file_name(name);
    let info = serde_json::json!({
        "tool": "duetgen",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": serde_json::to_value(args)
            .map_err(|e| Error::data(format!("serializing run config: {e}")))?,
        "threads": threads,
    });
    let text = serde_json::to_string_pretty(&info)
        .map_err(|e| Error::data(format!("serializing run config: {e}")))?;
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_role(s: &str) -> Result<Role> {
    match s {
        "leader" => Ok(Role::Leader),
        "follower" => Ok(Role::Follower),
        other => Err(Error::config(format!(
            "role must be leader or follower, got {other:?}"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<DenoiserMode> {
    s.parse()
}

/// Directory stems that have every listed suffix present, sorted for
/// deterministic ordering.
fn discover_stems(dir: &Path, suffixes: &[&str]) -> Result<Vec<String>> {
    let probe = suffixes[0];
    let entries =
        std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut stems = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(probe) {
            if suffixes[1..].iter().all(|s| dir.join(format!("{stem}{s}")).is_file()) {
                stems.push(stem.to_string());
            }
        }
    }
    stems.sort();
    if stems.is_empty() {
        return Err(Error::data(format!(
            "no duets found in {}: expected files named <stem>{}",
            dir.display(),
            suffixes.join(", <stem>")
        )));
    }
    Ok(stems)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_synth(args: &SynthArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let scenarios: Vec<Scenario> = if args.scenario == "all" {
        Scenario::ALL.to_vec()
    } else {
        vec![args.scenario.parse()?]
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    for scenario in scenarios {
        let spec = ScenarioSpec {
            scenario,
            duration_s: args.duration,
            bpm: args.bpm,
            seed: args.seed,
        };
        let duet = generate(&spec, model)?;
        let paths = [
            args.out_dir.join(format!("{scenario}_leader.idm")),
            args.out_dir.join(format!("{scenario}_follower.idm")),
            args.out_dir.join(format!("{scenario}_music.idf")),
        ];
        write_motion(&paths[0], &duet.leader)?;
        write_motion(&paths[1], &duet.follower)?;
        write_music(&paths[2], &duet.music)?;
        for p in &paths {
            write_sidecar(p, "synth", args, threads)?;
        }
        println!(
            "{}: {} frames at {:.0} fps -> {}_{{leader,follower}}.idm + music",
            scenario,
            duet.leader.len(),
            duet.leader.fps,
            args.out_dir.join(scenario.name()).display()
        );
    }
    Ok(())
}

fn cmd_encode(args: &EncodeArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let leader = read_motion(&args.leader, Role::Leader)?;
    let follower = read_motion(&args.follower, Role::Follower)?;
    let cc = ContactConfig::default();
    let l_rep = encode(&leader, &follower, model, &cc)?;
    let f_rep = encode(&follower, &leader, model, &cc)?;
    write_rep(&args.out_leader, &l_rep)?;
    write_sidecar(&args.out_leader, "encode", args, threads)?;
    write_rep(&args.out_follower, &f_rep)?;
    write_sidecar(&args.out_follower, "encode", args, threads)?;
    println!(
        "encoded {} frames x {} channels per dancer",
        l_rep.len(),
        crate::rep::CHANNELS
    );
    Ok(())
}

fn cmd_decode(args: &DecodeArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let rep = read_rep(&args.input)?;
    let frames = decode(&rep, model)?;
    println!("decoded {} frames at {:.0} fps", frames.len(), rep.fps);
    if let Some(reference) = &args.reference {
        let role = parse_role(&args.role)?;
        let motion = read_motion(reference, role)?;
        if motion.len() != frames.len() {
            return Err(Error::data(format!(
                "reference motion has {} frames, representation has {}",
                motion.len(),
                frames.len()
            )));
        }
        let mut max_err: f64 = 0.0;
        for (decoded, pose) in frames.iter().zip(&motion.frames) {
            let truth = model.pose_points(pose);
            for (a, b) in decoded.joints.iter().zip(&truth.joints) {
                max_err = max_err.max((a - b).norm());
            }
            for (a, b) in decoded.vertices.iter().zip(&truth.vertices) {
                max_err = max_err.max((a - b).norm());
            }
        }
        println!("round-trip max point error: {max_err:.3e} m");
    }
    if let Some(out_csv) = &args.out_csv {
        let mut text = String::from("frame,kind,index,x,y,z\n");
        for (t, frame) in frames.iter().enumerate() {
            for (j, p) in frame.joints.iter().enumerate() {
                text.push_str(&format!("{t},joint,{j},{},{},{}\n", p.x, p.y, p.z));
            }
            for (v, p) in frame.vertices.iter().enumerate() {
                text.push_str(&format!("{t},vertex,{v},{},{},{}\n", p.x, p.y, p.z));
            }
        }
        std::fs::write(out_csv, text).map_err(|e| Error::io(out_csv.display().to_string(), e))?;
        write_sidecar(out_csv, "decode", args, threads)?;
        println!("wrote {}", out_csv.display());
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let mode = parse_mode(&args.mode)?;
    let stems = discover_stems(
        &args.data_dir,
        &["_leader.idm", "_follower.idm", "_music.idf"],
    )?;
    let cc = ContactConfig::default();
    let mut items = Vec::with_capacity(stems.len());
    let mut max_len = 0;
    for stem in &stems {
        let leader = read_motion(&args.data_dir.join(format!("{stem}_leader.idm")), Role::Leader)?;
        let follower =
            read_motion(&args.data_dir.join(format!("{stem}_follower.idm")), Role::Follower)?;
        let music = read_music(&args.data_dir.join(format!("{stem}_music.idf")))?;
        let l_rep = encode(&leader, &follower, model, &cc)?;
        let f_rep = encode(&follower, &leader, model, &cc)?;
        max_len = max_len.max(l_rep.len());
        items.push(TrainItem::new(l_rep.data, f_rep.data, music.data)?);
    }
    println!("loaded {} duets ({} frames max) from {}", items.len(), max_len, args.data_dir.display());

    let mut denoiser = Denoiser::init(DenoiserConfig {
        model_width: args.width,
        block_count: args.blocks,
        head_count: args.heads,
        feedforward_width: args.ff_width,
        max_frames: max_len,
        mode,
        seed: args.seed,
        ..DenoiserConfig::default()
    })?;
    let schedule = NoiseSchedule::linear(args.steps, DEFAULT_BETA_START, DEFAULT_BETA_END)?;
    let config = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        weights: crate::diffusion::LossWeights {
            contact: args.lambda_contact,
            ..Default::default()
        },
        ..Default::default()
    };
    let print_every = (args.epochs / 10).max(1);
    train(&mut denoiser, &schedule, model, &items, &config, |log| {
        let shown = log.epoch + 1;
        if shown == 1 || shown % print_every == 0 || shown == args.epochs {
            println!(
                "epoch {:>4}/{}: total {:.5}  recon {:.5}  contact {:.5}",
                shown, args.epochs, log.mean.total, log.mean.recon, log.mean.contact
            );
        }
    })?;
    denoiser.save(&args.out)?;
    write_sidecar(&args.out, "train", args, threads)?;
    println!("saved checkpoint to {}", args.out.display());
    Ok(())
}

fn cmd_sample(args: &SampleArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let mode = parse_mode(&args.mode)?;
    let denoiser = Denoiser::load(&args.model)?;
    if denoiser.config().mode != mode {
        return Err(Error::config(format!(
            "--mode {} does not match the checkpoint, which was trained in {} mode",
            mode,
            denoiser.config().mode
        )));
    }
    let music = read_music(&args.music)?;
    let schedule = NoiseSchedule::linear(args.steps, DEFAULT_BETA_START, DEFAULT_BETA_END)?;
    let options = SampleOptions {
        seed: args.seed,
        guidance: GuidanceConfig {
            contact_scale: args.a_con,
            penetration_scale: args.a_pene,
            ..GuidanceConfig::default()
        },
    };
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    let out = |suffix: &str| args.out_dir.join(format!("{}{suffix}", args.stem));

    let records = match mode {
        DenoiserMode::Reactive => {
            let leader_path = args.leader.as_ref().ok_or_else(|| {
                Error::config(
                    "reactive sampling needs --leader (a representation file from `encode`)"
                        .to_string(),
                )
            })?;
            let leader = read_rep(leader_path)?;
            let (follower, records) =
                sample_follower(&denoiser, &schedule, &leader, &music, model, &options)?;
            write_rep(&out("_leader.idr"), &leader)?;
            write_rep(&out("_follower.idr"), &follower)?;
            records
        }
        DenoiserMode::Duet => {
            let (leader, follower, trace) =
                sample_duet(&denoiser, &schedule, &music, model, &options)?;
            write_rep(&out("_leader.idr"), &leader)?;
            write_rep(&out("_follower.idr"), &follower)?;
            let mut records = trace.leader;
            records.extend(trace.follower);
            records
        }
    };
    write_music(&out("_music.idf"), &music)?;
    for suffix in ["_leader.idr", "_follower.idr", "_music.idf"] {
        write_sidecar(&out(suffix), "sample", args, threads)?;
    }
    if !options.guidance.is_noop() {
        let path = out("_refine.json");
        let text = serde_json::to_string_pretty(&records)
            .map_err(|e| Error::data(format!("serializing refinement records: {e}")))?;
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
        if let (Some(first), Some(last)) = (records.first(), records.last()) {
            println!(
                "refined {} steps: penetration {:.5} -> {:.5}, contact {:.5} -> {:.5}",
                records.len(),
                first.penetration_before,
                last.penetration_after,
                first.contact_before,
                last.contact_after
            );
        }
    }
    println!(
        "sampled {} frames ({} mode, {} steps, seed {}) into {}",
        music.len(),
        mode,
        args.steps,
        args.seed,
        args.out_dir.display()
    );
    Ok(())
}

fn load_duet_dir(
    dir: &Path,
    model: &BodyModel,
    want_music: bool,
) -> Result<(Vec<EvaluatedDuet>, Vec<MusicFeatures>)> {
    let mut suffixes = vec!["_leader.idr", "_follower.idr"];
    if want_music {
        suffixes.push("_music.idf");
    }
    let stems = discover_stems(dir, &suffixes)?;
    let mut duets = Vec::with_capacity(stems.len());
    let mut music = Vec::new();
    for stem in &stems {
        let leader = read_rep(&dir.join(format!("{stem}_leader.idr")))?;
        let follower = read_rep(&dir.join(format!("{stem}_follower.idr")))?;
        duets.push(EvaluatedDuet::from_reps(&leader, &follower, model)?);
        if want_music {
            music.push(read_music(&dir.join(format!("{stem}_music.idf")))?);
        }
    }
    Ok((duets, music))
}

fn cmd_eval(args: &EvalArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let (generated, music) = load_duet_dir(&args.generated_dir, model, true)?;
    let (reference, _) = load_duet_dir(&args.reference_dir, model, false)?;
    let report = metrics_report(&generated, &reference, &music, model, &RhythmConfig::default())?;
    print!("{report}");
    if let Some(out) = &args.out {
        let payload = serde_json::json!({
            "run": {
                "tool": "duetgen",
                "version": env!("CARGO_PKG_VERSION"),
                "command": "eval",
                "args": serde_json::to_value(args)
                    .map_err(|e| Error::data(format!("serializing run config: {e}")))?,
                "threads": threads,
            },
            "metrics": report,
        });
        let text = serde_json::to_string_pretty(&payload)
            .map_err(|e| Error::data(format!("serializing report: {e}")))?;
        std::fs::write(out, text).map_err(|e| Error::io(out.display().to_string(), e))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.configs == 0 {
        return Err(Error::config("gradcheck needs at least one configuration".to_string()));
    }
    let reports = gradcheck::run_all(args.configs, args.seed)?;
    for report in &reports {
        println!("{report}");
    }
    gradcheck::require_all_pass(&reports)?;
    println!("all gradient suites passed");
    Ok(())
}

fn cmd_export_csv(args: &ExportCsvArgs, model: &BodyModel, threads: Option<usize>) -> Result<()> {
    let rep = read_rep(&args.input)?;
    let frames = decode(&rep, model)?;
    let mut text = String::from("frame,joint,x,y,z\n");
    for (t, frame) in frames.iter().enumerate() {
        for (j, p) in frame.joints.iter().enumerate() {
            text.push_str(&format!("{t},{j},{},{},{}\n", p.x, p.y, p.z));
        }
    }
    std::fs::write(&args.output, text)
        .map_err(|e| Error::io(args.output.display().to_string(), e))?;
    write_sidecar(&args.output, "export-csv", args, threads)?;
    println!(
        "wrote {} ({} frames x {} joints)",
        args.output.display(),
        frames.len(),
        crate::body::JOINT_COUNT
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> i32 {
        run(std::iter::once("duetgen").chain(args.iter().copied()))
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run_args(&["--help"]), 0);
        assert_eq!(run_args(&["--version"]), 0);
        assert_eq!(run_args(&["synth", "--help"]), 0);
    }

    #[test]
    fn bad_flags_and_unknown_subcommands_exit_one() {
        assert_eq!(run_args(&[]), 1);
        assert_eq!(run_args(&["frobnicate"]), 1);
        assert_eq!(run_args(&["synth"]), 1, "missing required --out-dir");
    }

    #[test]
    fn error_kinds_map_to_documented_exit_codes() {
        assert_eq!(exit_code(ErrorKind::Config), 1);
        assert_eq!(exit_code(ErrorKind::Data), 2);
        assert_eq!(exit_code(ErrorKind::Numerical), 3);
    }

    #[test]
    fn missing_input_files_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("absent.idm");
        let out = dir.path().join("out.idr");
        let code = run_args(&[
            "encode",
            "--leader",
            missing.to_str().unwrap(),
            "--follower",
            missing.to_str().unwrap(),
            "--out-leader",
            out.to_str().unwrap(),
            "--out-follower",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn corrupt_magic_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.idr");
        std::fs::write(&bad, b"NOPE....garbage").unwrap();
        let out = dir.path().join("x.csv");
        let code = run_args(&[
            "export-csv",
            "--input",
            bad.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn invalid_thread_settings_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let code = run_args(&[
            "--threads",
            "0",
            "synth",
            "--scenario",
            "orbit",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn reactive_sample_without_leader_exits_one() {
        // Needs a checkpoint first; build a tiny one straight through the
        // library to keep the test fast.
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("m.idc");
        let den = Denoiser::init(DenoiserConfig {
            model_width: 8,
            block_count: 1,
            head_count: 2,
            feedforward_width: 16,
            max_frames: 8,
            mode: DenoiserMode::Reactive,
            seed: 1,
            ..DenoiserConfig::default()
        })
        .unwrap();
        den.save(&ckpt).unwrap();
        let music = dir.path().join("m.idf");
        write_music(&music, &crate::eval::music::metronome(120.0, 4, 30.0, 1).unwrap()).unwrap();
        let code = run_args(&[
            "sample",
            "--model",
            ckpt.to_str().unwrap(),
            "--music",
            music.to_str().unwrap(),
            "--out-dir",
            dir.path().join("out").to_str().unwrap(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn full_pipeline_synth_encode_decode_train_sample_eval_export() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let p = |pb: &PathBuf| pb.to_str().unwrap().to_string();

        // synth: one short scene.
        let code = run_args(&[
            "synth",
            "--scenario",
            "walk",
            "--duration",
            "1.0",
            "--out-dir",
            &p(&data),
        ]);
        assert_eq!(code, 0);
        assert!(data.join("walk_leader.idm").is_file());
        assert!(data.join("walk_leader.idm.run.json").is_file());

        // encode both dancers.
        let l_idr = data.join("walk_leader.idr");
        let f_idr = data.join("walk_follower.idr");
        let code = run_args(&[
            "encode",
            "--leader",
            &p(&data.join("walk_leader.idm")),
            "--follower",
            &p(&data.join("walk_follower.idm")),
            "--out-leader",
            &p(&l_idr),
            "--out-follower",
            &p(&f_idr),
        ]);
        assert_eq!(code, 0);

        // decode with reference: prints the round-trip report.
        let code = run_args(&[
            "decode",
            "--input",
            &p(&f_idr),
            "--reference",
            &p(&data.join("walk_follower.idm")),
            "--role",
            "follower",
        ]);
        assert_eq!(code, 0);

        // train a tiny reactive model for a couple of epochs.
        let ckpt = dir.path().join("model.idc");
        let code = run_args(&[
            "train",
            "--data-dir",
            &p(&data),
            "--epochs",
            "2",
            "--steps",
            "4",
            "--width",
            "8",
            "--blocks",
            "1",
            "--heads",
            "2",
            "--ff-width",
            "16",
            "--out",
            &p(&ckpt),
        ]);
        assert_eq!(code, 0);
        assert!(ckpt.is_file());
        assert!(dir.path().join("model.idc.run.json").is_file());

        // sample without guidance; two seeds so the metrics below have two
        // generated duets, plus a repeat run to confirm byte-identical
        // output for equal seeds.
        let out_a = dir.path().join("gen_a");
        let out_b = dir.path().join("gen_b");
        for (out, stem, seed) in [
            (&out_a, "s1", "1"),
            (&out_a, "s2", "2"),
            (&out_b, "s1", "1"),
        ] {
            let code = run_args(&[
                "sample",
                "--model",
                &p(&ckpt),
                "--music",
                &p(&data.join("walk_music.idf")),
                "--leader",
                &p(&l_idr),
                "--a-con",
                "0",
                "--a-pene",
                "0",
                "--steps",
                "4",
                "--seed",
                seed,
                "--stem",
                stem,
                "--out-dir",
                &p(out),
            ]);
            assert_eq!(code, 0);
        }
        let a = std::fs::read(out_a.join("s1_follower.idr")).unwrap();
        let b = std::fs::read(out_b.join("s1_follower.idr")).unwrap();
        assert_eq!(a, b, "equal seeds must produce byte-identical samples");

        // eval the generated set against itself (distances all ~0).
        let report_path = dir.path().join("report.json");
        let code = run_args(&[
            "eval",
            "--generated-dir",
            &p(&out_a),
            "--reference-dir",
            &p(&out_a),
            "--out",
            &p(&report_path),
        ]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(&report_path).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        let fid_k = json["metrics"]["fid_k"].as_f64().unwrap();
        assert!(fid_k.abs() < 1e-6, "self-distance must vanish, got {fid_k}");
        assert_eq!(json["run"]["command"], "eval");

        // export joints CSV.
        let csv = dir.path().join("joints.csv");
        let code = run_args(&[
            "export-csv",
            "--input",
            &p(&f_idr),
            "--output",
            &p(&csv),
        ]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("frame,joint,x,y,z"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,0,"), "unexpected first row: {first}");
    }

    #[test]
    fn gradcheck_subcommand_passes_small_run() {
        assert_eq!(run_args(&["gradcheck", "--configs", "2", "--seed", "5"]), 0);
    }
}
