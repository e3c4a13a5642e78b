use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deform_core::anim::{play, read_track};
use deform_core::model::io::{fmt_f64, write_text, write_wgt};
use deform_core::model::save_rig;
use deform_core::protocol::{serve_connection, Server};
use deform_core::report::report_timings;
use deform_core::rigs;
use deform_core::script::{export_snapshot, run_script, EditScript, RigSource};
use deform_core::skinning::SkinningMethod;
use deform_core::sync::{SessionConfig, SyncSession};

#[derive(Parser)]
#[command(name = "deform", version, about = "Hybrid skeleton and cage deformation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SessionFlags {
    /// Skinning method: lbs, dqs or cor.
    #[arg(long)]
    skinning: Option<SkinningMethod>,
    /// Fit the current cage to an LBS ghost of the skin: on or off.
    #[arg(long, value_parser = parse_on_off)]
    ghost: Option<bool>,
    /// Steady-state audit tolerance, relative to the bounding box.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Seed for randomized script steps.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on or off, got '{other}'")),
    }
}

impl SessionFlags {
    fn apply(&self, config: &mut SessionConfig) {
        if let Some(m) = self.skinning {
            config.method = m;
        }
        if let Some(g) = self.ghost {
            config.ghost = g;
        }
        if let Some(t) = self.tolerance {
            config.audit_tol = t;
        }
    }

    fn config(&self) -> SessionConfig {
        let mut c = SessionConfig::default();
        self.apply(&mut c);
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Replay an edit script, writing snapshots, audit and timings.
    Run {
        script: PathBuf,
        /// Output directory (default: `<script>_out` next to the script).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: SessionFlags,
    },
    /// Play a keyframe track, writing one snapshot per frame.
    Play {
        /// Bundled rig name or `.rig` manifest.
        rig: String,
        track: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: SessionFlags,
    },
    /// Print a timing table for a rig.
    Bench {
        rig: String,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[command(flatten)]
        flags: SessionFlags,
    },
    /// Serve interactive sessions over TCP on localhost.
    Serve {
        #[arg(long, default_value_t = 7878)]
        port: u16,
        /// Write each finished connection's accepted edits as a script.
        #[arg(long)]
        record: Option<PathBuf>,
        #[command(flatten)]
        flags: SessionFlags,
    },
    /// Write a bundled rig to disk as mesh, skeleton, weights and cage files.
    Gen {
        /// One of: bar, arm, biped, warrok.
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the cage-fitting vertex selection of a rig.
    Select {
        rig: String,
        /// Also write the indices, one per line.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the cage coordinates of the skin and of the joints.
    Coords {
        rig: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: SessionFlags,
    },
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load_session(rig: &str, config: SessionConfig) -> Result<SyncSession, deform_core::Error> {
    SyncSession::new(&RigSource::resolve(rig, Path::new(".")).load()?, config)
}

fn cmd_run(script: &Path, out: Option<PathBuf>, flags: &SessionFlags) -> CliResult {
    let mut parsed = EditScript::read(script)?;
    flags.apply(&mut parsed.config);
    if let Some(seed) = flags.seed {
        parsed.seed = seed;
    }
    let out = out.unwrap_or_else(|| {
        let stem = script.file_stem().map_or("script".into(), |s| s.to_string_lossy().into_owned());
        script.with_file_name(format!("{stem}_out"))
    });
    let outcome = run_script(&parsed, &out)?;
    println!(
        "{} steps, worst audit {:e} x bbox (tolerance {:e}), artifacts in {}",
        outcome.steps.len(),
        outcome.worst_relative_audit,
        parsed.config.audit_tol,
        out.display()
    );
    print!("{}", outcome.timings);
    if outcome.worst_relative_audit > parsed.config.audit_tol {
        return Err("steady-state audit exceeded the tolerance".into());
    }
    Ok(())
}

fn cmd_play(rig: &str, track: &Path, fps: f64, out: &Path, flags: &SessionFlags) -> CliResult {
    let mut session = load_session(rig, flags.config())?;
    let track = read_track(track, session.skeleton().len())?;
    let frames = play(&mut session, &track, fps, |k, _, s| export_snapshot(s, out, &format!("frame_{k:05}")))?;
    println!("{frames} frames written to {}", out.display());
    Ok(())
}

fn cmd_serve(port: u16, record: Option<PathBuf>, flags: &SessionFlags) -> CliResult {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    println!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let mut stream = stream?;
        let mut server = Server::new(flags.config());
        if let Err(e) = serve_connection(&mut stream, &mut server) {
            eprintln!("connection closed: {e}");
        }
        if let (Some(path), Some(script)) = (&record, server.recorded_script()) {
            let partial = path.with_extension("partial");
            write_text(&partial, &script)?;
            std::fs::rename(&partial, path)?;
        }
    }
    Ok(())
}

fn cmd_select(rig: &str, out: Option<PathBuf>) -> CliResult {
    let session = load_session(rig, SessionConfig::default())?;
    let sel = session.selection();
    println!(
        "{} vertices selected, {} swaps, log|det| {}, inverse condition {:e}",
        sel.len(),
        sel.swaps,
        fmt_f64(sel.log_abs_det()),
        sel.inverse_condition()
    );
    let list: String = sel.indices.iter().map(|i| format!("{i}\n")).collect();
    match out {
        Some(path) => write_text(&path, &list)?,
        None => print!("{list}"),
    }
    Ok(())
}

fn cmd_coords(rig: &str, out: &Path, flags: &SessionFlags) -> CliResult {
    let session = load_session(rig, flags.config())?;
    write_wgt(&out.join("phi.wgt"), session.phi())?;
    write_wgt(&out.join("psi.wgt"), session.psi())?;
    println!("wrote {} and {}", out.join("phi.wgt").display(), out.join("psi.wgt").display());
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run { script, out, flags } => cmd_run(&script, out, &flags),
        Command::Play {
            rig,
            track,
            fps,
            out,
            flags,
        } => cmd_play(&rig, &track, fps, &out, &flags),
        Command::Bench { rig, frames, flags } => {
            let session = load_session(&rig, flags.config())?;
            print!("{}", report_timings(&session, frames)?);
            Ok(())
        }
        Command::Serve { port, record, flags } => cmd_serve(port, record, &flags),
        Command::Gen { name, out } => {
            let path = save_rig(&rigs::bundled(&name)?, &out, &name)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Select { rig, out } => cmd_select(&rig, out),
        Command::Coords { rig, out, flags } => cmd_coords(&rig, &out, &flags),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
