//! Wall-clock timing table for a ready session. Measurements only read the
//! session, so they never change its numerical state.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::model::Vec3;
use crate::skinning::SkinningMethod;
use crate::sync::SyncSession;

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub label: &'static str,
    pub median: Duration,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingTable {
    pub machine: String,
    /// `skin vertices / joints / cage vertices`.
    pub sizes: (usize, usize, usize),
    pub method: SkinningMethod,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn get(&self, label: &str) -> Option<Duration> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.median)
    }
}

pub const SKEL_UP_PREPROCESS: &str = "skel_up_preprocess";
pub const CAGE_UP_PREPROCESS: &str = "cage_up_preprocess";
pub const COR_PREPROCESS: &str = "cor_preprocess";
pub const SKIN_FRAME: &str = "skin_per_frame";
pub const CAGE_UP_SOLVE: &str = "cage_up_solve";
pub const COR_UPDATE: &str = "cor_update";
pub const CAGE_REV_UPDATE: &str = "cage_rev_update";

pub fn median(samples: &mut [Duration]) -> Duration {
    if samples.is_empty() {
        return Duration::ZERO;
    }
    samples.sort_unstable();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

fn time_n<T>(n: usize, mut f: impl FnMut() -> Result<T>) -> Result<TimingRow> {
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let clock = Instant::now();
        std::hint::black_box(f()?);
        samples.push(clock.elapsed());
    }
    Ok(TimingRow {
        label: "",
        median: median(&mut samples),
        samples: n,
    })
}

/// OS, architecture, thread count and CPU model when known.
pub fn machine_description() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{} {}, {threads} threads, {cpu}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Medians over `n_frames` repetitions of every per-frame operation, plus
/// the one-off setup costs. `n_frames = 0` gives an empty table.
pub fn report_timings(session: &SyncSession, n_frames: usize) -> Result<TimingTable> {
    let mut table = TimingTable {
        machine: machine_description(),
        sizes: (
            session.rest_skin().len(),
            session.skeleton().len(),
            session.cage_rest().len(),
        ),
        method: session.config().method,
        rows: Vec::new(),
    };
    if n_frames == 0 {
        return Ok(table);
    }
    let setup = session.setup_timings();
    let once = |label, median| TimingRow {
        label,
        median,
        samples: 1,
    };
    table.rows.push(once(SKEL_UP_PREPROCESS, setup.skel_up));
    table.rows.push(once(CAGE_UP_PREPROCESS, setup.cage_up));
    if session.config().method == SkinningMethod::Cor {
        table.rows.push(once(COR_PREPROCESS, setup.cor));
    }

    let mut row = time_n(n_frames, || session.skin_current())?;
    row.label = SKIN_FRAME;
    table.rows.push(row);

    let mut row = time_n(n_frames, || session.cage_up())?;
    row.label = CAGE_UP_SOLVE;
    table.rows.push(row);

    if let Some(lambda) = session.cor_lambda() {
        let mut row = time_n(n_frames, || lambda.apply(session.cage_rest()))?;
        row.label = COR_UPDATE;
        table.rows.push(row);
    }

    // A one-vertex drag, solved with a fresh factorization every time.
    let mut delta = vec![Vec3::zeros(); session.cage_rest().len()];
    delta[0] = Vec3::new(1e-3, 0.0, 0.0) * session.scale();
    let mut row = time_n(n_frames, || session.cage_rev_uncached(&delta))?;
    row.label = CAGE_REV_UPDATE;
    table.rows.push(row);
    Ok(table)
}

impl fmt::Display for TimingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "machine: {}", self.machine)?;
        let (n, s, c) = self.sizes;
        writeln!(f, "rig: {n} vertices, {s} joints, {c} cage vertices; skinning {}", self.method)?;
        writeln!(f, "{:<20} {:>12} {:>8}", "operation", "median_ms", "samples")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<20} {:>12.4} {:>8}",
                r.label,
                r.median.as_secs_f64() * 1e3,
                r.samples
            )?;
        }
        Ok(())
    }
}
