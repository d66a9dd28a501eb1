//! Trajectory files.
//!
//! * `*.csv`: one row per round trip, preceded by a `# config_hash:` comment.
//! * `*.json`: run summary.
//! * `*.bin` + `*.index.json`: optional field snapshots, little-endian
//!   complex64 (`f32` real, `f32` imaginary) per site, one frame per `τ`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::Result;

pub const CSV_HEADER: &str = "tau,ising_energy,mean_abs_re,mean_abs_im,max_abs,spins_changed";

pub fn trajectory_csv(traj: &Trajectory, config_hash: &str) -> String {
    let mut out = String::with_capacity(64 * (traj.records.len() + 2));
    let _ = writeln!(out, "# config_hash: {config_hash}");
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{}",
            r.tau, r.ising_energy, r.mean_abs_re, r.mean_abs_im, r.max_abs, r.spins_changed
        );
    }
    out
}

/// Per-site quadratures `(τ, site, Re A, Im A)` for every stored snapshot.
pub fn quadratures_csv(traj: &Trajectory, config_hash: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_hash: {config_hash}");
    out.push_str("tau,site,re,im\n");
    for (tau, field) in &traj.snapshots {
        for (site, a) in field.iter().enumerate() {
            let _ = writeln!(out, "{tau},{site},{:e},{:e}", a.re, a.im);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub final_energy: f64,
    pub final_spins: Vec<i8>,
    pub converged: bool,
    pub oscillating: bool,
    pub steady_from: u64,
    pub pump: f64,
    pub threshold: f64,
    pub rho: f64,
    pub n_round_trips: u64,
}

impl RunSummary {
    pub fn new(traj: &Trajectory, seed: u64, config_hash: &str) -> Self {
        Self {
            config_hash: config_hash.to_owned(),
            seed,
            final_energy: traj.final_energy(),
            final_spins: traj.final_spins.spins().to_vec(),
            converged: traj.converged,
            oscillating: traj.oscillating,
            steady_from: traj.steady_from,
            pump: traj.pump,
            threshold: traj.threshold,
            rho: traj.rho,
            n_round_trips: traj.records.last().map_or(0, |r| r.tau),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFrame {
    pub tau: u64,
    /// Byte offset into the binary file.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotIndex {
    pub config_hash: String,
    pub dtype: String,
    pub n_sites: usize,
    pub frame_bytes: u64,
    pub frames: Vec<SnapshotFrame>,
}

pub fn write_snapshots(traj: &Trajectory, bin_path: &Path, index_path: &Path, config_hash: &str) -> Result<()> {
    let n = traj.final_field.len();
    let frame_bytes = 8 * n as u64;
    let mut bytes = Vec::with_capacity(traj.snapshots.len() * frame_bytes as usize);
    let mut frames = Vec::with_capacity(traj.snapshots.len());
    for (tau, field) in &traj.snapshots {
        frames.push(SnapshotFrame {
            tau: *tau,
            offset: bytes.len() as u64,
        });
        for a in field {
            bytes.extend_from_slice(&(a.re as f32).to_le_bytes());
            bytes.extend_from_slice(&(a.im as f32).to_le_bytes());
        }
    }
    fs::write(bin_path, bytes)?;
    let index = SnapshotIndex {
        config_hash: config_hash.to_owned(),
        dtype: "complex64-le".into(),
        n_sites: n,
        frame_bytes,
        frames,
    };
    fs::write(index_path, serde_json::to_string_pretty(&index)?)?;
    Ok(())
}

/// Read back one frame of a snapshot file.
pub fn read_snapshot_frame(bin: &[u8], index: &SnapshotIndex, frame: usize) -> Option<Vec<(f32, f32)>> {
    let f = index.frames.get(frame)?;
    let start = f.offset as usize;
    let chunk = bin.get(start..start + index.frame_bytes as usize)?;
    Some(
        chunk
            .chunks_exact(8)
            .map(|c| {
                (
                    f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                    f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                )
            })
            .collect(),
    )
}
