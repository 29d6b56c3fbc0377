//! File formats: JSON schemas for states, operators and projector families,
//! CSV/JSON emitters for trajectories and occupancy summaries, and atomic
//! writes.
//!
//! States and matrices share one schema: `{"dim": n, "data": [[re, im], ...]}`
//! with `data` holding `n` entries for a state and `n*n` row-major entries
//! for an operator.
//!
//! Trajectory CSV columns: `trajectory_id,event_time,from_index,to_index`.
//! The first row of each trajectory is a synthetic `initial -> initial`
//! entry at the start time, so the initial index is recoverable from the
//! event stream alone. Occupancy CSV columns: `time,index,frequency`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::OccupancyStats;
use crate::dynamics::JumpTrajectory;
use crate::error::{Error, Result};
use crate::linalg::{HermitianOperator, StateVector};
use crate::microstates::{CellLabel, GridGeometry, ProjectorFamily};

#[derive(Debug, Serialize, Deserialize)]
struct ComplexArraySchema {
    dim: usize,
    data: Vec<[f64; 2]>,
}

/// Serializes a state as `{"dim", "data"}` with one `[re, im]` per amplitude.
pub fn state_to_json(psi: &StateVector) -> String {
    let schema = ComplexArraySchema {
        dim: psi.dim(),
        data: psi.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
    };
    serde_json::to_string_pretty(&schema).expect("schema serializes")
}

pub fn state_from_json(text: &str) -> Result<StateVector> {
    let schema: ComplexArraySchema = serde_json::from_str(text)?;
    if schema.data.len() != schema.dim {
        return Err(Error::Shape(format!(
            "state schema: {} entries for dim {}",
            schema.data.len(),
            schema.dim
        )));
    }
    StateVector::new(DVector::from_iterator(
        schema.dim,
        schema.data.iter().map(|[re, im]| C64::new(*re, *im)),
    ))
}

/// Serializes an operator as `{"dim", "data"}` with `dim^2` row-major
/// `[re, im]` entries.
pub fn operator_to_json(op: &HermitianOperator) -> String {
    let n = op.dim();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let z = op.matrix()[(i, j)];
            data.push([z.re, z.im]);
        }
    }
    serde_json::to_string_pretty(&ComplexArraySchema { dim: n, data }).expect("schema serializes")
}

pub fn operator_from_json(text: &str) -> Result<HermitianOperator> {
    let schema: ComplexArraySchema = serde_json::from_str(text)?;
    let n = schema.dim;
    if schema.data.len() != n * n {
        return Err(Error::Shape(format!(
            "operator schema: {} entries for dim {n}",
            schema.data.len()
        )));
    }
    let m = DMatrix::from_fn(n, n, |i, j| {
        let [re, im] = schema.data[i * n + j];
        C64::new(re, im)
    });
    HermitianOperator::new(m)
}

#[derive(Debug, Serialize, Deserialize)]
struct FamilySchema {
    dim: usize,
    cells: Vec<Vec<usize>>,
    labels: Vec<CellLabel>,
    resolution: f64,
    exhaustive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridGeometry>,
}

/// Serializes a projector family as
/// `{"dim", "cells", "labels", "resolution", "exhaustive", "grid"?}`.
pub fn family_to_json(family: &ProjectorFamily) -> String {
    let schema = FamilySchema {
        dim: family.dim(),
        cells: family.cells().to_vec(),
        labels: family.labels().to_vec(),
        resolution: family.resolution(),
        exhaustive: family.is_exhaustive(),
        grid: family.grid().copied(),
    };
    serde_json::to_string_pretty(&schema).expect("schema serializes")
}

pub fn family_from_json(text: &str) -> Result<ProjectorFamily> {
    let schema: FamilySchema = serde_json::from_str(text)?;
    let family = ProjectorFamily::from_index_cells(
        schema.dim,
        schema.cells,
        schema.labels,
        schema.resolution,
    )?;
    if schema.exhaustive != family.is_exhaustive() {
        return Err(Error::Config(
            "family schema: exhaustive flag disagrees with cell coverage".into(),
        ));
    }
    Ok(match schema.grid {
        Some(grid) => family.with_grid_geometry(grid),
        None => family,
    })
}

/// Trajectory events as CSV. The leading synthetic row per trajectory
/// records the initial index.
pub fn trajectories_to_csv(trajectories: &[JumpTrajectory]) -> String {
    let mut out = String::from("trajectory_id,event_time,from_index,to_index\n");
    for traj in trajectories {
        out.push_str(&format!(
            "{},{},{},{}\n",
            traj.trajectory_id, traj.t0, traj.initial_index, traj.initial_index
        ));
        for ev in &traj.events {
            out.push_str(&format!(
                "{},{},{},{}\n",
                traj.trajectory_id, ev.time, ev.from, ev.to
            ));
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryEventSchema {
    event_time: f64,
    from_index: usize,
    to_index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectorySchema {
    trajectory_id: u64,
    t0: f64,
    t1: f64,
    initial_index: usize,
    repair_events: usize,
    events: Vec<TrajectoryEventSchema>,
}

/// Trajectory events as JSON, mirroring the CSV fields.
pub fn trajectories_to_json(trajectories: &[JumpTrajectory]) -> String {
    let rows: Vec<TrajectorySchema> = trajectories
        .iter()
        .map(|t| TrajectorySchema {
            trajectory_id: t.trajectory_id,
            t0: t.t0,
            t1: t.t1,
            initial_index: t.initial_index,
            repair_events: t.repair_events,
            events: t
                .events
                .iter()
                .map(|e| TrajectoryEventSchema {
                    event_time: e.time,
                    from_index: e.from,
                    to_index: e.to,
                })
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("schema serializes")
}

/// Occupancy summary as CSV rows `time,index,frequency`.
pub fn occupancy_to_csv(stats: &OccupancyStats) -> String {
    let mut out = String::from("time,index,frequency\n");
    for (k, &t) in stats.times.iter().enumerate() {
        for (i, &f) in stats.frequencies[k].iter().enumerate() {
            out.push_str(&format!("{t},{i},{f}\n"));
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct OccupancyRow {
    time: f64,
    index: usize,
    frequency: f64,
    weight: f64,
}

/// Occupancy summary as JSON, mirroring the CSV fields plus the theoretical
/// weight.
pub fn occupancy_to_json(stats: &OccupancyStats) -> String {
    let mut rows = Vec::new();
    for (k, &t) in stats.times.iter().enumerate() {
        for (i, &f) in stats.frequencies[k].iter().enumerate() {
            rows.push(OccupancyRow {
                time: t,
                index: i,
                frequency: f,
                weight: stats.weights[k][i],
            });
        }
    }
    serde_json::to_string_pretty(&rows).expect("schema serializes")
}

/// Writes a file atomically: the payload lands in `<path>.tmp` first and is
/// renamed into place, so failures never leave a partial file at `path`.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
