//! JSONL trajectory dumps: one control step per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ObjectState, SkillCommand, StepResult, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::so3::UnitQuat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub episode: u64,
    pub step: usize,
    pub object: ObjectState,
    pub goal: UnitQuat,
    pub theta: [f64; NUM_JOINTS],
    pub theta_dot: [f64; NUM_JOINTS],
    pub torque: [f64; NUM_JOINTS],
    pub command: SkillCommand,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub dropped: bool,
    pub timeout: bool,
    pub slip: bool,
}

impl TrajectoryStep {
    pub fn from_result(episode: u64, goal: UnitQuat, cmd: &SkillCommand, r: &StepResult) -> Self {
        TrajectoryStep {
            episode,
            step: r.info.step,
            object: r.info.object,
            goal,
            theta: r.info.hand.theta,
            theta_dot: r.info.hand.theta_dot,
            torque: r.info.torque,
            command: cmd.clone(),
            reward: r.reward,
            done: r.done,
            success: r.info.success,
            dropped: r.info.dropped,
            timeout: r.info.timeout,
            slip: r.info.slip,
        }
    }
}

pub struct TrajectoryWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TrajectoryWriter { path: path.to_path_buf(), out: BufWriter::new(f) })
    }

    pub fn write(&mut self, step: &TrajectoryStep) -> Result<()> {
        serde_json::to_writer(&mut self.out, step)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryStep>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut steps = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line).map_err(|e| Error::Malformed { kind: "jsonl", line: i as u64 + 1, msg: e.to_string() })?;
        steps.push(s);
    }
    Ok(steps)
}
