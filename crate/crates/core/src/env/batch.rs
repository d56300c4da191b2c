use std::sync::Arc;

use rayon::prelude::*;

use super::{Env, EnvConfig, SkillCommand, StepResult};
use crate::error::{Error, Result};

/// Steps every environment with its command. Each env owns its RNG streams,
/// so results do not depend on how rayon splits the batch.
pub fn batch_step(envs: &mut [Env], cmds: &[SkillCommand]) -> Result<Vec<StepResult>> {
    if envs.len() != cmds.len() {
        return Err(Error::dims("batch commands", envs.len(), cmds.len()));
    }
    envs.par_iter_mut().zip(cmds.par_iter()).map(|(e, c)| e.step(c)).collect()
}

/// A fixed set of environments seeded `seed, seed + 1, ...`.
#[derive(Debug, Clone)]
pub struct BatchEnv {
    pub envs: Vec<Env>,
}

impl BatchEnv {
    pub fn new(config: Arc<EnvConfig>, seed: u64, n: usize) -> Result<Self> {
        let envs = (0..n as u64).map(|i| Env::new(config.clone(), seed.wrapping_add(i))).collect::<Result<_>>()?;
        Ok(BatchEnv { envs })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn step(&mut self, cmds: &[SkillCommand]) -> Result<Vec<StepResult>> {
        batch_step(&mut self.envs, cmds)
    }

    /// Resets every finished environment.
    pub fn reset_done(&mut self) {
        self.envs.par_iter_mut().filter(|e| e.state().done).for_each(|e| {
            e.reset();
        });
    }
}
