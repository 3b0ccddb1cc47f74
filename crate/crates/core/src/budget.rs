use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Resource limits threaded through the expensive constructions.
#[derive(Debug, Clone)]
pub struct Budget {
    pub max_states: usize,
    pub max_candidates: usize,
    pub max_profiles: usize,
    pub deadline: Option<Instant>,
    /// Spare holes available for closing loops in the profile closure.
    pub loop_holes: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_states: 200_000, max_candidates: 1 << 16, max_profiles: 4096, deadline: None, loop_holes: 0 }
    }
}

impl Budget {
    pub fn with_timeout(mut self, limit: Duration) -> Self {
        self.deadline = Some(Instant::now() + limit);
        self
    }

    pub fn states(&self, stage: &str, n: usize) -> Result<()> {
        if n > self.max_states {
            return Err(Error::budget(stage, format!("more than {} states", self.max_states)));
        }
        self.time(stage)
    }

    pub fn candidates(&self, stage: &str, n: usize) -> Result<()> {
        if n > self.max_candidates {
            return Err(Error::budget(stage, format!("more than {} candidates", self.max_candidates)));
        }
        self.time(stage)
    }

    pub fn profiles(&self, stage: &str, n: usize) -> Result<()> {
        if n > self.max_profiles {
            return Err(Error::budget(stage, format!("more than {} profiles", self.max_profiles)));
        }
        self.time(stage)
    }

    pub fn time(&self, stage: &str) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() > d => Err(Error::budget(stage, "wall-clock limit reached")),
            _ => Ok(()),
        }
    }
}
