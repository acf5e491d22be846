use std::cell::Cell;
use std::sync::Arc;

use super::{Encoder, LatentVec};
use crate::error::Result;
use crate::sim::{step, DubinsParams, PrivilegedState};

/// Oracle latent dynamics: a hidden simulator state seen only through the encoder.
#[derive(Debug)]
pub struct LatentSession {
    state: PrivilegedState,
    encoder: Arc<Encoder>,
    params: DubinsParams,
    privileged_reads: Cell<u64>,
}

impl Clone for LatentSession {
    fn clone(&self) -> Self {
        self.branch()
    }
}

impl LatentSession {
    pub fn new(encoder: Arc<Encoder>, params: DubinsParams, start: PrivilegedState) -> Self {
        Self {
            state: start,
            encoder,
            params,
            privileged_reads: Cell::new(0),
        }
    }

    pub fn latent(&self) -> LatentVec {
        self.encoder.encode(&self.state)
    }

    pub fn encoder(&self) -> &Arc<Encoder> {
        &self.encoder
    }

    pub fn params(&self) -> &DubinsParams {
        &self.params
    }

    /// Advances the hidden state and returns the new latent.
    pub fn step(&mut self, action: f64) -> Result<LatentVec> {
        self.state = step(&self.state, action, &self.params)?;
        Ok(self.latent())
    }

    /// Independent copy; stepping it never touches `self`. The read counter starts at zero.
    pub fn branch(&self) -> Self {
        Self {
            state: self.state,
            encoder: Arc::clone(&self.encoder),
            params: self.params,
            privileged_reads: Cell::new(0),
        }
    }

    /// Latent after one step under `action`, leaving the session untouched.
    pub fn peek(&self, action: f64) -> Result<LatentVec> {
        self.branch().step(action)
    }

    /// Ground-truth state, for evaluation and rendering only. Every call is counted.
    pub fn privileged_state(&self) -> PrivilegedState {
        self.privileged_reads.set(self.privileged_reads.get() + 1);
        self.state
    }

    pub fn privileged_reads(&self) -> u64 {
        self.privileged_reads.get()
    }
}
