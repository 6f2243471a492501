//! Grant selection for the shared L2/memory path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArbitrationPolicy, CoreId, Cycle, TARGET_CORE};

/// A request waiting at the arbiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub core: CoreId,
    pub arrival: Cycle,
}

/// Mutable arbiter state carried between grants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbiterState {
    pub n_cores: usize,
    /// Round-robin pointer; unused by the other policies.
    pub pointer: CoreId,
}

impl ArbiterState {
    pub fn new(policy: &ArbitrationPolicy, n_cores: usize) -> Self {
        let pointer = match policy {
            ArbitrationPolicy::RoundRobin { initial_pointer } => *initial_pointer,
            _ => 0,
        };
        Self { n_cores, pointer }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArbiterError {
    #[error("no pending request to grant")]
    EmptyPending,
    #[error("core {0} is still in service")]
    Busy(CoreId),
    #[error("policy {0} is invalid for {1} cores")]
    InvalidPolicy(String, usize),
}

/// Checks that `policy` names only existing cores.
pub fn validate_policy(policy: &ArbitrationPolicy, n_cores: usize) -> Result<(), ArbiterError> {
    let ok = match policy {
        ArbitrationPolicy::PessimisticForT | ArbitrationPolicy::FifoAge => true,
        ArbitrationPolicy::RoundRobin { initial_pointer } => *initial_pointer < n_cores,
        ArbitrationPolicy::FixedPriority { order } => {
            let mut seen = vec![false; n_cores];
            order.len() == n_cores
                && order
                    .iter()
                    .all(|&c| c < n_cores && !std::mem::replace(&mut seen[c], true))
        }
    };
    if ok {
        Ok(())
    } else {
        Err(ArbiterError::InvalidPolicy(policy.to_string(), n_cores))
    }
}

/// Picks the next request to serve.
pub fn arbiter_select(
    pending: &[PendingRequest],
    in_service: Option<CoreId>,
    policy: &ArbitrationPolicy,
    state: ArbiterState,
) -> Result<(CoreId, ArbiterState), ArbiterError> {
    if let Some(core) = in_service {
        return Err(ArbiterError::Busy(core));
    }
    if pending.is_empty() {
        return Err(ArbiterError::EmptyPending);
    }
    let mut next = state;
    let granted = match policy {
        ArbitrationPolicy::PessimisticForT => pending
            .iter()
            .map(|r| r.core)
            .filter(|&c| c != TARGET_CORE)
            .min()
            .unwrap_or(TARGET_CORE),
        ArbitrationPolicy::RoundRobin { .. } => {
            let n = state.n_cores.max(1);
            let granted = (0..n)
                .map(|i| (state.pointer + i) % n)
                .find(|c| pending.iter().any(|r| r.core == *c))
                .ok_or(ArbiterError::EmptyPending)?;
            next.pointer = (granted + 1) % n;
            granted
        }
        ArbitrationPolicy::FixedPriority { order } => order
            .iter()
            .copied()
            .find(|c| pending.iter().any(|r| r.core == *c))
            .ok_or_else(|| ArbiterError::InvalidPolicy(policy.to_string(), state.n_cores))?,
        ArbitrationPolicy::FifoAge => {
            pending
                .iter()
                .min_by_key(|r| (r.arrival, r.core))
                .expect("pending is non-empty")
                .core
        }
    };
    Ok((granted, next))
}
