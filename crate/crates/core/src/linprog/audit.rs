//! Process-wide record of the optimality certificates handed out.

use std::sync::atomic::{AtomicU64, Ordering};

use super::LpSolution;

static OPTIMAL: AtomicU64 = AtomicU64::new(0);
static GAP: AtomicU64 = AtomicU64::new(0);
static PRIMAL: AtomicU64 = AtomicU64::new(0);
static DUAL: AtomicU64 = AtomicU64::new(0);

/// Worst certificate over every `Optimal` answer since the process started.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveAudit {
    pub optimal_solves: u64,
    pub max_duality_gap: f64,
    pub max_primal_residual: f64,
    pub max_dual_residual: f64,
}

// non-negative floats order like their bit patterns
fn bump(slot: &AtomicU64, v: f64) {
    slot.fetch_max(v.max(0.0).to_bits(), Ordering::Relaxed);
}

pub(crate) fn record(sol: &LpSolution) {
    OPTIMAL.fetch_add(1, Ordering::Relaxed);
    bump(&GAP, sol.duality_gap);
    bump(&PRIMAL, sol.max_primal_residual);
    bump(&DUAL, sol.max_dual_residual);
}

pub fn solve_audit() -> SolveAudit {
    SolveAudit {
        optimal_solves: OPTIMAL.load(Ordering::Relaxed),
        max_duality_gap: f64::from_bits(GAP.load(Ordering::Relaxed)),
        max_primal_residual: f64::from_bits(PRIMAL.load(Ordering::Relaxed)),
        max_dual_residual: f64::from_bits(DUAL.load(Ordering::Relaxed)),
    }
}
