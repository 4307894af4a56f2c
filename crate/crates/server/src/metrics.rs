use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Service-wide counters behind `GET /metrics`.
#[derive(Debug, Default)]
pub struct Metrics {
    pub sessions_created: AtomicU64,
    pub sessions_ended: AtomicU64,
    pub ticks: AtomicU64,
    pub instructions: AtomicU64,
    pub proposals: AtomicU64,
    pub decisions: AtomicU64,
    pub manual_actions: AtomicU64,
    pub advisor_calls: AtomicU64,
    pub advisor_failures: AtomicU64,
    pub advisor_latency_ms_total: AtomicU64,
    pub max_tick_gap_ms: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub sessions_created: u64,
    pub sessions_active: u64,
    pub ticks: u64,
    pub instructions: u64,
    pub proposals: u64,
    pub decisions: u64,
    pub manual_actions: u64,
    pub advisor_calls: u64,
    pub advisor_failures: u64,
    pub mean_advisor_latency_ms: Option<f64>,
    pub max_tick_gap_ms: u64,
}

impl Metrics {
    pub(crate) fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        let calls = get(&self.advisor_calls);
        MetricsSnapshot {
            sessions_created: get(&self.sessions_created),
            sessions_active: get(&self.sessions_created).saturating_sub(get(&self.sessions_ended)),
            ticks: get(&self.ticks),
            instructions: get(&self.instructions),
            proposals: get(&self.proposals),
            decisions: get(&self.decisions),
            manual_actions: get(&self.manual_actions),
            advisor_calls: calls,
            advisor_failures: get(&self.advisor_failures),
            mean_advisor_latency_ms: (calls > 0).then(|| get(&self.advisor_latency_ms_total) as f64 / calls as f64),
            max_tick_gap_ms: get(&self.max_tick_gap_ms),
        }
    }
}
