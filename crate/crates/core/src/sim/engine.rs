use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use crate::embedders::Embedder;
use crate::error::{Result, VneError};
use crate::metrics::{self, ResultRow, RunningTotals};
use crate::net::{Embedding, SubstrateNetwork, VirtualNetworkRequest};

/// Events between two conservation audits.
pub const AUDIT_INTERVAL: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    /// Index into the request list.
    Arrival(usize),
    Departure(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

impl Event {
    /// Same-time ordering: departures first, then ascending request id.
    fn key(&self, requests: &[VirtualNetworkRequest]) -> (u8, u64) {
        match self.kind {
            EventKind::Departure(id) => (0, id),
            EventKind::Arrival(idx) => (1, requests[idx].id),
        }
    }
}

struct Queued {
    time: f64,
    key: (u8, u64),
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// Time-ordered arrivals and departures.
pub struct EventQueue<'r> {
    requests: &'r [VirtualNetworkRequest],
    heap: BinaryHeap<Queued>,
}

impl<'r> EventQueue<'r> {
    /// Queue holding one arrival per request.
    pub fn new(requests: &'r [VirtualNetworkRequest]) -> Self {
        let mut q = EventQueue {
            requests,
            heap: BinaryHeap::with_capacity(requests.len()),
        };
        for (idx, r) in requests.iter().enumerate() {
            q.push(Event {
                time: r.arrival_time,
                kind: EventKind::Arrival(idx),
            });
        }
        q
    }

    pub fn push(&mut self, event: Event) {
        self.heap.push(Queued {
            time: event.time,
            key: event.key(self.requests),
            event,
        });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|q| q.event)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Outcome of one simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOutcome {
    pub totals: RunningTotals,
    /// One row per arrival, in processing order.
    pub rows: Vec<ResultRow>,
}

/// Event loop with an arbitrary decision procedure. `decide` sees the
/// substrate at the arrival and returns the embedding to allocate, if any.
pub fn simulate<F>(net: &mut SubstrateNetwork, requests: &[VirtualNetworkRequest], mut decide: F) -> Result<SimOutcome>
where
    F: FnMut(&SubstrateNetwork, &VirtualNetworkRequest) -> Result<Option<Embedding>>,
{
    for w in requests.windows(2) {
        if w[1].arrival_time < w[0].arrival_time {
            return Err(VneError::InvalidRequest {
                id: w[1].id,
                reason: "requests are not ordered by arrival time".into(),
            });
        }
    }
    let mut queue = EventQueue::new(requests);
    let mut out = SimOutcome::default();
    let mut processed = 0usize;
    while let Some(event) = queue.pop() {
        match event.kind {
            EventKind::Departure(id) => {
                net.release_id(id)?;
            }
            EventKind::Arrival(idx) => {
                let vnr = &requests[idx];
                out.totals.record_arrival(event.time);
                let mut row = ResultRow {
                    time: event.time,
                    vnr_id: vnr.id,
                    accepted: false,
                    revenue: 0.0,
                    cost: 0.0,
                    cum_revenue: 0.0,
                    cum_cost: 0.0,
                    long_term_rc: None,
                    acceptance_rate: None,
                    link_utilization: 0.0,
                };
                if let Some(emb) = decide(net, vnr)? {
                    net.allocate(&emb)?;
                    let revenue = metrics::revenue(vnr);
                    let cost = metrics::cost(vnr, &emb)?;
                    if revenue > cost {
                        return Err(VneError::InvalidEmbedding {
                            vnr: vnr.id,
                            reason: format!("revenue {revenue} exceeds cost {cost}"),
                        });
                    }
                    out.totals.record_acceptance(revenue, cost);
                    row.accepted = true;
                    row.revenue = revenue;
                    row.cost = cost;
                    queue.push(Event {
                        time: vnr.departure_time(),
                        kind: EventKind::Departure(vnr.id),
                    });
                }
                row.cum_revenue = out.totals.revenue_sum;
                row.cum_cost = out.totals.cost_sum;
                row.long_term_rc = metrics::long_term_rc(&out.totals);
                row.acceptance_rate = metrics::acceptance_rate(&out.totals);
                row.link_utilization = metrics::link_utilization(net);
                out.rows.push(row);
            }
        }
        processed += 1;
        if processed.is_multiple_of(AUDIT_INTERVAL) {
            net.audit()?;
        }
    }
    net.audit()?;
    Ok(out)
}

/// Runs `embedder` over `requests` on `net`, writing the results CSV to
/// `out` when given.
pub fn run_simulation(
    net: &mut SubstrateNetwork,
    requests: &[VirtualNetworkRequest],
    embedder: &mut dyn Embedder,
    out: Option<&mut dyn Write>,
) -> Result<SimOutcome> {
    let outcome = simulate(net, requests, |n, vnr| embedder.embed(n, vnr))?;
    if let Some(w) = out {
        metrics::write_results(w, &outcome.rows)?;
    }
    Ok(outcome)
}
