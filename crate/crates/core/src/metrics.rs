//! Revenue, cost and the long-run ratios used to compare embedders.

use std::io::Write;

use crate::error::{Result, VneError};
use crate::net::{Embedding, SubstrateNetwork, VirtualNetworkRequest};

/// Revenue of embedding a request: total CPU plus total bandwidth demanded.
pub fn revenue(vnr: &VirtualNetworkRequest) -> f64 {
    let cpu: f64 = vnr.cpu_demand.iter().sum();
    vnr.links.iter().fold(cpu, |acc, l| acc + l.bw_demand)
}

/// Substrate resources consumed: total CPU plus, for every virtual link,
/// the bandwidth of each flow times the hops it travels.
///
/// The bandwidth term of a link is accumulated as
/// `demand + sum(bw * (hops - 1))`, which equals `sum(bw * hops)` because
/// the flows of a link sum to its demand. Written this way every term is the
/// matching revenue term plus a non-negative excess, so `cost >= revenue`
/// holds bit-for-bit and single-hop embeddings cost exactly their revenue.
pub fn cost(vnr: &VirtualNetworkRequest, emb: &Embedding) -> Result<f64> {
    let incomplete = |reason: String| VneError::InvalidEmbedding {
        vnr: vnr.id,
        reason,
    };
    if emb.vnr_id != vnr.id {
        return Err(incomplete(format!("embedding belongs to request {}", emb.vnr_id)));
    }
    if emb.node_map.len() != vnr.node_count() {
        return Err(incomplete(format!(
            "{} of {} virtual nodes mapped",
            emb.node_map.len(),
            vnr.node_count()
        )));
    }
    if emb.link_map.len() != vnr.links.len() {
        return Err(incomplete(format!(
            "{} of {} virtual links mapped",
            emb.link_map.len(),
            vnr.links.len()
        )));
    }
    let cpu: f64 = vnr.cpu_demand.iter().sum();
    let mut total = cpu;
    for (vl, lm) in vnr.links.iter().zip(&emb.link_map) {
        let same = lm.endpoints == vl.endpoints
            || lm.endpoints == (vl.endpoints.1, vl.endpoints.0);
        if !same || lm.flows.is_empty() {
            return Err(incomplete(format!(
                "virtual link {:?} is not mapped",
                vl.endpoints
            )));
        }
        let excess: f64 = lm
            .flows
            .iter()
            .map(|f| f.bw * (f.hops().max(1) - 1) as f64)
            .sum();
        total += vl.bw_demand + excess;
    }
    Ok(total)
}

/// Accumulators for the long-run metrics of one simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunningTotals {
    pub revenue_sum: f64,
    pub cost_sum: f64,
    pub arrived: u64,
    pub accepted: u64,
    /// Simulation time of the last processed event.
    pub horizon: f64,
}

impl RunningTotals {
    pub fn record_arrival(&mut self, time: f64) {
        self.arrived += 1;
        self.horizon = self.horizon.max(time);
    }

    pub fn record_acceptance(&mut self, revenue: f64, cost: f64) {
        self.accepted += 1;
        self.revenue_sum += revenue;
        self.cost_sum += cost;
    }
}

/// Finite-horizon revenue-to-cost ratio; `None` before any cost accrues.
pub fn long_term_rc(totals: &RunningTotals) -> Option<f64> {
    (totals.cost_sum > 0.0).then(|| totals.revenue_sum / totals.cost_sum)
}

pub fn acceptance_rate(totals: &RunningTotals) -> Option<f64> {
    (totals.arrived > 0).then(|| totals.accepted as f64 / totals.arrived as f64)
}

/// Share of total link bandwidth currently allocated.
pub fn link_utilization(net: &SubstrateNetwork) -> f64 {
    let capacity = net.total_bw_capacity();
    if capacity <= 0.0 {
        return 0.0;
    }
    let used: f64 = net
        .links()
        .iter()
        .map(|l| l.bw_capacity - l.bw_available)
        .sum();
    used / capacity
}

pub const RESULTS_HEADER: [&str; 10] = [
    "time",
    "vnr_id",
    "accepted",
    "revenue",
    "cost",
    "cum_revenue",
    "cum_cost",
    "long_term_rc",
    "acceptance_rate",
    "link_utilization",
];

/// One row of the results file, written after each arrival.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub time: f64,
    pub vnr_id: u64,
    pub accepted: bool,
    pub revenue: f64,
    pub cost: f64,
    pub cum_revenue: f64,
    pub cum_cost: f64,
    pub long_term_rc: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub link_utilization: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    fn fields(&self) -> [String; 10] {
        [
            self.time.to_string(),
            self.vnr_id.to_string(),
            u8::from(self.accepted).to_string(),
            self.revenue.to_string(),
            self.cost.to_string(),
            self.cum_revenue.to_string(),
            self.cum_cost.to_string(),
            opt(self.long_term_rc),
            opt(self.acceptance_rate),
            self.link_utilization.to_string(),
        ]
    }

    fn from_record(rec: &csv::StringRecord) -> std::result::Result<Self, String> {
        if rec.len() != RESULTS_HEADER.len() {
            return Err(format!("expected 10 columns, found {}", rec.len()));
        }
        let real = |i: usize| -> std::result::Result<f64, String> {
            rec[i]
                .parse()
                .map_err(|_| format!("column {} is not a number: `{}`", RESULTS_HEADER[i], &rec[i]))
        };
        let maybe = |i: usize| -> std::result::Result<Option<f64>, String> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                real(i).map(Some)
            }
        };
        Ok(ResultRow {
            time: real(0)?,
            vnr_id: rec[1].parse().map_err(|_| format!("bad vnr_id `{}`", &rec[1]))?,
            accepted: match &rec[2] {
                "1" => true,
                "0" => false,
                other => return Err(format!("bad accepted flag `{other}`")),
            },
            revenue: real(3)?,
            cost: real(4)?,
            cum_revenue: real(5)?,
            cum_cost: real(6)?,
            long_term_rc: maybe(7)?,
            acceptance_rate: maybe(8)?,
            link_utilization: real(9)?,
        })
    }
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush().map_err(|e| VneError::io("<results>", e))?;
    Ok(())
}

pub fn read_results(path: &std::path::Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(VneError::parse(path, 1, "unexpected results header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        rows.push(ResultRow::from_record(&rec).map_err(|m| VneError::parse(path, i + 2, m))?);
    }
    Ok(rows)
}
