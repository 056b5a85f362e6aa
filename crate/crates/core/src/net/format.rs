//! Line-oriented text formats for substrates and request traces.
//!
//! Substrate:
//! ```text
//! SUBSTRATE <num_nodes> <num_links>
//! NODE <id> <cpu> [<x> <y>]
//! LINK <u> <v> <bw>
//! ```
//!
//! Request trace:
//! ```text
//! REQUESTS <count>
//! VNR <id> <arrival> <lifetime> <num_nodes> <num_links>
//! VNODE <index> <cpu>
//! VLINK <a> <b> <bw>
//! ```
//!
//! `#` starts a comment. Reals are written in shortest round-trip form, so a
//! write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{NodeId, SubstrateNetwork, VirtualLink, VirtualNetworkRequest};
use crate::error::{Result, VneError};

struct Lines<'a> {
    origin: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(origin: &'a Path, text: &'a str) -> Self {
        Lines {
            origin,
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-empty, comment-stripped line as (1-based line number, tokens).
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if !tokens.is_empty() {
                return Some((i + 1, tokens));
            }
        }
        None
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> VneError {
        VneError::parse(self.origin, line, msg)
    }

    fn expect(&mut self, keyword: &str, arity: &[usize]) -> Result<(usize, Vec<&'a str>)> {
        let (line, tokens) = self
            .next_tokens()
            .ok_or_else(|| self.err(0, format!("unexpected end of input, expected {keyword}")))?;
        if tokens[0] != keyword {
            return Err(self.err(line, format!("expected {keyword}, found {}", tokens[0])));
        }
        if !arity.contains(&(tokens.len() - 1)) {
            return Err(self.err(
                line,
                format!("{keyword} takes {arity:?} fields, found {}", tokens.len() - 1),
            ));
        }
        Ok((line, tokens))
    }

    fn field<T: FromStr>(&self, line: usize, token: &str, what: &str) -> Result<T> {
        token
            .parse()
            .map_err(|_| self.err(line, format!("bad {what} `{token}`")))
    }
}

pub fn write_substrate(net: &SubstrateNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "SUBSTRATE {} {}", net.node_count(), net.link_count());
    for n in net.nodes() {
        match n.position {
            Some((x, y)) => {
                let _ = writeln!(out, "NODE {} {} {} {}", n.id, n.cpu_capacity, x, y);
            }
            None => {
                let _ = writeln!(out, "NODE {} {}", n.id, n.cpu_capacity);
            }
        }
    }
    for l in net.links() {
        let _ = writeln!(
            out,
            "LINK {} {} {}",
            l.endpoints.0, l.endpoints.1, l.bw_capacity
        );
    }
    out
}

/// Parses a substrate description. `origin` labels error messages.
pub fn parse_substrate(text: &str, origin: &Path) -> Result<SubstrateNetwork> {
    let mut lines = Lines::new(origin, text);
    let (line, header) = lines.expect("SUBSTRATE", &[2])?;
    let n: usize = lines.field(line, header[1], "node count")?;
    let m: usize = lines.field(line, header[2], "link count")?;

    let mut cpu = vec![None; n];
    let mut positions = vec![None; n];
    for _ in 0..n {
        let (line, t) = lines.expect("NODE", &[2, 4])?;
        let id: NodeId = lines.field(line, t[1], "node id")?;
        if id >= n {
            return Err(lines.err(line, format!("node id {id} outside 0..{n}")));
        }
        if cpu[id].is_some() {
            return Err(lines.err(line, format!("duplicate node {id}")));
        }
        cpu[id] = Some(lines.field::<f64>(line, t[2], "cpu")?);
        if t.len() == 5 {
            let x: f64 = lines.field(line, t[3], "x")?;
            let y: f64 = lines.field(line, t[4], "y")?;
            positions[id] = Some((x, y));
        }
    }
    let mut links = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, t) = lines.expect("LINK", &[3])?;
        let u: NodeId = lines.field(line, t[1], "endpoint")?;
        let v: NodeId = lines.field(line, t[2], "endpoint")?;
        let bw: f64 = lines.field(line, t[3], "bandwidth")?;
        links.push((u, v, bw));
    }
    if let Some((line, t)) = lines.next_tokens() {
        return Err(lines.err(line, format!("trailing record {}", t[0])));
    }
    let cpu: Vec<f64> = cpu.into_iter().map(|c| c.unwrap_or(0.0)).collect();
    let net = SubstrateNetwork::new(&cpu, &links)
        .map_err(|e| lines.err(0, e.to_string()))?;
    if positions.iter().all(Option::is_some) && n > 0 {
        let pos: Vec<(f64, f64)> = positions.into_iter().flatten().collect();
        return net.with_positions(&pos);
    }
    Ok(net)
}

pub fn read_substrate(path: impl AsRef<Path>) -> Result<SubstrateNetwork> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| VneError::io(path, e))?;
    parse_substrate(&text, path)
}

pub fn write_requests(requests: &[VirtualNetworkRequest]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "REQUESTS {}", requests.len());
    for r in requests {
        let _ = writeln!(
            out,
            "VNR {} {} {} {} {}",
            r.id,
            r.arrival_time,
            r.lifetime,
            r.cpu_demand.len(),
            r.links.len()
        );
        for (i, c) in r.cpu_demand.iter().enumerate() {
            let _ = writeln!(out, "VNODE {i} {c}");
        }
        for l in &r.links {
            let _ = writeln!(
                out,
                "VLINK {} {} {}",
                l.endpoints.0, l.endpoints.1, l.bw_demand
            );
        }
    }
    out
}

pub fn parse_requests(text: &str, origin: &Path) -> Result<Vec<VirtualNetworkRequest>> {
    let mut lines = Lines::new(origin, text);
    let (line, header) = lines.expect("REQUESTS", &[1])?;
    let count: usize = lines.field(line, header[1], "request count")?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, t) = lines.expect("VNR", &[5])?;
        let id: u64 = lines.field(line, t[1], "request id")?;
        let arrival: f64 = lines.field(line, t[2], "arrival time")?;
        let lifetime: f64 = lines.field(line, t[3], "lifetime")?;
        let nodes: usize = lines.field(line, t[4], "node count")?;
        let nlinks: usize = lines.field(line, t[5], "link count")?;
        let mut cpu = vec![None; nodes];
        for _ in 0..nodes {
            let (l, t) = lines.expect("VNODE", &[2])?;
            let idx: usize = lines.field(l, t[1], "virtual node index")?;
            if idx >= nodes || cpu[idx].is_some() {
                return Err(lines.err(l, format!("bad or duplicate virtual node {idx}")));
            }
            cpu[idx] = Some(lines.field::<f64>(l, t[2], "cpu demand")?);
        }
        let mut links = Vec::with_capacity(nlinks);
        for _ in 0..nlinks {
            let (l, t) = lines.expect("VLINK", &[3])?;
            let a: usize = lines.field(l, t[1], "endpoint")?;
            let b: usize = lines.field(l, t[2], "endpoint")?;
            let bw: f64 = lines.field(l, t[3], "bandwidth demand")?;
            links.push(VirtualLink {
                endpoints: (a, b),
                bw_demand: bw,
            });
        }
        let cpu = cpu.into_iter().map(|c| c.unwrap_or(0.0)).collect();
        let vnr = VirtualNetworkRequest::new(id, arrival, lifetime, cpu, links)
            .map_err(|e| lines.err(line, e.to_string()))?;
        if let Some(prev) = out.last() {
            let prev: &VirtualNetworkRequest = prev;
            if prev.arrival_time > vnr.arrival_time {
                return Err(lines.err(line, "requests are not ordered by arrival time"));
            }
        }
        out.push(vnr);
    }
    if let Some((line, t)) = lines.next_tokens() {
        return Err(lines.err(line, format!("trailing record {}", t[0])));
    }
    Ok(out)
}

pub fn read_requests(path: impl AsRef<Path>) -> Result<Vec<VirtualNetworkRequest>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| VneError::io(path, e))?;
    parse_requests(&text, path)
}
