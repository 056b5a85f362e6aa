#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vne_core::learn::DenseMatrix;
use vne_core::SubstrateNetwork;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Connected random graph: a random spanning tree plus `extra` chords.
pub fn random_net(n: usize, extra: usize, seed: u64) -> SubstrateNetwork {
    let mut r = rng(seed);
    let cpu: Vec<f64> = (0..n).map(|_| r.random_range(10..100) as f64).collect();
    let mut links = Vec::new();
    let mut present = std::collections::BTreeSet::new();
    for v in 1..n {
        let u = r.random_range(0..v);
        present.insert((u, v));
        links.push((u, v, r.random_range(5..60) as f64));
    }
    let mut tries = 0;
    while links.len() < n - 1 + extra && tries < 10 * (extra + 1) {
        tries += 1;
        let a = r.random_range(0..n);
        let b = r.random_range(0..n);
        let key = (a.min(b), a.max(b));
        if a != b && present.insert(key) {
            links.push((key.0, key.1, r.random_range(5..60) as f64));
        }
    }
    SubstrateNetwork::new(&cpu, &links).unwrap()
}

pub fn random_symmetric(n: usize, r: &mut ChaCha8Rng) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let x: f64 = r.random_range(-1.0..1.0);
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    m
}

/// Cyclic Jacobi rotations. Returns eigenvalues in descending order with
/// the matching eigenvectors as columns.
pub fn jacobi(s: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = s.rows();
    let mut a = s.clone();
    let mut v = DenseMatrix::identity(n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        for k in 0..n {
            vecs[(k, c)] = v[(k, i)];
        }
    }
    (values, vecs)
}

/// Hop distances by breadth-first search over links with at least `bw`
/// available.
pub fn filtered_bfs(net: &SubstrateNetwork, source: usize, bw: f64) -> Vec<Option<usize>> {
    let n = net.node_count();
    let mut dist = vec![None; n];
    dist[source] = Some(0);
    let mut queue = std::collections::VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        for l in net.links() {
            if l.bw_available < bw {
                continue;
            }
            let (a, b) = l.endpoints;
            let w = if a == u {
                b
            } else if b == u {
                a
            } else {
                continue;
            };
            if dist[w].is_none() {
                dist[w] = Some(dist[u].unwrap() + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}
