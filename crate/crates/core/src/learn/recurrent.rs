//! Gated recurrent cells with hand-written backward passes.
//!
//! A cell reads its weights from a [`ParamSet`] starting at a fixed index, so
//! several cells (encoder, decoder) can share one parameter set. The state
//! vector of a GRU is `h`; an LSTM carries `[h; c]`. In both cases the first
//! `hidden` entries of the state are the cell output.

use super::matrix::{affine, sigmoid, DenseMatrix};
use super::params::{ParamSet, ParamSpec};
use crate::error::{Result, VneError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    Gru,
    Lstm,
}

impl std::str::FromStr for CellKind {
    type Err = VneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(VneError::Config(format!("unknown cell type `{other}`"))),
        }
    }
}

/// Gate names of each cell kind, in parameter order. Each gate has a weight
/// `<prefix>.w<gate>` over `[x; h]` and a bias `<prefix>.b<gate>`.
fn gates(kind: CellKind) -> &'static [&'static str] {
    match kind {
        CellKind::Gru => &["z", "r", "h"],
        CellKind::Lstm => &["i", "f", "o", "g"],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    /// Index of the first gate weight in the owning parameter set.
    first: usize,
}

/// Values saved by a forward step for the backward pass.
#[derive(Clone, Debug)]
pub struct CellCache {
    x: Vec<f64>,
    state: Vec<f64>,
    /// Post-activation gate values, one vector per gate.
    acts: Vec<Vec<f64>>,
    /// GRU: `[x; r*h]` fed to the candidate gate. LSTM: tanh of the new cell.
    aux: Vec<f64>,
}

impl RecurrentCell {
    /// Parameter specs for a cell named `prefix`.
    pub fn specs(prefix: &str, kind: CellKind, input: usize, hidden: usize) -> Vec<(String, usize, usize, bool)> {
        gates(kind)
            .iter()
            .flat_map(|g| {
                [
                    (format!("{prefix}.w{g}"), hidden, input + hidden, false),
                    (format!("{prefix}.b{g}"), hidden, 1, true),
                ]
            })
            .collect()
    }

    /// Resolves the cell's parameters inside `params` and checks their shapes.
    pub fn bind(params: &ParamSet, prefix: &str, kind: CellKind, input: usize, hidden: usize) -> Result<Self> {
        let first_name = format!("{prefix}.w{}", gates(kind)[0]);
        let first = params
            .index_of(&first_name)
            .ok_or_else(|| VneError::Shape(format!("missing parameter {first_name}")))?;
        for (k, (name, rows, cols, _)) in Self::specs(prefix, kind, input, hidden).into_iter().enumerate() {
            let found = params.names().get(first + k);
            if found != Some(&name) || params[first + k].shape() != (rows, cols) {
                return Err(VneError::Shape(format!(
                    "parameter {name} missing or not {rows}x{cols}"
                )));
            }
        }
        Ok(RecurrentCell {
            kind,
            input,
            hidden,
            first,
        })
    }

    pub fn state_size(&self) -> usize {
        match self.kind {
            CellKind::Gru => self.hidden,
            CellKind::Lstm => 2 * self.hidden,
        }
    }

    pub fn zero_state(&self) -> Vec<f64> {
        vec![0.0; self.state_size()]
    }

    pub fn output<'s>(&self, state: &'s [f64]) -> &'s [f64] {
        &state[..self.hidden]
    }

    fn weight<'p>(&self, params: &'p ParamSet, gate: usize) -> (&'p DenseMatrix, &'p [f64]) {
        (
            &params[self.first + 2 * gate],
            params[self.first + 2 * gate + 1].as_slice(),
        )
    }

    fn check(&self, x: &[f64], state: &[f64]) -> Result<()> {
        if x.len() != self.input || state.len() != self.state_size() {
            return Err(VneError::Shape(format!(
                "cell expects input {} and state {}, got {} and {}",
                self.input,
                self.state_size(),
                x.len(),
                state.len()
            )));
        }
        Ok(())
    }

    pub fn step(&self, params: &ParamSet, x: &[f64], state: &[f64]) -> Result<Vec<f64>> {
        self.forward(params, x, state).map(|(s, _)| s)
    }

    pub fn forward(&self, params: &ParamSet, x: &[f64], state: &[f64]) -> Result<(Vec<f64>, CellCache)> {
        self.check(x, state)?;
        let hd = self.hidden;
        let h = &state[..hd];
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        match self.kind {
            CellKind::Gru => {
                let (wz, bz) = self.weight(params, 0);
                let (wr, br) = self.weight(params, 1);
                let (wh, bh) = self.weight(params, 2);
                let z: Vec<f64> = affine(&xh, wz, bz)?.into_iter().map(sigmoid).collect();
                let r: Vec<f64> = affine(&xh, wr, br)?.into_iter().map(sigmoid).collect();
                let xrh: Vec<f64> = x
                    .iter()
                    .copied()
                    .chain(r.iter().zip(h).map(|(ri, hi)| ri * hi))
                    .collect();
                let c: Vec<f64> = affine(&xrh, wh, bh)?.into_iter().map(f64::tanh).collect();
                let next: Vec<f64> = (0..hd).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect();
                let cache = CellCache {
                    x: x.to_vec(),
                    state: state.to_vec(),
                    acts: vec![z, r, c],
                    aux: xrh,
                };
                Ok((next, cache))
            }
            CellKind::Lstm => {
                let cell = &state[hd..];
                let mut acts = Vec::with_capacity(4);
                for g in 0..4 {
                    let (w, b) = self.weight(params, g);
                    let pre = affine(&xh, w, b)?;
                    acts.push(if g == 3 {
                        pre.into_iter().map(f64::tanh).collect()
                    } else {
                        pre.into_iter().map(sigmoid).collect::<Vec<f64>>()
                    });
                }
                let (i, f, o, g) = (&acts[0], &acts[1], &acts[2], &acts[3]);
                let c_new: Vec<f64> = (0..hd).map(|k| f[k] * cell[k] + i[k] * g[k]).collect();
                let tc: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
                let mut next: Vec<f64> = (0..hd).map(|k| o[k] * tc[k]).collect();
                next.extend_from_slice(&c_new);
                let cache = CellCache {
                    x: x.to_vec(),
                    state: state.to_vec(),
                    acts,
                    aux: tc,
                };
                Ok((next, cache))
            }
        }
    }

    /// Backpropagates `d_next` (gradient w.r.t. the new state) through one
    /// step, accumulating weight gradients into `grads`. Returns the
    /// gradients w.r.t. the input and the previous state.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &CellCache,
        d_next: &[f64],
        grads: &mut ParamSet,
    ) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let d_in = self.input;
        let h = &cache.state[..hd];
        let xh: Vec<f64> = cache.x.iter().chain(h).copied().collect();
        let mut dx = vec![0.0; d_in];
        let mut dstate = vec![0.0; self.state_size()];
        let mut push_gate = |gate: usize, dpre: &[f64], input: &[f64], dinput: &mut Vec<f64>| {
            let (w, _) = self.weight(params, gate);
            grads[self.first + 2 * gate].add_outer(1.0, dpre, input);
            super::matrix::axpy(grads[self.first + 2 * gate + 1].as_mut_slice(), 1.0, dpre);
            let back = w.t_matvec(dpre);
            super::matrix::axpy(dinput, 1.0, &back);
        };
        match self.kind {
            CellKind::Gru => {
                let (z, r, c) = (&cache.acts[0], &cache.acts[1], &cache.acts[2]);
                let dh_next = &d_next[..hd];
                let dpre_c: Vec<f64> = (0..hd)
                    .map(|i| dh_next[i] * z[i] * (1.0 - c[i] * c[i]))
                    .collect();
                let dpre_z: Vec<f64> = (0..hd)
                    .map(|i| dh_next[i] * (c[i] - h[i]) * z[i] * (1.0 - z[i]))
                    .collect();
                let mut dxrh = vec![0.0; d_in + hd];
                push_gate(2, &dpre_c, &cache.aux, &mut dxrh);
                let drh = &dxrh[d_in..];
                let dpre_r: Vec<f64> = (0..hd)
                    .map(|i| drh[i] * h[i] * r[i] * (1.0 - r[i]))
                    .collect();
                let mut dxh = vec![0.0; d_in + hd];
                push_gate(0, &dpre_z, &xh, &mut dxh);
                push_gate(1, &dpre_r, &xh, &mut dxh);
                for k in 0..d_in {
                    dx[k] = dxrh[k] + dxh[k];
                }
                for i in 0..hd {
                    dstate[i] = dh_next[i] * (1.0 - z[i]) + drh[i] * r[i] + dxh[d_in + i];
                }
            }
            CellKind::Lstm => {
                let (ig, fg, og, gg) = (&cache.acts[0], &cache.acts[1], &cache.acts[2], &cache.acts[3]);
                let tc = &cache.aux;
                let cell = &cache.state[hd..];
                let dh_next = &d_next[..hd];
                let dc_next = &d_next[hd..];
                let dc: Vec<f64> = (0..hd)
                    .map(|k| dc_next[k] + dh_next[k] * og[k] * (1.0 - tc[k] * tc[k]))
                    .collect();
                let dpre_i: Vec<f64> = (0..hd).map(|k| dc[k] * gg[k] * ig[k] * (1.0 - ig[k])).collect();
                let dpre_f: Vec<f64> = (0..hd).map(|k| dc[k] * cell[k] * fg[k] * (1.0 - fg[k])).collect();
                let dpre_o: Vec<f64> = (0..hd).map(|k| dh_next[k] * tc[k] * og[k] * (1.0 - og[k])).collect();
                let dpre_g: Vec<f64> = (0..hd).map(|k| dc[k] * ig[k] * (1.0 - gg[k] * gg[k])).collect();
                let mut dxh = vec![0.0; d_in + hd];
                push_gate(0, &dpre_i, &xh, &mut dxh);
                push_gate(1, &dpre_f, &xh, &mut dxh);
                push_gate(2, &dpre_o, &xh, &mut dxh);
                push_gate(3, &dpre_g, &xh, &mut dxh);
                dx.copy_from_slice(&dxh[..d_in]);
                for k in 0..hd {
                    dstate[k] = dxh[d_in + k];
                    dstate[hd + k] = dc[k] * fg[k];
                }
            }
        }
        (dx, dstate)
    }
}

/// Convenience: parameter specs for a cell as [`ParamSpec`]s borrowing
/// from `names`.
pub fn cell_param_specs(names: &[(String, usize, usize, bool)]) -> Vec<ParamSpec<'_>> {
    names
        .iter()
        .map(|(n, r, c, bias)| ParamSpec {
            name: n,
            rows: *r,
            cols: *c,
            bias: *bias,
        })
        .collect()
}
