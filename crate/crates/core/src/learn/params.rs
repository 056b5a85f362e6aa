use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DenseMatrix;
use crate::error::{Result, VneError};

/// Named, ordered collection of trainable matrices. Shapes are fixed at
/// construction; updates only touch entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    mats: Vec<DenseMatrix>,
}

/// Shape and initialization of one parameter.
#[derive(Clone, Copy, Debug)]
pub struct ParamSpec<'a> {
    pub name: &'a str,
    pub rows: usize,
    pub cols: usize,
    /// Biases start at zero; weights are drawn uniformly.
    pub bias: bool,
}

impl<'a> ParamSpec<'a> {
    pub fn weight(name: &'a str, rows: usize, cols: usize) -> Self {
        ParamSpec {
            name,
            rows,
            cols,
            bias: false,
        }
    }

    pub fn bias(name: &'a str, rows: usize) -> Self {
        ParamSpec {
            name,
            rows,
            cols: 1,
            bias: true,
        }
    }
}

impl ParamSet {
    /// Weights uniform in `[-scale, scale]` from a ChaCha8 stream seeded with
    /// `seed`; biases zero.
    pub fn init(specs: &[ParamSpec<'_>], scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet {
            names: Vec::with_capacity(specs.len()),
            mats: Vec::with_capacity(specs.len()),
        };
        for spec in specs {
            let mut m = DenseMatrix::zeros(spec.rows, spec.cols);
            if !spec.bias && scale > 0.0 {
                for x in m.as_mut_slice() {
                    *x = rng.random_range(-scale..=scale);
                }
            }
            set.push(spec.name, m);
        }
        set
    }

    pub fn from_entries(entries: Vec<(String, DenseMatrix)>) -> Result<Self> {
        let mut set = ParamSet {
            names: Vec::new(),
            mats: Vec::new(),
        };
        for (name, m) in entries {
            if set.index_of(&name).is_some() {
                return Err(VneError::Shape(format!("duplicate parameter {name}")));
            }
            set.push(&name, m);
        }
        Ok(set)
    }

    fn push(&mut self, name: &str, m: DenseMatrix) {
        self.names.push(name.to_string());
        self.mats.push(m);
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            names: self.names.clone(),
            mats: self
                .mats
                .iter()
                .map(|m| DenseMatrix::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix> {
        self.index_of(name).map(|i| &self.mats[i])
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DenseMatrix)> {
        self.names.iter().map(String::as_str).zip(&self.mats)
    }

    pub fn scalar_count(&self) -> usize {
        self.mats.iter().map(|m| m.rows() * m.cols()).sum()
    }

    /// `self += scale * other`; both must have identical layout.
    pub fn add_scaled(&mut self, scale: f64, other: &ParamSet) {
        debug_assert_eq!(self.names, other.names);
        for (m, o) in self.mats.iter_mut().zip(&other.mats) {
            m.add_scaled(scale, o);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(DenseMatrix::is_finite)
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self
                .mats
                .iter()
                .zip(&other.mats)
                .all(|(a, b)| a.shape() == b.shape())
    }

    /// Flat view of every scalar, in parameter order.
    pub fn flat(&self) -> Vec<f64> {
        self.mats
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .collect()
    }

    pub fn scalar_mut(&mut self, mut k: usize) -> &mut f64 {
        for m in &mut self.mats {
            let len = m.rows() * m.cols();
            if k < len {
                return &mut m.as_mut_slice()[k];
            }
            k -= len;
        }
        panic!("scalar index out of range");
    }

    /// Serializes as `PARAM <name> <rows> <cols>` headers followed by the
    /// entries with 17 significant digits.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        for (name, m) in self.iter() {
            let _ = writeln!(out, "PARAM {name} {} {}", m.rows(), m.cols());
            for i in 0..m.rows() {
                let row: Vec<String> = m.row(i).iter().map(|x| format!("{x:.16e}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str, origin: &Path) -> Result<Self> {
        let mut tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)))
            .peekable();
        let mut entries = Vec::new();
        while let Some((line, tok)) = tokens.next() {
            if tok != "PARAM" {
                return Err(VneError::parse(origin, line, format!("expected PARAM, found `{tok}`")));
            }
            let mut field = |what: &str| {
                tokens
                    .next()
                    .ok_or_else(|| VneError::parse(origin, line, format!("missing {what}")))
            };
            let (_, name) = field("name")?;
            let (_, rows) = field("rows")?;
            let (_, cols) = field("cols")?;
            let rows: usize = rows
                .parse()
                .map_err(|_| VneError::parse(origin, line, format!("bad row count `{rows}`")))?;
            let cols: usize = cols
                .parse()
                .map_err(|_| VneError::parse(origin, line, format!("bad column count `{cols}`")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let (l, t) = tokens.next().ok_or_else(|| {
                    VneError::parse(origin, line, format!("parameter {name} is truncated"))
                })?;
                data.push(
                    t.parse::<f64>()
                        .map_err(|_| VneError::parse(origin, l, format!("bad entry `{t}`")))?,
                );
            }
            let m = DenseMatrix::new(rows, cols, data)
                .map_err(|e| VneError::parse(origin, line, e.to_string()))?;
            entries.push((name.to_string(), m));
        }
        Self::from_entries(entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint()).map_err(|e| VneError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| VneError::io(path, e))?;
        Self::from_checkpoint(&text, path)
    }
}

impl std::ops::Index<usize> for ParamSet {
    type Output = DenseMatrix;
    fn index(&self, i: usize) -> &DenseMatrix {
        &self.mats[i]
    }
}

impl std::ops::IndexMut<usize> for ParamSet {
    fn index_mut(&mut self, i: usize) -> &mut DenseMatrix {
        &mut self.mats[i]
    }
}
