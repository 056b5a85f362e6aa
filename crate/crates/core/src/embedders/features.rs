use super::FeatureSource;
use crate::error::Result;
use crate::learn::DenseMatrix;
use crate::net::SubstrateNetwork;
use crate::spectral::{build_attribute_matrix, SpectralTracker, TrackerStats, UpdateMode, ATTRIBUTE_COLUMNS};

pub const RAW_FEATURES: usize = ATTRIBUTE_COLUMNS;

/// Per-node feature rows for the policy agent: the normalized attributes,
/// followed for the spectral sources by `k` columns `v_i * sqrt(lambda_i)`.
/// Missing spectral columns (substrates with fewer than `k` nodes) are zero.
#[derive(Clone, Debug)]
pub struct FeatureProvider {
    source: FeatureSource,
    k: usize,
    tracker: Option<SpectralTracker>,
}

impl FeatureProvider {
    pub fn new(source: FeatureSource, k: usize) -> Self {
        let tracker = match source {
            FeatureSource::Raw => None,
            FeatureSource::Fam => Some(SpectralTracker::new(k, UpdateMode::Rebuild)),
            FeatureSource::Mpt => Some(SpectralTracker::new(k, UpdateMode::Perturb)),
        };
        FeatureProvider { source, k, tracker }
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        match self.source {
            FeatureSource::Raw => RAW_FEATURES,
            _ => RAW_FEATURES + self.k,
        }
    }

    pub fn stats(&self) -> Option<&TrackerStats> {
        self.tracker.as_ref().map(|t| &t.stats)
    }

    /// Forgets tracked spectral state (e.g. when the substrate is reset).
    pub fn reset(&mut self) {
        if let Some(t) = &mut self.tracker {
            t.reset();
        }
    }

    pub fn features(&mut self, net: &SubstrateNetwork) -> Result<DenseMatrix> {
        let raw = build_attribute_matrix(net).0;
        let Some(tracker) = &mut self.tracker else {
            return Ok(raw);
        };
        let spectral = tracker.update(net)?.node_features();
        let n = raw.rows();
        let mut out = DenseMatrix::zeros(n, RAW_FEATURES + self.k);
        for i in 0..n {
            out.row_mut(i)[..RAW_FEATURES].copy_from_slice(raw.row(i));
            let cols = spectral.cols().min(self.k);
            out.row_mut(i)[RAW_FEATURES..RAW_FEATURES + cols].copy_from_slice(&spectral.row(i)[..cols]);
        }
        Ok(out)
    }
}
