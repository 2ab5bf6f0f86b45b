use serde::{Deserialize, Serialize};

use super::attention::Attended;
use super::selection::SparseSelection;

/// Attention of one query region over reference regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub query_index: usize,
    pub key_indices: Vec<usize>,
    pub weights: Vec<f32>,
}

/// Diagnostic export of attention rows and the selection behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub grid_height: usize,
    pub grid_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SparseSelection>,
    pub rows: Vec<AttentionRow>,
}

impl AttentionDump {
    /// Rows for `queries`; with `top = Some(n)` only the `n` heaviest keys
    /// of each row are kept, heaviest first.
    pub fn new(att: &Attended, selection: Option<&SparseSelection>, queries: &[usize], top: Option<usize>) -> Self {
        let rows = queries
            .iter()
            .filter(|&&q| q < att.weights.queries)
            .map(|&q| {
                let w = att.weights.row(q);
                let mut order: Vec<usize> = (0..w.len()).collect();
                if let Some(n) = top {
                    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
                    order.truncate(n);
                }
                AttentionRow {
                    query_index: q,
                    key_indices: order.iter().map(|&j| att.key_indices[j]).collect(),
                    weights: order.iter().map(|&j| w[j]).collect(),
                }
            })
            .collect();
        Self {
            grid_height: att.features.height,
            grid_width: att.features.width,
            selection: selection.cloned(),
            rows,
        }
    }
}
