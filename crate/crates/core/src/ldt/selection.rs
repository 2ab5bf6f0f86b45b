use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference regions chosen for sparse attention: the `k` strongest CAM
/// responses plus `r` uniformly drawn others.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSelection {
    pub cam: Vec<f32>,
    pub topk: Vec<usize>,
    pub random: Vec<usize>,
    pub k: usize,
    pub r: usize,
}

impl SparseSelection {
    /// Selected region ids in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.topk.iter().chain(&self.random).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn len(&self) -> usize {
        self.k + self.r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Region ids ordered by descending score, lowest id first among ties.
pub fn rank_regions(scores: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn select_regions<R: Rng + ?Sized>(cam: &[f32], k: usize, r: usize, rng: &mut R) -> Result<SparseSelection> {
    let regions = cam.len();
    if k + r > regions {
        return Err(Error::SelectionTooLarge { k, r, regions });
    }
    let order = rank_regions(cam);
    let topk = order[..k].to_vec();
    let mut rest = order[k..].to_vec();
    rest.sort_unstable();
    let random = rand::seq::index::sample(rng, rest.len(), r)
        .into_iter()
        .map(|i| rest[i])
        .collect();
    Ok(SparseSelection {
        cam: cam.to_vec(),
        topk,
        random,
        k,
        r,
    })
}
