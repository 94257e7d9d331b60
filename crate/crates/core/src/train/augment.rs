//! Link-level data augmentation.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{AcfSample, Provenance};

/// Rearranges link blocks so that output block `i` is input block `order[i]`.
pub fn permute_link_blocks(sample: &AcfSample, order: &[usize]) -> Result<AcfSample> {
    let links = sample.num_links;
    let mut seen = vec![false; links];
    if order.len() != links
        || order
            .iter()
            .any(|&o| o >= links || std::mem::replace(&mut seen[o], true))
    {
        return Err(Error::ShapeMismatch(format!(
            "{order:?} is not a permutation of {links} links"
        )));
    }
    let k = sample.subcarriers_per_link();
    let mut matrix = Array2::zeros(sample.matrix.dim());
    for (dst, &src) in order.iter().enumerate() {
        matrix
            .slice_mut(s![.., dst * k..(dst + 1) * k])
            .assign(&sample.matrix.slice(s![.., src * k..(src + 1) * k]));
    }
    let mut inverse = vec![0; links];
    for (dst, &src) in order.iter().enumerate() {
        inverse[src] = dst;
    }
    let mut dead: Vec<usize> = sample
        .dead_columns
        .iter()
        .map(|&c| inverse[c / k] * k + c % k)
        .collect();
    dead.sort_unstable();
    Ok(AcfSample {
        matrix,
        per_link_motion_stat: order.iter().map(|&o| sample.per_link_motion_stat[o]).collect(),
        dead_columns: dead,
        provenance: Provenance::Permuted { order: order.to_vec() },
        ..sample.clone()
    })
}

/// Uniformly random reordering of the link blocks. A single-link sample is
/// returned unchanged.
pub fn augment_link_permutation(sample: &AcfSample, rng: &mut impl Rng) -> AcfSample {
    if sample.num_links < 2 {
        return sample.clone();
    }
    let mut order: Vec<usize> = (0..sample.num_links).collect();
    order.shuffle(rng);
    permute_link_blocks(sample, &order).expect("a shuffled identity is a permutation")
}

/// Links of `sample` ordered by decreasing mean motion statistic, ties to the
/// lower index.
pub fn links_by_sensitivity(sample: &AcfSample) -> Vec<usize> {
    let mut links: Vec<usize> = (0..sample.num_links).collect();
    links.sort_by(|&a, &b| {
        sample.per_link_motion_stat[b]
            .total_cmp(&sample.per_link_motion_stat[a])
            .then(a.cmp(&b))
    });
    links
}

/// Keeps the `ceil(L / 2)` most sensitive links of `a` in place and fills the
/// other link positions with the matching blocks of `b`.
pub fn augment_link_mix(a: &AcfSample, b: &AcfSample) -> Result<AcfSample> {
    if a.label != b.label {
        return Err(Error::ClassMismatch(a.label.to_string(), b.label.to_string()));
    }
    if a.matrix.dim() != b.matrix.dim() || a.num_links != b.num_links {
        return Err(Error::ShapeMismatch(format!(
            "{:?} with {} links vs {:?} with {} links",
            a.matrix.dim(),
            a.num_links,
            b.matrix.dim(),
            b.num_links
        )));
    }
    let links = a.num_links;
    let k = a.subcarriers_per_link();
    let mut from_first = vec![false; links];
    for &l in links_by_sensitivity(a).iter().take(links.div_ceil(2)) {
        from_first[l] = true;
    }
    let mut matrix = a.matrix.clone();
    let mut stats = a.per_link_motion_stat.clone();
    let mut dead: Vec<usize> = a.dead_columns.iter().copied().filter(|&c| from_first[c / k]).collect();
    for l in (0..links).filter(|&l| !from_first[l]) {
        matrix
            .slice_mut(s![.., l * k..(l + 1) * k])
            .assign(&b.matrix.slice(s![.., l * k..(l + 1) * k]));
        stats[l] = b.per_link_motion_stat[l];
    }
    dead.extend(b.dead_columns.iter().copied().filter(|&c| !from_first[c / k]));
    dead.sort_unstable();
    Ok(AcfSample {
        matrix,
        per_link_motion_stat: stats,
        dead_columns: dead,
        provenance: Provenance::Mixed {
            parents: [a.id(), b.id()],
            from_first,
        },
        ..a.clone()
    })
}
