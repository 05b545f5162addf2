//! Class-balanced batch sampling.

use rand::seq::index;
use rand::Rng;

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};

/// Draws `classes_per_batch` classes uniformly without replacement, then
/// `samples_per_class` samples from each: without replacement when the
/// class is large enough, with replacement otherwise. Returns dataset
/// indices, class-major.
pub fn sample_batch(
    dataset: &FeatureDataset,
    classes_per_batch: usize,
    samples_per_class: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if classes_per_batch == 0 || samples_per_class == 0 {
        return Err(Error::domain("batch composition must be positive"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
    for (i, s) in dataset.samples().iter().enumerate() {
        by_class[s.observed_label].push(i);
    }
    let present: Vec<usize> = (0..dataset.class_count())
        .filter(|&c| !by_class[c].is_empty())
        .collect();
    if present.len() < classes_per_batch {
        return Err(Error::Domain(format!(
            "batch needs {classes_per_batch} classes but only {} are present",
            present.len()
        )));
    }
    let chosen = index::sample(rng, present.len(), classes_per_batch);
    let mut batch = Vec::with_capacity(classes_per_batch * samples_per_class);
    for class_pos in chosen.iter() {
        let members = &by_class[present[class_pos]];
        if members.len() >= samples_per_class {
            for member_pos in index::sample(rng, members.len(), samples_per_class).iter() {
                batch.push(members[member_pos]);
            }
        } else {
            for _ in 0..samples_per_class {
                batch.push(members[rng.random_range(0..members.len())]);
            }
        }
    }
    Ok(batch)
}
