use super::chi2::{chi2_distance, Descriptor};
use crate::error::{Error, Result};

/// A histogram descriptor with its class and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDescriptor {
    pub descriptor: Descriptor,
    pub label: usize,
    pub video_id: usize,
    pub instance_id: usize,
}

/// Label of the nearest training descriptor; ties go to the lowest `video_id`.
pub fn nn_classify(train: &[LabeledDescriptor], query: &Descriptor) -> Result<usize> {
    let best = train
        .iter()
        .map(|t| (chi2_distance(&t.descriptor, query), t.video_id, t.label))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(Error::EmptyTrainingSet)?;
    Ok(best.2)
}

/// Nearest-neighbour decision from precomputed distances `dist(train_i)`.
pub fn nn_from_distances(
    train: &[usize],
    dist: impl Fn(usize) -> f64,
    label: impl Fn(usize) -> usize,
    video_id: impl Fn(usize) -> usize,
) -> Result<usize> {
    let best = train
        .iter()
        .map(|&i| (dist(i), video_id(i), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(Error::EmptyTrainingSet)?;
    Ok(label(best.2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(v: &[f64], label: usize, video_id: usize) -> LabeledDescriptor {
        LabeledDescriptor {
            descriptor: Descriptor::from_dense(v),
            label,
            video_id,
            instance_id: video_id,
        }
    }

    #[test]
    fn nearest_label_and_ties() {
        let train = vec![
            item(&[1.0, 0.0, 0.0], 0, 5),
            item(&[0.0, 1.0, 0.0], 1, 3),
            item(&[0.0, 0.0, 1.0], 2, 9),
        ];
        let q = Descriptor::from_dense(&[0.0, 1.0, 0.0]);
        assert_eq!(nn_classify(&train, &q).unwrap(), 1);
        let q = Descriptor::from_dense(&[0.9, 0.1, 0.0]);
        assert_eq!(nn_classify(&train, &q).unwrap(), 0);
        // equidistant from classes 0 (video 5) and 2 (video 9)
        let q = Descriptor::from_dense(&[0.5, 0.0, 0.5]);
        let tie = vec![train[2].clone(), train[0].clone()];
        assert_eq!(nn_classify(&tie, &q).unwrap(), 0);
        assert!(matches!(nn_classify(&[], &q), Err(Error::EmptyTrainingSet)));
    }
}
