//! Cross-validation protocols over a precomputed distance matrix.
//!
//! Samples are grouped by `group` (the source video). With windowed
//! descriptors a video contributes several samples, and every protocol splits
//! at the group level: all windows of training videos train, and each window
//! of a test video is classified on its own.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::chi2::{chi2_kernel_from_distance, Descriptor, DistanceMatrix};
use super::nn::nn_from_distances;
use super::svm::{OvoSvm, SvmParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvScheme {
    /// Fold `f` tests the `f`-th member of every instance; all instances
    /// must have exactly `folds` members.
    KFoldByInstance {
        folds: usize,
    },
    /// Per class, `floor(n_c * train_fraction)` videos train and the rest test.
    RandomSplit {
        trials: usize,
        train_fraction: f64,
    },
    LeaveOneOut,
}

impl CvScheme {
    pub fn name(&self) -> String {
        match self {
            CvScheme::KFoldByInstance { folds } => format!("{folds}-fold-instance"),
            CvScheme::RandomSplit {
                trials,
                train_fraction,
            } => format!("random-split-{trials}x{train_fraction}"),
            CvScheme::LeaveOneOut => "loo".into(),
        }
    }

    /// Parses `loo`, `kfold:<k>` or `random:<trials>:<fraction>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::BadParams(format!("unknown scheme `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["loo"] => Ok(CvScheme::LeaveOneOut),
            ["kfold", k] => Ok(CvScheme::KFoldByInstance {
                folds: k.parse().map_err(|_| bad())?,
            }),
            ["random", t, f] => Ok(CvScheme::RandomSplit {
                trials: t.parse().map_err(|_| bad())?,
                train_fraction: f.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classifier {
    Nn,
    Svm(SvmParams),
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Nn => "nn",
            Classifier::Svm(_) => "svm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleMeta {
    pub label: usize,
    /// Source video; samples of one group are always on the same side.
    pub group: usize,
    pub instance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CvDataset {
    pub descriptors: Vec<Descriptor>,
    pub meta: Vec<SampleMeta>,
    pub class_names: Vec<String>,
    distances: Option<DistanceMatrix>,
}

impl CvDataset {
    pub fn new(
        descriptors: Vec<Descriptor>,
        meta: Vec<SampleMeta>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if descriptors.len() != meta.len() {
            return Err(Error::dims(descriptors.len(), meta.len()));
        }
        if let Some(m) = meta.iter().find(|m| m.label >= class_names.len()) {
            return Err(Error::BadParams(format!(
                "label {} has no class name",
                m.label
            )));
        }
        Ok(CvDataset {
            descriptors,
            meta,
            class_names,
            distances: None,
        })
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn distances(&mut self) -> &DistanceMatrix {
        if self.distances.is_none() {
            self.distances = Some(DistanceMatrix::compute(&self.descriptors));
        }
        self.distances.as_ref().unwrap()
    }

    pub fn with_distances(mut self, d: DistanceMatrix) -> Result<Self> {
        if d.len() != self.len() {
            return Err(Error::dims(self.len(), d.len()));
        }
        self.distances = Some(d);
        Ok(self)
    }
}

/// Group ids in first-appearance order, each with its sample indices.
fn groups(meta: &[SampleMeta]) -> Vec<(usize, Vec<usize>)> {
    let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, m) in meta.iter().enumerate() {
        match out.iter_mut().find(|(g, _)| *g == m.group) {
            Some((_, v)) => v.push(i),
            None => out.push((m.group, vec![i])),
        }
    }
    out
}

fn expand(groups: &[(usize, Vec<usize>)], which: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = which
        .iter()
        .flat_map(|&g| groups[g].1.iter().copied())
        .collect();
    v.sort_unstable();
    v
}

/// Partitions for every trial of `scheme`; trial `t` of a random split uses
/// RNG stream `t` of a generator seeded with `seed`.
pub fn make_folds(scheme: &CvScheme, meta: &[SampleMeta], seed: u64) -> Result<Vec<Vec<Fold>>> {
    if meta.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let gs = groups(meta);
    for (_, members) in &gs {
        let first = meta[members[0]];
        if members
            .iter()
            .any(|&i| meta[i].label != first.label || meta[i].instance != first.instance)
        {
            return Err(Error::SchemeMismatch(
                "samples of one video disagree on class or instance".into(),
            ));
        }
    }
    match *scheme {
        CvScheme::LeaveOneOut => {
            if gs.len() < 2 {
                return Err(Error::SchemeMismatch(
                    "leave-one-out needs two videos".into(),
                ));
            }
            let all: Vec<usize> = (0..gs.len()).collect();
            let folds = (0..gs.len())
                .map(|g| Fold {
                    train: expand(
                        &gs,
                        &all.iter().copied().filter(|&h| h != g).collect::<Vec<_>>(),
                    ),
                    test: expand(&gs, &[g]),
                })
                .collect();
            Ok(vec![folds])
        }
        CvScheme::KFoldByInstance { folds } => {
            if folds < 2 {
                return Err(Error::SchemeMismatch("k-fold needs k >= 2".into()));
            }
            let mut instances: Vec<(usize, Vec<usize>)> = Vec::new();
            for (gi, (_, members)) in gs.iter().enumerate() {
                let inst = meta[members[0]].instance;
                match instances.iter_mut().find(|(i, _)| *i == inst) {
                    Some((_, v)) => v.push(gi),
                    None => instances.push((inst, vec![gi])),
                }
            }
            if let Some((inst, v)) = instances.iter().find(|(_, v)| v.len() != folds) {
                return Err(Error::SchemeMismatch(format!(
                    "instance {inst} has {} videos, {folds}-fold needs exactly {folds}",
                    v.len()
                )));
            }
            let out = (0..folds)
                .map(|f| {
                    let test: Vec<usize> = instances.iter().map(|(_, v)| v[f]).collect();
                    let train: Vec<usize> = instances
                        .iter()
                        .flat_map(|(_, v)| {
                            v.iter()
                                .enumerate()
                                .filter(|&(k, _)| k != f)
                                .map(|(_, &g)| g)
                        })
                        .collect();
                    Fold {
                        train: expand(&gs, &train),
                        test: expand(&gs, &test),
                    }
                })
                .collect();
            Ok(vec![out])
        }
        CvScheme::RandomSplit {
            trials,
            train_fraction,
        } => {
            if trials == 0 || !(train_fraction > 0.0 && train_fraction < 1.0) {
                return Err(Error::SchemeMismatch(
                    "random split needs trials >= 1 and 0 < fraction < 1".into(),
                ));
            }
            let mut by_class: Vec<(usize, Vec<usize>)> = Vec::new();
            for (gi, (_, members)) in gs.iter().enumerate() {
                let label = meta[members[0]].label;
                match by_class.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, v)) => v.push(gi),
                    None => by_class.push((label, vec![gi])),
                }
            }
            by_class.sort_by_key(|(l, _)| *l);
            for (l, v) in &by_class {
                let n_train = (v.len() as f64 * train_fraction).floor() as usize;
                if n_train == 0 || n_train == v.len() {
                    return Err(Error::SchemeMismatch(format!(
                        "class {l} with {} videos cannot be split at fraction {train_fraction}",
                        v.len()
                    )));
                }
            }
            let trials = (0..trials)
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(t as u64);
                    let mut train = Vec::new();
                    let mut test = Vec::new();
                    for (_, v) in &by_class {
                        let mut v = v.clone();
                        v.shuffle(&mut rng);
                        let n_train = (v.len() as f64 * train_fraction).floor() as usize;
                        train.extend_from_slice(&v[..n_train]);
                        test.extend_from_slice(&v[n_train..]);
                    }
                    vec![Fold {
                        train: expand(&gs, &train),
                        test: expand(&gs, &test),
                    }]
                })
                .collect();
            Ok(trials)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub scheme: CvScheme,
    pub classifier: &'static str,
    pub seed: u64,
    pub trial_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// `confusion[true][predicted]`, summed over trials.
    pub confusion: Vec<Vec<u64>>,
}

/// Predictions for the test samples of one fold.
pub fn classify_fold(
    fold: &Fold,
    meta: &[SampleMeta],
    dist: &DistanceMatrix,
    classifier: &Classifier,
) -> Result<Vec<usize>> {
    if fold.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    match classifier {
        Classifier::Nn => fold
            .test
            .iter()
            .map(|&q| {
                nn_from_distances(
                    &fold.train,
                    |i| dist.get(q, i),
                    |i| meta[i].label,
                    |i| meta[i].group,
                )
            })
            .collect(),
        Classifier::Svm(params) => {
            let labels: Vec<usize> = fold.train.iter().map(|&i| meta[i].label).collect();
            let tr = &fold.train;
            let gamma = params.gamma;
            let svm = OvoSvm::train(
                &labels,
                |a, b| chi2_kernel_from_distance(dist.get(tr[a], tr[b]), gamma),
                params,
            )?;
            Ok(fold
                .test
                .iter()
                .map(|&q| svm.predict(|a| chi2_kernel_from_distance(dist.get(q, tr[a]), gamma)))
                .collect())
        }
    }
}

pub fn run_cv(
    dataset: &mut CvDataset,
    scheme: &CvScheme,
    classifier: &Classifier,
    seed: u64,
) -> Result<CvResult> {
    let folds = make_folds(scheme, &dataset.meta, seed)?;
    let nc = dataset.n_classes();
    let meta = dataset.meta.clone();
    let dist = dataset.distances();
    let per_trial: Vec<(f64, Vec<Vec<u64>>)> = folds
        .par_iter()
        .map(|trial| {
            let mut confusion = vec![vec![0u64; nc]; nc];
            let mut correct = 0usize;
            let mut total = 0usize;
            for fold in trial {
                let pred = classify_fold(fold, &meta, dist, classifier)?;
                for (&q, &p) in fold.test.iter().zip(&pred) {
                    confusion[meta[q].label][p] += 1;
                    correct += usize::from(meta[q].label == p);
                    total += 1;
                }
            }
            Ok((correct as f64 / total.max(1) as f64, confusion))
        })
        .collect::<Result<_>>()?;
    let mut confusion = vec![vec![0u64; nc]; nc];
    for (_, c) in &per_trial {
        for (row, add) in confusion.iter_mut().zip(c) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    let trial_accuracies: Vec<f64> = per_trial.iter().map(|(a, _)| *a).collect();
    let mean_accuracy = trial_accuracies.iter().sum::<f64>() / trial_accuracies.len() as f64;
    Ok(CvResult {
        scheme: *scheme,
        classifier: classifier.name(),
        seed,
        trial_accuracies,
        mean_accuracy,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(labels: &[usize], instances: &[usize]) -> Vec<SampleMeta> {
        labels
            .iter()
            .zip(instances)
            .enumerate()
            .map(|(g, (&label, &instance))| SampleMeta {
                label,
                group: g,
                instance,
            })
            .collect()
    }

    #[test]
    fn kfold_tests_each_member_once() {
        let m = meta(&[0, 0, 0, 0, 1, 1, 1, 1], &[0, 0, 0, 0, 1, 1, 1, 1]);
        let folds = make_folds(&CvScheme::KFoldByInstance { folds: 4 }, &m, 0).unwrap();
        assert_eq!(folds.len(), 1);
        let mut tested: Vec<usize> = folds[0].iter().flat_map(|f| f.test.clone()).collect();
        tested.sort_unstable();
        assert_eq!(tested, (0..8).collect::<Vec<_>>());
        assert_eq!(folds[0][1].test, vec![1, 5]);
        assert_eq!(folds[0][1].train.len(), 6);
        let bad = meta(&[0, 0, 0], &[0, 0, 0]);
        assert!(matches!(
            make_folds(&CvScheme::KFoldByInstance { folds: 4 }, &bad, 0),
            Err(Error::SchemeMismatch(_))
        ));
    }

    #[test]
    fn random_split_is_stratified_and_seeded() {
        let m = meta(
            &[0, 0, 0, 0, 0, 1, 1, 1, 2, 2],
            &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        );
        let s = CvScheme::RandomSplit {
            trials: 20,
            train_fraction: 0.5,
        };
        let a = make_folds(&s, &m, 7).unwrap();
        assert_eq!(a, make_folds(&s, &m, 7).unwrap());
        assert_ne!(a, make_folds(&s, &m, 8).unwrap());
        for trial in &a {
            let f = &trial[0];
            let count = |l: usize| f.train.iter().filter(|&&i| m[i].label == l).count();
            assert_eq!((count(0), count(1), count(2)), (2, 1, 1));
            assert_eq!(f.train.len() + f.test.len(), 10);
        }
    }

    #[test]
    fn windows_stay_with_their_video() {
        let m: Vec<SampleMeta> = (0..12)
            .map(|i| SampleMeta {
                label: i / 6,
                group: i / 3,
                instance: i / 3,
            })
            .collect();
        let folds = make_folds(&CvScheme::LeaveOneOut, &m, 0).unwrap();
        assert_eq!(folds[0].len(), 4);
        assert_eq!(folds[0][2].test, vec![6, 7, 8]);
    }

    #[test]
    fn loo_on_identical_pairs() {
        let d = vec![
            Descriptor::from_dense(&[1.0, 0.0]),
            Descriptor::from_dense(&[1.0, 0.0]),
            Descriptor::from_dense(&[0.0, 1.0]),
            Descriptor::from_dense(&[0.0, 1.0]),
        ];
        let m = meta(&[0, 0, 1, 1], &[0, 1, 2, 3]);
        let mut ds = CvDataset::new(d, m, vec!["a".into(), "b".into()]).unwrap();
        for c in [Classifier::Nn, Classifier::Svm(SvmParams::default())] {
            let r = run_cv(&mut ds, &CvScheme::LeaveOneOut, &c, 0).unwrap();
            assert_eq!(r.mean_accuracy, 1.0);
            assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);
        }
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in ["loo", "kfold:4", "random:1000:0.5"] {
            let parsed = CvScheme::parse(s).unwrap();
            assert_eq!(CvScheme::parse(s).unwrap(), parsed);
        }
        assert!(CvScheme::parse("bootstrap").is_err());
    }
}
