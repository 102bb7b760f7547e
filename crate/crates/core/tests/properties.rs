use nalgebra::DMatrix;
use proptest::prelude::*;

use strf_core::classify::{
    chi2_distance, chi2_kernel_from_distance, make_folds, nn_classify, nn_from_distances,
    svm_predict, svm_train, CvScheme, Descriptor, LabeledDescriptor, SampleMeta,
};
use strf_core::descriptor::{make_binning, JointHistogram, PcaModel, Quantizer};
use strf_core::rfields::signed_sqrt;

fn sparse_counts() -> impl Strategy<Value = Vec<(u64, f64)>> {
    proptest::collection::btree_map(0u64..48, 1u32..20, 1..16)
        .prop_map(|m| m.into_iter().map(|(k, v)| (k, v as f64)).collect())
}

fn probability(pairs: Vec<(u64, f64)>) -> Descriptor {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    Descriptor::from_pairs(pairs.into_iter().map(|(k, v)| (k, v / total)).collect())
}

fn cells(dims: usize, n_bins: usize) -> impl Strategy<Value = Vec<u64>> {
    let n = (n_bins as u64).pow(dims as u32);
    proptest::collection::vec(0..n, 0..200)
}

fn hist_from(cells: &[u64], dims: usize, n_bins: usize, dense: bool) -> JointHistogram {
    let mut h = if dense {
        JointHistogram::new_dense(dims, n_bins).unwrap()
    } else {
        JointHistogram::new_sparse(dims, n_bins).unwrap()
    };
    for &c in cells {
        h.add_cell(c).unwrap();
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn chi2_metric_axioms(a in sparse_counts(), b in sparse_counts()) {
        let (a, b) = (probability(a), probability(b));
        let ab = chi2_distance(&a, &b);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, chi2_distance(&b, &a));
        prop_assert_eq!(chi2_distance(&a, &a), 0.0);
        if a != b {
            prop_assert!(ab > 0.0);
        }
        // probability vectors are at most 2 apart
        prop_assert!(ab <= 2.0 + 1e-12);
    }

    #[test]
    fn chi2_kernel_matrix_is_psd(hs in proptest::collection::vec(sparse_counts(), 2..12)) {
        let ds: Vec<Descriptor> = hs.into_iter().map(probability).collect();
        let n = ds.len();
        let k = DMatrix::from_fn(n, n, |i, j| chi2_kernel_from_distance(chi2_distance(&ds[i], &ds[j]), 0.1));
        let eig = k.symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-8), "{:?}", eig.eigenvalues);
    }

    #[test]
    fn nn_is_invariant_to_distance_scaling(
        n in 2usize..20,
        seed in any::<u64>(),
        factor in 1e-3f64..1e3,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dist: Vec<f64> = (0..n).map(|_| (rng.random_range(0..5) as f64) * 0.25).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let train: Vec<usize> = (0..n).collect();
        let a = nn_from_distances(&train, |i| dist[i], |i| labels[i], |i| i).unwrap();
        let b = nn_from_distances(&train, |i| dist[i] * factor, |i| labels[i], |i| i).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn duplicate_query_gets_its_own_label_from_svm_and_nn(
        hs in proptest::collection::vec(sparse_counts(), 2..10),
        labels in proptest::collection::vec(0usize..3, 10),
        pick in any::<prop::sample::Index>(),
    ) {
        let ds: Vec<Descriptor> = hs.into_iter().map(probability).collect();
        // distinct descriptors and at least two classes
        for i in 0..ds.len() {
            for j in 0..i {
                prop_assume!(ds[i] != ds[j]);
            }
        }
        let train: Vec<LabeledDescriptor> = ds
            .iter()
            .zip(&labels)
            .enumerate()
            .map(|(i, (d, &label))| LabeledDescriptor {
                descriptor: d.clone(),
                label,
                video_id: i,
                instance_id: i,
            })
            .collect();
        prop_assume!(train.iter().any(|t| t.label != train[0].label));
        let q = pick.index(train.len());
        let nn = nn_classify(&train, &train[q].descriptor).unwrap();
        prop_assert_eq!(nn, train[q].label);
        let model = svm_train(&train, 0.1, 1e4).unwrap();
        prop_assert_eq!(svm_predict(&model, &train[q].descriptor), nn);
    }

    #[test]
    fn cv_partitions_are_sound(
        items in proptest::collection::vec((0usize..3, 0usize..5), 4..40),
        seed in any::<u64>(),
        fraction in 0.2f64..0.8,
    ) {
        let meta: Vec<SampleMeta> = items
            .iter()
            .enumerate()
            .map(|(i, &(label, _))| SampleMeta { label, group: i, instance: i })
            .collect();
        let n = meta.len();
        // leave-one-out: every sample tested exactly once, train/test disjoint
        let loo = make_folds(&CvScheme::LeaveOneOut, &meta, seed).unwrap();
        let mut tested = vec![0usize; n];
        for f in &loo[0] {
            for &i in &f.test {
                tested[i] += 1;
                prop_assert!(!f.train.contains(&i));
            }
            prop_assert_eq!(f.train.len() + f.test.len(), n);
        }
        prop_assert!(tested.iter().all(|&c| c == 1));

        // random split: stratified, disjoint, covering
        let scheme = CvScheme::RandomSplit { trials: 5, train_fraction: fraction };
        if let Ok(trials) = make_folds(&scheme, &meta, seed) {
            for t in &trials {
                let f = &t[0];
                let mut all: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                for class in 0..3 {
                    let n_c = meta.iter().filter(|m| m.label == class).count();
                    let tr = f.train.iter().filter(|&&i| meta[i].label == class).count();
                    prop_assert!((tr as f64 - n_c as f64 * fraction).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn kfold_by_instance_tests_each_sample_once(
        n_instances in 1usize..6,
        folds in 2usize..5,
        labels in proptest::collection::vec(0usize..3, 6),
    ) {
        let mut meta = Vec::new();
        for (inst, &label) in labels.iter().enumerate().take(n_instances) {
            for _ in 0..folds {
                let g = meta.len();
                meta.push(SampleMeta { label, group: g, instance: inst });
            }
        }
        let trials = make_folds(&CvScheme::KFoldByInstance { folds }, &meta, 0).unwrap();
        let mut tested = vec![0usize; meta.len()];
        for f in &trials[0] {
            for &i in &f.test {
                tested[i] += 1;
                prop_assert!(!f.train.contains(&i));
            }
            // one member of every instance per fold
            prop_assert_eq!(f.test.len(), n_instances);
        }
        prop_assert!(tested.iter().all(|&c| c == 1));
    }

    #[test]
    fn sparse_and_dense_histograms_agree((dims, n_bins, cs) in (1usize..5, 2usize..4)
        .prop_flat_map(|(d, b)| (Just(d), Just(b), cells(d, b))))
    {
        let s = hist_from(&cs, dims, n_bins, false);
        let d = hist_from(&cs, dims, n_bins, true);
        prop_assert_eq!(s.entries(), d.entries());
        prop_assert_eq!(s.total(), d.total());
        prop_assert_eq!(s.nonzero_count(), d.nonzero_count());
    }

    #[test]
    fn histogram_is_order_independent((dims, n_bins, cs) in (1usize..5, 2usize..4)
        .prop_flat_map(|(d, b)| (Just(d), Just(b), cells(d, b))), seed in any::<u64>())
    {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = cs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(hist_from(&cs, dims, n_bins, false), hist_from(&shuffled, dims, n_bins, false));
    }

    #[test]
    fn merge_equals_single_pass((dims, n_bins, cs) in (1usize..5, 2usize..4)
        .prop_flat_map(|(d, b)| (Just(d), Just(b), cells(d, b))), cut in any::<prop::sample::Index>())
    {
        let k = if cs.is_empty() { 0 } else { cut.index(cs.len() + 1) };
        let a = hist_from(&cs[..k], dims, n_bins, false);
        let b = hist_from(&cs[k..], dims, n_bins, true);
        let merged = a.merge(&b).unwrap();
        let single = hist_from(&cs, dims, n_bins, false);
        prop_assert_eq!(merged.entries(), single.entries());
        prop_assert_eq!(merged.total(), single.total());
    }

    #[test]
    fn normalized_histogram_sums_to_one((dims, n_bins, cs) in (1usize..5, 2usize..4)
        .prop_flat_map(|(d, b)| (Just(d), Just(b), cells(d, b))))
    {
        prop_assume!(!cs.is_empty());
        let h = hist_from(&cs, dims, n_bins, false).normalize().unwrap();
        prop_assert!((h.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(h.is_normalized());
    }

    #[test]
    fn binary_cells_ignore_positive_scaling(
        x in proptest::collection::vec(-10.0f64..10.0, 4),
        comps in proptest::collection::vec(-1.0f64..1.0, 12),
        mean in proptest::collection::vec(-1.0f64..1.0, 4),
        lambda in 1e-3f64..1e3,
    ) {
        let model = PcaModel {
            field_set: String::new(),
            channel_hash: 0,
            seed: 0,
            input_dim: 4,
            mean,
            components: comps.chunks(4).map(|c| c.to_vec()).collect(),
            proj_mean: vec![0.1, -0.2, 0.3],
            proj_std: vec![1.0, 2.0, 0.5],
        };
        let binning = make_binning(&model, 3, 2, 5.0, true).unwrap();
        let q = Quantizer::new(model, binning).unwrap();
        let mut scratch = vec![0.0; 3];
        let a = q.cell(&x, &mut scratch);
        let scaled: Vec<f64> = x.iter().map(|v| v * lambda).collect();
        // exact only where rounding cannot flip a sign
        let mut proj = vec![0.0; 3];
        q.project_into(&x, &mut proj);
        prop_assume!(proj.iter().all(|p| p.abs() > 1e-9));
        prop_assert_eq!(q.cell(&scaled, &mut scratch), a);
    }

    #[test]
    fn signed_sqrt_is_odd_and_monotone(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        prop_assert_eq!(signed_sqrt(-a), -signed_sqrt(a));
        if a < b {
            prop_assert!(signed_sqrt(a) <= signed_sqrt(b));
        }
        prop_assert!((signed_sqrt(a).abs() - a.abs().sqrt()).abs() <= 1e-12 * (1.0 + a.abs().sqrt()));
    }
}
