//! Descriptor-parameter grid search.

use std::cmp::Ordering;

use super::cv::classify_fold;
use super::cv::{make_folds, run_cv, Classifier, CvDataset, CvScheme, Fold, SampleMeta};
use crate::error::{Error, Result};
use crate::rfields::FieldSet;

pub const SPATIAL_SCALES: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];
pub const TEMPORAL_SCALES_MS: [f64; 4] = [50.0, 100.0, 200.0, 400.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub field_set: FieldSet,
    pub sigma_s: Vec<f64>,
    /// Empty for purely spatial sets.
    pub sigma_tau_ms: Vec<f64>,
    pub n_comp: usize,
    pub n_bins: usize,
}

impl GridPoint {
    pub fn label(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("+")
        };
        format!(
            "{} s=({}) t=({}) ncomp={} nbins={}",
            self.field_set,
            list(&self.sigma_s),
            list(&self.sigma_tau_ms),
            self.n_comp,
            self.n_bins
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub field_sets: Vec<FieldSet>,
    pub n_comps: Vec<usize>,
    /// `(sigma_s list, sigma_tau list)` combinations.
    pub scales: Vec<(Vec<f64>, Vec<f64>)>,
    pub n_bins: Vec<usize>,
}

/// Single scales (every spatial x temporal value) followed by pairs of
/// adjacent spatial and adjacent temporal scales.
pub fn standard_scales(singles: bool, adjacent_pairs: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    if singles {
        for &s in &SPATIAL_SCALES {
            for &t in &TEMPORAL_SCALES_MS {
                out.push((vec![s], vec![t]));
            }
        }
    }
    if adjacent_pairs {
        for s in SPATIAL_SCALES.windows(2) {
            for t in TEMPORAL_SCALES_MS.windows(2) {
                out.push((s.to_vec(), t.to_vec()));
            }
        }
    }
    out
}

impl ParamGrid {
    /// Grid points in enumeration order; temporal scales are dropped (and
    /// duplicates merged) for purely spatial sets.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out: Vec<GridPoint> = Vec::new();
        for &fs in &self.field_sets {
            for (s, t) in &self.scales {
                for &nb in &self.n_bins {
                    for &nc in &self.n_comps {
                        let p = GridPoint {
                            field_set: fs,
                            sigma_s: s.clone(),
                            sigma_tau_ms: if fs.is_temporal() {
                                t.clone()
                            } else {
                                Vec::new()
                            },
                            n_comp: nc,
                            n_bins: nb,
                        };
                        if !out.contains(&p) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub point: GridPoint,
    pub accuracy: f64,
    pub trial_accuracies: Vec<f64>,
    pub rank: usize,
}

/// Higher accuracy first; ties toward smaller `n_comp`, then smaller scales.
fn compare(a: &GridResult, b: &GridResult) -> Ordering {
    let lex = |x: &[f64], y: &[f64]| {
        x.len().cmp(&y.len()).then_with(|| {
            x.iter()
                .zip(y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    };
    b.accuracy
        .total_cmp(&a.accuracy)
        .then(a.point.n_comp.cmp(&b.point.n_comp))
        .then_with(|| lex(&a.point.sigma_s, &b.point.sigma_s))
        .then_with(|| lex(&a.point.sigma_tau_ms, &b.point.sigma_tau_ms))
        .then(a.point.n_bins.cmp(&b.point.n_bins))
}

/// Sorts best first and assigns 1-based ranks.
pub fn rank_results(mut results: Vec<GridResult>) -> Vec<GridResult> {
    results.sort_by(compare);
    for (i, r) in results.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    results
}

/// Evaluates every grid point with `provider` supplying its dataset; returns
/// results ranked best first.
pub fn grid_search(
    grid: &ParamGrid,
    mut provider: impl FnMut(&GridPoint) -> Result<CvDataset>,
    scheme: &CvScheme,
    classifier: &Classifier,
    seed: u64,
) -> Result<Vec<GridResult>> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::BadParams("parameter grid is empty".into()));
    }
    let mut results = Vec::with_capacity(points.len());
    for p in points {
        let mut ds = provider(&p)?;
        let r = run_cv(&mut ds, scheme, classifier, seed)?;
        results.push(GridResult {
            point: p,
            accuracy: r.mean_accuracy,
            trial_accuracies: r.trial_accuracies,
            rank: 0,
        });
    }
    Ok(rank_results(results))
}

/// Scheme applied inside an outer training set for nested selection.
fn inner_scheme(outer: &CvScheme) -> CvScheme {
    match *outer {
        CvScheme::LeaveOneOut => CvScheme::LeaveOneOut,
        CvScheme::KFoldByInstance { folds } => CvScheme::KFoldByInstance { folds: folds - 1 },
        CvScheme::RandomSplit {
            trials,
            train_fraction,
        } => CvScheme::RandomSplit {
            trials: trials.min(10),
            train_fraction,
        },
    }
}

fn sub_meta(meta: &[SampleMeta], idx: &[usize]) -> Vec<SampleMeta> {
    idx.iter().map(|&i| meta[i]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NestedResult {
    /// Outer-test accuracy per trial, parameters chosen on the training part only.
    pub trial_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Parameters selected in each outer fold, in fold order.
    pub selections: Vec<GridPoint>,
}

/// Nested cross-validation: for every outer fold the grid is ranked by an
/// inner protocol on that fold's training samples only.
pub fn nested_grid_search(
    grid: &ParamGrid,
    provider: impl FnMut(&GridPoint) -> Result<CvDataset>,
    scheme: &CvScheme,
    classifier: &Classifier,
    seed: u64,
) -> Result<NestedResult> {
    nested_search_points(&grid.points(), provider, scheme, classifier, seed)
}

/// [`nested_grid_search`] over an explicit list of points.
pub fn nested_search_points(
    points: &[GridPoint],
    mut provider: impl FnMut(&GridPoint) -> Result<CvDataset>,
    scheme: &CvScheme,
    classifier: &Classifier,
    seed: u64,
) -> Result<NestedResult> {
    if points.is_empty() {
        return Err(Error::BadParams("parameter grid is empty".into()));
    }
    let mut datasets = Vec::with_capacity(points.len());
    for p in points {
        let mut ds = provider(p)?;
        ds.distances();
        datasets.push(ds);
    }
    let meta = datasets[0].meta.clone();
    if datasets.iter().any(|d| d.meta != meta) {
        return Err(Error::SchemeMismatch(
            "grid points produced different sample sets".into(),
        ));
    }
    let outer = make_folds(scheme, &meta, seed)?;
    let inner = inner_scheme(scheme);
    let mut trial_accuracies = Vec::new();
    let mut selections = Vec::new();
    for trial in &outer {
        let (mut correct, mut total) = (0usize, 0usize);
        for fold in trial {
            let train_meta = sub_meta(&meta, &fold.train);
            let inner_folds = make_folds(&inner, &train_meta, seed)?;
            let mut scored = Vec::with_capacity(points.len());
            for (p, ds) in points.iter().zip(datasets.iter_mut()) {
                let dist = ds.distances();
                let mut acc_sum = 0.0;
                for inner_trial in &inner_folds {
                    let (mut c, mut t) = (0usize, 0usize);
                    for f in inner_trial {
                        let mapped = Fold {
                            train: f.train.iter().map(|&i| fold.train[i]).collect(),
                            test: f.test.iter().map(|&i| fold.train[i]).collect(),
                        };
                        let pred = classify_fold(&mapped, &meta, dist, classifier)?;
                        for (&q, &y) in mapped.test.iter().zip(&pred) {
                            c += usize::from(meta[q].label == y);
                            t += 1;
                        }
                    }
                    acc_sum += c as f64 / t.max(1) as f64;
                }
                scored.push(GridResult {
                    point: p.clone(),
                    accuracy: acc_sum / inner_folds.len() as f64,
                    trial_accuracies: Vec::new(),
                    rank: 0,
                });
            }
            let best = rank_results(scored).remove(0).point;
            let k = points.iter().position(|p| *p == best).unwrap();
            let dist = datasets[k].distances();
            let pred = classify_fold(fold, &meta, dist, classifier)?;
            for (&q, &y) in fold.test.iter().zip(&pred) {
                correct += usize::from(meta[q].label == y);
                total += 1;
            }
            selections.push(best);
        }
        trial_accuracies.push(correct as f64 / total.max(1) as f64);
    }
    let mean_accuracy = trial_accuracies.iter().sum::<f64>() / trial_accuracies.len() as f64;
    Ok(NestedResult {
        trial_accuracies,
        mean_accuracy,
        selections,
    })
}
