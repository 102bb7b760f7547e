//! Soft-margin kernel SVM: SMO dual solver with second-order working-set
//! selection, combined one-vs-one for multi-class problems.

use rayon::prelude::*;

use super::chi2::{chi2_distance, chi2_kernel_from_distance, Descriptor};
use super::nn::LabeledDescriptor;
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub gamma: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            gamma: 0.1,
            c: 10_000.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.c > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::BadParams(format!("invalid SVM parameters {self:?}")));
        }
        Ok(())
    }
}

/// Two-class solution: decision `sum_k coef_k K(sv_k, x) - rho`, positive for `pos`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub pos: usize,
    pub neg: usize,
    /// Indices into the training set.
    pub support: Vec<usize>,
    /// `alpha_k y_k` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision(&self, kernel_to: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for (&i, &c) in self.support.iter().zip(&self.coef) {
            s += c * kernel_to(i);
        }
        s - self.rho
    }
}

/// Solves the two-class dual over `n` points with labels `y` (+1/-1) and
/// dense kernel `k` (row-major `n x n`). Returns `(alpha, rho, iterations)`.
pub fn smo_solve(k: &[f64], y: &[f64], params: &SvmParams) -> Result<(Vec<f64>, f64, usize)> {
    let n = y.len();
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let kd: Vec<f64> = (0..n).map(|i| k[i * n + i]).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iter = 0;
    loop {
        // working set selection
        let mut gmax = f64::NEG_INFINITY;
        let mut imax = usize::MAX;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -g[t] >= gmax {
                    gmax = -g[t];
                    imax = t;
                }
            } else if !lower(alpha[t]) && g[t] >= gmax {
                gmax = g[t];
                imax = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut jmin = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if imax != usize::MAX {
            let i = imax;
            let ki = &k[i * n..(i + 1) * n];
            for j in 0..n {
                let (grad_diff, eligible) = if y[j] > 0.0 {
                    if lower(alpha[j]) {
                        (0.0, false)
                    } else {
                        gmax2 = gmax2.max(g[j]);
                        (gmax + g[j], true)
                    }
                } else if upper(alpha[j]) {
                    (0.0, false)
                } else {
                    gmax2 = gmax2.max(-g[j]);
                    (gmax - g[j], true)
                };
                if eligible && grad_diff > 0.0 {
                    let quad = kd[i] + kd[j] - 2.0 * ki[j];
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        jmin = j;
                    }
                }
            }
        }
        if imax == usize::MAX || jmin == usize::MAX || gmax + gmax2 < params.tol {
            break;
        }
        if iter >= params.max_iter {
            return Err(Error::NonConvergence(params.max_iter));
        }
        iter += 1;

        let (i, j) = (imax, jmin);
        let kij = k[i * n + j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = {
                let q = kd[i] + kd[j] - 2.0 * kij;
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (-g[i] - g[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = {
                let q = kd[i] + kd[j] - 2.0 * kij;
                if q > 0.0 {
                    q
                } else {
                    TAU
                }
            };
            let delta = (g[i] - g[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let ki = &k[i * n..(i + 1) * n];
        let kj = &k[j * n..(j + 1) * n];
        for t in 0..n {
            g[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok((alpha, rho, iter))
}

/// One-vs-one ensemble over a training set addressed by index.
#[derive(Debug, Clone, PartialEq)]
pub struct OvoSvm {
    pub classes: Vec<usize>,
    pub machines: Vec<BinarySvm>,
}

impl OvoSvm {
    /// Trains on points `0..labels.len()` with kernel `k(i, j)`.
    pub fn train(
        labels: &[usize],
        k: impl Fn(usize, usize) -> f64 + Sync,
        params: &SvmParams,
    ) -> Result<Self> {
        params.validate()?;
        if labels.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::SingleClassTraining);
        }
        let mut pairs = Vec::new();
        for (a, &ca) in classes.iter().enumerate() {
            for &cb in &classes[a + 1..] {
                pairs.push((ca, cb));
            }
        }
        let machines = pairs
            .par_iter()
            .map(|&(pos, neg)| {
                let idx: Vec<usize> = (0..labels.len())
                    .filter(|&i| labels[i] == pos || labels[i] == neg)
                    .collect();
                let m = idx.len();
                let y: Vec<f64> = idx
                    .iter()
                    .map(|&i| if labels[i] == pos { 1.0 } else { -1.0 })
                    .collect();
                let mut km = vec![0.0; m * m];
                for a in 0..m {
                    for b in a..m {
                        let v = k(idx[a], idx[b]);
                        km[a * m + b] = v;
                        km[b * m + a] = v;
                    }
                }
                let (alpha, rho, iterations) = smo_solve(&km, &y, params)?;
                let mut support = Vec::new();
                let mut coef = Vec::new();
                for (t, &a) in alpha.iter().enumerate() {
                    if a > 0.0 {
                        support.push(idx[t]);
                        coef.push(a * y[t]);
                    }
                }
                Ok(BinarySvm {
                    pos,
                    neg,
                    support,
                    coef,
                    rho,
                    iterations,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OvoSvm { classes, machines })
    }

    /// Majority vote; ties go to the larger summed decision margin, then to
    /// the smaller class id.
    pub fn predict(&self, kernel_to: impl Fn(usize) -> f64) -> usize {
        let nc = self.classes.len();
        let pos_of = |c: usize| self.classes.binary_search(&c).unwrap();
        let mut votes = vec![0usize; nc];
        let mut margin = vec![0.0f64; nc];
        for m in &self.machines {
            let d = m.decision(&kernel_to);
            let (p, q) = (pos_of(m.pos), pos_of(m.neg));
            if d > 0.0 {
                votes[p] += 1;
            } else {
                votes[q] += 1;
            }
            margin[p] += d;
            margin[q] -= d;
        }
        let mut best = 0;
        for c in 1..nc {
            if votes[c] > votes[best] || (votes[c] == votes[best] && margin[c] > margin[best]) {
                best = c;
            }
        }
        self.classes[best]
    }
}

/// SVM trained on descriptors; keeps its training set for prediction.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub params: SvmParams,
    pub train: Vec<Descriptor>,
    pub ovo: OvoSvm,
}

pub fn svm_train(train: &[LabeledDescriptor], gamma: f64, c: f64) -> Result<SvmModel> {
    svm_train_with(
        train,
        &SvmParams {
            gamma,
            c,
            ..SvmParams::default()
        },
    )
}

pub fn svm_train_with(train: &[LabeledDescriptor], params: &SvmParams) -> Result<SvmModel> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let descriptors: Vec<Descriptor> = train.iter().map(|t| t.descriptor.clone()).collect();
    let labels: Vec<usize> = train.iter().map(|t| t.label).collect();
    let dist = super::chi2::DistanceMatrix::compute(&descriptors);
    let gamma = params.gamma;
    let ovo = OvoSvm::train(
        &labels,
        |i, j| chi2_kernel_from_distance(dist.get(i, j), gamma),
        params,
    )?;
    Ok(SvmModel {
        params: *params,
        train: descriptors,
        ovo,
    })
}

pub fn svm_predict(model: &SvmModel, query: &Descriptor) -> usize {
    let gamma = model.params.gamma;
    model
        .ovo
        .predict(|i| chi2_kernel_from_distance(chi2_distance(&model.train[i], query), gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::nn::nn_classify;

    fn item(v: &[f64], label: usize, id: usize) -> LabeledDescriptor {
        let s: f64 = v.iter().sum();
        let v: Vec<f64> = v.iter().map(|x| x / s).collect();
        LabeledDescriptor {
            descriptor: Descriptor::from_dense(&v),
            label,
            video_id: id,
            instance_id: id,
        }
    }

    fn clusters() -> Vec<LabeledDescriptor> {
        let mut out = Vec::new();
        for k in 0..6 {
            let e = k as f64 * 0.05;
            out.push(item(&[1.0 + e, 0.1, 0.1, 0.05], 0, out.len()));
            out.push(item(&[0.1, 1.0 - e, 0.1, 0.05 + e], 1, out.len()));
            out.push(item(&[0.1, 0.05, 1.0 + e, 0.2], 2, out.len()));
        }
        out
    }

    #[test]
    fn separable_clusters_are_fit_exactly() {
        let train = clusters();
        let model = svm_train(&train, 0.1, 10_000.0).unwrap();
        for t in &train {
            assert_eq!(svm_predict(&model, &t.descriptor), t.label);
            assert_eq!(
                svm_predict(&model, &t.descriptor),
                nn_classify(&train, &t.descriptor).unwrap()
            );
        }
        assert_eq!(model.ovo.machines.len(), 3);
    }

    #[test]
    fn single_class_is_rejected() {
        let train = vec![item(&[1.0, 0.0], 0, 0), item(&[0.5, 0.5], 0, 1)];
        assert!(matches!(
            svm_train(&train, 0.1, 1.0),
            Err(Error::SingleClassTraining)
        ));
    }

    #[test]
    fn tiny_c_predicts_majority() {
        let mut train = Vec::new();
        for k in 0..9 {
            train.push(item(&[1.0, 0.2 + 0.05 * k as f64], 0, k));
        }
        train.push(item(&[0.2, 1.0], 1, 9));
        train.push(item(&[0.3, 1.0], 1, 10));
        let model = svm_train(&train, 0.1, 1e-6).unwrap();
        for q in [[0.2, 1.0], [1.0, 0.3], [0.5, 0.5]] {
            assert_eq!(svm_predict(&model, &Descriptor::from_dense(&q)), 0);
        }
    }

    #[test]
    fn iteration_cap_is_reported() {
        let train = clusters();
        let params = SvmParams {
            max_iter: 1,
            ..SvmParams::default()
        };
        assert!(matches!(
            svm_train_with(&train, &params),
            Err(Error::NonConvergence(1))
        ));
    }
}
