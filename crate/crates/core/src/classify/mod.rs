//! Chi-squared nearest-neighbour and SVM classification, cross-validation
//! protocols and parameter search.

mod chi2;
mod cv;
mod grid;
mod nn;
mod svm;

pub use chi2::{
    chi2_distance, chi2_distance_dense, chi2_kernel, chi2_kernel_from_distance, Descriptor,
    DistanceMatrix,
};
pub use cv::{
    classify_fold, make_folds, run_cv, Classifier, CvDataset, CvResult, CvScheme, Fold, SampleMeta,
};
pub use grid::{
    grid_search, nested_grid_search, nested_search_points, rank_results, standard_scales,
    GridPoint, GridResult, NestedResult, ParamGrid, SPATIAL_SCALES, TEMPORAL_SCALES_MS,
};
pub use nn::{nn_classify, nn_from_distances, LabeledDescriptor};
pub use svm::{
    smo_solve, svm_predict, svm_train, svm_train_with, BinarySvm, OvoSvm, SvmModel, SvmParams,
};
