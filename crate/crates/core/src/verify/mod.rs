//! Statistical verification of closed-loop safety: labeled initial sets,
//! ellipsoidal and SVM safe-set estimates, and their quality metrics.

mod ellipsoid;
mod labels;
mod metrics;
mod svm;

pub use ellipsoid::{ellipsoid_contains, fit_ellipsoid, EllipsoidSafeSet};
pub use labels::{generate_labeled_sets, initial_states, label_initial_states, mtl_label, LabeledInitialSet, LabeledSets, SetKind, SetSizes, LABEL_SLACK};
pub use metrics::{empirical_risk, hoeffding, m_dir, m_fp, m_vol, safe_counts};
pub use svm::{fit_svm, rbf, svm_classify, SvmSafeSet, KKT_TOL};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub epsilon: f64,
    pub floor: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub nu: f64,
    pub delta: f64,
}

impl VerifyParams {
    pub fn defaults(n_x: usize) -> Self {
        Self { epsilon: 0.05, floor: 1e-6, c: 10.0, nu: 1.0 / n_x.max(1) as f64, delta: 0.02 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub m_dir: f64,
    pub m_vol_ell: f64,
    pub m_vol_svm: f64,
    pub m_fp_ell: f64,
    pub m_fp_svm: f64,
    pub r_emp_ell: f64,
    pub r_emp_svm: f64,
    pub delta: f64,
    pub confidence: f64,
}

#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub ellipsoid: EllipsoidSafeSet,
    pub svm: SvmSafeSet,
    pub report: VerifyReport,
}

/// Fits both safe sets on `sets.g` and scores them against the reference
/// controller's test set `t_ref` and the validation set `sets.v`.
pub fn verify(sets: &LabeledSets, t_ref: &LabeledInitialSet, params: &VerifyParams) -> Result<VerifyOutcome> {
    let n_x = sets.g.points.first().map_or(0, |(x, _)| x.len());
    let invalid: Vec<_> = sets.g.negatives().cloned().collect();
    let ellipsoid = fit_ellipsoid(&invalid, params.epsilon, params.floor, n_x)?;
    let svm = fit_svm(&sets.g.points, params.c, params.nu)?;
    let in_ell = |x: &[f64]| ellipsoid.contains(x);
    let in_svm = |x: &[f64]| svm.classify(x) == 1;
    let (plus_ell, n_ell) = safe_counts(in_ell, &sets.v);
    let (plus_svm, n_svm) = safe_counts(in_svm, &sets.v);
    let report = VerifyReport {
        m_dir: m_dir(&sets.t, t_ref)?,
        m_vol_ell: m_vol(in_ell, t_ref)?,
        m_vol_svm: m_vol(in_svm, t_ref)?,
        m_fp_ell: m_fp(in_ell, &sets.v)?,
        m_fp_svm: m_fp(in_svm, &sets.v)?,
        r_emp_ell: empirical_risk(plus_ell, n_ell)?,
        r_emp_svm: empirical_risk(plus_svm, n_svm)?,
        delta: params.delta,
        // the smaller sample of the two sets gives the weaker guarantee
        confidence: hoeffding(n_ell.min(n_svm), params.delta),
    };
    Ok(VerifyOutcome { ellipsoid, svm, report })
}
