use crate::error::{Error, Result};

use super::labels::LabeledInitialSet;

/// Fraction of the reference's safe initial states that `controller` also
/// keeps safe. Both sets must share their initial states.
pub fn m_dir(controller: &LabeledInitialSet, reference: &LabeledInitialSet) -> Result<f64> {
    shared_check(controller, reference)?;
    let pos = reference.n_positive();
    if pos == 0 {
        return Err(Error::EmptyPositiveReference);
    }
    let both = controller.points.iter().zip(&reference.points).filter(|((_, a), (_, b))| *a == 1 && *b == 1).count();
    Ok(both as f64 / pos as f64)
}

/// Fraction of the reference's safe initial states classified safe.
pub fn m_vol<F: Fn(&[f64]) -> bool>(inside: F, reference: &LabeledInitialSet) -> Result<f64> {
    let pos = reference.n_positive();
    if pos == 0 {
        return Err(Error::EmptyPositiveReference);
    }
    Ok(reference.positives().filter(|x| inside(x)).count() as f64 / pos as f64)
}

/// Fraction of points classified safe whose label is unsafe.
pub fn m_fp<F: Fn(&[f64]) -> bool>(inside: F, set: &LabeledInitialSet) -> Result<f64> {
    let mut claimed = 0usize;
    let mut wrong = 0usize;
    for (x, l) in &set.points {
        if inside(x) {
            claimed += 1;
            if *l == -1 {
                wrong += 1;
            }
        }
    }
    if claimed == 0 {
        return Err(Error::EmptyDenominator("false-positive rate"));
    }
    Ok(wrong as f64 / claimed as f64)
}

/// Share of safe-classified points that are actually safe: `n_plus / n_s`.
pub fn empirical_risk(n_plus: usize, n_s: usize) -> Result<f64> {
    if n_s == 0 || n_plus > n_s {
        return Err(Error::PreconditionViolated(format!("empirical risk needs 0 ≤ n_plus ≤ n_s, n_s ≥ 1 (got {n_plus}, {n_s})")));
    }
    Ok(n_plus as f64 / n_s as f64)
}

/// `(n_plus, n_s)`: safe-labeled points among the `n_s` points of `set`
/// classified safe.
pub fn safe_counts<F: Fn(&[f64]) -> bool>(inside: F, set: &LabeledInitialSet) -> (usize, usize) {
    set.points.iter().filter(|(x, _)| inside(x)).fold((0, 0), |(p, s), (_, l)| (p + usize::from(*l == 1), s + 1))
}

/// Confidence that the true risk is within `delta` of an empirical risk
/// computed from `n` independent samples.
pub fn hoeffding(n: usize, delta: f64) -> f64 {
    1.0 - 2.0 * (-2.0 * n as f64 * delta * delta).exp()
}

fn shared_check(a: &LabeledInitialSet, b: &LabeledInitialSet) -> Result<()> {
    if a.len() != b.len() || a.points.iter().zip(&b.points).any(|((x, _), (y, _))| x != y) {
        return Err(Error::PreconditionViolated("sets do not share initial states".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(labels: &[i8]) -> LabeledInitialSet {
        LabeledInitialSet { points: labels.iter().enumerate().map(|(i, l)| (vec![i as f64], *l)).collect(), provenance: String::new(), seed: 0 }
    }

    #[test]
    fn dir_counts_shared_positives() {
        let reference = set(&[1, 1, 1, -1]);
        let ctrl = set(&[1, -1, 1, 1]);
        assert!((m_dir(&ctrl, &reference).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(m_dir(&ctrl, &set(&[-1, -1, -1, -1])), Err(Error::EmptyPositiveReference)));
        assert!(m_dir(&set(&[1]), &reference).is_err());
    }

    #[test]
    fn vol_and_fp() {
        let s = set(&[1, 1, -1, -1]);
        // inside: x < 3 → points 0,1,2
        let inside = |x: &[f64]| x[0] < 2.5;
        assert_eq!(m_vol(inside, &s).unwrap(), 1.0);
        assert!((m_fp(inside, &s).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(m_fp(|_: &[f64]| false, &s), Err(Error::EmptyDenominator(_))));
    }

    #[test]
    fn risk_and_counts() {
        assert_eq!(empirical_risk(7, 7).unwrap(), 1.0);
        assert_eq!(empirical_risk(1, 4).unwrap(), 0.25);
        assert!(empirical_risk(0, 0).is_err());
        let s = set(&[1, -1, 1, 1]);
        assert_eq!(safe_counts(|x: &[f64]| x[0] < 2.5, &s), (2, 3));
    }

    #[test]
    fn hoeffding_values() {
        assert!((hoeffding(40000, 0.02) - (1.0 - 2.0 * (-32.0f64).exp())).abs() < 1e-15);
        assert!(hoeffding(40000, 0.02) > 0.999);
        assert!((hoeffding(10000, 0.02) - (1.0 - 2.0 * (-8.0f64).exp())).abs() < 1e-15);
        assert!(hoeffding(1, 0.01) < 0.0);
        for n in [1, 10, 100, 1000] {
            assert!(hoeffding(n + 1, 0.05) > hoeffding(n, 0.05));
            assert!(hoeffding(n, 0.06) > hoeffding(n, 0.05));
        }
    }
}
