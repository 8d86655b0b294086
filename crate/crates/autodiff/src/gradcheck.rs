//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Check at most this many evenly spaced coordinates per parameter
    /// tensor; `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_coords_per_param: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// `|a − n| / max(1e−8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn coords(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < len => {
            if k == 0 {
                return Vec::new();
            }
            let step = len as f64 / k as f64;
            (0..k).map(|i| ((i as f64 + 0.5) * step) as usize).collect()
        }
        _ => (0..len).collect(),
    }
}

/// Compares the tape gradient of `f` against central differences
/// `(f(p+eps) − f(p−eps)) / (2·eps)` for every selected coordinate.
///
/// `f` builds the scalar to differentiate on the tape it is handed. It is
/// invoked once for the analytic pass and twice per checked coordinate.
/// Parameters are restored exactly after each perturbation.
pub fn finite_difference_check<F>(
    params: &mut ParamStore<f64>,
    cfg: &GradCheckConfig,
    f: F,
) -> Result<GradCheckReport>
where
    F: for<'a> Fn(&mut Tape<'a, f64>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(&*params);
        let root = f(&mut tape)?;
        tape.backward(root)?
    };
    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new(p);
        let root = f(&mut tape)?;
        Ok(tape.scalar(root))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        for k in coords(params.get(id).len(), cfg.max_coords_per_param) {
            let original = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = original + cfg.eps;
            let plus = eval(params)?;
            params.get_mut(id).data_mut()[k] = original - cfg.eps;
            let minus = eval(params)?;
            params.get_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = analytic.get(id).data()[k];
            let err = relative_error(a, numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = params.name(id).to_string();
                report.worst_index = k;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut params = ParamStore::new();
        let p = params
            .add("p", Tensor::row_vector(vec![0.3, -1.2, 2.5, 0.0]).unwrap())
            .unwrap();
        // f(p) = pᵀp / 2
        let report = finite_difference_check(&mut params, &GradCheckConfig::default(), |t| {
            let x = t.param(p);
            let sq = t.mul(x, x)?;
            let s = t.sum(sq);
            Ok(t.scale(s, 0.5))
        })
        .unwrap();
        assert_eq!(report.coords_checked, 4);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn coordinate_subsampling_is_even_and_bounded() {
        assert_eq!(coords(10, Some(5)), vec![1, 3, 5, 7, 9]);
        assert_eq!(coords(3, Some(5)), vec![0, 1, 2]);
        assert_eq!(coords(3, None), vec![0, 1, 2]);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
