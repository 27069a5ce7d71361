use serde::Serialize;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Acceptance thresholds for a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdTolerance {
    pub relative: f64,
    /// Elements whose analytic and numeric magnitudes are both below 1 also
    /// pass when their absolute difference is under this value.
    pub absolute: f64,
}

impl Default for FdTolerance {
    fn default() -> Self {
        FdTolerance {
            relative: 1e-4,
            absolute: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdEntry {
    pub name: String,
    pub elements: usize,
    /// Largest relative error among elements not covered by the absolute
    /// floor.
    pub max_rel_err: f64,
    /// Largest relative error over all elements, including near-zero ones.
    pub max_rel_err_raw: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub failed_elements: usize,
}

impl FdEntry {
    pub fn passed(&self) -> bool {
        self.failed_elements == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub epsilon: f64,
    pub tolerance: FdTolerance,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(FdEntry::passed)
    }

    /// Names of parameters with at least one element out of tolerance.
    pub fn flagged(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| !e.passed())
            .map(|e| e.name.as_str())
            .collect()
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Returns a copy of `params` whose gradients hold d(objective)/d(param).
pub fn analytic_gradients<T, F>(params: &ParamStore<T>, objective: &F) -> Result<ParamStore<T>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut store = params.clone();
    store.zero_grad();
    let mut g = Graph::new();
    let out = objective(&mut g, &store)?;
    g.backward(out, T::one(), &mut store)?;
    Ok(store)
}

fn evaluate<T, F>(g_params: &ParamStore<T>, objective: &F) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = objective(&mut g, g_params)?;
    Ok(g.scalar(out).as_f64())
}

/// Compares the gradients already stored in `with_grads` against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, one element at a time.
pub fn compare_with_finite_differences<T, F>(
    with_grads: &ParamStore<T>,
    epsilon: f64,
    tolerance: FdTolerance,
    objective: &F,
) -> Result<FdReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let mut work = with_grads.values_only();
    let names: Vec<String> = with_grads.names().map(str::to_string).collect();
    let mut entries = Vec::with_capacity(names.len());
    for name in names {
        let analytic: Vec<f64> = with_grads.grad(&name)?.data().iter().map(|v| v.as_f64()).collect();
        let mut entry = FdEntry {
            name: name.clone(),
            elements: analytic.len(),
            max_rel_err: 0.0,
            max_rel_err_raw: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
            failed_elements: 0,
        };
        for (i, &a) in analytic.iter().enumerate() {
            let orig = work.value(&name)?.data()[i];
            work.value_mut(&name)?.data_mut()[i] = T::of(orig.as_f64() + epsilon);
            let plus = evaluate(&work, objective)?;
            work.value_mut(&name)?.data_mut()[i] = T::of(orig.as_f64() - epsilon);
            let minus = evaluate(&work, objective)?;
            work.value_mut(&name)?.data_mut()[i] = orig;
            let n = (plus - minus) / (2.0 * epsilon);
            let rel = relative_error(a, n);
            let abs = (a - n).abs();
            entry.max_rel_err_raw = entry.max_rel_err_raw.max(rel);
            entry.max_abs_err = entry.max_abs_err.max(abs);
            let floored = a.abs() < 1.0 && n.abs() < 1.0 && abs < tolerance.absolute;
            if floored {
                continue;
            }
            if rel > entry.max_rel_err {
                entry.max_rel_err = rel;
                entry.worst_index = i;
            }
            if rel >= tolerance.relative {
                entry.failed_elements += 1;
            }
        }
        entries.push(entry);
    }
    Ok(FdReport {
        epsilon,
        tolerance,
        entries,
    })
}

/// Analytic gradients by reverse accumulation, checked against central
/// differences for every parameter element.
pub fn finite_diff_check<T, F>(
    params: &ParamStore<T>,
    epsilon: f64,
    tolerance: FdTolerance,
    objective: F,
) -> Result<FdReport>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &ParamStore<T>) -> Result<Var>,
{
    let with_grads = analytic_gradients(params, &objective)?;
    compare_with_finite_differences(&with_grads, epsilon, tolerance, &objective)
}
