//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::store::ParameterStore;
use crate::error::{Error, Result};

/// Above this many entries only a seeded random subsample is checked.
pub const FULL_CHECK_LIMIT: usize = 10_000;

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst_entry: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares the tape gradient of `build` against central differences over
/// every entry of `store` (or a seeded subsample of [`FULL_CHECK_LIMIT`]
/// entries for larger stores).
///
/// `build` must construct the same scalar loss from whatever store it is
/// given; it is called once for the analytic pass and twice per entry.
pub fn check_gradient<F>(store: &ParameterStore, eps: f64, mut build: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParameterStore) -> Result<Var>,
{
    if !(eps > 0.0 && eps < 1e-2) {
        return Err(Error::Config(format!("finite-difference step {eps} outside (0, 1e-2)")));
    }
    let mut graph = Graph::new();
    let loss = build(&mut graph, store)?;
    graph.backward(loss)?;
    let grads = graph.param_grads();

    let mut entries: Vec<(String, usize)> = store
        .iter()
        .flat_map(|(name, p)| (0..p.value.len()).map(move |i| (name.to_string(), i)))
        .collect();
    if entries.len() > FULL_CHECK_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        let mut picked: Vec<usize> = sample(&mut rng, entries.len(), FULL_CHECK_LIMIT).into_vec();
        picked.sort_unstable();
        entries = picked.into_iter().map(|i| entries[i].clone()).collect();
    }

    let mut eval = |s: &ParameterStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, s)?;
        Ok(g.scalar(l))
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_entry: None,
        entries_checked: 0,
    };
    let mut probe = store.clone();
    for (name, idx) in entries {
        let original = store.get(&name)?.data()[idx];
        probe.get_mut(&name)?.data_mut()[idx] = original + eps;
        let plus = eval(&probe)?;
        probe.get_mut(&name)?.data_mut()[idx] = original - eps;
        let minus = eval(&probe)?;
        probe.get_mut(&name)?.data_mut()[idx] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads.get(&name).map_or(0.0, |g| g.data()[idx]);
        let err = relative_error(analytic, numeric);
        if err > report.max_relative_error || report.worst_entry.is_none() {
            report.max_relative_error = err;
            report.worst_entry = Some((name.clone(), idx));
        }
        report.entries_checked += 1;
    }
    Ok(report)
}
