use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Result, Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Coordinates sampled per parameter; parameters at or below this size are
    /// checked exhaustively.
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            coords_per_param: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because a perturbed loss was not finite.
    pub nonfinite: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: (f64, f64),
}

/// Compares tape gradients of `f` against central differences.
///
/// The relative error per coordinate is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut report = GradCheckReport::default();
    let grads = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        if !tape.scalar(loss).is_finite() {
            report.nonfinite = 1;
            return Ok(report);
        }
        tape.backward(loss)
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        Ok(tape.scalar(loss))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ids: Vec<_> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, _)| id)
        .collect();
    for id in ids {
        let len = store.get(id).tensor.len();
        let coords: Vec<usize> = if len <= opts.coords_per_param {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, opts.coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let analytic = grads.get(id).map_or(0.0, |g| g[i]);
            let orig = store.get(id).tensor.values()[i];
            store.get_mut(id).tensor.values_mut()[i] = orig + opts.eps;
            let up = eval(store)?;
            store.get_mut(id).tensor.values_mut()[i] = orig - opts.eps;
            let down = eval(store)?;
            store.get_mut(id).tensor.values_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                report.nonfinite += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * opts.eps);
            let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.get(id).name.clone(), i));
                report.worst_pair = (analytic, numeric);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;
    use super::*;

    #[test]
    fn quadratic_is_tight() {
        let mut store = ParamStore::new();
        let vals: Vec<f64> = (0..9).map(|i| i as f64 * 0.3 - 1.0).collect();
        let w = store
            .add("w", Tensor::new(vec![3, 3], vals).unwrap())
            .unwrap();
        let report = grad_check(
            &mut store,
            |t| {
                let x = t.param(w);
                let sq = t.mul(x, x)?;
                Ok(t.sum(sq))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.checked, 9);
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn nonfinite_loss_is_reported() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::zeros(&[1, 1])).unwrap();
        let report = grad_check(
            &mut store,
            |t| {
                let x = t.param(w);
                Ok(t.recip(x))
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(report.nonfinite, 1);
        assert_eq!(report.checked, 0);
    }
}
