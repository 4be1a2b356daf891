//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};
use crate::numeric::param::{ParamId, ParamStore};
use crate::numeric::rng::Rng;

#[derive(Clone, Debug)]
pub struct FdSettings {
    /// Central-difference step.
    pub step: f64,
    /// Maximum admissible relative error.
    pub tol: f64,
    /// Coordinates sampled per block; 0 means every coordinate.
    pub coords_per_block: usize,
    /// Seed for coordinate sampling.
    pub seed: u64,
}

impl Default for FdSettings {
    fn default() -> Self {
        FdSettings { step: 1e-4, tol: 1e-3, coords_per_block: 16, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct FdCoord {
    pub block: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub coords_checked: usize,
    pub blocks_checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<FdCoord>,
}

/// Relative error with a floor so that near-zero gradient pairs are
/// compared absolutely at the `1e-2` scale.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

/// Compare analytic gradients against central finite differences.
///
/// `loss` must be deterministic (dropout disabled or seed-pinned). When
/// `compute_grads` is true the closure must also accumulate gradients
/// into the store; otherwise it only returns the loss value. Frozen
/// blocks are skipped. Fails with a verification error listing the
/// offending coordinates when any relative error exceeds `settings.tol`.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    mut loss: F,
    settings: &FdSettings,
) -> Result<FdReport>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    store.zero_grads();
    let _ = loss(store, true)?;
    let analytic: Vec<Vec<f64>> = store.blocks().map(|b| b.grad.data().to_vec()).collect();
    store.zero_grads();

    let mut rng = Rng::new(settings.seed);
    let mut report = FdReport::default();
    let mut failures: Vec<FdCoord> = Vec::new();
    let ids: Vec<ParamId> = store.ids().collect();

    for id in ids {
        if !store.block(id).trainable {
            continue;
        }
        report.blocks_checked += 1;
        let n = store.value(id).len();
        let coords: Vec<usize> = if settings.coords_per_block == 0 || settings.coords_per_block >= n
        {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut all);
            all.truncate(settings.coords_per_block);
            all
        };

        for index in coords {
            let orig = store.value(id).data()[index];
            store.block_mut(id).value.data_mut()[index] = orig + settings.step;
            let plus = loss(store, false)?;
            store.block_mut(id).value.data_mut()[index] = orig - settings.step;
            let minus = loss(store, false)?;
            store.block_mut(id).value.data_mut()[index] = orig;

            let numeric = (plus - minus) / (2.0 * settings.step);
            let a = analytic[id.0][index];
            let err = rel_err(a, numeric);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some(FdCoord {
                    block: store.block(id).name.clone(),
                    index,
                    analytic: a,
                    numeric,
                    rel_err: err,
                });
            }
            if err > settings.tol {
                failures.push(FdCoord {
                    block: store.block(id).name.clone(),
                    index,
                    analytic: a,
                    numeric,
                    rel_err: err,
                });
            }
        }
    }

    if !failures.is_empty() {
        let listing: Vec<String> = failures
            .iter()
            .take(12)
            .map(|f| {
                format!(
                    "{}[{}]: analytic {:.6e} vs numeric {:.6e} (rel {:.3e})",
                    f.block, f.index, f.analytic, f.numeric, f.rel_err
                )
            })
            .collect();
        return Err(Error::Verification(format!(
            "{} of {} sampled coordinates exceed tol {}: {}",
            failures.len(),
            report.coords_checked,
            settings.tol,
            listing.join("; ")
        )));
    }
    Ok(report)
}
