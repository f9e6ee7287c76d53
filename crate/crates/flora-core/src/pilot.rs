//! The pilot experiment: five update rules on one patched layer of an MLP,
//! identical init and data order, aligned loss/accuracy curves.
//!
//! The restricted variants (adapters and random projections) train only the
//! patched matrix while every other parameter stays at its shared random
//! init; `full_sgd` trains the whole model. All variants share the learning
//! rate, so the curves isolate what the update rule itself costs.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gauss::derive_seed;
use crate::lora_dynamics::{
    effective_weight, init_variant_state, variant_update, UpdateRule, Variant,
};
use crate::model::MlpModel;

// Stream tags for deriving independent seed families from the run seed.
const TAG_INIT: u64 = 1;
const TAG_PROJ: u64 = 2;
const TAG_DATA: u64 = 3;

#[derive(Debug, Clone)]
pub struct PilotConfig {
    pub eta: f64,
    pub rank: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    /// Layer dims; the default patches the 768 x 768 matrix in the middle.
    pub layers: Vec<usize>,
    /// Index of the weight matrix the variants act on.
    pub patch_layer: usize,
    pub eval_every: usize,
}

impl PilotConfig {
    pub fn new(seed: u64) -> Self {
        PilotConfig {
            eta: 0.01,
            rank: 8,
            seed,
            epochs: 3,
            batch: 32,
            layers: vec![784, 768, 768, 10],
            patch_layer: 1,
            eval_every: 25,
        }
    }

    fn validate(&self, train: &Dataset) -> Result<()> {
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::config(
                "pilot needs batch >= 1 and epochs >= 1".to_string(),
            ));
        }
        if self.patch_layer + 1 >= self.layers.len() {
            return Err(Error::config(format!(
                "patch layer {} out of range for {} weight matrices",
                self.patch_layer,
                self.layers.len() - 1
            )));
        }
        if self.layers.first() != Some(&train.feature_dim()) {
            return Err(Error::config(format!(
                "model input dim {:?} does not match data dim {}",
                self.layers.first(),
                train.feature_dim()
            )));
        }
        if self.layers.last() != Some(&train.n_classes()) {
            return Err(Error::config(format!(
                "model output dim {:?} does not match class count {}",
                self.layers.last(),
                train.n_classes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotRecord {
    pub variant: Variant,
    pub step: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Runs all five variants and returns their aligned per-step records,
/// grouped by variant in `Variant::ALL` order.
pub fn run_pilot(cfg: &PilotConfig, train: &Dataset, eval: &Dataset) -> Result<Vec<PilotRecord>> {
    cfg.validate(train)?;
    let runs: Vec<Result<Vec<PilotRecord>>> = Variant::ALL
        .par_iter()
        .map(|&variant| run_variant(cfg, train, eval, variant))
        .collect();
    let mut records = Vec::new();
    for run in runs {
        records.extend(run?);
    }
    Ok(records)
}

/// Final (last-recorded) accuracy per variant.
pub fn final_accuracies(records: &[PilotRecord]) -> Vec<(Variant, f64)> {
    Variant::ALL
        .iter()
        .filter_map(|&v| {
            records
                .iter()
                .rfind(|r| r.variant == v)
                .map(|r| (v, r.accuracy))
        })
        .collect()
}

fn run_variant(
    cfg: &PilotConfig,
    train: &Dataset,
    eval: &Dataset,
    variant: Variant,
) -> Result<Vec<PilotRecord>> {
    let mut model = MlpModel::new(&cfg.layers, derive_seed(cfg.seed, TAG_INIT, 0))?;
    let rule = UpdateRule {
        variant,
        rank: cfg.rank,
        eta: cfg.eta,
    };
    let patch = cfg.patch_layer;
    let (rows, cols) = model.weight(patch).shape();
    // One shared projection seed: the adapter variants and fixed RP start
    // from the same A0, which is what makes their curves comparable.
    let mut state = init_variant_state(&rule, rows, cols, derive_seed(cfg.seed, TAG_PROJ, 0))?;
    let mut w_patch = model.weight(patch).clone();

    let total_steps = train.len().div_ceil(cfg.batch) * cfg.epochs;
    let mut records = Vec::new();
    let mut accuracy = model.accuracy(eval, None)?;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let order = train.shuffled_indices(derive_seed(cfg.seed, TAG_DATA, epoch as u64));
        for chunk in order.chunks(cfg.batch) {
            let (x, labels) = train.batch(chunk);
            model.set_weight(patch, effective_weight(&w_patch, &state)?)?;
            let (loss, grads) = model.forward_backward(&x, &labels)?;

            if variant == Variant::FullSgd {
                let deltas = grads
                    .iter()
                    .map(|(k, g)| (k.clone(), g.scale(-cfg.eta)))
                    .collect();
                model.apply_deltas(&deltas)?;
                w_patch = model.weight(patch).clone();
            } else {
                let g_patch = &grads[&MlpModel::weight_id(patch)];
                let (w_next, s_next) = variant_update(&rule, &w_patch, g_patch, state)?;
                w_patch = w_next;
                state = s_next;
            }

            step += 1;
            if step.is_multiple_of(cfg.eval_every) || step == total_steps {
                model.set_weight(patch, effective_weight(&w_patch, &state)?)?;
                accuracy = model.accuracy(eval, None)?;
            }
            records.push(PilotRecord {
                variant,
                step,
                loss,
                accuracy,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    fn small_cfg(seed: u64) -> (PilotConfig, Dataset, Dataset) {
        let data = synth_blobs(77, 40, 16, 4);
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| i % 4 != 3).collect();
        let eval_idx: Vec<usize> = (0..data.len()).filter(|i| i % 4 == 3).collect();
        let train = data.subset(&train_idx);
        let eval = data.subset(&eval_idx);
        let mut cfg = PilotConfig::new(seed);
        cfg.layers = vec![16, 24, 24, 4];
        cfg.epochs = 2;
        cfg.batch = 8;
        cfg.eval_every = 5;
        (cfg, train, eval)
    }

    #[test]
    fn zero_learning_rate_freezes_all_curves() {
        let (mut cfg, train, eval) = small_cfg(1);
        cfg.eta = 0.0;
        let records = run_pilot(&cfg, &train, &eval).unwrap();
        for v in Variant::ALL {
            let of_v: Vec<_> = records.iter().filter(|r| r.variant == v).collect();
            let acc0 = of_v[0].accuracy;
            assert!(
                of_v.iter().all(|r| r.accuracy == acc0),
                "{v:?} accuracy moved with eta=0"
            );
        }
    }

    #[test]
    fn pilot_is_deterministic() {
        let (cfg, train, eval) = small_cfg(5);
        let a = run_pilot(&cfg, &train, &eval).unwrap();
        let b = run_pilot(&cfg, &train, &eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn records_cover_all_variants_and_steps() {
        let (cfg, train, eval) = small_cfg(9);
        let records = run_pilot(&cfg, &train, &eval).unwrap();
        let per_epoch = train.len().div_ceil(cfg.batch);
        let want_steps = per_epoch * cfg.epochs;
        for v in Variant::ALL {
            let count = records.iter().filter(|r| r.variant == v).count();
            assert_eq!(count, want_steps, "{v:?}");
        }
        let finals = final_accuracies(&records);
        assert_eq!(finals.len(), 5);
    }

    #[test]
    fn lora_b_effective_weight_tracks_rp() {
        // Same A0, same data: training only B is the same trajectory as
        // applying the fixed random projection to the patched weight.
        let (mut cfg, train, eval) = small_cfg(13);
        cfg.epochs = 1;
        let records = run_pilot(&cfg, &train, &eval).unwrap();
        let curve = |v: Variant| -> Vec<f64> {
            records
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.loss)
                .collect()
        };
        let rp = curve(Variant::Rp);
        let lora_b = curve(Variant::LoraB);
        for (a, b) in rp.iter().zip(lora_b.iter()) {
            assert!((a - b).abs() <= 1e-8, "rp {a} vs lora_b {b}");
        }
    }
}
