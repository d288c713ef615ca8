//! Three-stage training: segmentation, then feathering, then both.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::augment;
use super::config::TrainConfig;
use super::loss::{cross_entropy_mask, loss_alpha, loss_color};
use super::sgd::{sgd_step, SgdConfig};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::feathering::{feather_backward, feather_inputs, FeatherParams};
use crate::metrics::evaluate;
use crate::model::{feather_matte, ModelParams, Refiner};
use crate::ops::{channel_concat, softmax_channels_backward};
use crate::parallel::map_indexed;
use crate::paramset::ParamSet;
use crate::segnet::{ldn_backward_cached, ldn_forward, ldn_forward_cached, LdnParams};

/// Stream offset separating augmentation draws from the batch sampler.
const AUGMENT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// One logged point of the loss curve.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    /// 1-based iteration counted across all stages.
    pub iteration: usize,
    pub stage: u8,
    /// Mean training loss since the previous row of the same stage.
    pub loss: f64,
    pub val_grad_err: Option<f64>,
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "iteration,stage,loss,val_grad_err,val_mse";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            writeln!(s, "{},{},{},{},{}", r.iteration, r.stage, r.loss, opt(r.val_grad_err), opt(r.val_mse)).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn stage(&self, stage: u8) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }
}

/// Epoch-wise shuffled index stream.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, pos: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.pos = 0;
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stage {
    Segmentation = 1,
    Feathering = 2,
    Joint = 3,
}

fn segmentation_grad(params: &LdnParams, s: &Sample) -> Result<(f64, LdnParams)> {
    let (scores, cache) = ldn_forward_cached(&s.image, params)?;
    let (loss, g) = cross_entropy_mask(&scores.logits, &s.mask)?;
    Ok((loss as f64, ldn_backward_cached(&cache, params, &g)?))
}

/// `L_α + L_color` and its gradient on the predicted matte.
fn matte_loss(alpha: &crate::tensor::Tensor, s: &Sample, eps: f32) -> Result<(f64, crate::tensor::Tensor)> {
    let (la, ga) = loss_alpha(alpha, &s.alpha, eps)?;
    let (lc, gc) = loss_color(alpha, &s.alpha, &s.image, eps)?;
    Ok(((la + lc) as f64, ga.add(&gc)?))
}

fn feathering_grad(params: &ModelParams, s: &Sample, eps: f32) -> Result<(f64, FeatherParams)> {
    let scores = ldn_forward(&s.image, &params.ldn)?;
    let matte = feather_matte(&s.image, &scores, &params.feather)?;
    let (loss, g) = matte_loss(&matte.alpha, s, eps)?;
    let stack = feather_inputs(&s.image, &scores)?;
    Ok((loss, feather_backward(&stack, &params.feather, &scores, &g)?.params))
}

fn joint_grad(params: &ModelParams, s: &Sample, eps: f32) -> Result<(f64, ModelParams)> {
    let (scores, cache) = ldn_forward_cached(&s.image, &params.ldn)?;
    let matte = feather_matte(&s.image, &scores, &params.feather)?;
    let (loss, g) = matte_loss(&matte.alpha, s, eps)?;
    let stack = feather_inputs(&s.image, &scores)?;
    let fg = feather_backward(&stack, &params.feather, &scores, &g)?;
    let (gf, gb) = fg.score_grads(&s.image)?;
    let g_logits = softmax_channels_backward(&scores.probs(), &channel_concat(&[&gf, &gb])?)?;
    let ldn = ldn_backward_cached(&cache, &params.ldn, &g_logits)?;
    Ok((
        loss,
        ModelParams {
            ldn,
            feather: fg.params,
        },
    ))
}

/// Sums per-sample `(loss, grad)` pairs in slot order and divides by the
/// batch size, so the result does not depend on scheduling.
fn reduce<P: ParamSet<f32> + Clone>(parts: Vec<Result<(f64, P)>>) -> Result<(f64, P)> {
    let k = parts.len() as f64;
    let mut it = parts.into_iter();
    let (mut loss, mut acc) = it.next().expect("batch is non-empty")?;
    for p in it {
        let (l, g) = p?;
        loss += l;
        acc.add_scaled(&g, 1.0);
    }
    let inv = (1.0 / k) as f32;
    acc.arrays_mut().into_iter().for_each(|a| a.iter_mut().for_each(|v| *v *= inv));
    Ok((loss / k, acc))
}

struct Run<'a> {
    train: &'a [Sample],
    val: Vec<Sample>,
    cfg: &'a TrainConfig,
    sampler: BatchSampler,
    iteration: usize,
    history: TrainHistory,
}

impl Run<'_> {
    /// Augmented batch for the current iteration. Slot `j` draws from its
    /// own stream so batches can be built in parallel.
    fn batch_sample(&self, idx: &[usize], slot: usize) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ AUGMENT_SALT);
        rng.set_stream((self.iteration * self.cfg.batch_size + slot) as u64);
        augment(&self.train[idx[slot]], &mut rng, &self.cfg.augment, self.cfg.train_size)
    }

    fn validate(&self, params: &ModelParams, stage: Stage) -> Result<Option<(f64, f64)>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let refiner = if stage == Stage::Segmentation {
            Refiner::Mask
        } else {
            Refiner::Feathering
        };
        let s = evaluate(params, &self.val, &[refiner])?[0];
        Ok(Some((s.grad_error, s.mse)))
    }

    /// Runs `phases` of `(lr, iterations)` on the parameters selected by
    /// `select`, with a fresh momentum buffer for the stage.
    fn stage<P, G, S>(
        &mut self,
        params: &mut ModelParams,
        stage: Stage,
        phases: &[(f64, usize)],
        select: S,
        grad: G,
        progress: &mut dyn FnMut(&HistoryRow),
    ) -> Result<()>
    where
        P: ParamSet<f32> + Clone + Send,
        S: Fn(&mut ModelParams) -> &mut P,
        G: Fn(&ModelParams, &Sample) -> Result<(f64, P)> + Sync,
    {
        let total: usize = phases.iter().map(|p| p.1).sum();
        if total == 0 {
            return Ok(());
        }
        let mut velocity = select(params).clone();
        velocity.fill(0.0);
        let (mut window, mut count, mut done) = (0.0, 0usize, 0usize);
        for &(lr, iters) in phases {
            let sgd = SgdConfig {
                lr,
                momentum: self.cfg.momentum,
                weight_decay: self.cfg.weight_decay,
            };
            for _ in 0..iters {
                let idx = self.sampler.next_batch(self.cfg.batch_size);
                let frozen = &*params;
                let parts = map_indexed(idx.len(), |slot| grad(frozen, &self.batch_sample(&idx, slot)?));
                let (loss, g) = reduce(parts)?;
                if !loss.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "training diverged at iteration {} (stage {})",
                        self.iteration + 1,
                        stage as u8
                    )));
                }
                sgd_step(select(params), &g, &mut velocity, &sgd);

                self.iteration += 1;
                done += 1;
                window += loss;
                count += 1;
                let last = done == total;
                if self.iteration % self.cfg.log_interval == 0 || last {
                    let val_due = last || (self.cfg.val_interval > 0 && self.iteration % self.cfg.val_interval == 0);
                    let val = if val_due { self.validate(params, stage)? } else { None };
                    let row = HistoryRow {
                        iteration: self.iteration,
                        stage: stage as u8,
                        loss: window / count as f64,
                        val_grad_err: val.map(|v| v.0),
                        val_mse: val.map(|v| v.1),
                    };
                    progress(&row);
                    self.history.rows.push(row);
                    window = 0.0;
                    count = 0;
                }
            }
        }
        Ok(())
    }
}

/// Trains from a fresh initialisation derived from `cfg.seed`.
pub fn train_three_stage(train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<(ModelParams, TrainHistory)> {
    let init = cfg.init_params()?;
    train_from(init, train, val, cfg, &mut |_| {})
}

/// Trains `params` in place of a fresh initialisation, reporting every
/// history row to `progress` as it is produced.
pub fn train_from(
    mut params: ModelParams,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&HistoryRow),
) -> Result<(ModelParams, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    let (h, w) = cfg.train_size;
    let val = val.iter().map(|s| s.resized(h, w)).collect::<Result<Vec<_>>>()?;
    let mut run = Run {
        train,
        val,
        cfg,
        sampler: BatchSampler::new(train.len(), cfg.seed),
        iteration: 0,
        history: TrainHistory::default(),
    };
    let it = cfg.stage_iters();
    let eps = cfg.charbonnier_eps as f32;

    run.stage(
        &mut params,
        Stage::Segmentation,
        &[(cfg.stage1_lr[0], it[0]), (cfg.stage1_lr[1], it[1])],
        |p| &mut p.ldn,
        |p, s| segmentation_grad(&p.ldn, s),
        progress,
    )?;
    run.stage(
        &mut params,
        Stage::Feathering,
        &[(cfg.stage2_lr[0], it[2]), (cfg.stage2_lr[1], it[3])],
        |p| &mut p.feather,
        |p, s| feathering_grad(p, s, eps),
        progress,
    )?;
    run.stage(
        &mut params,
        Stage::Joint,
        &[(cfg.stage3_lr, it[4])],
        |p| p,
        |p, s| joint_grad(p, s, eps),
        progress,
    )?;
    Ok((params, run.history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthConfig};
    use crate::training::AugmentConfig;

    fn corpus(n: usize) -> Vec<Sample> {
        let cfg = SynthConfig {
            height: 32,
            width: 32,
            ..SynthConfig::default()
        };
        synth_dataset(n, 1, &cfg).unwrap().into_iter().map(|s| s.sample).collect()
    }

    fn tiny(iters: [usize; 5]) -> TrainConfig {
        let mut c = TrainConfig::desk();
        c.iter_scale = 1.0;
        c.stage1_iters = [iters[0], iters[1]];
        c.stage2_iters = [iters[2], iters[3]];
        c.stage3_iters = iters[4];
        c.batch_size = 2;
        c.train_size = (32, 32);
        c.ldn.input_size = (32, 32);
        c.log_interval = 1;
        c
    }

    #[test]
    fn zero_iterations_return_initial_params() {
        let cfg = tiny([0; 5]);
        let (p, h) = train_three_stage(&corpus(3), &[], &cfg).unwrap();
        assert_eq!(p, cfg.init_params().unwrap());
        assert!(h.rows.is_empty());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(train_three_stage(&[], &[], &tiny([1; 5])), Err(Error::EmptyDataset)));
    }

    #[test]
    fn feathering_stage_leaves_segmentation_untouched() {
        let data = corpus(4);
        let cfg = tiny([2, 0, 0, 0, 0]);
        let (after1, _) = train_three_stage(&data, &[], &cfg).unwrap();
        let (after2, h) = train_from(after1.clone(), &data, &[], &tiny([0, 0, 2, 1, 0]), &mut |_| {}).unwrap();
        let bits = |p: &LdnParams| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&after1.ldn), bits(&after2.ldn));
        assert_ne!(after1.feather, after2.feather);
        assert_eq!(h.rows.iter().map(|r| r.stage).collect::<Vec<_>>(), vec![2, 2, 2]);
    }

    #[test]
    fn same_seed_same_history() {
        let data = corpus(4);
        let mut cfg = tiny([1, 1, 1, 0, 1]);
        cfg.augment = AugmentConfig::default();
        let a = train_three_stage(&data, &data[..1], &cfg).unwrap();
        let b = train_three_stage(&data, &data[..1], &cfg).unwrap();
        assert_eq!(a.1.to_csv(), b.1.to_csv());
        assert_eq!(a.0.to_bytes(), b.0.to_bytes());
        assert!(a.1.rows.last().unwrap().val_mse.is_some());
    }

    #[test]
    fn csv_layout() {
        let h = TrainHistory {
            rows: vec![HistoryRow {
                iteration: 10,
                stage: 1,
                loss: 0.5,
                val_grad_err: None,
                val_mse: Some(0.25),
            }],
        };
        assert_eq!(h.to_csv(), "iteration,stage,loss,val_grad_err,val_mse\n10,1,0.5,,0.25\n");
    }

    #[test]
    fn sampler_covers_each_epoch() {
        let mut s = BatchSampler::new(5, 3);
        let mut first: Vec<usize> = s.next_batch(5);
        first.sort_unstable();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
    }
}
