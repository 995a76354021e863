//! Alternating critic/generator training.
//!
//! Each iteration runs `critic_steps` critic updates followed by one generator
//! update, all through Adam. Critics train with dropout active. Lipschitz
//! control is either a gradient penalty on real/fake interpolates (default)
//! or weight clipping.
//!
//! The penalty needs the gradient of the critic score with respect to its
//! input; backward passes are recorded on the tape, so the penalty expression
//! built from that gradient is itself differentiable and the second backward
//! pass delivers exact parameter gradients.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::{normalize_samples, CriticBatch, Critics, DganConfig, GenLatents, GeneratorBundle};
use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::nets::{AdamParams, AdamState, Mode, Parameterized};
use crate::sampling::SampleSet;

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub critic_loss: f64,
    pub aux_loss: f64,
    pub gen_loss: f64,
    pub diversity: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainingHistory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,critic_loss,aux_loss,gen_loss,diversity")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{},{},{}", e.epoch, e.critic_loss, e.aux_loss, e.gen_loss, e.diversity)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn all_finite(&self) -> bool {
        self.epochs.iter().all(|e| {
            e.critic_loss.is_finite() && e.aux_loss.is_finite() && e.gen_loss.is_finite() && e.diversity.is_finite()
        })
    }
}

/// Trained generator plus its critics and the config that produced them.
#[derive(Clone, Debug)]
pub struct DganModel {
    pub bundle: GeneratorBundle,
    pub critics: Critics,
    pub config: DganConfig,
}

pub struct TrainOutcome {
    pub model: DganModel,
    pub history: TrainingHistory,
    /// Set when training stopped early on a non-finite loss; the history up
    /// to that point is retained.
    pub aborted: Option<String>,
}

struct TrainCtx {
    bundle: GeneratorBundle,
    critics: Critics,
    adam_g: AdamState,
    adam_d: AdamState,
    latent_rng: ChaCha20Rng,
    dropout_rng: ChaCha20Rng,
    gp_rng: ChaCha20Rng,
    config: DganConfig,
}

pub fn train_dgan(config: &DganConfig, data: &SampleSet) -> Result<TrainOutcome> {
    config.validate()?;
    if data.n_samples() == 0 {
        return Err(Error::Data("cannot train on an empty sample set".into()));
    }
    if data.t != config.t {
        return Err(Error::Config(format!(
            "data sample length {} does not match configured t = {}",
            data.t, config.t
        )));
    }
    for i in 0..data.n_samples() {
        for (a, name) in data.attrs(i).iter().zip(&data.attr_schema) {
            if *a != 0.0 && *a != 1.0 {
                return Err(Error::Data(format!(
                    "attribute {name:?} of sample {i} is {a}; GAN attributes must be 0/1 indicators"
                )));
            }
        }
    }

    let (norm, _) = normalize_samples(data)?;
    let seed = config.seed;
    let mut init_rng = crate::rng::stream(seed, "dgan-init");
    let bundle = GeneratorBundle::new(config, data.f, data.attr_schema.clone(), &mut init_rng)?;
    let mut critics = Critics::new(config, &bundle.spec, &mut init_rng);
    critics.fit_meta_scale(&norm);
    let adam_g = AdamState::for_params(AdamParams::with_lr(config.lr_g), &bundle.params());
    let adam_d = AdamState::for_params(AdamParams::with_lr(config.lr_d), &critics.params());

    let mut ctx = TrainCtx {
        bundle,
        critics,
        adam_g,
        adam_d,
        latent_rng: crate::rng::stream(seed, "dgan-latents"),
        dropout_rng: crate::rng::stream(seed, "dgan-dropout"),
        gp_rng: crate::rng::stream(seed, "dgan-gp"),
        config: config.clone(),
    };
    let mut shuffle_rng = crate::rng::stream(seed, "dgan-shuffle");
    let mut diversity_rng = crate::rng::stream(seed, "dgan-diversity");

    let mut history = TrainingHistory::default();
    let n = norm.n_samples();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut counts = (0usize, 0usize);
        let mut since_gen = 0;

        for chunk in order.chunks(config.batch_size) {
            let real = CriticBatch::from_normalized(&norm, chunk);
            match critic_step(&mut ctx, &real) {
                Ok((lp, la)) => {
                    sums.0 += lp;
                    sums.1 += la;
                    counts.0 += 1;
                }
                Err(reason) => {
                    return Ok(abort(ctx, history, epoch, reason));
                }
            }
            since_gen += 1;
            if since_gen == ctx.config.critic_steps {
                since_gen = 0;
                match generator_step(&mut ctx, chunk.len()) {
                    Ok(lg) => {
                        sums.2 += lg;
                        counts.1 += 1;
                    }
                    Err(reason) => {
                        return Ok(abort(ctx, history, epoch, reason));
                    }
                }
            }
        }

        let diversity = epoch_diversity(&ctx.bundle, &mut diversity_rng)?;
        history.epochs.push(EpochStats {
            epoch,
            critic_loss: sums.0 / counts.0.max(1) as f64,
            aux_loss: sums.1 / counts.0.max(1) as f64,
            gen_loss: if counts.1 > 0 { sums.2 / counts.1 as f64 } else { 0.0 },
            diversity,
        });
    }

    Ok(TrainOutcome {
        model: DganModel { bundle: ctx.bundle, critics: ctx.critics, config: ctx.config },
        history,
        aborted: None,
    })
}

fn abort(ctx: TrainCtx, history: TrainingHistory, epoch: usize, reason: Error) -> TrainOutcome {
    TrainOutcome {
        model: DganModel { bundle: ctx.bundle, critics: ctx.critics, config: ctx.config },
        history,
        aborted: Some(format!("epoch {epoch}: {reason}")),
    }
}

/// One critic update on a real batch. Returns (primary, auxiliary) losses
/// including any penalty terms.
fn critic_step(ctx: &mut TrainCtx, real: &CriticBatch) -> Result<(f64, f64)> {
    let n = real.attrs_full.rows();
    let mut tape = Tape::new();
    let critic_ids = crate::nets::bind_leaves(&mut tape, &ctx.critics, true);
    let bound_critics = ctx.critics.bind_ids(&mut critic_ids.iter().copied());
    let bound_gen = ctx.bundle.bind(&mut tape, false); // frozen: fakes are detached

    let latents = GenLatents::draw(&ctx.bundle.spec, n, &mut ctx.latent_rng);
    let fake = bound_gen.forward(&mut tape, &latents, false);

    let real_meta_scaled = ctx.critics.scale_meta(&real.attrs_full);
    let real_attrs = tape.constant(real_meta_scaled.clone());
    let real_series = tape.constant(real.series.clone());
    let real_full = tape.concat_last(&[real_attrs, real_series]);
    let fake_meta = bound_critics.scale_meta_node(&mut tape, fake.attrs_full);
    let fake_full = tape.concat_last(&[fake_meta, fake.series]);

    let d_real = bound_critics.primary.score(&mut tape, real_full, Mode::Train, &mut ctx.dropout_rng);
    let d_fake = bound_critics.primary.score(&mut tape, fake_full, Mode::Train, &mut ctx.dropout_rng);
    let mean_real = tape.mean(d_real);
    let mean_fake = tape.mean(d_fake);
    let mut loss_p = tape.sub(mean_fake, mean_real);

    let a_real = bound_critics.aux.score(&mut tape, real_attrs, Mode::Train, &mut ctx.dropout_rng);
    let a_fake = bound_critics.aux.score(&mut tape, fake_meta, Mode::Train, &mut ctx.dropout_rng);
    let amean_real = tape.mean(a_real);
    let amean_fake = tape.mean(a_fake);
    let mut loss_a = tape.sub(amean_fake, amean_real);

    if ctx.config.gradient_penalty {
        let pen_p = {
            let real_vals = tape.value(real_full).clone();
            let fake_vals = tape.value(fake_full).clone();
            let xhat = interpolate(&mut tape, real_vals, fake_vals, &mut ctx.gp_rng);
            gradient_penalty(&mut tape, &bound_critics.primary, xhat, &mut ctx.dropout_rng)
        };
        let pen_a = {
            let fake_vals = tape.value(fake_meta).clone();
            let xhat = interpolate(&mut tape, real_meta_scaled, fake_vals, &mut ctx.gp_rng);
            gradient_penalty(&mut tape, &bound_critics.aux, xhat, &mut ctx.dropout_rng)
        };
        let sp = tape.scale(pen_p, ctx.config.gp_coeff);
        loss_p = tape.add(loss_p, sp);
        let sa = tape.scale(pen_a, ctx.config.gp_coeff);
        loss_a = tape.add(loss_a, sa);
    }

    let scaled_aux = tape.scale(loss_a, ctx.config.alpha);
    let combined = tape.add(loss_p, scaled_aux);
    let combined_val = tape.value(combined).item();
    if !combined_val.is_finite() {
        return Err(Error::Numeric(format!("critic loss is {combined_val}")));
    }

    let grads = tape.backward(combined);
    let grad_tensors: Vec<Tensor> = critic_ids.iter().map(|&id| tape.grad(&grads, id)).collect();
    ctx.adam_d.step(&mut ctx.critics.params_mut(), &grad_tensors)?;

    if !ctx.config.gradient_penalty {
        let clip = ctx.config.weight_clip;
        for (_, t) in ctx.critics.params_mut() {
            for v in t.data_mut() {
                *v = v.clamp(-clip, clip);
            }
        }
    }

    Ok((tape.value(loss_p).item(), tape.value(loss_a).item()))
}

/// One generator update with a fresh latent batch.
fn generator_step(ctx: &mut TrainCtx, n: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let gen_ids = crate::nets::bind_leaves(&mut tape, &ctx.bundle, true);
    let bound_gen = ctx.bundle.bind_ids(&mut gen_ids.iter().copied());
    let bound_critics = ctx.critics.bind(&mut tape, false);

    let latents = GenLatents::draw(&ctx.bundle.spec, n.max(2), &mut ctx.latent_rng);
    let fake = bound_gen.forward(&mut tape, &latents, false);
    let fake_meta = bound_critics.scale_meta_node(&mut tape, fake.attrs_full);
    let full = tape.concat_last(&[fake_meta, fake.series]);
    let d = bound_critics.primary.score(&mut tape, full, Mode::Train, &mut ctx.dropout_rng);
    let d_mean = tape.mean(d);
    let a = bound_critics.aux.score(&mut tape, fake_meta, Mode::Train, &mut ctx.dropout_rng);
    let a_mean = tape.mean(a);
    let a_scaled = tape.scale(a_mean, ctx.config.alpha);
    let s = tape.add(d_mean, a_scaled);
    let loss = tape.neg(s);

    let loss_val = tape.value(loss).item();
    if !loss_val.is_finite() {
        return Err(Error::Numeric(format!("generator loss is {loss_val}")));
    }
    let grads = tape.backward(loss);
    let grad_tensors: Vec<Tensor> = gen_ids.iter().map(|&id| tape.grad(&grads, id)).collect();
    ctx.adam_g.step(&mut ctx.bundle.params_mut(), &grad_tensors)?;
    Ok(loss_val)
}

/// Per-row uniform interpolates between real and fake inputs, inserted as a
/// differentiable leaf.
fn interpolate(tape: &mut Tape, real: Tensor, fake: Tensor, rng: &mut ChaCha20Rng) -> NodeId {
    assert_eq!(real.shape(), fake.shape(), "interpolate shape mismatch");
    let (n, d) = (real.rows(), real.cols());
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let eps: f64 = rng.gen();
        for j in 0..d {
            data.push(eps * real.get2(i, j) + (1.0 - eps) * fake.get2(i, j));
        }
    }
    tape.var(Tensor::from_vec(&[n, d], data))
}

/// mean((||grad_x critic(x_hat)||_2 - 1)^2) over the batch, built from a
/// recorded backward pass so it stays differentiable w.r.t. critic weights.
fn gradient_penalty(
    tape: &mut Tape,
    critic: &super::BoundCritic,
    xhat: NodeId,
    dropout_rng: &mut ChaCha20Rng,
) -> NodeId {
    let scores = critic.score(tape, xhat, Mode::Train, dropout_rng);
    let total = tape.sum(scores); // rows are independent, so d total / d x_hat stacks per-row gradients
    let grads = tape.backward(total);
    let g = grads.node(xhat).expect("interpolates always reach the score");
    let g2 = tape.square(g);
    let d = tape.value(g2).cols();
    let ones = tape.constant(Tensor::ones(&[d, 1]));
    let row_sumsq = tape.matmul(g2, ones);
    let floor = tape.constant(Tensor::scalar(1e-12));
    let safe = tape.add(row_sumsq, floor);
    let norms = tape.sqrt(safe);
    let one = tape.constant(Tensor::scalar(1.0));
    let excess = tape.sub(norms, one);
    let sq = tape.square(excess);
    tape.mean(sq)
}

/// Diversity of a freshly generated batch, measured on the normalized series.
fn epoch_diversity(bundle: &GeneratorBundle, rng: &mut ChaCha20Rng) -> Result<f64> {
    let latents = GenLatents::draw(&bundle.spec, 64, rng);
    let mut tape = Tape::new();
    let bound = bundle.bind(&mut tape, false);
    let fake = bound.forward(&mut tape, &latents, true);
    let series = tape.value(fake.series);
    let set = SampleSet::new(bundle.spec.t, bundle.spec.f, series.data().to_vec(), vec![], vec![])?;
    super::diversity_score(&set)
}
