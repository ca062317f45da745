//! Alternating adversarial training, checkpointing and the metrics log.
//!
//! Each step first updates both discriminator sets on detached fakes, then
//! updates the encoders and decoders on the weighted objective using the
//! freshly updated discriminators.

mod config;
mod optim;

use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use cidn_tensor::{Tape, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};

pub use config::{Ablation, DataConfig, LatentSampling, RunConfig, TrainConfig};
pub use optim::{adam_step, AdamHyper};

use crate::data::{Dataset, ImagePair, Prefetcher};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::losses::{terms, total_loss, FeatureExtractor, LossReport};
use crate::model::{Domain, ModelState, Network, ParamGroup};
use crate::rng::{self, tag};

pub const METRICS_FILE: &str = "metrics.csv";

/// Fresh model for `cfg`: parameters from `cfg.train.seed`, step 0.
pub fn init_model(cfg: &RunConfig) -> ModelState {
    ModelState::init(cfg.model, cfg.train.seed)
}

/// Everything one step needs besides the model.
pub struct StepContext {
    pub cfg: RunConfig,
    pub extractor: FeatureExtractor,
}

impl StepContext {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let extractor = FeatureExtractor::from_source(&cfg.perceptual)?;
        Ok(StepContext { cfg, extractor })
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.cfg.train.learning_rate,
            beta1: self.cfg.train.beta1,
            beta2: self.cfg.train.beta2,
            eps: 1e-8,
        }
    }
}

fn finite(component: &'static str, v: f64, step: u64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { component, step })
    }
}

fn scalar(v: &Var<f32>) -> f64 {
    v.value().item() as f64
}

/// Brightness code for a batch: reparameterized with noise from a stream
/// keyed by (seed, step, domain), or the posterior mean.
fn code(mu: &Var<f32>, logvar: &Var<f32>, mode: LatentSampling, seed: u64, step: u64, domain: u64) -> Var<f32> {
    match mode {
        LatentSampling::Mean => mu.clone(),
        LatentSampling::Reparameterized => {
            let mut rng = rng::stream(seed, &[tag::LATENT, step, domain]);
            let eps = Tensor::from_fn(mu.shape(), |_| StandardNormal.sample(&mut rng));
            mu.add(&logvar.scale(0.5).exp().mul(&Var::constant(eps)))
        }
    }
}

/// One discriminator update followed by one generator update. On error the
/// state is left as it was, except when the generator objective becomes
/// non-finite after the discriminator update has been applied.
pub fn train_step(batch: &[ImagePair], state: &mut ModelState, ctx: &StepContext) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let step = state.step;
    let cfg = &ctx.cfg;
    let w = cfg.effective_weights();
    let lows: Vec<&ImageTensor> = batch.iter().map(|p| &p.low).collect();
    let normals: Vec<&ImageTensor> = batch.iter().map(|p| &p.normal).collect();
    let x = Var::constant(ImageTensor::batch_to_tensor(&lows)?);
    let y = Var::constant(ImageTensor::batch_to_tensor(&normals)?);
    let arch = state.arch;
    let mode = cfg.train.latent_sampling;

    // Generator forward, recorded on its own tape.
    let tape = Tape::new();
    let gen = state.params.bind_tracked(&tape, &ParamGroup::GENERATOR);
    let net = Network::new(arch, &gen);
    let cx = net.content(&x);
    let cy = net.content(&y);
    let (mu_x, lv_x) = net.brightness(&x);
    let (mu_y, lv_y) = net.brightness(&y);
    let bx = code(&mu_x, &lv_x, mode, state.seed, step, 0);
    let by = code(&mu_y, &lv_y, mode, state.seed, step, 1);
    let x_rec = net.decode(Domain::Low, &cx, &bx);
    let y_rec = net.decode(Domain::Normal, &cy, &by);
    let y_swap = net.decode(Domain::Normal, &cx, &by);
    let x_swap = net.decode(Domain::Low, &cy, &bx);

    // Discriminator update on detached fakes.
    let (adv_d_x, adv_d_y) = {
        let d_tape = Tape::new();
        let dis = state.params.bind_tracked(&d_tape, &ParamGroup::DISCRIMINATOR);
        let dnet = Network::new(arch, &dis);
        let dx = terms::adversarial_d_logits(
            &dnet.discriminator_logits(Domain::Low, &x),
            &dnet.discriminator_logits(Domain::Low, &x_swap.detach()),
        );
        let dy = terms::adversarial_d_logits(
            &dnet.discriminator_logits(Domain::Normal, &y),
            &dnet.discriminator_logits(Domain::Normal, &y_swap.detach()),
        );
        let (vx, vy) = (finite("adv_d_x", scalar(&dx), step)?, finite("adv_d_y", scalar(&dy), step)?);
        let loss = dx.add(&dy);
        let grads = d_tape.backward(&loss);
        adam_step(
            &mut state.params,
            &mut state.opt_discriminator,
            &dis,
            &grads,
            &ParamGroup::DISCRIMINATOR,
            &ctx.hyper(),
        );
        (vx, vy)
    };

    // Generator objective against the updated discriminators.
    let dis = state.params.bind();
    let dnet = Network::new(arch, &dis);
    let rec_x = terms::l1(&x_rec, &x);
    let rec_y = terms::l1(&y_rec, &y);
    let con = terms::l1(&cx, &cy);
    let kl_x = terms::kl(&mu_x, &lv_x);
    let kl_y = terms::kl(&mu_y, &lv_y);
    let per_x = terms::perceptual(&ctx.extractor, &x, &y_swap);
    let per_y = terms::perceptual(&ctx.extractor, &y, &x_swap);
    let adv_g_x = terms::adversarial_g_logits(&dnet.discriminator_logits(Domain::Low, &x_swap));
    let adv_g_y = terms::adversarial_g_logits(&dnet.discriminator_logits(Domain::Normal, &y_swap));
    let cross_cycle = cfg.ablation.cross_cycle.then(|| {
        // Swap back: content of the swapped images with their own codes
        // must reproduce the inputs.
        let (mu_xs, _) = net.brightness(&x_swap);
        let (mu_ys, _) = net.brightness(&y_swap);
        let x_back = net.decode(Domain::Low, &net.content(&y_swap), &mu_xs);
        let y_back = net.decode(Domain::Normal, &net.content(&x_swap), &mu_ys);
        terms::l1(&x_back, &x).add(&terms::l1(&y_back, &y))
    });

    let report = {
        let mut r = LossReport {
            rec_x: finite("rec_x", scalar(&rec_x), step)?,
            rec_y: finite("rec_y", scalar(&rec_y), step)?,
            con: finite("con", scalar(&con), step)?,
            kl_x: finite("kl_x", scalar(&kl_x), step)?,
            kl_y: finite("kl_y", scalar(&kl_y), step)?,
            per_x: finite("per_x", scalar(&per_x), step)?,
            per_y: finite("per_y", scalar(&per_y), step)?,
            adv_g_x: finite("adv_g_x", scalar(&adv_g_x), step)?,
            adv_g_y: finite("adv_g_y", scalar(&adv_g_y), step)?,
            adv_d_x,
            adv_d_y,
            cross_cycle: match &cross_cycle {
                Some(cc) => finite("cross_cycle", scalar(cc), step)?,
                None => 0.0,
            },
            total: 0.0,
        };
        r.total = finite("total", total_loss(&r, &w)?, step)?;
        r
    };

    let mut objective = rec_x.add(&rec_y);
    for (weight, term) in [
        (w.content, &con),
        (w.kl, &kl_x),
        (w.kl, &kl_y),
        (w.perceptual, &per_x),
        (w.perceptual, &per_y),
        (w.adversarial, &adv_g_x),
        (w.adversarial, &adv_g_y),
    ] {
        if weight != 0.0 {
            objective = objective.add(&term.scale(weight));
        }
    }
    if let Some(cc) = &cross_cycle {
        objective = objective.add(cc);
    }
    let grads = tape.backward(&objective);
    adam_step(
        &mut state.params,
        &mut state.opt_generator,
        &gen,
        &grads,
        &ParamGroup::GENERATOR,
        &ctx.hyper(),
    );
    state.step += 1;
    Ok(report)
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir.join(format!("ckpt_{step:08}.cidn"))
}

/// Result of [`train`].
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub state: ModelState,
    /// Reports of the steps run by this call, in order.
    pub reports: Vec<LossReport>,
}

/// Runs steps until `cfg.train.max_steps`, starting from `resume` or a
/// fresh model. Checkpoints go to `cfg.train.out_dir` every
/// `checkpoint_interval` steps, plus one before the first step of a fresh
/// run and one after the last step; one metrics line is appended per step.
pub fn train(dataset: Arc<Dataset>, cfg: &RunConfig, resume: Option<ModelState>) -> Result<TrainOutcome> {
    let ctx = StepContext::new(cfg.clone())?;
    let spec = cfg.batch_spec();
    dataset.validate(&spec)?;
    let out_dir = &cfg.train.out_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut state = match resume {
        Some(s) => {
            if s.arch != cfg.model {
                log::warn!("checkpoint architecture overrides the configured one");
            }
            s
        }
        None => init_model(cfg),
    };
    let mut last = checkpoint_path(out_dir, state.step);
    if state.step == 0 {
        state.save(&last)?;
    }

    let metrics_path = out_dir.join(METRICS_FILE);
    let fresh_log = !metrics_path.exists();
    let mut log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    if fresh_log {
        writeln!(log_file, "{}", LossReport::HEADER).map_err(|e| Error::io(&metrics_path, e))?;
    }

    let start = state.step;
    let end = cfg.train.max_steps.max(start);
    let mut reports = Vec::with_capacity((end - start) as usize);
    let mut batches = Prefetcher::spawn(Arc::clone(&dataset), state.seed, start..end, spec, cfg.train.prefetch);
    while state.step < end {
        let batch = batches
            .next_batch()
            .ok_or_else(|| Error::InvalidArgument("batch producer stopped early".into()))??;
        let step = state.step;
        let report = train_step(&batch, &mut state, &ctx)?;
        writeln!(log_file, "{}", report.log_line(step)).map_err(|e| Error::io(&metrics_path, e))?;
        if step % 50 == 0 || state.step == end {
            log::info!(
                "step {step}: rec_x {:.4} rec_y {:.4} adv_d {:.4} total {:.4}",
                report.rec_x,
                report.rec_y,
                report.adv_d_x + report.adv_d_y,
                report.total
            );
        }
        reports.push(report);
        let interval = cfg.train.checkpoint_interval;
        if state.step == end || (interval > 0 && state.step % interval == 0) {
            last = checkpoint_path(out_dir, state.step);
            state.save(&last)?;
        }
    }
    Ok(TrainOutcome {
        checkpoint: last,
        state,
        reports,
    })
}
