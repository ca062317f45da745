use std::io::ErrorKind;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use cidn_core::data::{
    load_pairs, simulate_misalignment, CorruptionRecipe, Dataset, Noise, Shift,
};
use cidn_core::metrics::{evaluate, image_alignment, Enhancer, GuidancePolicy, IdentityEnhancer, OracleEnhancer};
use cidn_core::rng::{derive_seed, tag};
use cidn_core::train::{train as run_training, RunConfig};
use cidn_core::{Error, ImageTensor, ModelState, Result};
use cidn_service::{AppState, Gallery, ServiceConfig};
use serde::Serialize;

use crate::{EnhanceArgs, EvalArgs, ServeArgs, SimulateArgs, Stub, TrainArgs};

/// Name of the reproducibility record written by `simulate`.
pub const SIMULATION_MANIFEST: &str = "simulation.json";

/// 1 for problems the caller can fix, 2 for everything else.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Checkpoint(_) | Error::NonFinite { .. } => 2,
        Error::Io { source, .. } => match source.kind() {
            ErrorKind::NotFound | ErrorKind::PermissionDenied | ErrorKind::AlreadyExists => 1,
            _ => 2,
        },
        _ => 1,
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let manifest = load_pairs(&cfg.data.root)?.with_recipe(cfg.data.recipe());
    if manifest.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no pairs in {}",
            cfg.data.root.display()
        )));
    }
    log::info!("{} training pairs from {}", manifest.len(), cfg.data.root.display());
    let dataset = Arc::new(Dataset::load(&manifest)?);
    let resume = args.resume.as_deref().map(ModelState::load).transpose()?;
    let outcome = run_training(dataset, &cfg, resume)?;
    println!("{}", outcome.checkpoint.display());
    Ok(())
}

pub fn enhance(args: EnhanceArgs) -> Result<()> {
    let model = ModelState::load(&args.checkpoint)?;
    let low = ImageTensor::load(&args.input)?;
    let guidance = ImageTensor::load(&args.guidance)?;
    let out = if args.pad {
        model.enhance_any(&low, &guidance)?
    } else {
        model.enhance(&low, &guidance)?
    };
    out.save_png(&args.output)?;
    println!("{:.6}", image_alignment(&out, &guidance)?);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let root = cfg.data.eval_root.as_ref().unwrap_or(&cfg.data.root);
    let manifest = load_pairs(root)?;
    let policy = match &args.guidance {
        Some(path) => GuidancePolicy::Fixed(ImageTensor::load(path)?),
        None => GuidancePolicy::Paired,
    };
    let model;
    let enhancer: &dyn Enhancer = match (args.stub, &args.checkpoint) {
        (Some(Stub::Oracle), _) => &OracleEnhancer,
        (Some(Stub::Identity), _) => &IdentityEnhancer,
        (None, Some(path)) => {
            model = ModelState::load(path)?;
            &model
        }
        (None, None) => unreachable!("clap requires --checkpoint without --stub"),
    };
    let report = evaluate(&manifest, enhancer, &policy)?;
    let report_path = args
        .report
        .unwrap_or_else(|| cfg.train.out_dir.join("eval.csv"));
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(&report_path, report.to_csv()).map_err(|e| Error::io(&report_path, e))?;
    eprint!("{}", report.pretty());
    println!("mean_psnr {:.4}", report.mean_psnr);
    println!("mean_ssim {:.4}", report.mean_ssim);
    println!("report {}", report_path.display());
    Ok(())
}

#[derive(Serialize)]
struct SimulatedPair {
    id: String,
    dx: i64,
    dy: i64,
    shift_seed: u64,
    noise_seed: u64,
}

#[derive(Serialize)]
struct SimulationRecord {
    seed: u64,
    recipe: CorruptionRecipe,
    pairs: Vec<SimulatedPair>,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let noise = match (args.gaussian, args.poisson) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidArgument(
                "--gaussian and --poisson are mutually exclusive".into(),
            ))
        }
        (Some(sigma), None) => Noise::Gaussian { sigma },
        (None, Some(lambda)) => Noise::Poisson { lambda },
        (None, None) => Noise::None,
    };
    let recipe = CorruptionRecipe {
        max_shift: args.shift,
        noise,
    };
    let manifest = load_pairs(&args.input)?;
    if manifest.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no pairs in {}",
            args.input.display()
        )));
    }
    for sub in ["low", "normal"] {
        let dir = args.output.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut record = SimulationRecord {
        seed: args.seed,
        recipe,
        pairs: Vec::with_capacity(manifest.len()),
    };
    for index in 0..manifest.len() {
        let pair = manifest.load_pair(index)?;
        let shift_seed = derive_seed(args.seed, &[tag::MISALIGN, index as u64]);
        let noise_seed = derive_seed(args.seed, &[tag::NOISE, index as u64]);
        let (normal, shift) = if recipe.max_shift > 0 {
            simulate_misalignment(&pair.normal, recipe.max_shift, shift_seed)?
        } else {
            (pair.normal, Shift::default())
        };
        let low = recipe.noise.apply(&pair.low, noise_seed)?;
        let file = format!("{}.png", pair.id);
        low.save_png(&args.output.join("low").join(&file))?;
        normal.save_png(&args.output.join("normal").join(&file))?;
        record.pairs.push(SimulatedPair {
            id: pair.id,
            dx: shift.dx,
            dy: shift.dy,
            shift_seed,
            noise_seed,
        });
    }
    let path = args.output.join(SIMULATION_MANIFEST);
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    println!("{} pairs written to {}", record.pairs.len(), args.output.display());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    if !args.checkpoint.is_file() {
        return Err(Error::io(
            &args.checkpoint,
            std::io::Error::new(ErrorKind::NotFound, "checkpoint file not found"),
        ));
    }
    let gallery = match &args.gallery {
        Some(dir) => Gallery::load_dir(dir)?,
        None => Gallery::bundled(),
    };
    log::info!("{} gallery images", gallery.len());
    let config = ServiceConfig {
        max_pixels: args.max_pixels,
        max_concurrent: args.max_concurrent,
        cors_origin: args.cors_origin,
        ..ServiceConfig::default()
    };
    let state = AppState::new(config, gallery);
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io(Path::new("<runtime>"), e))?;
    runtime
        .block_on(cidn_service::serve(addr, state, &args.checkpoint))
        .map_err(|e| Error::io(addr.to_string(), e))
}
