use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use facefuse::config::Config;
use facefuse::editor::InvertedFace;
use facefuse::embedding::JointEncoder;
use facefuse::evaluator::{evaluate, speed_bench, EvalItem, ToyFaceParser};
use facefuse::generator::{GeneratedImage, Provenance};
use facefuse::image::RgbImage;
use facefuse::io::{DType, FlatArray};
use facefuse::mapping::MapperConfig;
use facefuse::pipeline::{EditSpec, Pipeline, SpatialInput};
use facefuse::spatial::{Codec, CodecConfig, MaskImage, Modality, SketchImage, ThreeDmmParams};
use facefuse::toy;
use facefuse::trainer::{
    build_corpus, dump_corpus, load_corpus, mask_codec_accuracy, sketch_codec_accuracy, toy_samples, train_codec,
    train_mapper, CodecData, CodecTrainOptions, MapperTrainOptions, RunDir, SpatialSource,
};

#[derive(Parser)]
#[command(name = "facefuse", version, about = "Multimodal face generation and latent editing")]
struct Cli {
    /// TOML config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `model_dir` from the config.
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a mask or sketch autoencoder on toy data and add it to the model dir.
    TrainCodec(TrainCodec),
    /// Train a mapping network for one modality and add it to the model dir.
    TrainMapper(TrainMapper),
    /// Generate an image from text plus one spatial input, or a whole manifest.
    Generate(Generate),
    /// Edit a latent with a text pair or a spatial pair.
    Edit(Edit),
    /// Score generated images against a corpus manifest.
    Evaluate(Evaluate),
    /// Time text+spatial generation.
    Bench(Bench),
    /// Write a toy corpus (images, masks, sketches, 3DMM, latents, manifest).
    DumpCorpus(DumpCorpus),
    /// Run the HTTP service.
    Serve,
}

#[derive(Args)]
struct TrainCodec {
    #[arg(long)]
    modality: Modality,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 80)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainMapper {
    #[arg(long)]
    modality: Modality,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 12)]
    layers: usize,
    #[arg(long)]
    bn: bool,
    #[arg(long)]
    dropout: bool,
    /// Feed image embeddings directly instead of pseudo text embeddings.
    #[arg(long)]
    no_pteg: bool,
    #[arg(long, default_value_t = 10.0)]
    lambda_dir: f64,
    #[arg(long, default_value_t = 2)]
    seed: u64,
    /// Where `config.json` and `loss.csv` go; defaults to `<model_dir>/runs/mapper_<modality>`.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SpatialArgs {
    /// Mask as PNG (indexed or grayscale labels) or whitespace text grid.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Binary sketch PNG.
    #[arg(long)]
    sketch: Option<PathBuf>,
    /// 3DMM parameters as text (159 numbers).
    #[arg(long)]
    threedmm: Option<PathBuf>,
}

#[derive(Args)]
struct Generate {
    #[arg(long, required_unless_present = "manifest")]
    text: Option<String>,
    #[command(flatten)]
    spatial: SpatialArgs,
    /// Output PNG (single mode) or directory (manifest mode).
    #[arg(long)]
    out: PathBuf,
    /// Also write the predicted latent as an array file.
    #[arg(long)]
    latent_out: Option<PathBuf>,
    /// Generate `<id>.png` for every record of a corpus manifest, using its
    /// text and the spatial input of `--modality`.
    #[arg(long, conflicts_with = "text")]
    manifest: Option<PathBuf>,
    #[arg(long, default_value = "mask")]
    modality: Modality,
}

#[derive(Args)]
struct Edit {
    /// Source latent array (`L x D_w` or `D_w`).
    #[arg(long)]
    latent: Option<PathBuf>,
    /// Source image; needs an inversion adapter.
    #[arg(long, conflicts_with = "latent")]
    image: Option<PathBuf>,
    #[arg(long)]
    pivot: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Spatial context for text edits.
    #[command(flatten)]
    context: SpatialArgs,
    #[arg(long)]
    spatial_pivot: Option<PathBuf>,
    #[arg(long)]
    spatial_target: Option<PathBuf>,
    /// Modality of `--spatial-pivot/--spatial-target`.
    #[arg(long, default_value = "mask")]
    spatial_modality: Modality,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    latent_out: Option<PathBuf>,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    generated_dir: PathBuf,
    #[arg(long)]
    gt_manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Bench {
    #[arg(long, default_value_t = facefuse::evaluator::DEFAULT_BENCH_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value = "mask")]
    modality: Modality,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpCorpus {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn read_mask(path: &Path) -> Result<MaskImage> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mask = if bytes.starts_with(b"\x89PNG") {
        MaskImage::from_png(&bytes, toy::NUM_CLASSES)?
    } else {
        MaskImage::from_text_grid(
            std::str::from_utf8(&bytes).context("mask text is not utf-8")?,
            toy::NUM_CLASSES,
        )?
    };
    Ok(mask)
}

fn read_spatial(path: &Path, modality: Modality) -> Result<SpatialInput> {
    Ok(match modality {
        Modality::Mask => SpatialInput::Mask(read_mask(path)?),
        Modality::Sketch => SpatialInput::Sketch(SketchImage::from_png(
            &std::fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        )?),
        Modality::ThreeDmm => SpatialInput::ThreeDmm(ThreeDmmParams::from_text(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?),
    })
}

impl SpatialArgs {
    fn resolve(&self) -> Result<Option<SpatialInput>> {
        match (&self.mask, &self.sketch, &self.threedmm) {
            (None, None, None) => Ok(None),
            (Some(p), None, None) => read_spatial(p, Modality::Mask).map(Some),
            (None, Some(p), None) => read_spatial(p, Modality::Sketch).map(Some),
            (None, None, Some(p)) => read_spatial(p, Modality::ThreeDmm).map(Some),
            _ => bail!("give exactly one of --mask, --sketch, --threedmm"),
        }
    }
}

/// Existing model dir, or a fresh pipeline with the configured adapters.
fn open_or_new(cfg: &Config) -> Result<Pipeline> {
    if cfg.model_dir.join(facefuse::pipeline::MODEL_MANIFEST).exists() {
        Ok(Pipeline::load_configured(cfg)?)
    } else {
        Ok(Pipeline::from_config(cfg)?)
    }
}

fn open(cfg: &Config) -> Result<Pipeline> {
    Pipeline::load_configured(cfg).with_context(|| format!("loading model dir {}", cfg.model_dir.display()))
}

fn train_codec_cmd(cfg: &Config, a: &TrainCodec) -> Result<()> {
    let mut p = open_or_new(cfg)?;
    let samples = toy_samples(p.generator(), a.samples, a.seed)?;
    let opts = CodecTrainOptions {
        epochs: a.epochs,
        seed: a.seed,
        ..CodecTrainOptions::default()
    };
    let log = |e: &facefuse::trainer::EpochLog| log::info!("epoch {} loss {:.5}", e.epoch, e.train_loss);
    let codec = match a.modality {
        Modality::Mask => {
            let masks: Vec<&MaskImage> = samples.iter().map(|s| &s.mask).collect();
            let mut c = Codec::new(CodecConfig::desk_mask(toy::NUM_CLASSES), a.seed)?;
            train_codec(&mut c, CodecData::Masks(&masks), &opts, log)?;
            println!("mask reconstruction accuracy {:.2}%", mask_codec_accuracy(&c, &masks)?);
            c
        }
        Modality::Sketch => {
            let sketches: Vec<&SketchImage> = samples.iter().map(|s| &s.sketch).collect();
            let mut c = Codec::new(CodecConfig::desk_sketch(), a.seed)?;
            train_codec(&mut c, CodecData::Sketches(&sketches), &opts, log)?;
            println!(
                "sketch reconstruction accuracy {:.2}%",
                sketch_codec_accuracy(&c, &sketches)?
            );
            c
        }
        Modality::ThreeDmm => bail!("3DMM parameters are used directly; there is no codec to train"),
    };
    p.set_codec(codec)?;
    p.save(&cfg.model_dir)?;
    println!("saved to {}", cfg.model_dir.display());
    Ok(())
}

fn train_mapper_cmd(cfg: &Config, a: &TrainMapper) -> Result<()> {
    let mut p = open_or_new(cfg)?;
    let samples = toy_samples(p.generator(), a.samples, a.seed)?;
    let source = match a.modality {
        Modality::ThreeDmm => SpatialSource::ThreeDmm,
        m => {
            let codec = p
                .codec(m)
                .with_context(|| format!("no {m} codec in {}; run train-codec first", cfg.model_dir.display()))?;
            if m == Modality::Mask {
                SpatialSource::Mask(codec)
            } else {
                SpatialSource::Sketch(codec)
            }
        }
    };
    let pairs = build_corpus(&samples, p.encoder(), source)?;
    let mut mcfg = MapperConfig::desk(p.encoder().dim(), pairs[0].f_spatial.dim(), p.generator().latent_dim());
    mcfg.num_layers = a.layers;
    mcfg.use_bn = a.bn;
    mcfg.use_dropout = a.dropout;
    let opts = MapperTrainOptions {
        pteg: !a.no_pteg,
        epochs: a.epochs,
        seed: a.seed,
        weights: facefuse::trainer::LossWeights {
            lambda_dir: a.lambda_dir,
        },
        ..MapperTrainOptions::default()
    };
    let run_dir = a
        .run_dir
        .clone()
        .unwrap_or_else(|| cfg.model_dir.join("runs").join(format!("mapper_{}", a.modality)));
    let mut run = RunDir::create(
        &run_dir,
        &serde_json::json!({"mapper": mcfg, "train": opts, "samples": a.samples}),
    )?;
    let mut log_err = None;
    let report = train_mapper(&pairs, mcfg, &opts, |e| {
        log::info!("epoch {} train {:.5} val {:?}", e.epoch, e.train_loss, e.val_loss);
        if let Err(err) = run.log(e) {
            log_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    if let Some(last) = report.epochs.last() {
        println!("final train loss {:.5}, val loss {:?}", last.train_loss, last.val_loss);
    }
    report.mapper.save(run.checkpoint_path("mapper.ffmp"))?;
    p.set_mapper(a.modality, report.mapper)?;
    p.save(&cfg.model_dir)?;
    println!("saved to {}", cfg.model_dir.display());
    Ok(())
}

fn save_latent(path: &Path, dims: Vec<usize>, values: Vec<f64>) -> Result<()> {
    FlatArray::new(dims, values)?.save(path, DType::F64)?;
    Ok(())
}

fn generate_cmd(cfg: &Config, a: &Generate) -> Result<()> {
    let p = open(cfg)?;
    if let Some(manifest) = &a.manifest {
        std::fs::create_dir_all(&a.out)?;
        let samples = load_corpus(manifest)?;
        for s in &samples {
            let input = match a.modality {
                Modality::Mask => SpatialInput::Mask(s.mask.clone()),
                Modality::Sketch => SpatialInput::Sketch(s.sketch.clone()),
                Modality::ThreeDmm => SpatialInput::ThreeDmm(s.threedmm.clone()),
            };
            let (img, _) = p.generate(&s.text, &input)?;
            img.image.save_png(a.out.join(format!("{}.png", s.id)))?;
        }
        println!("wrote {} images to {}", samples.len(), a.out.display());
        return Ok(());
    }
    let text = a.text.as_deref().context("--text is required")?;
    let input = a
        .spatial
        .resolve()?
        .context("give one of --mask, --sketch, --threedmm")?;
    let (img, w) = p.generate(text, &input)?;
    img.image.save_png(&a.out)?;
    if let Some(path) = &a.latent_out {
        save_latent(path, vec![w.dim()], w.into_values())?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn edit_cmd(cfg: &Config, a: &Edit) -> Result<()> {
    let p = open(cfg)?;
    let hint = "pass --latent with a precomputed L x D_w latent file";
    let src = match (&a.latent, &a.image) {
        (Some(path), _) => InvertedFace::load_latent(path, p.generator())?,
        (None, Some(path)) => {
            let image = GeneratedImage {
                image: RgbImage::load_png(path)?,
                provenance: Provenance::External,
            };
            InvertedFace::invert(&image, p.inverter(), p.generator(), path.display().to_string())
                .with_context(|| hint.to_string())?
        }
        (None, None) => bail!("no source: {hint}"),
    };
    let spec = match (&a.target, &a.spatial_pivot, &a.spatial_target) {
        (Some(target), None, None) => EditSpec::Text {
            pivot: a.pivot.clone().unwrap_or_else(|| toy::DEFAULT_PIVOT.to_string()),
            target: target.clone(),
            spatial: a
                .context
                .resolve()?
                .context("text edits need a spatial context (--mask, --sketch or --threedmm)")?,
        },
        (None, Some(piv), Some(tar)) => EditSpec::Spatial {
            pivot: read_spatial(piv, a.spatial_modality)?,
            target: read_spatial(tar, a.spatial_modality)?,
            f_img: None,
        },
        _ => bail!("give either --target (text edit) or both --spatial-pivot and --spatial-target"),
    };
    let (img, wp) = p.edit(&src, &spec, a.beta, None)?;
    img.image.save_png(&a.out)?;
    if let Some(path) = &a.latent_out {
        save_latent(path, vec![wp.num_layers(), wp.dim()], wp.flatten())?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn evaluate_cmd(cfg: &Config, a: &Evaluate) -> Result<()> {
    let samples = load_corpus(&a.gt_manifest)?;
    let p = Pipeline::from_config(cfg)?;
    let generated: Vec<RgbImage> = samples
        .iter()
        .map(|s| {
            let path = a.generated_dir.join(format!("{}.png", s.id));
            RgbImage::load_png(&path).with_context(|| format!("reading {}", path.display()))
        })
        .collect::<Result<_>>()?;
    let items: Vec<EvalItem<'_>> = samples
        .iter()
        .zip(&generated)
        .map(|(s, g)| EvalItem {
            generated: g,
            text: &s.text,
            mask: &s.mask,
            real: &s.image,
        })
        .collect();
    let digest = serde_json::to_string(&(&cfg.encoder, &cfg.cmmd))?;
    let report = evaluate(
        &items,
        p.encoder() as &dyn JointEncoder,
        &ToyFaceParser,
        cfg.cmmd,
        digest,
    )?;
    log::info!("raw cmmd {}", report.cmmd_raw);
    std::fs::write(&a.out, serde_json::to_vec_pretty(&report)?)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn bench_cmd(cfg: &Config, a: &Bench) -> Result<()> {
    let p = open(cfg)?;
    let s = toy_samples(p.generator(), 1, 12345)?.remove(0);
    let input = match a.modality {
        Modality::Mask => SpatialInput::Mask(s.mask),
        Modality::Sketch => SpatialInput::Sketch(s.sketch),
        Modality::ThreeDmm => SpatialInput::ThreeDmm(s.threedmm),
    };
    let report = speed_bench(|| p.generate(&s.text, &input).map(|_| ()), a.runs, a.warmup)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        std::fs::write(out, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn dump_cmd(cfg: &Config, a: &DumpCorpus) -> Result<()> {
    let p = Pipeline::from_config(cfg)?;
    let samples = toy_samples(p.generator(), a.n, a.seed)?;
    let manifest = dump_corpus(&a.out, &samples)?;
    println!("wrote {} samples, manifest {}", samples.len(), manifest.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(dir) = cli.model_dir {
        cfg.model_dir = dir;
    }
    match &cli.cmd {
        Cmd::TrainCodec(a) => train_codec_cmd(&cfg, a),
        Cmd::TrainMapper(a) => train_mapper_cmd(&cfg, a),
        Cmd::Generate(a) => generate_cmd(&cfg, a),
        Cmd::Edit(a) => edit_cmd(&cfg, a),
        Cmd::Evaluate(a) => evaluate_cmd(&cfg, a),
        Cmd::Bench(a) => bench_cmd(&cfg, a),
        Cmd::DumpCorpus(a) => dump_cmd(&cfg, a),
        Cmd::Serve => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(facefuse_service::serve(cfg))?;
            Ok(())
        }
    }
}
