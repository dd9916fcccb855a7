//! A bound model set: adapters, spatial codecs and one mapper per modality.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{AdapterSpec, Config};
use crate::editor::{self, DirectionCache, DirectionKey, EditDirection, InvertedFace};
use crate::embedding::{EmbeddingVector, EncoderRegistry, JointEncoder};
use crate::error::{ensure_dim, Error, Result};
use crate::evaluator::{FaceParser, ToyFaceParser};
use crate::generator::{
    GeneratedImage, Generator, GeneratorRegistry, Inverter, LatentCode, LatentCodePlus, ToyInverter,
};
use crate::mapping::{Mapper, MapperConfig, Mode};
use crate::spatial::{pack_3dmm, Codec, CodecConfig, MaskImage, Modality, SketchImage, SpatialCode, ThreeDmmParams};
use crate::toy;
use crate::trainer::{
    build_corpus, toy_samples, train_codec, train_mapper, CodecData, CodecTrainOptions, MapperTrainOptions,
    SpatialSource,
};

/// One spatial conditioning input.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialInput {
    Mask(MaskImage),
    Sketch(SketchImage),
    ThreeDmm(ThreeDmmParams),
}

impl SpatialInput {
    pub fn modality(&self) -> Modality {
        match self {
            SpatialInput::Mask(_) => Modality::Mask,
            SpatialInput::Sketch(_) => Modality::Sketch,
            SpatialInput::ThreeDmm(_) => Modality::ThreeDmm,
        }
    }
}

/// What an edit is driven by.
#[derive(Debug, Clone)]
pub enum EditSpec {
    Text {
        pivot: String,
        target: String,
        spatial: SpatialInput,
    },
    Spatial {
        pivot: SpatialInput,
        target: SpatialInput,
        /// Defaults to the embedding of the source re-synthesis.
        f_img: Option<EmbeddingVector>,
    },
}

pub const MODEL_MANIFEST: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelManifest {
    encoder: AdapterSpec,
    generator: AdapterSpec,
    codecs: BTreeMap<String, String>,
    mappers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperInfo {
    pub modality: Modality,
    pub num_layers: usize,
    pub use_bn: bool,
    pub use_dropout: bool,
    pub digest: String,
}

/// One face-parsing class, for clients that paint masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskClass {
    pub id: u8,
    pub name: String,
    pub color: [u8; 3],
}

/// Model manifest as reported to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub encoder: String,
    pub generator: String,
    pub d_w: usize,
    pub d_emb: usize,
    pub num_style_layers: usize,
    pub mappers: Vec<MapperInfo>,
    pub codec_digests: BTreeMap<String, String>,
    pub mask_classes: Vec<MaskClass>,
}

pub struct Pipeline {
    encoder_spec: AdapterSpec,
    generator_spec: AdapterSpec,
    encoder: Arc<dyn JointEncoder>,
    generator: Arc<dyn Generator>,
    inverter: Option<Arc<dyn Inverter>>,
    parser: Option<Arc<dyn FaceParser>>,
    mask_codec: Option<Codec>,
    sketch_codec: Option<Codec>,
    mappers: BTreeMap<&'static str, Mapper>,
}

fn codec_digest(c: &Codec) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(c.config()).expect("config serializes"));
    for v in c.params() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Pipeline {
    /// Binds adapters by name; no codecs or mappers yet.
    pub fn new(encoder: &AdapterSpec, generator: &AdapterSpec) -> Result<Self> {
        let enc = EncoderRegistry::default().build(&encoder.name, encoder.dim, encoder.seed)?;
        let gen = GeneratorRegistry::default().build(&generator.name, generator.dim, generator.seed)?;
        let toy_world = gen.name() == "toy";
        Ok(Self {
            encoder_spec: encoder.clone(),
            generator_spec: generator.clone(),
            encoder: enc,
            generator: gen,
            inverter: toy_world.then(|| Arc::new(ToyInverter) as Arc<dyn Inverter>),
            parser: toy_world.then(|| Arc::new(ToyFaceParser) as Arc<dyn FaceParser>),
            mask_codec: None,
            sketch_codec: None,
            mappers: BTreeMap::new(),
        })
    }

    pub fn from_config(cfg: &Config) -> Result<Self> {
        Self::new(&cfg.encoder, &cfg.generator)
    }

    pub fn encoder(&self) -> &dyn JointEncoder {
        self.encoder.as_ref()
    }

    pub fn generator(&self) -> &dyn Generator {
        self.generator.as_ref()
    }

    pub fn inverter(&self) -> Option<&dyn Inverter> {
        self.inverter.as_deref()
    }

    pub fn set_inverter(&mut self, inverter: Option<Arc<dyn Inverter>>) {
        self.inverter = inverter;
    }

    pub fn parser(&self) -> Option<&dyn FaceParser> {
        self.parser.as_deref()
    }

    pub fn codec(&self, modality: Modality) -> Option<&Codec> {
        match modality {
            Modality::Mask => self.mask_codec.as_ref(),
            Modality::Sketch => self.sketch_codec.as_ref(),
            Modality::ThreeDmm => None,
        }
    }

    pub fn set_codec(&mut self, codec: Codec) -> Result<()> {
        if !codec.is_trained() {
            return Err(Error::Untrained);
        }
        match codec.modality() {
            Modality::Mask => self.mask_codec = Some(codec),
            Modality::Sketch => self.sketch_codec = Some(codec),
            Modality::ThreeDmm => return Err(Error::Config("3DMM parameters need no codec".into())),
        }
        Ok(())
    }

    pub fn mapper(&self, modality: Modality) -> Result<&Mapper> {
        self.mappers
            .get(modality.as_str())
            .ok_or_else(|| Error::Config(format!("no mapper loaded for modality `{modality}`")))
    }

    pub fn set_mapper(&mut self, modality: Modality, mapper: Mapper) -> Result<()> {
        let c = mapper.config();
        ensure_dim(self.encoder.dim(), c.emb_dim, "mapper embedding input")?;
        ensure_dim(self.generator.latent_dim(), c.out_dim, "mapper output")?;
        self.mappers.insert(modality.as_str(), mapper);
        Ok(())
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.mappers
            .keys()
            .map(|k| k.parse().expect("stored by name"))
            .collect()
    }

    pub fn is_ready(&self) -> bool {
        !self.mappers.is_empty()
    }

    pub fn spatial_code(&self, input: &SpatialInput) -> Result<SpatialCode> {
        let missing = |m: Modality| Error::Config(format!("no {m} codec loaded"));
        match input {
            SpatialInput::Mask(m) => self.mask_codec.as_ref().ok_or(missing(Modality::Mask))?.encode_mask(m),
            SpatialInput::Sketch(s) => self
                .sketch_codec
                .as_ref()
                .ok_or(missing(Modality::Sketch))?
                .encode_sketch(s),
            SpatialInput::ThreeDmm(p) => pack_3dmm(p),
        }
    }

    /// `ŵ = M(f_cond, f_spatial)` then synthesis.
    pub fn generate_from(&self, f_cond: &EmbeddingVector, code: &SpatialCode) -> Result<(GeneratedImage, LatentCode)> {
        let w = self.mapper(code.modality())?.map(f_cond, code, Mode::Eval)?;
        Ok((self.generator.synthesize(&w)?, w))
    }

    pub fn generate(&self, text: &str, spatial: &SpatialInput) -> Result<(GeneratedImage, LatentCode)> {
        let f = self.encoder.encode_text(text)?;
        self.generate_from(&f, &self.spatial_code(spatial)?)
    }

    /// Direction for `spec`, memoized in `cache` when given. The flag
    /// reports a cache hit.
    pub fn direction(
        &self,
        src: &InvertedFace,
        spec: &EditSpec,
        cache: Option<&DirectionCache>,
    ) -> Result<(EditDirection, bool)> {
        match spec {
            EditSpec::Text { pivot, target, spatial } => {
                let code = self.spatial_code(spatial)?;
                let mapper = self.mapper(code.modality())?;
                let compute = || editor::text_direction(mapper, self.encoder(), pivot, target, &code);
                match cache {
                    Some(c) => c.get_or_compute(DirectionKey::text(pivot, target, &code), compute),
                    None => Ok((compute()?, false)),
                }
            }
            EditSpec::Spatial { pivot, target, f_img } => {
                if pivot.modality() != target.modality() {
                    return Err(Error::ModalityMismatch {
                        expected: pivot.modality().as_str(),
                        actual: target.modality().as_str(),
                    });
                }
                let s_piv = self.spatial_code(pivot)?;
                let s_tar = self.spatial_code(target)?;
                let f_img = match f_img {
                    Some(f) => f.clone(),
                    None => self
                        .encoder
                        .encode_image(&self.generator.synthesize_plus(&src.wp_src)?.image)?,
                };
                let mapper = self.mapper(s_piv.modality())?;
                let compute = || editor::spatial_direction(mapper, &f_img, &s_tar, &s_piv);
                match cache {
                    Some(c) => c.get_or_compute(DirectionKey::spatial(&f_img, &s_tar, &s_piv), compute),
                    None => Ok((compute()?, false)),
                }
            }
        }
    }

    pub fn edit(
        &self,
        src: &InvertedFace,
        spec: &EditSpec,
        beta: f64,
        cache: Option<&DirectionCache>,
    ) -> Result<(GeneratedImage, LatentCodePlus)> {
        let (dir, _) = self.direction(src, spec, cache)?;
        let wp = editor::apply_edit(&src.wp_src, &dir, beta)?;
        Ok((self.generator.synthesize_plus(&wp)?, wp))
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            encoder: self.encoder.name().to_string(),
            generator: self.generator.name().to_string(),
            d_w: self.generator.latent_dim(),
            d_emb: self.encoder.dim(),
            num_style_layers: self.generator.num_layers(),
            mappers: self
                .mappers
                .iter()
                .map(|(k, m)| MapperInfo {
                    modality: k.parse().expect("stored by name"),
                    num_layers: m.config().num_layers,
                    use_bn: m.config().use_bn,
                    use_dropout: m.config().use_dropout,
                    digest: m.digest(),
                })
                .collect(),
            codec_digests: [&self.mask_codec, &self.sketch_codec]
                .into_iter()
                .flatten()
                .map(|c| (c.modality().to_string(), codec_digest(c)))
                .collect(),
            mask_classes: self.mask_classes(),
        }
    }

    /// Class names and display colours of the mask convention in use.
    pub fn mask_classes(&self) -> Vec<MaskClass> {
        let n = self
            .mask_codec
            .as_ref()
            .map_or(toy::NUM_CLASSES, |c| c.config().num_classes);
        (0..n)
            .map(|i| {
                let toy_class = self.generator.name() == "toy" && i < toy::NUM_CLASSES;
                MaskClass {
                    id: i as u8,
                    name: if toy_class { toy::CLASS_NAMES[i].to_string() } else { format!("class_{i}") },
                    color: if toy_class {
                        toy::CLASS_PALETTE[i]
                    } else {
                        let v = (i * 255 / n.max(2).saturating_sub(1)).min(255) as u8;
                        [v, v, v]
                    },
                }
            })
            .collect()
    }

    /// Writes `model.json` plus one checkpoint per codec and mapper.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut codecs = BTreeMap::new();
        for c in [&self.mask_codec, &self.sketch_codec].into_iter().flatten() {
            let file = format!("codec_{}.ffcd", c.modality());
            c.save(dir.join(&file))?;
            codecs.insert(c.modality().to_string(), file);
        }
        let mut mappers = BTreeMap::new();
        for (k, m) in &self.mappers {
            let file = format!("mapper_{k}.ffmp");
            m.save(dir.join(&file))?;
            mappers.insert(k.to_string(), file);
        }
        let manifest = ModelManifest {
            encoder: self.encoder_spec.clone(),
            generator: self.generator_spec.clone(),
            codecs,
            mappers,
        };
        std::fs::write(dir.join(MODEL_MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    /// Loads a model directory. Adapters come from the directory's manifest
    /// since the checkpoints are only meaningful with them.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: ModelManifest = serde_json::from_slice(&std::fs::read(dir.join(MODEL_MANIFEST))?)?;
        let mut p = Self::new(&manifest.encoder, &manifest.generator)?;
        for file in manifest.codecs.values() {
            p.set_codec(Codec::load(dir.join(file))?)?;
        }
        for (k, file) in &manifest.mappers {
            p.set_mapper(k.parse()?, Mapper::load(dir.join(file))?)?;
        }
        Ok(p)
    }

    /// Loads the model directory named by `cfg`, rejecting adapter mismatches.
    pub fn load_configured(cfg: &Config) -> Result<Self> {
        let p = Self::load(&cfg.model_dir)?;
        if p.encoder_spec != cfg.encoder || p.generator_spec != cfg.generator {
            return Err(Error::Config(format!(
                "model in {} was trained with different adapters than the config selects",
                cfg.model_dir.display()
            )));
        }
        Ok(p)
    }
}

/// Settings for training a complete toy-world model set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskTrainOptions {
    pub modalities: Vec<Modality>,
    pub codec_samples: usize,
    pub mask_codec: CodecTrainOptions,
    pub sketch_codec: CodecTrainOptions,
    pub mapper_samples: usize,
    pub mapper_layers: usize,
    pub use_bn: bool,
    pub use_dropout: bool,
    pub mapper: MapperTrainOptions,
    pub seed: u64,
}

impl Default for DeskTrainOptions {
    fn default() -> Self {
        Self {
            modalities: vec![Modality::Mask, Modality::Sketch, Modality::ThreeDmm],
            codec_samples: 100,
            mask_codec: CodecTrainOptions {
                epochs: 80,
                ..CodecTrainOptions::default()
            },
            sketch_codec: CodecTrainOptions {
                epochs: 120,
                ..CodecTrainOptions::default()
            },
            mapper_samples: 1000,
            mapper_layers: 12,
            use_bn: false,
            use_dropout: false,
            mapper: MapperTrainOptions {
                epochs: 60,
                ..MapperTrainOptions::default()
            },
            seed: 1,
        }
    }
}

/// Trains codecs and mappers for every requested modality on toy data.
pub fn train_desk(
    encoder: &AdapterSpec,
    generator: &AdapterSpec,
    opts: &DeskTrainOptions,
    mut progress: impl FnMut(&str),
) -> Result<Pipeline> {
    let mut p = Pipeline::new(encoder, generator)?;
    let codec_set = toy_samples(p.generator(), opts.codec_samples, opts.seed)?;
    let masks: Vec<&MaskImage> = codec_set.iter().map(|s| &s.mask).collect();
    let sketches: Vec<&SketchImage> = codec_set.iter().map(|s| &s.sketch).collect();
    for &m in &opts.modalities {
        let (cfg, data, topts) = match m {
            Modality::Mask => (
                CodecConfig::desk_mask(toy::NUM_CLASSES),
                CodecData::Masks(&masks),
                &opts.mask_codec,
            ),
            Modality::Sketch => (
                CodecConfig::desk_sketch(),
                CodecData::Sketches(&sketches),
                &opts.sketch_codec,
            ),
            Modality::ThreeDmm => continue,
        };
        let mut codec = Codec::new(cfg, opts.seed)?;
        train_codec(&mut codec, data, topts, |e| {
            progress(&format!("{m} codec epoch {} loss {:.5}", e.epoch, e.train_loss))
        })?;
        p.set_codec(codec)?;
    }
    let samples = toy_samples(p.generator(), opts.mapper_samples, opts.seed.wrapping_add(1))?;
    for &m in &opts.modalities {
        let source = match m {
            Modality::Mask => SpatialSource::Mask(p.codec(m).expect("trained above")),
            Modality::Sketch => SpatialSource::Sketch(p.codec(m).expect("trained above")),
            Modality::ThreeDmm => SpatialSource::ThreeDmm,
        };
        let pairs = build_corpus(&samples, p.encoder(), source)?;
        let mut cfg = MapperConfig::desk(p.encoder().dim(), pairs[0].f_spatial.dim(), p.generator().latent_dim());
        cfg.num_layers = opts.mapper_layers;
        cfg.use_bn = opts.use_bn;
        cfg.use_dropout = opts.use_dropout;
        let report = train_mapper(&pairs, cfg, &opts.mapper, |e| {
            progress(&format!(
                "{m} mapper epoch {} train {:.5} val {}",
                e.epoch,
                e.train_loss,
                e.val_loss.map(|v| format!("{v:.5}")).unwrap_or_default()
            ))
        })?;
        p.set_mapper(m, report.mapper)?;
    }
    Ok(p)
}
