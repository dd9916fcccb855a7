use facefuse::config::Config;
use facefuse::editor::{apply_edit, edit_spatial, InvertedFace};
use facefuse::generator::{Generator, ToyGenerator};
use facefuse::io::FlatArray;
use facefuse::pipeline::{train_desk, DeskTrainOptions, EditSpec, Pipeline, SpatialInput};
use facefuse::spatial::{pack_3dmm, Modality};
use facefuse::toy::{self, FaceAttributes};
use facefuse::Error;

fn threedmm_pipeline() -> Pipeline {
    let cfg = Config::default();
    let mut opts = DeskTrainOptions {
        modalities: vec![Modality::ThreeDmm],
        mapper_samples: 1000,
        ..DeskTrainOptions::default()
    };
    opts.mapper.epochs = 60;
    train_desk(&cfg.encoder, &cfg.generator, &opts, |_| {}).unwrap()
}

#[test]
fn text_edits_move_the_target_attribute_monotonically() {
    let p = threedmm_pipeline();
    let gen = ToyGenerator::new(64, 7).unwrap();
    for seed in 0..5u64 {
        let (_, w) = gen.sample_z_to_w(1000 + seed).unwrap();
        let attrs = gen.attributes(&w).unwrap();
        let src_img = gen.synthesize(&w).unwrap();
        let src = InvertedFace::invert(&src_img, p.inverter(), p.generator(), "toy").unwrap();
        let spec = EditSpec::Text {
            pivot: attrs.to_text(),
            target: format!("{}; blond hair", attrs.to_text()),
            spatial: SpatialInput::ThreeDmm(attrs.to_threedmm()),
        };
        let mut last = f64::NEG_INFINITY;
        for beta in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let (_, wp) = p.edit(&src, &spec, beta, None).unwrap();
            let tone = gen.attributes_plus(&wp).unwrap().values[toy::HAIR_TONE];
            assert!(tone > last, "seed {seed} beta {beta}: {tone} <= {last}");
            last = tone;
        }
        let (zero, _) = p.edit(&src, &spec, 0.0, None).unwrap();
        assert_eq!(zero.image, src_img.image);
    }
}

#[test]
fn spatial_edits_follow_the_target_geometry() {
    let p = threedmm_pipeline();
    let gen = ToyGenerator::new(64, 7).unwrap();
    let mapper = p.mapper(Modality::ThreeDmm).unwrap();
    let (_, w) = gen.sample_z_to_w(4242).unwrap();
    let attrs = gen.attributes(&w).unwrap();
    let src = InvertedFace::invert(&gen.synthesize(&w).unwrap(), p.inverter(), p.generator(), "toy").unwrap();
    let mut wide = attrs.clone();
    let k = toy::attribute_index("face_rx").unwrap();
    wide.values[k] = toy::ATTRIBUTES[k].hi;
    let s_piv = pack_3dmm(&attrs.to_threedmm()).unwrap();
    let s_tar = pack_3dmm(&wide.to_threedmm()).unwrap();
    let out = edit_spatial(mapper, p.encoder(), p.generator(), &src, None, &s_tar, &s_piv, 1.0).unwrap();
    let facefuse::generator::Provenance::Toy { latent } = out.provenance else {
        panic!("toy generator records latents");
    };
    let after = gen.attributes_plus(&latent).unwrap().values[k];
    assert!(after > attrs.values[k], "{after} <= {}", attrs.values[k]);
}

#[test]
fn external_images_need_a_latent_file() {
    let gen = ToyGenerator::new(64, 7).unwrap();
    let photo = facefuse::generator::GeneratedImage {
        image: FaceAttributes::default().render().0,
        provenance: facefuse::generator::Provenance::External,
    };
    let err = InvertedFace::invert(&photo, None, &gen, "photo").unwrap_err();
    assert!(matches!(err, Error::NoInverter(ref m) if m.contains("latent file")));
    let (_, w) = gen.sample_z_to_w(3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.ffar");
    FlatArray::new(vec![1, 64], w.values().to_vec())
        .unwrap()
        .save(&path, facefuse::io::DType::F32)
        .unwrap();
    let face = InvertedFace::load_latent(&path, &gen).unwrap();
    assert_eq!(face.wp_src.num_layers(), gen.num_layers());
    let dir_vec =
        facefuse::editor::EditDirection::new(vec![0.0; 64], facefuse::editor::DirectionSource::Text, "a", "b").unwrap();
    assert_eq!(apply_edit(&face.wp_src, &dir_vec, 3.0).unwrap(), face.wp_src);
}
