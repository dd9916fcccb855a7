use facefuse::embedding::{cosine, EmbeddingVector, ToyJointEncoder};
use facefuse::evaluator::{clip_score, cmmd, cmmd_embeddings, CmmdConfig};
use facefuse::generator::{Generator, ToyGenerator};
use facefuse::mapping::{batch_matrix, Mapper, MapperConfig};
use facefuse::spatial::Modality;
use facefuse::toy;
use facefuse::trainer::{
    batch_loss_and_grad, build_corpus, corpus_digest, toy_sample, toy_samples, LossWeights, SpatialSource, Terms,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Direct double loop over the full kernel matrices.
fn brute_force_mmd(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64, scale: f64) -> f64 {
    let k = |a: &Vec<f64>, b: &Vec<f64>| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut kxx = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            if i != j {
                kxx += k(&x[i], &x[j]);
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if i != j {
                kyy += k(&y[i], &y[j]);
            }
        }
    }
    let mut kxy = 0.0;
    for a in x {
        for b in y {
            kxy += k(a, b);
        }
    }
    scale * (kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n))
}

#[test]
fn cmmd_matches_brute_force_on_five_elements() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..20 {
        let d = 4 + trial % 5;
        let x: Vec<Vec<f64>> = (0..5).map(|_| random_unit(&mut rng, d)).collect();
        let y: Vec<Vec<f64>> = (0..5).map(|_| random_unit(&mut rng, d)).collect();
        for cfg in [CmmdConfig::default(), CmmdConfig { sigma: 0.7, scale: 1.0 }] {
            let got = cmmd_embeddings(&x, &y, cfg).unwrap().raw;
            let want = brute_force_mmd(&x, &y, cfg.sigma, cfg.scale);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }
}

#[test]
fn cmmd_separates_disjoint_attribute_ranges() {
    let gen = ToyGenerator::new(64, 7).unwrap();
    let enc = ToyJointEncoder::new(64, 3).unwrap();
    let samples = toy_samples(&gen, 900, 21).unwrap();
    let tone = |s: &&facefuse::trainer::ToySample| gen.attributes(&s.w).unwrap().values[toy::HAIR_TONE];
    let dark: Vec<_> = samples
        .iter()
        .filter(|s| tone(s) < 0.5)
        .map(|s| s.image.clone())
        .collect();
    let light: Vec<_> = samples
        .iter()
        .filter(|s| tone(s) >= 0.5)
        .map(|s| s.image.clone())
        .collect();
    assert!(
        dark.len() >= 400 && light.len() >= 200,
        "{} {}",
        dark.len(),
        light.len()
    );
    let cfg = CmmdConfig::default();
    let same = cmmd(&dark[..200], &dark[200..400], &enc, cfg).unwrap();
    let apart = cmmd(&dark[..200], &light[..200], &enc, cfg).unwrap();
    assert!(same.raw < apart.raw, "{same:?} {apart:?}");
}

#[test]
fn toy_encoder_aligns_images_with_their_text() {
    let gen = ToyGenerator::new(64, 7).unwrap();
    let enc = ToyJointEncoder::new(64, 3).unwrap();
    let samples = toy_samples(&gen, 50, 4).unwrap();
    let mut worse = 0;
    for (i, s) in samples.iter().enumerate() {
        let matched = clip_score(&s.image, &s.text, &enc).unwrap();
        assert!(matched >= 99.0, "{matched}");
        let other = clip_score(&s.image, &samples[(i + 1) % samples.len()].text, &enc).unwrap();
        if other >= matched {
            worse += 1;
        }
        assert!((-100.0..=100.0).contains(&other));
    }
    assert_eq!(worse, 0);
}

#[test]
fn cosine_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = EmbeddingVector::unit(random_unit(&mut rng, 16)).unwrap();
    let b = EmbeddingVector::unit(random_unit(&mut rng, 16)).unwrap();
    assert_eq!(cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
}

fn loss_at(mapper: &Mapper, x: &ndarray::Array2<f64>, t: &ndarray::Array2<f64>, terms: Terms, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, _) = mapper.forward_train(x, &mut rng).unwrap();
    batch_loss_and_grad(t, &y, LossWeights::default(), terms).unwrap().0
}

#[test]
fn each_loss_term_gradient_matches_central_differences() {
    let mut cfg = MapperConfig::desk(6, 5, 4);
    cfg.hidden_dim = 12;
    cfg.use_bn = true;
    cfg.use_dropout = true;
    let mut mapper = Mapper::new(cfg, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..11).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let targets: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let x = batch_matrix(&rows).unwrap();
    let t = batch_matrix(&targets).unwrap();
    for terms in [Terms::AbsOnly, Terms::DirOnly] {
        let mut r = ChaCha8Rng::seed_from_u64(77);
        let (y, tape) = mapper.forward_train(&x, &mut r).unwrap();
        let (_, dy) = batch_loss_and_grad(&t, &y, LossWeights::default(), terms).unwrap();
        let grad = mapper.backward(&tape, &dy);
        let n = mapper.num_params();
        let mut checked = 0;
        let mut idx = 0usize;
        while checked < 12 && idx < n {
            let i = idx;
            idx += 37;
            if grad[i].abs() < 1e-6 {
                continue;
            }
            let h = 1e-6;
            let orig = mapper.params()[i];
            mapper.params_mut()[i] = orig + h;
            let lp = loss_at(&mapper, &x, &t, terms, 77);
            mapper.params_mut()[i] = orig - h;
            let lm = loss_at(&mapper, &x, &t, terms, 77);
            mapper.params_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs());
            assert!(rel < 1e-4, "{terms:?} param {i}: fd {fd} analytic {}", grad[i]);
            checked += 1;
        }
        assert!(checked >= 10, "{terms:?}: only {checked} parameters checked");
    }
}

#[test]
fn corpus_is_deterministic_and_index_addressable() {
    let gen = ToyGenerator::new(64, 7).unwrap();
    let enc = ToyJointEncoder::new(64, 3).unwrap();
    let a = toy_samples(&gen, 12, 8).unwrap();
    let b = toy_samples(&gen, 12, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(toy_sample(&gen, 8, 7).unwrap(), a[7]);
    let pa = build_corpus(&a, &enc, SpatialSource::ThreeDmm).unwrap();
    let pb = build_corpus(&b, &enc, SpatialSource::ThreeDmm).unwrap();
    assert_eq!(corpus_digest(&pa), corpus_digest(&pb));
    assert_ne!(corpus_digest(&pa), corpus_digest(&pa[1..]));
    assert!(pa.iter().all(|p| p.f_spatial.modality() == Modality::ThreeDmm));
}

#[test]
fn toy_parser_recovers_render_masks() {
    let gen = ToyGenerator::new(64, 7).unwrap();
    for s in toy_samples(&gen, 20, 30).unwrap() {
        let attrs = gen.attributes(&s.w).unwrap();
        let (img, mask) = attrs.render();
        assert_eq!(img, s.image);
        assert_eq!(toy::parse_image(&img).unwrap(), mask);
        assert!(mask.labels().iter().all(|&l| (l as usize) < toy::NUM_CLASSES));
    }
}

/// Rank of a symmetric matrix by Gaussian elimination with partial pivoting.
fn numerical_rank(mut m: Vec<Vec<f64>>, tol: f64) -> usize {
    let n = m.len();
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut rank = 0;
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())) else {
            break;
        };
        if m[p][col].abs() <= tol * scale {
            continue;
        }
        m.swap(row, p);
        for r in (row + 1)..n {
            let f = m[r][col] / m[row][col];
            for c in col..n {
                m[r][c] -= f * m[row][c];
            }
        }
        row += 1;
        rank += 1;
    }
    rank
}

#[test]
fn toy_latents_span_every_attribute_direction() {
    let gen = ToyGenerator::new(64, 7).unwrap();
    let d = gen.latent_dim();
    let n = 10_000;
    let mut mean = vec![0.0; d];
    let ws: Vec<Vec<f64>> = (0..n as u64)
        .map(|s| gen.sample_z_to_w(s).unwrap().1.into_values())
        .collect();
    for w in &ws {
        for (m, v) in mean.iter_mut().zip(w) {
            *m += v / n as f64;
        }
    }
    // Covariance of the attribute-carrying coordinates.
    let k = toy::NUM_ATTRIBUTES;
    let mut cov = vec![vec![0.0; k]; k];
    for w in &ws {
        for i in 0..k {
            for j in 0..k {
                cov[i][j] += (w[i] - mean[i]) * (w[j] - mean[j]) / (n as f64 - 1.0);
            }
        }
    }
    for (i, m) in mean.iter().enumerate().take(k) {
        assert!(m.abs() < 0.1, "coordinate {i} mean {m}");
        assert!((cov[i][i] - 1.0).abs() < 0.1, "coordinate {i} variance {}", cov[i][i]);
    }
    assert_eq!(numerical_rank(cov, 1e-6), k);
}
