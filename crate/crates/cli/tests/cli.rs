use std::path::Path;
use std::process::{Command, Output};

use facefuse::trainer::{load_corpus, MANIFEST_FILE};

fn facefuse(model_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facefuse"))
        .arg("--model-dir")
        .arg(model_dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("running facefuse")
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {stdout}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn dump_corpus_writes_a_loadable_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("corpus");
    ok(facefuse(
        tmp.path(),
        &["dump-corpus", "--n", "3", "--seed", "4", "--out", p(&out)],
    ));
    let samples = load_corpus(out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(samples.len(), 3);
    assert!(!samples[0].text.is_empty());
}

#[test]
fn train_generate_edit_evaluate_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    let corpus = tmp.path().join("corpus");

    // Nothing is trained yet.
    let out = facefuse(
        &model,
        &["generate", "--text", "a face", "--threedmm", "x", "--out", "y.png"],
    );
    assert!(!out.status.success());

    ok(facefuse(
        &model,
        &["train-codec", "--modality", "mask", "--samples", "24", "--epochs", "4"],
    ));
    let err = facefuse(&model, &["train-codec", "--modality", "threedmm"]);
    assert!(!err.status.success());
    assert!(String::from_utf8_lossy(&err.stderr).contains("no codec"));

    let run_dir = tmp.path().join("mapper_run");
    ok(facefuse(
        &model,
        &[
            "train-mapper",
            "--modality",
            "mask",
            "--samples",
            "64",
            "--epochs",
            "3",
            "--layers",
            "4",
            "--run-dir",
            p(&run_dir),
        ],
    ));
    let csv = std::fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(run_dir.join("mapper.ffmp").exists());
    assert!(model.join("model.json").exists());

    ok(facefuse(
        &model,
        &["dump-corpus", "--n", "3", "--seed", "9", "--out", p(&corpus)],
    ));
    let samples = load_corpus(corpus.join(MANIFEST_FILE)).unwrap();
    let mask_txt = tmp.path().join("mask.txt");
    std::fs::write(&mask_txt, samples[0].mask.to_text_grid()).unwrap();

    let img = tmp.path().join("gen.png");
    let latent = tmp.path().join("gen.ffar");
    ok(facefuse(
        &model,
        &[
            "generate",
            "--text",
            &samples[0].text,
            "--mask",
            p(&mask_txt),
            "--out",
            p(&img),
            "--latent-out",
            p(&latent),
        ],
    ));
    let first = std::fs::read(&img).unwrap();
    ok(facefuse(
        &model,
        &[
            "generate",
            "--text",
            &samples[0].text,
            "--mask",
            p(&mask_txt),
            "--out",
            p(&img),
        ],
    ));
    assert_eq!(first, std::fs::read(&img).unwrap(), "generation is deterministic");
    assert_eq!(facefuse::io::FlatArray::load(&latent).unwrap().dims, vec![64]);

    // Both spatial inputs at once is rejected.
    let out = facefuse(
        &model,
        &[
            "generate",
            "--text",
            "a face",
            "--mask",
            p(&mask_txt),
            "--threedmm",
            p(&mask_txt),
            "--out",
            p(&img),
        ],
    );
    assert!(!out.status.success());

    let edited = tmp.path().join("edit.png");
    let wp = tmp.path().join("edit.ffar");
    ok(facefuse(
        &model,
        &[
            "edit",
            "--latent",
            p(&latent),
            "--pivot",
            &samples[0].text,
            "--target",
            "blond hair",
            "--mask",
            p(&mask_txt),
            "--beta",
            "0",
            "--out",
            p(&edited),
            "--latent-out",
            p(&wp),
        ],
    ));
    assert_eq!(first, std::fs::read(&edited).unwrap(), "beta 0 reproduces the source");
    assert_eq!(facefuse::io::FlatArray::load(&wp).unwrap().dims, vec![4, 64]);

    let mask2 = tmp.path().join("mask2.png");
    std::fs::write(&mask2, samples[1].mask.to_png(&facefuse::toy::CLASS_PALETTE).unwrap()).unwrap();
    ok(facefuse(
        &model,
        &[
            "edit",
            "--latent",
            p(&wp),
            "--spatial-pivot",
            p(&mask_txt),
            "--spatial-target",
            p(&mask2),
            "--out",
            p(&edited),
        ],
    ));

    let out = facefuse(
        &model,
        &[
            "edit",
            "--image",
            p(&img),
            "--target",
            "blond hair",
            "--mask",
            p(&mask_txt),
            "--out",
            p(&edited),
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--latent"));

    let gen_dir = tmp.path().join("generated");
    ok(facefuse(
        &model,
        &[
            "generate",
            "--manifest",
            p(&corpus.join(MANIFEST_FILE)),
            "--out",
            p(&gen_dir),
        ],
    ));
    for s in &samples {
        assert!(gen_dir.join(format!("{}.png", s.id)).exists());
    }
    let report = tmp.path().join("report.json");
    ok(facefuse(
        &model,
        &[
            "evaluate",
            "--generated-dir",
            p(&gen_dir),
            "--gt-manifest",
            p(&corpus.join(MANIFEST_FILE)),
            "--out",
            p(&report),
        ],
    ));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["n_samples"], 3);
    for key in ["clip_score_pct", "mask_accuracy_pct", "cmmd"] {
        assert!(r[key].as_f64().unwrap().is_finite(), "{key}");
    }

    let bench = ok(facefuse(&model, &["bench", "--runs", "3", "--warmup", "1"]));
    let b: serde_json::Value = serde_json::from_str(&bench).unwrap();
    assert_eq!(b["runs"], 3);
    assert!(b["mean_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn threedmm_mapper_needs_no_codec() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    ok(facefuse(
        &model,
        &[
            "train-mapper",
            "--modality",
            "threedmm",
            "--samples",
            "40",
            "--epochs",
            "2",
            "--layers",
            "4",
        ],
    ));
    assert!(model.join("runs/mapper_threedmm/loss.csv").exists());
    let corpus = tmp.path().join("corpus");
    ok(facefuse(&model, &["dump-corpus", "--n", "1", "--out", p(&corpus)]));
    let s = &load_corpus(corpus.join(MANIFEST_FILE)).unwrap()[0];
    let params = tmp.path().join("p.txt");
    std::fs::write(&params, s.threedmm.to_text().unwrap()).unwrap();
    let img = tmp.path().join("out.png");
    ok(facefuse(
        &model,
        &[
            "generate",
            "--text",
            &s.text,
            "--threedmm",
            p(&params),
            "--out",
            p(&img),
        ],
    ));
    assert!(facefuse::image::RgbImage::load_png(&img).is_ok());
}

fn http_get(port: u16, path: &str) -> Option<String> {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut out = String::new();
    s.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_reads_config_and_port_override() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("model");
    ok(facefuse(&model, &["train-mapper", "--modality", "threedmm", "--samples", "40", "--epochs", "1", "--layers", "4"]));
    let config = tmp.path().join("facefuse.toml");
    std::fs::write(
        &config,
        format!(
            "model_dir = {:?}\n[server]\nport = 1\nruns_dir = {:?}\n",
            p(&model),
            p(&tmp.path().join("runs"))
        ),
    )
    .unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_facefuse"))
        .args(["--config", p(&config), "serve"])
        .env("FACEFUSE_PORT", port.to_string())
        .env("RUST_LOG", "warn")
        .spawn()
        .unwrap();
    let mut models = None;
    for _ in 0..100 {
        if let Some(r) = http_get(port, "/health") {
            if r.contains("\"ok\"") {
                models = http_get(port, "/models");
                break;
            }
        }
        std::thread::sleep(std::time::Duration::from_millis(100));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let models = models.expect("service never became healthy");
    assert!(models.starts_with("HTTP/1.1 200"), "{models}");
    assert!(models.contains("\"threedmm\""), "{models}");
}
