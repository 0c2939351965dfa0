use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repalign::embedding_store::{load_container_with_meta, load_csv};
use repalign::{bucketize, stratum_delta, MetricKind};
use serde_json::Value;

fn repalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repalign"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, kind: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(kind);
    let mut args = vec!["synth", "--kind", kind, "--seed", "42", "--out-dir", p(&out)];
    args.extend_from_slice(extra);
    let res = repalign(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    out
}

fn write_random_csv(path: &Path, n: usize, d: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("id,score");
    for j in 0..d {
        text.push_str(&format!(",e{j}"));
    }
    text.push('\n');
    for i in 0..n {
        let score = if i % 7 == 0 {
            String::new()
        } else {
            format!("{:.2}", rng.random_range(1.0..10.0))
        };
        text.push_str(&format!("img{i},{score}"));
        for _ in 0..d {
            text.push_str(&format!(",{}", rng.random_range(-2.0f32..2.0)));
        }
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn convert_valid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    fs::write(&csv, "id,score,e0,e1\na,6.1,1,2\nb,3.9,3,4\nc,,5,6\n").unwrap();
    let out = dir.path().join("x.raln");
    assert_eq!(code(&repalign(&["convert", "--csv", p(&csv), "--out", p(&out)])), 0);
    let (set, metas) = load_container_with_meta(&out).unwrap();
    assert_eq!(set.len(), 3);
    assert_eq!(set.source_tag(), "x");
    assert_eq!(metas.unwrap()[2].score, None);
}

#[test]
fn convert_ragged_csv_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "id,score,e0,e1\na,6.1,1,2\nb,3.9,3\n").unwrap();
    let res = repalign(&["convert", "--csv", p(&csv), "--out", p(&dir.path().join("o.raln"))]);
    assert_eq!(code(&res), 2);
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("line 3"), "{msg}");
}

/// Converting and re-loading gives the same analysis as the CSV itself.
#[test]
fn convert_then_analyse_equals_direct() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let csv = dir.path().join(format!("r{seed}.csv"));
        write_random_csv(&csv, 40, 5, seed);
        let out = dir.path().join(format!("r{seed}.raln"));
        assert_eq!(code(&repalign(&["convert", "--csv", p(&csv), "--out", p(&out)])), 0);
        let (direct, direct_meta) = load_csv(&csv).unwrap();
        let (loaded, loaded_meta) = load_container_with_meta(&out).unwrap();
        assert_eq!(direct, loaded);
        let loaded_meta = loaded_meta.unwrap();
        assert_eq!(direct_meta, loaded_meta);
        let labels = bucketize(&direct_meta, 4.5, 5.5).unwrap();
        for metric in [MetricKind::Cosine, MetricKind::Euclidean] {
            assert_eq!(
                stratum_delta(&direct, &labels, metric, None).unwrap(),
                stratum_delta(&loaded, &bucketize(&loaded_meta, 4.5, 5.5).unwrap(), metric, None).unwrap()
            );
        }
    }
}

#[test]
fn intra_planted_delta_positive() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "planted-strata", &["--n", "300", "--center-norm", "4"]);
    for metric in ["cosine", "euclidean"] {
        let report = dir.path().join(format!("intra-{metric}.json"));
        let res = repalign(&["intra", "--emb", p(&fx.join("a.raln")), "--metric", metric, "--out", p(&report)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let json = read_json(&report);
        assert!(json["results"]["summary"]["delta"].as_f64().unwrap() > 0.0);
        assert_eq!(json["params"]["strata"]["lo"], 4.5);
        assert_eq!(json["results"]["pair_sampling"], "exhaustive");
    }
}

#[test]
fn intra_identical_distribution_delta_near_zero() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(
        dir.path(),
        "planted-strata",
        &["--n", "600", "--noise-aesthetic", "0.5", "--noise-ambiguous", "0.5", "--noise-unaesthetic", "0.5"],
    );
    let report = dir.path().join("r.json");
    let res = repalign(&["intra", "--emb", p(&fx.join("a.raln")), "--metric", "cosine", "--out", p(&report)]);
    assert_eq!(code(&res), 0);
    let delta = read_json(&report)["results"]["summary"]["delta"].as_f64().unwrap();
    assert!(delta.abs() < 0.02, "{delta}");
}

#[test]
fn intra_subsampling_requires_seed_and_reports_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "planted-strata", &["--n", "120"]);
    let report = dir.path().join("r.json");
    let emb = fx.join("a.raln");
    let res = repalign(&["intra", "--emb", p(&emb), "--max-pairs", "100", "--out", p(&report)]);
    assert_eq!(code(&res), 4);
    let res = repalign(&["intra", "--emb", p(&emb), "--max-pairs", "100", "--seed", "3", "--out", p(&report)]);
    assert_eq!(code(&res), 0);
    let json = read_json(&report);
    assert_eq!(json["results"]["summary"]["pair_counts"], serde_json::json!([100, 100]));
    assert_eq!(json["results"]["summary"]["subsample_seed"], 3);
    let delta = &json["results"]["intervals"]["delta"];
    assert!(delta[0].as_f64().unwrap() <= delta[1].as_f64().unwrap());
}

#[test]
fn intra_missing_metadata_and_undersized() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "rotation", &["--n", "20", "--d", "4"]);
    let report = dir.path().join("r.json");
    let missing = dir.path().join("nope.json");
    let res = repalign(&["intra", "--emb", p(&fx.join("a.raln")), "--meta", p(&missing), "--out", p(&report)]);
    assert_eq!(code(&res), 2);
    // Rotation fixtures are unscored, so both strata are empty.
    let res = repalign(&["intra", "--emb", p(&fx.join("a.raln")), "--out", p(&report)]);
    assert_eq!(code(&res), 3);
}

#[test]
fn align_rotation_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "rotation", &["--n", "256", "--d", "64"]);
    let report = dir.path().join("r.json");
    let res = repalign(&[
        "align", "--a", p(&fx.join("a.raln")), "--b", p(&fx.join("b.raln")),
        "--metric-a", "cosine", "--metric-b", "cosine", "--seed", "1", "--out", p(&report),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let json = read_json(&report);
    assert_eq!(json["results"]["alignment"]["overall_mean"], 1.0);
    assert!(json["results"]["aesthetic_vs_unaesthetic"].is_null());
    assert_eq!(json["results"]["bootstrap"], "score-level");
}

#[test]
fn align_independent_near_null() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "independent", &["--n", "500"]);
    let report = dir.path().join("r.json");
    let res = repalign(&["align", "--a", p(&fx.join("a.raln")), "--b", p(&fx.join("b.raln")), "--seed", "1", "--out", p(&report)]);
    assert_eq!(code(&res), 0);
    let json = read_json(&report);
    let overall = json["results"]["alignment"]["overall_mean"].as_f64().unwrap();
    let null = json["results"]["null_baseline"].as_f64().unwrap();
    assert!((null - 10.0 / 499.0).abs() < 1e-12);
    assert!((overall - null).abs() < 0.02, "{overall}");
}

#[test]
fn align_planted_strata_separate() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "planted-strata", &[]);
    let report = dir.path().join("r.json");
    let res = repalign(&["align", "--a", p(&fx.join("a.raln")), "--b", p(&fx.join("b.raln")), "--seed", "7", "--out", p(&report)]);
    assert_eq!(code(&res), 0);
    let json = read_json(&report);
    let strata = &json["results"]["strata"];
    assert!(strata["aesthetic"]["mean"].as_f64().unwrap() > strata["unaesthetic"]["mean"].as_f64().unwrap());
    assert_eq!(strata["aesthetic"]["count"], 200);
    assert!(json["results"]["aesthetic_vs_unaesthetic"]["p_value"].as_f64().unwrap() < 0.05);
    assert_eq!(
        json["results"]["alignment"]["p_value"],
        json["results"]["aesthetic_vs_unaesthetic"]["p_value"]
    );
}

#[test]
fn align_contract_errors() {
    let dir = tempfile::tempdir().unwrap();
    let x = synth(dir.path(), "rotation", &["--n", "20", "--d", "4"]);
    let report = dir.path().join("r.json");
    let a = x.join("a.raln");
    let res = repalign(&["align", "--a", p(&a), "--b", p(&x.join("b.raln")), "--k", "20", "--seed", "1", "--out", p(&report)]);
    assert_eq!(code(&res), 4);
    let res = repalign(&["align", "--a", p(&a), "--b", p(&x.join("b.raln")), "--k", "0", "--seed", "1", "--out", p(&report)]);
    assert_eq!(code(&res), 4);

    let other = dir.path().join("other");
    let res = repalign(&["synth", "--kind", "rotation", "--n", "21", "--d", "4", "--seed", "1", "--out-dir", p(&other)]);
    assert_eq!(code(&res), 0);
    let res = repalign(&["align", "--a", p(&a), "--b", p(&other.join("b.raln")), "--seed", "1", "--out", p(&report)]);
    assert_eq!(code(&res), 3);
    let res = repalign(&["align", "--a", p(&a), "--b", p(&x.join("b.raln")), "--out", p(&report)]);
    assert_eq!(code(&res), 4, "seed is mandatory");
}

#[test]
fn layers_sweep_peaks_mid_depth() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "layer-sweep", &["--n", "300", "--schedule", "2.0,1.0,0.3,1.0,2.0"]);
    let report = dir.path().join("curve.json");
    let res = repalign(&[
        "layers", "--stack-dir", p(&fx.join("layers")), "--ref", p(&fx.join("reference.raln")),
        "--metric-stack", "euclidean", "--metric-ref", "euclidean", "--out", p(&report),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let json = read_json(&report);
    assert_eq!(json["results"]["argmax_layer"], "layer_02");
    let csv = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("layer_name,depth_fraction,stratum,alignment"));
    assert!(lines.next().unwrap().starts_with("layer_00,0,all,"));
    assert!(csv.contains("layer_02,0.5,all,"));
    assert!(csv.contains("layer_04,1,all,"));
}

#[test]
fn layers_single_layer_equal_to_reference() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path(), "rotation", &["--n", "50", "--d", "4"]);
    let stack = dir.path().join("stack");
    fs::create_dir(&stack).unwrap();
    for suffix in ["", ".meta.json"] {
        fs::copy(fx.join(format!("a.raln{suffix}")), stack.join(format!("layer_00.raln{suffix}"))).unwrap();
    }
    let report = dir.path().join("c.json");
    let csv = dir.path().join("c.csv");
    let res = repalign(&[
        "layers", "--stack-dir", p(&stack), "--ref", p(&fx.join("a.raln")), "--k", "5",
        "--metric-stack", "cosine", "--metric-ref", "cosine", "--out", p(&report), "--csv", p(&csv),
    ]);
    assert_eq!(code(&res), 0);
    let json = read_json(&report);
    let points = json["results"]["curve"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0]["depth_fraction"], 0.0);
    assert_eq!(points[0]["overall"], 1.0);
}

#[test]
fn layers_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let fx = synth(dir.path(), "rotation", &["--n", "20", "--d", "4"]);
    let report = dir.path().join("c.json");
    let res = repalign(&["layers", "--stack-dir", p(&empty), "--ref", p(&fx.join("a.raln")), "--k", "3", "--out", p(&report)]);
    assert_eq!(code(&res), 2);

    let other = dir.path().join("other");
    assert_eq!(code(&repalign(&["synth", "--kind", "rotation", "--n", "22", "--d", "4", "--seed", "1", "--out-dir", p(&other)])), 0);
    let mixed = dir.path().join("mixed");
    fs::create_dir(&mixed).unwrap();
    for (src, dst) in [(fx.join("a.raln"), "layer_00"), (other.join("a.raln"), "layer_01")] {
        fs::copy(&src, mixed.join(format!("{dst}.raln"))).unwrap();
        fs::copy(format!("{}.meta.json", src.display()), mixed.join(format!("{dst}.raln.meta.json"))).unwrap();
    }
    let res = repalign(&["layers", "--stack-dir", p(&mixed), "--ref", p(&fx.join("a.raln")), "--k", "3", "--out", p(&report)]);
    assert_eq!(code(&res), 3);
}

#[test]
fn synth_fixtures_load_and_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["rotation", "planted-strata", "layer-sweep", "noise-pair", "independent"] {
        let first = dir.path().join(format!("{kind}-1"));
        let second = dir.path().join(format!("{kind}-2"));
        for out in [&first, &second] {
            let res = repalign(&["synth", "--kind", kind, "--n", "40", "--d", "6", "--seed", "5", "--out-dir", p(out)]);
            assert_eq!(code(&res), 0);
        }
        let files = walk(&first);
        assert!(!files.is_empty());
        for file in files {
            let rel = file.strip_prefix(&first).unwrap();
            assert_eq!(fs::read(&file).unwrap(), fs::read(second.join(rel)).unwrap(), "{}", rel.display());
            if file.extension().is_some_and(|e| e == "raln") {
                assert_eq!(repalign::load_container(&file).unwrap().len(), 40);
            }
        }
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

#[test]
fn synth_invalid_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let res = repalign(&["synth", "--kind", "noise-pair", "--n", "3", "--seed", "1", "--out-dir", p(&out)]);
    assert_eq!(code(&res), 2);
    let res = repalign(&["synth", "--kind", "noise-pair", "--noise=-1", "--seed", "1", "--out-dir", p(&out)]);
    assert_eq!(code(&res), 2);
}

#[test]
fn version_mentions_schema() {
    let res = repalign(&["--version"]);
    assert_eq!(code(&res), 0);
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("report schema 1"), "{text}");
}
