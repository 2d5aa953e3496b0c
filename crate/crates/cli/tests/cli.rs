use std::path::Path;
use std::process::{Command, Output};

const ENV_KEYS: [&str; 10] = [
    "PLRS_CONFIG",
    "PLRS_KNOT_METHOD",
    "PLRS_CRITERION",
    "PLRS_MIN_OBS_MODEL",
    "PLRS_MIN_OBS_TEST",
    "PLRS_ALPHA",
    "PLRS_FDR_THRESHOLD",
    "PLRS_MC_DRAWS",
    "PLRS_SEED",
    "PLRS_THREADS",
];

fn plrs(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_plrs"));
    for k in ENV_KEYS {
        cmd.env_remove(k);
    }
    cmd.args(args).envs(env.iter().copied()).output().expect("binary runs")
}

fn corpus(dir: &Path, genes: usize) {
    let out = plrs(
        &["simulate", "corpus", "--genes", &genes.to_string(), "--samples", "30", "--seed", "4", "--out", dir.to_str().unwrap()],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn inputs(dir: &Path) -> Vec<String> {
    ["expression", "segmented", "calls"]
        .iter()
        .flat_map(|f| [format!("--{f}"), dir.join(format!("{f}.tsv")).display().to_string()])
        .collect()
}

fn screen(dir: &Path, out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut args = vec!["screen".to_string(), "--out-dir".into(), out.display().to_string(), "--mc-draws".into(), "1000".into()];
    args.extend(inputs(dir));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    plrs(&refs, env)
}

#[test]
fn corpus_screens_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 12);
    let out = screen(tmp.path(), &tmp.path().join("res"), &[], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(tmp.path().join("res/screen.tsv")).unwrap();
    assert_eq!(rows.lines().count(), 13);
    assert!(rows.starts_with("gene_id\t"));
    assert!(tmp.path().join("res/rejects.tsv").exists());
    let summary = std::fs::read_to_string(tmp.path().join("res/summary.tsv")).unwrap();
    assert!(summary.contains("# consistent\ttrue"));
}

#[test]
fn reruns_are_identical_and_seed_env_is_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 8);
    let read = |d: &str| std::fs::read_to_string(tmp.path().join(d).join("screen.tsv")).unwrap();
    assert!(screen(tmp.path(), &tmp.path().join("a"), &["--seed", "9"], &[]).status.success());
    assert!(screen(tmp.path(), &tmp.path().join("b"), &["--seed", "9"], &[]).status.success());
    assert!(screen(tmp.path(), &tmp.path().join("c"), &[], &[("PLRS_SEED", "9")]).status.success());
    assert!(screen(tmp.path(), &tmp.path().join("d"), &[], &[("PLRS_SEED", "10")]).status.success());
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
    assert_ne!(read("a"), read("d"));
}

#[test]
fn missing_file_exits_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = screen(tmp.path(), &tmp.path().join("res"), &[], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sample_mismatch_exits_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 4);
    let calls = tmp.path().join("calls.tsv");
    let text = std::fs::read_to_string(&calls).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[0] = lines[0].replacen("sample001", "sampleXYZ", 1);
    std::fs::write(&calls, lines.join("\n") + "\n").unwrap();
    let out = screen(tmp.path(), &tmp.path().join("res"), &[], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_option_value_exits_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 2);
    let out = screen(tmp.path(), &tmp.path().join("res"), &["--alpha", "1.5"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bands_and_fit_for_one_gene() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path(), 3);
    let prefix = tmp.path().join("gene0001_band");
    let mut args = vec!["bands".to_string(), "--gene".into(), "gene0001".into(), "--grid-size".into(), "25".into()];
    args.extend(["--out".into(), prefix.display().to_string(), "--mc-draws".into(), "1000".into()]);
    args.extend(inputs(tmp.path()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = plrs(&refs, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = std::fs::read_to_string(prefix.with_extension("tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 26);
    assert!(std::fs::read_to_string(prefix.with_extension("svg")).unwrap().starts_with("<svg"));

    let mut fit = vec!["fit".to_string(), "--gene".into(), "gene0002".into(), "--mc-draws".into(), "1000".into()];
    fit.extend(inputs(tmp.path()));
    let refs: Vec<&str> = fit.iter().map(String::as_str).collect();
    let out = plrs(&refs, &[]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("theta0"));

    let mut missing = vec!["fit".to_string(), "--gene".into(), "nope".into()];
    missing.extend(inputs(tmp.path()));
    let refs: Vec<&str> = missing.iter().map(String::as_str).collect();
    assert_eq!(plrs(&refs, &[]).status.code(), Some(2));
}

#[test]
fn shape_study_writes_table() {
    let out = plrs(&["simulate", "shapes", "--shape", "linear", "--effect", "0.5,1", "--reps", "10", "--mc-draws", "1000"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() >= 3);
}
