use std::path::Path;
use std::process::{Command, Output};

use textstrat_cli::config::{parse_config, Config, ConfigError, KEYS};
use textstrat_cli::persist::MANIFEST_FILE;
use textstrat_core::corpus::BUNDLED_MANUAL;

const TINY: [&str; 6] = [
    "--rollouts_per_step",
    "2",
    "--rollout_depth",
    "2",
    "--game_steps",
    "2",
];

fn textstrat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_textstrat"))
        .args(args)
        .env_remove("TEXTSTRAT_CONFIG")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# created_unix"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn empty_file_gives_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.cfg", "");
    assert_eq!(parse_config(Some(&p), &[]).unwrap(), Config::default());
}

#[test]
fn overrides_win_over_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.cfg", "epsilon = 0.2\n");
    assert_eq!(parse_config(Some(&p), &[]).unwrap().search.epsilon, 0.2);
    let c = parse_config(Some(&p), &["epsilon=0.3".into()]).unwrap();
    assert_eq!(c.search.epsilon, 0.3);
}

#[test]
fn type_errors_and_unknown_keys_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.cfg", "epsilon = two\n");
    let err = parse_config(Some(&p), &[]).unwrap_err();
    assert!(matches!(&err, ConfigError::Type { key, .. } if key == "epsilon"));
    assert!(err.to_string().contains("epsilon"));
    let p = write(dir.path(), "d.cfg", "epsilonn = 0.1\n");
    assert_eq!(
        parse_config(Some(&p), &[]),
        Err(ConfigError::UnknownKey("epsilonn".into()))
    );
}

#[test]
fn command_line_key_flag_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "epsilon = 0.2\n");
    let out = dir.path().join("o");
    let mut args = vec![
        "--config",
        cfg.to_str().unwrap(),
        "--epsilon",
        "0.3",
        "--out",
        out.to_str().unwrap(),
        "--variant",
        "game_only_linear",
    ];
    args.extend(TINY);
    args.push("play");
    let o = textstrat(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap();
    assert!(manifest.lines().any(|l| l == "epsilon = 0.3"));
}

#[test]
fn help_lists_every_key_with_default() {
    let o = textstrat(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let d = Config::default();
    for (k, _) in KEYS {
        let line = text
            .lines()
            .find(|l| l.trim_start().starts_with(&format!("{k} ")))
            .unwrap_or_else(|| panic!("{k} missing from --help"));
        assert!(line.contains(&format!("[default: {}]", d.get(k).unwrap())), "{line}");
    }
}

#[test]
fn unknown_subcommand_fails_with_usage() {
    let o = textstrat(&["conquer"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn corpus_validate_bundled_manual() {
    let o = textstrat(&["corpus", "validate"]);
    assert!(o.status.success());
}

#[test]
fn corpus_validate_rejects_broken_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.jsonl", "not a corpus\n");
    let o = textstrat(&["corpus", "validate", p.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn gradcheck_passes() {
    let o = textstrat(&["gradcheck", "--instances", "100"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn gradcheck_fails_under_impossible_tolerance() {
    let o = textstrat(&["gradcheck", "--instances", "5", "--tolerance", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn matrix_writes_one_row_per_arm_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let mut args = vec![
        "--out",
        out.to_str().unwrap(),
        "--variants",
        "full,game_only_linear",
        "--seeds",
        "1..10",
    ];
    args.extend(TINY);
    args.push("matrix");
    let o = textstrat(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 21);
}

#[test]
fn rerun_is_identical_except_timestamp_and_outdir_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join("nested").join(name);
        let mut args = vec!["--out", out.to_str().unwrap(), "--seed", "3"];
        args.extend(TINY);
        args.push("play");
        let o = textstrat(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["runs.csv", "rollouts.csv", "norms.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let ma = std::fs::read_to_string(a.join(MANIFEST_FILE)).unwrap();
    let mb = std::fs::read_to_string(b.join(MANIFEST_FILE)).unwrap();
    assert_eq!(
        without_timestamp(&ma).replace("/a", "/x"),
        without_timestamp(&mb).replace("/b", "/x")
    );
}

#[test]
fn manifest_reruns_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let mut args = vec!["--out", first.to_str().unwrap(), "--seed", "4"];
    args.extend(TINY);
    args.push("play");
    assert!(textstrat(&args).status.success());
    let manifest = first.join(MANIFEST_FILE);
    let second = dir.path().join("second");
    let o = textstrat(&[
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
        "play",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["runs.csv", "rollouts.csv"] {
        assert_eq!(
            std::fs::read(first.join(f)).unwrap(),
            std::fs::read(second.join(f)).unwrap()
        );
    }
}

fn corpus_checksum(manual: &Path, out: &Path) -> String {
    let mut args = vec![
        "--manual_path",
        manual.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--variant",
        "game_only_linear",
    ];
    args.extend(TINY);
    args.push("play");
    let o = textstrat(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out.join(MANIFEST_FILE))
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix("# corpus_sha256 = ").map(String::from))
        .unwrap()
}

#[test]
fn manifest_checksum_tracks_corpus_file() {
    let dir = tempfile::tempdir().unwrap();
    let manual = write(dir.path(), "manual.jsonl", BUNDLED_MANUAL);
    let a = corpus_checksum(&manual, &dir.path().join("a"));
    let b = corpus_checksum(&manual, &dir.path().join("b"));
    assert_eq!(a, b);
    let mut lines: Vec<&str> = BUNDLED_MANUAL.lines().collect();
    lines.pop();
    write(dir.path(), "manual.jsonl", &(lines.join("\n") + "\n"));
    let c = corpus_checksum(&manual, &dir.path().join("c"));
    assert_ne!(a, c);
}

#[test]
fn config_path_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "rollouts_per_step = 0\n");
    let o = Command::new(env!("CARGO_BIN_EXE_textstrat"))
        .args(["--variant", "game_only_linear", "play"])
        .env("TEXTSTRAT_CONFIG", &cfg)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success(), "zero roll-outs from the env config must be rejected");
}

#[test]
fn report_associations_runs() {
    let mut args = vec!["--seed", "1"];
    args.extend(TINY);
    args.extend(["report", "associations", "--words", "build,zzz", "--top-k", "3"]);
    let o = textstrat(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("build:") && text.contains("zzz:"));
}
