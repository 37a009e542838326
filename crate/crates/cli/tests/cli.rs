use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dictattach(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dictattach"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(&dictattach(dir.path(), &["--help"]));
    for cmd in [
        "clean-dict",
        "split",
        "learn-bpe",
        "apply-bpe",
        "prepare",
        "train",
        "translate",
        "evaluate",
        "significance",
        "sweep",
        "gen-synthetic",
        "run",
    ] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn clean_dict_writes_canonical_tsv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cedict.txt"),
        "# header\n\
         三自 三自 [San1 zi4] /abbr. for 三自爱国教会, Three-Self Patriotic Movement/\n\
         broken line\n",
    )
    .unwrap();
    let out = dictattach(dir.path(), &["clean-dict", "--format", "cedict", "--input", "cedict.txt", "--output", "dict.tsv", "--report", "log.json"]);
    ok(&out);
    assert_eq!(fs::read_to_string(dir.path().join("dict.tsv")).unwrap(), "三自\tThree-Self Patriotic Movement\n");
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 1 lines"));
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("log.json")).unwrap()).unwrap();
    assert_eq!(log["skipped"].as_array().unwrap().len(), 1);

    fs::write(dir.path().join("de.tsv"), "(Aktien) zusammenlegen\tto merge (with)\n").unwrap();
    ok(&dictattach(dir.path(), &["clean-dict", "--format", "tsv", "--input", "de.tsv", "--output", "de.clean.tsv"]));
    assert_eq!(fs::read_to_string(dir.path().join("de.clean.tsv")).unwrap(), "zusammenlegen\tto merge ( with )\n");
}

#[test]
fn bpe_and_split_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src: String = (0..10).map(|i| format!("the lower newest widest {i}\n")).collect();
    let tgt: String = (0..10).map(|i| format!("les plus bas {i}\n")).collect();
    fs::write(dir.path().join("c.src"), &src).unwrap();
    fs::write(dir.path().join("c.tgt"), &tgt).unwrap();
    let out = ok(&dictattach(dir.path(), &["split", "--source", "c.src", "--target", "c.tgt", "--out-dir", "parts"]));
    assert_eq!(out.trim(), "8 / 1 / 1 lines");
    assert_eq!(fs::read_to_string(dir.path().join("parts/dev.tgt")).unwrap(), "les plus bas 8\n");

    ok(&dictattach(dir.path(), &["learn-bpe", "--source", "c.src", "--target", "c.tgt", "--ops", "20", "--output", "codes"]));
    assert_eq!(fs::read_to_string(dir.path().join("codes")).unwrap().lines().count(), 20);
    ok(&dictattach(dir.path(), &["apply-bpe", "--codes", "codes", "--input", "c.src", "--output", "c.bpe"]));
    assert!(fs::read_to_string(dir.path().join("c.bpe")).unwrap().contains("@@"));
    ok(&dictattach(dir.path(), &["apply-bpe", "--undo", "--input", "c.bpe", "--output", "c.back"]));
    assert_eq!(fs::read_to_string(dir.path().join("c.back")).unwrap(), src);
}

#[test]
fn evaluate_and_significance_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let refs: Vec<String> = (0..30).map(|i| format!("the cat number {i} sat on the warm mat today")).collect();
    let good = refs.clone();
    let bad: Vec<String> = (0..30).map(|i| format!("a dog number {i} lay under a cold table")).collect();
    fs::write(dir.path().join("ref"), refs.join("\n") + "\n").unwrap();
    fs::write(dir.path().join("good"), good.join("\n") + "\n").unwrap();
    fs::write(dir.path().join("bad"), bad.join("\n") + "\n").unwrap();

    let out = ok(&dictattach(dir.path(), &["evaluate", "--hyp", "good", "--ref", "ref", "--json", "bleu.json"]));
    assert!(out.starts_with("BLEU = 100.00"), "{out}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bleu.json")).unwrap()).unwrap();
    assert_eq!(report["score"].as_f64().unwrap(), 100.0);

    let sig = dictattach(dir.path(), &["significance", "--hyp-a", "good", "--hyp-b", "bad", "--ref", "ref", "--samples", "200"]);
    assert_eq!(sig.status.code(), Some(0));
    let same = dictattach(dir.path(), &["significance", "--hyp-a", "good", "--hyp-b", "good", "--ref", "ref", "--samples", "200"]);
    assert_eq!(same.status.code(), Some(1));
    let missing = dictattach(dir.path(), &["significance", "--hyp-a", "good", "--hyp-b", "nope", "--ref", "ref"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn synthetic_run_then_translate_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&dictattach(
        p,
        &[
            "gen-synthetic", "--out-dir", "task", "--train-pairs", "150", "--dev-pairs", "20", "--test-pairs", "20", "--common-types", "30",
            "--train-rare-types", "30", "--heldout-rare-types", "10",
        ],
    ));
    let out = ok(&dictattach(p, &["run", "--config", "task/experiment.cfg", "--output-dir", "run", "--set", "epochs=1", "--k", "inf"]));
    assert!(out.contains("attach: dev BLEU"), "{out}");
    for f in ["config.cfg", "best.ckpt", "vocab.tsv", "dev.hyp", "test.hyp", "result.json"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("run/result.json")).unwrap()).unwrap();
    assert_eq!(result["condition"], "attach");

    ok(&dictattach(
        p,
        &[
            "translate", "--checkpoint", "run/best.ckpt", "--vocab", "run/vocab.tsv", "--input", "run/dev.src.jsonl", "--output", "dev.out",
            "--beam", "1", "--attention-dir", "att",
        ],
    ));
    assert_eq!(fs::read_to_string(p.join("dev.out")).unwrap(), fs::read_to_string(p.join("run/dev.hyp")).unwrap());
    assert!(p.join("att/sent0.json").exists() && p.join("att/sent0.layer0.head0.svg").exists());

    fs::write(p.join("other.tsv"), "<pad>\t0\n<unk>\t0\n<s>\t0\n</s>\t0\nx\t1\n").unwrap();
    let mismatch = dictattach(
        p,
        &["translate", "--checkpoint", "run/best.ckpt", "--vocab", "other.tsv", "--input", "run/dev.src.jsonl", "--output", "x.out"],
    );
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("does not match"));
}

#[test]
fn bad_config_override_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dictattach(dir.path(), &["run", "--set", "no_such_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dictattach(dir.path(), &["run", "--set", "missing-equals"]);
    assert_eq!(out.status.code(), Some(2));
}
