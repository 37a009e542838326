//! End-to-end properties of the experiment pipeline on a small synthetic task.

use std::path::Path;

use dictattach::attach::AttachedSentence;
use dictattach::experiment::{gen_synthetic_task, prepare, train_model, Condition, ExperimentConfig, PreparedData, SyntheticSpec};

fn small_task(dir: &Path, train_pairs: usize) -> ExperimentConfig {
    let spec = SyntheticSpec {
        train_pairs,
        dev_pairs: 60,
        test_pairs: 60,
        common_types: 60,
        train_rare_types: 150,
        heldout_rare_types: 30,
        ..SyntheticSpec::default()
    };
    gen_synthetic_task(&spec).unwrap().write(dir).unwrap();
    ExperimentConfig::from_file(&dir.join("experiment.cfg")).unwrap()
}

fn prepared(cfg: &ExperimentConfig, condition: Condition, segmentation: &str) -> PreparedData {
    let mut cfg = cfg.clone();
    cfg.condition = condition;
    cfg.set("segmentation", segmentation).unwrap();
    cfg.set("bpe_ops", "200").unwrap();
    prepare(&cfg).unwrap()
}

fn bases(sents: &[AttachedSentence]) -> Vec<&[String]> {
    sents.iter().map(|s| s.tokens.as_slice()).collect()
}

#[test]
fn fuse_and_attach_differ_only_in_attachments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 400);
    for segmentation in ["word", "bpe"] {
        let fuse = prepared(&cfg, Condition::Fuse, segmentation);
        let attach = prepared(&cfg, Condition::Attach, segmentation);
        assert_eq!(fuse.vocab, attach.vocab);
        assert_eq!(fuse.train_target, attach.train_target);
        for (f, a) in [
            (&fuse.train_source, &attach.train_source),
            (&fuse.dev_source, &attach.dev_source),
            (&fuse.test_source, &attach.test_source),
        ] {
            assert_eq!(bases(f), bases(a));
            assert!(f.iter().all(|s| s.attachments.is_empty()));
        }
        assert!(attach.attachment_count() > 0, "{segmentation}");
    }
}

#[test]
fn append_adds_one_pair_per_dictionary_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 400);
    let entries = dictattach::dict::Dictionary::read_tsv(cfg.dictionary.as_ref().unwrap()).unwrap().len();
    let baseline = prepared(&cfg, Condition::Baseline, "word");
    let append = prepared(&cfg, Condition::Append, "word");
    let n = baseline.train_source.len();
    assert_eq!(append.train_source.len(), n + entries);
    assert_eq!(append.train_target.len(), n + entries);
    assert_eq!(&append.train_source[..n], &baseline.train_source[..]);
    assert_eq!(&append.train_target[..n], &baseline.train_target[..]);
    assert_eq!(append.dev_source, baseline.dev_source);
    assert_eq!(append.test_reference, baseline.test_reference);
}

#[test]
fn prepared_data_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_task(dir.path(), 200);
    let data = prepared(&cfg, Condition::Attach, "bpe");
    let out = dir.path().join("prepared");
    data.write(&out).unwrap();
    assert_eq!(PreparedData::read(&out).unwrap(), data);
}

#[test]
fn training_loss_falls_over_the_first_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_task(dir.path(), 1500);
    cfg.training.epochs = 5;
    let data = prepare(&cfg).unwrap();
    let (_, report) = train_model(&cfg, &data, None).unwrap();
    let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 5);
    let rises = losses.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(rises <= 1, "{losses:?}");
}
