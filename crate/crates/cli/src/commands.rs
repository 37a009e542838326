use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use dictattach::attach::{read_jsonl, AttachedSentence};
use dictattach::dict::{clean_cedict, clean_tsv_dictionary, dict_stats, parse_cedict, CedictCleanOptions, TsvCleanOptions};
use dictattach::eval::{bleu, bootstrap_significance, BootstrapOptions, Casing};
use dictattach::experiment::{
    gen_synthetic_task, parse_thresholds, prepare, run_experiment, sweep_csv, sweep_threshold, train_model, ExperimentConfig,
    PreparedData, SweepSpec, SyntheticSpec,
};
use dictattach::model::{checkpoint, cross_attention, decode, AttentionRecord, DecodeOptions};
use dictattach::textprep::{
    apply_bpe, learn_joint_bpe, read_sentences, split_corpus, undo_bpe, write_sentences, BpeModel, ParallelCorpus, Sentence,
    Vocabulary,
};
use dictattach::encoding::SourceLayout;
use dictattach::Model32;

use crate::{Command, ConfigArgs, DictFormat};

pub fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::CleanDict {
            format,
            input,
            output,
            no_resolve_refs,
            max_ref_depth,
            pretokenized,
            report,
        } => clean_dict(format, &input, &output, !no_resolve_refs, max_ref_depth, pretokenized, report.as_deref())?,
        Command::Split {
            source,
            target,
            out_dir,
            fractions,
        } => split(&source, &target, &out_dir, &fractions)?,
        Command::LearnBpe { source, target, ops, output } => {
            let corpus = ParallelCorpus::read(&source, &target)?;
            let model = learn_joint_bpe(&corpus.source, &corpus.target, ops);
            model.write(&output)?;
            println!("learned {} merges", model.len());
        }
        Command::ApplyBpe { codes, input, output, undo } => {
            let sentences = read_sentences(&input)?;
            let out: Vec<Sentence> = if undo {
                sentences.iter().map(undo_bpe).collect()
            } else {
                let codes = codes.context("--codes is required unless --undo is given")?;
                let model = BpeModel::read(&codes)?;
                sentences.iter().map(|s| apply_bpe(s, &model)).collect()
            };
            write_sentences(&output, &out)?;
        }
        Command::Prepare { config, out_dir } => {
            let cfg = load_config(&config)?;
            let dir = out_dir.unwrap_or_else(|| cfg.output_dir.clone());
            let data = prepare(&cfg)?;
            data.write(&dir)?;
            println!(
                "prepared {} training pairs ({} attachments), vocabulary {}",
                data.train_source.len(),
                data.attachment_count(),
                data.vocab.len()
            );
        }
        Command::Train { config, data, checkpoint: path } => {
            let cfg = load_config(&config)?;
            let prepared = PreparedData::read(&data)?;
            let (model, report) = train_model(&cfg, &prepared, path.parent())?;
            checkpoint::save(
                &path,
                &model,
                &prepared.vocab.content_hash(),
                serde_json::json!({ "epoch": report.best_epoch }),
            )?;
            let report_path = path.with_extension("train.json");
            fs::write(&report_path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", report_path.display()))?;
            match (report.best_epoch, report.best_dev_score) {
                (Some(e), Some(s)) => println!("best epoch {e}, dev BLEU {s:.2}"),
                _ => println!("no training epochs run"),
            }
        }
        Command::Translate {
            checkpoint: ckpt,
            vocab,
            input,
            output,
            plain,
            beam,
            attention_dir,
        } => translate(&ckpt, &vocab, &input, &output, plain, beam, attention_dir.as_deref())?,
        Command::Evaluate {
            hyp,
            reference,
            case_sensitive,
            json,
        } => {
            let h = read_lines(&hyp)?;
            let r = read_lines(&reference)?;
            let report = bleu(&h, &r, casing(case_sensitive))?;
            println!("{report}");
            if let Some(p) = json {
                write_file(&p, &serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::Significance {
            hyp_a,
            hyp_b,
            reference,
            samples,
            level,
            seed,
            case_sensitive,
            json,
        } => {
            let opts = BootstrapOptions {
                samples,
                level,
                seed,
                casing: casing(case_sensitive),
            };
            let result = bootstrap_significance(&read_lines(&hyp_a)?, &read_lines(&hyp_b)?, &read_lines(&reference)?, opts)?;
            println!("{result}");
            if let Some(p) = json {
                write_file(&p, &serde_json::to_string_pretty(&result)?)?;
            }
            return Ok(if result.significant { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Sweep { config, thresholds } => {
            let spec = SweepSpec {
                thresholds: parse_thresholds(&thresholds)?,
                base: load_config(&config)?,
            };
            let rows = sweep_threshold(&spec)?;
            print!("{}", sweep_csv(&rows));
        }
        Command::GenSynthetic {
            out_dir,
            train_pairs,
            dev_pairs,
            test_pairs,
            common_types,
            train_rare_types,
            heldout_rare_types,
            max_train_count,
            rare_fraction,
            seed,
        } => {
            let spec = SyntheticSpec {
                train_pairs,
                dev_pairs,
                test_pairs,
                common_types,
                train_rare_types,
                heldout_rare_types,
                max_train_count,
                rare_fraction,
                seed,
                ..SyntheticSpec::default()
            };
            let task = gen_synthetic_task(&spec)?;
            task.write(&out_dir)?;
            println!(
                "wrote task to {} ({} dictionary entries, {} dev rare occurrences, vocab size {})",
                out_dir.display(),
                task.dictionary.len(),
                task.dev_lexicon.len(),
                task.recommended_vocab_size
            );
        }
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let result = run_experiment(&cfg)?;
            println!("{}: dev {}", cfg.condition, result.dev_bleu);
            println!("{}: test {}", cfg.condition, result.test_bleu);
            if let Some(acc) = result.dev_rare_words {
                println!("dev rare words: {}/{} ({:.1}%)", acc.correct, acc.total, 100.0 * acc.accuracy);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn casing(case_sensitive: bool) -> Casing {
    if case_sensitive {
        Casing::Sensitive
    } else {
        Casing::Insensitive
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.condition {
        cfg.set("condition", v)?;
    }
    if let Some(v) = &args.k {
        cfg.set("k", v)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.segmentation {
        cfg.set("segmentation", v)?;
    }
    if let Some(v) = &args.dictionary {
        cfg.dictionary = Some(v.clone());
    }
    if let Some(v) = &args.output_dir {
        cfg.output_dir = v.clone();
    }
    for o in &args.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn clean_dict(
    format: DictFormat,
    input: &Path,
    output: &Path,
    resolve: bool,
    depth: usize,
    pretokenized: bool,
    report: Option<&Path>,
) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let (dict, log) = match format {
        DictFormat::Cedict => {
            let (raw, skipped) = parse_cedict(&text);
            let (dict, mut log) = clean_cedict(
                &raw,
                CedictCleanOptions {
                    resolve_cross_refs: resolve,
                    max_ref_depth: depth,
                },
            );
            log.skipped.extend(skipped);
            (dict, log)
        }
        DictFormat::Tsv => clean_tsv_dictionary(&text, TsvCleanOptions { pretokenized }),
    };
    dict.write_tsv(output)?;
    let stats = dict_stats(&dict);
    println!(
        "{} entries, mean definition length {:.2}, max {}",
        stats.entries, stats.mean_definition_len, stats.max_definition_len
    );
    for s in &log.skipped {
        log::warn!("line {}: {} ({:?})", s.line, s.reason, s.text);
    }
    if !log.skipped.is_empty() || !log.deleted_entries.is_empty() {
        eprintln!(
            "skipped {} lines, deleted {} entries, dropped {} definitions",
            log.skipped.len(),
            log.deleted_entries.len(),
            log.dropped_definitions
        );
    }
    if let Some(p) = report {
        let json = serde_json::json!({
            "skipped": log.skipped,
            "deleted_entries": log.deleted_entries,
            "dropped_definitions": log.dropped_definitions,
            "stats": stats,
        });
        write_file(p, &serde_json::to_string_pretty(&json)?)?;
    }
    Ok(())
}

fn split(source: &Path, target: &Path, out_dir: &Path, fractions: &str) -> Result<()> {
    let f: Vec<f64> = fractions
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .context("fractions must be three numbers")?;
    let [a, b, c] = f[..] else {
        bail!("expected three fractions, got {}", f.len());
    };
    let corpus = ParallelCorpus::read(source, target)?;
    let (train, dev, test) = split_corpus(&corpus, [a, b, c])?;
    for (name, part) in [("train", &train), ("dev", &dev), ("test", &test)] {
        part.write(&out_dir.join(format!("{name}.src")), &out_dir.join(format!("{name}.tgt")))?;
    }
    println!("{} / {} / {} lines", train.len(), dev.len(), test.len());
    Ok(())
}

fn translate(
    ckpt: &Path,
    vocab_path: &Path,
    input: &Path,
    output: &Path,
    plain: bool,
    beam: usize,
    attention_dir: Option<&Path>,
) -> Result<()> {
    let (model, header) = checkpoint::load::<f32>(ckpt)?;
    let vocab = Vocabulary::read(vocab_path)?;
    if vocab.content_hash() != header.vocab_hash {
        bail!("vocabulary {} does not match the checkpoint", vocab_path.display());
    }
    let sources: Vec<AttachedSentence> = if plain {
        read_sentences(input)?.into_iter().map(AttachedSentence::plain).collect()
    } else {
        read_jsonl(input)?
    };
    let opts = DecodeOptions { beam, max_len: None };
    let mut hyps = Vec::with_capacity(sources.len());
    for (i, s) in sources.iter().enumerate() {
        if s.tokens.is_empty() {
            hyps.push(Sentence::default());
            continue;
        }
        let layout = SourceLayout::from_attached(s, &vocab, model.config.max_len)?;
        let x = model.embed_source(&layout)?;
        let hyp = decode(&model, &x, opts)?;
        let out = Sentence::new(vocab.decode(&hyp.tokens))?;
        if let Some(dir) = attention_dir {
            write_attention(dir, i, &model, &vocab, &layout, &x, &hyp.tokens)?;
        }
        hyps.push(undo_bpe(&out));
    }
    write_sentences(output, &hyps)?;
    Ok(())
}

fn write_attention(
    dir: &Path,
    index: usize,
    model: &Model32,
    vocab: &Vocabulary,
    layout: &SourceLayout,
    x: &dictattach::Matrix32,
    output: &[u32],
) -> Result<()> {
    let weights = cross_attention(model, x, output)?;
    let source = layout.rows.iter().map(|r| match r.definition {
        None => vocab.token(r.word).to_string(),
        Some((d, q)) => format!("{}[{}]", vocab.token(d), q),
    });
    let mut target: Vec<String> = vocab.decode(output);
    target.push(dictattach::textprep::EOS.to_string());
    let record = AttentionRecord::new(source.collect(), target, &weights);
    write_file(&dir.join(format!("sent{index}.json")), &serde_json::to_string(&record)?)?;
    for head in 0..record.layers.first().map_or(0, Vec::len) {
        write_file(&dir.join(format!("sent{index}.layer0.head{head}.svg")), &record.to_svg(0, head)?)?;
    }
    Ok(())
}
