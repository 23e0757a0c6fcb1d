use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use manip_core::config::PipelineConfig;
use manip_core::error::{Error, Result};
use manip_core::eval::{
    append_fold_row, confusion, f1_report, one_sample_ttest, read_fold_rows, write_confusion_pgm,
    write_confusion_tsv, write_score_report, FoldRow, T_SENTINEL,
};
use manip_core::extraction::{compute_levels, extract_sequence, LevelSet};
use manip_core::hmm::{
    raw_features, read_bank, read_gaussian_bank, write_bank, write_gaussian_bank,
    ActionModelBank, GaussianBank,
};
use manip_core::profile::{load_profile, ProfileModel};
use manip_core::signals::{load_trial, ChannelGroup, Trial};
use manip_core::synth::{
    generate_dataset, read_manifest, write_dataset, ManifestEntry, Split, Variability,
};
use manip_core::token::{read_sequences, write_sequences, SequenceRecord};
use manip_core::par;

pub fn synth(
    config: &PipelineConfig,
    out: &Path,
    subjects: Option<usize>,
    trials_per_action: Option<usize>,
    noise_scale: Option<f64>,
    variability: Option<&str>,
) -> Result<()> {
    let mut config = config.clone();
    if let Some(s) = subjects {
        config.subjects = s;
    }
    if let Some(t) = trials_per_action {
        config.trials_per_action = t;
    }
    if let Some(n) = noise_scale {
        config.noise_scale = n;
    }
    if let Some(v) = variability {
        config.variability = Variability::parse(v)
            .ok_or_else(|| Error::Argument(format!("unknown variability `{v}`")))?;
    }
    config.validate()?;
    let dataset = generate_dataset(&config.dataset())?;
    write_dataset(&dataset, out)?;
    println!("wrote {} trials to {}", dataset.trials.len(), out.display());
    Ok(())
}

fn load_dataset_trials(dir: &Path) -> Result<Vec<(ManifestEntry, Trial)>> {
    let entries = read_manifest(dir)?;
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "dataset at {} holds no trials",
            dir.display()
        )));
    }
    let loaded = par::map_slice(&entries, |entry| {
        let path = dir.join(format!("{}.csv", entry.trial_id));
        load_trial(&path).map(|mut trial| {
            trial.id = entry.trial_id.clone();
            trial.subject = entry.subject.clone();
            trial.action_label = Some(entry.action.clone());
            trial
        })
    });
    entries
        .into_iter()
        .zip(loaded)
        .map(|(entry, trial)| trial.map(|t| (entry, t)))
        .collect()
}

fn profile_model(config: &PipelineConfig) -> Result<ProfileModel> {
    match &config.profile_path {
        Some(path) => load_profile(Path::new(path)),
        None => Ok(ProfileModel::MinJerk),
    }
}

pub fn extract(config: &PipelineConfig, data: &Path, out: &Path) -> Result<()> {
    let trials = load_dataset_trials(data)?;
    let train: Vec<Trial> = trials
        .iter()
        .filter(|(entry, _)| entry.split == Split::Train)
        .map(|(_, trial)| trial.clone())
        .collect();
    if train.is_empty() {
        return Err(Error::Data(
            "no trials flagged `train` in the manifest; levels need a training set".into(),
        ));
    }
    let levels_force = compute_levels(&train, ChannelGroup::Pressure)?;
    let levels_bend = compute_levels(&train, ChannelGroup::Bend)?;
    let model = profile_model(config)?;
    let extraction = config.extraction()?;

    let sequences = par::map_slice(&trials, |(entry, trial)| {
        extract_sequence(trial, &levels_force, &levels_bend, &model, &extraction).map(|seq| {
            SequenceRecord {
                trial_id: entry.trial_id.clone(),
                subject: entry.subject.clone(),
                action: if entry.action.is_empty() {
                    None
                } else {
                    Some(entry.action.clone())
                },
                tokens: seq.names(),
            }
        })
    });
    let records: Result<Vec<SequenceRecord>> = sequences.into_iter().collect();
    let records = records?;
    write_sequences(&records, out)?;

    let mut histogram: BTreeMap<&str, usize> = BTreeMap::new();
    for record in &records {
        for token in &record.tokens {
            *histogram.entry(token).or_default() += 1;
        }
    }
    println!(
        "extracted {} sequences ({} tokens) to {}",
        records.len(),
        histogram.values().sum::<usize>(),
        out.display()
    );
    for (token, count) in histogram {
        println!("  {token}\t{count}");
    }
    Ok(())
}

fn parse_subject_set(list: &str) -> BTreeSet<String> {
    list.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn group_sequences(
    records: &[SequenceRecord],
    keep: impl Fn(&SequenceRecord) -> bool,
) -> Result<BTreeMap<String, Vec<Vec<String>>>> {
    let mut grouped: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for record in records.iter().filter(|r| keep(r)) {
        let action = record.action.clone().ok_or_else(|| {
            Error::Data(format!("trial {} has no action label", record.trial_id))
        })?;
        grouped.entry(action).or_default().push(record.tokens.clone());
    }
    Ok(grouped)
}

pub fn train(
    config: &PipelineConfig,
    sequences: Option<&Path>,
    out: &Path,
    train_subjects: Option<&str>,
    raw: bool,
    data: Option<&Path>,
) -> Result<()> {
    if raw {
        let data = data.ok_or_else(|| Error::Argument("--raw needs --data".into()))?;
        let trials = load_dataset_trials(data)?;
        let selected: Vec<&(ManifestEntry, Trial)> = match train_subjects {
            Some(list) => {
                let set = parse_subject_set(list);
                trials.iter().filter(|(e, _)| set.contains(&e.subject)).collect()
            }
            None => trials.iter().filter(|(e, _)| e.split == Split::Train).collect(),
        };
        let mut grouped: BTreeMap<String, Vec<Vec<Vec<f64>>>> = BTreeMap::new();
        for (entry, trial) in selected {
            grouped
                .entry(entry.action.clone())
                .or_default()
                .push(raw_features(trial, config.raw_features));
        }
        let bank = GaussianBank::train(&grouped, config.raw_features, &config.gaussian_options())?;
        write_gaussian_bank(&bank, out)?;
        for (label, (_, meta)) in &bank.models {
            println!(
                "{label}: {} states, {} topology, loglik {:.3}",
                meta.n_states,
                meta.topology.name(),
                meta.final_loglik
            );
        }
        println!("wrote raw bank to {}", out.display());
        return Ok(());
    }

    let sequences =
        sequences.ok_or_else(|| Error::Argument("--sequences is required".into()))?;
    let records = read_sequences(sequences)?;
    let keep: Box<dyn Fn(&SequenceRecord) -> bool> = match train_subjects {
        Some(list) => {
            let set = parse_subject_set(list);
            Box::new(move |r: &SequenceRecord| set.contains(&r.subject))
        }
        None => Box::new(|_: &SequenceRecord| true),
    };
    let grouped = group_sequences(&records, keep)?;
    let bank = ActionModelBank::train(&grouped, &config.select_options())?;
    write_bank(&bank, out)?;
    for (label, (_, meta)) in &bank.models {
        println!(
            "{label}: {} states, {} topology, loglik {:.3}",
            meta.n_states,
            meta.topology.name(),
            meta.final_loglik
        );
    }
    println!("wrote bank to {}", out.display());
    Ok(())
}

struct Predictions {
    trial_ids: Vec<String>,
    subjects: Vec<String>,
    truths: Vec<Option<String>>,
    preds: Vec<String>,
    scores: Vec<Vec<(String, f64)>>,
}

#[allow(clippy::too_many_arguments)]
fn classify_set(
    bank_path: &Path,
    sequences: Option<&Path>,
    subjects: Option<&BTreeSet<String>>,
    raw: bool,
    data: Option<&Path>,
) -> Result<Predictions> {
    let mut out = Predictions {
        trial_ids: Vec::new(),
        subjects: Vec::new(),
        truths: Vec::new(),
        preds: Vec::new(),
        scores: Vec::new(),
    };
    if raw {
        let data = data.ok_or_else(|| Error::Argument("--raw needs --data".into()))?;
        let bank = read_gaussian_bank(bank_path)?;
        let trials = load_dataset_trials(data)?;
        for (entry, trial) in trials {
            if let Some(set) = subjects {
                if !set.contains(&entry.subject) {
                    continue;
                }
            }
            let features = raw_features(&trial, bank.feature_mode);
            let (pred, scores) = bank.classify(&features)?;
            out.trial_ids.push(entry.trial_id);
            out.subjects.push(entry.subject);
            out.truths.push(Some(entry.action));
            out.preds.push(pred);
            out.scores.push(scores);
        }
    } else {
        let sequences =
            sequences.ok_or_else(|| Error::Argument("--sequences is required".into()))?;
        let bank = read_bank(bank_path)?;
        for record in read_sequences(sequences)? {
            if let Some(set) = subjects {
                if !set.contains(&record.subject) {
                    continue;
                }
            }
            let (pred, scores) = bank.classify(&record.tokens)?;
            out.trial_ids.push(record.trial_id);
            out.subjects.push(record.subject);
            out.truths.push(record.action);
            out.preds.push(pred);
            out.scores.push(scores);
        }
    }
    if out.preds.is_empty() {
        return Err(Error::Data("no trials matched the requested subjects".into()));
    }
    Ok(out)
}

pub fn predict(
    bank: &Path,
    sequences: Option<&Path>,
    out: &Path,
    subjects: Option<&str>,
    raw: bool,
    data: Option<&Path>,
) -> Result<()> {
    let set = subjects.map(parse_subject_set);
    let predictions = classify_set(bank, sequences, set.as_ref(), raw, data)?;
    let actions: Vec<String> = predictions.scores[0]
        .iter()
        .map(|(label, _)| label.clone())
        .collect();
    let mut text = String::from("trial_id\tsubject\ttruth\tpredicted");
    for label in &actions {
        text.push_str(&format!("\tloglik_{label}"));
    }
    text.push('\n');
    for i in 0..predictions.preds.len() {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}",
            predictions.trial_ids[i],
            predictions.subjects[i],
            predictions.truths[i].as_deref().unwrap_or(""),
            predictions.preds[i]
        ));
        for (_, ll) in &predictions.scores[i] {
            text.push_str(&format!("\t{ll:.6}"));
        }
        text.push('\n');
    }
    fs::write(out, text).map_err(|e| Error::io(out, e))?;
    let with_truth = predictions
        .truths
        .iter()
        .zip(predictions.preds.iter())
        .filter(|(t, _)| t.is_some())
        .count();
    if with_truth > 0 {
        let correct = predictions
            .truths
            .iter()
            .zip(predictions.preds.iter())
            .filter(|(t, p)| t.as_deref() == Some(p.as_str()))
            .count();
        println!(
            "predicted {} trials ({} labeled, {} correct)",
            predictions.preds.len(),
            with_truth,
            correct
        );
    } else {
        println!("predicted {} trials", predictions.preds.len());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    bank: &Path,
    sequences: Option<&Path>,
    test_subjects: &str,
    out: &Path,
    pgm: bool,
    fold_report: Option<&Path>,
    raw: bool,
    data: Option<&Path>,
) -> Result<()> {
    let set = parse_subject_set(test_subjects);
    if set.is_empty() {
        return Err(Error::Argument("empty --test-subjects".into()));
    }
    let predictions = classify_set(bank, sequences, Some(&set), raw, data)?;
    let truths: Result<Vec<String>> = predictions
        .truths
        .iter()
        .zip(predictions.trial_ids.iter())
        .map(|(t, id)| {
            t.clone()
                .ok_or_else(|| Error::Data(format!("trial {id} has no action label")))
        })
        .collect();
    let truths = truths?;
    let cm = confusion(&predictions.preds, &truths)?;
    let report = f1_report(&cm);

    let scores_path = out.with_extension("scores.tsv");
    let confusion_path = out.with_extension("confusion.tsv");
    write_score_report(&report, &scores_path)?;
    write_confusion_tsv(&cm, &confusion_path)?;
    if pgm {
        write_confusion_pgm(&cm, &out.with_extension("confusion.pgm"))?;
    }
    if let Some(path) = fold_report {
        let fold: Vec<String> = set.iter().cloned().collect();
        append_fold_row(
            &FoldRow {
                fold: fold.join("+"),
                overall_f1: report.overall_f1,
                macro_f1: report.macro_f1,
            },
            path,
        )?;
    }
    println!(
        "evaluated {} trials: overall F1 {:.4}, macro F1 {:.4}",
        cm.total(),
        report.overall_f1,
        report.macro_f1
    );
    Ok(())
}

pub fn ttest(a: &Path, b: &Path) -> Result<()> {
    let rows_a = read_fold_rows(a)?;
    let rows_b = read_fold_rows(b)?;
    if rows_a.len() != rows_b.len()
        || rows_a
            .iter()
            .zip(rows_b.iter())
            .any(|(x, y)| x.fold != y.fold)
    {
        return Err(Error::Data(format!(
            "fold structure mismatch between {} and {}",
            a.display(),
            b.display()
        )));
    }
    let differences: Vec<f64> = rows_a
        .iter()
        .zip(rows_b.iter())
        .map(|(x, y)| x.overall_f1 - y.overall_f1)
        .collect();
    let (t, df, p) = one_sample_ttest(&differences)?;
    if t.abs() >= T_SENTINEL {
        println!("t = {t:.4e} (zero variance), df = {df}, p = {p:.4}");
    } else {
        println!("t = {t:.4}, df = {df}, p = {p:.4}");
    }
    let verdict = if p < 0.05 {
        "significant at the 0.05 level"
    } else {
        "not significant at the 0.05 level"
    };
    println!("difference in overall F1 is {verdict}");
    Ok(())
}
