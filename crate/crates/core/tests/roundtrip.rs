//! Generator-vs-extractor round trips: the synthetic scripts carry their
//! expected token sequences, and extraction must reproduce them.

use manip_core::extraction::{compute_levels, extract_sequence, ExtractionConfig, LevelSet};
use manip_core::profile::ProfileModel;
use manip_core::signals::ChannelGroup;
use manip_core::synth::{generate_dataset, Dataset, DatasetParams, NoiseSigmas, Split};
use manip_core::token::edit_similarity;

fn train_levels(dataset: &Dataset) -> (LevelSet, LevelSet) {
    let train: Vec<_> = dataset
        .trials
        .iter()
        .filter(|t| t.split == Split::Train)
        .map(|t| t.trial.clone())
        .collect();
    let force = compute_levels(&train, ChannelGroup::Pressure).unwrap();
    let bend = compute_levels(&train, ChannelGroup::Bend).unwrap();
    (force, bend)
}

fn extract_all(dataset: &Dataset) -> Vec<Vec<String>> {
    let (force, bend) = train_levels(dataset);
    let config = ExtractionConfig::default();
    let model = ProfileModel::MinJerk;
    dataset
        .trials
        .iter()
        .map(|t| {
            extract_sequence(&t.trial, &force, &bend, &model, &config)
                .unwrap()
                .names()
        })
        .collect()
}

#[test]
fn zero_noise_trials_reproduce_ground_truth_exactly() {
    let params = DatasetParams {
        n_subjects: 5,
        trials_per_action: 1,
        noise: NoiseSigmas::zero(),
        ..Default::default()
    };
    let dataset = generate_dataset(&params).unwrap();
    let extracted = extract_all(&dataset);
    let mut failures = Vec::new();
    for (item, got) in dataset.trials.iter().zip(extracted.iter()) {
        let want = item.ground_truth.names();
        if *got != want {
            failures.push(format!(
                "{}:\n  want {}\n  got  {}",
                item.trial.id,
                want.join(" "),
                got.join(" ")
            ));
        }
    }
    assert!(
        failures.is_empty(),
        "{} of {} trials mismatched:\n{}",
        failures.len(),
        dataset.trials.len(),
        failures.join("\n")
    );
}

#[test]
fn noise_robustness_curve_is_monotone() {
    let scales = [0.0, 1.0, 4.0, 16.0];
    let mut means = Vec::new();
    for &scale in &scales {
        let params = DatasetParams {
            n_subjects: 2,
            trials_per_action: 1,
            noise: NoiseSigmas::scaled(scale),
            seed: 7,
            ..Default::default()
        };
        let dataset = generate_dataset(&params).unwrap();
        let extracted = extract_all(&dataset);
        let mean: f64 = dataset
            .trials
            .iter()
            .zip(extracted.iter())
            .map(|(item, got)| edit_similarity(got, &item.ground_truth.names()))
            .sum::<f64>()
            / dataset.trials.len() as f64;
        means.push(mean);
    }
    println!("similarity by noise scale: {means:?}");
    // non-increasing in expectation; small slack absorbs sampling noise
    for w in means.windows(2) {
        assert!(w[1] <= w[0] + 0.02, "similarity rose: {means:?}");
    }
    assert!(
        means[1] >= 0.95,
        "similarity at default noise = {}",
        means[1]
    );
}
