use std::collections::HashMap;

use ats_core::ats::{ats_run, disjointness_probe};
use ats_core::harness::{
    build_testing_set, run_experiment, CorpusSource, ExperimentSpec, SynthComponent,
};
use ats_core::learner::SvmModel;
use ats_core::{
    ats_classify, lsbm_embed, search_bitrate, synth_cover, Algorithm, AtsParams, EmbedConfig,
    Error, GrayImage, Label, StreamState,
};

fn spec(n_cover: usize, n_stego: usize) -> ExperimentSpec {
    ExperimentSpec {
        corpus: CorpusSource::Synthetic {
            width: 128,
            height: 128,
            components: vec![SynthComponent {
                smoothness: 8.0,
                weight: 1.0,
            }],
        },
        n_cover,
        n_stego,
        embed: EmbedConfig::lsbm(0.25, 3).unwrap(),
        embed_rates: None,
        split: EmbedConfig::lsbm(0.25, 4).unwrap(),
        repeats: 1,
        seed: 21,
        clip: None,
        params: AtsParams::default(),
    }
}

fn set(n_cover: usize, n_stego: usize) -> (Vec<GrayImage>, HashMap<String, Label>) {
    build_testing_set(&spec(n_cover, n_stego), 0, n_cover, n_stego).unwrap()
}

#[test]
fn own_stego_copy_pair() {
    let cover = synth_cover(8, 256, 256, 6.0).unwrap().with_id("cover");
    let stego = lsbm_embed(&cover, &EmbedConfig::lsbm(0.25, 1).unwrap()).with_id("stego");
    let split = EmbedConfig::lsbm(0.25, 2).unwrap();
    let run = ats_run(&[cover, stego], &split, &AtsParams::default(), None).unwrap();
    run.audit.verify(&run.report).unwrap();
    let ids: Vec<&str> = run.report.per_image.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids, ["cover", "stego"]);
}

#[test]
fn classify_separates_easy_set() {
    let (images, truth) = set(20, 20);
    let s = spec(20, 20);
    let run = ats_run(&images, &s.split, &s.params, Some(&truth)).unwrap();
    run.audit.verify(&run.report).unwrap();
    let counts = run.report.counts.unwrap();
    assert_eq!(counts.total(), 40.0);
    assert!(run.report.accuracy.unwrap() >= 0.8, "{:?}", counts);
    assert_eq!(run.report.diagnostics.class_sizes, (40, 40));
}

#[test]
fn labels_do_not_depend_on_input_order() {
    let (mut images, _) = set(12, 8);
    let s = spec(12, 8);
    let forward = ats_classify(&images, &s.split, &s.params, None).unwrap();
    images.rotate_left(7);
    let rotated = ats_classify(&images, &s.split, &s.params, None).unwrap();
    assert_eq!(forward.labels(), rotated.labels());
    // report order follows input order
    assert_eq!(rotated.per_image[0].id, images[0].id());
}

#[test]
fn truth_must_match_ids_exactly() {
    let (images, mut truth) = set(4, 4);
    let s = spec(4, 4);
    truth.insert("stranger".into(), Label::Cover);
    assert!(matches!(
        ats_classify(&images, &s.split, &s.params, Some(&truth)),
        Err(Error::TruthMismatch(_))
    ));
}

#[test]
fn rejects_duplicates_and_tiny_sets() {
    let (images, _) = set(3, 0);
    let s = spec(3, 0);
    let dup = vec![images[0].clone(), images[0].clone()];
    assert!(matches!(
        ats_classify(&dup, &s.split, &s.params, None),
        Err(Error::DuplicateId(_))
    ));
    assert!(matches!(
        ats_classify(&images[..1], &s.split, &s.params, None),
        Err(Error::TooFewImages { .. })
    ));
}

#[test]
fn all_cover_set_is_flagged_by_the_harness() {
    let r = run_experiment(&spec(12, 0)).unwrap();
    assert_eq!(r.counts.tp + r.counts.fn_, 0.0);
    assert_eq!(r.counts.tn + r.counts.fp, 12.0);
    assert!(!r.warnings.is_empty());
}

#[test]
fn probe_separates_all_three_pairs() {
    let covers: Vec<GrayImage> = (0..16)
        .map(|i| {
            synth_cover(40 + i, 256, 256, 6.0)
                .unwrap()
                .with_id(format!("p{i:02}"))
        })
        .collect();
    let p = disjointness_probe(
        &covers,
        &EmbedConfig::lsbm(0.25, 5).unwrap(),
        &AtsParams::default(),
    )
    .unwrap();
    assert!(p.a_vs_c >= 0.9, "{p:?}");
    assert!(p.a_vs_b > 0.5 && p.b_vs_c > 0.5, "{p:?}");
}

#[test]
fn search_entry_matches_single_run() {
    let (images, truth) = set(10, 10);
    let params = AtsParams::default();
    let entries = search_bitrate(
        &images,
        Algorithm::Lsbm,
        4,
        &[0.1, 0.25],
        &params,
        Some(&truth),
    )
    .unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries[0].score <= entries[1].score);
    let at_025 = entries.iter().find(|e| e.tentative_rate == 0.25).unwrap();
    let direct = ats_classify(
        &images,
        &EmbedConfig::lsbm(0.25, 4).unwrap(),
        &params,
        Some(&truth),
    )
    .unwrap();
    assert_eq!(at_025.report, direct);
}

#[test]
fn saved_model_predicts_identically() {
    let (images, _) = set(8, 8);
    let s = spec(8, 8);
    let run = ats_run(&images, &s.split, &s.params, None).unwrap();
    let json = run.fitted.model.to_json().unwrap();
    let back = SvmModel::from_json(&json).unwrap();
    let triples = ats_core::ats::image_triples(&images, &s.split, &s.params.features).unwrap();
    for t in &triples {
        assert_eq!(
            run.fitted.model.decision(&t.b.values).unwrap(),
            back.decision(&t.b.values).unwrap()
        );
    }
}

#[test]
fn stream_rounds_start_at_n_min() {
    let (images, _) = set(8, 5);
    let s = spec(8, 5);
    let mut state = StreamState::new(s.split, s.params.clone(), 10).unwrap();
    for (i, img) in images.iter().enumerate() {
        let round = state.add(img).unwrap();
        assert_eq!(round.is_some(), i + 1 >= 10, "arrival {}", i + 1);
        if let Some(r) = round {
            assert_eq!(r.verdicts.len(), i + 1);
            assert!(r.verdicts.iter().all(|v| v.2 > 0.0 && v.2 <= 1.0));
            let line: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
            assert_eq!(line["n"], i + 1);
        }
    }
    assert_eq!(state.rounds(), 4);
    assert_eq!(state.history(images[0].id()).unwrap().len(), 4);
    assert_eq!(state.history(images[12].id()).unwrap().len(), 1);
    assert!(state.last_report().is_some());
    assert!(matches!(state.add(&images[3]), Err(Error::DuplicateId(_))));
}
