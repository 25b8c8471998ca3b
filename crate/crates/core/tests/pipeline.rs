use popgnn::checkpoint;
use popgnn::dataio::{load_cohort_dir, save_cohort, Modality, Provenance};
use popgnn::fusion::FusionMode;
use popgnn::model::Arch;
use popgnn::pipeline::{
    plan_splits, prepare_split, run_ablation, run_experiment, task_nodes, ExperimentConfig, Mode, Protocol,
};
use popgnn::popgraph::Masks;
use popgnn::subject::{Diagnosis, Split, Task};
use popgnn::synth::{generate_synthetic, mmse_params, SynthConfig};
use popgnn::Error;

fn cohort(n_per_class: usize, p: usize, effect: f64, seed: u64) -> popgnn::dataio::CohortBundle {
    generate_synthetic(&SynthConfig {
        n_per_class,
        p_rois: p,
        effect_size: effect,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn quick(mode: Mode, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Task::AdNc, Arch::Cheb, mode);
    cfg.train.epochs = epochs;
    cfg.train.hidden = 8;
    cfg
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn generator_matches_its_parameters() {
    let n = 1000;
    let b = cohort(n, 10, 1.5, 11);
    let ad: Vec<usize> = (0..b.subjects.len())
        .filter(|&i| b.subjects[i].label == Diagnosis::Ad)
        .collect();
    let nc: Vec<usize> = (0..b.subjects.len())
        .filter(|&i| b.subjects[i].label == Diagnosis::Nc)
        .collect();
    assert_eq!((ad.len(), nc.len()), (n, n));

    let mmse: Vec<f64> = ad.iter().map(|&i| b.subjects[i].mmse as f64).collect();
    let (mu, sd) = mmse_params(Diagnosis::Ad);
    let (m, _) = mean_sd(&mmse);
    assert!((m - mu).abs() < 3.0 * sd / (n as f64).sqrt(), "AD MMSE mean {m}");

    // PET: sd 0.1, shift 1.5 sd on three of ten ROIs.
    let pet = b.table(Modality::PetSuvr).unwrap();
    let se = 0.1 * (2.0 / n as f64).sqrt();
    let mut shifted = 0;
    for roi in 0..10 {
        let col = |idx: &[usize]| idx.iter().map(|&i| pet.values.get(i, roi)).collect::<Vec<_>>();
        let (m_nc, sd_nc) = mean_sd(&col(&nc));
        let (m_ad, _) = mean_sd(&col(&ad));
        assert!((sd_nc - 0.1).abs() < 0.01, "roi {roi} sd {sd_nc}");
        let diff = m_nc - m_ad;
        if (diff - 0.15).abs() < 3.0 * se {
            shifted += 1;
        } else {
            assert!(diff.abs() < 3.0 * se, "roi {roi} diff {diff}");
        }
    }
    assert_eq!(shifted, 3);
}

#[test]
fn smoke_run_produces_sane_reports() {
    let b = cohort(20, 10, 1.5, 1);
    let cfg = quick(Mode::Fusion(FusionMode::IntegratedFusion), 5);
    let r = run_experiment(&b, &cfg).unwrap();
    assert_eq!(r.method, "IFDCGCN");
    assert_eq!(r.runs.len(), 1);
    let run = &r.runs[0];
    assert_eq!(run.log.records.len(), 5);
    assert_eq!(run.branch_reports.len(), 2);
    assert_eq!(run.report.n_test, 6);
    for v in [run.report.acc, run.report.sen, run.report.spe, run.report.auc] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert_eq!(run.trace.adjacency_path, vec!["A_s*A_f*A_fm", "A_s*A_f*A_fm"]);
}

#[test]
fn fusion_modes_share_features_but_not_graphs() {
    let b = cohort(15, 8, 1.5, 2);
    let nodes = task_nodes(&b, Task::AdNc).unwrap();
    let trace = |m: FusionMode| {
        let cfg = quick(Mode::Fusion(m), 1);
        let masks = plan_splits(&b, &nodes, &cfg).unwrap().remove(0);
        prepare_split(&b, &nodes, masks, &cfg).unwrap().trace
    };
    let dual = trace(FusionMode::Dual);
    let ifu = trace(FusionMode::IntegratedFusion);
    let integ = trace(FusionMode::Integration);
    assert_eq!(dual.feature_digests, ifu.feature_digests);
    assert_eq!(dual.feature_digests, integ.feature_digests);
    assert_ne!(dual.adjacency_digests[0], dual.adjacency_digests[1]);
    assert_eq!(ifu.adjacency_digests[0], ifu.adjacency_digests[1]);
    assert_ne!(ifu.adjacency_digests[0], dual.adjacency_digests[0]);
    assert_ne!(ifu.adjacency_digests[0], integ.adjacency_digests[0]);
}

#[test]
fn reference_uses_training_nc_only() {
    let b = cohort(20, 6, 1.5, 3);
    let nodes = task_nodes(&b, Task::AdNc).unwrap();
    let cfg = quick(Mode::SinglePet, 1);
    let masks = plan_splits(&b, &nodes, &cfg).unwrap().remove(0);
    let train_nc = Masks::indices(&masks.train)
        .iter()
        .filter(|&&i| nodes.labels[i] == 0)
        .count();
    let prepared = prepare_split(&b, &nodes, masks, &cfg).unwrap();
    assert_eq!(prepared.trace.n_reference, train_nc);
}

#[test]
fn partial_split_column_is_rejected() {
    let mut b = cohort(10, 4, 1.5, 4);
    b.subjects[0].split = Some(Split::Train);
    let nodes = task_nodes(&b, Task::AdNc).unwrap();
    let cfg = quick(Mode::SinglePet, 1);
    assert!(matches!(plan_splits(&b, &nodes, &cfg), Err(Error::InvalidArgument(_))));
}

#[test]
fn sub_datasets_have_disjoint_tests() {
    let b = cohort(30, 4, 1.5, 5);
    let nodes = task_nodes(&b, Task::AdNc).unwrap();
    let mut cfg = quick(Mode::SinglePet, 1);
    cfg.protocol = Protocol::SubDatasets { count: 5 };
    let splits = plan_splits(&b, &nodes, &cfg).unwrap();
    assert_eq!(splits.len(), 5);
    let mut seen = vec![0; 60];
    for m in &splits {
        assert!(m.is_partition());
        assert_eq!(Masks::indices(&m.test).len(), 9);
        for i in Masks::indices(&m.test) {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c <= 1));
    cfg.protocol = Protocol::SubDatasets { count: 7 };
    assert!(plan_splits(&b, &nodes, &cfg).is_err());
}

#[test]
fn ablation_covers_every_row() {
    let b = cohort(15, 6, 1.5, 6);
    let rows = run_ablation(&b, &quick(Mode::Fusion(FusionMode::IntegratedFusion), 2)).unwrap();
    let names: Vec<&str> = rows.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["Similarity", "Apoe4", "Age", "Gender", "MMSE", "G+M", "G+A+M"]);
}

#[test]
fn strong_signal_is_learned() {
    let b = cohort(50, 20, 3.0, 7);
    let mut cfg = quick(Mode::Fusion(FusionMode::Dual), 100);
    cfg.train.hidden = 32;
    cfg.pheno = popgnn::popgraph::PhenoConfig::similarity();
    let r = run_experiment(&b, &cfg).unwrap();
    assert!(r.aggregate.acc.mean >= 0.9, "{}", r.aggregate.to_text());
}

#[test]
fn smci_pmci_uses_the_reference_group() {
    let b = generate_synthetic(&SynthConfig {
        n_per_class: 20,
        p_rois: 6,
        task: Task::SmciPmci,
        n_reference: 12,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = quick(Mode::Fusion(FusionMode::Dual), 3);
    cfg.task = Task::SmciPmci;
    let r = run_experiment(&b, &cfg).unwrap();
    assert_eq!(r.runs[0].trace.n_reference, 12);
    assert_eq!(r.runs[0].trace.n_nodes, 40);
    assert_eq!(r.runs[0].report.positive_class, "pMCI");
}

#[test]
fn cohort_and_checkpoint_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let b = cohort(10, 5, 1.5, 9);
    save_cohort(&b, dir.path()).unwrap();
    let back = load_cohort_dir(dir.path()).unwrap();
    assert!(matches!(back.provenance, Provenance::Files { .. }));
    assert_eq!(back.subjects, b.subjects);
    assert_eq!(back.roi_tables, b.roi_tables);

    let r = run_experiment(&b, &quick(Mode::Fusion(FusionMode::Dual), 2)).unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&path, &r.runs[0].model, 42).unwrap();
    let (model, seed) = checkpoint::load(&path).unwrap();
    assert_eq!(seed, 42);
    assert_eq!(model, r.runs[0].model);
}

#[test]
fn ad_mmse_mean_matches_cohort_statistics() {
    let b = cohort(500, 4, 1.5, 12);
    let mmse: Vec<f64> = b
        .subjects
        .iter()
        .filter(|s| s.label == Diagnosis::Ad)
        .map(|s| s.mmse as f64)
        .collect();
    let (m, _) = mean_sd(&mmse);
    assert!((m - 23.21).abs() < 0.5, "{m}");
}

#[test]
fn zero_effect_leaves_classes_alike() {
    let n = 1000;
    let b = cohort(n, 6, 0.0, 13);
    let se = |sd: f64| sd * (2.0 / n as f64).sqrt();
    for (m, sd) in [
        (Modality::PetSuvr, 0.1),
        (Modality::SmriGm, 0.06),
        (Modality::SmriWm, 0.04),
    ] {
        let t = b.table(m).unwrap();
        for roi in 0..6 {
            let col = |d: Diagnosis| {
                (0..b.subjects.len())
                    .filter(|&i| b.subjects[i].label == d)
                    .map(|i| t.values.get(i, roi))
                    .collect::<Vec<_>>()
            };
            let diff = mean_sd(&col(Diagnosis::Nc)).0 - mean_sd(&col(Diagnosis::Ad)).0;
            assert!(diff.abs() < 3.0 * se(sd), "{m} roi {roi}: {diff}");
        }
    }
}

#[test]
fn subject_listed_in_two_splits_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("subjects.csv");
    std::fs::write(
        &path,
        "id,label,gender,age,apoe4,mmse,split\nS1,AD,F,70,1,22,train\nS2,NC,M,71,0,29,val\nS1,AD,F,70,1,22,test\n",
    )
    .unwrap();
    match popgnn::dataio::read_subjects(&path) {
        Err(Error::Parse { line, msg, .. }) => {
            assert_eq!(line, 4);
            assert!(msg.contains("S1"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}
