use aclb::config::RunConfig;
use aclb::eval::{run_experiment, ExperimentConfig, ExperimentReport, Variant};
use aclb::finetune::FinetuneConfig;

fn small(extra: &str) -> ExperimentConfig {
    let text = format!(
        "seeds = 2
         train_size = 120
         test_size = 50
         adapt_size = 100
         general_size = 150
         embed_dim = 5
         hidden_dim = 5
         lm_epochs = 2
         ft_epochs = 2
         slu_hidden = 5
         slu_epochs = 3
         {extra}"
    );
    ExperimentConfig::from_run_config(&RunConfig::parse(&text, "test").unwrap(), Some(4)).unwrap()
}

#[test]
fn zero_noise_makes_both_test_sets_agree() {
    let report = run_experiment(&small("p_sub = 0"), 1).unwrap();
    for run in &report.runs {
        assert_eq!(run.test_wer, 0.0);
        for r in &run.results {
            assert_eq!(r.manual_accuracy, r.noisy_accuracy, "{:?}", r.variant);
        }
    }
}

#[test]
fn report_is_complete_and_round_trips() {
    let report = run_experiment(&small(""), 1).unwrap();
    assert_eq!(report.variants.len(), 6);
    for (row, v) in report.variants.iter().zip(Variant::ALL) {
        assert_eq!(row.variant, v);
        assert_eq!(row.row, v.letter());
        for x in [row.manual_accuracy, row.noisy_accuracy] {
            assert!((0.0..=1.0).contains(&x));
        }
    }
    assert_eq!(report.seeds, vec![4, 5]);
    assert_eq!(report.config_hash, small("").to_run_config().hash());
    assert_eq!(report.config["seed"], "4");
    let back = ExperimentReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    // Only contextual variants carry a similarity measurement.
    for run in &report.runs {
        for r in &run.results {
            assert_eq!(r.pair_similarity.is_none(), r.variant == Variant::ContextIndependent);
        }
    }
}

#[test]
fn lm_only_and_sup_conf_differ_only_in_beta() {
    let cfg = ExperimentConfig::default();
    let d = cfg.finetune_config(9, 0.0);
    let e = cfg.finetune_config(9, cfg.beta);
    assert_eq!(FinetuneConfig { beta: cfg.beta, ..d }, e);
    assert_eq!(d.beta, 0.0);
    assert_eq!(e.beta, 0.1);
}

#[test]
fn variant_subset_is_respected() {
    let cfg = small("variants = c,sup-conf");
    assert_eq!(cfg.variants, vec![Variant::Pretrained, Variant::SupConf]);
    let report = run_experiment(&ExperimentConfig { seeds: 1, ..cfg }, 1).unwrap();
    assert_eq!(report.runs[0].results.len(), 2);
    assert!(report.row(Variant::Oracle).is_none());
}

#[test]
fn duplicate_and_unknown_keys_rejected() {
    assert!(RunConfig::parse("seeds = 1\nseeds = 2", "x").is_err());
    let rc = RunConfig::parse("corpus = atis", "x").unwrap();
    assert!(ExperimentConfig::from_run_config(&rc, None).is_err());
    let rc = RunConfig::parse("varients = c", "x").unwrap();
    assert!(ExperimentConfig::from_run_config(&rc, None).is_err());
}
