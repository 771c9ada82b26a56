// Runs a reduced version of the benchmark comparison (two seeds, small
// corpora) and prints the per-variant accuracy table.
//
//     cargo run --release --example experiment

use aclb::config::RunConfig;
use aclb::eval::{run_experiment, ExperimentConfig};

pub fn main() {
    let rc = RunConfig::parse(
        "seed = 11
         seeds = 2
         train_size = 200
         test_size = 100
         adapt_size = 200
         general_size = 300
         embed_dim = 8
         hidden_dim = 8
         lm_epochs = 5
         ft_epochs = 5
         slu_hidden = 8
         slu_epochs = 30",
        "inline",
    )
    .unwrap();
    let cfg = ExperimentConfig::from_run_config(&rc, Some(11)).unwrap();
    let report = run_experiment(&cfg, 1).unwrap();

    println!("config {}", &report.config_hash[..12]);
    println!("{:<3} {:<20} {:>14} {:>14}", "row", "variant", "manual", "noisy");
    for r in &report.variants {
        println!(
            "{:<3} {:<20} {:>6.3} ± {:.3} {:>6.3} ± {:.3}",
            r.row,
            r.variant.name(),
            r.manual_accuracy,
            r.manual_stdev,
            r.noisy_accuracy,
            r.noisy_stdev
        );
    }
    for run in &report.runs {
        println!(
            "seed {}: test WER {:.3}, {} supervised / {} unsupervised pairs",
            run.seed, run.test_wer, run.supervised_pairs, run.unsupervised_pairs
        );
    }
    assert_eq!(report.variants.len(), 6);
}
