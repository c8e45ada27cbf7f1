//! Scratch harness for tuning the training defaults.

use clr_core::grpo::{train, EvalConfig, GrpoConfig, RewardMode};
use clr_core::synth::{gen_tasks, TaskSpec};
use clr_core::Vocabulary;

fn main() {
    let vocab = Vocabulary::new(64, 5).unwrap();
    let spec = TaskSpec {
        n_docs: 5,
        n_supporting: 1,
        hops: 1,
        doc_len: 8,
        vocab,
        n_tasks: 200,
        seed: 11,
    };
    let tasks = gen_tasks(&spec).unwrap();

    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let max_len: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let eval_tasks: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    let config = GrpoConfig {
        steps,
        learning_rate: lr,
        max_len,
        reward_mode: RewardMode::Clr,
        eval: EvalConfig { k_samples: 1, max_tasks: eval_tasks },
        ..GrpoConfig::default()
    };
    let start = std::time::Instant::now();
    match train(&config, &vocab, &tasks, 7) {
        Ok((params, log)) => {
            for r in log.records.iter().step_by(10.max(steps / 30)) {
                println!(
                    "step {:4}  reward {:7.3}  len {:5.2}  accD {:5.3}  accQ {:5.3}  rr {:5.3}  pplF {:8.3}  pplL {:8.3}",
                    r.step, r.mean_reward, r.mean_len, r.acc_with_docs, r.acc_without_docs,
                    r.rr, r.ppl_full_tok, r.ppl_loo_tok
                );
            }
            let last = log.records.last().unwrap();
            println!("--- final: rr {:.3} accD {:.3} accQ {:.3} len {:.2}", last.rr, last.acc_with_docs, last.acc_without_docs, last.mean_len);
            println!("--- params: gate {:?} copy {:?}", params.gate, params.copy);
            println!("--- elapsed: {:?}", start.elapsed());
        }
        Err(e) => println!("TRAIN ERROR: {e}"),
    }
}
