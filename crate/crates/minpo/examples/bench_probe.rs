// Scratch benchmark probe (deleted before finalizing).
use minpo::exp::{build_minpo_pipeline, loss_and_grad, prepare, ExperimentId, Method, RunConfig};
use std::time::Instant;

fn main() {
    for (exp, name) in [
        (ExperimentId::Exp1Forward, "exp1f"),
        (ExperimentId::Exp2, "exp2"),
        (ExperimentId::Exp3, "exp3"),
    ] {
        let cfg = RunConfig::defaults(exp, Method::MinpoKan);
        let prepared = prepare(&cfg).unwrap();
        for (i, b) in prepared.pipeline.batches.iter().enumerate() {
            println!(
                "{name} batch{i}: instrs={} lanes={} slots={}",
                b.prog.len(),
                b.n_lanes,
                b.prog.n_slots()
            );
        }
        let mut grad = vec![0.0; prepared.params.len()];
        let t0 = Instant::now();
        let iters = 10;
        for _ in 0..iters {
            loss_and_grad(&prepared.pipeline, &prepared.params, &mut grad);
        }
        println!("{name}: {:.1} ms/iter", t0.elapsed().as_secs_f64() * 1000.0 / iters as f64);
        let _ = build_minpo_pipeline; // keep import if unused elsewhere
    }
}
