// Scratch micro-benchmark of the executor passes (deleted before finalizing).
use minpo::diffkit::{ChunkBuf, CHUNK};
use minpo::exp::{prepare, ExperimentId, Method, RunConfig};
use std::time::Instant;

fn main() {
    let cfg = RunConfig::defaults(ExperimentId::Exp1Forward, Method::MinpoKan);
    let prepared = prepare(&cfg).unwrap();
    let params = &prepared.params;
    for (bi, b) in prepared.pipeline.batches.iter().enumerate() {
        if b.n_lanes < 100 { continue; }
        let inputs: Vec<&[f64]> = b.inputs.iter().map(|v| v.as_slice()).collect();
        let mut buf = ChunkBuf::for_program(&b.prog);
        b.prog.fill_params(params, &mut buf);
        let n_chunks = b.n_lanes.div_ceil(CHUNK);
        let reps = 30;
        // forward only
        let t0 = Instant::now();
        for _ in 0..reps {
            let mut lane0 = 0;
            while lane0 < b.n_lanes {
                let n = (b.n_lanes - lane0).min(CHUNK);
                b.prog.forward_chunk(&inputs, lane0, n, &mut buf);
                lane0 += n;
            }
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;
        // forward + reverse
        let seeds = vec![[1.0; CHUNK]; b.prog.n_outputs()];
        let mut grad = vec![0.0; params.len()];
        let t0 = Instant::now();
        for _ in 0..reps {
            let mut lane0 = 0;
            while lane0 < b.n_lanes {
                let n = (b.n_lanes - lane0).min(CHUNK);
                b.prog.forward_chunk(&inputs, lane0, n, &mut buf);
                b.prog.reverse_chunk(&seeds, &mut buf, &mut grad);
                lane0 += n;
            }
        }
        let both = t0.elapsed().as_secs_f64() / reps as f64;
        let lane_ops = (b.prog.len() * n_chunks * CHUNK) as f64;
        println!(
            "batch{bi}: instrs={} lanes={} fwd={:.1}ms ({:.2}ns/op) fwd+rev={:.1}ms",
            b.prog.len(), b.n_lanes, fwd * 1e3, fwd * 1e9 / lane_ops, both * 1e3
        );
    }
}
