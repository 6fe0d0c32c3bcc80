//! Rough single-core timings for the batched network passes that dominate
//! PPO and TD3 training cost.

use mbb::nn::Mlp;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn bench_pass(label: &str, net: &Mlp, batch: usize, reps: usize, rng: &mut ChaCha12Rng) {
    let x = Array2::from_shape_fn((batch, net.in_dim()), |_| rng.random_range(-1.0..1.0));
    let og = Array2::from_shape_fn((batch, net.out_dim()), |_| rng.random_range(-1.0..1.0));
    let mut grads = vec![0.0; net.param_count()];
    let t0 = Instant::now();
    for _ in 0..reps {
        let trace = net.forward_batch(x.view());
        grads.fill(0.0);
        net.backward_batch(&trace, og.view(), &mut grads);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{label}: fwd+bwd batch {batch}: {:.3} ms", dt * 1e3);
}

fn main() {
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let ppo_actor = Mlp::new(&[11, 64, 64, 2], &mut rng);
    let ppo_value = Mlp::new(&[11, 64, 64, 1], &mut rng);
    let td3_critic = Mlp::new(&[13, 256, 256, 1], &mut rng);
    let td3_actor = Mlp::new(&[11, 256, 256, 2], &mut rng);
    bench_pass("ppo actor (64,64)", &ppo_actor, 256, 200, &mut rng);
    bench_pass("ppo value (64,64)", &ppo_value, 2048, 50, &mut rng);
    bench_pass("td3 critic (256,256)", &td3_critic, 256, 100, &mut rng);
    bench_pass("td3 actor (256,256)", &td3_actor, 256, 100, &mut rng);

    // Single-sample inference cost (rollout hot path).
    let x1 = vec![0.3; 11];
    let t0 = Instant::now();
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        acc += ppo_actor.forward_trace(&x1).output()[0];
    }
    println!("ppo actor single fwd: {:.2} us (acc {acc:.3})", t0.elapsed().as_secs_f64() / n as f64 * 1e6);
    let t0 = Instant::now();
    let n2 = 20_000;
    for _ in 0..n2 {
        acc += td3_actor.forward_trace(&x1).output()[0];
    }
    println!("td3 actor single fwd: {:.2} us (acc {acc:.3})", t0.elapsed().as_secs_f64() / n2 as f64 * 1e6);
}
