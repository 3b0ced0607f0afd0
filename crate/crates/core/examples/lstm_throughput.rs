//! Times forward and backward passes of the feature-imitation LSTM stack.
//!
//! `cargo run --release --example lstm_throughput -- [batch] [repeats]`

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semg_fin::nn::{BiLstm, Module, Tensor};

fn main() {
    let mut args = std::env::args().skip(1).map(|v| v.parse::<usize>().ok());
    let batch = args.next().flatten().unwrap_or(32);
    let repeats = args.next().flatten().unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = BiLstm::<f64>::new(600, 1, 32, 3, &mut rng);
    let x = Tensor::from_vec(&[batch, 600, 1], (0..batch * 600).map(|k| (k as f64 * 0.01).sin()).collect()).unwrap();
    for _ in 0..repeats {
        let t0 = Instant::now();
        let (y, cache) = net.forward(&x).unwrap();
        let fwd = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        net.backward(&cache, &Tensor::full(y.shape(), 1.0));
        let bwd = t1.elapsed().as_secs_f64();
        println!(
            "batch {batch}: forward {:.1} ms/seq, backward {:.1} ms/seq, params {}",
            1e3 * fwd / batch as f64,
            1e3 * bwd / batch as f64,
            net.param_count()
        );
    }
}
