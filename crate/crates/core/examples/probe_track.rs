use otlab::experiments::{track_2d_training, Track2dOptions};
use otlab::gan_lab::{LossKind, TrainConfig};
use otlab::rng::RngSeed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ng: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(100);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0);
    let t0 = std::time::Instant::now();
    let mut cfg = TrainConfig::new(LossKind::WganGp, RngSeed::new(seed, 0));
    cfg.n_g = ng;
    let opts = Track2dOptions::default();
    let (res, run) = track_2d_training(&cfg, &opts).unwrap();
    println!("ng {ng} seed {seed}: elapsed {:?} diverged {:?}", t0.elapsed(), run.diverged_at);
    println!(
        "final proxy W1 {:.4} normalized {:.4} ratio {:.3} max mode dist {:.4}",
        res.summary("final_proxy_w1").unwrap().mean,
        res.summary("final_normalized_loss").unwrap().mean,
        res.summary("final_ratio_w1_over_normalized").unwrap().mean,
        res.summary("max_mode_min_distance").unwrap().mean,
    );
}
