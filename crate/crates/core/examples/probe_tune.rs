use otlab::experiments::{track_2d_training, Track2dOptions};
use otlab::gan_lab::{LossKind, TrainConfig};
use otlab::measures::euclidean;
use otlab::rng::RngSeed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ng: usize = args[1].parse().unwrap();
    let lr: f64 = args[2].parse().unwrap();
    let seed: u64 = args[3].parse().unwrap();
    let nd: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(5);
    let t0 = std::time::Instant::now();
    let mut cfg = TrainConfig::new(LossKind::WganGp, RngSeed::new(seed, 0));
    cfg.n_g = ng;
    cfg.n_d = nd;
    cfg.adam_lr = lr;
    let opts = Track2dOptions { eval_every: 100, ..Default::default() };
    let (res, run) = track_2d_training(&cfg, &opts).unwrap();
    let proxy_idx = res.column_index("proxy_w1").unwrap();
    let traj: Vec<String> = res
        .rows
        .iter()
        .filter(|r| !r[proxy_idx].is_nan())
        .map(|r| format!("{}:{:.3}", r[0], r[proxy_idx]))
        .collect();
    println!("lr {lr} nd {nd} seed {seed}: W1 trajectory {}", traj.join(" "));
    // Mode histogram of 1000 generated samples.
    let centers: Vec<[f64; 2]> = (0..8)
        .map(|i| {
            let ang = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
            [2.0 * ang.cos(), 2.0 * ang.sin()]
        })
        .collect();
    let gen_spec = otlab::nn::MlpSpec::new(vec![2, 128, 128, 128, 2], otlab::nn::Activation::Tanh).unwrap();
    let samples = otlab::gan_lab::generator_measure(&gen_spec, &run.params, 2, 1000, RngSeed::new(seed, 0).derive(999)).unwrap();
    let mut hist = [0usize; 8];
    let mut within = [f64::INFINITY; 8];
    for p in samples.iter_points() {
        let (best, dist) = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, euclidean(p, c)))
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
            .unwrap();
        hist[best] += 1;
        if dist < within[best] {
            within[best] = dist;
        }
    }
    println!(
        "hist {:?} min-dists {:?} max {:.3} ratio-summary ratio {:.3} elapsed {:?}",
        hist,
        within.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        res.summary("max_mode_min_distance").unwrap().mean,
        res.summary("final_ratio_w1_over_normalized").unwrap().mean,
        t0.elapsed()
    );
}
