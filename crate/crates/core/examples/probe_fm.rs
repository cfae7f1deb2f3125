use otlab::experiments::{false_minima, sinkhorn_complexity, FalseMinimaOptions};
use otlab::measures::DistributionSpec;
use otlab::rng::RngSeed;

fn main() {
    let t0 = std::time::Instant::now();
    for d in [2usize, 20] {
        let spec = DistributionSpec::StandardGaussian { d };
        let opts = FalseMinimaOptions::default();
        let res = false_minima(&spec, 64, 100, 64, &opts, RngSeed::new(0, 0)).unwrap();
        let real = res.summary("w1_real_batch").unwrap();
        let mean = res.summary("w1_mean_batch").unwrap();
        let kgm = res.summary("w1_kgm_batch").unwrap();
        println!(
            "d={d}: real {:.4}+-{:.4} mean {:.4}+-{:.4} kgm {:.4}+-{:.4} ({:?})",
            real.mean, real.ci95_half, mean.mean, mean.ci95_half, kgm.mean, kgm.ci95_half,
            t0.elapsed()
        );
    }
    let t1 = std::time::Instant::now();
    let res = sinkhorn_complexity(20, 100.0, &[500], 100, RngSeed::new(0, 0)).unwrap();
    println!(
        "sinkhorn d=20 eps=100 n=500: S {:.4} W1 {:.4} ratio {:.4} ({:?})",
        res.summary("sinkhorn_n500").unwrap().mean,
        res.summary("w1_n500").unwrap().mean,
        res.summary("ratio_n500").unwrap().mean,
        t1.elapsed()
    );
}
