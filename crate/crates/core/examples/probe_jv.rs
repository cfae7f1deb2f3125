use otlab::exact_ot::{assignment_w1, exact_w1};
use otlab::measures::{sample, DistributionSpec};
use otlab::rng::RngSeed;
use std::io::Write;

fn main() {
    // Cross-check JV vs the independent flow LP on mid-size instances.
    for s in 0..5u64 {
        let a = sample(&DistributionSpec::StandardGaussian { d: 20 }, 200, RngSeed::new(042, 2 * s)).unwrap();
        let b = sample(&DistributionSpec::StandardGaussian { d: 20 }, 200, RngSeed::new(042, 2 * s + 1)).unwrap();
        let jv = assignment_w1(&a, &b).unwrap().value;
        let lp = exact_w1(&a, &b).unwrap().value;
        println!("n=200 seed {s}: jv {jv:.12} lp {lp:.12} diff {:.2e}", (jv - lp).abs());
    }
    // Dump one n=1000 instance for scipy cross-check.
    let a = sample(&DistributionSpec::StandardGaussian { d: 20 }, 1000, RngSeed::new(7, 0)).unwrap();
    let b = sample(&DistributionSpec::StandardGaussian { d: 20 }, 1000, RngSeed::new(7, 1)).unwrap();
    let t0 = std::time::Instant::now();
    let jv = assignment_w1(&a, &b).unwrap().value;
    println!("n=1000 jv value {jv:.12} in {:?}", t0.elapsed());
    let mut f = std::fs::File::create("/tmp/points_a.csv").unwrap();
    for p in a.iter_points() {
        writeln!(f, "{}", p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")).unwrap();
    }
    let mut f = std::fs::File::create("/tmp/points_b.csv").unwrap();
    for p in b.iter_points() {
        writeln!(f, "{}", p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")).unwrap();
    }
}
