use otlab::experiments::sample_complexity;
use otlab::measures::DistributionSpec;
use otlab::rng::RngSeed;

fn main() {
    let t0 = std::time::Instant::now();
    let spec = DistributionSpec::StandardGaussian { d: 20 };
    let (res, fit) = sample_complexity(20, &[10, 25, 50, 75, 1000], 30, &spec, RngSeed::new(0, 0)).unwrap();
    for n in [10, 25, 50, 75, 1000] {
        let s = res.summary(&format!("w1_n{n}")).unwrap();
        println!("n {:5}: mean {:.4} std {:.4}", n, s.mean, s.std);
    }
    let m75 = res.summary("w1_n75").unwrap().mean;
    let m1000 = res.summary("w1_n1000").unwrap().mean;
    println!("ratio 1000/75 = {:.4} (drop {:.2}%)", m1000 / m75, 100.0 * (1.0 - m1000 / m75));
    println!("slope {:.4} intercept {:.4} r2 {:.4}", fit.slope, fit.intercept, fit.r2);
    for (t, n) in &fit.extrapolations {
        println!("err {t}: required n = {:.3e}", n);
    }
    println!("elapsed {:?}", t0.elapsed());
}
