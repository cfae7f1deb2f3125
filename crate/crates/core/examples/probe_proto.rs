use otlab::experiments::{protocol_variant, ProtocolVariant};
use otlab::gan_lab::{CtransformSupport, LossKind, TrainConfig};
use otlab::measures::{sample, DistributionSpec};
use otlab::nn::{Activation, MlpSpec};
use otlab::rng::RngSeed;

fn main() {
    let t0 = std::time::Instant::now();
    let seed = RngSeed::new(0, 0);
    let mixture = DistributionSpec::ring_mixture(8, 2.0, 0.05);
    let a = sample(&mixture, 500, seed.derive(101)).unwrap();
    let b = sample(&DistributionSpec::StandardGaussian { d: 2 }, 500, seed.derive(102)).unwrap();
    let disc_spec = MlpSpec::new(vec![2, 128, 128, 128, 1], Activation::Tanh).unwrap();

    for (label, loss) in [
        ("ctransform", LossKind::CTransform { support: CtransformSupport::RealBatch }),
        ("wgan-gp", LossKind::WganGp),
    ] {
        let mut cfg = TrainConfig::new(loss, seed);
        cfg.batch_n = 64;
        let res = protocol_variant(ProtocolVariant::Mallasto, &a, &b, &disc_spec, &cfg, 2000, 100, seed).unwrap();
        println!(
            "{label}: mean abs rel deviation {:.4} ({:?})",
            res.summary("mean_abs_rel_deviation").unwrap().mean,
            t0.elapsed()
        );
    }
}
