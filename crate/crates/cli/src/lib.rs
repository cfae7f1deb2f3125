//! Command-line surface: one subcommand per estimator/experiment, flat
//! key=value config overlays, seed-stamped CSV/JSON outputs, optional SVG
//! plots, and bit-exact replay from a manifest.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use otlab::clustering::k_gm_lloyd;
use otlab::entropic_ot::{sinkhorn_cost, sinkhorn_divergence, SinkhornParams};
use otlab::error::{Error, Result};
use otlab::exact_ot::{batch_w1, cost_matrix, exact_transport_cost};
use otlab::experiments::plot::{line_plot_svg, Series};
use otlab::experiments::{
    bernoulli_bias, false_minima, oracle_static, protocol_variant, sample_complexity,
    sinkhorn_complexity, track_2d_training, ExperimentResult, FalseMinimaOptions, ProtocolVariant,
    Track2dOptions,
};
use otlab::gan_lab::{
    train_gan, train_minibatch_sinkhorn, CtransformSupport, LossKind, TrainConfig, TrainRun,
};
use otlab::measures::{load_measure, sample, DistributionSpec, EmpiricalMeasure, LoadOptions};
use otlab::nn::{save_checkpoint, Activation, ConstraintMode, MlpSpec};
use otlab::rng::RngSeed;

#[derive(Parser, Debug)]
#[command(
    name = "otlab",
    version,
    about = "Exact and entropic Wasserstein estimators, k-medians clustering, and desk-scale GAN training diagnostics",
    args_override_self = true
)]
struct Cli {
    /// Master seed; all randomness flows from (seed, stream).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Stream index under the master seed.
    #[arg(long, global = true, default_value_t = 0)]
    stream: u64,
    /// Output directory for CSV/manifest/SVG files.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Also emit an SVG plot where one is defined.
    #[arg(long, global = true)]
    plot: bool,
    /// Worker threads for experiment repetitions (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Flat key=value file overlaying flag defaults (flags still win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact Wasserstein distance between two CSV point clouds.
    W1 {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Cost power p; reports the LP value (W_p^p for p > 1).
        #[arg(long, default_value_t = 1.0)]
        power: f64,
        /// Skip the first row of each file.
        #[arg(long)]
        header: bool,
        /// Treat the last column as a per-point weight.
        #[arg(long)]
        weight_col: bool,
    },
    /// Entropy-regularized cost or Sinkhorn divergence between two files.
    Sinkhorn {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Interpret epsilon as a multiple of the median pairwise cost.
        #[arg(long)]
        relative_epsilon: bool,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Plain-domain scaling instead of log-domain iterations.
        #[arg(long)]
        plain_domain: bool,
        /// Report the debiased divergence instead of the raw cost.
        #[arg(long)]
        divergence: bool,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        weight_col: bool,
    },
    /// Geometric k-medians clustering of a CSV point cloud.
    Kmedians {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        n_init: usize,
        #[arg(long)]
        header: bool,
        #[arg(long)]
        weight_col: bool,
    },
    /// Adversarial or minibatch-Sinkhorn generator training.
    Train {
        /// Target: gaussian:D | ring[:K,R,STD] | bernoulli:T | file:PATH.
        #[arg(long, default_value = "ring")]
        target: String,
        /// wgan-gp | wgan-clip:C | ctransform | ctransform-same | nsgan |
        /// minibatch-sinkhorn:EPS.
        #[arg(long, default_value = "wgan-gp")]
        loss: String,
        #[arg(long, default_value_t = 1000)]
        ng: usize,
        #[arg(long, default_value_t = 5)]
        nd: usize,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, default_value_t = 64)]
        batch_n: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value_t = 0.5)]
        beta1: f64,
        #[arg(long, default_value_t = 0.9)]
        beta2: f64,
        #[arg(long, default_value_t = 2)]
        latent_dim: usize,
        #[arg(long, default_value = "128,128,128")]
        gen_hidden: String,
        #[arg(long, default_value = "128,128,128")]
        disc_hidden: String,
        /// none | clip:C | row-normalize.
        #[arg(long, default_value = "none")]
        constraint: String,
        /// Skip resampling for the generator step (descend on -mean D(gen)).
        #[arg(long)]
        no_resample: bool,
        /// Solve the LP between the generator step's batches each iteration.
        #[arg(long)]
        log_batch_w1: bool,
        /// Evaluate a large-sample LP proxy every N iterations.
        #[arg(long)]
        eval_every: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        eval_n: usize,
    },
    /// Discriminator-oracle quality on two static measures.
    ExpOracleStatic {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Sample size used to materialize spec-valued measures.
        #[arg(long, default_value_t = 500)]
        support_n: usize,
        #[arg(long, default_value_t = 20_000)]
        iters: usize,
        #[arg(long, default_value_t = 64)]
        batch_n: usize,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value = "128,128,128")]
        disc_hidden: String,
    },
    /// Appendix protocol variants on static measures.
    ExpProtocol {
        /// stanczuk | pinetz | mallasto.
        #[arg(long)]
        variant: String,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 500)]
        support_n: usize,
        /// Loss driving the discriminator (wgan-gp or ctransform).
        #[arg(long, default_value = "wgan-gp")]
        loss: String,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        eval_batches: usize,
        #[arg(long, default_value_t = 64)]
        batch_n: usize,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value = "128,128,128")]
        disc_hidden: String,
    },
    /// Monte Carlo decay of E[W1(p_n, p~_n)] with log-log extrapolation.
    ExpSampleComplexity {
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value = "10,25,50,75,1000")]
        sizes: String,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
    /// Same protocol with the Sinkhorn divergence on paired draws.
    ExpSinkhornComplexity {
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 100.0)]
        epsilon: f64,
        #[arg(long, default_value = "500")]
        sizes: String,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
    /// Expected batch distance to real / mean / k-medians candidates.
    ExpFalseMinima {
        #[arg(long, default_value = "gaussian:20")]
        target: String,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Candidate support size (defaults to n).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1024)]
        reference_n: usize,
        #[arg(long, default_value_t = 100)]
        kgm_n_init: usize,
    },
    /// Exact Bernoulli gradient-bias enumeration.
    ExpBernoulli {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        theta_star: f64,
        /// Comma-separated grid of theta values in (0, 1).
        #[arg(long)]
        grid: String,
    },
    /// 2-D training with per-iteration loss vs LP tracking.
    ExpTrack2d {
        #[arg(long, default_value_t = 3000)]
        ng: usize,
        #[arg(long, default_value_t = 5)]
        nd: usize,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, default_value_t = 64)]
        batch_n: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr: f64,
        #[arg(long, default_value = "wgan-gp")]
        loss: String,
        #[arg(long, default_value_t = 2)]
        latent_dim: usize,
        #[arg(long, default_value_t = 100)]
        eval_every: usize,
        #[arg(long, default_value_t = 1000)]
        eval_n: usize,
        #[arg(long, default_value = "128,128,128")]
        gen_hidden: String,
        #[arg(long, default_value = "128,128,128")]
        disc_hidden: String,
        #[arg(long, default_value_t = 8)]
        modes: usize,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.05)]
        mode_std: f64,
    },
}

/// Entry point; returns the process exit code (0 success, 1 validation or
/// usage error, 2 numeric failure).
pub fn run<I>(argv: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    match dispatch(args) {
        Ok(()) => 0,
        Err(CliFailure::Help) => 0,
        Err(CliFailure::Usage(msg)) => {
            eprint!("{msg}");
            1
        }
        Err(CliFailure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Numeric(_) => 2,
                _ => 1,
            }
        }
    }
}

enum CliFailure {
    /// Help or version was printed.
    Help,
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliFailure {
    fn from(e: Error) -> Self {
        CliFailure::Lib(e)
    }
}

fn dispatch(mut args: Vec<String>) -> std::result::Result<(), CliFailure> {
    // --replay: substitute the manifest's argv, keeping any extra user args
    // (which then override, e.g. a different --out-dir).
    if let Some(pos) = args.iter().position(|a| a == "--replay") {
        if pos + 1 >= args.len() {
            return Err(CliFailure::Lib(Error::validation("--replay needs a manifest path")));
        }
        let manifest_path = args[pos + 1].clone();
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::ingestion(manifest_path.clone(), e.to_string()))?;
        let manifest: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::ingestion(manifest_path.clone(), e.to_string()))?;
        let stored: Vec<String> = manifest["argv"]
            .as_array()
            .ok_or_else(|| Error::ingestion(manifest_path.clone(), "manifest has no argv"))?
            .iter()
            .map(|v| v.as_str().unwrap_or_default().to_string())
            .collect();
        let mut merged = stored;
        merged.extend(args[..pos].iter().cloned());
        merged.extend(args[pos + 2..].iter().cloned());
        args = merged;
    }

    // Config overlay: inject key=value pairs right after the subcommand so
    // explicit flags (parsed later) win.
    if let Some(pos) = args.iter().position(|a| a == "--config") {
        if pos + 1 >= args.len() {
            return Err(CliFailure::Lib(Error::validation("--config needs a file path")));
        }
        let overlay = parse_config_file(Path::new(&args[pos + 1]))?;
        let sub_pos = args
            .iter()
            .position(|a| !a.starts_with('-'))
            .unwrap_or(args.len());
        let insert_at = (sub_pos + 1).min(args.len());
        let mut merged = args[..insert_at].to_vec();
        merged.extend(overlay);
        merged.extend(args[insert_at..].iter().cloned());
        args = merged;
    }

    let mut full = vec!["otlab".to_string()];
    full.extend(args.iter().cloned());
    let cli = Cli::try_parse_from(&full).map_err(|e| {
        let rendered = e.render().to_string();
        if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ) {
            print!("{rendered}");
            CliFailure::Help
        } else {
            CliFailure::Usage(rendered)
        }
    })?;

    if cli.jobs > 0 {
        // Ignore the error when a global pool already exists (tests call
        // run() repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }

    execute(&cli, &args).map_err(CliFailure::Lib)
}

fn seed_of(cli: &Cli) -> RngSeed {
    RngSeed::new(cli.seed, cli.stream)
}

fn load_opts(header: bool, weight_col: bool) -> LoadOptions {
    LoadOptions {
        skip_header: header,
        weight_column: weight_col,
    }
}

fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| Error::ingestion(cli.out_dir.display().to_string(), e.to_string()))?;
    let seed = seed_of(cli);

    match &cli.command {
        Command::W1 {
            a,
            b,
            power,
            header,
            weight_col,
        } => {
            let opts = load_opts(*header, *weight_col);
            let ma = load_measure(a, &opts)?;
            let mb = load_measure(b, &opts)?;
            let value = if *power == 1.0 {
                batch_w1(&ma, &mb)?
            } else {
                exact_transport_cost(&ma, &mb, *power)?
            };
            let res = ExperimentResult {
                name: "w1".into(),
                config: json!({"a": a, "b": b, "power": power, "options": opts}),
                seed,
                columns: vec!["value".into()],
                rows: vec![vec![value]],
                summaries: vec![],
                fit: None,
                wall_time_s: 0.0,
            };
            write_outputs(cli, &res, argv)?;
            println!("{value}");
            Ok(())
        }
        Command::Sinkhorn {
            a,
            b,
            epsilon,
            relative_epsilon,
            max_iter,
            tol,
            plain_domain,
            divergence,
            header,
            weight_col,
        } => {
            let opts = load_opts(*header, *weight_col);
            let ma = load_measure(a, &opts)?;
            let mb = load_measure(b, &opts)?;
            let eps_abs = if *relative_epsilon {
                epsilon * cost_matrix(&ma, &mb, 1.0)?.median()
            } else {
                *epsilon
            };
            let mut params = SinkhornParams::new(eps_abs)
                .with_max_iter(*max_iter)
                .with_tol(*tol);
            if *plain_domain {
                params = params.plain_domain();
            }
            let (value, converged, iters) = if *divergence {
                let div = sinkhorn_divergence(&ma, &mb, &params)?;
                let it = div.states.iter().map(|s| s.iterations_used).max().unwrap();
                (div.value, div.all_converged(), it)
            } else {
                let (v, st) = sinkhorn_cost(&ma, &mb, &params)?;
                (v, st.converged, st.iterations_used)
            };
            let res = ExperimentResult {
                name: "sinkhorn".into(),
                config: json!({
                    "a": a, "b": b, "epsilon": epsilon, "epsilon_abs": eps_abs,
                    "relative": relative_epsilon, "max_iter": max_iter, "tol": tol,
                    "plain_domain": plain_domain, "divergence": divergence,
                }),
                seed,
                columns: vec!["value".into(), "converged".into(), "iterations".into()],
                rows: vec![vec![value, converged as u8 as f64, iters as f64]],
                summaries: vec![],
                fit: None,
                wall_time_s: 0.0,
            };
            write_outputs(cli, &res, argv)?;
            println!("{value}{}", if converged { "" } else { " (unconverged)" });
            if !converged {
                return Err(Error::numeric(format!(
                    "sinkhorn did not converge within {max_iter} sweeps"
                )));
            }
            Ok(())
        }
        Command::Kmedians {
            data,
            k,
            n_init,
            header,
            weight_col,
        } => {
            let opts = load_opts(*header, *weight_col);
            let m = load_measure(data, &opts)?;
            let cs = k_gm_lloyd(&m, *k, *n_init, seed)?;
            let d = cs.dim;
            let mut mass = vec![0.0; cs.k()];
            for (i, &a) in cs.assignment.iter().enumerate() {
                mass[a] += m.weights()[i];
            }
            let mut columns: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
            columns.push("mass".into());
            let rows: Vec<Vec<f64>> = (0..cs.k())
                .map(|c| {
                    let mut row = cs.centroid(c).to_vec();
                    row.push(mass[c]);
                    row
                })
                .collect();
            let res = ExperimentResult {
                name: "kmedians".into(),
                config: json!({"data": data, "k": k, "n_init": n_init, "objective": cs.objective}),
                seed,
                columns,
                rows,
                summaries: vec![],
                fit: None,
                wall_time_s: 0.0,
            };
            write_outputs(cli, &res, argv)?;
            println!("k = {k}, objective {}", cs.objective);
            Ok(())
        }
        Command::Train {
            target,
            loss,
            ng,
            nd,
            lambda,
            batch_n,
            lr,
            beta1,
            beta2,
            latent_dim,
            gen_hidden,
            disc_hidden,
            constraint,
            no_resample,
            log_batch_w1,
            eval_every,
            eval_n,
        } => {
            let target = parse_spec(target)?;
            let data_dim = target.dim()?;
            let loss_kind = parse_loss(loss)?;
            let mut cfg = TrainConfig::new(loss_kind, seed);
            cfg.n_g = *ng;
            cfg.n_d = *nd;
            cfg.lambda = *lambda;
            cfg.batch_n = *batch_n;
            cfg.adam_lr = *lr;
            cfg.adam_beta1 = *beta1;
            cfg.adam_beta2 = *beta2;
            cfg.latent_dim = *latent_dim;
            cfg.constraint = parse_constraint(constraint)?;
            cfg.resample_generator_batches = !no_resample;
            cfg.log_batch_w1 = *log_batch_w1;
            cfg.eval = eval_every.map(|every| otlab::gan_lab::EvalConfig { every, n: *eval_n });

            let gen_spec = mlp_spec(*latent_dim, gen_hidden, data_dim)?;
            let run = match loss_kind {
                LossKind::MinibatchSinkhorn { .. } => {
                    train_minibatch_sinkhorn(&target, &gen_spec, &cfg)?
                }
                _ => {
                    let disc_spec = mlp_spec(data_dim, disc_hidden, 1)?;
                    train_gan(&target, &gen_spec, &disc_spec, &cfg)?
                }
            };
            finish_training(cli, argv, "train", &gen_spec, &cfg, &run, &target)
        }
        Command::ExpOracleStatic {
            a,
            b,
            support_n,
            iters,
            batch_n,
            lambda,
            lr,
            disc_hidden,
        } => {
            let ma = materialize(a, *support_n, seed.derive(101))?;
            let mb = materialize(b, *support_n, seed.derive(102))?;
            let mut cfg = TrainConfig::new(LossKind::WganGp, seed);
            cfg.batch_n = *batch_n;
            cfg.lambda = *lambda;
            cfg.adam_lr = *lr;
            let disc_spec = mlp_spec(ma.dim(), disc_hidden, 1)?;
            let res = oracle_static(&ma, &mb, &disc_spec, &cfg, *iters, seed)?;
            write_outputs(cli, &res, argv)?;
            println!(
                "w1_disc {} normalized {} lp {}",
                res.summary("w1_disc_raw").unwrap().mean,
                res.summary("normalized_lower").unwrap().mean,
                res.summary("lp_w1").unwrap().mean
            );
            Ok(())
        }
        Command::ExpProtocol {
            variant,
            a,
            b,
            support_n,
            loss,
            iters,
            eval_batches,
            batch_n,
            lambda,
            lr,
            disc_hidden,
        } => {
            let variant = match variant.as_str() {
                "stanczuk" => ProtocolVariant::Stanczuk,
                "pinetz" => ProtocolVariant::Pinetz,
                "mallasto" => ProtocolVariant::Mallasto,
                other => {
                    return Err(Error::validation(format!("unknown protocol variant {other:?}")))
                }
            };
            let ma = materialize(a, *support_n, seed.derive(101))?;
            let mb = materialize(b, *support_n, seed.derive(102))?;
            let mut cfg = TrainConfig::new(parse_loss(loss)?, seed);
            cfg.batch_n = *batch_n;
            cfg.lambda = *lambda;
            cfg.adam_lr = *lr;
            let disc_spec = mlp_spec(ma.dim(), disc_hidden, 1)?;
            let res = protocol_variant(variant, &ma, &mb, &disc_spec, &cfg, *iters, *eval_batches, seed)?;
            write_outputs(cli, &res, argv)?;
            match variant {
                ProtocolVariant::Mallasto => println!(
                    "mean abs relative deviation {}",
                    res.summary("mean_abs_rel_deviation").unwrap().mean
                ),
                _ => println!(
                    "w1_disc {} lp {}",
                    res.summary("w1_disc_raw").unwrap().mean,
                    res.summary("lp_w1").unwrap().mean
                ),
            }
            Ok(())
        }
        Command::ExpSampleComplexity { d, sizes, reps } => {
            let sizes = parse_usize_list(sizes)?;
            let spec = DistributionSpec::StandardGaussian { d: *d };
            let (res, fit) = sample_complexity(*d, &sizes, *reps, &spec, seed)?;
            write_outputs(cli, &res, argv)?;
            if cli.plot {
                let pts: Vec<(f64, f64)> = sizes
                    .iter()
                    .filter_map(|n| res.summary(&format!("w1_n{n}")).map(|s| (*n as f64, s.mean)))
                    .collect();
                plot_file(
                    cli,
                    &res.name,
                    "empirical W1 decay",
                    "n",
                    "mean W1",
                    &[Series {
                        label: "mean W1",
                        points: pts,
                    }],
                    true,
                    true,
                )?;
            }
            println!(
                "slope {} r2 {} n(err=0.1) {:.3e}",
                fit.slope, fit.r2, fit.extrapolations[0].1
            );
            Ok(())
        }
        Command::ExpSinkhornComplexity {
            d,
            epsilon,
            sizes,
            reps,
        } => {
            let sizes = parse_usize_list(sizes)?;
            let res = sinkhorn_complexity(*d, *epsilon, &sizes, *reps, seed)?;
            write_outputs(cli, &res, argv)?;
            if cli.plot {
                let s_pts: Vec<(f64, f64)> = sizes
                    .iter()
                    .filter_map(|n| {
                        res.summary(&format!("sinkhorn_n{n}")).map(|s| (*n as f64, s.mean))
                    })
                    .collect();
                let w_pts: Vec<(f64, f64)> = sizes
                    .iter()
                    .filter_map(|n| res.summary(&format!("w1_n{n}")).map(|s| (*n as f64, s.mean)))
                    .collect();
                plot_file(
                    cli,
                    &res.name,
                    "sinkhorn vs exact sample complexity",
                    "n",
                    "mean value",
                    &[
                        Series {
                            label: "sinkhorn divergence",
                            points: s_pts,
                        },
                        Series {
                            label: "exact W1",
                            points: w_pts,
                        },
                    ],
                    true,
                    false,
                )?;
            }
            let n0 = sizes[0];
            println!("ratio at n={} is {}", n0, res.summary(&format!("ratio_n{n0}")).unwrap().mean);
            Ok(())
        }
        Command::ExpFalseMinima {
            target,
            n,
            reps,
            k,
            reference_n,
            kgm_n_init,
        } => {
            let spec = parse_spec(target)?;
            let opts = FalseMinimaOptions {
                reference_n: *reference_n,
                kgm_n_init: *kgm_n_init,
            };
            let res = false_minima(&spec, *n, *reps, k.unwrap_or(*n), &opts, seed)?;
            write_outputs(cli, &res, argv)?;
            if cli.plot {
                let series: Vec<Series> = [("real", 1usize), ("mean", 2), ("kgm", 3)]
                    .iter()
                    .map(|(label, idx)| Series {
                        label,
                        points: res.rows.iter().map(|r| (r[0], r[*idx])).collect(),
                    })
                    .collect();
                plot_file(cli, &res.name, "batch distance to candidates", "rep", "W1", &series, false, false)?;
            }
            println!(
                "real {} mean {} kgm {}",
                res.summary("w1_real_batch").unwrap().mean,
                res.summary("w1_mean_batch").unwrap().mean,
                res.summary("w1_kgm_batch").unwrap().mean
            );
            Ok(())
        }
        Command::ExpBernoulli { n, theta_star, grid } => {
            let grid = parse_f64_list(grid)?;
            let res = bernoulli_bias(*n, *theta_star, &grid, seed)?;
            write_outputs(cli, &res, argv)?;
            if cli.plot {
                let bias_idx = res.column_index("bias").unwrap();
                let pts: Vec<(f64, f64)> = res
                    .rows
                    .iter()
                    .filter(|r| !r[bias_idx].is_nan())
                    .map(|r| (r[0], r[bias_idx]))
                    .collect();
                plot_file(
                    cli,
                    &res.name,
                    "sample-gradient bias",
                    "theta",
                    "bias",
                    &[Series {
                        label: "bias",
                        points: pts,
                    }],
                    false,
                    false,
                )?;
            }
            println!(
                "theta_bar {} max_bias {}",
                res.summary("theta_bar").unwrap().mean,
                res.summary("max_bias_smooth").unwrap().mean
            );
            Ok(())
        }
        Command::ExpTrack2d {
            ng,
            nd,
            lambda,
            batch_n,
            lr,
            loss,
            latent_dim,
            eval_every,
            eval_n,
            gen_hidden,
            disc_hidden,
            modes,
            radius,
            mode_std,
        } => {
            let mut cfg = TrainConfig::new(parse_loss(loss)?, seed);
            cfg.n_g = *ng;
            cfg.n_d = *nd;
            cfg.lambda = *lambda;
            cfg.batch_n = *batch_n;
            cfg.adam_lr = *lr;
            cfg.latent_dim = *latent_dim;
            let opts = Track2dOptions {
                gen_hidden: parse_usize_list(gen_hidden)?,
                disc_hidden: parse_usize_list(disc_hidden)?,
                modes: *modes,
                radius: *radius,
                mode_std: *mode_std,
                eval_every: *eval_every,
                eval_n: *eval_n,
            };
            let (res, run) = track_2d_training(&cfg, &opts)?;
            write_outputs(cli, &res, argv)?;
            if cli.plot {
                let proxy_idx = res.column_index("proxy_w1").unwrap();
                let norm_idx = res.column_index("normalized_loss").unwrap();
                let proxy: Vec<(f64, f64)> = res
                    .rows
                    .iter()
                    .filter(|r| !r[proxy_idx].is_nan())
                    .map(|r| (r[0] + 1.0, r[proxy_idx]))
                    .collect();
                let norm: Vec<(f64, f64)> = res
                    .rows
                    .iter()
                    .filter(|r| !r[norm_idx].is_nan())
                    .map(|r| (r[0] + 1.0, r[norm_idx]))
                    .collect();
                plot_file(
                    cli,
                    &res.name,
                    "true W1 vs normalized loss",
                    "iteration",
                    "value",
                    &[
                        Series {
                            label: "proxy W1 (LP)",
                            points: proxy,
                        },
                        Series {
                            label: "normalized loss",
                            points: norm,
                        },
                    ],
                    false,
                    true,
                )?;
            }
            println!(
                "final W1 {} normalized loss {} ratio {}",
                res.summary("final_proxy_w1").unwrap().mean,
                res.summary("final_normalized_loss").unwrap().mean,
                res.summary("final_ratio_w1_over_normalized").unwrap().mean
            );
            if let Some(it) = run.diverged_at {
                return Err(Error::numeric(format!("training diverged at iteration {it}")));
            }
            Ok(())
        }
    }
}

fn finish_training(
    cli: &Cli,
    argv: &[String],
    name: &str,
    gen_spec: &MlpSpec,
    cfg: &TrainConfig,
    run: &TrainRun,
    target: &DistributionSpec,
) -> Result<()> {
    let csv_path = cli.out_dir.join(format!("{name}.csv"));
    run.log.write_csv(&csv_path)?;
    let ckpt_path = cli.out_dir.join(format!("{name}_generator.ckpt"));
    save_checkpoint(&ckpt_path, gen_spec, &run.params)?;
    let manifest = json!({
        "argv": argv,
        "name": name,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "target": target,
        "gen_spec": gen_spec,
        "diverged_at": run.diverged_at,
        "records": run.log.records.len(),
        "csv": csv_path.file_name().map(|s| s.to_string_lossy().to_string()),
        "checkpoint": ckpt_path.file_name().map(|s| s.to_string_lossy().to_string()),
    });
    let manifest_path = cli.out_dir.join(format!("{name}.manifest.json"));
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::ingestion(manifest_path.display().to_string(), e.to_string()))?;
    let last = run.log.records.last();
    println!(
        "trained {} iterations, final gen loss {}",
        run.log.records.len(),
        last.map(|r| r.gen_loss).unwrap_or(f64::NAN)
    );
    if let Some(it) = run.diverged_at {
        return Err(Error::numeric(format!(
            "training diverged at iteration {it}; checkpoint written to {}",
            ckpt_path.display()
        )));
    }
    Ok(())
}

fn write_outputs(cli: &Cli, res: &ExperimentResult, argv: &[String]) -> Result<()> {
    let csv_path = cli.out_dir.join(format!("{}.csv", res.name));
    res.write_csv(&csv_path)?;
    let mut manifest = res.manifest_json();
    manifest["argv"] = json!(argv);
    manifest["csv"] = json!(csv_path.file_name().map(|s| s.to_string_lossy().to_string()));
    let manifest_path = cli.out_dir.join(format!("{}.manifest.json", res.name));
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::ingestion(manifest_path.display().to_string(), e.to_string()))?;
    Ok(())
}

fn plot_file(
    cli: &Cli,
    name: &str,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    logx: bool,
    logy: bool,
) -> Result<()> {
    let path = cli.out_dir.join(format!("{name}.svg"));
    line_plot_svg(&path, title, xlabel, ylabel, series, logx, logy)
}

/// gaussian:D | ring[:K,R,STD] | bernoulli:T | file:PATH (bare paths allowed).
pub fn parse_spec(s: &str) -> Result<DistributionSpec> {
    if let Some(rest) = s.strip_prefix("gaussian:") {
        let d: usize = rest
            .parse()
            .map_err(|_| Error::validation(format!("bad gaussian dimension {rest:?}")))?;
        return Ok(DistributionSpec::StandardGaussian { d });
    }
    if s == "ring" {
        return Ok(DistributionSpec::ring_mixture(8, 2.0, 0.05));
    }
    if let Some(rest) = s.strip_prefix("ring:") {
        let parts = parse_f64_list(rest)?;
        if parts.len() != 3 {
            return Err(Error::validation("ring spec needs K,RADIUS,STD"));
        }
        return Ok(DistributionSpec::ring_mixture(parts[0] as usize, parts[1], parts[2]));
    }
    if let Some(rest) = s.strip_prefix("bernoulli:") {
        let theta: f64 = rest
            .parse()
            .map_err(|_| Error::validation(format!("bad bernoulli theta {rest:?}")))?;
        return Ok(DistributionSpec::Bernoulli { theta });
    }
    let path = s.strip_prefix("file:").unwrap_or(s);
    Ok(DistributionSpec::FromFile {
        path: path.to_string(),
        options: LoadOptions::default(),
    })
}

/// Static measure from a spec string: files load verbatim, synthetic specs
/// materialize with `support_n` samples.
fn materialize(s: &str, support_n: usize, seed: RngSeed) -> Result<EmpiricalMeasure> {
    match parse_spec(s)? {
        DistributionSpec::FromFile { path, options } => load_measure(Path::new(&path), &options),
        spec => sample(&spec, support_n, seed),
    }
}

pub fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "wgan-gp" => Ok(LossKind::WganGp),
        "ctransform" => Ok(LossKind::CTransform {
            support: CtransformSupport::RealBatch,
        }),
        "ctransform-same" => Ok(LossKind::CTransform {
            support: CtransformSupport::GeneratedBatch,
        }),
        "nsgan" => Ok(LossKind::NsGan),
        other => {
            if let Some(c) = other.strip_prefix("wgan-clip:") {
                let c: f64 = c
                    .parse()
                    .map_err(|_| Error::validation(format!("bad clip constant {c:?}")))?;
                return Ok(LossKind::WganClip { c });
            }
            if let Some(eps) = other.strip_prefix("minibatch-sinkhorn:") {
                let epsilon: f64 = eps
                    .parse()
                    .map_err(|_| Error::validation(format!("bad epsilon {eps:?}")))?;
                return Ok(LossKind::MinibatchSinkhorn { epsilon });
            }
            Err(Error::validation(format!("unknown loss {other:?}")))
        }
    }
}

pub fn parse_constraint(s: &str) -> Result<ConstraintMode> {
    match s {
        "none" => Ok(ConstraintMode::None),
        "row-normalize" => Ok(ConstraintMode::RowNormalize),
        other => {
            if let Some(c) = other.strip_prefix("clip:") {
                let c: f64 = c
                    .parse()
                    .map_err(|_| Error::validation(format!("bad clip constant {c:?}")))?;
                if c <= 0.0 {
                    return Err(Error::validation("clip constant must be positive"));
                }
                return Ok(ConstraintMode::WeightClip { c });
            }
            Err(Error::validation(format!("unknown constraint {other:?}")))
        }
    }
}

fn mlp_spec(input: usize, hidden: &str, output: usize) -> Result<MlpSpec> {
    let mut widths = vec![input];
    widths.extend(parse_usize_list(hidden)?);
    widths.push(output);
    MlpSpec::new(widths, Activation::Tanh)
}

pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::validation(format!("bad integer {t:?} in list")))
        })
        .collect()
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("bad float {t:?} in list")))
        })
        .collect()
}

/// `key = value` lines become `--key=value` args; `key = true` becomes a
/// bare `--key` flag. `#` starts a comment.
fn parse_config_file(path: &Path) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
    let mut args = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::ingestion(
                path.display().to_string(),
                format!("line {}: expected key=value", i + 1),
            )
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(Error::ingestion(
                path.display().to_string(),
                format!("line {}: empty key or value", i + 1),
            ));
        }
        if value == "true" {
            args.push(format!("--{key}"));
        } else if value == "false" {
            // Flag left at its default.
        } else {
            args.push(format!("--{key}={value}"));
        }
    }
    Ok(args)
}
