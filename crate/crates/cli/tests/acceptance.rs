//! Acceptance criterion 14: any experiment replayed from its manifest
//! reproduces its raw CSV bit for bit.

use otlab_cli::run;

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

fn run_and_replay(name: &str, argv: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("original");
    let mut first = args(argv);
    first.extend(args(&["--out-dir", out1.to_str().unwrap()]));
    assert_eq!(run(first), 0, "original run failed for {name}");
    let csv1 = std::fs::read(out1.join(format!("{name}.csv"))).unwrap();

    let out2 = dir.path().join("replayed");
    let manifest = out1.join(format!("{name}.manifest.json"));
    let code = run(args(&[
        "--replay",
        manifest.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
    ]));
    assert_eq!(code, 0, "replay failed for {name}");
    let csv2 = std::fs::read(out2.join(format!("{name}.csv"))).unwrap();
    let ok = csv1 == csv2;
    println!(
        "[acceptance] criterion 14 replay of {name} reproduces CSV bit-for-bit: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}

#[test]
fn criterion_14_replay_bit_exact() {
    run_and_replay(
        "bernoulli-bias",
        &["exp-bernoulli", "--n", "16", "--theta-star", "0.37", "--grid", "0.2,0.4,0.6,0.8", "--seed", "5"],
    );
    run_and_replay(
        "sample-complexity",
        &["exp-sample-complexity", "--d", "3", "--sizes", "10,20,40", "--reps", "8", "--seed", "9", "--jobs", "2"],
    );
    run_and_replay(
        "false-minima",
        &[
            "exp-false-minima",
            "--target",
            "gaussian:4",
            "--n",
            "16",
            "--reps",
            "10",
            "--reference-n",
            "128",
            "--kgm-n-init",
            "3",
            "--seed",
            "3",
        ],
    );
    run_and_replay(
        "sinkhorn-complexity",
        &["exp-sinkhorn-complexity", "--d", "4", "--epsilon", "10", "--sizes", "30", "--reps", "6", "--seed", "2"],
    );
}
