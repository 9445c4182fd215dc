//! End-to-end runs of the `thinfilm` binary and persistence round trips.

use proptest::prelude::*;
use std::path::Path;
use std::process::Command;

use thinfilm::config::{emit, parse_config, Experiment, NoiseConfig, RunConfig};
use thinfilm::io::{read_snapshot, verify_manifest, write_snapshot, Snapshot};
use thinfilm::spectral::{BasisSpec, Boundary, SpectralField};

const SMALL: &str = r#"
experiment = "simulate"

[model]
modes = 8

[sim]
h = 0.005
t_end = 1.0
burn_in = 0.25
ensemble = 2
seed = 4
"#;

fn thinfilm(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_thinfilm"))
        .args(args)
        .arg("--quiet")
        .current_dir(dir)
        .output()
        .unwrap()
}

fn digests(dir: &Path) -> Vec<(String, String)> {
    verify_manifest(dir)
        .unwrap()
        .files
        .into_iter()
        .map(|f| (f.path, f.sha256))
        .collect()
}

#[test]
fn simulate_is_reproducible_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.toml"), SMALL).unwrap();
    for (out, threads) in [("a", "1"), ("b", "2")] {
        let o = thinfilm(&["--config", "run.toml", "--out", out, "--threads", threads], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = digests(&tmp.path().join("a"));
    assert_eq!(a, digests(&tmp.path().join("b")));
    let names: Vec<&str> = a.iter().map(|(p, _)| p.as_str()).collect();
    assert_eq!(
        names,
        ["final_0000.tfsn", "final_0001.tfsn", "report.json", "series_0000.csv", "series_0001.csv"]
    );
    // --seed overrides the file and changes every sampled output.
    let o = thinfilm(&["--config", "run.toml", "--out", "c", "--seed", "5"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let c = digests(&tmp.path().join("c"));
    assert_ne!(a[0].1, c[0].1);
    assert_ne!(a[3].1, c[3].1);
}

#[test]
fn configuration_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "experiment = \"simulate\"\n[sim]\nh = \"fast\"\n")
        .unwrap();
    let o = thinfilm(&["--config", "bad.toml", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    std::fs::write(
        tmp.path().join("neg.toml"),
        "experiment = \"simulate\"\n[sim]\nh = -1.0\nrecord_stride = 0\n",
    )
    .unwrap();
    let o = thinfilm(&["--config", "neg.toml", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sim.h") && err.contains("sim.record_stride"), "{err}");
    assert!(!tmp.path().join("x").exists());
    let o = thinfilm(&["verify-phi", "--out", "phi"], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(tmp.path().join("phi/error.json").exists());
}

#[test]
fn divergence_exits_2_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("blow.toml"),
        "experiment = \"simulate\"\n[model]\nmodes = 8\nnu = -3.0\n[sim]\nh = 0.01\nt_end = 200.0\nburn_in = 0.0\nprobes = [\"l2_sq\"]\n",
    )
    .unwrap();
    let o = thinfilm(&["--config", "blow.toml", "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let report = std::fs::read_to_string(tmp.path().join("d/error.json")).unwrap();
    assert!(report.contains("\"divergence\"") && report.contains("l2_sq"), "{report}");
    verify_manifest(&tmp.path().join("d")).unwrap();
}

#[test]
fn order_and_refinement_commands_pass() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("order.toml"),
        "experiment = \"order-check\"\n[model]\nnoise = \"zero\"\n[sim]\nh = 0.02\nt_end = 1.0\n",
    )
    .unwrap();
    let o = thinfilm(&["--config", "order.toml", "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(
        tmp.path().join("refine.toml"),
        "experiment = \"refine-check\"\n[sim]\nh = 0.002\nt_end = 2.0\nseed = 1\n[params]\nmodes_list = [8, 16]\n",
    )
    .unwrap();
    let o = thinfilm(&["--config", "refine.toml", "--out", "r"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

fn config_strategy() -> impl Strategy<Value = RunConfig> {
    (
        prop::sample::select(Experiment::ALL.to_vec()),
        0.1f64..100.0,
        -5.0f64..5.0,
        any::<bool>(),
        1usize..300,
        1e-6f64..1.0,
        0.0f64..50.0,
        any::<u64>(),
        prop::option::of(prop::collection::vec(0.0f64..3.0, 300)),
    )
        .prop_map(|(e, length, nu, neumann, modes, h, t_end, seed, alphas)| {
            let mut c = RunConfig::new(e);
            c.model.length = length;
            c.model.nu = nu;
            c.model.boundary = if neumann { Boundary::Neumann } else { Boundary::Periodic };
            c.model.modes = modes;
            if let Some(a) = alphas {
                c.model.noise = NoiseConfig::Array { alphas: a };
            }
            c.sim.h = h;
            c.sim.t_end = t_end;
            c.sim.burn_in = Some(t_end / 2.0);
            c.sim.seed = seed;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(c in config_strategy()) {
        let text = emit(&c);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(emit(&back), text);
    }

    #[test]
    fn snapshot_round_trips(
        neumann in any::<bool>(),
        length in 0.01f64..1e3,
        nu in -10.0f64..10.0,
        modes in 1usize..40,
        times in prop::collection::vec(-1e3f64..1e3, 0..4),
        raw in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 80),
    ) {
        let basis = if neumann {
            BasisSpec::neumann(length, modes).unwrap()
        } else {
            BasisSpec::periodic(length, modes).unwrap()
        };
        let records = times
            .iter()
            .map(|&t| (t, SpectralField::from_coeffs(basis, raw[..basis.dim()].to_vec()).unwrap()))
            .collect();
        let snap = Snapshot { basis, nu, records };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap).unwrap();
        prop_assert_eq!(read_snapshot(&buf[..]).unwrap(), snap);
    }
}
