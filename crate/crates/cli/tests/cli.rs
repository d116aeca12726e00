use std::path::Path;
use std::process::{Command, Output};

use erfact_cli::bench::{self, BenchConfig, Target};
use erfact_cli::report::{EpochRecord, RunReport, SeedRun};
use erfact_core::ActivationKind;
use proptest::prelude::*;

fn erfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erfact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gradcheck_passes_by_default() {
    let out = erfact(&["gradcheck"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    // Header plus dx and network rows for 12 kinds and dparams for 4.
    assert_eq!(text.lines().count(), 1 + 12 * 2 + 4);
    assert!(!text.contains("FAIL"));
}

#[test]
fn gradcheck_reports_an_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.cfg",
        "activations = erfact, pserf\ninject_fault = erfact_dx\n",
    );
    let out = erfact(&["gradcheck", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("erfact_dx"), "{err}");
    assert!(!err.contains("pserf_dx"), "{err}");
}

#[test]
fn gradcheck_rejects_an_empty_activation_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "activations =\n");
    assert_eq!(
        erfact(&["gradcheck", "--config", &cfg]).status.code(),
        Some(2)
    );
    assert!(erfact_cli::gradcheck::run(&[], |_| Vec::new(), None).is_err());
}

fn read_columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn curves_file_contents() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let status = erfact(&[
        "curves",
        "--kinds",
        "erfact,pserf,serf,swish",
        "--alpha",
        "0.5,1",
        "--beta",
        "1,2",
        "--xmin",
        "-4",
        "--xmax",
        "4",
        "--step",
        "0.001",
        "--out",
        out.to_str().unwrap(),
    ])
    .status;
    assert!(status.success());
    let (header, rows) = read_columns(&out);
    // x, then 4 erfact + 4 pserf + 1 serf + 2 swish curves with derivatives.
    assert_eq!(header.len(), 1 + 2 * 11);
    assert_eq!(rows.len(), 8001);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let zero = rows.iter().find(|r| r[0] == 0.0).unwrap();
    for (i, h) in header.iter().enumerate() {
        if h.starts_with("erfact(") {
            assert_eq!(zero[i], 0.0);
        }
    }
    let (p, s) = (col("pserf(1;1)"), col("serf"));
    assert!(rows.iter().all(|r| r[p].to_bits() == r[s].to_bits()));
    // Derivative columns against centred differences of the value columns.
    for (i, h) in header.iter().enumerate().skip(1).step_by(2) {
        let d = col(&format!("d_{h}"));
        for k in 1..rows.len() - 1 {
            let fd = (rows[k + 1][i] - rows[k - 1][i]) / (rows[k + 1][0] - rows[k - 1][0]);
            assert!((fd - rows[k][d]).abs() <= 1e-4, "{h} at {}", rows[k][0]);
        }
    }
}

#[test]
fn curves_reject_an_empty_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.csv");
    let o = erfact(&[
        "curves",
        "--xmin",
        "1",
        "--xmax",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = erfact(&["curves", "--out", "/nonexistent/dir/c.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_writes_one_summary_row_per_activation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t.cfg",
        "network = mlp2\ndataset = spirals\nsynth_samples = 200\nepochs = 2\nbatch_size = 32\n\
         lr = 0.01\nseeds = 1, 2, 3\nactivations = ReLU, ErfAct\n",
    );
    let out_dir = dir.path().join("run");
    let o = erfact(&[
        "train",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = String::from_utf8(o.stderr).unwrap();
    assert!(
        log.contains("alpha="),
        "learned parameters are logged: {log}"
    );
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("relu,3,") && lines[2].starts_with("erfact,3,"));
    let report = RunReport::parse(
        &std::fs::read_to_string(out_dir.join("report.csv")).unwrap(),
        Some(&std::fs::read_to_string(out_dir.join("timing.csv")).unwrap()),
    )
    .unwrap();
    assert_eq!(report.runs.len(), 6);
    assert!(report
        .runs
        .iter()
        .all(|r| r.epochs.len() == 2 && r.seconds > 0.0));
    for a in report.aggregates() {
        assert!(a.accuracy_min <= a.accuracy_mean && a.accuracy_mean <= a.accuracy_max);
    }
}

#[test]
fn train_input_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zero.cfg", "epochs = 0\n");
    assert_eq!(erfact(&["train", "--config", &cfg]).status.code(), Some(2));
    let missing = dir.path().join("nothing");
    let cfg = write(
        dir.path(),
        "nodata.cfg",
        &format!(
            "data_dir = {}\nout_dir = {}\n",
            missing.display(),
            dir.path().join("o").display()
        ),
    );
    let o = erfact(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!dir.path().join("o").exists(), "failed before any output");
    assert_eq!(
        erfact(&["train", "--config", "/no/such.cfg"]).status.code(),
        Some(3)
    );
    assert_eq!(erfact(&["bogus"]).status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_initial_weights_across_activations() {
    use erfact_core::nn::{InitScheme, ParamRole, Preset};
    let weights = |kind| {
        let mut net = Preset::Lenet
            .spec(kind, None, [1, 28, 28], 10)
            .build()
            .unwrap();
        net.init_weights(InitScheme::HeNormal, 3);
        net.params()
            .into_iter()
            .filter(|(_, r, _)| *r != ParamRole::Activation)
            .map(|(_, _, v)| v.to_vec())
            .collect::<Vec<_>>()
    };
    let relu = weights(ActivationKind::ReLU);
    for kind in [
        ActivationKind::ErfAct,
        ActivationKind::Pserf,
        ActivationKind::Mish,
    ] {
        assert_eq!(weights(kind), relu);
    }
}

#[test]
fn bench_reports_positive_times() {
    let cfg = BenchConfig {
        kinds: vec![ActivationKind::ReLU, ActivationKind::ErfAct],
        shape: [2, 1, 28, 28],
        repeats: 10,
        warmup: 2,
        ..BenchConfig::default()
    };
    let rows = bench::run(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!(r.forward.mean_us > 0.0 && r.backward.mean_us > 0.0);
        assert!(r.forward.std_us >= 0.0 && r.forward.std_us.is_finite());
    }
    assert!(bench::ratio_to_relu(&rows, Target::Network, ActivationKind::ErfAct).is_some());
    let o = erfact(&["bench", "--repeats", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

fn epoch() -> impl Strategy<Value = EpochRecord> {
    (
        1usize..100,
        0.0f64..1.0,
        any::<f64>(),
        -1e3f64..1e3,
        0.0f64..100.0,
        prop::collection::vec(
            (
                0usize..20,
                prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..3),
            ),
            0..3,
        ),
    )
        .prop_map(
            |(epoch, lr, train_loss, test_loss, test_accuracy, params)| EpochRecord {
                epoch,
                lr,
                train_loss: if train_loss.is_nan() { 0.0 } else { train_loss },
                test_loss,
                test_accuracy,
                params,
            },
        )
}

proptest! {
    #[test]
    fn report_csv_round_trips(
        runs in prop::collection::vec(
            (0usize..12, any::<u64>(), prop::collection::vec(epoch(), 1..4), 0.0f64..1e4),
            0..6,
        )
    ) {
        let mut report = RunReport::default();
        for (k, seed, epochs, seconds) in runs {
            // Adjacent runs must differ in (activation, seed) to stay distinct.
            if report.runs.last().is_some_and(|r: &SeedRun| r.seed == seed) {
                continue;
            }
            report.runs.push(SeedRun { activation: ActivationKind::ALL[k], seed, epochs, seconds });
        }
        let parsed = RunReport::parse(
            &report.report_csv().unwrap(),
            Some(&report.timing_csv().unwrap()),
        ).unwrap();
        prop_assert_eq!(parsed, report);
    }
}
