use apf_core::experiment::{
    catalog_entry, emit_plot_data, parse_plot_csv, run_experiment, write_outputs, write_plot_csv, ExperimentConfig,
    MseReport,
};

fn total(report: &MseReport, arm: &str) -> f64 {
    report.arm(arm).unwrap().mse.iter().sum()
}

fn reduced(id: &str) -> ExperimentConfig {
    ExperimentConfig {
        particles: 2000,
        runs: 100,
        ..catalog_entry(id).unwrap()
    }
}

#[test]
fn fully_adapted_matches_optimal_when_informative() {
    let r = run_experiment(&reduced("lingauss-fa-informative")).unwrap();
    let ratio = total(&r, "ssapf:fully-adapted:optimal") / total(&r, "ssapf:optimal-exact:optimal");
    assert!((ratio - 1.0).abs() < 0.1, "{ratio}");
    assert!(total(&r, "ssapf:fully-adapted:optimal") < total(&r, "bootstrap"));
}

#[test]
fn fully_adapted_matches_bootstrap_when_noninformative() {
    let r = run_experiment(&reduced("lingauss-fa-noninformative")).unwrap();
    let ratio = total(&r, "ssapf:fully-adapted:optimal") / total(&r, "bootstrap");
    assert!((0.75..1.33).contains(&ratio), "{ratio}");
}

#[test]
fn arch_ps_generic_is_bootstrap() {
    let r = run_experiment(&ExperimentConfig {
        particles: 500,
        runs: 10,
        ..catalog_entry("arch-informative").unwrap()
    })
    .unwrap();
    // Same particles; the constant first-stage weight only changes rounding.
    let (a, b) = (
        &r.arm("bootstrap").unwrap().estimates,
        &r.arm("ssapf:ps-generic").unwrap().estimates,
    );
    for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0), "{u} vs {v}");
        }
    }
}

#[test]
fn config_file_drives_a_run() {
    let text = "# small outlier run\nexperiment = outlier\nparticles = 300\nruns = 5\nseed = 3\narms = bootstrap, ssapf:optimal-exact\n";
    let config = ExperimentConfig::parse(text).unwrap();
    assert_eq!(ExperimentConfig::parse(&config.to_text()).unwrap(), config);
    let report = run_experiment(&config).unwrap();
    assert_eq!(report.arms.len(), 2);
    assert_eq!(report.oracle.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let files = write_outputs(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let plot = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    let mut again = Vec::new();
    write_plot_csv(&parse_plot_csv(&plot).unwrap(), &mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), plot);
    assert_eq!(parse_plot_csv(&plot).unwrap().len(), emit_plot_data(&report).len());
    let mse = std::fs::read_to_string(dir.path().join("mse.csv")).unwrap();
    assert_eq!(mse.lines().count(), 1 + 2 * 6);
}

#[test]
fn config_errors() {
    for bad in [
        "experiment = outlier\nruns = 0\n",
        "experiment = outlier\nruns = 1\n",
        "experiment = outlier\nbogus = 1\n",
        "experiment = nope\n",
        "experiment = outlier\nparticles = 100\nmn = 150\n",
        "model = linear-gaussian\n",
    ] {
        assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
    }
}
