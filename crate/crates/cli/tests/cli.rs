//! End-to-end tests of the `cmi` binary.

use std::path::Path;
use std::process::Output;

fn cmi(args: &[&str], dir: &Path) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_cmi"))
        .args(args)
        .current_dir(dir)
        .env_remove("CMI_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn rates_emits_expected_exponent_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmi(&["rates", "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "out/rates.csv");
    assert!(csv.starts_with("family,weighting,p,d_x,gamma,q,n,r_n_at_n\n"));
    // Table row: iv_cvm bounded, p = 1, d_x = 1, gamma = 2 has q = 0.2.
    assert!(
        csv.lines().any(|l| l.starts_with("iv_cvm,bounded,1,1,2,0.2,")),
        "expected q = 0.2 row in:\n{csv}"
    );
    assert!(dir.path().join("out/run_manifest.txt").exists());
}

#[test]
fn invalid_config_exits_2_with_all_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        concat!(
            "command = \"power\"\n",
            "[stats]\n",
            "family = \"kern_cvm\"\n",
            "p = 0.5\n",
            "bandwidth = 1.2\n",
        ),
    )
    .unwrap();
    let out = cmi(&["power", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("p must be ≥ 1"), "{stderr}");
    assert!(stderr.contains("bandwidth in (0,1)"), "{stderr}");
}

#[test]
fn command_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("r.toml"), "command = \"rates\"\n").unwrap();
    let out = cmi(&["power", "--config", "r.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_reproduce_quick_schema_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "mc-reproduce",
        "--design",
        "2",
        "--quick",
        "--seed",
        "11",
        "--out",
        "run1",
    ];
    let out = cmi(&args, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "run1/power_table.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "design,family,weighting,p,bandwidth_rule,sigma_n_rule,n,a,power,se,critval"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 11);
        let power: f64 = fields[8].parse().unwrap();
        assert!((0.0..=1.0).contains(&power), "power out of range: {line}");
        rows += 1;
    }
    // 12 battery statistics x 5 alternatives x 1 sample size.
    assert_eq!(rows, 60);
    assert!(dir.path().join("run1/compare_table.csv").exists());

    // Rerun with the same seed into a fresh directory: byte-identical CSVs.
    let args2 = [
        "mc-reproduce",
        "--design",
        "2",
        "--quick",
        "--seed",
        "11",
        "--out",
        "run2",
        "--threads",
        "3",
    ];
    let out = cmi(&args2, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv, read(dir.path(), "run2/power_table.csv"));
    assert_eq!(
        read(dir.path(), "run1/compare_table.csv"),
        read(dir.path(), "run2/compare_table.csv")
    );
}

#[test]
fn test_subcommand_round_trips_a_csv_sample() {
    let dir = tempfile::tempdir().unwrap();
    // Simulate a dataset via the library, write it, then test it.
    use cmi_core::model::{simulate_missing_data, MissingDataDesign};
    use cmi_core::seed::{derive_rng, Stream};
    let design = MissingDataDesign::design(1).unwrap();
    let sample =
        simulate_missing_data(&design, 300, &mut derive_rng(5, Stream::Simulate, &[1])).unwrap();
    std::fs::write(dir.path().join("sample.csv"), sample.to_csv()).unwrap();
    std::fs::write(
        dir.path().join("test.toml"),
        concat!(
            "command = \"test\"\n",
            "seed = 5\n",
            "out_dir = \"out\"\n",
            "[stats]\n",
            "family = \"iv_cvm\"\n",
            "p = 1.0\n",
            "[test]\n",
            "data = \"sample.csv\"\n",
            "theta = [0.6, 0.0]\n",
            "critval_sims = 2000\n",
        ),
    )
    .unwrap();
    let out = cmi(&["test", "--config", "test.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // theta1 = 0.6 is far outside the identified set (boundary 1/9).
    assert!(stdout.contains("reject"), "{stdout}");
    let result = read(dir.path(), "out/test_result.csv");
    assert!(result.lines().count() == 2);
    assert!(result.contains(",reject"));

    // The same config at the identified-set boundary accepts.
    std::fs::write(
        dir.path().join("test2.toml"),
        concat!(
            "command = \"test\"\n",
            "seed = 5\n",
            "out_dir = \"out2\"\n",
            "[stats]\n",
            "family = \"iv_cvm\"\n",
            "p = 1.0\n",
            "[test]\n",
            "data = \"sample.csv\"\n",
            "theta = [0.0, 0.0]\n",
            "critval_sims = 2000\n",
        ),
    )
    .unwrap();
    let out = cmi(&["test", "--config", "test2.toml"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("accept"));
}

#[test]
fn critval_caches_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cv.toml"),
        concat!(
            "command = \"critval\"\n",
            "seed = 3\n",
            "out_dir = \"out\"\n",
            "[stats]\n",
            "family = \"iv_ks\"\n",
            "weighting = \"bounded\"\n",
            "[instruments]\n",
            "resolution = 30\n",
            "[power]\n",
            "n = [200]\n",
            "critval_sims = 2000\n",
        ),
    )
    .unwrap();
    let out = cmi(&["critval", "--config", "cv.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = read(dir.path(), "out/critval.csv");
    let cache = read(dir.path(), "out/critvals.csv");
    assert!(cache.lines().count() >= 2);
    // Second run hits the cache and reproduces the same table.
    let out = cmi(&["critval", "--config", "cv.toml"], dir.path());
    assert!(out.status.success());
    assert_eq!(first, read(dir.path(), "out/critval.csv"));
}
