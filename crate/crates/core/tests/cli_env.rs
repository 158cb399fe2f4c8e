use exohydro::cli::{run, OUTPUT_DIR_ENV};

#[test]
fn output_dir_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("from_env");
    std::env::set_var(OUTPUT_DIR_ENV, &target);
    assert_eq!(run(["exohydro", "grad-check", "--seed", "1"]), 0);
    assert!(target.join("run_config.toml").is_file());

    let flag = tmp.path().join("from_flag");
    assert_eq!(run(["exohydro", "--output-dir", flag.to_str().unwrap(), "grad-check"]), 0);
    assert!(flag.join("run_config.toml").is_file());
    std::env::remove_var(OUTPUT_DIR_ENV);
}
