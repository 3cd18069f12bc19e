use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lfunlab::report::data_lines;
use lfunlab_core::modforms::{builtin_form, format_qexp};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lfunlab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn delta_check_schema_and_exit_zero() {
    let out = scratch("delta.csv");
    let o = run(&["delta-check", "--Q", "10", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    let prov = lines.next().unwrap();
    assert!(prov.starts_with("# lfunlab command=delta-check"), "{prov}");
    assert!(prov.contains("Q=10") && prov.contains("threads=1"));
    assert_eq!(lines.next(), Some("n,detect,expected,abs_err"));
    assert_eq!(lines.count(), 201);
}

#[test]
fn tolerance_failure_exits_one_and_names_the_check() {
    let out = scratch("delta_fail.csv");
    let o = run(&["delta-check", "--Q", "10", "--tol", "1e-300", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("delta detection Q=10"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["delta-check", "--bogus", "1"]).status.code(), Some(2));
    let o = run(&["delta-check", "--Q", "banana"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Q"));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let conf = scratch("run.conf");
    let out = scratch("from_conf.csv");
    std::fs::write(&conf, "# precedence\ncommand = delta-check\nQ = 10\ntol = 1e-6\n").unwrap();
    let o = run(&["--config", conf.to_str().unwrap(), "delta-check", "--tol", "1e-8", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().next().unwrap().contains("tol=0.00000001"));

    let bad = scratch("bad.conf");
    std::fs::write(&bad, "Q = banana\n").unwrap();
    let o = run(&["delta-check", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("Q") && e.contains("real number"), "{e}");

    std::fs::write(&bad, "frobnicate = 3\n").unwrap();
    let o = run(&["delta-check", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("frobnicate"));
}

#[test]
fn ledger_schema() {
    let out = scratch("ledger.csv");
    let o = run(&["ledger", "--P", "5", "--M", "11", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let data = data_lines(&text);
    assert_eq!(data[0], "name,formula_value");
    assert!(data.iter().any(|l| l.starts_with("conductor,3.025e3")));
}

#[test]
fn second_moment_schema() {
    let out = scratch("sm.csv");
    let o = run(&[
        "second-moment", "--fM", "11", "--fk", "2", "--M", "5", "--kappa", "4", "--X", "8", "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let data = data_lines(&text);
    assert_eq!(data[0], "side,value,certificate");
    assert!(data[1].starts_with("spectral,") && data[2].starts_with("geometric,"));
}

#[test]
fn ingested_form_drives_a_check() {
    let f = builtin_form("1.12.delta", 100).unwrap();
    let path = scratch("delta.qexp");
    std::fs::write(&path, format_qexp(&f).unwrap()).unwrap();
    let out = scratch("rel.csv");
    let o = run(&["relations-check", "--forms", path.to_str().unwrap(), "--limit", "100", "--weil", "20", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    // a(6) ≠ a(2)a(3)
    let text = format_qexp(&f).unwrap().replace("\n6\t-6048\n", "\n6\t-6047\n");
    std::fs::write(&path, text).unwrap();
    let o = run(&["relations-check", "--forms", path.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("n = 6"), "{}", stderr(&o));
}

#[test]
fn thread_count_does_not_change_numbers() {
    let a = scratch("t1.csv");
    let b = scratch("t4.csv");
    for (p, t) in [(&a, "1"), (&b, "4")] {
        let o = run(&["voronoi-check", "--form", "11.2.eta", "--q_max", "6", "--threads", t, "-o", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    assert_eq!(data_lines(&ta), data_lines(&tb));
}
