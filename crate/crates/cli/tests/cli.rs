use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[topology]
kind = "fat-tree"
k = 4
capacity = 1000

[paths]
max_hops = 4
cap = 8

[traffic]
mix = "micro=0.5,small=0.3,big=0.2"
plr = 0.5

[sweep]
n_flows = [20, 40]
methods = ["cect", "ecmp"]
replicates = 2
master_seed = 11
"#;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cect-lab"))
        .args(args)
        .env_remove("CECT_LAB_THREADS")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// results.csv without the timing columns.
fn stable_results(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("results.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].starts_with("wall_time")).collect();
    lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| cols[i]).collect::<Vec<_>>().join(",")
        })
        .collect()
}

#[test]
fn run_is_reproducible_and_reportable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    for dir in [&a, &b] {
        let out = lab(&["run", p(&cfg), "--out-dir", p(dir)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    assert_eq!(stable_results(&a), stable_results(&b));
    assert_eq!(stable_results(&a).len(), 2 * 2 * 2);
    for f in ["manifest.json", "topology.txt", "flows/n20_r0.txt", "assignments/cect_n40_r1.txt"] {
        assert!(a.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(a.join("flows/n40_r1.txt")).unwrap(),
        fs::read_to_string(b.join("flows/n40_r1.txt")).unwrap()
    );

    let out = lab(&["report", p(&a)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let ratio = fs::read_to_string(a.join("ratio.csv")).unwrap();
    let ns: Vec<&str> = ratio.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["20", "40"]);
    for f in ["summary.csv", "throughput.csv", "loss.csv", "time.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let out = lab(&["report", p(&a), "--format", "json", "--out-dir", p(&tmp.path().join("rep"))]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["ratios"].as_array().unwrap().len(), 2);
    assert!(tmp.path().join("rep/summary.json").exists());
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, SMALL.replace("plr = 0.5", "plr = 1.5")).unwrap();
    let out = lab(&["run", p(&cfg), "--out-dir", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let line = SMALL.lines().position(|l| l.starts_with("plr")).unwrap() + 1;
    assert!(stderr(&out).contains(&format!("bad.toml:{line}")), "{}", stderr(&out));

    fs::write(&cfg, SMALL.replace("k = 4", "k = [4")).unwrap();
    let out = lab(&["run", p(&cfg), "--out-dir", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.toml:"), "{}", stderr(&out));
}

#[test]
fn failed_cells_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exact.toml");
    let text = SMALL.replace(r#"methods = ["cect", "ecmp"]"#, r#"methods = ["exact"]"#) + "\n[exact]\nbudget = 10\n";
    fs::write(&cfg, text).unwrap();
    let dir = tmp.path().join("o");
    let out = lab(&["run", p(&cfg), "--out-dir", p(&dir)]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let results = fs::read_to_string(dir.join("results.csv")).unwrap();
    assert!(results.lines().skip(1).all(|l| l.contains("error: ")));
}

#[test]
fn single_step_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let topo = dir.join("topo.txt");
    let flows = dir.join("flows.txt");

    let out = lab(&["gen-topo", "--k", "4", "--capacity", "1000", "-o", p(&topo)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = lab(&["gen-traffic", "--topology", p(&topo), "--n-flows", "60", "-o", p(&flows), "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&flows).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 60);

    let out = lab(&["paths", "--topology", p(&topo), "--max-hops", "4"]);
    assert!(out.status.success());
    assert!(!out.stdout.is_empty());

    for method in ["cect", "ecmp"] {
        let sub = dir.join(method);
        let out = lab(&[
            "solve", "--topology", p(&topo), "--max-hops", "4", "--flows", p(&flows), "--method", method,
            "--out-dir", p(&sub),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let out = lab(&[
            "simulate", "--topology", p(&topo), "--flows", p(&flows), "--assignment",
            p(&sub.join("assignment.txt")), "--out-dir", p(&sub), "--format", "json",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(json["throughput"].as_f64().unwrap() > 0.0);
        assert!(sub.join("simulation.json").exists());
    }
    assert!(dir.join("cect/ga_stats.csv").exists());

    // a path walked backwards is refused
    let text = fs::read_to_string(dir.join("ecmp/assignment.txt")).unwrap();
    let (first, rest) = text.split_once('\n').unwrap();
    let (head, hops) = first.split_once(": ").unwrap();
    let mut reversed: Vec<&str> = hops.split(" -> ").collect();
    reversed.reverse();
    fs::write(dir.join("broken.txt"), format!("{head}: {}\n{rest}", reversed.join(" -> "))).unwrap();
    let out = lab(&["simulate", "--topology", p(&topo), "--flows", p(&flows), "--assignment", p(&dir.join("broken.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not a valid routing"), "{}", stderr(&out));
}
