use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tracks_sim(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tracks-sim"))
        .args(args)
        .env("TRACKS_SIM_OUT", out_root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn case1_run_writes_one_hundred_small_flows() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("off");
    let args = [
        "run",
        "--scenario",
        "case1",
        "--flows",
        "20",
        "--aqm",
        "droptail",
        "--tcp",
        "newreno",
        "--shim",
        "off",
        "--seed",
        "1",
        "--out",
    ];
    let mut a: Vec<&str> = args.to_vec();
    a.push(dir.to_str().unwrap());
    let o = tracks_sim(&a, tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let flows = fs::read_to_string(dir.join("flows.csv")).unwrap();
    assert_eq!(flows.lines().count(), 101);
    assert!(flows.lines().skip(1).all(|l| l.contains(",small,")));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains(",small,100,100,"), "{stdout}");
}

#[test]
fn paired_shim_run_keeps_the_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let off = tmp.path().join("off");
    let on = tmp.path().join("on");
    let base = ["run", "--scenario", "case1", "--flows", "20", "--seed", "1"];
    let mut a = base.to_vec();
    a.extend(["--shim", "off", "--out", off.to_str().unwrap()]);
    assert!(tracks_sim(&a, tmp.path()).status.success());
    let mut b = base.to_vec();
    b.extend([
        "--shim",
        "on",
        "--alpha",
        "10",
        "--out",
        on.to_str().unwrap(),
    ]);
    assert!(tracks_sim(&b, tmp.path()).status.success());
    let sched = |d: &Path| {
        fs::read_to_string(d.join("metadata.txt"))
            .unwrap()
            .lines()
            .find(|l| l.starts_with("schedule_hash"))
            .unwrap()
            .to_string()
    };
    assert_eq!(sched(&off), sched(&on));
}

#[test]
fn config_errors_exit_with_two_and_leave_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tracks_sim(&["run", "--flows", "0"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flows"), "{}", stderr(&o));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);

    let o = tracks_sim(&["run", "--set", "aqm=fifo"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("command line:1"), "{}", stderr(&o));

    let conf = tmp.path().join("bad.conf");
    fs::write(&conf, "flows = 5\nbogus = 1\n").unwrap();
    let o = tracks_sim(&["run", "--config", conf.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.conf:2"), "{}", stderr(&o));
}

#[test]
fn output_collision_needs_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("r");
    let d = dir.to_str().unwrap();
    assert!(tracks_sim(&["run", "--flows", "3", "--out", d], tmp.path())
        .status
        .success());
    let o = tracks_sim(&["run", "--flows", "3", "--out", d], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = tracks_sim(
        &["run", "--flows", "3", "--out", d, "--overwrite"],
        tmp.path(),
    );
    assert!(o.status.success());
}

#[test]
fn default_output_goes_under_the_env_root() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tracks_sim(&["run", "--flows", "3"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let dirs: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].join("flows.csv").exists());
}

#[test]
fn sweep_and_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("sw");
    let o = tracks_sim(
        &[
            "sweep",
            "--flows",
            "5",
            "--shim",
            "on",
            "--axis",
            "alpha=1,5,10",
            "--jobs",
            "2",
            "--out",
            root.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 3);

    let point = root.join("alpha=5");
    let o = tracks_sim(&["analyze", point.to_str().unwrap()], tmp.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.contains(",small,25,25,")), "{text}");
}

#[test]
fn empty_axis_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tracks_sim(&["sweep", "--axis", "alpha="], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
}

#[test]
fn help_lists_the_verbs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tracks_sim(&["--help"], tmp.path());
    let text = String::from_utf8(o.stdout).unwrap();
    for verb in ["run", "sweep", "analyze"] {
        assert!(text.contains(verb), "{text}");
    }
}
