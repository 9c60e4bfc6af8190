use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigidwarp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small 3-frame sequence rendered at 96x64.
fn small_sequence(dir: &Path) -> std::path::PathBuf {
    std::fs::write(
        dir.join("scene.txt"),
        "size_x = 5\nsize_y = 3\nsize_z = 6\nwidth = 96\nheight = 64\nseed = 3\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("cams.txt"),
        "2.70 1.40 2.40 0.04 0.27 0\n2.75 1.41 2.41 0.04 0.285 0\n2.80 1.42 2.42 0.04 0.30 0\n",
    )
    .unwrap();
    let seq = dir.join("seq");
    let o = run(&["synth", "--scene", s(&dir.join("scene.txt")), "--trajectory", s(&dir.join("cams.txt")), "--out", s(&seq)]);
    assert!(o.status.success(), "{}", stderr(&o));
    seq
}

#[test]
fn synth_writes_layout() {
    let dir = tempfile::tempdir().unwrap();
    let seq = small_sequence(dir.path());
    for f in ["rgb/000000.png", "rgb/000002.png", "depth/000001.png", "intrinsics.txt", "poses_gt.txt"] {
        assert!(seq.join(f).exists(), "{f}");
    }
}

#[test]
fn warp_writes_image_and_mask() {
    let dir = tempfile::tempdir().unwrap();
    let seq = small_sequence(dir.path());
    let out = dir.path().join("w.png");
    let o = run(&["warp", "--seq", s(&seq), "--ref", "1", "--target", "0", "--pose", "-0.1 0 0 0 -0.01 0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.exists() && dir.path().join("w_mask.png").exists());

    let o = run(&["warp", "--seq", s(&seq), "--ref", "1", "--target", "7", "--pose", "0 0 0 0 0 0", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frame 7"));
}

#[test]
fn eval_of_identical_inputs_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let seq = small_sequence(dir.path());
    let gt = seq.join("poses_gt.txt");
    let o = run(&["eval", "--pred", s(&gt), "--gt", s(&gt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "trans_rmse_m=0\nrot_rmse_deg=0\n");

    let depth = seq.join("depth/000001.png");
    let o = run(&["eval", "--pred", s(&depth), "--gt", s(&depth)]);
    assert_eq!(stdout(&o), "depth_rmse_m=0\n");
}

#[test]
fn solve_then_refine() {
    let dir = tempfile::tempdir().unwrap();
    let seq = small_sequence(dir.path());
    let cfg = dir.path().join("run.txt");
    std::fs::write(
        &cfg,
        "frames = 3\nwidth = 96\nheight = 64\npyramid_levels = 2\nlr = 0.001\nmax_iters = 150\ndepth_lr = 0.005\ndepth_max_iters = 20\n",
    )
    .unwrap();
    let traj = dir.path().join("traj.txt");
    let o = run(&["solve-pose", "--seq", s(&seq), "--config", s(&cfg), "--out", s(&traj)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert!(text.starts_with("# reference=1"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("traj.csv")).unwrap();
    assert!(csv.lines().count() > 2);

    let eval = run(&["eval", "--pred", s(&traj), "--gt", s(&seq)]);
    let trans: f64 = stdout(&eval)
        .lines()
        .find_map(|l| l.strip_prefix("trans_rmse_m="))
        .unwrap()
        .parse()
        .unwrap();
    // Staying at identity would be off by about 5 cm.
    assert!(trans < 0.02, "{trans}");

    let out = dir.path().join("depth");
    let o = run(&["refine-depth", "--seq", s(&seq), "--traj", s(&traj), "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("000001.png").exists() && out.join("losses.csv").exists());
    let o = run(&["eval", "--pred", s(&out), "--gt", s(&seq)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("depth_rmse_m="));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["solve-pose", "--seq", "/nonexistent", "--out", "/tmp/x.txt"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let seq = small_sequence(dir.path());
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "lambda_q = 1\n").unwrap();
    let o = run(&["solve-pose", "--seq", s(&seq), "--config", s(&cfg), "--out", s(&dir.path().join("t.txt"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lambda_q"), "{}", stderr(&o));
}
