use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use deform_core::model::io::{parse_obj, parse_skel, read_text};
use deform_core::model::{bbox_scale, max_deviation, Vec3};
use deform_core::protocol::{decode_points, read_message, write_message, Message, WireEdit, WireOffset, PROTOCOL_VERSION};

fn deform(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deform")).args(args).output().unwrap()
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn asset(rel: &str) -> String {
    workspace().join("assets").join(rel).display().to_string()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn obj(path: &Path) -> Vec<Vec3> {
    parse_obj(&read_text(path).unwrap(), "obj").unwrap().vertices
}

#[test]
fn bent_bar_script_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = deform(&["run", &asset("scripts/bent_bar.script"), "--out", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let expected = obj(&golden("bent_bar_stretched.obj"));
    let tol = 1e-9 * bbox_scale(&expected);
    assert!(max_deviation(&obj(&dir.path().join("stretched.obj")), &expected) <= tol);
    let cage = obj(&golden("bent_bar_stretched_cage_rest.obj"));
    assert!(max_deviation(&obj(&dir.path().join("stretched_cage_rest.obj")), &cage) <= tol);
    let skel = |p: &Path| parse_skel(&read_text(p).unwrap(), "skel").unwrap().rest_positions();
    let joints = skel(&dir.path().join("stretched_rest.skel"));
    assert!(max_deviation(&joints, &skel(&golden("bent_bar_stretched_rest.skel"))) <= tol);
    // The elbow follows the stretch: rest pivot 1.25 scaled by 2.
    assert!((joints[1] - Vec3::new(2.5, 0.0, 0.0)).norm() <= 1e-9);
}

#[test]
fn runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let script = asset("scripts/biped_drag.script");
    for d in [&a, &b] {
        let run = deform(&["run", &script, "--out", d.path().to_str().unwrap(), "--seed", "7"]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "timings.txt" {
            continue;
        }
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
        compared += 1;
    }
    assert!(compared >= 10);
}

#[test]
fn flags_override_the_script_header() {
    let dir = tempfile::tempdir().unwrap();
    let run = deform(&[
        "run",
        &asset("scripts/bent_bar.script"),
        "--out",
        dir.path().to_str().unwrap(),
        "--skinning",
        "cor",
        "--ghost",
        "off",
    ]);
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).contains("skinning cor"));
    assert!(!deform(&["run", &asset("scripts/bent_bar.script"), "--ghost", "maybe"]).status.success());
}

#[test]
fn failing_script_exits_nonzero_with_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.script");
    std::fs::write(&script, "deform-script 1\nrig bar\nrotate elbow 0 0 1 10\ncage_curr 99 0 0 0\n").unwrap();
    let run = deform(&["run", script.to_str().unwrap()]);
    assert!(!run.status.success());
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("step 1 (line 4)"), "{err}");
    assert!(dir.path().join("bad_out/audit.txt").exists());
}

#[test]
fn disabled_refit_fails_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let run = deform(&["run", &asset("scripts/bent_bar_no_refit.script"), "--out", dir.path().to_str().unwrap()]);
    assert!(!run.status.success());
    let joints = parse_skel(&read_text(&dir.path().join("stretched_rest.skel")).unwrap(), "s")
        .unwrap()
        .rest_positions();
    // Pivot left at its unscaled place: off by more than a quarter bar length.
    assert!((joints[1] - Vec3::new(2.5, 0.0, 0.0)).norm() > 0.25 * 2.0);
}

#[test]
fn playback_writes_keyed_frames() {
    let dir = tempfile::tempdir().unwrap();
    let run = deform(&[
        "play",
        &asset("rigs/bar.rig"),
        &asset("tracks/bar_wave.track"),
        "--fps",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("5 frames"));
    let first = obj(&dir.path().join("frame_00000_cage_rest.obj"));
    let rig_cage = obj(&workspace().join("assets/rigs/bar_cage.obj"));
    assert_eq!(first, rig_cage);
    let last = obj(&dir.path().join("frame_00004_cage_rest.obj"));
    for (a, b) in last.iter().zip(&rig_cage) {
        assert_eq!(a.x, b.x * 1.5);
    }
}

#[test]
fn bench_prints_a_table_and_accepts_zero_frames() {
    let run = deform(&["bench", "bar", "--frames", "3"]);
    assert!(run.status.success());
    let text = String::from_utf8_lossy(&run.stdout);
    for label in ["skin_per_frame", "cage_up_solve", "cage_rev_update", "machine:"] {
        assert!(text.contains(label), "{text}");
    }
    let run = deform(&["bench", "bar", "--frames", "0"]);
    assert!(run.status.success());
    assert!(!String::from_utf8_lossy(&run.stdout).contains("skin_per_frame"));
}

#[test]
fn gen_select_and_coords_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(deform(&["gen", "bar", "--out", d]).status.success());
    let manifest = dir.path().join("bar.rig");
    let sel = dir.path().join("sel.txt");
    let run = deform(&["select", manifest.to_str().unwrap(), "--out", sel.to_str().unwrap()]);
    assert!(run.status.success());
    assert_eq!(read_text(&sel).unwrap().lines().count(), 20);
    assert!(deform(&["coords", "bar", "--out", d]).status.success());
    assert!(dir.path().join("phi.wgt").exists() && dir.path().join("psi.wgt").exists());
    assert!(!deform(&["gen", "teapot"]).status.success());
}

struct ServeGuard(std::process::Child);

impl Drop for ServeGuard {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_speaks_the_protocol_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let record = dir.path().join("live.script");
    let mut child = Command::new(env!("CARGO_BIN_EXE_deform"))
        .args(["serve", "--port", "0", "--record", record.to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let stdout = child.stdout.take().unwrap();
    let _guard = ServeGuard(child);
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    let mut call = |m: Message| {
        write_message(&mut stream, &m).unwrap();
        read_message(&mut stream).unwrap().unwrap()
    };
    assert_eq!(call(Message::Hello { version: PROTOCOL_VERSION }), Message::Hello { version: PROTOCOL_VERSION });
    let Message::Geometry(loaded) = call(Message::Load {
        rig: "bar".into(),
        skinning: None,
        ghost: None,
    }) else {
        panic!()
    };
    let q = deform_core::model::axis_angle(Vec3::z(), 0.5);
    let Message::Geometry(bent) = call(Message::Edit {
        edit: WireEdit::SkelRotate {
            joint: 1,
            rotation: [q.w, q.i, q.j, q.k],
        },
    }) else {
        panic!()
    };
    let Message::Geometry(dragged) = call(Message::Edit {
        edit: WireEdit::CageCurr {
            offsets: vec![WireOffset {
                vertex: 18,
                offset: [0.0, 0.02, 0.0],
            }],
        },
    }) else {
        panic!()
    };
    assert!(loaded.frame < bent.frame && bent.frame < dragged.frame);
    assert_ne!(bent.cage_rest, dragged.cage_rest);
    let skin = decode_points(&dragged.skin, dragged.skin_count).unwrap();
    drop(stream);

    // The recorded stream replays through the CLI to the same state (up to
    // the single precision of the wire format).
    let deadline = Instant::now() + Duration::from_secs(20);
    while !record.exists() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    let out = dir.path().join("replay");
    let run = deform(&["run", record.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let replayed = obj(&out.join("final.obj"));
    for (a, b) in skin.iter().zip(&replayed) {
        assert!((Vec3::new(a[0] as f64, a[1] as f64, a[2] as f64) - b).norm() < 1e-6);
    }
}
