use std::io::{Cursor, Read, Write};
use std::path::Path;

use deform_core::model::{axis_angle, max_deviation, Vec3};
use deform_core::protocol::{
    decode_points, read_message, serve_connection, write_message, Message, Server, WireEdit, WireOffset,
    PROTOCOL_VERSION,
};
use deform_core::script::{run_script, EditScript};
use deform_core::model::io::{parse_obj, read_text};
use deform_core::sync::SessionConfig;

/// In-memory duplex stream: reads scripted client bytes, collects replies.
struct Duplex {
    input: Cursor<Vec<u8>>,
    output: Vec<u8>,
}

impl Read for Duplex {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        self.input.read(buf)
    }
}

impl Write for Duplex {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.output.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn rotate(joint: usize, axis: Vec3, degrees: f64) -> Message {
    let q = axis_angle(axis, degrees.to_radians());
    Message::Edit {
        edit: WireEdit::SkelRotate {
            joint,
            rotation: [q.w, q.i, q.j, q.k],
        },
    }
}

fn drag(vertex: usize, offset: [f64; 3]) -> Message {
    Message::Edit {
        edit: WireEdit::CageCurr {
            offsets: vec![WireOffset { vertex, offset }],
        },
    }
}

fn exchange(messages: &[Message]) -> (Vec<Message>, Server) {
    let mut input = Vec::new();
    for m in messages {
        write_message(&mut input, m).unwrap();
    }
    let mut stream = Duplex {
        input: Cursor::new(input),
        output: Vec::new(),
    };
    let mut server = Server::new(SessionConfig::default());
    serve_connection(&mut stream, &mut server).unwrap();
    let mut out = Cursor::new(stream.output);
    let mut replies = Vec::new();
    while let Some(m) = read_message(&mut out).unwrap() {
        replies.push(m);
    }
    (replies, server)
}

fn load(rig: &str) -> Message {
    Message::Load {
        rig: rig.into(),
        skinning: None,
        ghost: None,
    }
}

#[test]
fn session_conversation() {
    let mut msgs = vec![Message::Hello { version: PROTOCOL_VERSION }, load("bar")];
    msgs.push(rotate(1, Vec3::z(), 30.0));
    msgs.push(drag(3, [0.0, 0.01, 0.0]));
    msgs.push(drag(3, [5.0, 0.0, 0.0]));
    msgs.push(Message::SnapshotRequest);
    let (replies, server) = exchange(&msgs);
    assert_eq!(replies.len(), msgs.len());
    assert_eq!(replies[0], Message::Hello { version: PROTOCOL_VERSION });
    assert!(matches!(&replies[4], Message::Error { code, .. } if code == "EDIT_REJECTED"));
    let mut last = 0;
    for r in replies.iter().filter_map(|m| match m {
        Message::Geometry(g) => Some(g),
        _ => None,
    }) {
        assert!(r.frame > last);
        last = r.frame;
        r.validate().unwrap();
        assert_eq!((r.skin_count, r.cage_count, r.joint_count), (818, 20, 2));
    }
    // The rejected drag did not change anything: the final frame shows the
    // state after the accepted drag.
    let Message::Geometry(g) = &replies[5] else { panic!() };
    assert_eq!(g.session_frame, 2);
    let session = server.session().unwrap();
    let skin = decode_points(&g.skin, g.skin_count).unwrap();
    for (a, b) in skin.iter().zip(session.curr_skin()) {
        assert!((Vec3::new(a[0] as f64, a[1] as f64, a[2] as f64) - b).norm() < 1e-6);
    }
}

#[test]
fn drag_changes_skin_rest_cage_and_skeleton_in_one_frame() {
    let msgs = [load("bar"), rotate(1, Vec3::z(), 90.0), drag(17, [0.0, 0.02, 0.0])];
    let (replies, server) = exchange(&msgs);
    let (Message::Geometry(before), Message::Geometry(after)) = (&replies[1], &replies[2]) else {
        panic!("{replies:?}")
    };
    assert_eq!(after.frame, before.frame + 1);
    assert_ne!(before.skin, after.skin);
    assert_ne!(before.cage_rest, after.cage_rest);
    assert_ne!(before.joints_rest, after.joints_rest);
    assert!(server.session().unwrap().audit_passes().unwrap());
}

#[test]
fn garbage_gets_an_error_reply() {
    let mut input = Vec::new();
    let body = br#"{"type":"WIBBLE"}"#;
    input.extend_from_slice(&(body.len() as u32).to_le_bytes());
    input.extend_from_slice(body);
    let mut stream = Duplex {
        input: Cursor::new(input),
        output: Vec::new(),
    };
    let mut server = Server::new(SessionConfig::default());
    serve_connection(&mut stream, &mut server).unwrap();
    let reply = read_message(&mut Cursor::new(stream.output)).unwrap().unwrap();
    assert!(matches!(reply, Message::Error { code, .. } if code == "BAD_MESSAGE"));
}

#[test]
fn recorded_stream_replays_to_the_same_state() {
    let mut msgs = vec![load("biped"), rotate(6, Vec3::new(0.0, 0.2, 1.0), 50.0)];
    for k in 0..12 {
        msgs.push(drag(20 + k, [0.01, -0.02, 0.005 * k as f64]));
    }
    msgs.push(Message::Edit {
        edit: WireEdit::CageRest {
            offsets: vec![WireOffset {
                vertex: 4,
                offset: [0.0, 0.2, 0.0],
            }],
        },
    });
    msgs.push(rotate(12, Vec3::x(), -30.0));
    let (_, server) = exchange(&msgs);
    let live = server.session().unwrap();
    let text = server.recorded_script().unwrap();
    let script = EditScript::parse(&text, "recorded", Path::new(".")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_script(&script, dir.path()).unwrap();
    let replayed = parse_obj(&read_text(&dir.path().join("final.obj")).unwrap(), "final").unwrap();
    let cage = parse_obj(&read_text(&dir.path().join("final_cage_rest.obj")).unwrap(), "cage").unwrap();
    let tol = 1e-10 * live.scale();
    assert!(max_deviation(&replayed.vertices, live.curr_skin()) <= tol);
    assert!(max_deviation(&cage.vertices, live.cage_rest()) <= tol);
}

#[test]
fn trackball_increments_match_one_scripted_rotation() {
    let mut msgs = vec![load("bar")];
    for _ in 0..9 {
        msgs.push(rotate(1, Vec3::z(), 10.0));
    }
    let (_, server) = exchange(&msgs);
    let live = server.session().unwrap();
    let script = EditScript::parse("deform-script 1\nrig bar\nrotate elbow 0 0 1 90\n", "s", Path::new(".")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_script(&script, dir.path()).unwrap();
    let replayed = parse_obj(&read_text(&dir.path().join("final.obj")).unwrap(), "final").unwrap();
    assert!(max_deviation(&replayed.vertices, live.curr_skin()) <= 1e-10 * live.scale());
}
