//! Session protocol for interactive front ends.
//!
//! Every message is a little-endian `u32` byte length followed by that many
//! bytes of UTF-8 JSON, tagged by `"type"`. Geometry arrays travel as base64
//! of little-endian `f32` triples.

use std::io::{self, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::geom::{quat_to_wxyz, quat_wxyz};
use crate::model::Vec3;
use crate::script::{format_edit, RigSource};
use crate::sync::{EditDelta, SessionConfig, Snapshot, SyncSession};

pub const PROTOCOL_VERSION: u32 = 1;
/// Upper bound on one message body.
pub const MAX_MESSAGE_BYTES: u32 = 256 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireOffset {
    pub vertex: usize,
    pub offset: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WireEdit {
    /// `rotation` is `[w, x, y, z]`.
    SkelRotate { joint: usize, rotation: [f64; 4] },
    CageRest { offsets: Vec<WireOffset> },
    CageCurr { offsets: Vec<WireOffset> },
}

fn wire_offsets(o: &[(usize, Vec3)]) -> Vec<WireOffset> {
    o.iter()
        .map(|(k, d)| WireOffset {
            vertex: *k,
            offset: [d.x, d.y, d.z],
        })
        .collect()
}

fn engine_offsets(o: &[WireOffset]) -> Vec<(usize, Vec3)> {
    o.iter().map(|w| (w.vertex, Vec3::from(w.offset))).collect()
}

impl From<&EditDelta> for WireEdit {
    fn from(delta: &EditDelta) -> Self {
        match delta {
            EditDelta::SkelRotate { joint, rotation } => WireEdit::SkelRotate {
                joint: *joint,
                rotation: quat_to_wxyz(rotation),
            },
            EditDelta::CageRest(o) => WireEdit::CageRest {
                offsets: wire_offsets(o),
            },
            EditDelta::CageCurr(o) => WireEdit::CageCurr {
                offsets: wire_offsets(o),
            },
        }
    }
}

impl TryFrom<&WireEdit> for EditDelta {
    type Error = Error;

    fn try_from(edit: &WireEdit) -> Result<Self> {
        Ok(match edit {
            WireEdit::SkelRotate { joint, rotation } => {
                let [w, x, y, z] = *rotation;
                let norm = (w * w + x * x + y * y + z * z).sqrt();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(Error::Edit("rotation quaternion has no direction".into()));
                }
                EditDelta::SkelRotate {
                    joint: *joint,
                    rotation: quat_wxyz(w, x, y, z),
                }
            }
            WireEdit::CageRest { offsets } => EditDelta::CageRest(engine_offsets(offsets)),
            WireEdit::CageCurr { offsets } => EditDelta::CageCurr(engine_offsets(offsets)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Strictly increasing per connection.
    pub frame: u64,
    /// Edit counter of the engine session.
    pub session_frame: u64,
    pub skin_count: usize,
    pub cage_count: usize,
    pub joint_count: usize,
    pub skin: String,
    pub cage_rest: String,
    pub cage_curr: String,
    pub joints_rest: String,
    pub joints_curr: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Hello {
        version: u32,
    },
    /// `rig` is a bundled rig name or a `.rig` manifest path.
    Load {
        rig: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        skinning: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ghost: Option<bool>,
    },
    Edit {
        edit: WireEdit,
    },
    SnapshotRequest,
    Geometry(Geometry),
    Error {
        code: String,
        text: String,
    },
}

pub fn encode_points(points: &[Vec3]) -> String {
    let mut bytes = Vec::with_capacity(points.len() * 12);
    for p in points {
        for x in p.iter() {
            bytes.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    STANDARD.encode(bytes)
}

/// Decodes `count` points, checking the announced length.
pub fn decode_points(data: &str, count: usize) -> Result<Vec<[f32; 3]>> {
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| Error::Protocol(format!("bad base64: {e}")))?;
    if bytes.len() != count * 12 {
        return Err(Error::Protocol(format!(
            "array holds {} bytes, expected {} for {count} points",
            bytes.len(),
            count * 12
        )));
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]);
            [f(0), f(4), f(8)]
        })
        .collect())
}

impl Geometry {
    pub fn from_snapshot(frame: u64, snap: &Snapshot) -> Self {
        Self {
            frame,
            session_frame: snap.frame,
            skin_count: snap.skin.len(),
            cage_count: snap.cage_rest.len(),
            joint_count: snap.joints_rest.len(),
            skin: encode_points(&snap.skin),
            cage_rest: encode_points(&snap.cage_rest),
            cage_curr: encode_points(&snap.cage_curr),
            joints_rest: encode_points(&snap.joints_rest),
            joints_curr: encode_points(&snap.joints_curr),
        }
    }

    /// Checks every array against its announced count.
    pub fn validate(&self) -> Result<()> {
        decode_points(&self.skin, self.skin_count)?;
        decode_points(&self.cage_rest, self.cage_count)?;
        decode_points(&self.cage_curr, self.cage_count)?;
        decode_points(&self.joints_rest, self.joint_count)?;
        decode_points(&self.joints_curr, self.joint_count)?;
        Ok(())
    }
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    let body = serde_json::to_vec(msg).map_err(|e| Error::Protocol(e.to_string()))?;
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| n <= MAX_MESSAGE_BYTES)
        .ok_or_else(|| Error::Protocol(format!("message of {} bytes is too large", body.len())))?;
    let io_err = |e| Error::io("<stream>", e);
    w.write_all(&len.to_le_bytes()).map_err(io_err)?;
    w.write_all(&body).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Next message, or `None` at a clean end of stream.
pub fn read_message(r: &mut impl Read) -> Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::io("<stream>", e)),
    }
    let len = u32::from_le_bytes(len);
    if len > MAX_MESSAGE_BYTES {
        return Err(Error::Protocol(format!("announced length {len} exceeds the limit")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body).map_err(|e| Error::io("<stream>", e))?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| Error::Protocol(format!("bad message: {e}")))
}

fn error(code: &str, text: impl Into<String>) -> Message {
    Message::Error {
        code: code.into(),
        text: text.into(),
    }
}

/// One client's session state. Accepted edits are logged so the
/// interaction can be replayed as a script.
pub struct Server {
    defaults: SessionConfig,
    session: Option<SyncSession>,
    rig_id: String,
    next_frame: u64,
    edits: Vec<EditDelta>,
}

impl Server {
    /// `defaults` apply to every LOAD unless the message overrides them.
    pub fn new(defaults: SessionConfig) -> Self {
        Self {
            defaults,
            session: None,
            rig_id: String::new(),
            next_frame: 0,
            edits: Vec::new(),
        }
    }

    pub fn session(&self) -> Option<&SyncSession> {
        self.session.as_ref()
    }

    fn geometry(&mut self) -> Message {
        let Some(session) = &self.session else {
            return error("NO_RIG", "no rig loaded");
        };
        self.next_frame += 1;
        Message::Geometry(Geometry::from_snapshot(self.next_frame, &session.snapshot()))
    }

    pub fn handle(&mut self, msg: Message) -> Message {
        match msg {
            Message::Hello { version } if version == PROTOCOL_VERSION => Message::Hello {
                version: PROTOCOL_VERSION,
            },
            Message::Hello { version } => error(
                "VERSION",
                format!("client speaks version {version}, server speaks {PROTOCOL_VERSION}"),
            ),
            Message::Load { rig, skinning, ghost } => {
                let mut config = self.defaults.clone();
                if let Some(m) = skinning {
                    match m.parse() {
                        Ok(m) => config.method = m,
                        Err(e) => return error("LOAD_FAILED", e.to_string()),
                    }
                }
                if let Some(g) = ghost {
                    config.ghost = g;
                }
                let loaded = RigSource::resolve(&rig, Path::new("."))
                    .load()
                    .and_then(|r| SyncSession::new(&r, config));
                match loaded {
                    Ok(s) => {
                        self.session = Some(s);
                        self.rig_id = rig;
                        self.edits.clear();
                        self.geometry()
                    }
                    Err(e) => error("LOAD_FAILED", e.to_string()),
                }
            }
            Message::Edit { edit } => {
                let Some(session) = self.session.as_mut() else {
                    return error("NO_RIG", "no rig loaded");
                };
                let delta = match EditDelta::try_from(&edit) {
                    Ok(d) => d,
                    Err(e) => return error("EDIT_REJECTED", e.to_string()),
                };
                match session.edit(&delta) {
                    Ok(_) => {
                        self.edits.push(delta);
                        self.geometry()
                    }
                    Err(e) => error("EDIT_REJECTED", e.to_string()),
                }
            }
            Message::SnapshotRequest => self.geometry(),
            Message::Geometry(_) | Message::Error { .. } => {
                error("BAD_MESSAGE", "GEOMETRY and ERROR are server-to-client only")
            }
        }
    }

    /// Script reproducing the current session: rig, configuration and every
    /// accepted edit since the last LOAD.
    pub fn recorded_script(&self) -> Option<String> {
        let session = self.session.as_ref()?;
        let c = session.config();
        let mut out = format!(
            "deform-script 1\nrig {}\nskinning {}\nghost {}\ns_exp {}\nsigma {}\nstep_cap {}\nskel_up {}\n",
            self.rig_id,
            c.method,
            if c.ghost { "on" } else { "off" },
            c.s_exp,
            c.sigma,
            c.step_cap,
            if c.skel_up { "on" } else { "off" },
        );
        for e in &self.edits {
            out.push_str(&format_edit(e));
            out.push('\n');
        }
        Some(out)
    }
}

/// Serves one client until it closes the stream. Malformed messages are
/// answered with an ERROR; transport failures end the connection.
pub fn serve_connection<S: Read + Write>(stream: &mut S, server: &mut Server) -> Result<()> {
    loop {
        let reply = match read_message(stream) {
            Ok(None) => return Ok(()),
            Ok(Some(msg)) => server.handle(msg),
            Err(Error::Protocol(text)) => error("BAD_MESSAGE", text),
            Err(e) => return Err(e),
        };
        write_message(stream, &reply)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn frames_round_trip() {
        let msgs = [
            Message::Hello { version: 1 },
            Message::Load {
                rig: "bar".into(),
                skinning: Some("dqs".into()),
                ghost: None,
            },
            Message::Edit {
                edit: WireEdit::CageCurr {
                    offsets: vec![WireOffset {
                        vertex: 3,
                        offset: [0.1, 0.0, -0.2],
                    }],
                },
            },
            Message::SnapshotRequest,
        ];
        let mut buf = Vec::new();
        for m in &msgs {
            write_message(&mut buf, m).unwrap();
        }
        let mut cursor = Cursor::new(buf);
        for m in &msgs {
            assert_eq!(read_message(&mut cursor).unwrap().as_ref(), Some(m));
        }
        assert_eq!(read_message(&mut cursor).unwrap(), None);
    }

    #[test]
    fn json_shape() {
        let text = serde_json::to_string(&Message::Edit {
            edit: WireEdit::SkelRotate {
                joint: 1,
                rotation: [1.0, 0.0, 0.0, 0.0],
            },
        })
        .unwrap();
        assert_eq!(
            text,
            r#"{"type":"EDIT","edit":{"kind":"SKEL_ROTATE","joint":1,"rotation":[1.0,0.0,0.0,0.0]}}"#
        );
        let m: Message = serde_json::from_str(r#"{"type":"SNAPSHOT_REQUEST"}"#).unwrap();
        assert_eq!(m, Message::SnapshotRequest);
    }

    #[test]
    fn points_are_little_endian_f32() {
        let s = encode_points(&[Vec3::new(1.0, -2.0, 0.5)]);
        let bytes = STANDARD.decode(&s).unwrap();
        assert_eq!(&bytes[..4], &1.0f32.to_le_bytes());
        assert_eq!(decode_points(&s, 1).unwrap(), vec![[1.0, -2.0, 0.5]]);
        assert!(decode_points(&s, 2).is_err());
    }

    #[test]
    fn truncated_body_is_an_error() {
        let mut buf = Vec::new();
        write_message(&mut buf, &Message::SnapshotRequest).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_message(&mut Cursor::new(buf)).is_err());
    }

    #[test]
    fn requests_before_load_are_refused() {
        let mut server = Server::new(SessionConfig::default());
        assert!(matches!(server.handle(Message::SnapshotRequest), Message::Error { code, .. } if code == "NO_RIG"));
        assert!(matches!(server.handle(Message::Hello { version: 9 }), Message::Error { code, .. } if code == "VERSION"));
    }
}
