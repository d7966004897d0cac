//! Transport-independent session bookkeeping: one engine session per id,
//! sequence numbers, persistence and eviction.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use dialschema::pack::{load_pack, Pack};
use dialschema::session::{
    read_transcript, transcript_string, write_transcript, Clock, Session, SessionConfig, Speaker, TurnRecord,
};

use crate::config::ServiceConfig;
use crate::protocol::{system_messages, ErrorCode, Resume, WireMessage};
use crate::ServiceError;

struct Slot {
    id: String,
    session: Option<Session>,
    records: Vec<TurnRecord>,
    persisted: usize,
    log: Vec<WireMessage>,
    client_seq: u64,
    ended: bool,
    last_active: Duration,
    path: PathBuf,
}

impl Slot {
    fn next_seq(&self) -> u64 {
        self.log.len() as u64 + 1
    }

    fn read_only(&self) -> bool {
        self.session.is_none()
    }

    fn push_system(&mut self, records: &[TurnRecord]) -> Vec<WireMessage> {
        let mut out = Vec::new();
        for r in records.iter().filter(|r| r.speaker == Speaker::System) {
            let mut seq = self.next_seq() - 1;
            let msgs = system_messages(&self.id, r, &mut || {
                seq += 1;
                seq
            });
            self.log.extend(msgs.iter().cloned());
            out.extend(msgs);
        }
        out
    }

    fn push_end(&mut self) -> WireMessage {
        self.ended = true;
        let m = WireMessage::EndSession { session: self.id.clone(), seq: self.next_seq() };
        self.log.push(m.clone());
        m
    }

    /// Appends unsaved records to the session file and syncs it.
    fn persist(&mut self) -> Result<(), ServiceError> {
        if let Some(s) = &self.session {
            self.records = s.history().to_vec();
        }
        if self.persisted == self.records.len() {
            return Ok(());
        }
        let io = |e: std::io::Error| ServiceError::Persistence(format!("{}: {e}", self.path.display()));
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(io)?;
        let mut buf = Vec::new();
        write_transcript(&self.records[self.persisted..], &mut buf).map_err(io)?;
        file.write_all(&buf).map_err(io)?;
        file.sync_data().map_err(io)?;
        self.persisted = self.records.len();
        Ok(())
    }
}

/// Messages for a transcript replayed from disk; matches what the live
/// session sent, minus any EndSession.
fn rebuild_log(id: &str, persona: &str, records: &[TurnRecord]) -> Vec<WireMessage> {
    let mut slot = Slot {
        id: id.into(),
        session: None,
        records: Vec::new(),
        persisted: 0,
        log: vec![WireMessage::SessionCreated { session: id.into(), seq: 1, persona: persona.into(), read_only: false }],
        client_seq: 0,
        ended: false,
        last_active: Duration::ZERO,
        path: PathBuf::new(),
    };
    slot.push_system(records);
    slot.log
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

pub struct Registry {
    pack: Arc<Pack>,
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    new_id: Mutex<Box<dyn FnMut() -> String + Send>>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry").field("pack", &self.pack.name).field("config", &self.config).finish()
    }
}

impl Registry {
    pub fn new(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        let pack = load_pack(&config.pack).map_err(ServiceError::PackValidationFailed)?;
        std::fs::create_dir_all(&config.transcripts)
            .map_err(|e| ServiceError::ConfigInvalid(format!("{}: {e}", config.transcripts.display())))?;
        Ok(Registry {
            pack: Arc::new(pack),
            config,
            clock,
            sessions: Mutex::new(HashMap::new()),
            new_id: Mutex::new(Box::new(|| uuid::Uuid::new_v4().to_string())),
        })
    }

    /// Replaces the session id generator.
    pub fn with_ids(self, ids: impl FnMut() -> String + Send + 'static) -> Self {
        *self.new_id.lock().expect("id lock") = Box::new(ids);
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn pack(&self) -> &Arc<Pack> {
        &self.pack
    }

    fn transcript_path(&self, id: &str) -> PathBuf {
        self.config.transcripts.join(format!("{id}.jsonl"))
    }

    fn slot(&self, id: &str) -> Option<Arc<Mutex<Slot>>> {
        self.sessions.lock().expect("registry lock").get(id).cloned()
    }

    /// Live slot, or a read-only one rebuilt from disk.
    fn slot_or_load(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        if let Some(s) = self.slot(id) {
            return Ok(s);
        }
        if !valid_id(id) {
            return Err(ServiceError::UnknownSession(id.into()));
        }
        let path = self.transcript_path(id);
        let records = load_records(&path).map_err(|_| ServiceError::UnknownSession(id.into()))?;
        let slot = Slot {
            id: id.into(),
            session: None,
            persisted: records.len(),
            log: rebuild_log(id, &self.pack.me.to_string(), &records),
            records,
            client_seq: u64::MAX,
            ended: true,
            last_active: self.clock.now(),
            path,
        };
        let slot = Arc::new(Mutex::new(slot));
        Ok(self.sessions.lock().expect("registry lock").entry(id.into()).or_insert(slot).clone())
    }

    pub fn live_sessions(&self) -> usize {
        self.sessions.lock().expect("registry lock").values().filter(|s| !s.lock().expect("slot").read_only()).count()
    }

    /// Processes one client message and returns everything to send back.
    pub fn handle(&self, msg: WireMessage) -> Vec<WireMessage> {
        match self.dispatch(msg) {
            Ok(out) => out,
            Err((session, e)) => vec![WireMessage::error(session.as_deref(), e.code(), e.to_string())],
        }
    }

    fn dispatch(&self, msg: WireMessage) -> Result<Vec<WireMessage>, (Option<String>, ServiceError)> {
        match msg {
            WireMessage::CreateSession { token, seed, resume } => {
                if self.config.token.is_some() && token != self.config.token {
                    return Err((None, ServiceError::Unauthorized));
                }
                match resume {
                    Some(r) => self.resume(&r).map_err(|e| (Some(r.session.clone()), e)),
                    None => self.create(seed.unwrap_or(self.config.seed)).map_err(|e| (None, e)),
                }
            }
            WireMessage::UserTurn { session, seq, text } => {
                self.user_turn(&session, seq, &text).map_err(|e| (Some(session), e))
            }
            WireMessage::EndSession { session, seq } => self.end(&session, seq).map_err(|e| (Some(session), e)),
            other => Err((
                other.session().map(str::to_string),
                ServiceError::BadMessage(format!("clients may not send {}", kind_name(&other))),
            )),
        }
    }

    fn create(&self, seed: u64) -> Result<Vec<WireMessage>, ServiceError> {
        let id = (self.new_id.lock().expect("id lock"))();
        let session = Session::create(
            self.pack.clone(),
            SessionConfig { id: id.clone(), seed, ..SessionConfig::default() },
            self.clock.clone(),
        )?;
        let mut slot = Slot {
            id: id.clone(),
            records: Vec::new(),
            persisted: 0,
            log: vec![WireMessage::SessionCreated {
                session: id.clone(),
                seq: 1,
                persona: self.pack.me.to_string(),
                read_only: false,
            }],
            client_seq: 0,
            ended: false,
            last_active: self.clock.now(),
            path: self.transcript_path(&id),
            session: None,
        };
        let opening = session.history().to_vec();
        let closed = session.is_closed();
        slot.session = Some(session);
        slot.persist()?;
        let mut out = vec![slot.log[0].clone()];
        out.extend(slot.push_system(&opening));
        if closed {
            out.push(slot.push_end());
        }
        self.sessions.lock().expect("registry lock").insert(id, Arc::new(Mutex::new(slot)));
        Ok(out)
    }

    fn resume(&self, r: &Resume) -> Result<Vec<WireMessage>, ServiceError> {
        let slot = self.slot_or_load(&r.session)?;
        let mut slot = slot.lock().expect("slot");
        slot.last_active = self.clock.now();
        let mut out: Vec<WireMessage> = slot.log.iter().filter(|m| m.seq().is_some_and(|s| s > r.after)).cloned().collect();
        if slot.read_only() {
            out.push(WireMessage::error(Some(&r.session), ErrorCode::ReadOnly, "session restored from its transcript; new turns are refused"));
        }
        Ok(out)
    }

    fn user_turn(&self, id: &str, seq: u64, text: &str) -> Result<Vec<WireMessage>, ServiceError> {
        let slot = self.slot_or_load(id)?;
        let mut slot = slot.lock().expect("slot");
        if slot.read_only() {
            return Err(ServiceError::ReadOnly(id.into()));
        }
        if seq <= slot.client_seq {
            return Err(ServiceError::Replay { seq, last: slot.client_seq });
        }
        if slot.ended {
            return Err(ServiceError::Session(dialschema::session::SessionError::SessionClosed));
        }
        slot.client_seq = seq;
        slot.last_active = self.clock.now();
        let session = slot.session.as_mut().expect("live session");
        let records = session.run_turn(text)?;
        let closed = session.is_closed();
        slot.persist()?;
        let mut out = slot.push_system(&records);
        if closed {
            out.push(slot.push_end());
        }
        Ok(out)
    }

    fn end(&self, id: &str, seq: u64) -> Result<Vec<WireMessage>, ServiceError> {
        let slot = self.slot_or_load(id)?;
        let mut slot = slot.lock().expect("slot");
        if slot.read_only() {
            return Err(ServiceError::ReadOnly(id.into()));
        }
        if seq <= slot.client_seq {
            return Err(ServiceError::Replay { seq, last: slot.client_seq });
        }
        slot.client_seq = seq;
        if slot.ended {
            return Ok(Vec::new());
        }
        Ok(vec![slot.push_end()])
    }

    /// Advances every open session's plan on its own clock.
    pub fn tick_all(&self) -> Vec<WireMessage> {
        let slots: Vec<_> = self.sessions.lock().expect("registry lock").values().cloned().collect();
        let mut out = Vec::new();
        for slot in slots {
            let mut slot = slot.lock().expect("slot");
            if slot.ended || slot.read_only() {
                continue;
            }
            let session = slot.session.as_mut().expect("live session");
            let Ok(records) = session.tick() else { continue };
            let closed = session.is_closed();
            if records.is_empty() && !closed {
                continue;
            }
            if let Err(e) = slot.persist() {
                out.push(WireMessage::error(Some(&slot.id), e.code(), e.to_string()));
                continue;
            }
            out.extend(slot.push_system(&records));
            if closed {
                out.push(slot.push_end());
            }
        }
        out
    }

    /// Drops sessions idle for longer than the configured timeout. Their
    /// transcripts stay on disk.
    pub fn evict_idle(&self) -> Vec<String> {
        let now = self.clock.now();
        let limit = self.config.idle_timeout();
        let mut map = self.sessions.lock().expect("registry lock");
        let stale: Vec<String> = map
            .iter()
            .filter(|(_, s)| now.saturating_sub(s.lock().expect("slot").last_active) >= limit)
            .map(|(id, _)| id.clone())
            .collect();
        for id in &stale {
            map.remove(id);
        }
        stale
    }

    /// The session's transcript document.
    pub fn export_transcript(&self, id: &str) -> Result<String, ServiceError> {
        let slot = self.slot_or_load(id)?;
        let slot = slot.lock().expect("slot");
        Ok(match &slot.session {
            Some(s) => transcript_string(s.history()),
            None => transcript_string(&slot.records),
        })
    }

    pub fn history(&self, id: &str) -> Result<Vec<TurnRecord>, ServiceError> {
        let slot = self.slot_or_load(id)?;
        let slot = slot.lock().expect("slot");
        Ok(match &slot.session {
            Some(s) => s.history().to_vec(),
            None => slot.records.clone(),
        })
    }
}

fn load_records(path: &Path) -> std::io::Result<Vec<TurnRecord>> {
    read_transcript(BufReader::new(File::open(path)?))
}

fn kind_name(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::CreateSession { .. } => "CreateSession",
        WireMessage::SessionCreated { .. } => "SessionCreated",
        WireMessage::UserTurn { .. } => "UserTurn",
        WireMessage::SystemTurn { .. } => "SystemTurn",
        WireMessage::Trace { .. } => "Trace",
        WireMessage::EndSession { .. } => "EndSession",
        WireMessage::Error { .. } => "Error",
    }
}
