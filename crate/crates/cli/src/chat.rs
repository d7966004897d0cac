use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Duration;

use dialschema::pack::Pack;
use dialschema::session::{transcript_string, Session, SessionConfig, SessionError, Speaker, TurnRecord, VirtualClock};

/// Virtual time that passes before each scripted doctor turn.
pub const TURN_GAP: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptLine {
    Say(String),
    /// `/wait N`: let N seconds pass in silence.
    Wait(u64),
}

pub fn parse_script(text: &str) -> anyhow::Result<Vec<ScriptLine>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("/wait") {
            let secs = rest.trim().parse().map_err(|_| anyhow::anyhow!("line {}: /wait needs whole seconds", i + 1))?;
            out.push(ScriptLine::Wait(secs));
        } else {
            out.push(ScriptLine::Say(line.to_string()));
        }
    }
    Ok(out)
}

/// Formats system turns the way the REPL prints them.
pub fn render_turns(session: &Session, turns: &[TurnRecord], show_trace: bool, out: &mut String) {
    let name = session.pack().me.to_string();
    let last_user = session.history().iter().rev().find(|r| r.speaker == Speaker::User);
    for t in turns {
        let _ = writeln!(out, "{name}: {}", t.text);
        if show_trace {
            let gist = match last_user {
                Some(u) if !u.gists.is_empty() => {
                    u.gists.iter().map(|g| format!("\"{}\" [{}]", g.text(), g.topic)).collect::<Vec<_>>().join("; ")
                }
                Some(_) => "none".to_string(),
                None => "-".to_string(),
            };
            let kind = t.kind.map(|k| format!("{k:?}").to_lowercase()).unwrap_or_default();
            let _ = writeln!(out, "  | gist: {gist}\n  | {kind}: {}", t.trace.join(" "));
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRun {
    /// Line-delimited JSON, one record per turn.
    pub transcript: String,
    /// Human-readable conversation.
    pub display: String,
    pub closed: bool,
}

/// Replays doctor lines against a fresh session on a virtual clock.
pub fn run_script(pack: Arc<Pack>, script: &[ScriptLine], seed: u64, show_trace: bool) -> Result<ScriptRun, SessionError> {
    let clock = VirtualClock::new();
    let config = SessionConfig { id: "script".into(), seed, ..SessionConfig::default() };
    let mut session = Session::create(pack, config, Arc::new(clock.clone()))?;
    let mut display = String::new();
    let opening: Vec<TurnRecord> = session.history().to_vec();
    render_turns(&session, &opening, show_trace, &mut display);
    let you = session.pack().you.to_string();
    for line in script {
        if session.is_closed() {
            break;
        }
        match line {
            ScriptLine::Wait(secs) => {
                clock.advance(Duration::from_secs(*secs));
                let turns = session.tick()?;
                render_turns(&session, &turns, show_trace, &mut display);
            }
            ScriptLine::Say(text) => {
                clock.advance(TURN_GAP);
                let _ = writeln!(display, "{you}: {text}");
                let turns = session.run_turn(text)?;
                render_turns(&session, &turns, show_trace, &mut display);
            }
        }
    }
    Ok(ScriptRun { transcript: transcript_string(session.history()), display, closed: session.is_closed() })
}
