//! Per-session orchestration: each user turn is observed, interpreted,
//! matched against the plan, and answered.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::el::{unify, Bindings, Expr, Symbol};
use crate::facts::{FactStore, Partition};
use crate::generate::{
    expand_last, fallback_response, paraphrase, select_reaction, FallbackPolicy, ParaphraseCounters, ResponseKind,
    ResponsePlanItem, DEFAULT_MAX_CLARIFICATIONS,
};
use crate::interpret::{extract_gist, gist_to_ulf, resolve_references, topic_of, GistClause};
use crate::pack::{Pack, PackDiagnostic};
use crate::planner::{
    ActionHandler, ActionOutcome, Plan, PlanError, PlanEvent, PlanSnapshot, ReplanOutcome, StepContext,
    DEFAULT_TIMEOUT_BASE,
};
use crate::schema::{InstanceIds, SchemaInstance};
use crate::transduction::{tokenize, DirectiveResult};

pub const TRANSCRIPT_VERSION: u32 = 1;
pub const REPLAN_TREE: &str = "replan";
/// Plan transitions allowed in one drive before the session gives up.
const MAX_EVENTS_PER_DRIVE: usize = 500;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("pack validation failed with {} error(s)", .0.len())]
    PackValidationFailed(Vec<PackDiagnostic>),
    #[error("session is closed")]
    SessionClosed,
    #[error("a subsystem named `{0}` is already registered")]
    DuplicateName(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
}

/// Manually advanced clock, shareable between a driver and its sessions.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        self.0.fetch_add(by.as_millis() as u64, Ordering::SeqCst);
    }

    pub fn set(&self, to: Duration) {
        self.0.store(to.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_millis(self.0.load(Ordering::SeqCst))
    }
}

/// Wall-clock time since creation.
#[derive(Debug, Clone)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum SubsystemTarget {
    Perceptual(String),
    Specialist(String),
}

impl SubsystemTarget {
    pub fn name(&self) -> &str {
        match self {
            SubsystemTarget::Perceptual(n) | SubsystemTarget::Specialist(n) => n,
        }
    }
}

/// Answers EL queries with ground facts.
pub trait Subsystem: Send {
    fn query(&mut self, query: &Expr) -> Vec<Expr>;
}

impl<F: FnMut(&Expr) -> Vec<Expr> + Send> Subsystem for F {
    fn query(&mut self, query: &Expr) -> Vec<Expr> {
        self(query)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsystemQuery {
    pub target: Option<SubsystemTarget>,
    pub query: Expr,
    pub reply: Vec<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

/// One line of a transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub version: u32,
    pub seq: u64,
    pub speaker: Speaker,
    pub text: String,
    pub words: Vec<String>,
    pub gists: Vec<GistClause>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ulf: Vec<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ResponseKind>,
    pub trace: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSnapshot>,
    pub at_ms: u64,
}

pub fn write_transcript<W: Write>(records: &[TurnRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn transcript_string(records: &[TurnRecord]) -> String {
    let mut buf = Vec::new();
    write_transcript(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_transcript<R: BufRead>(input: R) -> io::Result<Vec<TurnRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub id: String,
    pub seed: u64,
    pub timeout_base: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { id: "session".into(), seed: 0, timeout_base: DEFAULT_TIMEOUT_BASE }
    }
}

#[derive(Debug, Clone)]
struct UserTurn {
    seq: u64,
    gists: Vec<GistClause>,
}

/// Session state touched while the plan runs, kept apart from the plan
/// itself so both can be borrowed at once.
struct Agent {
    pack: Arc<Pack>,
    policy: FallbackPolicy,
    counters: ParaphraseCounters,
    prev_system_gist: Option<GistClause>,
    last_user_gist: Option<GistClause>,
    last_user: Option<UserTurn>,
    reacted_to: u64,
    awaiting_rephrase: bool,
    /// Reply tokens and the user turn each came from.
    reply_tokens: BTreeMap<Symbol, u64>,
    last_speech: Option<Symbol>,
    last_output: Vec<String>,
    outputs: Vec<ResponsePlanItem>,
    pending_trace: Vec<String>,
    subsystems: BTreeMap<String, (SubsystemTarget, Box<dyn Subsystem>)>,
    queries: Vec<SubsystemQuery>,
    warnings: Vec<String>,
}

fn words_of(e: &Expr) -> Vec<String> {
    e.first_words().map(|ws| ws.iter().map(|w| w.norm().to_string()).collect()).unwrap_or_default()
}

fn flatten_words(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Words(ws) => out.extend(ws.iter().map(|w| w.norm().to_string())),
        Expr::Symbol(s) => out.push(s.as_str().to_string()),
        Expr::List(items) => items.iter().for_each(|i| flatten_words(i, out)),
        _ => {}
    }
}

impl Agent {
    fn emit(&mut self, mut item: ResponsePlanItem) {
        if !self.pending_trace.is_empty() {
            let mut trace = std::mem::take(&mut self.pending_trace);
            trace.extend(item.provenance);
            item.provenance = trace;
        }
        self.last_output = item.words.clone();
        self.outputs.push(item);
    }

    fn topic(&self, words: &[String]) -> Symbol {
        topic_of(&self.pack.trees, words).unwrap_or_else(|| Symbol::new("general"))
    }

    fn max_clarifications(&self, inst: Option<&SchemaInstance>) -> usize {
        inst.and_then(|i| i.schema.max_clarifications)
            .or_else(|| self.pack.schema(&self.pack.top_level).and_then(|s| s.max_clarifications))
            .map(|n| n as usize)
            .unwrap_or(DEFAULT_MAX_CLARIFICATIONS)
    }

    fn fallback(&mut self, inst: Option<&SchemaInstance>) -> ResponseKind {
        let max = self.max_clarifications(inst);
        let default = match inst.and_then(|i| i.default_response.as_ref().map(|d| (i.name().clone(), d))) {
            Some((name, d)) => Some((name, words_of(d))),
            None => self
                .pack
                .schema(&self.pack.top_level)
                .and_then(|s| s.default_response.as_ref().map(|d| (s.name.clone(), words_of(d)))),
        };
        let item = fallback_response(
            &mut self.policy,
            max,
            &self.pack.clarifications,
            default.as_ref().map(|(n, w)| (n, w.as_slice())),
        );
        let kind = item.kind;
        self.emit(item);
        kind
    }

    fn react(&mut self, ctx: &StepContext<'_>) -> ActionOutcome {
        let items = ctx.formula.as_list().unwrap_or(&[]);
        let replied = items.get(2).and_then(Expr::as_symbol).and_then(|t| self.reply_tokens.get(t)).copied();
        let Some(user) = self.last_user.clone().filter(|u| replied.is_some_and(|r| u.seq >= r)) else {
            return ActionOutcome::Done { token: None, bindings: Bindings::new() };
        };
        if user.seq <= self.reacted_to {
            return if self.awaiting_rephrase {
                ActionOutcome::Defer
            } else {
                ActionOutcome::Done { token: None, bindings: Bindings::new() }
            };
        }
        self.reacted_to = user.seq;
        let target = user.gists.iter().rev().find(|g| g.is_question()).or_else(|| user.gists.first());
        let reaction = target.and_then(|g| select_reaction(&self.pack.trees, g));
        match reaction.map(|t| (t.result, t.trace)) {
            Some((DirectiveResult::Say { words } | DirectiveResult::Gist { words, .. }, trace)) => {
                self.policy.reset();
                self.awaiting_rephrase = false;
                let words = expand_last(&words, &self.last_output);
                self.emit(ResponsePlanItem { kind: ResponseKind::Reaction, words, provenance: trace });
                ActionOutcome::Done { token: None, bindings: Bindings::new() }
            }
            Some((DirectiveResult::Schema { name }, trace)) => {
                self.policy.reset();
                self.awaiting_rephrase = false;
                self.pending_trace = trace;
                ActionOutcome::Expand { schema: name, args: vec![] }
            }
            _ => match self.fallback(Some(ctx.instance)) {
                ResponseKind::Clarification => {
                    self.awaiting_rephrase = true;
                    ActionOutcome::Defer
                }
                _ => {
                    self.awaiting_rephrase = false;
                    ActionOutcome::Done { token: None, bindings: Bindings::new() }
                }
            },
        }
    }

    fn spoken(&mut self, ctx: &StepContext<'_>, store: &mut FactStore) -> ActionOutcome {
        let token = store.new_episode();
        let _ = store.record_episode(&token, ctx.formula);
        self.last_speech = Some(token.clone());
        ActionOutcome::Done { token: Some(token), bindings: Bindings::new() }
    }

    fn subsystem_query(&mut self, target: &Expr, query: &Expr, store: &mut FactStore) {
        let name = target.to_string();
        let (target, reply) = match self.subsystems.get_mut(&name) {
            Some((t, s)) => (Some(t.clone()), s.query(query)),
            None => {
                self.warnings.push(format!("query to unregistered subsystem `{name}`: {query}"));
                (None, Vec::new())
            }
        };
        let mut kept = Vec::new();
        for fact in reply {
            match store.assert_fact(Partition::Context, fact.clone()) {
                Ok(()) => kept.push(fact),
                Err(e) => self.warnings.push(format!("subsystem `{name}`: {e}")),
            }
        }
        self.queries.push(SubsystemQuery { target, query: query.clone(), reply: kept });
    }

    fn invoked_schema(&self, formula: &Expr) -> Option<(Symbol, Vec<Expr>)> {
        let pred = formula.predicate()?;
        let me = formula.as_list()?.first()?;
        for s in self.pack.schemas.values() {
            if s.action_predicate() != Some(pred) {
                continue;
            }
            let you = self.pack.you.clone();
            let header = s.header_formula().resolve_indexicals(me, &you);
            if let Some(b) = unify(&header, formula, &Bindings::new()) {
                let args: Option<Vec<Expr>> = s.header_params().iter().map(|v| b.get(v).cloned()).collect();
                if let Some(args) = args {
                    return Some((s.name.clone(), args));
                }
            }
        }
        None
    }

    fn normalize(&self, f: &Expr) -> Expr {
        let Expr::List(items) = f else { return f.clone() };
        if items.len() == 3 && items[1].is_symbol("want.v") {
            if let Some([that, p]) = items[2].as_list() {
                if that.is_symbol("that") {
                    return self.normalize(p);
                }
            }
        }
        if items.len() == 2 && items[0].is_symbol("ans-to") {
            if let Some(ws) = items[1].as_words() {
                let words: Vec<String> = ws.iter().map(|w| w.norm().to_string()).collect();
                return Expr::list([items[0].clone(), Expr::Symbol(self.topic(&words))]);
            }
        }
        Expr::List(items.iter().map(|i| self.normalize(i)).collect())
    }
}

impl ActionHandler for Agent {
    fn perform(&mut self, ctx: StepContext<'_>, store: &mut FactStore) -> ActionOutcome {
        let items = ctx.formula.as_list().unwrap_or(&[]);
        let pred = items.get(1).and_then(Expr::as_symbol).map(|s| s.as_str().to_string()).unwrap_or_default();
        match pred.as_str() {
            "say-to.v" => {
                let words = expand_last(&words_of(ctx.formula), &self.last_output);
                if let Some(topic) = topic_of(&self.pack.trees, &words) {
                    self.prev_system_gist = Some(GistClause::new(words.clone(), topic));
                }
                let provenance = vec![format!("schema:{}:{}", ctx.instance.name(), ctx.label)];
                self.emit(ResponsePlanItem { kind: ResponseKind::Scripted, words, provenance });
                self.spoken(&ctx, store)
            }
            "paraphrase-to.v" => {
                let words = words_of(ctx.formula);
                let gist = GistClause::new(words.clone(), self.topic(&words));
                let item = paraphrase(&self.pack.trees, &gist, self.last_user_gist.as_ref(), &mut self.counters);
                self.prev_system_gist = Some(gist);
                self.emit(item);
                self.spoken(&ctx, store)
            }
            "react-to.v" => self.react(&ctx),
            "query.v" if items.len() == 4 => {
                self.subsystem_query(&items[2], &items[3], store);
                ActionOutcome::Done { token: None, bindings: Bindings::new() }
            }
            "store.v" if items.len() == 3 => match store.assert_fact(Partition::Context, items[2].clone()) {
                Ok(()) => ActionOutcome::Done { token: None, bindings: Bindings::new() },
                Err(e) => ActionOutcome::Failed(e.to_string()),
            },
            _ => match self.invoked_schema(ctx.formula) {
                Some((schema, args)) => ActionOutcome::Expand { schema, args },
                None => ActionOutcome::Failed(format!("no primitive or schema performs `{}`", ctx.formula)),
            },
        }
    }

    fn holds(&self, store: &FactStore, formula: &Expr) -> bool {
        !store.query(&[Partition::Context, Partition::Kb], &self.normalize(formula)).is_empty()
    }

    fn replan(&mut self, goal: &Expr, _: &FactStore) -> ReplanOutcome {
        if !self.pack.trees.contains(REPLAN_TREE) {
            return ReplanOutcome::MoveOn;
        }
        let mut words = Vec::new();
        flatten_words(goal, &mut words);
        match self.pack.trees.transduce(REPLAN_TREE, &words).map(|t| t.result) {
            Some(DirectiveResult::Say { words }) => ReplanOutcome::Respond { words },
            Some(DirectiveResult::Schema { name }) => ReplanOutcome::ActivateSubschema { schema: name },
            _ => ReplanOutcome::MoveOn,
        }
    }
}

pub struct Session {
    pub id: String,
    store: FactStore,
    plan: Plan,
    agent: Agent,
    history: Vec<TurnRecord>,
    clock: Arc<dyn Clock>,
    closed: bool,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("id", &self.id).field("turns", &self.history.len()).finish()
    }
}

impl Session {
    /// Loads the pack at `root` and starts a session on it.
    pub fn open(root: &std::path::Path, config: SessionConfig, clock: Arc<dyn Clock>) -> Result<Self, SessionError> {
        let pack = crate::pack::load_pack(root).map_err(SessionError::PackValidationFailed)?;
        Self::create(Arc::new(pack), config, clock)
    }

    /// Instantiates the top-level schema and produces the opening turns.
    pub fn create(pack: Arc<Pack>, config: SessionConfig, clock: Arc<dyn Clock>) -> Result<Self, SessionError> {
        let now = clock.now();
        let mut store = FactStore::new();
        store.set_now(now);
        for f in &pack.kb {
            store.assert_fact(Partition::Kb, f.clone()).expect("pack facts are ground");
        }
        let top = pack.schema(&pack.top_level).cloned().ok_or_else(|| PlanError::UnknownSchema(pack.top_level.clone()))?;
        let mut ids = InstanceIds::default();
        let inst = top.instantiate(&[], &pack.me, &pack.you, &mut ids).map_err(PlanError::from)?;
        let plan = Plan::new(inst, pack.schemas.clone(), now)?.with_timeout_base(config.timeout_base);
        let agent = Agent {
            pack,
            policy: FallbackPolicy::new(config.seed),
            counters: ParaphraseCounters::default(),
            prev_system_gist: None,
            last_user_gist: None,
            last_user: None,
            reacted_to: 0,
            awaiting_rephrase: false,
            reply_tokens: BTreeMap::new(),
            last_speech: None,
            last_output: Vec::new(),
            outputs: Vec::new(),
            pending_trace: Vec::new(),
            subsystems: BTreeMap::new(),
            queries: Vec::new(),
            warnings: Vec::new(),
        };
        let mut s = Session { id: config.id, store, plan, agent, history: Vec::new(), clock, closed: false };
        s.drive(now);
        s.flush_outputs(now);
        Ok(s)
    }

    pub fn pack(&self) -> &Arc<Pack> {
        &self.agent.pack
    }

    pub fn history(&self) -> &[TurnRecord] {
        &self.history
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn store(&self) -> &FactStore {
        &self.store
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn warnings(&self) -> &[String] {
        &self.agent.warnings
    }

    pub fn queries(&self) -> &[SubsystemQuery] {
        &self.agent.queries
    }

    pub fn now(&self) -> Duration {
        self.clock.now()
    }

    pub fn register_subsystem(
        &mut self,
        target: SubsystemTarget,
        handler: Box<dyn Subsystem>,
    ) -> Result<(), SessionError> {
        let name = target.name().to_string();
        if self.agent.subsystems.contains_key(&name) {
            return Err(SessionError::DuplicateName(name));
        }
        self.agent.subsystems.insert(name, (target, handler));
        Ok(())
    }

    /// Handles one user utterance and returns the system turns it produced.
    pub fn run_turn(&mut self, text: &str) -> Result<Vec<TurnRecord>, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        let now = self.clock.now();
        self.store.set_now(now);
        self.store.expire_transient();

        let trees = &self.agent.pack.trees;
        let words = tokenize(text);
        let interp = extract_gist(trees, &words, self.agent.prev_system_gist.as_ref());
        let ulf: Vec<Expr> = interp
            .gists
            .iter()
            .filter_map(|g| gist_to_ulf(trees, g))
            .map(|u| resolve_references(&u, &self.store))
            .collect();
        let seq = self.history.len() as u64 + 1;
        if !words.is_empty() {
            self.observe(seq, &words, &interp.gists, &ulf);
        }
        for schema in &interp.schema_requests {
            if let Err(e) = self.plan.splice_subschema(schema, now) {
                self.agent.warnings.push(e.to_string());
            }
        }
        self.history.push(TurnRecord {
            version: TRANSCRIPT_VERSION,
            seq,
            speaker: Speaker::User,
            text: text.to_string(),
            words,
            gists: interp.gists.clone(),
            ulf,
            kind: None,
            trace: interp.traces.concat(),
            plan: None,
            at_ms: now.as_millis() as u64,
        });
        if let Some(g) = interp.gists.last() {
            self.agent.last_user_gist = Some(g.clone());
        }
        self.agent.last_user = Some(UserTurn { seq, gists: interp.gists });

        self.drive(now);
        if self.agent.outputs.is_empty() {
            let inst = self.plan.current_step().map(|s| self.plan.instances[s.instance].instance.clone());
            self.agent.reacted_to = seq;
            if self.agent.fallback(inst.as_ref()) == ResponseKind::Clarification {
                self.agent.awaiting_rephrase = true;
            }
        }
        Ok(self.flush_outputs(now))
    }

    /// Lets the plan react to elapsed time without user input.
    pub fn tick(&mut self) -> Result<Vec<TurnRecord>, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        let now = self.clock.now();
        self.store.set_now(now);
        self.drive(now);
        Ok(self.flush_outputs(now))
    }

    fn observe(&mut self, seq: u64, words: &[String], gists: &[GistClause], ulf: &[Expr]) {
        let pack = &self.agent.pack;
        let (me, you) = (pack.me.clone(), pack.you.clone());
        let store = &mut self.store;
        let said = Expr::list([you.clone(), Expr::sym("say-to.v"), me.clone(), Expr::words(&words.join(" "))]);
        let t = store.new_episode();
        let _ = store.assert_episode(said, t);
        if let Some(prev) = &self.agent.last_speech {
            let t = store.new_episode();
            let _ = store.assert_episode(Expr::list([you.clone(), Expr::sym("reply-to.v"), Expr::Symbol(prev.clone())]), t.clone());
            self.agent.reply_tokens.insert(t, seq);
        }
        for g in gists {
            let t = store.new_episode();
            let f = Expr::list([you.clone(), Expr::sym("paraphrase-to.v"), me.clone(), Expr::words(&g.text())]);
            let _ = store.assert_episode(f, t);
            if !g.is_question() {
                let known = Expr::list([me.clone(), Expr::sym("know.v"), Expr::list([Expr::sym("ans-to"), Expr::Symbol(g.topic.clone())])]);
                let _ = store.assert_fact(Partition::Context, known);
            }
        }
        for u in ulf {
            if let Err(e) = store.assert_fact(Partition::Context, u.clone()) {
                self.agent.warnings.push(e.to_string());
            }
        }
    }

    fn drive(&mut self, now: Duration) -> Vec<PlanEvent> {
        let mut events = Vec::new();
        for _ in 0..MAX_EVENTS_PER_DRIVE {
            match self.plan.advance(&mut self.store, now, &mut self.agent) {
                None => break,
                Some(PlanEvent::PlanExhausted) => {
                    self.closed = true;
                    break;
                }
                Some(e) => {
                    if let PlanEvent::ActionFailed { reason, .. } = &e {
                        self.agent.warnings.push(reason.clone());
                    }
                    events.push(e);
                }
            }
        }
        if events.len() == MAX_EVENTS_PER_DRIVE {
            self.agent.warnings.push(format!("plan did not settle within {MAX_EVENTS_PER_DRIVE} transitions"));
        }
        events
    }

    fn flush_outputs(&mut self, now: Duration) -> Vec<TurnRecord> {
        let snapshot = self.plan.snapshot();
        let mut out = Vec::new();
        for item in std::mem::take(&mut self.agent.outputs) {
            let rec = TurnRecord {
                version: TRANSCRIPT_VERSION,
                seq: self.history.len() as u64 + 1,
                speaker: Speaker::System,
                text: item.text(),
                words: item.words,
                gists: Vec::new(),
                ulf: Vec::new(),
                kind: Some(item.kind),
                trace: item.provenance,
                plan: Some(snapshot.clone()),
                at_ms: now.as_millis() as u64,
            };
            self.history.push(rec.clone());
            out.push(rec);
        }
        out
    }
}
