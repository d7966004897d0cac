//! Hierarchical dialogue plans.
//!
//! A plan is an arena of steps linked into doubly-linked chains. A step that
//! expands a sub-schema owns a child chain through `subplan`, and each step of
//! that chain points back through `parent`. Each schema instance in the plan
//! keeps its own variable bindings, which only ever grow.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::el::{substitute, Bindings, Expr, Symbol, Variable};
use crate::facts::{FactStore, Partition};
use crate::schema::{DialogueSchema, InstanceIds, SchemaError, SchemaInstance, SectionKind};

pub type StepId = usize;

/// Iterations allowed for a `repeat-until` step.
pub const REPEAT_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Matched { token: Symbol, bindings: Bindings },
    Executed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub id: StepId,
    /// Index into [`Plan::instances`].
    pub instance: usize,
    pub label: Variable,
    pub formula: Expr,
    pub certainty: f64,
    pub status: StepStatus,
    pub prev: Option<StepId>,
    pub next: Option<StepId>,
    pub subplan: Option<StepId>,
    pub parent: Option<StepId>,
    /// Schema to expand directly, for steps inserted by splicing or replanning.
    pub forced_schema: Option<Symbol>,
    /// Whether unmet goals of this step's subplan may trigger replanning.
    pub can_replan: bool,
}

/// Expectation wait before a step is skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Window {
    Finite(Duration),
    Infinite,
}

/// `base·c/(1−c)`; certainty 1 never times out.
pub fn certainty_timeout(c: f64, base: Duration) -> Window {
    let c = c.clamp(0.0, 1.0);
    if c >= 1.0 {
        Window::Infinite
    } else {
        Window::Finite(Duration::from_secs_f64(base.as_secs_f64() * c / (1.0 - c)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplanOutcome {
    Respond { words: Vec<String> },
    ActivateSubschema { schema: Symbol },
    MoveOn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PlanEvent {
    ExpectationMatched { step: StepId, token: Symbol },
    ExpectationTimedOut { step: StepId },
    GoalAlreadySatisfied { step: StepId },
    ActionExecuted { step: StepId },
    ActionFailed { step: StepId, reason: String },
    SubschemaExpanded { step: StepId, schema: Symbol },
    ReplanTriggered { step: StepId, outcome: ReplanOutcome },
    PlanExhausted,
}

/// What the session did with a system action.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionOutcome {
    /// Performed; the episode variable is bound to `token` when given.
    Done { token: Option<Symbol>, bindings: Bindings },
    /// Not performed yet; the plan holds on this step.
    Defer,
    /// The action is a sub-schema to expand.
    Expand { schema: Symbol, args: Vec<Expr> },
    Failed(String),
}

/// A step handed to the session for execution.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub step: StepId,
    pub label: &'a Variable,
    /// The step formula with the instance's bindings applied.
    pub formula: &'a Expr,
    pub instance: &'a SchemaInstance,
}

pub trait ActionHandler {
    fn perform(&mut self, ctx: StepContext<'_>, store: &mut FactStore) -> ActionOutcome;

    /// Whether a goal or condition currently holds.
    fn holds(&self, store: &FactStore, formula: &Expr) -> bool {
        !store.query(&[Partition::Context, Partition::Kb], formula).is_empty()
    }

    /// Fallback when a sub-schema ends with `goal` unmet.
    fn replan(&mut self, _goal: &Expr, _store: &FactStore) -> ReplanOutcome {
        ReplanOutcome::MoveOn
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown schema `{0}`")]
    UnknownSchema(Symbol),
    #[error("no such step {0}")]
    NoSuchStep(StepId),
    #[error("step {0} already has a subplan")]
    AlreadyExpanded(StepId),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone)]
pub struct PlanInstance {
    pub instance: SchemaInstance,
    /// Bindings acquired while running, on top of the instance's own.
    pub bindings: Bindings,
    pub parent_step: Option<StepId>,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub instances: Vec<PlanInstance>,
    pub first: StepId,
    /// `None` is the end sentinel.
    pub current: Option<StepId>,
    pub last_modified: Duration,
    pub timeout_base: Duration,
    /// Non-blocking condition failures and similar notes.
    pub warnings: Vec<String>,
    schemas: BTreeMap<Symbol, Arc<DialogueSchema>>,
    ids: InstanceIds,
}

pub const DEFAULT_TIMEOUT_BASE: Duration = Duration::from_secs(10);

impl Plan {
    /// One step per episode of `inst`, in the schema's default order.
    pub fn new(
        inst: SchemaInstance,
        schemas: BTreeMap<Symbol, Arc<DialogueSchema>>,
        now: Duration,
    ) -> Result<Self, PlanError> {
        let mut plan = Plan {
            steps: Vec::new(),
            instances: Vec::new(),
            first: 0,
            current: None,
            last_modified: now,
            timeout_base: DEFAULT_TIMEOUT_BASE,
            warnings: Vec::new(),
            schemas,
            ids: InstanceIds::default(),
        };
        let first = plan.build_chain(inst, None)?;
        plan.first = first.expect("validated schemas have episodes");
        plan.current = first;
        Ok(plan)
    }

    pub fn with_timeout_base(mut self, base: Duration) -> Self {
        self.timeout_base = base;
        self
    }

    pub fn instance_ids(&mut self) -> &mut InstanceIds {
        &mut self.ids
    }

    pub fn schema(&self, name: &Symbol) -> Option<&Arc<DialogueSchema>> {
        self.schemas.get(name)
    }

    pub fn step(&self, id: StepId) -> &PlanStep {
        &self.steps[id]
    }

    pub fn current_step(&self) -> Option<&PlanStep> {
        self.current.map(|id| &self.steps[id])
    }

    pub fn is_exhausted(&self) -> bool {
        self.current.is_none()
    }

    /// Runtime bindings of an instance, including header bindings.
    pub fn bindings(&self, instance: usize) -> &Bindings {
        &self.instances[instance].bindings
    }

    /// The step formula with its instance's bindings applied.
    pub fn formula(&self, id: StepId) -> Expr {
        let s = &self.steps[id];
        substitute(&s.formula, &self.instances[s.instance].bindings)
    }

    fn build_chain(&mut self, inst: SchemaInstance, parent: Option<StepId>) -> Result<Option<StepId>, PlanError> {
        let order = inst.schema.episode_order()?.linear();
        let idx = self.instances.len();
        let mut ids = Vec::new();
        for label in &order {
            let Some(entry) = inst.episode(label) else { continue };
            let id = self.steps.len();
            self.steps.push(PlanStep {
                id,
                instance: idx,
                label: label.clone(),
                formula: entry.formula.clone(),
                certainty: inst.certainty(label),
                status: StepStatus::Pending,
                prev: ids.last().copied(),
                next: None,
                subplan: None,
                parent,
                forced_schema: None,
                can_replan: true,
            });
            if let Some(&p) = ids.last() {
                self.steps[p].next = Some(id);
            }
            ids.push(id);
        }
        let bindings = inst.bindings.clone();
        self.instances.push(PlanInstance { instance: inst, bindings, parent_step: parent });
        Ok(ids.first().copied())
    }

    fn touch(&mut self, now: Duration) {
        self.last_modified = self.last_modified.max(now);
    }

    fn new_step(&mut self, template: &PlanStep, label: Variable, formula: Expr) -> StepId {
        let id = self.steps.len();
        self.steps.push(PlanStep {
            id,
            instance: template.instance,
            label,
            formula,
            certainty: 1.0,
            status: StepStatus::Pending,
            prev: None,
            next: None,
            subplan: None,
            parent: template.parent,
            forced_schema: None,
            can_replan: false,
        });
        id
    }

    fn insert_after(&mut self, at: StepId, new: StepId) {
        let next = self.steps[at].next;
        self.steps[new].prev = Some(at);
        self.steps[new].next = next;
        self.steps[new].parent = self.steps[at].parent;
        self.steps[at].next = Some(new);
        if let Some(n) = next {
            self.steps[n].prev = Some(new);
        }
    }

    fn fresh_label(&self, base: &Variable) -> Variable {
        Variable::new(format!("{}.{}", base.name(), self.steps.len()))
    }

    /// Inserts a step that expands `schema` right after the top-level step
    /// currently in progress, so it becomes the next topic.
    pub fn splice_subschema(&mut self, schema: &Symbol, now: Duration) -> Result<StepId, PlanError> {
        if !self.schemas.contains_key(schema) {
            return Err(PlanError::UnknownSchema(schema.clone()));
        }
        let anchor = match self.current {
            Some(mut s) => {
                while let Some(p) = self.steps[s].parent {
                    s = p;
                }
                s
            }
            None => {
                let mut last = self.first;
                while let Some(n) = self.steps[last].next {
                    last = n;
                }
                last
            }
        };
        let template = self.steps[anchor].clone();
        let label = self.fresh_label(&template.label);
        let formula = Expr::list([self.instances[template.instance].instance.me.clone(), Expr::sym("discuss.v"), Expr::Symbol(schema.clone())]);
        let id = self.new_step(&template, label, formula);
        self.steps[id].forced_schema = Some(schema.clone());
        self.insert_after(anchor, id);
        if self.current.is_none() {
            self.current = Some(id);
        }
        self.touch(now);
        Ok(id)
    }

    /// Installs `schema` as the subplan of `step` and descends into it.
    pub fn expand_subschema(
        &mut self,
        step: StepId,
        schema: &Symbol,
        args: &[Expr],
        now: Duration,
    ) -> Result<(), PlanError> {
        let inst = self.instantiate(step, schema, args)?;
        self.install(step, inst, now)
    }

    fn instantiate(&mut self, step: StepId, schema: &Symbol, args: &[Expr]) -> Result<SchemaInstance, PlanError> {
        let s = self.steps.get(step).ok_or(PlanError::NoSuchStep(step))?;
        let sch = self.schemas.get(schema).cloned().ok_or_else(|| PlanError::UnknownSchema(schema.clone()))?;
        let parent = &self.instances[s.instance].instance;
        let (me, you) = (parent.me.clone(), parent.you.clone());
        Ok(sch.instantiate(args, &me, &you, &mut self.ids)?)
    }

    fn install(&mut self, step: StepId, inst: SchemaInstance, now: Duration) -> Result<(), PlanError> {
        if self.steps[step].subplan.is_some() {
            return Err(PlanError::AlreadyExpanded(step));
        }
        let first = self.build_chain(inst, Some(step))?;
        self.steps[step].subplan = first;
        self.current = Some(first.unwrap_or(step));
        self.touch(now);
        Ok(())
    }

    /// Moves `current` past `from`, climbing to the parent when a chain ends.
    fn step_forward(&mut self, from: StepId) {
        self.current = match self.steps[from].next {
            Some(n) => Some(n),
            None => self.steps[from].parent,
        };
    }

    fn finish(&mut self, id: StepId, status: StepStatus, now: Duration) {
        self.steps[id].status = status;
        self.step_forward(id);
        self.touch(now);
    }

    /// Attempts to match an expectation step against context.
    pub fn match_expectation(&self, step: StepId, store: &FactStore) -> Option<(Symbol, Bindings)> {
        let s = &self.steps[step];
        let pattern = self.formula(step);
        let hit = store.query(&[Partition::Context], &pattern).into_iter().max_by_key(|h| h.asserted_at)?;
        let token = hit.token.clone()?;
        let mut b = hit.bindings;
        b.bind(s.label.clone(), Expr::Symbol(token.clone()));
        Some((token, b))
    }

    fn is_action(&self, id: StepId) -> bool {
        let s = &self.steps[id];
        let me = &self.instances[s.instance].instance.me;
        s.formula.as_list().and_then(|i| i.first()) == Some(me)
    }

    fn unmet_goal<H: ActionHandler + ?Sized>(&self, instance: usize, store: &FactStore, handler: &H) -> Option<Expr> {
        let pi = &self.instances[instance];
        pi.instance
            .goals()
            .iter()
            .map(|g| substitute(&g.formula, &pi.bindings))
            .find(|g| !handler.holds(store, g))
    }

    /// Performs at most one observable transition. `None` means the plan is
    /// waiting on the current step.
    pub fn advance<H: ActionHandler + ?Sized>(
        &mut self,
        store: &mut FactStore,
        now: Duration,
        handler: &mut H,
    ) -> Option<PlanEvent> {
        loop {
            let Some(id) = self.current else {
                return Some(PlanEvent::PlanExhausted);
            };
            if self.steps[id].status != StepStatus::Pending {
                self.step_forward(id);
                continue;
            }
            if self.steps[id].subplan.is_some() {
                match self.close_subplan(id, store, now, handler) {
                    Some(ev) => return Some(ev),
                    None => continue,
                }
            }
            let formula = self.formula(id);
            if let Some(cond) = repeat_condition(&formula) {
                return Some(self.start_repeat(id, &cond, store, now, handler));
            }
            if let Some(schema) = self.steps[id].forced_schema.clone() {
                return Some(self.try_expand(id, &schema, &[], store, now, handler));
            }
            if self.is_action(id) {
                let pi = &self.instances[self.steps[id].instance];
                let ctx = StepContext { step: id, label: &self.steps[id].label, formula: &formula, instance: &pi.instance };
                match handler.perform(ctx, store) {
                    ActionOutcome::Done { token, bindings } => {
                        let label = self.steps[id].label.clone();
                        let inst = self.steps[id].instance;
                        let b = &mut self.instances[inst].bindings;
                        b.merge_new(&bindings);
                        if let Some(t) = token {
                            if !b.contains(&label) {
                                b.bind(label, Expr::Symbol(t));
                            }
                        }
                        self.finish(id, StepStatus::Executed, now);
                        return Some(PlanEvent::ActionExecuted { step: id });
                    }
                    ActionOutcome::Defer => return None,
                    ActionOutcome::Expand { schema, args } => {
                        return Some(self.try_expand(id, &schema, &args, store, now, handler));
                    }
                    ActionOutcome::Failed(reason) => {
                        self.finish(id, StepStatus::Failed, now);
                        return Some(PlanEvent::ActionFailed { step: id, reason });
                    }
                }
            }
            if let Some((token, b)) = self.match_expectation(id, store) {
                let inst = self.steps[id].instance;
                self.instances[inst].bindings.merge_new(&b);
                let _ = store.record_episode(&token, &substitute(&formula, &b));
                self.finish(id, StepStatus::Matched { token: token.clone(), bindings: b }, now);
                return Some(PlanEvent::ExpectationMatched { step: id, token });
            }
            return match certainty_timeout(self.steps[id].certainty, self.timeout_base) {
                Window::Finite(w) if now.saturating_sub(self.last_modified) >= w => {
                    self.finish(id, StepStatus::Skipped, now);
                    Some(PlanEvent::ExpectationTimedOut { step: id })
                }
                _ => None,
            };
        }
    }

    fn try_expand<H: ActionHandler + ?Sized>(
        &mut self,
        id: StepId,
        schema: &Symbol,
        args: &[Expr],
        store: &FactStore,
        now: Duration,
        handler: &mut H,
    ) -> PlanEvent {
        let inst = match self.instantiate(id, schema, args) {
            Ok(i) => i,
            Err(e) => {
                self.finish(id, StepStatus::Failed, now);
                return PlanEvent::ActionFailed { step: id, reason: e.to_string() };
            }
        };
        let goals = inst.goals();
        if !goals.is_empty() && goals.iter().all(|g| handler.holds(store, &g.formula)) {
            self.finish(id, StepStatus::Skipped, now);
            return PlanEvent::GoalAlreadySatisfied { step: id };
        }
        for pre in inst.section(SectionKind::PreConds) {
            if handler.holds(store, &pre.formula) {
                continue;
            }
            if inst.necessity(&pre.label) >= 1.0 {
                self.finish(id, StepStatus::Failed, now);
                return PlanEvent::ActionFailed {
                    step: id,
                    reason: format!("precondition {} of {schema} does not hold: {}", pre.label, pre.formula),
                };
            }
            self.warnings.push(format!("{schema}: precondition {} does not hold", pre.label));
        }
        match self.install(id, inst, now) {
            Ok(()) => PlanEvent::SubschemaExpanded { step: id, schema: schema.clone() },
            Err(e) => {
                self.finish(id, StepStatus::Failed, now);
                PlanEvent::ActionFailed { step: id, reason: e.to_string() }
            }
        }
    }

    fn start_repeat<H: ActionHandler + ?Sized>(
        &mut self,
        id: StepId,
        cond: &Expr,
        store: &FactStore,
        now: Duration,
        handler: &mut H,
    ) -> PlanEvent {
        if handler.holds(store, cond) {
            self.finish(id, StepStatus::Executed, now);
            return PlanEvent::GoalAlreadySatisfied { step: id };
        }
        let body = self.steps[id].formula.as_list().expect("checked")[2].clone();
        let mut template = self.steps[id].clone();
        template.parent = Some(id);
        let label = self.fresh_label(&template.label);
        let child = self.new_step(&template, label, body);
        self.steps[child].certainty = self.steps[id].certainty;
        self.steps[id].subplan = Some(child);
        self.current = Some(child);
        self.touch(now);
        PlanEvent::SubschemaExpanded { step: id, schema: Symbol::new("repeat-until") }
    }

    /// Called when the chain under `id` is done. Returns an event when one is
    /// observable, or `None` after silently moving on.
    fn close_subplan<H: ActionHandler + ?Sized>(
        &mut self,
        id: StepId,
        store: &mut FactStore,
        now: Duration,
        handler: &mut H,
    ) -> Option<PlanEvent> {
        let formula = self.formula(id);
        if let Some(cond) = repeat_condition(&formula) {
            let mut last = self.steps[id].subplan.expect("has subplan");
            let mut count = 1;
            while let Some(n) = self.steps[last].next {
                last = n;
                count += 1;
            }
            if handler.holds(store, &cond) || count >= REPEAT_CAP {
                self.finish(id, StepStatus::Executed, now);
                return None;
            }
            let template = self.steps[last].clone();
            let label = self.fresh_label(&self.steps[id].label);
            let child = self.new_step(&template, label, template.formula.clone());
            self.steps[child].certainty = template.certainty;
            self.insert_after(last, child);
            self.current = Some(child);
            self.touch(now);
            return Some(PlanEvent::SubschemaExpanded { step: id, schema: Symbol::new("repeat-until") });
        }
        let sub_instance = self.steps[self.steps[id].subplan.expect("has subplan")].instance;
        let unmet = self.unmet_goal(sub_instance, store, handler);
        let can_replan = self.steps[id].can_replan;
        self.steps[id].status = StepStatus::Executed;
        let Some(goal) = unmet.filter(|_| can_replan) else {
            self.step_forward(id);
            self.touch(now);
            return None;
        };
        let outcome = handler.replan(&goal, store);
        let template = self.steps[id].clone();
        let me = self.instances[template.instance].instance.me.clone();
        let you = self.instances[template.instance].instance.you.clone();
        match &outcome {
            ReplanOutcome::ActivateSubschema { schema } if self.schemas.contains_key(schema) => {
                let label = self.fresh_label(&template.label);
                let f = Expr::list([me, Expr::sym("discuss.v"), Expr::Symbol(schema.clone())]);
                let new = self.new_step(&template, label, f);
                self.steps[new].forced_schema = Some(schema.clone());
                self.insert_after(id, new);
            }
            ReplanOutcome::Respond { words } => {
                let label = self.fresh_label(&template.label);
                let f = Expr::list([me, Expr::sym("say-to.v"), you, Expr::words(&words.join(" "))]);
                let new = self.new_step(&template, label, f);
                self.insert_after(id, new);
            }
            _ => {}
        }
        self.step_forward(id);
        self.touch(now);
        Some(PlanEvent::ReplanTriggered { step: id, outcome })
    }

    /// Checks the chain structure: mutual prev/next links, parent and
    /// subplan links, and that every step is reachable exactly once.
    pub fn check_links(&self) -> Result<(), String> {
        let mut seen = vec![false; self.steps.len()];
        self.check_chain(self.first, None, &mut seen)?;
        if let Some(c) = self.current {
            if !seen[c] {
                return Err(format!("current step {c} is not reachable"));
            }
        }
        match seen.iter().position(|s| !s) {
            Some(orphan) => Err(format!("step {orphan} is not reachable")),
            None => Ok(()),
        }
    }

    fn check_chain(&self, first: StepId, parent: Option<StepId>, seen: &mut [bool]) -> Result<(), String> {
        if self.steps[first].prev.is_some() {
            return Err(format!("chain head {first} has a prev link"));
        }
        let mut at = Some(first);
        while let Some(id) = at {
            if std::mem::replace(&mut seen[id], true) {
                return Err(format!("step {id} reached twice"));
            }
            let s = &self.steps[id];
            if s.parent != parent {
                return Err(format!("step {id} has parent {:?}, expected {:?}", s.parent, parent));
            }
            if let Some(n) = s.next {
                if self.steps[n].prev != Some(id) {
                    return Err(format!("step {n}.prev does not point back to {id}"));
                }
            }
            if let Some(p) = s.prev {
                if self.steps[p].next != Some(id) {
                    return Err(format!("step {p}.next does not point to {id}"));
                }
            }
            if let Some(sub) = s.subplan {
                self.check_chain(sub, Some(id), seen)?;
            }
            at = s.next;
        }
        Ok(())
    }

    /// Depth-first listing of the step tree.
    pub fn snapshot(&self) -> PlanSnapshot {
        let mut steps = Vec::new();
        self.snapshot_chain(Some(self.first), 0, &mut steps);
        PlanSnapshot { current: self.current, steps }
    }

    fn snapshot_chain(&self, mut at: Option<StepId>, depth: usize, out: &mut Vec<SnapshotStep>) {
        while let Some(id) = at {
            let s = &self.steps[id];
            out.push(SnapshotStep {
                id,
                depth,
                schema: self.instances[s.instance].instance.name().clone(),
                label: s.label.to_string(),
                formula: self.formula(id).to_string(),
                status: status_name(&s.status).to_string(),
            });
            self.snapshot_chain(s.subplan, depth + 1, out);
            at = s.next;
        }
    }
}

fn repeat_condition(formula: &Expr) -> Option<Expr> {
    formula
        .as_list()
        .filter(|l| l.len() == 3 && l[0].is_symbol("repeat-until"))
        .map(|l| l[1].clone())
}

fn status_name(s: &StepStatus) -> &'static str {
    match s {
        StepStatus::Pending => "pending",
        StepStatus::Matched { .. } => "matched",
        StepStatus::Executed => "executed",
        StepStatus::Skipped => "skipped",
        StepStatus::Failed => "failed",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct SnapshotStep {
    pub id: StepId,
    pub depth: usize,
    pub schema: Symbol,
    pub label: String,
    pub formula: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
pub struct PlanSnapshot {
    pub current: Option<StepId>,
    pub steps: Vec<SnapshotStep>,
}

impl fmt::Display for PlanSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            let mark = if Some(s.id) == self.current { ">" } else { " " };
            writeln!(f, "{mark}{}{} [{}] {}", "  ".repeat(s.depth), s.label, s.status, s.formula)?;
        }
        Ok(())
    }
}
