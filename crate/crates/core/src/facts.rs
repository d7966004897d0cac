//! Central fact store: dialogue context ("true now"), episodic memory, and a
//! knowledge base of general facts. Each partition indexes its facts on the
//! predicate and on every ground argument.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::el::{parse_all, unify, Bindings, Expr, ParseError, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Context,
    Memory,
    Kb,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Context, Partition::Memory, Partition::Kb];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FactError {
    #[error("fact `{0}` contains free variables")]
    NonGroundFact(Expr),
    #[error("line {line}: {message}")]
    Seed { line: usize, message: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum IndexKey {
    Pred(Expr),
    Arg(Expr),
}

/// Keys under which a fact (or a pattern's ground parts) is indexed.
fn index_keys(e: &Expr) -> Vec<IndexKey> {
    match e {
        Expr::List(items) if items.len() >= 2 => {
            let mut keys = Vec::with_capacity(items.len());
            if items[1].is_ground() {
                keys.push(IndexKey::Pred(items[1].clone()));
            }
            for (i, arg) in items.iter().enumerate() {
                if i != 1 && arg.is_ground() {
                    keys.push(IndexKey::Arg(arg.clone()));
                }
            }
            keys
        }
        Expr::List(items) => match items.first() {
            Some(head) if head.is_ground() => vec![IndexKey::Pred(head.clone())],
            _ => Vec::new(),
        },
        Expr::Variable(_) => Vec::new(),
        atom => vec![IndexKey::Pred(atom.clone())],
    }
}

/// A stored fact with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub fact: Expr,
    /// Episode token characterizing the fact (context entries always carry one).
    pub token: Option<Symbol>,
    pub asserted_at: Duration,
    /// Transient entries are speech-act observations expired at the next user turn.
    pub transient: bool,
}

#[derive(Debug, Clone, Default)]
struct FactSet {
    slots: Vec<Option<Entry>>,
    positions: HashMap<Expr, usize>,
    index: HashMap<IndexKey, BTreeSet<usize>>,
}

impl FactSet {
    fn insert(&mut self, entry: Entry) -> bool {
        if self.positions.contains_key(&entry.fact) {
            return false;
        }
        let id = self.slots.len();
        for key in index_keys(&entry.fact) {
            self.index.entry(key).or_default().insert(id);
        }
        self.positions.insert(entry.fact.clone(), id);
        self.slots.push(Some(entry));
        true
    }

    fn remove(&mut self, fact: &Expr) -> Option<Entry> {
        let id = self.positions.remove(fact)?;
        for key in index_keys(fact) {
            if let Some(ids) = self.index.get_mut(&key) {
                ids.remove(&id);
                if ids.is_empty() {
                    self.index.remove(&key);
                }
            }
        }
        self.slots[id].take()
    }

    fn get(&self, fact: &Expr) -> Option<&Entry> {
        self.positions.get(fact).and_then(|&id| self.slots[id].as_ref())
    }

    fn entries(&self) -> impl DoubleEndedIterator<Item = &Entry> {
        self.slots.iter().flatten()
    }

    fn len(&self) -> usize {
        self.positions.len()
    }

    /// Ids of facts that can possibly unify with `pattern`, in insertion order.
    fn candidates(&self, pattern: &Expr) -> Vec<usize> {
        let keys = index_keys(pattern);
        if keys.is_empty() {
            return (0..self.slots.len()).filter(|&i| self.slots[i].is_some()).collect();
        }
        let mut sets: Vec<&BTreeSet<usize>> = Vec::with_capacity(keys.len());
        for key in &keys {
            match self.index.get(key) {
                Some(ids) => sets.push(ids),
                None => return Vec::new(),
            }
        }
        sets.sort_by_key(|s| s.len());
        let (first, rest) = sets.split_first().expect("nonempty");
        first.iter().copied().filter(|id| rest.iter().all(|s| s.contains(id))).collect()
    }
}

/// One query result.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub partition: Partition,
    pub fact: Expr,
    pub bindings: Bindings,
    pub token: Option<Symbol>,
    pub asserted_at: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct FactStore {
    context: FactSet,
    memory: FactSet,
    kb: FactSet,
    now: Duration,
    next_episode: u64,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn set(&self, p: Partition) -> &FactSet {
        match p {
            Partition::Context => &self.context,
            Partition::Memory => &self.memory,
            Partition::Kb => &self.kb,
        }
    }

    fn set_mut(&mut self, p: Partition) -> &mut FactSet {
        match p {
            Partition::Context => &mut self.context,
            Partition::Memory => &mut self.memory,
            Partition::Kb => &mut self.kb,
        }
    }

    /// Sets the timestamp recorded on subsequent assertions.
    pub fn set_now(&mut self, now: Duration) {
        self.now = now;
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    /// Mints a fresh episode token (`e1`, `e2`, ...).
    pub fn new_episode(&mut self) -> Symbol {
        self.next_episode += 1;
        Symbol::new(format!("e{}", self.next_episode))
    }

    /// Asserts a ground fact. Re-asserting an existing fact is a no-op.
    /// Context facts get a fresh episode token.
    pub fn assert_fact(&mut self, partition: Partition, fact: Expr) -> Result<(), FactError> {
        let token = (partition == Partition::Context).then(|| self.new_episode());
        self.insert(partition, fact, token, false)
    }

    /// Asserts a transient context observation characterized by `token`.
    pub fn assert_episode(&mut self, fact: Expr, token: Symbol) -> Result<(), FactError> {
        self.insert(Partition::Context, fact, Some(token), true)
    }

    fn insert(
        &mut self,
        partition: Partition,
        fact: Expr,
        token: Option<Symbol>,
        transient: bool,
    ) -> Result<(), FactError> {
        if !fact.is_ground() {
            return Err(FactError::NonGroundFact(fact));
        }
        let entry = Entry { fact, token, asserted_at: self.now, transient };
        self.set_mut(partition).insert(entry);
        Ok(())
    }

    /// Records `(token formula)` in episodic memory.
    pub fn record_episode(&mut self, token: &Symbol, formula: &Expr) -> Result<(), FactError> {
        let record = Expr::list([Expr::Symbol(token.clone()), formula.clone()]);
        self.insert(Partition::Memory, record, None, false)
    }

    /// Removes an exact fact. A fact leaving the context is kept in memory as
    /// its episode record.
    pub fn retract_fact(&mut self, partition: Partition, fact: &Expr) -> bool {
        let Some(entry) = self.set_mut(partition).remove(fact) else {
            return false;
        };
        if partition == Partition::Context {
            if let Some(token) = &entry.token {
                let record = Expr::list([Expr::Symbol(token.clone()), entry.fact.clone()]);
                self.memory.insert(Entry { fact: record, token: None, asserted_at: self.now, transient: false });
            }
        }
        true
    }

    /// Retracts every transient context observation; returns how many.
    pub fn expire_transient(&mut self) -> usize {
        let stale: Vec<Expr> =
            self.context.entries().filter(|e| e.transient).map(|e| e.fact.clone()).collect();
        for f in &stale {
            self.retract_fact(Partition::Context, f);
        }
        stale.len()
    }

    pub fn contains(&self, partition: Partition, fact: &Expr) -> bool {
        self.set(partition).get(fact).is_some()
    }

    pub fn entry(&self, partition: Partition, fact: &Expr) -> Option<&Entry> {
        self.set(partition).get(fact)
    }

    /// Facts unifying with `pattern`, partition by partition in the order
    /// given, each in assertion order.
    pub fn query(&self, partitions: &[Partition], pattern: &Expr) -> Vec<Hit> {
        let mut hits = Vec::new();
        for &p in partitions {
            let set = self.set(p);
            for id in set.candidates(pattern) {
                let Some(entry) = &set.slots[id] else { continue };
                if let Some(bindings) = unify(pattern, &entry.fact, &Bindings::new()) {
                    hits.push(Hit {
                        partition: p,
                        fact: entry.fact.clone(),
                        bindings,
                        token: entry.token.clone(),
                        asserted_at: entry.asserted_at,
                    });
                }
            }
        }
        hits
    }

    /// Context entries, most recent first.
    pub fn context_by_recency(&self) -> impl Iterator<Item = &Entry> {
        self.context.entries().rev()
    }

    pub fn entries(&self, partition: Partition) -> impl Iterator<Item = &Entry> {
        self.set(partition).entries()
    }

    pub fn len(&self, partition: Partition) -> usize {
        self.set(partition).len()
    }

    /// One fact per line, in the same notation accepted by [`load_facts`].
    pub fn dump(&self, partition: Partition) -> String {
        let mut out = String::new();
        for e in self.set(partition).entries() {
            let _ = writeln!(out, "{}", e.fact);
        }
        out
    }
}

/// Reads a fact file: one ground expression per line, `;` comments allowed.
pub fn load_facts(text: &str) -> Result<Vec<Expr>, FactError> {
    let mut out = Vec::new();
    for (pos, fact) in parse_all(text)? {
        if !fact.is_ground() {
            return Err(FactError::Seed { line: pos.line, message: format!("fact `{fact}` is not ground") });
        }
        out.push(fact);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::el::{parse_expr, Variable};

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn assert_then_query() {
        let mut store = FactStore::new();
        store.assert_fact(Partition::Context, p("(DOCTOR reply-to.v E2)")).unwrap();
        let hits = store.query(&[Partition::Context], &p("(?x reply-to.v E2)"));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].bindings.get(&Variable::new("x")), Some(&p("doctor")));
    }

    #[test]
    fn non_ground_rejected() {
        let mut store = FactStore::new();
        let err = store.assert_fact(Partition::Kb, p("(?x likes tea)")).unwrap_err();
        assert!(matches!(err, FactError::NonGroundFact(_)));
    }

    #[test]
    fn duplicate_assert_is_idempotent() {
        let mut store = FactStore::new();
        store.assert_fact(Partition::Kb, p("(a b c)")).unwrap();
        store.assert_fact(Partition::Kb, p("(a b c)")).unwrap();
        assert_eq!(store.len(Partition::Kb), 1);
    }

    #[test]
    fn retract_semantics() {
        let mut store = FactStore::new();
        let f = p("(doctor say-to.v sophie \"hello\")");
        store.assert_fact(Partition::Context, f.clone()).unwrap();
        assert!(store.retract_fact(Partition::Context, &f));
        assert!(store.query(&[Partition::Context], &f).is_empty());
        assert!(!store.retract_fact(Partition::Context, &f));
        let recorded = store.query(&[Partition::Memory], &Expr::list([Expr::var("tok"), f.clone()]));
        assert_eq!(recorded.len(), 1);
    }

    #[test]
    fn kb_query_binds() {
        let mut store = FactStore::new();
        store.assert_fact(Partition::Kb, p("(SOPHIE has-condition.n CANCER.N)")).unwrap();
        let hits = store.query(&[Partition::Kb], &p("(SOPHIE has-condition.n ?c)"));
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].bindings.get(&Variable::new("c")), Some(&p("cancer.n")));
        assert_eq!(store.query(&[Partition::Kb], &p("(SOPHIE has-condition.n CANCER.N)")).len(), 1);
        assert!(store.query(&[Partition::Kb], &p("(SOPHIE has-condition.n flu.n)")).is_empty());
    }

    #[test]
    fn partition_isolation() {
        let mut store = FactStore::new();
        store.assert_fact(Partition::Kb, p("(a pred.v b)")).unwrap();
        assert!(store.query(&[Partition::Context], &p("(?x pred.v ?y)")).is_empty());
        assert_eq!(store.query(&[Partition::Kb], &p("(?x pred.v ?y)")).len(), 1);
    }

    #[test]
    fn expire_moves_transient_to_memory() {
        let mut store = FactStore::new();
        let tok = store.new_episode();
        store.assert_episode(p("(doctor reply-to.v e0)"), tok).unwrap();
        store.assert_fact(Partition::Context, p("(sophie know.v (ans-to test-results))")).unwrap();
        assert_eq!(store.expire_transient(), 1);
        assert_eq!(store.len(Partition::Context), 1);
        assert_eq!(store.len(Partition::Memory), 1);
    }

    #[test]
    fn seed_file() {
        let facts = load_facts("; kb\n(sophie person.n)\n(sophie has-condition.n cancer.n)\n").unwrap();
        assert_eq!(facts.len(), 2);
        assert!(matches!(load_facts("(a ?b)"), Err(FactError::Seed { line: 1, .. })));
    }
}
