//! Lexical environments and the run-local store.

use std::fmt;
use std::sync::Arc;

use crate::lang::ast::Name;
use crate::symbolic::ValuePair;

/// A store address. Allocated by a strictly monotone counter; never reused
/// within a run.
pub type Addr = usize;

/// Persistent environment mapping names to store addresses. Binding returns
/// a new environment sharing the tail, so closures capture scopes cheaply.
#[derive(Clone, Default)]
pub struct Env(Option<Arc<EnvNode>>);

struct EnvNode {
    name: Name,
    addr: Addr,
    parent: Env,
}

impl Env {
    pub fn empty() -> Self {
        Env(None)
    }

    pub fn bind(&self, name: Name, addr: Addr) -> Env {
        Env(Some(Arc::new(EnvNode { name, addr, parent: self.clone() })))
    }

    pub fn lookup(&self, name: &str) -> Option<Addr> {
        let mut cur = self;
        while let Some(node) = &cur.0 {
            if node.name.as_ref() == name {
                return Some(node.addr);
            }
            cur = &node.parent;
        }
        None
    }
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut entries = Vec::new();
        let mut cur = self;
        while let Some(node) = &cur.0 {
            entries.push(format!("{}@{}", node.name, node.addr));
            cur = &node.parent;
        }
        write!(f, "Env[{}]", entries.join(", "))
    }
}

/// The run-local store. Addresses are allocated before their first write
/// (let-bound addresses are written when the continuation pops).
#[derive(Debug, Default)]
pub struct Store {
    slots: Vec<Option<ValuePair>>,
}

impl Store {
    pub fn new() -> Self {
        Store { slots: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Allocate a fresh, not-yet-written address.
    pub fn alloc(&mut self) -> Addr {
        self.slots.push(None);
        self.slots.len() - 1
    }

    /// Allocate a fresh address holding `value`.
    pub fn alloc_init(&mut self, value: ValuePair) -> Addr {
        self.slots.push(Some(value));
        self.slots.len() - 1
    }

    pub fn write(&mut self, addr: Addr, value: ValuePair) {
        self.slots[addr] = Some(value);
    }

    pub fn read(&self, addr: Addr) -> Option<&ValuePair> {
        self.slots.get(addr).and_then(|slot| slot.as_ref())
    }
}
