//! Def-use edge extraction over [`SyntaxTree`]s and edge-set matching.
//!
//! Every use of a variable is linked to the nearest preceding definition
//! visible in its lexical scope. Variables are renamed to their binding
//! order (`v0`, `v1`, …), so spelling never affects an edge. An edge also
//! records the variable the use flows into when it sits inside the value of
//! a declaration or assignment.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tree::{NodeId, SyntaxTree};

/// How a rule picks a child of the matched node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Select {
    Field(&'static str),
    FirstChildOfKind(&'static str),
    /// The last variable leaf anywhere below the node.
    LastVariableLeaf,
}

#[derive(Debug, Clone, Copy)]
pub struct DeclarationRule {
    pub kind: &'static str,
    /// Every selector that resolves contributes its variable leaves.
    pub names: &'static [Select],
    pub value: Option<Select>,
}

#[derive(Debug, Clone, Copy)]
pub struct AssignmentRule {
    pub kind: &'static str,
    pub target: Select,
    pub value: Select,
    pub operator: Select,
    /// Operator spellings that overwrite without reading the target.
    pub plain: &'static [&'static str],
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateRule {
    pub kind: &'static str,
    pub target: Select,
    /// The rule applies only when an unnamed child spells one of these.
    pub operators: &'static [&'static str],
}

/// Variable leaves under `parent` (optionally only in `field`) are names of
/// members, labels or types, not variables.
#[derive(Debug, Clone, Copy)]
pub struct OpaqueContext {
    pub parent: &'static str,
    pub field: Option<&'static str>,
}

/// Per-grammar description of scoping and binding constructs.
#[derive(Debug, Clone, Copy)]
pub struct DataflowRules {
    pub scopes: &'static [&'static str],
    pub variable_leaves: &'static [&'static str],
    pub declarations: &'static [DeclarationRule],
    pub assignments: &'static [AssignmentRule],
    pub updates: &'static [UpdateRule],
    /// Fields whose variable leaves bind a new variable where they occur.
    pub binding_fields: &'static [&'static str],
    pub opaque: &'static [OpaqueContext],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DefUseEdge {
    /// Normalized variable: index of its binding in binding order.
    pub var: u32,
    /// Which definition of `var` reaches the use (0 = the declaration).
    pub def: u32,
    /// Variable whose value the use feeds, if any.
    pub sink: Option<u32>,
}

pub fn extract_edges(tree: &SyntaxTree, rules: &DataflowRules) -> Vec<DefUseEdge> {
    let mut w = Walker {
        tree,
        rules,
        scopes: alloc::vec![BTreeMap::new()],
        defs: Vec::new(),
        sinks: Vec::new(),
        edges: Vec::new(),
    };
    w.walk(SyntaxTree::ROOT);
    w.edges
}

/// Share of reference edges found in the candidate (multiset semantics).
/// `None` when the reference has no edges.
pub fn dataflow_match(candidate: &[DefUseEdge], reference: &[DefUseEdge]) -> Option<f64> {
    if reference.is_empty() {
        return None;
    }
    let bag = |edges: &[DefUseEdge]| {
        let mut m: BTreeMap<DefUseEdge, usize> = BTreeMap::new();
        for e in edges {
            *m.entry(*e).or_insert(0) += 1;
        }
        m
    };
    let cand = bag(candidate);
    let common: usize = bag(reference).iter().map(|(e, &n)| n.min(cand.get(e).copied().unwrap_or(0))).sum();
    Some(common as f64 / reference.len() as f64)
}

struct Walker<'a> {
    tree: &'a SyntaxTree,
    rules: &'a DataflowRules,
    scopes: Vec<BTreeMap<String, u32>>,
    /// Definitions seen so far, per binding.
    defs: Vec<u32>,
    sinks: Vec<Option<u32>>,
    edges: Vec<DefUseEdge>,
}

impl Walker<'_> {
    fn is_variable_leaf(&self, id: NodeId) -> bool {
        let n = self.tree.node(id);
        n.children.is_empty() && n.text.is_some() && self.rules.variable_leaves.contains(&n.kind)
    }

    fn is_opaque(&self, id: NodeId) -> bool {
        let n = self.tree.node(id);
        let Some(parent) = n.parent else {
            return false;
        };
        let pk = self.tree.node(parent).kind;
        self.rules.opaque.iter().any(|c| c.parent == pk && (c.field.is_none() || c.field == n.field))
    }

    fn select(&self, id: NodeId, sel: Select) -> Option<NodeId> {
        match sel {
            Select::Field(f) => self.tree.child_by_field(id, f),
            Select::FirstChildOfKind(k) => self.tree.children(id).find(|&c| self.tree.node(c).kind == k),
            Select::LastVariableLeaf => {
                self.tree.preorder(id).into_iter().rev().find(|&n| self.is_variable_leaf(n) && !self.is_opaque(n))
            }
        }
    }

    fn variable_leaves(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![id];
        while let Some(n) = stack.pop() {
            if self.is_opaque(n) {
                continue;
            }
            if self.is_variable_leaf(n) {
                out.push(n);
            }
            stack.extend(self.tree.node(n).children.iter().rev().copied());
        }
        out
    }

    /// The variable leaf a target expression denotes, if it is a bare name
    /// (possibly wrapped in single-child nodes).
    fn simple_target(&self, mut id: NodeId) -> Option<NodeId> {
        loop {
            if self.is_variable_leaf(id) {
                return Some(id);
            }
            let named: Vec<NodeId> = self.tree.children(id).filter(|&c| self.tree.node(c).named).collect();
            match named.as_slice() {
                [only] if self.tree.node(id).children.len() == 1 => id = *only,
                _ => return None,
            }
        }
    }

    fn text(&self, id: NodeId) -> &str {
        self.tree.node(id).text.as_deref().unwrap_or("")
    }

    fn resolve(&self, name: &str) -> Option<u32> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn allocate(&mut self) -> u32 {
        self.defs.push(0);
        (self.defs.len() - 1) as u32
    }

    fn bind(&mut self, name: &str, binding: u32) {
        self.defs[binding as usize] += 1;
        self.scopes.last_mut().expect("scope stack is never empty").insert(String::from(name), binding);
    }

    fn record_use(&mut self, binding: u32) {
        let defs = self.defs[binding as usize];
        if defs == 0 {
            return;
        }
        let sink = self.sinks.last().copied().flatten();
        self.edges.push(DefUseEdge { var: binding, def: defs - 1, sink });
    }

    fn walk_with_sink(&mut self, id: NodeId, sink: Option<u32>) {
        self.sinks.push(sink);
        self.walk(id);
        self.sinks.pop();
    }

    fn walk_children_except(&mut self, id: NodeId, skip: &[NodeId]) {
        let children: Vec<NodeId> = self.tree.children(id).collect();
        for c in children {
            if !skip.contains(&c) {
                self.walk(c);
            }
        }
    }

    fn walk(&mut self, id: NodeId) {
        if self.is_opaque(id) {
            return;
        }
        let kind = self.tree.node(id).kind;
        let scoped = self.rules.scopes.contains(&kind);
        if scoped {
            self.scopes.push(BTreeMap::new());
        }

        if !(self.try_declaration(id, kind) || self.try_assignment(id, kind) || self.try_update(id, kind)) {
            if self.is_variable_leaf(id) {
                let name = String::from(self.text(id));
                let binds_here = self.tree.node(id).field.is_some_and(|f| self.rules.binding_fields.contains(&f));
                if binds_here {
                    let b = self.allocate();
                    self.bind(&name, b);
                } else if let Some(b) = self.resolve(&name) {
                    self.record_use(b);
                }
            } else {
                self.walk_children_except(id, &[]);
            }
        }

        if scoped {
            self.scopes.pop();
        }
    }

    fn try_declaration(&mut self, id: NodeId, kind: &str) -> bool {
        let Some(rule) = self.rules.declarations.iter().find(|r| r.kind == kind) else {
            return false;
        };
        let mut name_nodes: Vec<NodeId> = rule.names.iter().filter_map(|&s| self.select(id, s)).collect();
        name_nodes.dedup();
        let mut leaves: Vec<NodeId> = Vec::new();
        for &n in &name_nodes {
            for leaf in self.variable_leaves(n) {
                if !leaves.contains(&leaf) {
                    leaves.push(leaf);
                }
            }
        }
        if leaves.is_empty() {
            return false;
        }
        let bindings: Vec<u32> = leaves.iter().map(|_| self.allocate()).collect();
        let value = rule.value.and_then(|s| self.select(id, s));
        if let Some(v) = value {
            self.walk_with_sink(v, bindings.first().copied());
        }
        for (leaf, b) in leaves.iter().zip(&bindings) {
            let name = String::from(self.text(*leaf));
            self.bind(&name, *b);
        }
        let mut skip = name_nodes;
        skip.extend(value);
        // Name leaves nested below a wrapper that also holds other children
        // (e.g. a closure parameter without a field) are already bound.
        let rest: Vec<NodeId> = self.tree.children(id).filter(|c| !skip.contains(c)).collect();
        for c in rest {
            if leaves.contains(&c) {
                continue;
            }
            self.walk_skipping(c, &leaves);
        }
        true
    }

    fn walk_skipping(&mut self, id: NodeId, skip_leaves: &[NodeId]) {
        if skip_leaves.contains(&id) {
            return;
        }
        if self.tree.preorder(id).iter().any(|n| skip_leaves.contains(n)) {
            let children: Vec<NodeId> = self.tree.children(id).collect();
            for c in children {
                self.walk_skipping(c, skip_leaves);
            }
        } else {
            self.walk(id);
        }
    }

    fn try_assignment(&mut self, id: NodeId, kind: &str) -> bool {
        let Some(rule) = self.rules.assignments.iter().find(|r| r.kind == kind) else {
            return false;
        };
        let (Some(target), Some(value)) = (self.select(id, rule.target), self.select(id, rule.value)) else {
            return false;
        };
        let plain = self.select(id, rule.operator).is_some_and(|op| rule.plain.contains(&self.text(op)));
        match self.simple_target(target) {
            Some(leaf) => {
                let name = String::from(self.text(leaf));
                let binding = match self.resolve(&name) {
                    Some(b) => b,
                    None => {
                        // Assignment to an undeclared name introduces it here.
                        let b = self.allocate();
                        self.scopes.last_mut().expect("scope").insert(name.clone(), b);
                        b
                    }
                };
                if !plain {
                    self.sinks.push(Some(binding));
                    self.record_use(binding);
                    self.sinks.pop();
                }
                self.walk_with_sink(value, Some(binding));
                self.defs[binding as usize] += 1;
            }
            None => {
                self.walk_with_sink(target, None);
                self.walk_with_sink(value, None);
            }
        }
        true
    }

    fn try_update(&mut self, id: NodeId, kind: &str) -> bool {
        let Some(rule) = self.rules.updates.iter().find(|r| r.kind == kind) else {
            return false;
        };
        let has_op = self.tree.children(id).any(|c| {
            let n = self.tree.node(c);
            !n.named && n.text.as_deref().is_some_and(|t| rule.operators.contains(&t))
        });
        if !has_op {
            return false;
        }
        let Some(leaf) = self.select(id, rule.target).and_then(|t| self.simple_target(t)) else {
            return false;
        };
        let name = String::from(self.text(leaf));
        if let Some(b) = self.resolve(&name) {
            self.sinks.push(Some(b));
            self.record_use(b);
            self.sinks.pop();
            self.defs[b as usize] += 1;
        }
        true
    }
}
