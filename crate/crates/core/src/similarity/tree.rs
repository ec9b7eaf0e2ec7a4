//! Language-neutral concrete syntax trees and subtree matching.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub type NodeId = usize;

/// What a leaf holds, as decided by the language front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LeafClass {
    Identifier,
    Literal,
    /// Keywords, operators, punctuation and inner nodes.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: &'static str,
    /// Field name under which the parent holds this node, if any.
    pub field: Option<&'static str>,
    pub named: bool,
    pub class: LeafClass,
    /// Source text; populated for leaves only.
    pub text: Option<String>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// Arena-allocated tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    nodes: Vec<Node>,
}

impl SyntaxTree {
    pub fn new(root_kind: &'static str) -> Self {
        SyntaxTree {
            nodes: alloc::vec![Node {
                kind: root_kind,
                field: None,
                named: true,
                class: LeafClass::Structural,
                text: None,
                parent: None,
                children: Vec::new(),
            }],
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn add_child(
        &mut self,
        parent: NodeId,
        kind: &'static str,
        field: Option<&'static str>,
        named: bool,
        class: LeafClass,
        text: Option<String>,
    ) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { kind, field, named, class, text, parent: Some(parent), children: Vec::new() });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() <= 1 && self.nodes[0].children.is_empty()
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes[id].children.iter().copied()
    }

    pub fn child_by_field(&self, id: NodeId, field: &str) -> Option<NodeId> {
        self.children(id).find(|&c| self.nodes[c].field == Some(field))
    }

    pub fn children_by_field<'a>(&'a self, id: NodeId, field: &'a str) -> impl Iterator<Item = NodeId> + 'a {
        self.children(id).filter(move |&c| self.nodes[c].field == Some(field))
    }

    /// Nodes in pre-order.
    pub fn preorder(&self, from: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![from];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id].children.iter().rev().copied());
        }
        out
    }

    /// Height of each node's subtree; leaves have height 1.
    pub fn heights(&self) -> Vec<usize> {
        let mut h = alloc::vec![1usize; self.nodes.len()];
        // Children always have larger ids than their parent.
        for id in (0..self.nodes.len()).rev() {
            if let Some(p) = self.nodes[id].parent {
                h[p] = h[p].max(h[id] + 1);
            }
        }
        h
    }
}

/// Hash-consing table mapping anonymized subtree shapes to dense ids.
///
/// A leaf's label is its kind, so identifier and literal spellings never
/// reach the shape.
#[derive(Debug, Default)]
pub struct ShapeInterner {
    table: BTreeMap<(&'static str, Vec<u32>), u32>,
}

impl ShapeInterner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shape id of every node of `tree`, indexed by node id.
    pub fn shapes(&mut self, tree: &SyntaxTree) -> Vec<u32> {
        let mut ids = alloc::vec![0u32; tree.len()];
        for id in (0..tree.len()).rev() {
            let node = tree.node(id);
            let key = (node.kind, node.children.iter().map(|&c| ids[c]).collect());
            let next = self.table.len() as u32;
            ids[id] = *self.table.entry(key).or_insert(next);
        }
        ids
    }
}

/// Multiset of shapes of all subtrees with height ≥ 2.
pub fn subtree_multiset(tree: &SyntaxTree, interner: &mut ShapeInterner) -> BTreeMap<u32, usize> {
    let shapes = interner.shapes(tree);
    let heights = tree.heights();
    let mut bag = BTreeMap::new();
    for id in 0..tree.len() {
        if heights[id] >= 2 {
            *bag.entry(shapes[id]).or_insert(0) += 1;
        }
    }
    bag
}

/// |candidate ∩ reference| / |reference| over subtree-shape multisets.
///
/// A reference without any subtree of height ≥ 2 scores 0.
pub fn ast_match(candidate: &SyntaxTree, reference: &SyntaxTree) -> f64 {
    let mut interner = ShapeInterner::new();
    let reference_bag = subtree_multiset(reference, &mut interner);
    let candidate_bag = subtree_multiset(candidate, &mut interner);
    let total: usize = reference_bag.values().sum();
    if total == 0 {
        return 0.0;
    }
    let common: usize =
        reference_bag.iter().map(|(shape, &n)| n.min(candidate_bag.get(shape).copied().unwrap_or(0))).sum();
    common as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn leaf(t: &mut SyntaxTree, p: NodeId, kind: &'static str, text: &str) -> NodeId {
        t.add_child(p, kind, None, true, LeafClass::Identifier, Some(text.to_string()))
    }

    fn sum_tree(a: &str, b: &str) -> SyntaxTree {
        let mut t = SyntaxTree::new("program");
        let e = t.add_child(SyntaxTree::ROOT, "add", None, true, LeafClass::Structural, None);
        leaf(&mut t, e, "identifier", a);
        t.add_child(e, "+", None, false, LeafClass::Structural, Some("+".to_string()));
        leaf(&mut t, e, "identifier", b);
        t
    }

    #[test]
    fn heights_and_subtrees() {
        let t = sum_tree("x", "y");
        assert_eq!(t.heights(), [3, 2, 1, 1, 1]);
        let bag = subtree_multiset(&t, &mut ShapeInterner::new());
        assert_eq!(bag.values().sum::<usize>(), 2);
    }

    #[test]
    fn renaming_is_invisible() {
        assert_eq!(ast_match(&sum_tree("p", "q"), &sum_tree("x", "y")), 1.0);
    }

    #[test]
    fn partial_overlap() {
        let mut other = SyntaxTree::new("program");
        let e = other.add_child(SyntaxTree::ROOT, "add", None, true, LeafClass::Structural, None);
        leaf(&mut other, e, "identifier", "a");
        other.add_child(e, "-", None, false, LeafClass::Structural, Some("-".to_string()));
        leaf(&mut other, e, "identifier", "b");
        assert_eq!(ast_match(&other, &sum_tree("x", "y")), 0.0);
        // The reference's inner `add` subtree still matches a tree that embeds it.
        let mut bigger = sum_tree("x", "y");
        bigger.add_child(SyntaxTree::ROOT, "noop", None, true, LeafClass::Structural, None);
        assert_eq!(ast_match(&bigger, &sum_tree("x", "y")), 0.5);
    }
}
