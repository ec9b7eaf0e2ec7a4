//! tree-sitter front end: parses Dart and Swift into the core's
//! language-neutral trees and supplies each grammar's data-flow rules.

use std::cell::RefCell;

use decompeval_core::similarity::dataflow::{
    extract_edges, AssignmentRule, DataflowRules, DeclarationRule, OpaqueContext, Select, UpdateRule,
};
use decompeval_core::similarity::token::tokenize;
use decompeval_core::similarity::tree::{LeafClass, NodeId, SyntaxTree};
use decompeval_core::similarity::{self, Analysis, CodeBleuConfig, CodeBleuReport, SimilarityError};
use decompeval_core::Language;

static DART_RULES: DataflowRules = DataflowRules {
    scopes: &[
        "function_declaration",
        "method_declaration",
        "function_expression",
        "block",
        "for_statement",
        "try_statement",
        "class_body",
    ],
    variable_leaves: &["identifier", "identifier_dollar_escaped"],
    declarations: &[
        DeclarationRule {
            kind: "initialized_variable_definition",
            names: &[Select::Field("name")],
            value: Some(Select::Field("value")),
        },
        DeclarationRule {
            kind: "initialized_identifier",
            names: &[Select::Field("name")],
            value: Some(Select::Field("value")),
        },
        DeclarationRule {
            kind: "formal_parameter",
            names: &[Select::Field("name"), Select::LastVariableLeaf],
            value: None,
        },
        // for (final x in xs): only the for-in form carries a `name` field.
        DeclarationRule { kind: "for_statement", names: &[Select::Field("name")], value: Some(Select::Field("value")) },
    ],
    assignments: &[AssignmentRule {
        kind: "assignment_expression",
        target: Select::Field("left"),
        value: Select::Field("right"),
        operator: Select::Field("operator"),
        plain: &["="],
    }],
    updates: &[
        UpdateRule { kind: "postfix_expression", target: Select::Field("argument"), operators: &["++", "--"] },
        UpdateRule {
            kind: "unary_expression",
            target: Select::FirstChildOfKind("assignable_expression"),
            operators: &["++", "--"],
        },
    ],
    binding_fields: &["exception", "stack_trace"],
    opaque: &[
        OpaqueContext { parent: "function_signature", field: Some("name") },
        OpaqueContext { parent: "class_declaration", field: Some("name") },
        OpaqueContext { parent: "member_expression", field: Some("property") },
        OpaqueContext { parent: "assignable_expression", field: Some("property") },
        OpaqueContext { parent: "annotation", field: Some("name") },
        OpaqueContext { parent: "label", field: None },
    ],
};

static SWIFT_RULES: DataflowRules = DataflowRules {
    scopes: &[
        "function_declaration",
        "lambda_literal",
        "for_statement",
        "if_statement",
        "while_statement",
        "repeat_while_statement",
        "switch_entry",
        "statements",
        "class_body",
    ],
    variable_leaves: &["simple_identifier"],
    declarations: &[
        DeclarationRule {
            kind: "property_declaration",
            names: &[Select::Field("name")],
            value: Some(Select::Field("value")),
        },
        DeclarationRule { kind: "parameter", names: &[Select::Field("name")], value: None },
        DeclarationRule { kind: "lambda_parameter", names: &[Select::Field("name")], value: None },
        DeclarationRule {
            kind: "for_statement",
            names: &[Select::Field("item")],
            value: Some(Select::Field("collection")),
        },
    ],
    assignments: &[AssignmentRule {
        kind: "assignment",
        target: Select::Field("target"),
        value: Select::Field("result"),
        operator: Select::Field("operator"),
        plain: &["="],
    }],
    updates: &[],
    binding_fields: &["bound_identifier"],
    opaque: &[
        OpaqueContext { parent: "function_declaration", field: Some("name") },
        OpaqueContext { parent: "parameter", field: Some("external_name") },
        OpaqueContext { parent: "navigation_suffix", field: Some("suffix") },
        OpaqueContext { parent: "value_argument_label", field: None },
    ],
};

pub fn dataflow_rules(language: Language) -> &'static DataflowRules {
    match language {
        Language::Dart => &DART_RULES,
        Language::Swift => &SWIFT_RULES,
    }
}

fn ts_language(language: Language) -> tree_sitter::Language {
    match language {
        Language::Dart => tree_sitter_dart::LANGUAGE.into(),
        Language::Swift => tree_sitter_swift::LANGUAGE.into(),
    }
}

thread_local! {
    static PARSERS: RefCell<[Option<tree_sitter::Parser>; 2]> = const { RefCell::new([None, None]) };
}

fn with_parser<R>(language: Language, f: impl FnOnce(&mut tree_sitter::Parser) -> R) -> R {
    PARSERS.with(|cell| {
        let mut slots = cell.borrow_mut();
        let slot = &mut slots[language as usize];
        let parser = slot.get_or_insert_with(|| {
            let mut p = tree_sitter::Parser::new();
            p.set_language(&ts_language(language)).expect("bundled grammar matches the tree-sitter ABI");
            p
        });
        f(parser)
    })
}

fn parse_raw(code: &str, language: Language) -> Option<tree_sitter::Tree> {
    with_parser(language, |p| p.parse(code, None))
}

/// One syntax problem found by the parser.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl std::fmt::Display for SyntaxDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// Error and missing nodes, in source order. Empty when the text parses.
pub fn diagnostics(code: &str, language: Language) -> Vec<SyntaxDiagnostic> {
    let Some(tree) = parse_raw(code, language) else {
        return vec![SyntaxDiagnostic { line: 1, column: 1, message: "parser gave up".into() }];
    };
    let mut out = Vec::new();
    let mut cursor = tree.walk();
    collect_errors(&mut cursor, code, &mut out);
    out
}

fn collect_errors(cursor: &mut tree_sitter::TreeCursor, code: &str, out: &mut Vec<SyntaxDiagnostic>) {
    let node = cursor.node();
    if !node.has_error() && !node.is_missing() {
        return;
    }
    let pos = node.start_position();
    let at = |message: String| SyntaxDiagnostic { line: pos.row + 1, column: pos.column + 1, message };
    // Some grammars mark an inserted token by an empty erroneous leaf rather
    // than a MISSING node.
    if node.is_missing() || (node.child_count() == 0 && node.byte_range().is_empty()) {
        out.push(at(format!("missing {}", node.kind())));
        return;
    }
    if node.is_error() || node.child_count() == 0 {
        let snippet: String = code[node.byte_range()].chars().take(40).collect();
        out.push(at(format!("unexpected {snippet:?}")));
        return;
    }
    if node.has_error() && cursor.goto_first_child() {
        loop {
            collect_errors(cursor, code, out);
            if !cursor.goto_next_sibling() {
                break;
            }
        }
        cursor.goto_parent();
    }
}

pub fn parses(code: &str, language: Language) -> bool {
    parse(code, language).is_some()
}

/// The syntax tree of `code`, or `None` when it is blank or has syntax
/// errors. Comments are dropped.
pub fn parse(code: &str, language: Language) -> Option<SyntaxTree> {
    if code.trim().is_empty() {
        return None;
    }
    let raw = parse_raw(code, language)?;
    let root = raw.root_node();
    if root.has_error() {
        return None;
    }
    let mut tree = SyntaxTree::new(root.kind());
    let mut cursor = root.walk();
    if cursor.goto_first_child() {
        convert(&mut cursor, code, &mut tree, SyntaxTree::ROOT);
    }
    Some(tree)
}

/// Converts `cursor`'s node and its following siblings under `parent`.
fn convert(cursor: &mut tree_sitter::TreeCursor, code: &str, tree: &mut SyntaxTree, parent: NodeId) {
    loop {
        let node = cursor.node();
        if !node.is_extra() {
            let leaf = node.child_count() == 0;
            let text = leaf.then(|| code[node.byte_range()].to_string());
            let id = tree.add_child(
                parent,
                node.kind(),
                cursor.field_name(),
                node.is_named(),
                if leaf { leaf_class(node.kind()) } else { LeafClass::Structural },
                text,
            );
            if cursor.goto_first_child() {
                convert(cursor, code, tree, id);
                cursor.goto_parent();
            }
        }
        if !cursor.goto_next_sibling() {
            break;
        }
    }
}

fn leaf_class(kind: &str) -> LeafClass {
    if kind.contains("identifier") {
        LeafClass::Identifier
    } else if kind.contains("literal")
        || kind.contains("str_text")
        || kind.starts_with("template_chars")
        || matches!(kind, "true" | "false" | "null" | "nil")
    {
        LeafClass::Literal
    } else {
        LeafClass::Structural
    }
}

/// A top-level Dart function as seen by an error-tolerant parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopLevelFunction {
    pub name: String,
    /// Byte offset where the declaration (including annotations) starts.
    pub start: usize,
    pub annotations: Vec<String>,
}

/// Top-level function declarations of a Dart unit. Works on broken input
/// too, reporting whatever the parser recovered.
pub fn dart_top_level_functions(code: &str) -> Vec<TopLevelFunction> {
    let Some(tree) = parse_raw(code, Language::Dart) else {
        return Vec::new();
    };
    let root = tree.root_node();
    let mut out = Vec::new();
    let mut cursor = root.walk();
    for node in root.named_children(&mut cursor) {
        if node.kind() != "function_declaration" {
            continue;
        }
        let name = node
            .child_by_field_name("signature")
            .and_then(|s| s.child_by_field_name("name"))
            .map(|n| code[n.byte_range()].to_string());
        let Some(name) = name else { continue };
        let mut c = node.walk();
        let annotations = node
            .named_children(&mut c)
            .filter(|n| n.kind() == "annotation")
            .map(|n| code[n.byte_range()].to_string())
            .collect();
        out.push(TopLevelFunction { name, start: node.start_byte(), annotations });
    }
    out
}

pub fn analyze(code: &str, language: Language) -> Analysis {
    let tree = parse(code, language);
    let edges = tree.as_ref().map(|t| extract_edges(t, dataflow_rules(language))).unwrap_or_default();
    Analysis { tokens: tokenize(code, language), tree, edges }
}

/// CodeBLEU of `candidate` against `reference` in `config.language`.
pub fn codebleu(candidate: &str, reference: &str, config: &CodeBleuConfig) -> Result<CodeBleuReport, SimilarityError> {
    let reference = analyze(reference, config.language);
    codebleu_against(candidate, &reference, config)
}

/// As [`codebleu`] with a reference analysed once up front.
pub fn codebleu_against(
    candidate: &str,
    reference: &Analysis,
    config: &CodeBleuConfig,
) -> Result<CodeBleuReport, SimilarityError> {
    let candidate = analyze(candidate, config.language);
    similarity::score(&candidate, reference, config)
}
