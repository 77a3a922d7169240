//! Graphviz rendering of a closed horizon as boxes and wires.
//!
//! State wires run left to right; parameter (control) wires enter each stage
//! box vertically.

use std::fmt::Write as _;

use crate::mpc::Terminal;
use crate::problem::{CouplingKind, CouplingSpec, Problem};

enum Node {
    Stage(usize),
    Dup(usize),
    Merge(usize),
}

impl Node {
    fn id(&self) -> String {
        match self {
            Node::Stage(k) => format!("stage_{k}"),
            Node::Dup(c) => format!("dup_{c}"),
            Node::Merge(c) => format!("merge_{c}"),
        }
    }
}

pub fn to_dot(problem: &Problem) -> String {
    render(problem.horizon, &problem.couplings, &problem.terminal)
}

/// `couplings` must be sorted and non-overlapping, as produced by
/// [`crate::problem::ProblemSpec::to_problem`].
pub fn render(horizon: usize, couplings: &[CouplingSpec], terminal: &Terminal) -> String {
    let mut out = String::new();
    out.push_str("digraph mpc {\n  rankdir=LR;\n  node [fontname=\"Helvetica\"];\n");
    out.push_str("  init [shape=triangle, orientation=270, label=\"x0\"];\n");
    let term_label = match terminal {
        Terminal::None => "terminal",
        Terminal::Quadratic(_) => "terminal: Qf",
        Terminal::Point(_) => "terminal: point",
    };
    let _ = writeln!(out, "  terminal [shape=triangle, orientation=90, label=\"{term_label}\"];");

    for k in 0..horizon {
        let _ = writeln!(out, "  stage_{k} [shape=box, label=\"stage {k}\"];");
        let _ = writeln!(out, "  param_{k} [shape=plaintext, label=\"u{k}\"];");
        let _ = writeln!(out, "  {{ rank=same; param_{k}; stage_{k}; }}");
        let _ = writeln!(out, "  param_{k} -> stage_{k} [style=dashed];");
    }

    // Along the main line, a merge at step j precedes a dup starting at j.
    let mut line: Vec<Node> = Vec::new();
    for k in 0..=horizon {
        for (c, cp) in couplings.iter().enumerate() {
            if cp.j == k {
                line.push(Node::Merge(c));
            }
        }
        for (c, cp) in couplings.iter().enumerate() {
            if cp.i == k {
                line.push(Node::Dup(c));
            }
        }
        if k < horizon {
            line.push(Node::Stage(k));
        }
    }

    for (c, cp) in couplings.iter().enumerate() {
        let label = match cp.kind {
            CouplingKind::Equality => "equality".to_string(),
            CouplingKind::Quadratic => format!("{} |a - b|^2", cp.weight_or_default()),
        };
        let _ = writeln!(out, "  dup_{c} [shape=circle, label=\"dup\"];");
        let _ = writeln!(out, "  merge_{c} [shape=circle, label=\"merge\"];");
        let _ = writeln!(out, "  coupling_{c} [shape=box, style=rounded, label=\"{label}\"];");
        let _ = writeln!(out, "  dup_{c} -> coupling_{c} [label=\"x{}\"];", cp.i);
        let _ = writeln!(out, "  coupling_{c} -> merge_{c};");
    }

    let mut prev = "init".to_string();
    let mut k = 0;
    for node in &line {
        let _ = writeln!(out, "  {prev} -> {} [label=\"x{k}\"];", node.id());
        if let Node::Stage(s) = node {
            k = s + 1;
        }
        prev = node.id();
    }
    let _ = writeln!(out, "  {prev} -> terminal [label=\"x{k}\"];");
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(dot: &str, needle: &str) -> usize {
        dot.matches(needle).count()
    }

    #[test]
    fn plain_horizon_counts() {
        let dot = render(10, &[], &Terminal::None);
        assert!(dot.contains("rankdir=LR"));
        assert_eq!(count(&dot, "[shape=box, label=\"stage"), 10);
        assert_eq!(count(&dot, "shape=triangle"), 2);
        assert_eq!(count(&dot, "[style=dashed]"), 10);
        assert!(dot.contains("stage_9 -> terminal [label=\"x10\"]"));
    }

    #[test]
    fn couplings_insert_dup_and_merge() {
        let c = CouplingSpec { i: 1, j: 2, kind: CouplingKind::Equality, weight: None };
        let dot = render(3, &[c], &Terminal::None);
        assert_eq!(count(&dot, "label=\"dup\""), 1);
        assert_eq!(count(&dot, "label=\"merge\""), 1);
        assert!(dot.contains("stage_0 -> dup_0 [label=\"x1\"]"));
        assert!(dot.contains("dup_0 -> stage_1"));
        assert!(dot.contains("stage_1 -> merge_0 [label=\"x2\"]"));
        assert!(dot.contains("merge_0 -> stage_2"));
    }
}
