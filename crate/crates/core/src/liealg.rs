//! Iterated Lie brackets of a field family and numerical rank tests at base
//! and tangent-bundle points.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::{complete_lift, lie_bracket, VectorField};
use crate::manifold::{Manifold, TangentPoint};
use crate::{Matrix, Vector};

pub const DEFAULT_MAX_DEPTH: usize = 4;
const RELATIVE_RANK_TOL: f64 = 1e-8;
const ABSOLUTE_RANK_FLOOR: f64 = 1e-12;

/// A formal bracket word over field indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BracketTree {
    Leaf(usize),
    Node(Box<BracketTree>, Box<BracketTree>),
}

impl BracketTree {
    pub fn node(left: BracketTree, right: BracketTree) -> Self {
        BracketTree::Node(Box::new(left), Box::new(right))
    }

    /// Word length: 1 for a leaf, additive over nodes.
    pub fn depth(&self) -> usize {
        match self {
            BracketTree::Leaf(_) => 1,
            BracketTree::Node(l, r) => l.depth() + r.depth(),
        }
    }

    /// Canonical form modulo antisymmetry, or `None` for a syntactically zero
    /// bracket `[A, A]`.
    fn canonical(&self) -> Option<BracketTree> {
        match self {
            BracketTree::Leaf(_) => Some(self.clone()),
            BracketTree::Node(l, r) => {
                let (l, r) = (l.canonical()?, r.canonical()?);
                match l.cmp(&r) {
                    std::cmp::Ordering::Equal => None,
                    std::cmp::Ordering::Less => Some(BracketTree::node(l, r)),
                    std::cmp::Ordering::Greater => Some(BracketTree::node(r, l)),
                }
            }
        }
    }

    /// Builds the field this word denotes.
    pub fn evaluate(&self, fields: &[VectorField]) -> VectorField {
        match self {
            BracketTree::Leaf(i) => fields[*i].clone(),
            BracketTree::Node(l, r) => lie_bracket(&l.evaluate(fields), &r.evaluate(fields)),
        }
    }
}

impl fmt::Display for BracketTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BracketTree::Leaf(i) => write!(f, "X{i}"),
            BracketTree::Node(l, r) => write!(f, "[{l},{r}]"),
        }
    }
}

/// Bracket words up to `max_depth` built as `[X_i, B]` from shorter words
/// `B`, with syntactic duplicates (up to antisymmetry) and self-brackets removed.
pub fn generate_words(n_fields: usize, max_depth: usize) -> Vec<BracketTree> {
    assert!(max_depth >= 1, "max_depth must be at least 1");
    let mut seen = std::collections::BTreeSet::new();
    let mut out: Vec<BracketTree> = Vec::new();
    let mut level: Vec<BracketTree> = (0..n_fields).map(BracketTree::Leaf).collect();
    for w in &level {
        seen.insert(w.clone());
    }
    out.extend(level.iter().cloned());
    for _ in 2..=max_depth {
        let mut next = Vec::new();
        for i in 0..n_fields {
            for b in &level {
                let word = BracketTree::node(BracketTree::Leaf(i), b.clone());
                if let Some(canon) = word.canonical() {
                    if seen.insert(canon) {
                        next.push(word);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

/// All bracket words of depth at most `max_depth` paired with their fields.
pub fn generate_brackets(fields: &[VectorField], max_depth: usize) -> Vec<(BracketTree, VectorField)> {
    generate_words(fields.len(), max_depth)
        .into_iter()
        .map(|w| {
            let f = w.evaluate(fields);
            (w, f)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankReport {
    /// Base point, or the stacked `(x, v)` for lifted reports.
    pub point: Vec<f64>,
    pub lifted: bool,
    pub brackets: Vec<String>,
    /// Columns are the evaluated brackets.
    pub generated_vectors: Vec<Vec<f64>>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub threshold_used: f64,
}

/// Numerical rank from singular values with a relative threshold.
fn numerical_rank(m: &Matrix) -> (usize, Vec<f64>, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, Vec::new(), ABSOLUTE_RANK_FLOOR);
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let threshold = if smax < ABSOLUTE_RANK_FLOOR { ABSOLUTE_RANK_FLOOR } else { RELATIVE_RANK_TOL * smax };
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    (rank, sv, threshold)
}

/// Dimension of `Lie_x(F)` estimated from brackets up to `max_depth`.
/// On S² the columns are measured in an orthonormal frame of `T_x S²`.
pub fn rank_at(fields: &[VectorField], x: &Vector, max_depth: usize, manifold: &Manifold) -> Result<RankReport> {
    manifold.check_point(x)?;
    let brackets = generate_brackets(fields, max_depth);
    let columns: Vec<Vector> = brackets.iter().map(|(_, f)| f.value(x)).collect();
    let raw = Matrix::from_columns(&columns);
    let measured = match manifold {
        Manifold::Flat { .. } => raw.clone(),
        Manifold::Sphere2 => manifold.tangent_basis(x).transpose() * &raw,
    };
    let (rank, singular_values, threshold_used) = numerical_rank(&measured);
    Ok(RankReport {
        point: x.as_slice().to_vec(),
        lifted: false,
        brackets: brackets.iter().map(|(w, _)| w.to_string()).collect(),
        generated_vectors: columns.iter().map(|c| c.as_slice().to_vec()).collect(),
        rank,
        singular_values,
        threshold_used,
    })
}

/// Rank of the complete lifts of the bracket family at `(x, v)`, each
/// evaluated as the `2N` vector `(Z(x), J_Z(x) v)`.
pub fn lifted_rank_at(fields: &[VectorField], p: &TangentPoint, max_depth: usize, manifold: &Manifold) -> Result<RankReport> {
    p.validate(manifold)?;
    let brackets = generate_brackets(fields, max_depth);
    let columns: Vec<Vector> = brackets.iter().map(|(_, f)| complete_lift(f).eval_stacked(p)).collect();
    let (rank, singular_values, threshold_used) = numerical_rank(&Matrix::from_columns(&columns));
    Ok(RankReport {
        point: p.stacked().as_slice().to_vec(),
        lifted: true,
        brackets: brackets.iter().map(|(w, _)| w.to_string()).collect(),
        generated_vectors: columns.iter().map(|c| c.as_slice().to_vec()).collect(),
        rank,
        singular_values,
        threshold_used,
    })
}

/// For every bracket word, compares the word evaluated on the lifted fields
/// (brackets taken in `2N` dimensions) with the lift of the word evaluated
/// on the base fields. Returns the max deviation over words and samples.
pub fn check_lift_algebra_identity(fields: &[VectorField], samples: &[TangentPoint], max_depth: usize) -> f64 {
    let lifted_fields: Vec<VectorField> = fields.iter().map(|f| complete_lift(f).as_field()).collect();
    let mut worst: f64 = 0.0;
    for word in generate_words(fields.len(), max_depth) {
        let lift_then_bracket = word.evaluate(&lifted_fields);
        let bracket_then_lift = complete_lift(&word.evaluate(fields));
        for p in samples {
            let dev = (lift_then_bracket.value(&p.stacked()) - bracket_then_lift.eval_stacked(p)).norm();
            worst = worst.max(dev);
        }
    }
    worst
}
