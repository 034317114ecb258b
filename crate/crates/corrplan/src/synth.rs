//! Plan synthesis: from a quantized matrix to a shift-add DAG.
//!
//! The pipeline is fixed and deterministic:
//!
//! 1. divide out any power of the base common to every nonzero entry
//!    (the plan then carries fewer fractional digits);
//! 2. build one product node per (column, distinct magnitude), so a
//!    magnitude repeated down a column is multiplied once. In base 2 the
//!    product is a tree of shared shift nodes instead of a coefficient
//!    multiply;
//! 3. combine each row's products left to right in a balanced tree
//!    (left-to-right order keeps subexpressions aligned across shifted
//!    windows, which the streaming cache depends on);
//! 4. run CSE passes until nothing changes, then prune dead nodes.
//!
//! Magnitude-1 products are wires straight to the input sample.

use std::collections::{btree_map, BTreeMap, BTreeSet, HashMap};

use crate::plan::{CostPolicy, MultiplicationPlan, NodeId, NodeKind, PlanNode, Sign};
use crate::quantize::QuantizedMatrix;

struct Builder {
    nodes: Vec<PlanNode>,
}

impl Builder {
    fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, kind: NodeKind) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(PlanNode { id, kind });
        id
    }
}

#[derive(Clone, Copy)]
enum TreeShape {
    Balanced,
    Chain,
}

/// Combines signed terms into a sum tree, returning the root and the sign
/// the root's value carries. Sign algebra keeps all inner values "positive
/// first": (-a) + b is stored as a - b with a minus on the result.
fn build_sum(b: &mut Builder, terms: &[(NodeId, Sign)], shape: TreeShape) -> (NodeId, Sign) {
    match terms {
        [] => unreachable!("empty sum"),
        [only] => *only,
        _ => {
            let mid = match shape {
                TreeShape::Balanced => terms.len().div_ceil(2),
                TreeShape::Chain => terms.len() - 1,
            };
            let (left, left_sign) = build_sum(b, &terms[..mid], shape);
            let (right, right_sign) = build_sum(b, &terms[mid..], shape);
            let rel = if left_sign == right_sign {
                Sign::Plus
            } else {
                Sign::Minus
            };
            (
                b.push(NodeKind::Add {
                    left,
                    right,
                    right_sign: rel,
                }),
                left_sign,
            )
        }
    }
}

/// Largest e (capped at `cap`) with base^e dividing every nonzero entry.
fn common_base_power(scaled: &[Vec<i64>], base: u32, cap: u32) -> u32 {
    let base = base as i64;
    let mut common = cap;
    for row in scaled {
        for &v in row {
            if v == 0 {
                continue;
            }
            let mut v = v.abs();
            let mut e = 0;
            while e < common && v % base == 0 {
                v /= base;
                e += 1;
            }
            common = common.min(e);
            if common == 0 {
                return 0;
            }
        }
    }
    if scaled.iter().all(|row| row.iter().all(|&v| v == 0)) {
        0
    } else {
        common
    }
}

/// The matrix entries with the common base power divided out.
fn effective_entries(matrix: &QuantizedMatrix) -> (Vec<Vec<i64>>, u32) {
    let (scaled, _) = matrix.to_scaled_integers();
    let g = common_base_power(&scaled, matrix.base(), matrix.digits());
    let divisor = (matrix.base() as i64).pow(g);
    let entries = scaled
        .iter()
        .map(|row| row.iter().map(|&v| v / divisor).collect())
        .collect();
    (entries, matrix.digits() - g)
}

/// Distinct magnitudes per column that actually cost a multiply: nonzero,
/// non-unit, after common-power reduction. Column i of the result is the
/// set the synthesizer turns into product nodes for input i.
pub fn column_magnitude_sets(matrix: &QuantizedMatrix) -> Vec<BTreeSet<u64>> {
    let (entries, _) = effective_entries(matrix);
    (0..matrix.m())
        .map(|col| {
            entries
                .iter()
                .map(|row| row[col].unsigned_abs())
                .filter(|&mag| mag > 1)
                .collect()
        })
        .collect()
}

/// Number of distinct costly magnitudes across the whole matrix: the
/// steady-state ceiling on fresh multiplies per streaming step, since a new
/// sample meets each magnitude at most once on its walk through the columns.
pub fn total_distinct_magnitudes(matrix: &QuantizedMatrix) -> usize {
    let mut union = BTreeSet::new();
    for set in column_magnitude_sets(matrix) {
        union.extend(set);
    }
    union.len()
}

/// Shift-add tree for one magnitude in base-2 mode. Shift nodes are shared
/// across magnitudes of the same column via `shifts`.
fn bit_tree(
    b: &mut Builder,
    input: NodeId,
    magnitude: u64,
    shifts: &mut BTreeMap<u32, NodeId>,
) -> NodeId {
    let mut terms = Vec::new();
    for power in 0..u64::BITS {
        if magnitude >> power & 1 == 1 {
            let node = if power == 0 {
                input
            } else {
                match shifts.entry(power) {
                    btree_map::Entry::Occupied(e) => *e.get(),
                    btree_map::Entry::Vacant(e) => {
                        *e.insert(b.push(NodeKind::Shift {
                            child: input,
                            power,
                        }))
                    }
                }
            };
            terms.push((node, Sign::Plus));
        }
    }
    build_sum(b, &terms, TreeShape::Balanced).0
}

/// Synthesizes a fast plan for `matrix`. The result is pruned, validated
/// nowhere (construction keeps the invariants), and exact by construction;
/// the evaluation module cross-checks exactness against the direct oracle.
pub fn synthesize_plan(matrix: &QuantizedMatrix, policy: &CostPolicy) -> MultiplicationPlan {
    let (entries, digits) = effective_entries(matrix);
    let base = matrix.base();

    let mut b = Builder::new();
    let inputs: Vec<NodeId> = (0..matrix.m())
        .map(|i| b.push(NodeKind::Input { position: i }))
        .collect();

    let mut products: BTreeMap<(usize, u64), NodeId> = BTreeMap::new();
    for col in 0..matrix.m() {
        let mags: BTreeSet<u64> = entries
            .iter()
            .map(|row| row[col].unsigned_abs())
            .filter(|&mag| mag > 1)
            .collect();
        let mut shifts = BTreeMap::new();
        for mag in mags {
            let node = if base == 2 {
                bit_tree(&mut b, inputs[col], mag, &mut shifts)
            } else {
                b.push(NodeKind::MulCoeff {
                    child: inputs[col],
                    magnitude: mag,
                })
            };
            products.insert((col, mag), node);
        }
    }

    for (k, row) in entries.iter().enumerate() {
        let mut terms = Vec::new();
        for (col, &v) in row.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let sign = if v < 0 { Sign::Minus } else { Sign::Plus };
            let mag = v.unsigned_abs();
            let node = if mag == 1 {
                inputs[col]
            } else {
                products[&(col, mag)]
            };
            terms.push((node, sign));
        }
        let (child, negate) = if terms.is_empty() {
            (None, false)
        } else {
            let (root, sign) = build_sum(&mut b, &terms, TreeShape::Balanced);
            (Some(root), sign == Sign::Minus)
        };
        b.push(NodeKind::Output {
            child,
            template: k,
            negate,
        });
    }

    let mut plan =
        MultiplicationPlan::assemble(base, digits, matrix.k(), matrix.m(), b.nodes);
    for _ in 0..policy.cse_max_passes {
        let (next, changed) = cse_pass(&plan);
        plan = next;
        if !changed {
            break;
        }
    }
    prune(&plan)
}

/// The plan a direct implementation would run: one multiply per nonzero
/// entry, rows summed in a left-deep chain, no sharing, no common-power
/// reduction. Used as the structural counterpart of the direct cost model.
pub fn naive_plan(matrix: &QuantizedMatrix) -> MultiplicationPlan {
    let (scaled, _) = matrix.to_scaled_integers();
    let mut b = Builder::new();
    let inputs: Vec<NodeId> = (0..matrix.m())
        .map(|i| b.push(NodeKind::Input { position: i }))
        .collect();
    for (k, row) in scaled.iter().enumerate() {
        let mut terms = Vec::new();
        for (col, &v) in row.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let node = b.push(NodeKind::MulCoeff {
                child: inputs[col],
                magnitude: v.unsigned_abs(),
            });
            terms.push((node, if v < 0 { Sign::Minus } else { Sign::Plus }));
        }
        let (child, negate) = if terms.is_empty() {
            (None, false)
        } else {
            let (root, sign) = build_sum(&mut b, &terms, TreeShape::Chain);
            (Some(root), sign == Sign::Minus)
        };
        b.push(NodeKind::Output {
            child,
            template: k,
            negate,
        });
    }
    prune(&MultiplicationPlan::assemble(
        matrix.base(),
        matrix.digits(),
        matrix.k(),
        matrix.m(),
        b.nodes,
    ))
}

fn remap_kind(kind: NodeKind, remap: &[NodeId]) -> NodeKind {
    match kind {
        NodeKind::Input { .. } => kind,
        NodeKind::MulCoeff { child, magnitude } => NodeKind::MulCoeff {
            child: remap[child],
            magnitude,
        },
        NodeKind::Shift { child, power } => NodeKind::Shift {
            child: remap[child],
            power,
        },
        NodeKind::Add {
            left,
            right,
            right_sign,
        } => NodeKind::Add {
            left: remap[left],
            right: remap[right],
            right_sign,
        },
        NodeKind::Output {
            child,
            template,
            negate,
        } => NodeKind::Output {
            child: child.map(|c| remap[c]),
            template,
            negate,
        },
    }
}

/// Commutative adds store their operands in id order so that a + b and
/// b + a merge.
fn canonical_kind(kind: NodeKind) -> NodeKind {
    match kind {
        NodeKind::Add {
            left,
            right,
            right_sign: Sign::Plus,
        } if left > right => NodeKind::Add {
            left: right,
            right: left,
            right_sign: Sign::Plus,
        },
        other => other,
    }
}

/// Merges structurally identical nodes in one forward sweep. Children are
/// remapped before a node is hashed, so chains of duplicates collapse in a
/// single call. Duplicates are left in place as dead nodes for `prune`.
fn structural_merge(plan: &MultiplicationPlan) -> (MultiplicationPlan, bool) {
    let mut remap: Vec<NodeId> = (0..plan.nodes.len()).collect();
    let mut seen: HashMap<NodeKind, NodeId> = HashMap::new();
    let mut changed = false;
    let mut nodes = Vec::with_capacity(plan.nodes.len());
    for node in &plan.nodes {
        let kind = canonical_kind(remap_kind(node.kind, &remap));
        if !matches!(kind, NodeKind::Output { .. }) {
            match seen.entry(kind) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    remap[node.id] = *e.get();
                    changed = true;
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(node.id);
                }
            }
        }
        nodes.push(PlanNode { id: node.id, kind });
    }
    (
        MultiplicationPlan::assemble(plan.base, plan.digits, plan.templates, plan.m, nodes),
        changed,
    )
}

struct RowSum {
    template: usize,
    negate: bool,
    terms: Vec<(NodeId, Sign)>,
}

/// Flattens a row's sum into signed terms, descending only through add
/// nodes used by a single parent; shared subtrees stay atomic.
fn flatten_sum(
    plan: &MultiplicationPlan,
    refs: &[usize],
    node: NodeId,
    sign: Sign,
    terms: &mut Vec<(NodeId, Sign)>,
) {
    if let NodeKind::Add {
        left,
        right,
        right_sign,
    } = plan.nodes[node].kind
    {
        if refs[node] == 1 {
            flatten_sum(plan, refs, left, sign, terms);
            let rsign = if right_sign == Sign::Minus {
                sign.flip()
            } else {
                sign
            };
            flatten_sum(plan, refs, right, rsign, terms);
            return;
        }
    }
    terms.push((node, sign));
}

type PairKey = (NodeId, Sign, NodeId, Sign);

/// Orders a co-occurring term pair into its canonical form: ids ascending,
/// first sign positive. Returns the key and whether this occurrence is the
/// negation of the canonical pair.
fn canonical_pair(a: (NodeId, Sign), b: (NodeId, Sign)) -> (PairKey, bool) {
    let (first, second) = if a.0 <= b.0 { (a, b) } else { (b, a) };
    if first.1 == Sign::Minus {
        (
            (first.0, Sign::Plus, second.0, second.1.flip()),
            true,
        )
    } else {
        ((first.0, first.1, second.0, second.1), false)
    }
}

/// Extracts the most frequent signed two-term combination appearing in at
/// least two row sums into one shared add node, rebuilding the affected
/// rows. Ties break on the lowest (left id, right id).
fn extract_best_pair(plan: &MultiplicationPlan) -> (MultiplicationPlan, bool) {
    let mut refs = vec![0usize; plan.nodes.len()];
    for node in &plan.nodes {
        match node.kind {
            NodeKind::MulCoeff { child, .. } | NodeKind::Shift { child, .. } => refs[child] += 1,
            NodeKind::Add { left, right, .. } => {
                refs[left] += 1;
                refs[right] += 1;
            }
            NodeKind::Output {
                child: Some(child), ..
            } => refs[child] += 1,
            _ => {}
        }
    }

    let mut rows = Vec::new();
    for node in &plan.nodes {
        if let NodeKind::Output {
            child: Some(child),
            template,
            negate,
        } = node.kind
        {
            let mut terms = Vec::new();
            flatten_sum(plan, &refs, child, Sign::Plus, &mut terms);
            rows.push(RowSum {
                template,
                negate,
                terms,
            });
        }
    }
    rows.sort_by_key(|r| r.template);

    let mut counts: BTreeMap<PairKey, usize> = BTreeMap::new();
    for row in &rows {
        let mut row_pairs = BTreeSet::new();
        for i in 0..row.terms.len() {
            for j in i + 1..row.terms.len() {
                if row.terms[i].0 == row.terms[j].0 {
                    continue;
                }
                let (key, _) = canonical_pair(row.terms[i], row.terms[j]);
                row_pairs.insert(key);
            }
        }
        for key in row_pairs {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut best: Option<(PairKey, usize)> = None;
    for (&key, &count) in &counts {
        if count >= 2 && best.is_none_or(|(_, c)| count > c) {
            best = Some((key, count));
        }
    }
    let Some(((pa, sa, pb, sb), _)) = best else {
        return (plan.clone(), false);
    };
    debug_assert_eq!(sa, Sign::Plus);

    // Rebuild: non-output nodes keep their relative order, new tree nodes
    // follow, outputs come last so children always have smaller ids.
    let mut b = Builder::new();
    let mut remap = vec![usize::MAX; plan.nodes.len()];
    for node in &plan.nodes {
        if matches!(node.kind, NodeKind::Output { .. }) {
            continue;
        }
        remap[node.id] = b.push(remap_kind(node.kind, &remap));
    }
    let pair_node = b.push(NodeKind::Add {
        left: remap[pa],
        right: remap[pb],
        right_sign: sb,
    });

    let mut outputs = Vec::new();
    for row in &rows {
        let mut terms: Vec<(NodeId, Sign)> =
            row.terms.iter().map(|&(n, s)| (remap[n], s)).collect();
        let positions: Vec<usize> = (0..row.terms.len())
            .filter(|&i| row.terms[i].0 == pa || row.terms[i].0 == pb)
            .collect();
        if positions.len() == 2 {
            let pair_here = (row.terms[positions[0]], row.terms[positions[1]]);
            let (key, negated) = canonical_pair(pair_here.0, pair_here.1);
            if key == (pa, sa, pb, sb) {
                let sign = if negated { Sign::Minus } else { Sign::Plus };
                terms[positions[0]] = (pair_node, sign);
                terms.remove(positions[1]);
            }
        }
        let (root, sign) = build_sum(&mut b, &terms, TreeShape::Balanced);
        outputs.push(NodeKind::Output {
            child: Some(root),
            template: row.template,
            negate: row.negate ^ (sign == Sign::Minus),
        });
    }
    for node in &plan.nodes {
        if let NodeKind::Output {
            child: None,
            template,
            negate,
        } = node.kind
        {
            outputs.push(NodeKind::Output {
                child: None,
                template,
                negate,
            });
        }
    }
    outputs.sort_by_key(|kind| match kind {
        NodeKind::Output { template, .. } => *template,
        _ => unreachable!(),
    });
    for kind in outputs {
        b.push(kind);
    }
    (
        MultiplicationPlan::assemble(plan.base, plan.digits, plan.templates, plan.m, b.nodes),
        true,
    )
}

/// One CSE round: merge structural duplicates, then extract the best shared
/// pair. Returns the (pruned, when changed) plan and whether anything moved.
pub fn cse_pass(plan: &MultiplicationPlan) -> (MultiplicationPlan, bool) {
    let (merged, merge_changed) = structural_merge(plan);
    let merged = if merge_changed { prune(&merged) } else { merged };
    let (extracted, extract_changed) = extract_best_pair(&merged);
    let out = if extract_changed {
        prune(&extracted)
    } else {
        extracted
    };
    (out, merge_changed || extract_changed)
}

/// Drops every node not reachable from an output and renumbers densely,
/// preserving relative order. Idempotent.
pub fn prune(plan: &MultiplicationPlan) -> MultiplicationPlan {
    let live = plan.reachable();
    let mut remap = vec![usize::MAX; plan.nodes.len()];
    let mut nodes = Vec::new();
    for node in &plan.nodes {
        if !live[node.id] {
            continue;
        }
        let kind = remap_kind(node.kind, &remap);
        let id = nodes.len();
        remap[node.id] = id;
        nodes.push(PlanNode { id, kind });
    }
    MultiplicationPlan::assemble(plan.base, plan.digits, plan.templates, plan.m, nodes)
}
