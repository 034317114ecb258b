//! The multiplication plan: a DAG of scalar shift-add operations that
//! computes the product of a quantized template matrix with an input window.
//!
//! Nodes live in one flat list ordered by id, and every edge points to a
//! strictly smaller id, so acyclicity holds by construction and a single
//! forward sweep evaluates the whole plan.
//!
//! Node values are integers at a common scale. A plan derived from a matrix
//! with `D` fractional digits stores `digits` as the number of digits the
//! plan actually carries: when every nonzero scaled entry shares a common
//! factor `base^g`, the synthesizer divides it out and records `D - g`. That
//! is what lets the identity matrix compile to bare wires (its entries need
//! no fractional digits at all) while keeping evaluation exact.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Sign applied to the right operand of an [`NodeKind::Add`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// One scalar operation. Coefficient signs never appear here as negative
/// magnitudes; they ride on `Add::right_sign` and `Output::negate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    /// Window sample at `position` (0-based, oldest first).
    Input { position: usize },
    /// `magnitude * child`, magnitude a positive scaled integer.
    MulCoeff { child: NodeId, magnitude: u64 },
    /// `base^power * child`; emitted by base-2 synthesis only.
    Shift { child: NodeId, power: u32 },
    /// `left + right` or `left - right`.
    Add {
        left: NodeId,
        right: NodeId,
        right_sign: Sign,
    },
    /// Correlation for template `template`; `child: None` means the row is
    /// all zeros and the output is the constant 0.
    Output {
        child: Option<NodeId>,
        template: usize,
        negate: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: NodeId,
    #[serde(flatten)]
    pub kind: NodeKind,
}

/// Operation counts for one plan, one evaluation, or one streaming step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTally {
    pub multiplies: u64,
    pub adds: u64,
    pub shifts: u64,
    pub cache_hits: u64,
}

impl CostTally {
    pub fn accumulate(&mut self, other: &CostTally) {
        self.multiplies += other.multiplies;
        self.adds += other.adds;
        self.shifts += other.shifts;
        self.cache_hits += other.cache_hits;
    }
}

/// Knobs for cost accounting and synthesis effort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostPolicy {
    /// Fold shift counts into the multiply column when reporting.
    pub count_shifts_as_multiplies: bool,
    /// Upper bound on CSE iterations; synthesis stops earlier at fixpoint.
    pub cse_max_passes: u32,
}

impl Default for CostPolicy {
    fn default() -> Self {
        Self {
            count_shifts_as_multiplies: false,
            cse_max_passes: 64,
        }
    }
}

/// A complete plan for one template matrix.
///
/// Serialized as JSON `{base, D, K, m, nodes, cost}` with nodes in id order;
/// that file is the interface between plan synthesis and the evaluation and
/// streaming commands. `cost` always stores shifts unfused, regardless of
/// the policy used at synthesis time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicationPlan {
    pub base: u32,
    /// Fractional digits the plan's coefficients carry (source digits minus
    /// any matrix-wide common power of the base).
    #[serde(rename = "D")]
    pub digits: u32,
    /// Template count.
    #[serde(rename = "K")]
    pub templates: usize,
    /// Window length.
    pub m: usize,
    pub nodes: Vec<PlanNode>,
    pub cost: CostTally,
}

impl MultiplicationPlan {
    /// Wraps finished nodes, computing the stored canonical cost.
    pub fn assemble(
        base: u32,
        digits: u32,
        templates: usize,
        m: usize,
        nodes: Vec<PlanNode>,
    ) -> Self {
        let mut plan = Self {
            base,
            digits,
            templates,
            m,
            nodes,
            cost: CostTally::default(),
        };
        plan.cost = plan.plan_cost(&CostPolicy::default());
        plan
    }

    /// Static operation counts. Magnitude-1 coefficient nodes are wires and
    /// do not count as multiplications.
    pub fn plan_cost(&self, policy: &CostPolicy) -> CostTally {
        let mut tally = CostTally::default();
        for node in &self.nodes {
            match node.kind {
                NodeKind::MulCoeff { magnitude, .. } if magnitude != 1 => tally.multiplies += 1,
                NodeKind::Add { .. } => tally.adds += 1,
                NodeKind::Shift { .. } => tally.shifts += 1,
                _ => {}
            }
        }
        if policy.count_shifts_as_multiplies {
            tally.multiplies += tally.shifts;
            tally.shifts = 0;
        }
        tally
    }

    /// The `(child, template, negate)` triple of every output, ordered by
    /// template index.
    pub fn outputs(&self) -> Vec<(Option<NodeId>, usize, bool)> {
        let mut outs: Vec<_> = self
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Output {
                    child,
                    template,
                    negate,
                } => Some((child, template, negate)),
                _ => None,
            })
            .collect();
        outs.sort_by_key(|&(_, template, _)| template);
        outs
    }

    /// Checks every structural invariant; run on anything read from disk.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidPlan(msg));
        if self.base < 2 {
            return fail(format!("base {} is below 2", self.base));
        }
        if self.templates == 0 || self.m == 0 {
            return fail("plan must have at least one template and one column".into());
        }
        let mut seen_templates = BTreeSet::new();
        for (index, node) in self.nodes.iter().enumerate() {
            if node.id != index {
                return fail(format!(
                    "node ids must be dense and ascending; found id {} at position {index}",
                    node.id
                ));
            }
            let check_child = |child: NodeId| -> Result<()> {
                if child >= node.id {
                    return Err(Error::InvalidPlan(format!(
                        "node {} references child {} with a non-smaller id",
                        node.id, child
                    )));
                }
                Ok(())
            };
            match node.kind {
                NodeKind::Input { position } => {
                    if position >= self.m {
                        return fail(format!(
                            "node {} reads position {position}, window length is {}",
                            node.id, self.m
                        ));
                    }
                }
                NodeKind::MulCoeff { child, magnitude } => {
                    check_child(child)?;
                    if magnitude == 0 {
                        return fail(format!("node {} has zero magnitude", node.id));
                    }
                }
                NodeKind::Shift { child, .. } => check_child(child)?,
                NodeKind::Add { left, right, .. } => {
                    check_child(left)?;
                    check_child(right)?;
                }
                NodeKind::Output {
                    child, template, ..
                } => {
                    if let Some(child) = child {
                        check_child(child)?;
                    }
                    if template >= self.templates {
                        return fail(format!(
                            "node {} writes template {template}, plan has {}",
                            node.id, self.templates
                        ));
                    }
                    if !seen_templates.insert(template) {
                        return fail(format!("template {template} has two output nodes"));
                    }
                }
            }
        }
        if seen_templates.len() != self.templates {
            return fail(format!(
                "plan covers {} of {} templates",
                seen_templates.len(),
                self.templates
            ));
        }
        for (id, live) in self.reachable().iter().enumerate() {
            if !live {
                return fail(format!("node {id} is unreachable from every output"));
            }
        }
        let canonical = self.plan_cost(&CostPolicy::default());
        if canonical != self.cost {
            return fail(format!(
                "stored cost {:?} does not match node counts {:?}",
                self.cost, canonical
            ));
        }
        Ok(())
    }

    /// Liveness mask: true where the node feeds some output (outputs count
    /// as live themselves).
    pub fn reachable(&self) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        for node in self.nodes.iter().rev() {
            let is_output = matches!(node.kind, NodeKind::Output { .. });
            if is_output {
                live[node.id] = true;
            }
            if !live[node.id] {
                continue;
            }
            match node.kind {
                NodeKind::Input { .. } => {}
                NodeKind::MulCoeff { child, .. } | NodeKind::Shift { child, .. } => {
                    live[child] = true;
                }
                NodeKind::Add { left, right, .. } => {
                    live[left] = true;
                    live[right] = true;
                }
                NodeKind::Output { child, .. } => {
                    if let Some(child) = child {
                        live[child] = true;
                    }
                }
            }
        }
        live
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan() -> MultiplicationPlan {
        // One template: c = 0.5*x0 - 0.5*x1 at one digit.
        MultiplicationPlan::assemble(
            10,
            1,
            1,
            2,
            vec![
                PlanNode {
                    id: 0,
                    kind: NodeKind::Input { position: 0 },
                },
                PlanNode {
                    id: 1,
                    kind: NodeKind::Input { position: 1 },
                },
                PlanNode {
                    id: 2,
                    kind: NodeKind::MulCoeff {
                        child: 0,
                        magnitude: 5,
                    },
                },
                PlanNode {
                    id: 3,
                    kind: NodeKind::MulCoeff {
                        child: 1,
                        magnitude: 5,
                    },
                },
                PlanNode {
                    id: 4,
                    kind: NodeKind::Add {
                        left: 2,
                        right: 3,
                        right_sign: Sign::Minus,
                    },
                },
                PlanNode {
                    id: 5,
                    kind: NodeKind::Output {
                        child: Some(4),
                        template: 0,
                        negate: false,
                    },
                },
            ],
        )
    }

    #[test]
    fn cost_counts_by_kind() {
        let plan = tiny_plan();
        let cost = plan.plan_cost(&CostPolicy::default());
        assert_eq!(
            cost,
            CostTally {
                multiplies: 2,
                adds: 1,
                shifts: 0,
                cache_hits: 0
            }
        );
    }

    #[test]
    fn magnitude_one_is_free() {
        let plan = MultiplicationPlan::assemble(
            10,
            0,
            1,
            1,
            vec![
                PlanNode {
                    id: 0,
                    kind: NodeKind::Input { position: 0 },
                },
                PlanNode {
                    id: 1,
                    kind: NodeKind::MulCoeff {
                        child: 0,
                        magnitude: 1,
                    },
                },
                PlanNode {
                    id: 2,
                    kind: NodeKind::Output {
                        child: Some(1),
                        template: 0,
                        negate: false,
                    },
                },
            ],
        );
        assert_eq!(plan.cost.multiplies, 0);
    }

    #[test]
    fn shift_folding_policy() {
        let plan = MultiplicationPlan::assemble(
            2,
            1,
            1,
            1,
            vec![
                PlanNode {
                    id: 0,
                    kind: NodeKind::Input { position: 0 },
                },
                PlanNode {
                    id: 1,
                    kind: NodeKind::Shift { child: 0, power: 1 },
                },
                PlanNode {
                    id: 2,
                    kind: NodeKind::Output {
                        child: Some(1),
                        template: 0,
                        negate: false,
                    },
                },
            ],
        );
        let separate = plan.plan_cost(&CostPolicy::default());
        assert_eq!((separate.multiplies, separate.shifts), (0, 1));
        let folded = plan.plan_cost(&CostPolicy {
            count_shifts_as_multiplies: true,
            ..CostPolicy::default()
        });
        assert_eq!((folded.multiplies, folded.shifts), (1, 0));
    }

    #[test]
    fn validate_accepts_well_formed_plan() {
        tiny_plan().validate().unwrap();
    }

    #[test]
    fn validate_rejects_forward_reference() {
        let mut plan = tiny_plan();
        plan.nodes[2].kind = NodeKind::MulCoeff {
            child: 4,
            magnitude: 5,
        };
        assert!(plan.validate().is_err());
    }

    #[test]
    fn validate_rejects_zero_magnitude() {
        let mut plan = tiny_plan();
        plan.nodes[2].kind = NodeKind::MulCoeff {
            child: 0,
            magnitude: 0,
        };
        plan.cost = plan.plan_cost(&CostPolicy::default());
        assert!(plan.validate().is_err());
    }

    #[test]
    fn validate_rejects_duplicate_template() {
        let mut plan = tiny_plan();
        plan.nodes.push(PlanNode {
            id: 6,
            kind: NodeKind::Output {
                child: Some(4),
                template: 0,
                negate: true,
            },
        });
        assert!(plan.validate().is_err());
    }

    #[test]
    fn validate_rejects_orphan_node() {
        let mut plan = tiny_plan();
        plan.nodes.insert(
            5,
            PlanNode {
                id: 5,
                kind: NodeKind::MulCoeff {
                    child: 0,
                    magnitude: 7,
                },
            },
        );
        plan.nodes[6].id = 6;
        plan.cost = plan.plan_cost(&CostPolicy::default());
        assert!(plan.validate().is_err());
    }

    #[test]
    fn validate_rejects_stale_cost() {
        let mut plan = tiny_plan();
        plan.cost.adds = 17;
        assert!(plan.validate().is_err());
    }

    #[test]
    fn json_schema_is_stable() {
        let plan = MultiplicationPlan::assemble(
            10,
            0,
            1,
            1,
            vec![
                PlanNode {
                    id: 0,
                    kind: NodeKind::Input { position: 0 },
                },
                PlanNode {
                    id: 1,
                    kind: NodeKind::Output {
                        child: Some(0),
                        template: 0,
                        negate: false,
                    },
                },
            ],
        );
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(
            json,
            "{\"base\":10,\"D\":0,\"K\":1,\"m\":1,\
             \"nodes\":[{\"id\":0,\"kind\":\"input\",\"position\":0},\
             {\"id\":1,\"kind\":\"output\",\"child\":0,\"template\":0,\"negate\":false}],\
             \"cost\":{\"multiplies\":0,\"adds\":0,\"shifts\":0,\"cache_hits\":0}}"
        );
    }

    #[test]
    fn json_round_trip() {
        let plan = tiny_plan();
        let json = serde_json::to_string_pretty(&plan).unwrap();
        let back: MultiplicationPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, plan);
        back.validate().unwrap();
    }

    #[test]
    fn sign_serializes_as_symbol() {
        assert_eq!(serde_json::to_string(&Sign::Minus).unwrap(), "\"-\"");
        assert_eq!(serde_json::to_string(&Sign::Plus).unwrap(), "\"+\"");
    }
}
