//! Sliding-window streaming evaluation with cross-window reuse.
//!
//! Consecutive windows differ by one sample, so almost everything a plan
//! computes for window t is still valid for later windows, just attached to
//! different absolute sample positions. Two caches capture that:
//!
//! * the product cache holds coefficient products keyed by
//!   (absolute sample index, coefficient), so a magnitude met again when the
//!   sample slides into another column costs nothing;
//! * the sum cache holds partial sums keyed by (anchor index, signature),
//!   where the signature is the canonical multiset of (lag, signed
//!   coefficient) the sum covers and the anchor is the absolute index of its
//!   earliest sample. Any structurally identical combination computed by any
//!   row at any step matches.
//!
//! Keys never mention window positions, only absolute indices, which is the
//! whole trick: work migrates across windows for free. Entries referring to
//! samples older than the current window are evicted each step.
//!
//! Everything is exact rational arithmetic; the running window norm is an
//! exact sum of squares, so no drift accumulates over long streams.

use std::collections::{BTreeMap, VecDeque};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{self, Exact};
use crate::plan::{CostTally, MultiplicationPlan, NodeId, NodeKind, Sign};

/// Canonical content of a cached value: sorted (relative lag, signed
/// coefficient) pairs. Relative lag 0 is the node's earliest sample.
type Signature = Vec<(u32, BigInt)>;

/// How a node's value is obtained during streaming.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Slot {
    /// Constant zero (all coefficients cancelled; never produced by the
    /// synthesizer but legal in a hand-written plan).
    Zero,
    /// The sample itself, possibly negated: no arithmetic, no cache entry.
    Wire { lag: usize, negate: bool },
    /// Single-sample coefficient product; lives in the product cache.
    Product,
    /// Multi-sample partial sum; lives in the sum cache.
    Sum,
}

#[derive(Debug, Clone)]
struct NodeMeta {
    slot: Slot,
    /// Window position of the earliest sample the node touches.
    min_lag: usize,
    sig_id: u32,
}

/// Arithmetic spent maintaining and applying window norms, kept apart from
/// the plan's own operation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizationTally {
    pub multiplies: u64,
    pub adds: u64,
    pub divisions: u64,
}

/// One emitted window.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Absolute index (0-based) of the newest sample in the window.
    pub window_end: u64,
    /// Exact correlation vector, identical to batch evaluation.
    pub raw: Vec<Exact>,
    /// Fresh work plus cache hits for this step.
    pub tally: CostTally,
    pub norm_squared: Exact,
}

impl StepResult {
    pub fn norm(&self) -> f64 {
        exact::exact_to_f64(&self.norm_squared).sqrt()
    }

    pub fn is_zero_norm(&self) -> bool {
        self.norm_squared.is_zero()
    }

    /// Correlations divided by the window norm; `None` for an all-zero
    /// window, where the normalized value is undefined.
    pub fn normalized(&self) -> Option<Vec<f64>> {
        if self.is_zero_norm() {
            return None;
        }
        let norm = self.norm();
        Some(
            self.raw
                .iter()
                .map(|c| exact::exact_to_f64(c) / norm)
                .collect(),
        )
    }
}

pub struct StreamState<'a> {
    plan: &'a MultiplicationPlan,
    meta: Vec<NodeMeta>,
    /// Interned signatures, index = sig_id.
    signatures: Vec<Signature>,
    scale: Exact,
    /// Samples of the current (possibly still filling) window, oldest first.
    ring: VecDeque<Exact>,
    /// Absolute index the next pushed sample will get.
    next_index: u64,
    product_cache: BTreeMap<(u64, u32), Exact>,
    sum_cache: BTreeMap<(u64, u32), Exact>,
    norm_acc: Exact,
    norm_tally: NormalizationTally,
    windows: u64,
    totals: CostTally,
    first_window: CostTally,
    post_warmup_windows: u64,
    post_warmup: CostTally,
    post_warmup_max_multiplies: u64,
    /// Disable only to verify that eviction never changes results.
    pub evict: bool,
}

/// Builds the streaming state for a plan. The plan is borrowed immutably;
/// several independent streams may share it.
pub fn stream_init(plan: &MultiplicationPlan) -> StreamState<'_> {
    let mut signatures: Vec<Signature> = Vec::new();
    let mut interned: BTreeMap<Signature, u32> = BTreeMap::new();
    let mut meta: Vec<NodeMeta> = Vec::with_capacity(plan.nodes.len());
    // Aggregate signed coefficients per window lag, bottom-up.
    let mut maps: Vec<BTreeMap<usize, BigInt>> = Vec::with_capacity(plan.nodes.len());
    for node in &plan.nodes {
        let map: BTreeMap<usize, BigInt> = match node.kind {
            NodeKind::Input { position } => [(position, BigInt::from(1))].into(),
            NodeKind::MulCoeff { child, magnitude } => maps[child]
                .iter()
                .map(|(&lag, c)| (lag, c * magnitude))
                .collect(),
            NodeKind::Shift { child, power } => {
                let factor = exact::pow_big(plan.base, power);
                maps[child]
                    .iter()
                    .map(|(&lag, c)| (lag, c * &factor))
                    .collect()
            }
            NodeKind::Add {
                left,
                right,
                right_sign,
            } => {
                let mut map = maps[left].clone();
                for (&lag, c) in &maps[right] {
                    let signed = match right_sign {
                        Sign::Plus => c.clone(),
                        Sign::Minus => -c.clone(),
                    };
                    let entry = map.entry(lag).or_insert_with(BigInt::zero);
                    *entry += signed;
                    if entry.is_zero() {
                        map.remove(&lag);
                    }
                }
                map
            }
            NodeKind::Output { .. } => BTreeMap::new(),
        };
        let (slot, min_lag) = if matches!(node.kind, NodeKind::Output { .. }) || map.is_empty() {
            (Slot::Zero, 0)
        } else {
            let min_lag = *map.keys().next().unwrap();
            if map.len() == 1 && map[&min_lag].abs() == BigInt::from(1) {
                (
                    Slot::Wire {
                        lag: min_lag,
                        negate: map[&min_lag].is_negative(),
                    },
                    min_lag,
                )
            } else if map.len() == 1 {
                (Slot::Product, min_lag)
            } else {
                (Slot::Sum, min_lag)
            }
        };
        let sig_id = if matches!(slot, Slot::Product | Slot::Sum) {
            let sig: Signature = map
                .iter()
                .map(|(&lag, c)| ((lag - min_lag) as u32, c.clone()))
                .collect();
            match interned.get(&sig) {
                Some(&id) => id,
                None => {
                    let id = signatures.len() as u32;
                    interned.insert(sig.clone(), id);
                    signatures.push(sig);
                    id
                }
            }
        } else {
            0
        };
        meta.push(NodeMeta {
            slot,
            min_lag,
            sig_id,
        });
        maps.push(map);
    }
    StreamState {
        plan,
        meta,
        signatures,
        scale: Exact::new(BigInt::from(1), exact::pow_big(plan.base, plan.digits)),
        ring: VecDeque::with_capacity(plan.m + 1),
        next_index: 0,
        product_cache: BTreeMap::new(),
        sum_cache: BTreeMap::new(),
        norm_acc: Exact::zero(),
        norm_tally: NormalizationTally::default(),
        windows: 0,
        totals: CostTally::default(),
        first_window: CostTally::default(),
        post_warmup_windows: 0,
        post_warmup: CostTally::default(),
        post_warmup_max_multiplies: 0,
        evict: true,
    }
}

impl<'a> StreamState<'a> {
    pub fn plan(&self) -> &MultiplicationPlan {
        self.plan
    }

    pub fn samples_seen(&self) -> u64 {
        self.next_index
    }

    pub fn windows_emitted(&self) -> u64 {
        self.windows
    }

    fn ring_at(&self, window_start: u64, abs: u64) -> &Exact {
        &self.ring[(abs - window_start) as usize]
    }

    fn eval_node(
        &mut self,
        id: NodeId,
        window_start: u64,
        memo: &mut Vec<Option<Exact>>,
        tally: &mut CostTally,
    ) -> Exact {
        if let Some(v) = &memo[id] {
            return v.clone();
        }
        let meta = self.meta[id].clone();
        let value = match meta.slot {
            Slot::Zero => Exact::zero(),
            Slot::Wire { lag, negate } => {
                let x = self.ring_at(window_start, window_start + lag as u64).clone();
                if negate {
                    -x
                } else {
                    x
                }
            }
            Slot::Product | Slot::Sum => {
                let key = (window_start + meta.min_lag as u64, meta.sig_id);
                let cached = match meta.slot {
                    Slot::Product => self.product_cache.get(&key),
                    _ => self.sum_cache.get(&key),
                };
                if let Some(v) = cached {
                    tally.cache_hits += 1;
                    v.clone()
                } else {
                    let v = match self.plan.nodes[id].kind {
                        NodeKind::MulCoeff { child, magnitude } => {
                            let c = self.eval_node(child, window_start, memo, tally);
                            if magnitude != 1 {
                                tally.multiplies += 1;
                            }
                            c * Exact::from_integer(BigInt::from(magnitude))
                        }
                        NodeKind::Shift { child, power } => {
                            let c = self.eval_node(child, window_start, memo, tally);
                            tally.shifts += 1;
                            c * Exact::from_integer(exact::pow_big(self.plan.base, power))
                        }
                        NodeKind::Add {
                            left,
                            right,
                            right_sign,
                        } => {
                            let l = self.eval_node(left, window_start, memo, tally);
                            let r = self.eval_node(right, window_start, memo, tally);
                            tally.adds += 1;
                            match right_sign {
                                Sign::Plus => l + r,
                                Sign::Minus => l - r,
                            }
                        }
                        NodeKind::Input { .. } | NodeKind::Output { .. } => {
                            unreachable!("inputs are wires, outputs are never evaluated")
                        }
                    };
                    match meta.slot {
                        Slot::Product => self.product_cache.insert(key, v.clone()),
                        _ => self.sum_cache.insert(key, v.clone()),
                    };
                    v
                }
            }
        };
        memo[id] = Some(value.clone());
        value
    }

    /// Ingests one exact sample; emits the correlation vector once the
    /// window is full.
    pub fn push(&mut self, sample: Exact) -> Option<StepResult> {
        let m = self.plan.m;
        let t = self.next_index;
        self.next_index += 1;
        self.norm_acc += &sample * &sample;
        self.norm_tally.multiplies += 1;
        self.norm_tally.adds += 1;
        self.ring.push_back(sample);
        if self.ring.len() > m {
            let old = self.ring.pop_front().unwrap();
            self.norm_acc -= &old * &old;
            self.norm_tally.multiplies += 1;
            self.norm_tally.adds += 1;
        }
        if self.ring.len() < m {
            return None;
        }
        let window_start = t + 1 - m as u64;
        if self.evict {
            while let Some((&key, _)) = self.product_cache.first_key_value() {
                if key.0 < window_start {
                    self.product_cache.pop_first();
                } else {
                    break;
                }
            }
            while let Some((&key, _)) = self.sum_cache.first_key_value() {
                if key.0 < window_start {
                    self.sum_cache.pop_first();
                } else {
                    break;
                }
            }
        }

        let mut memo: Vec<Option<Exact>> = vec![None; self.plan.nodes.len()];
        let mut tally = CostTally::default();
        let mut raw = vec![Exact::zero(); self.plan.templates];
        for (child, template, negate) in self.plan.outputs() {
            let v = match child {
                Some(child) => self.eval_node(child, window_start, &mut memo, &mut tally),
                None => Exact::zero(),
            };
            let v = if negate { -v } else { v };
            raw[template] = v * &self.scale;
        }

        self.windows += 1;
        if self.windows == 1 {
            self.first_window = tally;
        }
        self.totals.accumulate(&tally);
        if self.windows > m as u64 {
            self.post_warmup_windows += 1;
            self.post_warmup.accumulate(&tally);
            self.post_warmup_max_multiplies =
                self.post_warmup_max_multiplies.max(tally.multiplies);
        }
        // The classification pipeline divides every output by the norm.
        self.norm_tally.divisions += self.plan.templates as u64;

        Some(StepResult {
            window_end: t,
            raw,
            tally,
            norm_squared: self.norm_acc.clone(),
        })
    }

    /// Float sample entry point; rejects non-finite input.
    pub fn push_f64(&mut self, sample: f64) -> Result<Option<StepResult>> {
        Ok(self.push(exact::exact_from_f64(sample)?))
    }

    /// Euclidean norm of the current window, maintained incrementally.
    pub fn window_norm(&self) -> Result<f64> {
        if self.ring.len() < self.plan.m {
            return Err(Error::WindowNotFull {
                have: self.ring.len(),
                need: self.plan.m,
            });
        }
        Ok(exact::exact_to_f64(&self.norm_acc).sqrt())
    }

    /// Recomputes a random share of cache entries from the ring and
    /// reports the first disagreement. Entries older than the current
    /// window (possible only with eviction off) are skipped.
    pub fn verify_caches<R: Rng>(&self, rng: &mut R, fraction: f64) -> Result<()> {
        if self.ring.len() < self.plan.m {
            return Ok(());
        }
        let window_start = self.next_index - self.plan.m as u64;
        let recompute = |anchor: u64, sig_id: u32| -> Option<Exact> {
            let sig = &self.signatures[sig_id as usize];
            let mut sum = Exact::zero();
            for (lag, coeff) in sig {
                let abs = anchor + *lag as u64;
                if abs < window_start || abs >= self.next_index {
                    return None;
                }
                sum += self.ring_at(window_start, abs) * Exact::from_integer(coeff.clone());
            }
            Some(sum)
        };
        for (cache, name) in [
            (&self.product_cache, "product"),
            (&self.sum_cache, "sum"),
        ] {
            for (&(anchor, sig_id), value) in cache {
                if rng.gen::<f64>() >= fraction {
                    continue;
                }
                match recompute(anchor, sig_id) {
                    None => continue,
                    Some(expected) => {
                        if &expected != value {
                            return Err(Error::Internal(format!(
                                "{name} cache entry at anchor {anchor} disagrees with \
                                 recomputation"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn cost_summary(&self) -> Result<StreamSummary> {
        if self.windows == 0 {
            return Err(Error::WindowNotFull {
                have: self.ring.len(),
                need: self.plan.m,
            });
        }
        let w = self.windows as f64;
        let fresh = self.totals.multiplies + self.totals.adds + self.totals.shifts;
        let looked_up = fresh + self.totals.cache_hits;
        Ok(StreamSummary {
            windows: self.windows,
            totals: self.totals,
            per_step_multiplies: self.totals.multiplies as f64 / w,
            per_step_adds: self.totals.adds as f64 / w,
            per_step_shifts: self.totals.shifts as f64 / w,
            cache_hit_rate: if looked_up == 0 {
                0.0
            } else {
                self.totals.cache_hits as f64 / looked_up as f64
            },
            first_window: self.first_window,
            post_warmup_windows: self.post_warmup_windows,
            post_warmup: self.post_warmup,
            post_warmup_max_multiplies: self.post_warmup_max_multiplies,
            normalization: self.norm_tally,
        })
    }
}

/// Aggregate statistics since `stream_init`.
///
/// Warmup is the first m windows: samples present before the first window
/// never visited the high columns, so only from window m + 1 on has every
/// in-window sample walked the full column range and the steady-state
/// reuse bound holds.
#[derive(Debug, Clone, Copy)]
pub struct StreamSummary {
    pub windows: u64,
    pub totals: CostTally,
    pub per_step_multiplies: f64,
    pub per_step_adds: f64,
    pub per_step_shifts: f64,
    /// Cache hits over cache lookups (hits plus fresh computations).
    pub cache_hit_rate: f64,
    pub first_window: CostTally,
    pub post_warmup_windows: u64,
    pub post_warmup: CostTally,
    /// Largest fresh multiply count of any single post-warmup step.
    pub post_warmup_max_multiplies: u64,
    pub normalization: NormalizationTally,
}

/// Convenience wrapper: shorthand for `stream_init`.
pub fn stream_state(plan: &MultiplicationPlan) -> StreamState<'_> {
    stream_init(plan)
}
