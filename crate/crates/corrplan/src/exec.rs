//! Exact plan evaluation and the direct-product oracle.
//!
//! Both sides work in rational arithmetic so equivalence checks compare
//! with zero tolerance. The evaluator clears denominators once up front and
//! then runs the whole DAG in big-integer arithmetic; the oracle is kept
//! deliberately naive (a textbook dot product over rationals) so it shares
//! no code with the machinery it checks.

use num_bigint::BigInt;
use num_traits::Zero;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{self, Exact};
use crate::plan::{CostTally, MultiplicationPlan, NodeKind};
use crate::quantize::QuantizedMatrix;

/// Outcome of one batch evaluation: integer outputs at a common scale.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub outputs: Vec<BigInt>,
    /// Multiply any output by this to get the exact correlation value.
    pub scale: Exact,
    pub tally: CostTally,
}

impl EvalResult {
    pub fn values(&self) -> Vec<Exact> {
        self.outputs
            .iter()
            .map(|o| Exact::from_integer(o.clone()) * &self.scale)
            .collect()
    }
}

/// Runs the plan on one window. Every node executes exactly once, so the
/// tally matches the plan's static cost for any input.
pub fn evaluate_plan(plan: &MultiplicationPlan, x: &[Exact]) -> Result<EvalResult> {
    if x.len() != plan.m {
        return Err(Error::LengthMismatch {
            expected: plan.m,
            got: x.len(),
        });
    }
    let (numerators, denominator) = exact::common_denominator(x);
    let mut tally = CostTally::default();
    let mut values: Vec<BigInt> = Vec::with_capacity(plan.nodes.len());
    let mut outputs = vec![BigInt::zero(); plan.templates];
    for node in &plan.nodes {
        let value = match node.kind {
            NodeKind::Input { position } => numerators[position].clone(),
            NodeKind::MulCoeff { child, magnitude } => {
                if magnitude != 1 {
                    tally.multiplies += 1;
                }
                &values[child] * BigInt::from(magnitude)
            }
            NodeKind::Shift { child, power } => {
                tally.shifts += 1;
                &values[child] * exact::pow_big(plan.base, power)
            }
            NodeKind::Add {
                left,
                right,
                right_sign,
            } => {
                tally.adds += 1;
                match right_sign {
                    crate::plan::Sign::Plus => &values[left] + &values[right],
                    crate::plan::Sign::Minus => &values[left] - &values[right],
                }
            }
            NodeKind::Output {
                child,
                template,
                negate,
            } => {
                let v = match child {
                    Some(child) => values[child].clone(),
                    None => BigInt::zero(),
                };
                outputs[template] = if negate { -v } else { v };
                BigInt::zero()
            }
        };
        values.push(value);
    }
    let scale = Exact::new(
        BigInt::from(1),
        exact::pow_big(plan.base, plan.digits) * denominator,
    );
    Ok(EvalResult {
        outputs,
        scale,
        tally,
    })
}

/// Textbook matrix-vector product, the oracle every plan is checked
/// against. The tally mirrors a direct implementation: one multiply per
/// entry, m - 1 adds per row, zeros included.
pub fn direct_multiply(
    matrix: &QuantizedMatrix,
    x: &[Exact],
) -> Result<(Vec<Exact>, CostTally)> {
    if x.len() != matrix.m() {
        return Err(Error::LengthMismatch {
            expected: matrix.m(),
            got: x.len(),
        });
    }
    let mut tally = CostTally::default();
    let mut out = Vec::with_capacity(matrix.k());
    for k in 0..matrix.k() {
        let mut sum = Exact::zero();
        for (i, sample) in x.iter().enumerate() {
            let product = sample * matrix.value(k, i);
            tally.multiplies += 1;
            if i > 0 {
                tally.adds += 1;
            }
            sum += product;
        }
        out.push(sum);
    }
    Ok((out, tally))
}

/// First divergence found between a plan and its source matrix.
#[derive(Debug, Clone)]
pub struct Mismatch {
    pub trial: u32,
    pub vector: Vec<Exact>,
    pub expected: Vec<Exact>,
    pub actual: Vec<Exact>,
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub trials: u32,
    pub mismatch: Option<Mismatch>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Checks the plan against the oracle on `trials` seeded random rational
/// vectors, stopping at the first mismatch.
pub fn verify_equivalence(
    plan: &MultiplicationPlan,
    matrix: &QuantizedMatrix,
    trials: u32,
    seed: u64,
) -> Result<EquivalenceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let vector = random_rational_vector(&mut rng, matrix.m());
        let expected = direct_multiply(matrix, &vector)?.0;
        let actual = evaluate_plan(plan, &vector)?.values();
        if expected != actual {
            return Ok(EquivalenceReport {
                trials,
                mismatch: Some(Mismatch {
                    trial,
                    vector,
                    expected,
                    actual,
                }),
            });
        }
    }
    Ok(EquivalenceReport {
        trials,
        mismatch: None,
    })
}

/// Random vector of small rationals (numerators in ±1000, denominators in
/// 1..100); exercises non-dyadic values on purpose.
pub fn random_rational_vector<R: Rng>(rng: &mut R, len: usize) -> Vec<Exact> {
    (0..len)
        .map(|_| {
            let numer = rng.gen_range(-1000i64..=1000);
            let denom = rng.gen_range(1i64..100);
            Exact::new(BigInt::from(numer), BigInt::from(denom))
        })
        .collect()
}
