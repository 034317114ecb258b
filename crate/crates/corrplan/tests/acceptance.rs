//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//!
//! The lines go directly to stderr so they survive libtest's output capture;
//! a failing criterion also fails its test with the same message.

use corrplan::bench::{bench_sweep, direct_cost, rows_to_csv, viterbi_alpha, BenchConfig, ViterbiFlag};
use corrplan::classify::{correlation, distance, gen_test_signal, run_detection};
use corrplan::exact::exact_from_f64;
use corrplan::exec::{direct_multiply, evaluate_plan, random_rational_vector, verify_equivalence};
use corrplan::plan::CostPolicy;
use corrplan::quantize::{normalize_rows, QuantizedMatrix};
use corrplan::stream::stream_init;
use corrplan::synth::synthesize_plan;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

fn report(label: &str, check: impl FnOnce() -> Check) {
    use std::io::Write;
    let outcome = check();
    let line = match &outcome {
        Ok(()) => format!("ACCEPTANCE {label}: PASS"),
        Err(msg) => format!("ACCEPTANCE {label}: FAIL - {msg}"),
    };
    // Write to the real stderr, not through the print macros, so the line is
    // visible even though libtest captures test output.
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    if let Err(msg) = outcome {
        panic!("{label}: {msg}");
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, k: usize, m: usize, digits: u32) -> QuantizedMatrix {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    QuantizedMatrix::from_rows_f64(&rows, 10, digits).expect("well-formed random matrix")
}

#[test]
fn a1_plans_equal_direct_products_bit_exactly() {
    report("1/9 exact oracle equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1001);
        for case in 0..200 {
            let k = rng.gen_range(1..=16);
            let m = rng.gen_range(1..=16);
            let digits = *[1u32, 2, 3].choose(&mut rng).unwrap();
            let matrix = random_matrix(&mut rng, k, m, digits);
            let plan = synthesize_plan(&matrix, &CostPolicy::default());
            plan.validate().map_err(|e| format!("case {case}: {e}"))?;
            let report = verify_equivalence(&plan, &matrix, 20, rng.gen())
                .map_err(|e| format!("case {case}: {e}"))?;
            if let Some(mismatch) = report.mismatch {
                return Err(format!(
                    "case {case} ({k}x{m}, D={digits}): trial {} disagrees with the oracle",
                    mismatch.trial
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn a2_streaming_equals_batch_on_a_long_signal() {
    report("2/9 streaming equivalence over 10k samples", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2002);
        let matrix = random_matrix(&mut rng, 8, 16, 2);
        let plan = synthesize_plan(&matrix, &CostPolicy::default());
        let signal: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rows_f64: Vec<Vec<f64>> = (0..matrix.k()).map(|k| matrix.row_values_f64(k)).collect();

        let mut state = stream_init(&plan);
        let mut checked = 0u64;
        for (t, &sample) in signal.iter().enumerate() {
            let out = match state.push_f64(sample).map_err(|e| e.to_string())? {
                Some(out) => out,
                None => continue,
            };
            let window = &signal[t + 1 - plan.m..=t];
            let exact_window: Vec<_> = window
                .iter()
                .map(|&x| exact_from_f64(x).unwrap())
                .collect();
            let batch = evaluate_plan(&plan, &exact_window)
                .map_err(|e| e.to_string())?
                .values();
            if out.raw != batch {
                return Err(format!("raw correlations diverge at window end {t}"));
            }
            let norm: f64 = window.iter().map(|x| x * x).sum::<f64>().sqrt();
            let streamed = out
                .normalized()
                .ok_or_else(|| format!("unexpected zero-norm window at {t}"))?;
            for (k, row) in rows_f64.iter().enumerate() {
                let direct: f64 =
                    row.iter().zip(window).map(|(r, x)| r * x).sum::<f64>() / norm;
                if (streamed[k] - direct).abs() > 1e-12 {
                    return Err(format!(
                        "normalized correlation {k} off by {:e} at window end {t}",
                        (streamed[k] - direct).abs()
                    ));
                }
            }
            checked += 1;
        }
        if checked != 10_000 - 16 + 1 {
            return Err(format!("expected 9985 windows, saw {checked}"));
        }
        Ok(())
    });
}

#[test]
fn a3_direct_method_tallies_match_the_formula() {
    report("3/9 direct cost baseline", || {
        let mut rng = ChaCha8Rng::seed_from_u64(3003);
        for _ in 0..50 {
            let k = rng.gen_range(1..=12);
            let m = rng.gen_range(1..=12);
            let matrix = random_matrix(&mut rng, k, m, 2);
            let x = random_rational_vector(&mut rng, m);
            let (_, tally) = direct_multiply(&matrix, &x).map_err(|e| e.to_string())?;
            let (mults, adds) = direct_cost(k, m);
            if (tally.multiplies, tally.adds) != (mults, adds) {
                return Err(format!(
                    "({k},{m}): tallied ({}, {}), formula says ({mults}, {adds})",
                    tally.multiplies, tally.adds
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn a4_viterbi_baseline_values() {
    report("4/9 Viterbi baseline factors", || {
        let (am, aa, flag) = viterbi_alpha(16);
        if (am, aa) != (1.0, 0.75) || flag != ViterbiFlag::AsPrinted {
            return Err(format!("alpha(16) = ({am}, {aa}, {flag:?})"));
        }
        let (am, aa, flag) = viterbi_alpha(100);
        let printed = 1.0 - 48f64.sqrt();
        if am != 0.5 || (aa - printed).abs() > 0.0 || flag != ViterbiFlag::AnomalousNegative {
            return Err(format!("alpha(100) = ({am}, {aa}, {flag:?})"));
        }
        Ok(())
    });
}

#[test]
fn a5_plan_multiplies_shrink_relative_to_direct() {
    report("5/9 multiply reduction", || {
        // Bound check across assorted single-digit matrices.
        let mut rng = ChaCha8Rng::seed_from_u64(5005);
        for _ in 0..50 {
            let k = rng.gen_range(1..=16);
            let m = rng.gen_range(1..=16);
            let matrix = random_matrix(&mut rng, k, m, 1);
            let plan = synthesize_plan(&matrix, &CostPolicy::default());
            if plan.cost.multiplies > 9 * m as u64 {
                return Err(format!(
                    "{k}x{m}: {} multiplies exceeds 9*m = {}",
                    plan.cost.multiplies,
                    9 * m
                ));
            }
        }
        // Instrumented sweep: ratio non-increasing in K and within 9/K.
        let rows = bench_sweep(&BenchConfig::default()).map_err(|e| e.to_string())?;
        let mut mean_by_k: Vec<(usize, f64)> = Vec::new();
        for k in [4usize, 16, 64] {
            let ratios: Vec<f64> = rows
                .iter()
                .filter(|r| r.k == k)
                .map(|r| r.plan_mults as f64 / r.direct_mults as f64)
                .collect();
            if ratios.is_empty() {
                return Err(format!("sweep produced no rows for K = {k}"));
            }
            for &ratio in &ratios {
                if ratio > 9.0 / k as f64 {
                    return Err(format!("K = {k}: ratio {ratio} above 9/K"));
                }
            }
            mean_by_k.push((k, ratios.iter().sum::<f64>() / ratios.len() as f64));
        }
        for pair in mean_by_k.windows(2) {
            if pair[1].1 > pair[0].1 {
                return Err(format!(
                    "mean ratio grew from K={} ({}) to K={} ({})",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn a6_streaming_beats_batch_with_cache_reuse() {
    report("6/9 streaming reduction", || {
        let rows = bench_sweep(&BenchConfig::default()).map_err(|e| e.to_string())?;
        for row in rows.iter().filter(|r| r.m >= 4) {
            if row.stream_mults_per_step > row.u_total as f64 {
                return Err(format!(
                    "K={} trial {}: {} per-step multiplies above U_total {}",
                    row.k, row.trial, row.stream_mults_per_step, row.u_total
                ));
            }
            if row.stream_mults_per_step >= row.plan_mults as f64 {
                return Err(format!(
                    "K={} trial {}: streaming ({}) not below batch ({})",
                    row.k, row.trial, row.stream_mults_per_step, row.plan_mults
                ));
            }
            if row.cache_hit_rate <= 0.0 {
                return Err(format!("K={} trial {}: no cache hits", row.k, row.trial));
            }
        }
        Ok(())
    });
}

#[test]
fn a7_classifier_identities() {
    report("7/9 classifier identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7007);
        for case in 0..1000 {
            let raw: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let unit = normalize_rows(&raw).map_err(|e| e.to_string())?;
            let c = correlation(&unit[0], &unit[1]).map_err(|e| e.to_string())?;
            if (distance(c) - 2.0 * (1.0 - c)).abs() > 1e-12 {
                return Err(format!("case {case}: distance identity broken at c = {c}"));
            }
            let self_c = correlation(&unit[0], &unit[0]).map_err(|e| e.to_string())?;
            if (self_c - 1.0).abs() > 1e-12 {
                return Err(format!("case {case}: self correlation {self_c}"));
            }
            let negated: Vec<f64> = unit[0].iter().map(|v| -v).collect();
            let anti_c = correlation(&unit[0], &negated).map_err(|e| e.to_string())?;
            if (anti_c + 1.0).abs() > 1e-12 {
                return Err(format!("case {case}: anti correlation {anti_c}"));
            }
        }
        Ok(())
    });
}

#[test]
fn a8_end_to_end_detection_of_embedded_templates() {
    report("8/9 end-to-end detection", || {
        let digits = 3u32;
        let mut rng = ChaCha8Rng::seed_from_u64(8008);
        let raw: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let unit = normalize_rows(&raw).map_err(|e| e.to_string())?;
        let templates =
            QuantizedMatrix::from_rows_f64(&unit, 10, digits).map_err(|e| e.to_string())?;
        let plan = synthesize_plan(&templates, &CostPolicy::default());
        let placements = [(40usize, 2usize), (100, 0), (160, 1)];
        let signal = gen_test_signal(&templates, &placements, 0.0, 4, 220)
            .map_err(|e| e.to_string())?;
        let events =
            run_detection(&plan, &signal, 0.9, plan.m as u64).map_err(|e| e.to_string())?;
        if events.len() != placements.len() {
            return Err(format!("expected 3 events, got {}", events.len()));
        }
        let slack = 10.0 * 10f64.powi(-(digits as i32));
        for (event, &(offset, template)) in events.iter().zip(&placements) {
            let step = (offset + plan.m - 1) as u64;
            if event.template != template || event.step != step {
                return Err(format!(
                    "expected template {template} at step {step}, got {} at {}",
                    event.template, event.step
                ));
            }
            if event.correlation < 1.0 - slack {
                return Err(format!(
                    "template {template}: correlation {} below {}",
                    event.correlation,
                    1.0 - slack
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn a9_bench_output_is_deterministic() {
    report("9/9 benchmark determinism", || {
        let cfg = BenchConfig {
            sizes: vec![(3, 6), (2, 9)],
            digits: vec![1, 2],
            trials: 2,
            seed: 99,
            ..BenchConfig::default()
        };
        let first = rows_to_csv(&bench_sweep(&cfg).map_err(|e| e.to_string())?);
        let second = rows_to_csv(&bench_sweep(&cfg).map_err(|e| e.to_string())?);
        if first != second {
            return Err("two sweeps with one seed differ".into());
        }
        if !first.starts_with("P,K,m,D,trial,") {
            return Err("CSV header missing or reordered".into());
        }
        Ok(())
    });
}
