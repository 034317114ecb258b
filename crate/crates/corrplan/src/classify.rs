//! Matched-filter classification and event detection.
//!
//! A window is attributed to the template with the highest normalized
//! correlation, equivalently the smallest distance d = 2(1 - c). The event
//! detector turns per-window decisions into a sparse event list: one event
//! per local maximum of the winning correlation, with a refractory period so
//! a single occurrence is not reported from several adjacent windows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::plan::MultiplicationPlan;
use crate::quantize::QuantizedMatrix;
use crate::stream::stream_init;

/// One detected occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationEvent {
    /// Absolute index of the last sample of the window (0-based).
    pub step: u64,
    pub template: usize,
    pub correlation: f64,
    /// Always exactly `2 * (1 - correlation)`, even when quantization slack
    /// pushes the correlation marginally past 1.
    pub distance: f64,
    pub accepted: bool,
}

/// Cross-correlation coefficient of two unit vectors.
pub fn correlation(x: &[f64], r: &[f64]) -> Result<f64> {
    if x.len() != r.len() {
        return Err(Error::LengthMismatch {
            expected: r.len(),
            got: x.len(),
        });
    }
    const TOL: f64 = 1e-9;
    for v in [x, r] {
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > TOL {
            return Err(Error::NormViolation {
                vector: v.to_vec(),
                deviation: (norm - 1.0).abs(),
                tolerance: TOL,
            });
        }
    }
    Ok(x.iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Distance from a correlation coefficient; out-of-range input is clamped
/// with a warning rather than rejected.
pub fn distance(c: f64) -> f64 {
    let clamped = c.clamp(-1.0, 1.0);
    if clamped != c {
        log::warn!("correlation {c} outside [-1, 1]; clamped to {clamped}");
    }
    2.0 * (1.0 - clamped)
}

/// Picks the best template for one window. Returns `None` when the best
/// correlation falls below the threshold (comparison is inclusive).
pub fn classify(
    step: u64,
    correlations: &[f64],
    threshold: f64,
) -> Result<Option<ClassificationEvent>> {
    if correlations.is_empty() {
        return Err(Error::EmptyCorrelations);
    }
    let mut best = 0;
    for (k, &c) in correlations.iter().enumerate() {
        if c > correlations[best] {
            best = k;
        }
    }
    let c = correlations[best];
    if c >= threshold {
        Ok(Some(ClassificationEvent {
            step,
            template: best,
            correlation: c,
            distance: 2.0 * (1.0 - c),
            accepted: true,
        }))
    } else {
        Ok(None)
    }
}

/// Streaming peak detector over per-window classifications.
///
/// While consecutive windows stay above the threshold, the detector tracks
/// the best one seen; as soon as a window fails to improve on it, that best
/// window is emitted as the local maximum (ties resolve to the earliest
/// step). Steps closer than `refractory` to an emitted event neither arm
/// nor emit.
#[derive(Debug, Clone)]
pub struct EventDetector {
    threshold: f64,
    refractory: u64,
    candidate: Option<ClassificationEvent>,
    last_emitted: Option<u64>,
}

impl EventDetector {
    pub fn new(threshold: f64, refractory: u64) -> Self {
        Self {
            threshold,
            refractory,
            candidate: None,
            last_emitted: None,
        }
    }

    fn emit(&mut self) -> Option<ClassificationEvent> {
        let event = self.candidate.take()?;
        self.last_emitted = Some(event.step);
        Some(event)
    }

    /// Feeds one window; `None` correlations mean the window had zero norm
    /// and classification is undefined there. May return an event from an
    /// earlier step once it is confirmed as a local maximum.
    pub fn step(
        &mut self,
        step: u64,
        correlations: Option<&[f64]>,
    ) -> Result<Option<ClassificationEvent>> {
        if let Some(last) = self.last_emitted {
            if step < last + self.refractory {
                self.candidate = None;
                return Ok(None);
            }
        }
        let event = match correlations {
            Some(c) => classify(step, c, self.threshold)?,
            None => None,
        };
        match event {
            Some(event) => match &self.candidate {
                Some(best) if event.correlation <= best.correlation => Ok(self.emit()),
                _ => {
                    self.candidate = Some(event);
                    Ok(None)
                }
            },
            None => Ok(self.emit()),
        }
    }

    /// Ends the stream, releasing a still-armed candidate.
    pub fn flush(&mut self) -> Option<ClassificationEvent> {
        self.emit()
    }
}

/// Runs the whole pipeline: stream the signal through the plan, normalize
/// each full window, detect events.
pub fn run_detection(
    plan: &MultiplicationPlan,
    samples: &[f64],
    threshold: f64,
    refractory: u64,
) -> Result<Vec<ClassificationEvent>> {
    let mut state = stream_init(plan);
    let mut detector = EventDetector::new(threshold, refractory);
    let mut events = Vec::new();
    for &sample in samples {
        if let Some(out) = state.push_f64(sample)? {
            let normalized = out.normalized();
            if normalized.is_none() {
                log::warn!(
                    "zero-norm window ending at step {}; no classification",
                    out.window_end
                );
            }
            if let Some(event) = detector.step(out.window_end, normalized.as_deref())? {
                events.push(event);
            }
        }
    }
    if let Some(event) = detector.flush() {
        events.push(event);
    }
    Ok(events)
}

/// Synthesizes a test signal: white Gaussian noise with template rows added
/// at the given offsets. Deterministic for a fixed seed.
pub fn gen_test_signal(
    templates: &QuantizedMatrix,
    placements: &[(usize, usize)],
    noise_sigma: f64,
    seed: u64,
    length: usize,
) -> Result<Vec<f64>> {
    let m = templates.m();
    let mut sorted = placements.to_vec();
    sorted.sort_unstable();
    for pair in sorted.windows(2) {
        if pair[0].0 + m > pair[1].0 {
            return Err(Error::OverlappingPlacements {
                first: pair[0].0,
                second: pair[1].0,
                window: m,
            });
        }
    }
    for &(offset, template) in &sorted {
        if template >= templates.k() {
            return Err(Error::TemplateOutOfRange {
                template,
                count: templates.k(),
            });
        }
        if offset + m > length {
            return Err(Error::PlacementOutOfRange {
                offset,
                window: m,
                length,
            });
        }
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(Error::NonFiniteInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).expect("validated sigma");
    let mut signal: Vec<f64> = (0..length).map(|_| noise.sample(&mut rng)).collect();
    for &(offset, template) in &sorted {
        for (i, value) in templates.row_values_f64(template).into_iter().enumerate() {
            signal[offset + i] += value;
        }
    }
    Ok(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::CostPolicy;
    use crate::quantize::normalize_rows;
    use crate::synth::synthesize_plan;
    use rand::Rng;

    fn unit_templates(seed: u64, k: usize, m: usize, digits: u32) -> QuantizedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let rows = normalize_rows(&rows).unwrap();
        QuantizedMatrix::from_rows_f64(&rows, 10, digits).unwrap()
    }

    #[test]
    fn correlation_of_identical_orthogonal_and_opposite_vectors() {
        let e0 = [1.0, 0.0];
        let e1 = [0.0, 1.0];
        let neg = [-1.0, 0.0];
        assert_eq!(correlation(&e0, &e0).unwrap(), 1.0);
        assert_eq!(correlation(&e0, &e1).unwrap(), 0.0);
        assert_eq!(correlation(&e0, &neg).unwrap(), -1.0);
    }

    #[test]
    fn correlation_rejects_non_unit_input() {
        let err = correlation(&[2.0, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NormViolation { .. }));
        assert!(correlation(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn distance_endpoints_and_clamping() {
        assert_eq!(distance(1.0), 0.0);
        assert_eq!(distance(0.0), 2.0);
        assert_eq!(distance(-1.0), 4.0);
        assert_eq!(distance(1.5), 0.0);
        assert_eq!(distance(-3.0), 4.0);
    }

    #[test]
    fn distance_identity_on_random_unit_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let raw: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let unit = normalize_rows(&raw).unwrap();
            let c = correlation(&unit[0], &unit[1]).unwrap();
            assert!((distance(c) - 2.0 * (1.0 - c)).abs() <= 1e-12);
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
        }
    }

    #[test]
    fn classify_picks_argmax_with_lowest_index_ties() {
        let event = classify(9, &[0.2, 0.9, 0.9], 0.8).unwrap().unwrap();
        assert_eq!(event.template, 1);
        assert!(event.accepted);
        assert_eq!(event.step, 9);
        assert!((event.distance - 2.0 * (1.0 - 0.9)).abs() <= 1e-12);
    }

    #[test]
    fn classify_boundary_and_rejection() {
        assert!(classify(0, &[0.2, 0.3], 0.8).unwrap().is_none());
        let event = classify(0, &[1.0], 1.0).unwrap().unwrap();
        assert_eq!(event.template, 0);
        assert!(matches!(
            classify(0, &[], 0.5),
            Err(Error::EmptyCorrelations)
        ));
    }

    #[test]
    fn decision_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let templates = unit_templates(21, 3, 8, 4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha = rng.gen_range(0.1..50.0);
            let norm_x: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let correlate = |signal: &[f64], norm: f64| -> Vec<f64> {
                (0..templates.k())
                    .map(|k| {
                        templates
                            .row_values_f64(k)
                            .iter()
                            .zip(signal)
                            .map(|(r, s)| r * s)
                            .sum::<f64>()
                            / norm
                    })
                    .collect()
            };
            let scaled: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let a = classify(0, &correlate(&x, norm_x), -2.0).unwrap().unwrap();
            let b = classify(0, &correlate(&scaled, norm_x * alpha), -2.0)
                .unwrap()
                .unwrap();
            assert_eq!(a.template, b.template);
        }
    }

    #[test]
    fn gen_test_signal_places_templates_in_silence() {
        let templates = unit_templates(3, 2, 5, 3);
        let signal = gen_test_signal(&templates, &[(4, 1)], 0.0, 1, 12).unwrap();
        let row = templates.row_values_f64(1);
        assert_eq!(&signal[..4], &[0.0; 4]);
        assert_eq!(&signal[4..9], row.as_slice());
        assert_eq!(&signal[9..], &[0.0; 3]);

        let silent = gen_test_signal(&templates, &[], 0.0, 1, 12).unwrap();
        assert!(silent.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gen_test_signal_is_deterministic_and_validates_placements() {
        let templates = unit_templates(3, 2, 5, 3);
        let a = gen_test_signal(&templates, &[(0, 0), (7, 1)], 0.5, 42, 20).unwrap();
        let b = gen_test_signal(&templates, &[(0, 0), (7, 1)], 0.5, 42, 20).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));

        assert!(matches!(
            gen_test_signal(&templates, &[(0, 0), (3, 1)], 0.0, 1, 20),
            Err(Error::OverlappingPlacements { .. })
        ));
        assert!(matches!(
            gen_test_signal(&templates, &[(18, 0)], 0.0, 1, 20),
            Err(Error::PlacementOutOfRange { .. })
        ));
        assert!(matches!(
            gen_test_signal(&templates, &[(0, 9)], 0.0, 1, 20),
            Err(Error::TemplateOutOfRange { .. })
        ));
    }

    #[test]
    fn noiseless_embedding_yields_one_exact_event() {
        let templates = unit_templates(17, 3, 8, 3);
        let plan = synthesize_plan(&templates, &CostPolicy::default());
        let signal = gen_test_signal(&templates, &[(100, 1)], 0.0, 1, 200).unwrap();
        let events = run_detection(&plan, &signal, 0.9, plan.m as u64).unwrap();
        assert_eq!(events.len(), 1);
        let event = &events[0];
        assert_eq!(event.template, 1);
        assert_eq!(event.step, 100 + 8 - 1);
        // The placed waveform is the quantized template itself, so the
        // correlation equals its norm: 1 up to quantization slack.
        assert!(event.correlation >= 1.0 - 10.0 * 10f64.powi(-3));
        assert!(event.correlation <= 1.0 + 10.0 * 10f64.powi(-3));
        assert!((event.distance - 2.0 * (1.0 - event.correlation)).abs() <= 1e-12);
    }

    #[test]
    fn two_disjoint_embeddings_yield_two_ordered_events() {
        let templates = unit_templates(17, 3, 8, 3);
        let plan = synthesize_plan(&templates, &CostPolicy::default());
        let signal = gen_test_signal(&templates, &[(60, 2), (140, 0)], 0.0, 1, 200).unwrap();
        let events = run_detection(&plan, &signal, 0.9, plan.m as u64).unwrap();
        let summary: Vec<(usize, u64)> = events.iter().map(|e| (e.template, e.step)).collect();
        assert_eq!(summary, vec![(2, 67), (0, 147)]);
        for event in &events {
            assert!(event.correlation >= 1.0 - 10.0 * 10f64.powi(-3));
        }
    }

    #[test]
    fn pure_noise_stays_below_a_tight_threshold() {
        let templates = unit_templates(17, 3, 8, 3);
        let plan = synthesize_plan(&templates, &CostPolicy::default());
        let signal = gen_test_signal(&templates, &[], 1.0, 99, 300).unwrap();
        let events = run_detection(&plan, &signal, 0.999, plan.m as u64).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn detector_reports_plateau_start_and_honours_refractory() {
        let feed = |detector: &mut EventDetector, values: &[f64]| -> Vec<u64> {
            let mut steps = Vec::new();
            for (t, &v) in values.iter().enumerate() {
                if let Some(e) = detector.step(t as u64, Some(&[v])).unwrap() {
                    steps.push(e.step);
                }
            }
            if let Some(e) = detector.flush() {
                steps.push(e.step);
            }
            steps
        };

        let mut plateau = EventDetector::new(0.9, 0);
        assert_eq!(feed(&mut plateau, &[0.1, 0.95, 0.95, 0.1]), vec![1]);

        let two_peaks = [0.1, 0.95, 0.1, 0.96, 0.1];
        let mut suppressing = EventDetector::new(0.9, 5);
        assert_eq!(feed(&mut suppressing, &two_peaks), vec![1]);
        let mut open = EventDetector::new(0.9, 0);
        assert_eq!(feed(&mut open, &two_peaks), vec![1, 3]);
    }

    #[test]
    fn zero_norm_windows_break_runs_without_events() {
        let mut detector = EventDetector::new(0.5, 0);
        assert!(detector.step(0, Some(&[0.9])).unwrap().is_none());
        let emitted = detector.step(1, None).unwrap().unwrap();
        assert_eq!(emitted.step, 0);
        assert!(detector.step(2, None).unwrap().is_none());
        assert!(detector.flush().is_none());
    }
}
