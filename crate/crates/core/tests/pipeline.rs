mod common;

use common::{amplitude_spectrum, default_phantom, pearson_oracle, small_config, Uniform};
use respigate::eval::{agreement, odd_slice_experiment, signal_agreement};
use respigate::gating::{segment_heartbeats, select_beats, stack_iqr, GateOptions};
use respigate::pca::extract_v2;
use respigate::phantom::generate_phantom;
use respigate::preprocess::{FilterSpec, FirFilter};
use respigate::signcorrect::{chain_signs, com_curve, correct_signs, resolve_signs, filtered_com_curves, CorrectionOptions};
use respigate::types::{SignalStage, SliceSeries, SliceStack};
use respigate::Error;

#[test]
fn v2_tracks_ground_truth_on_every_slice() {
    let (stack, gt) = default_phantom();
    let modes = extract_v2(stack, &FilterSpec::default(), 2).unwrap();
    for (m, truth) in modes.iter().zip(&gt.resp_trace) {
        assert_eq!(m.v2.stage, SignalStage::RawV2);
        let r = pearson_oracle(&m.v2.values, truth);
        assert!(r.abs() >= 0.9, "slice {}: |r| = {}", m.slice_index, r.abs());
        let neg: Vec<f64> = m.v2.values.iter().map(|v| -v).collect();
        assert_eq!(pearson_oracle(&neg, truth).abs(), r.abs());
    }
}

#[test]
fn first_eigen_image_is_the_temporal_mean() {
    let (stack, _) = default_phantom();
    let modes = extract_v2(stack, &FilterSpec::default(), 2).unwrap();
    for (m, s) in modes.iter().zip(stack.slices()) {
        let r = pearson_oracle(&m.basis.eigen_images[0], &s.mean_image());
        assert!(r.abs() >= 0.999, "slice {}: {}", m.slice_index, r);
    }
}

#[test]
fn com_curve_peaks_at_the_breathing_frequency() {
    let (stack, _) = default_phantom();
    let dt = stack.slices()[0].frame_interval();
    let n = stack.slices()[0].frames();
    let bin_hz = 1.0 / (n as f64 * dt);
    for s in stack.slices() {
        let (c, _) = com_curve(s, None).unwrap();
        let mean = c.values.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = c.values.iter().map(|v| v - mean).collect();
        let spec = amplitude_spectrum(&centred);
        let peak = (1..spec.len()).max_by(|a, b| spec[*a].total_cmp(&spec[*b])).unwrap();
        let f = peak as f64 * bin_hz;
        assert!((f - 0.25).abs() <= bin_hz, "slice {}: peak at {f} Hz", s.slice_index());
    }
}

#[test]
fn corrected_signals_are_positive_with_high_mean() {
    let (stack, gt) = default_phantom();
    let (signals, report) = correct_signs(stack, &FilterSpec::default()).unwrap();
    assert!(signals.iter().all(|s| s.stage == SignalStage::GloballyCorrected));
    let rep = signal_agreement(&signals, &gt.resp_trace).unwrap();
    assert!(rep.all_positive, "{:?}", rep.per_slice_r);
    assert!(rep.mean_r >= 0.9, "mean {}", rep.mean_r);
    assert_eq!(report.per_slice_chain_sign.len(), stack.len());
    assert_eq!(report.pairwise_r.len(), stack.len() - 1);
    assert!(report.applied_global_sign == 1 || report.applied_global_sign == -1);
    assert!((1..=stack.len()).contains(&report.chosen_slice));
}

#[test]
fn chained_signals_share_one_sign_under_random_flips() {
    let (stack, gt) = default_phantom();
    let modes = extract_v2(stack, &FilterSpec::default(), 2).unwrap();
    let mut rng = Uniform(17);
    for _ in 0..20 {
        let flipped: Vec<_> = modes
            .iter()
            .map(|m| {
                let sign = if rng.next() < 0.5 { -1.0 } else { 1.0 };
                let image: Vec<f64> = m.eigen_image2().iter().map(|v| sign * v).collect();
                let mut v2 = m.v2.clone();
                v2.values.iter_mut().for_each(|v| *v *= sign);
                (image, v2)
            })
            .collect();
        let images: Vec<&[f64]> = flipped.iter().map(|(i, _)| i.as_slice()).collect();
        let v2s: Vec<_> = flipped.iter().map(|(_, v)| v.clone()).collect();
        let chain = chain_signs(&images, &v2s, 0.2).unwrap();
        // slices breathe with their own phase, so only the sign against each truth is shared
        let r: Vec<f64> = chain.signals.iter().zip(&gt.resp_trace).map(|(c, t)| pearson_oracle(&c.values, t)).collect();
        let first = r[0].signum();
        assert!(r.iter().all(|v| v.signum() == first), "{r:?}");
    }
}

#[test]
fn negating_every_raw_v2_leaves_the_output_unchanged() {
    let (stack, _) = default_phantom();
    let spec = FilterSpec::default();
    let modes = extract_v2(stack, &spec, 2).unwrap();
    let (curves, _) = filtered_com_curves(stack, &spec).unwrap();
    let (base, _) = resolve_signs(&modes, &curves, 0.2).unwrap();
    let negated: Vec<_> = modes
        .iter()
        .cloned()
        .map(|mut m| {
            m.v2.values.iter_mut().for_each(|v| *v = -*v);
            m.basis.vectors[1].iter_mut().for_each(|v| *v = -*v);
            m.basis.eigen_images[1].iter_mut().for_each(|v| *v = -*v);
            m
        })
        .collect();
    let (again, _) = resolve_signs(&negated, &curves, 0.2).unwrap();
    assert_eq!(base, again);
}

#[test]
fn default_phantom_yields_ten_to_thirteen_beats() {
    let (stack, gt) = default_phantom();
    for (s, t) in stack.slices().iter().zip(&gt.trigger_frames) {
        let beats = segment_heartbeats(s.slice_index(), t, s.frames()).unwrap();
        assert!((10..=13).contains(&beats.len()), "{} beats", beats.len());
    }
}

#[test]
fn selected_beats_sit_at_the_ground_truth_extremes() {
    let (stack, gt) = default_phantom();
    let (signals, _) = correct_signs(stack, &FilterSpec::default()).unwrap();
    let opts = GateOptions {
        stability_limit: Some(stack_iqr(&signals)),
        ..GateOptions::default()
    };
    for (j, s) in signals.iter().enumerate() {
        let beats = segment_heartbeats(s.slice_index, &gt.trigger_frames[j], s.values.len()).unwrap();
        let sel = select_beats(s, &beats, &opts).unwrap();
        let truth = &gt.resp_trace[j];
        let mean = |a: usize, b: usize| truth[a - 1..b].iter().sum::<f64>() / (b + 1 - a) as f64;
        let means: Vec<f64> = beats.iter().map(|b| mean(b.start_frame, b.end_frame)).collect();
        let ee = mean(sel.ee.start_frame, sel.ee.end_frame);
        let ei = mean(sel.ei.start_frame, sel.ei.end_frame);
        let k = means.len() as f64;
        let above = means.iter().filter(|m| **m > ee).count() as f64;
        let below = means.iter().filter(|m| **m < ei).count() as f64;
        assert!(above < 0.2 * k, "slice {}: EE has {above} beats above", j + 1);
        assert!(below < 0.2 * k, "slice {}: EI has {below} beats below", j + 1);
    }
}

#[test]
fn end_to_end_agreement_is_high() {
    let (stack, gt) = default_phantom();
    let report = odd_slice_experiment(stack, gt, &CorrectionOptions::default()).unwrap();
    assert!(report.full.all_positive && report.odd.all_positive);
    assert!(report.full.mean_r >= 0.9);
    assert_eq!(report.full.per_slice_r.len(), 10);
    assert_eq!(report.odd.per_slice_r.len(), 5);
}

#[test]
fn odd_slice_experiment_needs_two_odd_slices() {
    let cfg = small_config();
    let three = respigate::phantom::PhantomConfig { slices: 3, ..cfg.clone() };
    let (stack, gt) = generate_phantom(&three).unwrap();
    let rep = odd_slice_experiment(&stack, &gt, &CorrectionOptions::default()).unwrap();
    assert_eq!(rep.odd.per_slice_r.len(), 2);

    let two = respigate::phantom::PhantomConfig { slices: 2, ..cfg };
    let (stack, gt) = generate_phantom(&two).unwrap();
    assert!(matches!(
        odd_slice_experiment(&stack, &gt, &CorrectionOptions::default()),
        Err(Error::SingleSlice)
    ));
}

#[test]
fn duplicated_slices_give_matching_full_and_odd_reports() {
    let cfg = respigate::phantom::PhantomConfig { slices: 1, ..small_config() };
    let (one, gt1) = generate_phantom(&cfg).unwrap();
    let s = &one.slices()[0];
    let copies: Vec<SliceSeries> = (1..=10)
        .map(|j| {
            SliceSeries::new(
                j,
                s.height(),
                s.width(),
                s.frames(),
                s.data().to_vec(),
                s.frame_interval(),
                s.si_axis(),
                s.si_orientation(),
            )
            .unwrap()
        })
        .collect();
    let stack = SliceStack::new(copies);
    let mut gt = gt1.clone();
    gt.resp_trace = vec![gt1.resp_trace[0].clone(); 10];
    let rep = odd_slice_experiment(&stack, &gt, &CorrectionOptions::default()).unwrap();
    assert_eq!(rep.full.mean_r, rep.odd.mean_r);
    assert_eq!(rep.full.min_r, rep.odd.min_r);
    assert_eq!(rep.full.max_r, rep.odd.max_r);
    assert_eq!(rep.full.all_positive, rep.odd.all_positive);
    assert!(rep.full.per_slice_r.iter().all(|r| *r == rep.full.per_slice_r[0]));
}

#[test]
fn agreement_with_references_scaled_and_permuted() {
    let (stack, gt) = default_phantom();
    let (signals, _) = correct_signs(stack, &FilterSpec::default()).unwrap();
    let values: Vec<Vec<f64>> = signals.iter().map(|s| s.values.clone()).collect();
    let base = agreement(&values, &gt.resp_trace).unwrap();

    let mut scaled = gt.resp_trace.clone();
    scaled[0].iter_mut().for_each(|v| *v *= 3.5);
    scaled[1].iter_mut().for_each(|v| *v *= -2.0);
    let rep = agreement(&values, &scaled).unwrap();
    assert!((rep.per_slice_r[0] - base.per_slice_r[0]).abs() < 1e-12);
    assert!((rep.per_slice_r[1] + base.per_slice_r[1]).abs() < 1e-12);
    assert!(!rep.all_positive);

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.reverse();
    let pv: Vec<Vec<f64>> = order.iter().map(|&i| values[i].clone()).collect();
    let pr: Vec<Vec<f64>> = order.iter().map(|&i| gt.resp_trace[i].clone()).collect();
    let perm = agreement(&pv, &pr).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(perm.per_slice_r[k], base.per_slice_r[i]);
    }
    assert_eq!(perm.min_r, base.min_r);
    assert_eq!(perm.max_r, base.max_r);
}

#[test]
fn filtering_the_series_commutes_with_projection() {
    let (stack, _) = default_phantom();
    let s = &stack.slices()[3];
    let f = FirFilter::design(&FilterSpec::default(), s.frame_interval()).unwrap();
    let filtered = respigate::preprocess::lowpass_temporal(s, &FilterSpec::default()).unwrap();
    let (a, _) = com_curve(s, Some(&f)).unwrap();
    let (b, _) = com_curve(&filtered, None).unwrap();
    let differing = a.values.iter().zip(&b.values).filter(|(x, y)| x != y).count();
    // rounding can move a median across a row boundary only where the cumulative sum is balanced
    assert!(differing <= 2, "{differing} frames differ");
}
