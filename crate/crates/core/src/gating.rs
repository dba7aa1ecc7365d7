//! Heartbeat selection at the respiratory extremes.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RespiratorySignal, SignalStage};

/// One heartbeat: frames `start_frame..=end_frame`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heartbeat {
    pub slice_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Mean corrected respiratory signal over the beat; zero until scored.
    pub resp_score: f64,
}

impl Heartbeat {
    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        self.start_frame..=self.end_frame
    }

    fn samples<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.start_frame - 1..self.end_frame]
    }
}

/// Which extreme of the corrected signal is labelled end-expiration.
///
/// Corrected signals grow as mass moves inferior, so physiologically the
/// maximum is inspiration; the label is configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    MaxIsEe,
    MaxIsEi,
}

impl Convention {
    pub fn swapped(self) -> Self {
        match self {
            Convention::MaxIsEe => Convention::MaxIsEi,
            Convention::MaxIsEi => Convention::MaxIsEe,
        }
    }
}

/// Splits a slice into beats between consecutive triggers; frames before the
/// first and from the last trigger on are dropped.
pub fn segment_heartbeats(slice_index: usize, triggers: &[usize], n: usize) -> Result<Vec<Heartbeat>> {
    if triggers.len() < 2 {
        return Err(Error::TooFewTriggers(triggers.len()));
    }
    if let Some(bad) = triggers.iter().find(|&&t| t < 1 || t > n) {
        return Err(Error::InvalidTriggers(format!(
            "trigger frame {bad} outside 1..={n}"
        )));
    }
    if triggers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidTriggers(
            "trigger frames must be strictly increasing".into(),
        ));
    }
    Ok(triggers
        .windows(2)
        .map(|w| Heartbeat {
            slice_index,
            start_frame: w[0],
            end_frame: w[1] - 1,
            resp_score: 0.0,
        })
        .collect())
}

/// Interquartile range of all values of all signals (linear interpolation between order statistics).
pub fn stack_iqr(signals: &[RespiratorySignal]) -> f64 {
    let mut all: Vec<f64> = signals.iter().flat_map(|s| s.values.iter().copied()).collect();
    if all.is_empty() {
        return 0.0;
    }
    all.sort_by(f64::total_cmp);
    quantile(&all, 0.75) - quantile(&all, 0.25)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOptions {
    pub convention: Convention,
    /// Maximal in-beat signal range (usually [`stack_iqr`]); `None` disables the check.
    pub stability_limit: Option<f64>,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            convention: Convention::MaxIsEe,
            stability_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSelection {
    pub ee: Heartbeat,
    pub ei: Heartbeat,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Picks one end-expiration and one end-inspiration beat from a corrected signal.
pub fn select_beats(signal: &RespiratorySignal, beats: &[Heartbeat], opts: &GateOptions) -> Result<BeatSelection> {
    if signal.stage != SignalStage::GloballyCorrected {
        return Err(Error::WrongStage(signal.stage.to_string()));
    }
    if beats.len() < 2 {
        return Err(Error::TooFewBeats(beats.len()));
    }
    let n = signal.values.len();
    if let Some(b) = beats
        .iter()
        .find(|b| b.start_frame < 1 || b.end_frame > n || b.start_frame > b.end_frame)
    {
        return Err(Error::InvalidTriggers(format!(
            "beat {}..={} outside the {n}-frame signal",
            b.start_frame, b.end_frame
        )));
    }

    let scored: Vec<Heartbeat> = beats
        .iter()
        .map(|b| {
            let v = b.samples(&signal.values);
            Heartbeat {
                resp_score: v.iter().sum::<f64>() / v.len() as f64,
                ..*b
            }
        })
        .collect();
    let stable = |b: &Heartbeat| match opts.stability_limit {
        None => true,
        Some(limit) => {
            let v = b.samples(&signal.values);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            max - min <= limit
        }
    };

    // stable sorts keep earlier beats first among equal scores
    let mut desc: Vec<&Heartbeat> = scored.iter().collect();
    desc.sort_by(|a, b| b.resp_score.total_cmp(&a.resp_score));
    let mut asc: Vec<&Heartbeat> = scored.iter().collect();
    asc.sort_by(|a, b| a.resp_score.total_cmp(&b.resp_score));
    let highest = desc
        .into_iter()
        .find(|b| stable(b))
        .ok_or(Error::AllBeatsTransitional(signal.slice_index))?;
    let lowest = asc
        .into_iter()
        .find(|b| stable(b))
        .ok_or(Error::AllBeatsTransitional(signal.slice_index))?;

    let (ee, ei) = match opts.convention {
        Convention::MaxIsEe => (*highest, *lowest),
        Convention::MaxIsEi => (*lowest, *highest),
    };
    let mut warnings = Vec::new();
    if ee.start_frame == ei.start_frame {
        let msg = format!(
            "slice {}: beat scores tie, the same beat is both EE and EI",
            signal.slice_index
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(BeatSelection {
        ee,
        ei,
        scores: scored.iter().map(|b| b.resp_score).collect(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corrected(values: Vec<f64>) -> RespiratorySignal {
        RespiratorySignal {
            slice_index: 1,
            values,
            stage: SignalStage::GloballyCorrected,
        }
    }

    #[test]
    fn segments_between_triggers() {
        let beats = segment_heartbeats(1, &[1, 21, 41], 60).unwrap();
        let spans: Vec<_> = beats.iter().map(|b| (b.start_frame, b.end_frame)).collect();
        assert_eq!(spans, vec![(1, 20), (21, 40)]);
        let beats = segment_heartbeats(1, &[5, 25], 30).unwrap();
        assert_eq!(beats.len(), 1);
        assert_eq!((beats[0].start_frame, beats[0].end_frame), (5, 24));
    }

    #[test]
    fn trigger_errors() {
        assert!(matches!(segment_heartbeats(1, &[3], 10), Err(Error::TooFewTriggers(1))));
        assert!(matches!(segment_heartbeats(1, &[0, 4], 10), Err(Error::InvalidTriggers(_))));
        assert!(matches!(segment_heartbeats(1, &[3, 11], 10), Err(Error::InvalidTriggers(_))));
        assert!(matches!(segment_heartbeats(1, &[5, 5], 10), Err(Error::InvalidTriggers(_))));
    }

    #[test]
    fn picks_extremes() {
        let sig = corrected(vec![0.3, 0.3, -0.3, -0.3]);
        let beats = [
            Heartbeat { slice_index: 1, start_frame: 1, end_frame: 2, resp_score: 0.0 },
            Heartbeat { slice_index: 1, start_frame: 3, end_frame: 4, resp_score: 0.0 },
        ];
        let sel = select_beats(&sig, &beats, &GateOptions::default()).unwrap();
        assert_eq!(sel.ee.start_frame, 1);
        assert_eq!(sel.ei.start_frame, 3);
        assert_eq!(sel.scores, vec![0.3, -0.3]);
        assert!(sel.warnings.is_empty());
    }

    #[test]
    fn ties_choose_the_earliest_beat() {
        let sig = corrected(vec![0.5; 9]);
        let beats = segment_heartbeats(1, &[1, 4, 7, 9], 9).unwrap();
        let sel = select_beats(&sig, &beats, &GateOptions::default()).unwrap();
        assert_eq!(sel.ee.start_frame, 1);
        assert_eq!(sel.ei.start_frame, 1);
        assert_eq!(sel.warnings.len(), 1);
    }

    #[test]
    fn negation_with_swapped_convention_is_symmetric() {
        let values: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin() + 0.01 * i as f64).collect();
        let beats = segment_heartbeats(1, &[1, 11, 21, 31, 41, 51], 60).unwrap();
        let opts = GateOptions::default();
        let a = select_beats(&corrected(values.clone()), &beats, &opts).unwrap();
        let neg = corrected(values.iter().map(|v| -v).collect());
        let b = select_beats(
            &neg,
            &beats,
            &GateOptions {
                convention: opts.convention.swapped(),
                ..opts
            },
        )
        .unwrap();
        assert_eq!(a.ee.frames(), b.ee.frames());
        assert_eq!(a.ei.frames(), b.ei.frames());
    }

    #[test]
    fn stability_filter_skips_transitional_beats() {
        // beat 2 has the highest mean but spans a large swing
        let mut v = vec![0.0; 30];
        v[10..20].copy_from_slice(&[-1.0, 2.0, -1.0, 2.0, -1.0, 2.0, -1.0, 2.0, -1.0, 2.0]);
        v[20..30].copy_from_slice(&[0.4; 10]);
        let beats = segment_heartbeats(1, &[1, 11, 21, 30], 30).unwrap();
        let sig = corrected(v);
        let open = select_beats(&sig, &beats, &GateOptions::default()).unwrap();
        assert_eq!(open.ee.start_frame, 11);
        let strict = GateOptions {
            stability_limit: Some(1.0),
            ..GateOptions::default()
        };
        let sel = select_beats(&sig, &beats, &strict).unwrap();
        assert_eq!(sel.ee.start_frame, 21);
        let none = GateOptions {
            stability_limit: Some(0.0),
            ..GateOptions::default()
        };
        // flat beats still pass a zero limit; the swinging one never does
        assert!(select_beats(&sig, &beats, &none).is_ok());
        let all_swing = corrected((0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        assert!(matches!(
            select_beats(&all_swing, &beats, &strict),
            Err(Error::AllBeatsTransitional(1))
        ));
    }

    #[test]
    fn requires_corrected_signal_and_two_beats() {
        let beats = segment_heartbeats(1, &[1, 5, 9], 10).unwrap();
        let raw = RespiratorySignal::raw(1, vec![0.0; 10]);
        assert!(matches!(
            select_beats(&raw, &beats, &GateOptions::default()),
            Err(Error::WrongStage(_))
        ));
        assert!(matches!(
            select_beats(&corrected(vec![0.0; 10]), &beats[..1], &GateOptions::default()),
            Err(Error::TooFewBeats(1))
        ));
    }

    #[test]
    fn iqr_of_known_values() {
        let s = corrected((1..=9).map(f64::from).collect());
        // quartiles 3 and 7
        assert_eq!(stack_iqr(&[s]), 4.0);
    }
}
