//! Alarm rules over verdict streams and dataset-level deviation decisions.
//!
//! Per-instance verdicts are too noisy to act on alone; an alarm fires only
//! when enough recent instances are anomalous: 3 in a row, 3 of the last 5,
//! or 3 of the last 10. After an alarm the window is cleared so each alarm
//! reflects fresh evidence. A whole test set is declared a meaningful
//! deviation when its anomalous fraction exceeds the configured acceptance
//! rate.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::crossfeat::Verdict;
use crate::error::{Error, Result};

/// The supported anomaly-acceptance rates, most tolerant last.
pub const ACCEPTANCE_RATES: [f64; 5] = [0.05, 0.10, 0.15, 0.20, 0.25];

/// Which alarm rule fired, most specific first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlarmRule {
    ThreeConsecutive,
    ThreeOfFive,
    ThreeOfTen,
}

impl AlarmRule {
    pub fn token(self) -> &'static str {
        match self {
            AlarmRule::ThreeConsecutive => "three_consecutive",
            AlarmRule::ThreeOfFive => "three_of_five",
            AlarmRule::ThreeOfTen => "three_of_ten",
        }
    }
}

impl FromStr for AlarmRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "three_consecutive" => Ok(AlarmRule::ThreeConsecutive),
            "three_of_five" => Ok(AlarmRule::ThreeOfFive),
            "three_of_ten" => Ok(AlarmRule::ThreeOfTen),
            other => Err(format!("unknown alarm rule `{other}`")),
        }
    }
}

impl fmt::Display for AlarmRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// An emitted alarm event.
#[derive(Debug, Clone, PartialEq)]
pub struct Alarm {
    pub rule: AlarmRule,
    /// Aggregation-window end of the verdict that triggered the alarm.
    pub window_end_ts: u64,
    /// Anomalous share of the evidence window at firing time, in (0, 1].
    pub rate: f64,
    /// Whether a version-update marker was seen in the stream's metadata
    /// before this alarm.
    pub version_update_seen: bool,
}

/// Sliding evidence window over the most recent verdicts of one app.
#[derive(Debug, Clone, Default)]
pub struct AlarmState {
    window: VecDeque<bool>,
    run: usize,
    version_update_seen: bool,
}

impl AlarmState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records that the monitored app had a version update; carried into
    /// subsequent alarms as context.
    pub fn mark_version_update(&mut self) {
        self.version_update_seen = true;
    }

    /// Feeds one verdict; returns the alarm if a rule fired at this step.
    pub fn update(&mut self, verdict: &Verdict, window_end_ts: u64) -> Option<Alarm> {
        self.push(verdict.is_anomalous, window_end_ts)
    }

    /// Boolean-level variant of [`AlarmState::update`].
    pub fn push(&mut self, is_anomalous: bool, window_end_ts: u64) -> Option<Alarm> {
        self.window.push_back(is_anomalous);
        if self.window.len() > 10 {
            self.window.pop_front();
        }
        self.run = if is_anomalous { self.run + 1 } else { 0 };

        let count = |n: usize| self.window.iter().rev().take(n).filter(|&&a| a).count();
        let rule = if self.run >= 3 {
            Some(AlarmRule::ThreeConsecutive)
        } else if count(5) >= 3 {
            Some(AlarmRule::ThreeOfFive)
        } else if count(10) >= 3 {
            Some(AlarmRule::ThreeOfTen)
        } else {
            None
        };

        rule.map(|rule| {
            let anomalous = self.window.iter().filter(|&&a| a).count();
            let rate = anomalous as f64 / self.window.len() as f64;
            // Clear so one burst cannot re-fire on every subsequent step.
            self.window.clear();
            self.run = 0;
            Alarm { rule, window_end_ts, rate, version_update_seen: self.version_update_seen }
        })
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn consecutive_run(&self) -> usize {
        self.run
    }
}

/// Dataset-level judgement: does the anomalous fraction exceed what user
/// variation is allowed to explain?
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDecision {
    pub detected_anomalous_fraction: f64,
    pub acceptance_rate: f64,
    pub is_meaningful_deviation: bool,
}

/// Declares a meaningful deviation when the anomalous fraction strictly
/// exceeds the acceptance rate. Order of verdicts is irrelevant.
pub fn dataset_decision(verdicts: &[Verdict], acceptance_rate: f64) -> Result<DatasetDecision> {
    decision_from_flags(verdicts.iter().map(|v| v.is_anomalous), acceptance_rate)
}

/// Boolean-level variant of [`dataset_decision`].
pub fn decision_from_flags(
    flags: impl IntoIterator<Item = bool>,
    acceptance_rate: f64,
) -> Result<DatasetDecision> {
    if !(0.0..=1.0).contains(&acceptance_rate) {
        return Err(Error::invalid("acceptance rate must be in [0, 1]"));
    }
    let mut total = 0usize;
    let mut anomalous = 0usize;
    for flag in flags {
        total += 1;
        if flag {
            anomalous += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("cannot decide over an empty verdict list"));
    }
    let fraction = anomalous as f64 / total as f64;
    Ok(DatasetDecision {
        detected_anomalous_fraction: fraction,
        acceptance_rate,
        is_meaningful_deviation: fraction > acceptance_rate,
    })
}

/// One alarm-log line: `timestamp<TAB>app_id<TAB>rule<TAB>rate`.
pub fn format_alarm_line(alarm: &Alarm, app_id: &str) -> String {
    format!("{}\t{}\t{}\t{:.4}", alarm.window_end_ts, app_id, alarm.rule.token(), alarm.rate)
}

pub fn write_alarm_log(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feed(sequence: &[bool]) -> Vec<(usize, AlarmRule)> {
        let mut state = AlarmState::new();
        let mut fired = Vec::new();
        for (step, &anomalous) in sequence.iter().enumerate() {
            if let Some(alarm) = state.push(anomalous, (step as u64 + 1) * 60) {
                fired.push((step + 1, alarm.rule));
            }
        }
        fired
    }

    #[test]
    fn three_consecutive_fires_at_step_three() {
        let fired = feed(&[true, true, true]);
        assert_eq!(fired, vec![(3, AlarmRule::ThreeConsecutive)]);
    }

    #[test]
    fn alternating_pattern_fires_three_of_five() {
        let fired = feed(&[true, false, true, false, true]);
        assert_eq!(fired, vec![(5, AlarmRule::ThreeOfFive)]);
    }

    #[test]
    fn sparse_anomalies_fire_three_of_ten() {
        let fired = feed(&[true, false, false, false, true, false, false, false, true]);
        assert_eq!(fired, vec![(9, AlarmRule::ThreeOfTen)]);
    }

    #[test]
    fn all_normal_never_fires() {
        assert!(feed(&[false; 64]).is_empty());
    }

    #[test]
    fn no_alarm_before_the_third_verdict() {
        for a in [false, true] {
            for b in [false, true] {
                assert!(feed(&[a, b]).is_empty());
            }
        }
    }

    #[test]
    fn the_most_specific_rule_is_reported() {
        // Three consecutive also satisfies 3-of-5 and 3-of-10.
        let fired = feed(&[false, false, true, true, true]);
        assert_eq!(fired, vec![(5, AlarmRule::ThreeConsecutive)]);
    }

    #[test]
    fn alarm_clears_the_window() {
        // After the first alarm the burst is forgotten; the next alarm needs
        // three fresh anomalies.
        let fired = feed(&[true, true, true, true, true, true]);
        assert_eq!(
            fired,
            vec![(3, AlarmRule::ThreeConsecutive), (6, AlarmRule::ThreeConsecutive)]
        );
    }

    #[test]
    fn alarm_rate_reflects_the_window() {
        let mut state = AlarmState::new();
        assert!(state.push(true, 60).is_none());
        assert!(state.push(false, 120).is_none());
        assert!(state.push(true, 180).is_none());
        assert!(state.push(false, 240).is_none());
        let alarm = state.push(true, 300).expect("three of five");
        assert_eq!(alarm.rule, AlarmRule::ThreeOfFive);
        assert!((alarm.rate - 0.6).abs() < 1e-12);
        assert_eq!(alarm.window_end_ts, 300);
        assert_eq!(state.window_len(), 0);
    }

    #[test]
    fn version_update_marker_is_carried() {
        let mut state = AlarmState::new();
        state.mark_version_update();
        state.push(true, 60);
        state.push(true, 120);
        let alarm = state.push(true, 180).unwrap();
        assert!(alarm.version_update_seen);
    }

    #[test]
    fn decision_arithmetic() {
        let not_meaningful = decision_from_flags(
            (0..100).map(|_| false),
            0.20,
        )
        .unwrap();
        assert!(!not_meaningful.is_meaningful_deviation);

        let meaningful =
            decision_from_flags((0..100).map(|i| i < 25), 0.20).unwrap();
        assert!((meaningful.detected_anomalous_fraction - 0.25).abs() < 1e-12);
        assert!(meaningful.is_meaningful_deviation);

        // Fraction exactly at the rate is not a deviation.
        let boundary = decision_from_flags((0..100).map(|i| i < 20), 0.20).unwrap();
        assert!(!boundary.is_meaningful_deviation);
    }

    #[test]
    fn full_anomaly_set_deviates_at_every_supported_rate() {
        for rate in ACCEPTANCE_RATES {
            let d = decision_from_flags((0..100).map(|_| true), rate).unwrap();
            assert!(d.is_meaningful_deviation);
        }
    }

    #[test]
    fn empty_verdict_list_is_rejected() {
        assert!(decision_from_flags(std::iter::empty(), 0.2).is_err());
    }

    #[test]
    fn decision_is_order_invariant() {
        let flags = [true, false, true, true, false, false, false, true];
        let mut reversed = flags;
        reversed.reverse();
        let a = decision_from_flags(flags, 0.25).unwrap();
        let b = decision_from_flags(reversed, 0.25).unwrap();
        assert_eq!(a, b);
    }

    /// Straight-line re-evaluation of the rules from the recorded history;
    /// used to cross-check the incremental ring buffer.
    fn oracle(sequence: &[bool]) -> Vec<(usize, AlarmRule)> {
        let mut since_clear: Vec<bool> = Vec::new();
        let mut fired = Vec::new();
        for (step, &a) in sequence.iter().enumerate() {
            since_clear.push(a);
            let window: Vec<bool> =
                since_clear.iter().rev().take(10).copied().rev().collect();
            let tail_run = window.iter().rev().take_while(|&&x| x).count();
            let last5 = window.iter().rev().take(5).filter(|&&x| x).count();
            let last10 = window.iter().filter(|&&x| x).count();
            let rule = if tail_run >= 3 {
                Some(AlarmRule::ThreeConsecutive)
            } else if last5 >= 3 {
                Some(AlarmRule::ThreeOfFive)
            } else if last10 >= 3 {
                Some(AlarmRule::ThreeOfTen)
            } else {
                None
            };
            if let Some(rule) = rule {
                fired.push((step + 1, rule));
                since_clear.clear();
            }
        }
        fired
    }

    #[test]
    fn matches_the_oracle_on_every_length_10_sequence() {
        for bits in 0..(1u32 << 10) {
            let sequence: Vec<bool> = (0..10).map(|i| bits & (1 << i) != 0).collect();
            assert_eq!(feed(&sequence), oracle(&sequence), "sequence {sequence:?}");
        }
    }
}
