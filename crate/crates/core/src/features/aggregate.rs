//! Window aggregation of samples into feature vectors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::NetworkEvent;
use super::extract::extract_samples;
use super::{
    ActiveAgg, AggNetState, AggregatedVector, FgAgg, NetworkSample, PipelineConfig, SENTINEL,
};

/// Partitions the gaps between consecutive event times at `boundary_secs`:
/// gaps strictly below the boundary are inner, gaps at or above it are
/// outer. The first event produces no gap.
pub fn split_intervals(event_times: &[f64], boundary_secs: f64) -> (Vec<f64>, Vec<f64>) {
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    for pair in event_times.windows(2) {
        let gap = pair[1] - pair[0];
        if gap < boundary_secs {
            inner.push(gap);
        } else {
            outer.push(gap);
        }
    }
    (inner, outer)
}

/// Running per-direction interval statistics over the whole monitoring
/// session.
#[derive(Debug, Clone, Default)]
struct DirectionState {
    last_event: Option<u64>,
    inner_sum: f64,
    inner_n: u64,
    outer_sum: f64,
    outer_n: u64,
}

impl DirectionState {
    fn observe(&mut self, times: &[u64], boundary: f64) {
        for &t in times {
            if let Some(prev) = self.last_event {
                let gap = (t - prev) as f64;
                if gap < boundary {
                    self.inner_sum += gap;
                    self.inner_n += 1;
                } else {
                    self.outer_sum += gap;
                    self.outer_n += 1;
                }
            }
            self.last_event = Some(t);
        }
    }

    fn inner_avg(&self) -> f64 {
        mean_or_sentinel(self.inner_sum, self.inner_n)
    }

    fn outer_avg(&self) -> f64 {
        mean_or_sentinel(self.outer_sum, self.outer_n)
    }
}

fn mean_or_sentinel(sum: f64, n: u64) -> f64 {
    if n == 0 {
        SENTINEL
    } else {
        sum / n as f64
    }
}

/// Per-(app, trace) accumulator threaded through [`aggregate_window`] calls:
/// global interval averages and the previous window's time totals.
#[derive(Debug, Clone, Default)]
pub struct GlobalAccumulator {
    app_id: Option<String>,
    send: DirectionState,
    recv: DirectionState,
    prev_fg_total: u64,
    prev_bg_total: u64,
}

impl GlobalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }
}

fn stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, f64, f64) {
    let mut n = 0u64;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values.clone() {
        n += 1;
        sum += v;
        min = min.min(v);
        max = max.max(v);
    }
    debug_assert!(n > 0);
    let avg = sum / n as f64;
    // Population standard deviation: windows are complete populations of
    // their samples.
    let var = values.map(|v| (v - avg) * (v - avg)).sum::<f64>() / n as f64;
    (avg, var.sqrt(), min, max)
}

/// Aggregates one window of samples (all for one app, in time order) into a
/// feature vector, updating the running global state.
///
/// Local interval averages use only this window's transfer activity; global
/// ones average over everything seen since monitoring start. Categorical
/// features become `mixed` when the window saw more than one distinct value.
pub fn aggregate_window(
    samples: &[NetworkSample],
    acc: &mut GlobalAccumulator,
    config: &PipelineConfig,
) -> Result<AggregatedVector> {
    config.validate()?;
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty window"))?;
    if samples.iter().any(|s| s.app_id != first.app_id) {
        return Err(Error::invalid("window spans multiple apps"));
    }
    match &acc.app_id {
        Some(app) if *app != first.app_id => {
            return Err(Error::invalid(format!(
                "accumulator belongs to app `{app}`, got samples for `{}`",
                first.app_id
            )));
        }
        Some(_) => {}
        None => acc.app_id = Some(first.app_id.clone()),
    }
    if samples.windows(2).any(|w| w[0].window_end_ts >= w[1].window_end_ts) {
        return Err(Error::invalid("window samples must be in increasing time order"));
    }
    let last = samples.last().expect("non-empty");

    let (avg_sent_bytes, std_sent_bytes, min_sent_bytes, max_sent_bytes) =
        stats(samples.iter().map(|s| s.sent_bytes as f64));
    let (avg_recv_bytes, std_recv_bytes, min_recv_bytes, max_recv_bytes) =
        stats(samples.iter().map(|s| s.recv_bytes as f64));
    let (avg_sent_pct, std_sent_pct, min_sent_pct, max_sent_pct) =
        stats(samples.iter().map(|s| s.sent_pct));
    let (avg_recv_pct, std_recv_pct, min_recv_pct, max_recv_pct) =
        stats(samples.iter().map(|s| s.recv_pct));

    let window_sent: u64 = samples.iter().map(|s| s.sent_bytes).sum();
    let window_recv: u64 = samples.iter().map(|s| s.recv_bytes).sum();
    let total = window_sent + window_recv;
    let (pct_sent_bytes, pct_recv_bytes) = if total == 0 {
        (0.0, 0.0)
    } else {
        let sent = 100.0 * window_sent as f64 / total as f64;
        (sent, 100.0 - sent)
    };

    let boundary = config.interval_boundary_secs;
    let send_times: Vec<u64> = samples
        .iter()
        .filter(|s| s.sent_bytes > 0)
        .map(|s| s.window_end_ts)
        .collect();
    let recv_times: Vec<u64> = samples
        .iter()
        .filter(|s| s.recv_bytes > 0)
        .map(|s| s.window_end_ts)
        .collect();

    let as_f64 = |times: &[u64]| times.iter().map(|&t| t as f64).collect::<Vec<f64>>();
    let (send_inner_local, send_outer_local) = split_intervals(&as_f64(&send_times), boundary);
    let (recv_inner_local, recv_outer_local) = split_intervals(&as_f64(&recv_times), boundary);
    let local_avg = |gaps: &[f64]| mean_or_sentinel(gaps.iter().sum(), gaps.len() as u64);

    acc.send.observe(&send_times, boundary);
    acc.recv.observe(&recv_times, boundary);

    let net_state = single_or_mixed(
        samples.iter().map(|s| AggNetState::from_sample(s.net_state)),
        AggNetState::Mixed,
    );
    let app_state1 = single_or_mixed(
        samples.iter().map(|s| if s.fg_state { FgAgg::Foreground } else { FgAgg::Background }),
        FgAgg::Mixed,
    );
    let app_state2 = single_or_mixed(
        samples
            .iter()
            .map(|s| if s.active_state { ActiveAgg::Active } else { ActiveAgg::Nonactive }),
        ActiveAgg::Mixed,
    );

    let mins_since = |secs: i64| if secs < 0 { SENTINEL } else { (secs / 60) as f64 };

    let fg_total = last.fg_time_total_secs;
    let bg_total = last.bg_time_total_secs;
    let fg_local = fg_total - acc.prev_fg_total;
    let bg_local = bg_total - acc.prev_bg_total;
    acc.prev_fg_total = fg_total;
    acc.prev_bg_total = bg_total;

    Ok(AggregatedVector {
        app_id: first.app_id.clone(),
        window_end_ts: last.window_end_ts,
        avg_sent_bytes,
        std_sent_bytes,
        min_sent_bytes,
        max_sent_bytes,
        avg_recv_bytes,
        std_recv_bytes,
        min_recv_bytes,
        max_recv_bytes,
        avg_sent_pct,
        std_sent_pct,
        min_sent_pct,
        max_sent_pct,
        avg_recv_pct,
        std_recv_pct,
        min_recv_pct,
        max_recv_pct,
        pct_sent_bytes,
        pct_recv_bytes,
        inner_avg_send_interval_local: local_avg(&send_inner_local),
        inner_avg_recv_interval_local: local_avg(&recv_inner_local),
        outer_avg_send_interval_local: local_avg(&send_outer_local),
        outer_avg_recv_interval_local: local_avg(&recv_outer_local),
        inner_avg_send_interval_global: acc.send.inner_avg(),
        inner_avg_recv_interval_global: acc.recv.inner_avg(),
        outer_avg_send_interval_global: acc.send.outer_avg(),
        outer_avg_recv_interval_global: acc.recv.outer_avg(),
        net_state,
        mins_since_last_send: mins_since(last.secs_since_last_send),
        mins_since_last_recv: mins_since(last.secs_since_last_recv),
        app_state1,
        app_state2,
        fg_time_total_secs: fg_total as f64,
        bg_time_total_secs: bg_total as f64,
        fg_time_local_secs: fg_local as f64,
        bg_time_local_secs: bg_local as f64,
        mins_since_last_active: if last.mins_since_last_active < 0 {
            SENTINEL
        } else {
            last.mins_since_last_active as f64
        },
        days_since_modified: last.days_since_modified as f64,
        label: None,
    })
}

fn single_or_mixed<T: PartialEq + Copy>(mut values: impl Iterator<Item = T>, mixed: T) -> T {
    let first = values.next().expect("non-empty window");
    if values.all(|v| v == first) {
        first
    } else {
        mixed
    }
}

/// Runs the full pipeline on a raw trace: extraction, then per-app window
/// aggregation. Vectors come back ordered by (window end, app id).
pub fn aggregate_trace(
    events: &[NetworkEvent],
    config: &PipelineConfig,
) -> Result<Vec<AggregatedVector>> {
    let samples = extract_samples(events, config)?;
    let mut by_app: BTreeMap<String, Vec<NetworkSample>> = BTreeMap::new();
    for sample in samples {
        by_app.entry(sample.app_id.clone()).or_default().push(sample);
    }
    let window = config.window_secs;
    let mut vectors = Vec::new();
    for (_, app_samples) in by_app {
        let mut acc = GlobalAccumulator::new();
        let mut start = 0;
        while start < app_samples.len() {
            let w = app_samples[start].window_end_ts.div_ceil(window);
            let mut end = start + 1;
            while end < app_samples.len() && app_samples[end].window_end_ts.div_ceil(window) == w {
                end += 1;
            }
            vectors.push(aggregate_window(&app_samples[start..end], &mut acc, config)?);
            start = end;
        }
    }
    vectors.sort_by(|a, b| (a.window_end_ts, &a.app_id).cmp(&(b.window_end_ts, &b.app_id)));
    Ok(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EventKind, NetState};

    fn sample(ts: u64, sent: u64, recv: u64) -> NetworkSample {
        NetworkSample {
            window_end_ts: ts,
            app_id: "a".into(),
            sent_bytes: sent,
            recv_bytes: recv,
            sent_pct: if sent > 0 { 100.0 } else { 0.0 },
            recv_pct: if recv > 0 { 100.0 } else { 0.0 },
            net_state: NetState::Wifi,
            secs_since_last_send: -1,
            secs_since_last_recv: -1,
            send_mode: super::super::TransferMode::Eventual,
            recv_mode: super::super::TransferMode::Eventual,
            fg_state: false,
            active_state: false,
            fg_time_total_secs: 0,
            bg_time_total_secs: ts,
            mins_since_last_active: -1,
            days_since_modified: 0,
        }
    }

    #[test]
    fn split_intervals_partitions_at_the_boundary() {
        let (inner, outer) = split_intervals(&[0.0, 10.0, 25.0, 70.0], 30.0);
        assert_eq!(inner, vec![10.0, 15.0]);
        assert_eq!(outer, vec![45.0]);
    }

    #[test]
    fn split_intervals_single_event_has_no_gap() {
        let (inner, outer) = split_intervals(&[0.0], 30.0);
        assert!(inner.is_empty() && outer.is_empty());
        let (inner, outer) = split_intervals(&[], 30.0);
        assert!(inner.is_empty() && outer.is_empty());
    }

    #[test]
    fn boundary_gap_counts_as_outer() {
        let (inner, outer) = split_intervals(&[0.0, 30.0], 30.0);
        assert!(inner.is_empty());
        assert_eq!(outer, vec![30.0]);
    }

    #[test]
    fn zero_traffic_window_aggregates_to_zeros() {
        let samples: Vec<_> = (1..=12).map(|k| sample(k * 5, 0, 0)).collect();
        let mut acc = GlobalAccumulator::new();
        let v = aggregate_window(&samples, &mut acc, &PipelineConfig::default()).unwrap();
        assert_eq!(v.avg_sent_bytes, 0.0);
        assert_eq!(v.std_recv_bytes, 0.0);
        assert_eq!(v.max_sent_bytes, 0.0);
        assert_eq!(v.pct_sent_bytes, 0.0);
        assert_eq!(v.pct_recv_bytes, 0.0);
        assert_eq!(v.inner_avg_send_interval_local, SENTINEL);
        assert_eq!(v.mins_since_last_send, SENTINEL);
    }

    #[test]
    fn byte_stats_use_the_population_formula() {
        let samples = vec![sample(5, 100, 0), sample(10, 300, 0)];
        let mut acc = GlobalAccumulator::new();
        let v = aggregate_window(&samples, &mut acc, &PipelineConfig::default()).unwrap();
        assert_eq!(v.avg_sent_bytes, 200.0);
        assert_eq!(v.min_sent_bytes, 100.0);
        assert_eq!(v.max_sent_bytes, 300.0);
        assert_eq!(v.std_sent_bytes, 100.0);
        assert_eq!(v.pct_sent_bytes, 100.0);
        assert_eq!(v.pct_recv_bytes, 0.0);
    }

    #[test]
    fn mixed_net_state_is_detected() {
        let mut samples = vec![sample(5, 0, 0), sample(10, 0, 0)];
        samples[1].net_state = NetState::Cellular;
        let mut acc = GlobalAccumulator::new();
        let v = aggregate_window(&samples, &mut acc, &PipelineConfig::default()).unwrap();
        assert_eq!(v.net_state, AggNetState::Mixed);
    }

    #[test]
    fn multiple_apps_in_a_window_are_rejected() {
        let mut samples = vec![sample(5, 0, 0), sample(10, 0, 0)];
        samples[1].app_id = "b".into();
        let mut acc = GlobalAccumulator::new();
        assert!(aggregate_window(&samples, &mut acc, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn global_intervals_run_across_windows() {
        let config = PipelineConfig::default();
        let mut acc = GlobalAccumulator::new();
        // Window 1: sends at 10 and 20 (gap 10, inner).
        let w1 = vec![sample(5, 0, 0), sample(10, 50, 0), sample(20, 50, 0), sample(60, 0, 0)];
        let v1 = aggregate_window(&w1, &mut acc, &config).unwrap();
        assert_eq!(v1.inner_avg_send_interval_global, 10.0);
        assert_eq!(v1.outer_avg_send_interval_global, SENTINEL);
        // Window 2: send at 80 (gap 60 from 20, outer).
        let w2 = vec![sample(80, 50, 0), sample(120, 0, 0)];
        let v2 = aggregate_window(&w2, &mut acc, &config).unwrap();
        assert_eq!(v2.inner_avg_send_interval_global, 10.0);
        assert_eq!(v2.outer_avg_send_interval_global, 60.0);
        // Local intervals in window 2 see only the one send: no gaps.
        assert_eq!(v2.inner_avg_send_interval_local, SENTINEL);
        assert_eq!(v2.outer_avg_send_interval_local, SENTINEL);
    }

    #[test]
    fn local_fg_time_is_the_per_window_delta() {
        let config = PipelineConfig::default();
        let mut acc = GlobalAccumulator::new();
        let mut w1: Vec<_> = (1..=12).map(|k| sample(k * 5, 0, 0)).collect();
        for s in &mut w1 {
            s.fg_time_total_secs = s.window_end_ts.min(30);
            s.bg_time_total_secs = s.window_end_ts - s.fg_time_total_secs;
        }
        let v1 = aggregate_window(&w1, &mut acc, &config).unwrap();
        assert_eq!(v1.fg_time_local_secs, 30.0);
        assert_eq!(v1.bg_time_local_secs, 30.0);
        let mut w2: Vec<_> = (13..=24).map(|k| sample(k * 5, 0, 0)).collect();
        for s in &mut w2 {
            s.fg_time_total_secs = 30;
            s.bg_time_total_secs = s.window_end_ts - 30;
        }
        let v2 = aggregate_window(&w2, &mut acc, &config).unwrap();
        assert_eq!(v2.fg_time_local_secs, 0.0);
        assert_eq!(v2.bg_time_local_secs, 60.0);
        assert_eq!(v2.fg_time_total_secs, 30.0);
    }

    #[test]
    fn aggregate_trace_runs_end_to_end() {
        let events = vec![
            NetworkEvent::state_change(0, "a", NetState::Wifi),
            NetworkEvent::new(10, "a", EventKind::Send, 100),
            NetworkEvent::new(70, "a", EventKind::Send, 200),
            NetworkEvent::new(130, "a", EventKind::Receive, 50),
        ];
        let vectors = aggregate_trace(&events, &PipelineConfig::default()).unwrap();
        assert_eq!(vectors.len(), 3);
        assert_eq!(vectors[0].window_end_ts, 60);
        assert_eq!(vectors[0].max_sent_bytes, 100.0);
        assert_eq!(vectors[1].window_end_ts, 120);
        assert_eq!(vectors[2].window_end_ts, 130);
    }
}
