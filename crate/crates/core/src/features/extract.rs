//! Periodic sample extraction from a raw event stream.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::{EventKind, NetState, NetworkEvent};
use super::{NetworkSample, PipelineConfig, TransferMode};

/// Converts an ordered event stream into one [`NetworkSample`] per
/// extraction period per app.
///
/// Period `k` covers timestamps in `((k-1)*P, k*P]`; events at `t == 0` set
/// initial state before the first period. Every app appearing anywhere in
/// the stream is monitored from trace start, so its foreground and
/// background totals always sum to the elapsed seconds.
pub fn extract_samples(
    events: &[NetworkEvent],
    config: &PipelineConfig,
) -> Result<Vec<NetworkSample>> {
    config.validate()?;
    if events.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err(Error::invalid("events must be sorted by timestamp"));
    }
    if events.is_empty() {
        return Ok(Vec::new());
    }

    let period = config.extraction_period_secs;
    let n_periods = events.last().expect("non-empty").timestamp.div_ceil(period);

    let mut trackers: BTreeMap<&str, AppTracker> = events
        .iter()
        .map(|e| (e.app_id.as_str(), AppTracker::default()))
        .collect();

    let mut samples = Vec::new();
    let mut cursor = 0;
    while cursor < events.len() && events[cursor].timestamp == 0 {
        let event = &events[cursor];
        trackers
            .get_mut(event.app_id.as_str())
            .expect("tracker exists")
            .apply(event);
        cursor += 1;
    }

    for k in 1..=n_periods {
        let end = k * period;
        for tracker in trackers.values_mut() {
            tracker.begin_period();
        }
        while cursor < events.len() && events[cursor].timestamp <= end {
            let event = &events[cursor];
            trackers
                .get_mut(event.app_id.as_str())
                .expect("tracker exists")
                .apply(event);
            cursor += 1;
        }
        let total_sent: u64 = trackers.values().map(|t| t.period_sent).sum();
        let total_recv: u64 = trackers.values().map(|t| t.period_recv).sum();
        for (app_id, tracker) in trackers.iter_mut() {
            samples.push(tracker.sample(app_id, end, total_sent, total_recv, config));
        }
    }
    Ok(samples)
}

/// Per-app running state across periods.
#[derive(Default)]
struct AppTracker {
    fg: bool,
    active: bool,
    net: Option<NetState>,
    last_send: Option<u64>,
    last_recv: Option<u64>,
    last_inactive: Option<u64>,
    fg_secs: u64,
    bg_secs: u64,
    accounted_to: u64,
    period_sent: u64,
    period_recv: u64,
}

impl AppTracker {
    fn begin_period(&mut self) {
        self.period_sent = 0;
        self.period_recv = 0;
    }

    fn apply(&mut self, event: &NetworkEvent) {
        match event.kind {
            EventKind::Send => {
                self.period_sent += event.bytes;
                self.last_send = Some(event.timestamp);
            }
            EventKind::Receive => {
                self.period_recv += event.bytes;
                self.last_recv = Some(event.timestamp);
            }
            EventKind::FgEnter => {
                self.account_to(event.timestamp);
                self.fg = true;
            }
            EventKind::FgExit => {
                self.account_to(event.timestamp);
                self.fg = false;
            }
            EventKind::Active => self.active = true,
            EventKind::Inactive => {
                self.active = false;
                self.last_inactive = Some(event.timestamp);
            }
            EventKind::NetStateChange => self.net = Some(event.net_state),
        }
    }

    fn account_to(&mut self, ts: u64) {
        let delta = ts - self.accounted_to;
        if self.fg {
            self.fg_secs += delta;
        } else {
            self.bg_secs += delta;
        }
        self.accounted_to = ts;
    }

    fn sample(
        &mut self,
        app_id: &str,
        end: u64,
        total_sent: u64,
        total_recv: u64,
        config: &PipelineConfig,
    ) -> NetworkSample {
        self.account_to(end);
        let since = |last: Option<u64>| last.map(|t| (end - t) as i64).unwrap_or(-1);
        let mode = |secs: i64| {
            if secs >= 0 && (secs as u64) < config.continuity_threshold_secs {
                TransferMode::Continuous
            } else {
                TransferMode::Eventual
            }
        };
        let secs_since_last_send = since(self.last_send);
        let secs_since_last_recv = since(self.last_recv);
        let pct = |part: u64, total: u64| {
            if total == 0 {
                0.0
            } else {
                100.0 * part as f64 / total as f64
            }
        };
        let mins_since_last_active = if self.active {
            0
        } else {
            match self.last_inactive {
                Some(t) => ((end - t) / 60) as i64,
                None => -1,
            }
        };
        NetworkSample {
            window_end_ts: end,
            app_id: app_id.to_owned(),
            sent_bytes: self.period_sent,
            recv_bytes: self.period_recv,
            sent_pct: pct(self.period_sent, total_sent),
            recv_pct: pct(self.period_recv, total_recv),
            net_state: self.net.unwrap_or(NetState::None),
            secs_since_last_send,
            secs_since_last_recv,
            send_mode: mode(secs_since_last_send),
            recv_mode: mode(secs_since_last_recv),
            fg_state: self.fg,
            active_state: self.active,
            fg_time_total_secs: self.fg_secs,
            bg_time_total_secs: self.bg_secs,
            mins_since_last_active,
            days_since_modified: config.days_since_modified,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NetworkEvent;

    fn send(ts: u64, app: &str, bytes: u64) -> NetworkEvent {
        NetworkEvent::new(ts, app, EventKind::Send, bytes)
    }

    #[test]
    fn empty_event_list_yields_no_samples() {
        let samples = extract_samples(&[], &PipelineConfig::default()).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn single_send_fills_bytes_and_full_percent() {
        let events = vec![send(2, "a", 500)];
        let samples = extract_samples(&events, &PipelineConfig::default()).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].window_end_ts, 5);
        assert_eq!(samples[0].sent_bytes, 500);
        assert_eq!(samples[0].sent_pct, 100.0);
        assert_eq!(samples[0].secs_since_last_send, 3);
        assert_eq!(samples[0].send_mode, TransferMode::Continuous);
        assert_eq!(samples[0].recv_pct, 0.0);
        assert_eq!(samples[0].secs_since_last_recv, -1);
        assert_eq!(samples[0].recv_mode, TransferMode::Eventual);
    }

    #[test]
    fn percent_features_share_the_device_total() {
        let events = vec![send(1, "a", 300), send(2, "b", 100)];
        let samples = extract_samples(&events, &PipelineConfig::default()).unwrap();
        assert_eq!(samples.len(), 2);
        let a = samples.iter().find(|s| s.app_id == "a").unwrap();
        let b = samples.iter().find(|s| s.app_id == "b").unwrap();
        assert_eq!(a.sent_pct, 75.0);
        assert_eq!(b.sent_pct, 25.0);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let events = vec![send(9, "a", 1), send(2, "a", 1)];
        assert!(extract_samples(&events, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn zero_period_is_rejected() {
        let config = PipelineConfig { extraction_period_secs: 0, ..Default::default() };
        assert!(extract_samples(&[send(1, "a", 1)], &config).is_err());
    }

    #[test]
    fn continuity_flips_to_eventual_after_threshold() {
        let events = vec![send(2, "a", 10), send(40, "a", 0)];
        let samples = extract_samples(&events, &PipelineConfig::default()).unwrap();
        // At t=30 the last send is 28s old (continuous); at t=35 it is 33s old.
        let at30 = samples.iter().find(|s| s.window_end_ts == 30).unwrap();
        assert_eq!(at30.send_mode, TransferMode::Continuous);
        let at35 = samples.iter().find(|s| s.window_end_ts == 35).unwrap();
        assert_eq!(at35.send_mode, TransferMode::Eventual);
    }

    #[test]
    fn fg_and_bg_totals_sum_to_elapsed_time() {
        let events = vec![
            NetworkEvent::new(0, "a", EventKind::FgEnter, 0),
            NetworkEvent::new(7, "a", EventKind::FgExit, 0),
            send(23, "a", 5),
        ];
        let samples = extract_samples(&events, &PipelineConfig::default()).unwrap();
        for s in &samples {
            assert_eq!(s.fg_time_total_secs + s.bg_time_total_secs, s.window_end_ts);
        }
        let last = samples.last().unwrap();
        assert_eq!(last.fg_time_total_secs, 7);
        assert_eq!(last.bg_time_total_secs, 18);
    }

    #[test]
    fn every_app_gets_one_sample_per_period() {
        let events = vec![send(3, "a", 1), send(22, "b", 1)];
        let samples = extract_samples(&events, &PipelineConfig::default()).unwrap();
        // 22s of trace => 5 periods, 2 apps.
        assert_eq!(samples.len(), 10);
    }
}
