//! The event-stream generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::error::{Error, Result};
use super::{
    AppProfile, BeaconSpec, EventKind, NetState, NetworkEvent, TraceSpec, ACTIVE_LINGER_SECS,
};

/// Simulates a benign profile. See [`simulate`] for the full contract.
pub fn simulate_trace(profile: &AppProfile, duration_secs: u64, seed: u64) -> Result<Vec<NetworkEvent>> {
    simulate(&TraceSpec::benign(profile.clone()), duration_secs, seed)
}

/// Generates the ordered event stream for one application over
/// `duration_secs` seconds.
///
/// Fully deterministic for a fixed `(spec, duration_secs, seed)`: each
/// sub-process (sends, receives, transfer sizes, foreground sessions,
/// network states) draws from its own seed-derived stream, so attaching a
/// beacon does not shift the benign events.
pub fn simulate(spec: &TraceSpec, duration_secs: u64, seed: u64) -> Result<Vec<NetworkEvent>> {
    spec.profile.validate()?;
    if let Some(beacon) = &spec.beacon {
        beacon.validate()?;
    }
    if duration_secs == 0 {
        return Err(Error::invalid("duration_secs must be at least 1"));
    }

    let profile = &spec.profile;
    let app = profile.app_id.as_str();
    let mut events = Vec::new();

    let fg_intervals = foreground_sessions(profile, duration_secs, seed, &mut events);
    network_states(profile, duration_secs, seed, &mut events);
    transfers(profile, duration_secs, seed, &mut events);
    if let Some(beacon) = &spec.beacon {
        beacon_events(beacon, app, duration_secs, &fg_intervals, &mut events);
    }

    // Stable order: timestamp, then state changes before transfers.
    events.sort_by(|a, b| (a.timestamp, a.kind.rank()).cmp(&(b.timestamp, b.kind.rank())));
    Ok(events)
}

/// Half-open foreground intervals `[enter, exit)`; `exit` may equal
/// `duration + 1` when the trace ends in foreground.
fn foreground_sessions(
    profile: &AppProfile,
    duration: u64,
    seed: u64,
    events: &mut Vec<NetworkEvent>,
) -> Vec<(u64, u64)> {
    let app = profile.app_id.as_str();
    let f = profile.fg_fraction;
    if f <= 0.0 {
        return Vec::new();
    }
    if f >= 1.0 {
        events.push(NetworkEvent::new(0, app, EventKind::FgEnter, 0));
        events.push(NetworkEvent::new(0, app, EventKind::Active, 0));
        return vec![(0, duration + 1)];
    }

    let mut rng = stream_rng(seed, "fg_sessions");
    let fg_mean = profile.fg_session_mean_secs;
    let bg_mean = fg_mean * (1.0 - f) / f;
    let fg_dist = Exp::new(1.0 / fg_mean).expect("positive rate");
    let bg_dist = Exp::new(1.0 / bg_mean).expect("positive rate");

    let mut intervals = Vec::new();
    let mut in_fg = rng.random::<f64>() < f;
    let mut t = 0u64;
    let mut last_exit: Option<u64> = None;

    if in_fg {
        events.push(NetworkEvent::new(0, app, EventKind::FgEnter, 0));
        events.push(NetworkEvent::new(0, app, EventKind::Active, 0));
    }

    while t <= duration {
        let mean_dist = if in_fg { &fg_dist } else { &bg_dist };
        let len = mean_dist.sample(&mut rng).round().max(1.0) as u64;
        let end = t.saturating_add(len);
        if in_fg {
            intervals.push((t, end.min(duration + 1)));
            if end <= duration {
                events.push(NetworkEvent::new(end, app, EventKind::FgExit, 0));
                last_exit = Some(end);
            }
        } else if let Some(exit_ts) = last_exit {
            // The app drops out of the active-task list after lingering in
            // background for ACTIVE_LINGER_SECS.
            let linger_end = exit_ts + ACTIVE_LINGER_SECS;
            if end > linger_end && linger_end <= duration {
                events.push(NetworkEvent::new(linger_end, app, EventKind::Inactive, 0));
            }
        }
        if end > duration {
            break;
        }
        t = end;
        in_fg = !in_fg;
        if in_fg {
            events.push(NetworkEvent::new(t, app, EventKind::FgEnter, 0));
            events.push(NetworkEvent::new(t, app, EventKind::Active, 0));
        }
    }
    intervals
}

fn network_states(profile: &AppProfile, duration: u64, seed: u64, events: &mut Vec<NetworkEvent>) {
    let app = profile.app_id.as_str();
    events.push(NetworkEvent::state_change(0, app, NetState::Wifi));
    if profile.net_state_dwell_secs <= 0.0 {
        return;
    }
    let mut rng = stream_rng(seed, "net_states");
    let dwell = Exp::new(1.0 / profile.net_state_dwell_secs).expect("positive rate");
    let mut state = NetState::Wifi;
    let mut t = 0u64;
    loop {
        let len = dwell.sample(&mut rng).round().max(1.0) as u64;
        t = t.saturating_add(len);
        if t > duration {
            return;
        }
        state = match state {
            NetState::Wifi => NetState::Cellular,
            _ => NetState::Wifi,
        };
        events.push(NetworkEvent::state_change(t, app, state));
    }
}

fn transfers(profile: &AppProfile, duration: u64, seed: u64, events: &mut Vec<NetworkEvent>) {
    let app = profile.app_id.as_str();

    let mut occ = stream_rng(seed, "send_occ");
    let mut sizes = stream_rng(seed, "send_bytes");
    let size_dist = byte_dist(profile.sent_bytes_log_mean, profile.sent_bytes_log_sd);
    let p = profile.send_event_rate.min(1.0);
    for t in 1..=duration {
        if p > 0.0 && occ.random::<f64>() < p {
            let bytes = draw_bytes(&size_dist, &mut sizes);
            events.push(NetworkEvent::new(t, app, EventKind::Send, bytes));
        }
        if profile.periodic_sync_interval_secs > 0 && t % profile.periodic_sync_interval_secs == 0 {
            events.push(NetworkEvent::new(t, app, EventKind::Send, profile.periodic_sync_bytes));
        }
    }

    let mut occ = stream_rng(seed, "recv_occ");
    let mut sizes = stream_rng(seed, "recv_bytes");
    let size_dist = byte_dist(profile.recv_bytes_log_mean, profile.recv_bytes_log_sd);
    let p = profile.recv_event_rate.min(1.0);
    for t in 1..=duration {
        if p > 0.0 && occ.random::<f64>() < p {
            let bytes = draw_bytes(&size_dist, &mut sizes);
            events.push(NetworkEvent::new(t, app, EventKind::Receive, bytes));
        }
    }
}

fn beacon_events(
    beacon: &BeaconSpec,
    app: &str,
    duration: u64,
    fg_intervals: &[(u64, u64)],
    events: &mut Vec<NetworkEvent>,
) {
    let mut t = beacon.interval_secs;
    while t <= duration {
        if beacon.runs_in_background || in_foreground(fg_intervals, t) {
            events.push(NetworkEvent::new(t, app, EventKind::Send, beacon.sent_bytes));
            if beacon.recv_bytes > 0 {
                events.push(NetworkEvent::new(t, app, EventKind::Receive, beacon.recv_bytes));
            }
        }
        t += beacon.interval_secs;
    }
}

fn in_foreground(intervals: &[(u64, u64)], t: u64) -> bool {
    intervals.iter().any(|&(start, end)| start <= t && t < end)
}

fn byte_dist(log_mean: f64, log_sd: f64) -> LogNormal<f64> {
    // log_sd 0 degenerates to a point mass at exp(log_mean).
    LogNormal::new(log_mean, log_sd.max(1e-12)).expect("finite parameters")
}

fn draw_bytes(dist: &LogNormal<f64>, rng: &mut ChaCha8Rng) -> u64 {
    dist.sample(rng).round().max(1.0) as u64
}

/// Derives an independent RNG for one named sub-process of the generator.
fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    let mut h = 0xcbf29ce484222325u64; // FNV-1a
    for byte in stream.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ h))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}
