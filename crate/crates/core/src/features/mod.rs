//! Feature extraction and aggregation.
//!
//! Raw event streams are reduced to periodic per-app [`NetworkSample`]
//! measurements (default every 5 seconds), which are then rolled up into
//! one [`AggregatedVector`] per aggregation window (default 1 minute). The
//! aggregated vectors are the instances fed to learning and detection.

mod aggregate;
mod csv_io;
mod extract;
pub mod schema;

pub use aggregate::{aggregate_trace, aggregate_window, split_intervals, GlobalAccumulator};
pub use csv_io::{
    parse_samples_csv, parse_vectors_csv, read_vectors_file, samples_to_csv, vectors_to_csv,
    write_vectors_file, SAMPLES_HEADER, VECTORS_HEADER,
};
pub use extract::extract_samples;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::NetState;

/// Sentinel for "never happened yet" / "undefined" numeric features. It is
/// outside the valid range of every feature it stands in for and is treated
/// by learners as an ordinary numeric value.
pub const SENTINEL: f64 = -1.0;

/// Pipeline knobs. Defaults match the measurement regime the models are
/// built for: 5-second extraction, 1-minute aggregation, 30-second
/// continuity threshold and inner/outer interval boundary.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub extraction_period_secs: u64,
    pub window_secs: u64,
    /// A send/receive is "continuous" when the last matching transfer is
    /// fewer than this many seconds old.
    pub continuity_threshold_secs: u64,
    /// Gap length separating inner from outer transfer intervals.
    pub interval_boundary_secs: f64,
    /// Installer-file age carried into every sample; the simulator has no
    /// installer, so this comes from configuration.
    pub days_since_modified: i64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            extraction_period_secs: 5,
            window_secs: 60,
            continuity_threshold_secs: 30,
            interval_boundary_secs: 30.0,
            days_since_modified: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.extraction_period_secs == 0 {
            return Err(Error::invalid("extraction period must be positive"));
        }
        if self.window_secs == 0 || self.window_secs % self.extraction_period_secs != 0 {
            return Err(Error::invalid(
                "aggregation window must be a positive multiple of the extraction period",
            ));
        }
        Ok(())
    }
}

/// Whether a transfer direction is seeing ongoing traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    Eventual,
    Continuous,
}

impl TransferMode {
    pub fn token(self) -> &'static str {
        match self {
            TransferMode::Eventual => "eventual",
            TransferMode::Continuous => "continuous",
        }
    }
}

impl FromStr for TransferMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eventual" => Ok(TransferMode::Eventual),
            "continuous" => Ok(TransferMode::Continuous),
            other => Err(format!("unknown transfer mode `{other}`")),
        }
    }
}

/// One periodic per-app measurement snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSample {
    /// End of the extraction period this sample covers, seconds.
    pub window_end_ts: u64,
    pub app_id: String,
    pub sent_bytes: u64,
    pub recv_bytes: u64,
    /// Share of all monitored apps' sent bytes this period, in [0, 100].
    pub sent_pct: f64,
    pub recv_pct: f64,
    pub net_state: NetState,
    /// Seconds since the app's last send; [`SENTINEL`] when it never sent.
    pub secs_since_last_send: i64,
    pub secs_since_last_recv: i64,
    pub send_mode: TransferMode,
    pub recv_mode: TransferMode,
    pub fg_state: bool,
    pub active_state: bool,
    /// Cumulative foreground seconds since monitoring start.
    pub fg_time_total_secs: u64,
    pub bg_time_total_secs: u64,
    /// Minutes since the app last counted as an active task; -1 if never.
    pub mins_since_last_active: i64,
    pub days_since_modified: i64,
}

/// Network state over one aggregation window; `Mixed` records that more
/// than one distinct state was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggNetState {
    Cellular,
    Wifi,
    None,
    Mixed,
}

impl AggNetState {
    pub fn token(self) -> &'static str {
        match self {
            AggNetState::Cellular => "cellular",
            AggNetState::Wifi => "wifi",
            AggNetState::None => "none",
            AggNetState::Mixed => "mixed",
        }
    }

    pub fn from_sample(state: NetState) -> Self {
        match state {
            NetState::Cellular => AggNetState::Cellular,
            NetState::Wifi => AggNetState::Wifi,
            NetState::None => AggNetState::None,
        }
    }
}

impl FromStr for AggNetState {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cellular" => Ok(AggNetState::Cellular),
            "wifi" => Ok(AggNetState::Wifi),
            "none" => Ok(AggNetState::None),
            "mixed" => Ok(AggNetState::Mixed),
            other => Err(format!("unknown aggregated net state `{other}`")),
        }
    }
}

/// Foreground/background over one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FgAgg {
    Foreground,
    Background,
    Mixed,
}

impl FgAgg {
    pub fn token(self) -> &'static str {
        match self {
            FgAgg::Foreground => "foreground",
            FgAgg::Background => "background",
            FgAgg::Mixed => "mixed",
        }
    }
}

impl FromStr for FgAgg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "foreground" => Ok(FgAgg::Foreground),
            "background" => Ok(FgAgg::Background),
            "mixed" => Ok(FgAgg::Mixed),
            other => Err(format!("unknown app state `{other}`")),
        }
    }
}

/// Active/non-active task status over one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActiveAgg {
    Active,
    Nonactive,
    Mixed,
}

impl ActiveAgg {
    pub fn token(self) -> &'static str {
        match self {
            ActiveAgg::Active => "active",
            ActiveAgg::Nonactive => "nonactive",
            ActiveAgg::Mixed => "mixed",
        }
    }
}

impl FromStr for ActiveAgg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "active" => Ok(ActiveAgg::Active),
            "nonactive" => Ok(ActiveAgg::Nonactive),
            "mixed" => Ok(ActiveAgg::Mixed),
            other => Err(format!("unknown active state `{other}`")),
        }
    }
}

/// Ground-truth label attached to vectors during evaluation only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn token(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(Label::Normal),
            "anomalous" => Ok(Label::Anomalous),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One 1-minute aggregation of samples: the instance fed to learning and
/// detection. Interval averages and the "minutes since" features use
/// [`SENTINEL`] when undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedVector {
    pub app_id: String,
    pub window_end_ts: u64,

    pub avg_sent_bytes: f64,
    pub std_sent_bytes: f64,
    pub min_sent_bytes: f64,
    pub max_sent_bytes: f64,
    pub avg_recv_bytes: f64,
    pub std_recv_bytes: f64,
    pub min_recv_bytes: f64,
    pub max_recv_bytes: f64,
    pub avg_sent_pct: f64,
    pub std_sent_pct: f64,
    pub min_sent_pct: f64,
    pub max_sent_pct: f64,
    pub avg_recv_pct: f64,
    pub std_recv_pct: f64,
    pub min_recv_pct: f64,
    pub max_recv_pct: f64,
    /// Share of this window's transferred bytes that were sent/received;
    /// both zero when the window moved no bytes.
    pub pct_sent_bytes: f64,
    pub pct_recv_bytes: f64,
    pub inner_avg_send_interval_local: f64,
    pub inner_avg_recv_interval_local: f64,
    pub outer_avg_send_interval_local: f64,
    pub outer_avg_recv_interval_local: f64,
    pub inner_avg_send_interval_global: f64,
    pub inner_avg_recv_interval_global: f64,
    pub outer_avg_send_interval_global: f64,
    pub outer_avg_recv_interval_global: f64,
    pub net_state: AggNetState,
    pub mins_since_last_send: f64,
    pub mins_since_last_recv: f64,
    pub app_state1: FgAgg,
    pub app_state2: ActiveAgg,
    pub fg_time_total_secs: f64,
    pub bg_time_total_secs: f64,
    pub fg_time_local_secs: f64,
    pub bg_time_local_secs: f64,
    pub mins_since_last_active: f64,
    pub days_since_modified: f64,

    pub label: Option<Label>,
}

impl Default for AggregatedVector {
    fn default() -> Self {
        AggregatedVector {
            app_id: String::new(),
            window_end_ts: 0,
            avg_sent_bytes: 0.0,
            std_sent_bytes: 0.0,
            min_sent_bytes: 0.0,
            max_sent_bytes: 0.0,
            avg_recv_bytes: 0.0,
            std_recv_bytes: 0.0,
            min_recv_bytes: 0.0,
            max_recv_bytes: 0.0,
            avg_sent_pct: 0.0,
            std_sent_pct: 0.0,
            min_sent_pct: 0.0,
            max_sent_pct: 0.0,
            avg_recv_pct: 0.0,
            std_recv_pct: 0.0,
            min_recv_pct: 0.0,
            max_recv_pct: 0.0,
            pct_sent_bytes: 0.0,
            pct_recv_bytes: 0.0,
            inner_avg_send_interval_local: SENTINEL,
            inner_avg_recv_interval_local: SENTINEL,
            outer_avg_send_interval_local: SENTINEL,
            outer_avg_recv_interval_local: SENTINEL,
            inner_avg_send_interval_global: SENTINEL,
            inner_avg_recv_interval_global: SENTINEL,
            outer_avg_send_interval_global: SENTINEL,
            outer_avg_recv_interval_global: SENTINEL,
            net_state: AggNetState::None,
            mins_since_last_send: SENTINEL,
            mins_since_last_recv: SENTINEL,
            app_state1: FgAgg::Background,
            app_state2: ActiveAgg::Nonactive,
            fg_time_total_secs: 0.0,
            bg_time_total_secs: 0.0,
            fg_time_local_secs: 0.0,
            bg_time_local_secs: 0.0,
            mins_since_last_active: SENTINEL,
            days_since_modified: 0.0,
            label: None,
        }
    }
}
