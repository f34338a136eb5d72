//! Synthetic per-application traffic generation.
//!
//! Produces deterministic, seedable event streams for a benign application
//! profile, for a version-updated variant of it, and for a variant with an
//! injected background beacon. The generator is a stand-in for on-device
//! measurement: everything downstream consumes only the resulting
//! [`NetworkEvent`] stream.

mod generate;
mod io;

pub use generate::{simulate, simulate_trace};
pub use io::{
    format_event, parse_trace, parse_trace_line, read_perturbation_file, read_profile_file,
    read_trace_file, write_trace_file, TRACE_HEADER,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How long an application stays in the active-task list after leaving the
/// foreground, in seconds.
pub const ACTIVE_LINGER_SECS: u64 = 300;

/// Network connectivity state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetState {
    Cellular,
    Wifi,
    None,
}

impl NetState {
    pub fn token(self) -> &'static str {
        match self {
            NetState::Cellular => "cellular",
            NetState::Wifi => "wifi",
            NetState::None => "none",
        }
    }
}

impl FromStr for NetState {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cellular" => Ok(NetState::Cellular),
            "wifi" => Ok(NetState::Wifi),
            "none" => Ok(NetState::None),
            other => Err(format!("unknown net state `{other}`")),
        }
    }
}

impl fmt::Display for NetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Kind of a raw event in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Send,
    Receive,
    FgEnter,
    FgExit,
    Active,
    Inactive,
    NetStateChange,
}

impl EventKind {
    pub fn token(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Receive => "receive",
            EventKind::FgEnter => "fg_enter",
            EventKind::FgExit => "fg_exit",
            EventKind::Active => "active",
            EventKind::Inactive => "inactive",
            EventKind::NetStateChange => "net_state_change",
        }
    }

    pub fn is_transfer(self) -> bool {
        matches!(self, EventKind::Send | EventKind::Receive)
    }

    /// Ordering rank for events sharing a timestamp: state updates apply
    /// before transfers so a transfer sees the state announced at the same
    /// second.
    pub(crate) fn rank(self) -> u8 {
        match self {
            EventKind::NetStateChange => 0,
            EventKind::FgEnter | EventKind::FgExit => 1,
            EventKind::Active | EventKind::Inactive => 2,
            EventKind::Send => 3,
            EventKind::Receive => 4,
        }
    }
}

impl FromStr for EventKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "send" => Ok(EventKind::Send),
            "receive" => Ok(EventKind::Receive),
            "fg_enter" => Ok(EventKind::FgEnter),
            "fg_exit" => Ok(EventKind::FgExit),
            "active" => Ok(EventKind::Active),
            "inactive" => Ok(EventKind::Inactive),
            "net_state_change" => Ok(EventKind::NetStateChange),
            other => Err(format!("unknown event kind `{other}`")),
        }
    }
}

/// One raw event in a simulated trace.
///
/// `bytes` is zero for every non-transfer kind and `net_state` is meaningful
/// only for `NetStateChange` events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkEvent {
    /// Seconds since trace start.
    pub timestamp: u64,
    pub app_id: String,
    pub kind: EventKind,
    pub bytes: u64,
    pub net_state: NetState,
}

impl NetworkEvent {
    pub fn new(timestamp: u64, app_id: &str, kind: EventKind, bytes: u64) -> Self {
        NetworkEvent {
            timestamp,
            app_id: app_id.to_owned(),
            kind,
            bytes,
            net_state: NetState::None,
        }
    }

    pub fn state_change(timestamp: u64, app_id: &str, state: NetState) -> Self {
        NetworkEvent {
            timestamp,
            app_id: app_id.to_owned(),
            kind: EventKind::NetStateChange,
            bytes: 0,
            net_state: state,
        }
    }
}

/// Generative description of one application's benign traffic behavior.
///
/// Send/receive events are drawn each second with probability
/// `min(rate, 1)`; transfer sizes are lognormal; foreground sessions
/// alternate with background so that the long-run foreground share matches
/// `fg_fraction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppProfile {
    pub app_id: String,
    /// Expected send events per second.
    pub send_event_rate: f64,
    /// Expected receive events per second.
    pub recv_event_rate: f64,
    pub sent_bytes_log_mean: f64,
    pub sent_bytes_log_sd: f64,
    pub recv_bytes_log_mean: f64,
    pub recv_bytes_log_sd: f64,
    /// Long-run fraction of time spent in foreground, in [0, 1].
    pub fg_fraction: f64,
    /// Mean length of one foreground session, seconds.
    pub fg_session_mean_secs: f64,
    /// Mean dwell time per network state (wifi/cellular alternation);
    /// 0 disables state changes.
    pub net_state_dwell_secs: f64,
    /// Fixed-interval sync sends; 0 disables.
    pub periodic_sync_interval_secs: u64,
    pub periodic_sync_bytes: u64,
}

impl AppProfile {
    /// Checks the profile invariants: finite parameters, non-negative rates,
    /// `fg_fraction` in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.app_id.is_empty() {
            return Err(Error::invalid("app_id must not be empty"));
        }
        if self.app_id.contains(['\t', '\n', ',']) {
            return Err(Error::invalid("app_id must not contain tabs, commas or newlines"));
        }
        let named = [
            ("send_event_rate", self.send_event_rate),
            ("recv_event_rate", self.recv_event_rate),
            ("sent_bytes_log_mean", self.sent_bytes_log_mean),
            ("sent_bytes_log_sd", self.sent_bytes_log_sd),
            ("recv_bytes_log_mean", self.recv_bytes_log_mean),
            ("recv_bytes_log_sd", self.recv_bytes_log_sd),
            ("fg_fraction", self.fg_fraction),
            ("fg_session_mean_secs", self.fg_session_mean_secs),
            ("net_state_dwell_secs", self.net_state_dwell_secs),
        ];
        for (name, value) in named {
            if !value.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {value}")));
            }
        }
        for (name, value) in [
            ("send_event_rate", self.send_event_rate),
            ("recv_event_rate", self.recv_event_rate),
            ("sent_bytes_log_sd", self.sent_bytes_log_sd),
            ("recv_bytes_log_sd", self.recv_bytes_log_sd),
            ("fg_session_mean_secs", self.fg_session_mean_secs),
            ("net_state_dwell_secs", self.net_state_dwell_secs),
        ] {
            if value < 0.0 {
                return Err(Error::invalid(format!("{name} must be non-negative, got {value}")));
            }
        }
        if !(0.0..=1.0).contains(&self.fg_fraction) {
            return Err(Error::invalid(format!(
                "fg_fraction must be in [0, 1], got {}",
                self.fg_fraction
            )));
        }
        if self.fg_fraction > 0.0 && self.fg_fraction < 1.0 && self.fg_session_mean_secs <= 0.0 {
            return Err(Error::invalid(
                "fg_session_mean_secs must be positive when fg_fraction is in (0, 1)",
            ));
        }
        Ok(())
    }

    fn field(&self, field: ProfileField) -> f64 {
        match field {
            ProfileField::SendEventRate => self.send_event_rate,
            ProfileField::RecvEventRate => self.recv_event_rate,
            ProfileField::SentBytesLogMean => self.sent_bytes_log_mean,
            ProfileField::SentBytesLogSd => self.sent_bytes_log_sd,
            ProfileField::RecvBytesLogMean => self.recv_bytes_log_mean,
            ProfileField::RecvBytesLogSd => self.recv_bytes_log_sd,
            ProfileField::FgFraction => self.fg_fraction,
            ProfileField::FgSessionMeanSecs => self.fg_session_mean_secs,
            ProfileField::NetStateDwellSecs => self.net_state_dwell_secs,
            ProfileField::PeriodicSyncIntervalSecs => self.periodic_sync_interval_secs as f64,
            ProfileField::PeriodicSyncBytes => self.periodic_sync_bytes as f64,
        }
    }

    fn set_field(&mut self, field: ProfileField, value: f64) {
        match field {
            ProfileField::SendEventRate => self.send_event_rate = value,
            ProfileField::RecvEventRate => self.recv_event_rate = value,
            ProfileField::SentBytesLogMean => self.sent_bytes_log_mean = value,
            ProfileField::SentBytesLogSd => self.sent_bytes_log_sd = value,
            ProfileField::RecvBytesLogMean => self.recv_bytes_log_mean = value,
            ProfileField::RecvBytesLogSd => self.recv_bytes_log_sd = value,
            ProfileField::FgFraction => self.fg_fraction = value.clamp(0.0, 1.0),
            ProfileField::FgSessionMeanSecs => self.fg_session_mean_secs = value,
            ProfileField::NetStateDwellSecs => self.net_state_dwell_secs = value,
            ProfileField::PeriodicSyncIntervalSecs => {
                self.periodic_sync_interval_secs = value.round().max(0.0) as u64
            }
            ProfileField::PeriodicSyncBytes => {
                self.periodic_sync_bytes = value.round().max(0.0) as u64
            }
        }
    }
}

/// Numeric profile fields that a version update may rescale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProfileField {
    SendEventRate,
    RecvEventRate,
    SentBytesLogMean,
    SentBytesLogSd,
    RecvBytesLogMean,
    RecvBytesLogSd,
    FgFraction,
    FgSessionMeanSecs,
    NetStateDwellSecs,
    PeriodicSyncIntervalSecs,
    PeriodicSyncBytes,
}

impl ProfileField {
    pub const ALL: [ProfileField; 11] = [
        ProfileField::SendEventRate,
        ProfileField::RecvEventRate,
        ProfileField::SentBytesLogMean,
        ProfileField::SentBytesLogSd,
        ProfileField::RecvBytesLogMean,
        ProfileField::RecvBytesLogSd,
        ProfileField::FgFraction,
        ProfileField::FgSessionMeanSecs,
        ProfileField::NetStateDwellSecs,
        ProfileField::PeriodicSyncIntervalSecs,
        ProfileField::PeriodicSyncBytes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileField::SendEventRate => "send_event_rate",
            ProfileField::RecvEventRate => "recv_event_rate",
            ProfileField::SentBytesLogMean => "sent_bytes_log_mean",
            ProfileField::SentBytesLogSd => "sent_bytes_log_sd",
            ProfileField::RecvBytesLogMean => "recv_bytes_log_mean",
            ProfileField::RecvBytesLogSd => "recv_bytes_log_sd",
            ProfileField::FgFraction => "fg_fraction",
            ProfileField::FgSessionMeanSecs => "fg_session_mean_secs",
            ProfileField::NetStateDwellSecs => "net_state_dwell_secs",
            ProfileField::PeriodicSyncIntervalSecs => "periodic_sync_interval_secs",
            ProfileField::PeriodicSyncBytes => "periodic_sync_bytes",
        }
    }
}

impl FromStr for ProfileField {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProfileField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown profile field `{s}`"))
    }
}

/// Constant-interval background transfer process injected by malware.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeaconSpec {
    pub interval_secs: u64,
    pub sent_bytes: u64,
    /// 0 disables the receive leg of the beacon.
    pub recv_bytes: u64,
    /// When true the beacon fires regardless of foreground state; otherwise
    /// it fires only while the application is in foreground.
    pub runs_in_background: bool,
}

impl BeaconSpec {
    pub fn validate(&self) -> Result<()> {
        if self.interval_secs == 0 {
            return Err(Error::invalid("beacon interval_secs must be positive"));
        }
        if self.sent_bytes == 0 {
            return Err(Error::invalid("beacon sent_bytes must be positive"));
        }
        Ok(())
    }
}

/// A modification applied to a benign profile: either a version update that
/// rescales numeric fields or a malware beacon injection.
#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationSpec {
    /// Multiplicative factors applied to a subset of numeric profile fields.
    VersionDelta(BTreeMap<ProfileField, f64>),
    BeaconInjection(BeaconSpec),
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PerturbationSpec::VersionDelta(factors) => {
                for (field, factor) in factors {
                    if !factor.is_finite() || *factor <= 0.0 {
                        return Err(Error::invalid(format!(
                            "version delta factor for {} must be positive, got {factor}",
                            field.name()
                        )));
                    }
                }
                Ok(())
            }
            PerturbationSpec::BeaconInjection(beacon) => beacon.validate(),
        }
    }
}

/// A profile plus an optional injected beacon: everything the generator
/// needs to produce one application's trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub profile: AppProfile,
    pub beacon: Option<BeaconSpec>,
}

impl TraceSpec {
    pub fn benign(profile: AppProfile) -> Self {
        TraceSpec { profile, beacon: None }
    }
}

/// Applies a perturbation to a benign profile.
///
/// A version delta rescales exactly the named fields and leaves the rest
/// untouched; a beacon injection keeps the profile as-is and attaches the
/// beacon descriptor for the generator.
pub fn perturb_profile(profile: &AppProfile, spec: &PerturbationSpec) -> Result<TraceSpec> {
    profile.validate()?;
    spec.validate()?;
    match spec {
        PerturbationSpec::VersionDelta(factors) => {
            let mut updated = profile.clone();
            for (field, factor) in factors {
                updated.set_field(*field, updated.field(*field) * factor);
            }
            updated.validate()?;
            Ok(TraceSpec::benign(updated))
        }
        PerturbationSpec::BeaconInjection(beacon) => Ok(TraceSpec {
            profile: profile.clone(),
            beacon: Some(beacon.clone()),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_profile() -> AppProfile {
        AppProfile {
            app_id: "chat_a".into(),
            send_event_rate: 0.05,
            recv_event_rate: 0.06,
            sent_bytes_log_mean: 5.5,
            sent_bytes_log_sd: 0.8,
            recv_bytes_log_mean: 5.6,
            recv_bytes_log_sd: 0.8,
            fg_fraction: 0.25,
            fg_session_mean_secs: 120.0,
            net_state_dwell_secs: 1800.0,
            periodic_sync_interval_secs: 0,
            periodic_sync_bytes: 0,
        }
    }

    #[test]
    fn identity_version_delta_keeps_profile_unchanged() {
        let profile = base_profile();
        let factors: BTreeMap<_, _> = ProfileField::ALL.iter().map(|f| (*f, 1.0)).collect();
        let spec = PerturbationSpec::VersionDelta(factors);
        let out = perturb_profile(&profile, &spec).unwrap();
        assert_eq!(out.profile, profile);
        assert!(out.beacon.is_none());
    }

    #[test]
    fn version_delta_scales_only_named_fields() {
        let profile = base_profile();
        let mut factors = BTreeMap::new();
        factors.insert(ProfileField::SendEventRate, 2.0);
        let out = perturb_profile(&profile, &PerturbationSpec::VersionDelta(factors)).unwrap();
        assert_eq!(out.profile.send_event_rate, 0.1);
        assert_eq!(out.profile.recv_event_rate, profile.recv_event_rate);
        assert_eq!(out.profile.fg_fraction, profile.fg_fraction);
    }

    #[test]
    fn version_delta_rejects_nonpositive_factor() {
        let profile = base_profile();
        let mut factors = BTreeMap::new();
        factors.insert(ProfileField::RecvEventRate, 0.0);
        assert!(perturb_profile(&profile, &PerturbationSpec::VersionDelta(factors)).is_err());
        let mut factors = BTreeMap::new();
        factors.insert(ProfileField::RecvEventRate, -1.5);
        assert!(perturb_profile(&profile, &PerturbationSpec::VersionDelta(factors)).is_err());
    }

    #[test]
    fn beacon_injection_leaves_profile_untouched() {
        let profile = base_profile();
        let spec = PerturbationSpec::BeaconInjection(BeaconSpec {
            interval_secs: 30,
            sent_bytes: 512,
            recv_bytes: 0,
            runs_in_background: true,
        });
        let out = perturb_profile(&profile, &spec).unwrap();
        assert_eq!(out.profile, profile);
        assert_eq!(out.beacon.as_ref().unwrap().interval_secs, 30);
    }

    #[test]
    fn beacon_rejects_zero_interval() {
        let profile = base_profile();
        let spec = PerturbationSpec::BeaconInjection(BeaconSpec {
            interval_secs: 0,
            sent_bytes: 512,
            recv_bytes: 0,
            runs_in_background: true,
        });
        assert!(perturb_profile(&profile, &spec).is_err());
    }

    #[test]
    fn profile_rejects_non_finite_and_negative_parameters() {
        let mut p = base_profile();
        p.send_event_rate = f64::NAN;
        assert!(p.validate().is_err());
        let mut p = base_profile();
        p.recv_event_rate = -0.1;
        assert!(p.validate().is_err());
        let mut p = base_profile();
        p.fg_fraction = 1.5;
        assert!(p.validate().is_err());
    }
}
