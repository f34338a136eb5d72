//! Trace file and profile/perturbation config I/O.
//!
//! A trace file is line-oriented: a version header, then one event per line
//! as `timestamp<TAB>app_id<TAB>kind<TAB>bytes<TAB>net_state`. Profiles and
//! perturbations are TOML files carrying a `version = 1` key.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use super::{AppProfile, BeaconSpec, NetworkEvent, PerturbationSpec, ProfileField};

/// Header line identifying a trace file.
pub const TRACE_HEADER: &str = "# appnet trace v1";

pub fn format_event(event: &NetworkEvent) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}",
        event.timestamp,
        event.app_id,
        event.kind.token(),
        event.bytes,
        event.net_state.token()
    )
}

pub fn parse_trace_line(line: &str, path: Option<&str>, line_no: usize) -> Result<NetworkEvent> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::parse(
            path,
            line_no,
            format!("expected 5 tab-separated fields, got {}", fields.len()),
        ));
    }
    let timestamp = fields[0]
        .parse::<u64>()
        .map_err(|_| Error::parse(path, line_no, format!("bad timestamp `{}`", fields[0])))?;
    let kind = fields[2]
        .parse()
        .map_err(|e: String| Error::parse(path, line_no, e))?;
    let bytes = fields[3]
        .parse::<u64>()
        .map_err(|_| Error::parse(path, line_no, format!("bad byte count `{}`", fields[3])))?;
    let net_state = fields[4]
        .parse()
        .map_err(|e: String| Error::parse(path, line_no, e))?;
    Ok(NetworkEvent {
        timestamp,
        app_id: fields[1].to_owned(),
        kind,
        bytes,
        net_state,
    })
}

/// Parses a full trace document (header plus event lines).
pub fn parse_trace(text: &str, path: Option<&str>) -> Result<Vec<NetworkEvent>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == TRACE_HEADER => {}
        Some((_, header)) => {
            return Err(Error::parse(
                path,
                1,
                format!("unknown trace header `{}`, expected `{TRACE_HEADER}`", header.trim_end()),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty trace file")),
    }
    let mut events = Vec::new();
    let mut last_ts = 0u64;
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let event = parse_trace_line(line, path, idx + 1)?;
        if event.timestamp < last_ts {
            return Err(Error::parse(path, idx + 1, "timestamps must be non-decreasing"));
        }
        last_ts = event.timestamp;
        events.push(event);
    }
    Ok(events)
}

pub fn write_trace_file(path: &Path, events: &[NetworkEvent]) -> Result<()> {
    let mut out = String::with_capacity(events.len() * 32 + TRACE_HEADER.len() + 1);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for event in events {
        out.push_str(&format_event(event));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_trace_file(path: &Path) -> Result<Vec<NetworkEvent>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_trace(&text, Some(&path.display().to_string()))
}

#[derive(Deserialize)]
struct ProfileFile {
    version: u32,
    #[serde(flatten)]
    profile: AppProfile,
}

/// Reads and validates an [`AppProfile`] from a TOML file.
pub fn read_profile_file(path: &Path) -> Result<AppProfile> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: ProfileFile = toml::from_str(&text)
        .map_err(|e| toml_error(path, &e))?;
    check_version(path, file.version)?;
    file.profile.validate()?;
    Ok(file.profile)
}

#[derive(Deserialize)]
struct PerturbationFile {
    version: u32,
    kind: String,
    factors: Option<BTreeMap<String, f64>>,
    beacon: Option<BeaconSpec>,
}

/// Reads and validates a [`PerturbationSpec`] from a TOML file.
pub fn read_perturbation_file(path: &Path) -> Result<PerturbationSpec> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: PerturbationFile = toml::from_str(&text)
        .map_err(|e| toml_error(path, &e))?;
    check_version(path, file.version)?;
    let spec = match file.kind.as_str() {
        "version_delta" => {
            let raw = file.factors.ok_or_else(|| {
                Error::invalid("version_delta perturbation requires a [factors] table")
            })?;
            let mut factors = BTreeMap::new();
            for (name, factor) in raw {
                let field = ProfileField::from_str(&name).map_err(Error::InvalidInput)?;
                factors.insert(field, factor);
            }
            PerturbationSpec::VersionDelta(factors)
        }
        "beacon_injection" => {
            let beacon = file.beacon.ok_or_else(|| {
                Error::invalid("beacon_injection perturbation requires a [beacon] table")
            })?;
            PerturbationSpec::BeaconInjection(beacon)
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown perturbation kind `{other}` (expected version_delta or beacon_injection)"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != 1 {
        return Err(Error::invalid(format!(
            "{}: unsupported version {version}, this build reads version 1",
            path.display()
        )));
    }
    Ok(())
}

fn toml_error(path: &Path, err: &toml::de::Error) -> Error {
    let line = err.span().map(|s| line_of_offset(path, s.start)).unwrap_or(1);
    Error::parse(Some(&path.display().to_string()), line, err.message().to_string())
}

fn line_of_offset(path: &Path, offset: usize) -> usize {
    match fs::read_to_string(path) {
        Ok(text) => text[..offset.min(text.len())].matches('\n').count() + 1,
        Err(_) => 1,
    }
}
