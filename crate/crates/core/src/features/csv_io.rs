//! CSV serialization for samples and aggregated vectors.
//!
//! Both formats carry a version comment line, then a fixed header row. The
//! vector columns follow the canonical feature order of
//! [`schema::ALL_FEATURES`]; categorical values are lowercase tokens and
//! undefined numerics are the sentinel -1. Floats are written in Rust's
//! shortest round-trip form so files reproduce values bit-exactly.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use super::schema::{self, ALL_FEATURES};
use super::{AggregatedVector, Label, NetworkSample};

pub const VECTORS_HEADER: &str = "# appnet vectors v1";
pub const SAMPLES_HEADER: &str = "# appnet samples v1";

fn vector_columns() -> String {
    let mut cols = vec!["app_id".to_owned(), "window_end_ts".to_owned()];
    cols.extend(ALL_FEATURES.iter().map(|f| f.name.to_owned()));
    cols.push("label".to_owned());
    cols.join(",")
}

/// Renders vectors to CSV text.
pub fn vectors_to_csv(vectors: &[AggregatedVector]) -> String {
    let mut out = String::new();
    out.push_str(VECTORS_HEADER);
    out.push('\n');
    out.push_str(&vector_columns());
    out.push('\n');
    for v in vectors {
        out.push_str(&v.app_id);
        out.push(',');
        out.push_str(&v.window_end_ts.to_string());
        for def in ALL_FEATURES.iter() {
            out.push(',');
            let value = schema::feature_value(v, def.name).expect("known feature");
            out.push_str(&value.to_string());
        }
        out.push(',');
        if let Some(label) = v.label {
            out.push_str(label.token());
        }
        out.push('\n');
    }
    out
}

/// Parses CSV text produced by [`vectors_to_csv`].
pub fn parse_vectors_csv(text: &str, path: Option<&str>) -> Result<Vec<AggregatedVector>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == VECTORS_HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(
                path,
                1,
                format!("unknown vectors header `{}`, expected `{VECTORS_HEADER}`", h.trim_end()),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty vectors file")),
    }
    let expected = vector_columns();
    match lines.next() {
        Some((_, h)) if h.trim_end() == expected => {}
        Some((_, h)) => {
            return Err(Error::parse(
                path,
                2,
                format!("unexpected column header `{}`", h.trim_end()),
            ))
        }
        None => return Err(Error::parse(path, 2, "missing column header")),
    }

    let n_cols = ALL_FEATURES.len() + 3;
    let mut vectors = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {n_cols} columns, got {}", fields.len()),
            ));
        }
        let mut v = AggregatedVector {
            app_id: fields[0].to_owned(),
            window_end_ts: fields[1].parse::<u64>().map_err(|_| {
                Error::parse(path, line_no, format!("bad window_end_ts `{}`", fields[1]))
            })?,
            ..Default::default()
        };
        for (def, raw) in ALL_FEATURES.iter().zip(&fields[2..2 + ALL_FEATURES.len()]) {
            assign_feature(&mut v, def.name, raw, path, line_no)?;
        }
        let label_raw = fields[n_cols - 1];
        v.label = if label_raw.is_empty() {
            None
        } else {
            Some(Label::from_str(label_raw).map_err(|e| Error::parse(path, line_no, e))?)
        };
        vectors.push(v);
    }
    Ok(vectors)
}

pub fn write_vectors_file(path: &Path, vectors: &[AggregatedVector]) -> Result<()> {
    fs::write(path, vectors_to_csv(vectors)).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_vectors_file(path: &Path) -> Result<Vec<AggregatedVector>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_vectors_csv(&text, Some(&path.display().to_string()))
}

fn assign_feature(
    v: &mut AggregatedVector,
    name: &str,
    raw: &str,
    path: Option<&str>,
    line: usize,
) -> Result<()> {
    let def = ALL_FEATURES.iter().find(|d| d.name == name).expect("known feature");
    match def.kind {
        schema::FeatureKind::Numeric => {
            let x: f64 = raw
                .parse()
                .map_err(|_| Error::parse(path, line, format!("bad number `{raw}` for {name}")))?;
            set_numeric(v, name, x);
        }
        schema::FeatureKind::Categorical => {
            set_categorical(v, name, raw).map_err(|e| Error::parse(path, line, e))?;
        }
    }
    Ok(())
}

fn set_numeric(v: &mut AggregatedVector, name: &str, x: f64) {
    match name {
        "avg_sent_bytes" => v.avg_sent_bytes = x,
        "std_sent_bytes" => v.std_sent_bytes = x,
        "min_sent_bytes" => v.min_sent_bytes = x,
        "max_sent_bytes" => v.max_sent_bytes = x,
        "avg_recv_bytes" => v.avg_recv_bytes = x,
        "std_recv_bytes" => v.std_recv_bytes = x,
        "min_recv_bytes" => v.min_recv_bytes = x,
        "max_recv_bytes" => v.max_recv_bytes = x,
        "avg_sent_pct" => v.avg_sent_pct = x,
        "std_sent_pct" => v.std_sent_pct = x,
        "min_sent_pct" => v.min_sent_pct = x,
        "max_sent_pct" => v.max_sent_pct = x,
        "avg_recv_pct" => v.avg_recv_pct = x,
        "std_recv_pct" => v.std_recv_pct = x,
        "min_recv_pct" => v.min_recv_pct = x,
        "max_recv_pct" => v.max_recv_pct = x,
        "pct_sent_bytes" => v.pct_sent_bytes = x,
        "pct_recv_bytes" => v.pct_recv_bytes = x,
        "inner_avg_send_interval_local" => v.inner_avg_send_interval_local = x,
        "inner_avg_recv_interval_local" => v.inner_avg_recv_interval_local = x,
        "outer_avg_send_interval_local" => v.outer_avg_send_interval_local = x,
        "outer_avg_recv_interval_local" => v.outer_avg_recv_interval_local = x,
        "inner_avg_send_interval_global" => v.inner_avg_send_interval_global = x,
        "inner_avg_recv_interval_global" => v.inner_avg_recv_interval_global = x,
        "outer_avg_send_interval_global" => v.outer_avg_send_interval_global = x,
        "outer_avg_recv_interval_global" => v.outer_avg_recv_interval_global = x,
        "mins_since_last_send" => v.mins_since_last_send = x,
        "mins_since_last_recv" => v.mins_since_last_recv = x,
        "fg_time_total_secs" => v.fg_time_total_secs = x,
        "bg_time_total_secs" => v.bg_time_total_secs = x,
        "fg_time_local_secs" => v.fg_time_local_secs = x,
        "bg_time_local_secs" => v.bg_time_local_secs = x,
        "mins_since_last_active" => v.mins_since_last_active = x,
        "days_since_modified" => v.days_since_modified = x,
        other => unreachable!("unknown numeric feature {other}"),
    }
}

fn set_categorical(
    v: &mut AggregatedVector,
    name: &str,
    raw: &str,
) -> std::result::Result<(), String> {
    match name {
        "net_state" => v.net_state = raw.parse()?,
        "app_state1" => v.app_state1 = raw.parse()?,
        "app_state2" => v.app_state2 = raw.parse()?,
        other => unreachable!("unknown categorical feature {other}"),
    }
    Ok(())
}

const SAMPLE_COLUMNS: &str = "window_end_ts,app_id,sent_bytes,recv_bytes,sent_pct,recv_pct,net_state,secs_since_last_send,secs_since_last_recv,send_mode,recv_mode,fg_state,active_state,fg_time_total_secs,bg_time_total_secs,mins_since_last_active,days_since_modified";

/// Renders samples to CSV text.
pub fn samples_to_csv(samples: &[NetworkSample]) -> String {
    let mut out = String::new();
    out.push_str(SAMPLES_HEADER);
    out.push('\n');
    out.push_str(SAMPLE_COLUMNS);
    out.push('\n');
    for s in samples {
        let fg = if s.fg_state { "foreground" } else { "background" };
        let active = if s.active_state { "active" } else { "nonactive" };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.window_end_ts,
            s.app_id,
            s.sent_bytes,
            s.recv_bytes,
            s.sent_pct,
            s.recv_pct,
            s.net_state.token(),
            s.secs_since_last_send,
            s.secs_since_last_recv,
            s.send_mode.token(),
            s.recv_mode.token(),
            fg,
            active,
            s.fg_time_total_secs,
            s.bg_time_total_secs,
            s.mins_since_last_active,
            s.days_since_modified,
        ));
    }
    out
}

/// Parses CSV text produced by [`samples_to_csv`].
pub fn parse_samples_csv(text: &str, path: Option<&str>) -> Result<Vec<NetworkSample>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == SAMPLES_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected `{SAMPLES_HEADER}` header"))),
    }
    match lines.next() {
        Some((_, h)) if h.trim_end() == SAMPLE_COLUMNS => {}
        _ => return Err(Error::parse(path, 2, "unexpected sample column header")),
    }
    let mut samples = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 17 {
            return Err(Error::parse(path, line_no, format!("expected 17 columns, got {}", f.len())));
        }
        let parse_err =
            |what: &str, raw: &str| Error::parse(path, line_no, format!("bad {what} `{raw}`"));
        samples.push(NetworkSample {
            window_end_ts: f[0].parse().map_err(|_| parse_err("window_end_ts", f[0]))?,
            app_id: f[1].to_owned(),
            sent_bytes: f[2].parse().map_err(|_| parse_err("sent_bytes", f[2]))?,
            recv_bytes: f[3].parse().map_err(|_| parse_err("recv_bytes", f[3]))?,
            sent_pct: f[4].parse().map_err(|_| parse_err("sent_pct", f[4]))?,
            recv_pct: f[5].parse().map_err(|_| parse_err("recv_pct", f[5]))?,
            net_state: f[6].parse().map_err(|e: String| Error::parse(path, line_no, e))?,
            secs_since_last_send: f[7].parse().map_err(|_| parse_err("secs_since_last_send", f[7]))?,
            secs_since_last_recv: f[8].parse().map_err(|_| parse_err("secs_since_last_recv", f[8]))?,
            send_mode: f[9].parse().map_err(|e: String| Error::parse(path, line_no, e))?,
            recv_mode: f[10].parse().map_err(|e: String| Error::parse(path, line_no, e))?,
            fg_state: match f[11] {
                "foreground" => true,
                "background" => false,
                other => return Err(Error::parse(path, line_no, format!("bad fg_state `{other}`"))),
            },
            active_state: match f[12] {
                "active" => true,
                "nonactive" => false,
                other => {
                    return Err(Error::parse(path, line_no, format!("bad active_state `{other}`")))
                }
            },
            fg_time_total_secs: f[13].parse().map_err(|_| parse_err("fg_time_total_secs", f[13]))?,
            bg_time_total_secs: f[14].parse().map_err(|_| parse_err("bg_time_total_secs", f[14]))?,
            mins_since_last_active: f[15]
                .parse()
                .map_err(|_| parse_err("mins_since_last_active", f[15]))?,
            days_since_modified: f[16]
                .parse()
                .map_err(|_| parse_err("days_since_modified", f[16]))?,
        });
    }
    Ok(samples)
}
