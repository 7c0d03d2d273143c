//! Best-effort conversion of foreign capture exports into the canonical
//! trace format.
//!
//! The `antmonitor` mapper understands the JSON shape used by on-device
//! capture tools: `package_name` for the app, `host` for the domain, a
//! `headers` object, a numeric or boolean `label` for the ad ground truth,
//! and a `pii_types` list whose non-emptiness marks PII exposure. Input is
//! either one JSON object per line or a single JSON array.

use anyhow::{anyhow, Result};
use serde::Serialize;
use serde_json::Value;

use fedpkt_core::trace::{parse_trace_str, HttpPacket, ParseWarning, Strictness};
use fedpkt_core::Error;

/// Canonical wire layout, written line by line and then re-parsed so the
/// ordinary trace validation applies to converted records too.
#[derive(Serialize)]
struct CanonicalRecord {
    id: String,
    app: String,
    method: String,
    domain: String,
    uri: String,
    headers: Vec<(String, String)>,
    cookie: Option<String>,
    labels: LabelFields,
    ts: Option<i64>,
}

#[derive(Serialize)]
struct LabelFields {
    pii: Option<bool>,
    ad: Option<bool>,
}

fn first_str<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| obj.get(*k).and_then(Value::as_str))
}

/// Reduces an absolute URL to its path-and-query part.
fn path_of(uri: &str) -> String {
    let rest = uri
        .strip_prefix("http://")
        .or_else(|| uri.strip_prefix("https://"));
    let path = match rest {
        Some(after_scheme) => match after_scheme.find('/') {
            Some(slash) => &after_scheme[slash..],
            None => "/",
        },
        None => uri,
    };
    if path.starts_with('/') {
        path.to_string()
    } else {
        format!("/{path}")
    }
}

fn bool_of(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => n.as_i64().map(|i| i != 0),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => Some(true),
            "0" | "false" | "no" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn timestamp_of(value: &Value) -> Option<i64> {
    match value {
        Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
        Value::String(s) => s.trim().parse::<i64>().ok(),
        _ => None,
    }
}

fn map_record(value: &Value, line: usize) -> std::result::Result<CanonicalRecord, String> {
    let obj = value.as_object().ok_or("record is not a JSON object")?;

    let domain = first_str(obj, &["host", "domain"])
        .ok_or("missing host")?
        .split(':')
        .next()
        .unwrap_or_default()
        .to_string();
    if domain.is_empty() {
        return Err("empty host".to_string());
    }
    let uri = path_of(first_str(obj, &["uri", "url", "path"]).ok_or("missing uri")?);
    let app = first_str(obj, &["package_name", "app_name", "package", "app"])
        .unwrap_or("unknown.app")
        .to_string();
    let method = first_str(obj, &["method"]).unwrap_or("GET").to_string();

    let mut headers = Vec::new();
    let mut cookies: Vec<String> = Vec::new();
    if let Some(Value::Object(map)) = obj.get("headers") {
        for (name, value) in map {
            let name = name.trim().to_ascii_lowercase();
            if name.is_empty() {
                continue;
            }
            let value = match value {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            if name == "cookie" {
                cookies.push(value);
            } else {
                headers.push((name, value));
            }
        }
    }
    let cookie = if cookies.is_empty() { None } else { Some(cookies.join("; ")) };

    let ad = obj
        .get("label")
        .or_else(|| obj.get("ad_label"))
        .or_else(|| obj.get("ad"))
        .and_then(bool_of);
    let pii = match obj.get("pii_types").or_else(|| obj.get("pii_labels")) {
        Some(Value::Array(types)) => Some(!types.is_empty()),
        Some(other) => bool_of(other),
        None => obj.get("pii").and_then(bool_of),
    };
    let ts = obj.get("timestamp").or_else(|| obj.get("ts")).and_then(timestamp_of);
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("r{line:06}"),
    };

    Ok(CanonicalRecord {
        id,
        app,
        method,
        domain,
        uri,
        headers,
        cookie,
        labels: LabelFields { pii, ad },
        ts,
    })
}

/// Converts an on-device capture export into canonical packets.
pub fn convert_antmonitor(
    text: &str,
    strictness: Strictness,
) -> Result<(Vec<HttpPacket>, Vec<ParseWarning>)> {
    let records: Vec<(usize, Value)> = if text.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(text).map_err(Error::from)?;
        values.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = serde_json::from_str(line).map_err(|e| {
                anyhow!(Error::MalformedRecord { line: i + 1, reason: e.to_string() })
            })?;
            out.push((i + 1, value));
        }
        out
    };

    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    for (line, value) in &records {
        match map_record(value, *line) {
            Ok(record) => lines.push(
                serde_json::to_string(&record).expect("canonical record serializes"),
            ),
            Err(reason) => match strictness {
                Strictness::Strict => {
                    return Err(anyhow!(Error::MalformedRecord { line: *line, reason }));
                }
                Strictness::SkipInvalid => {
                    warnings.push(ParseWarning { line: *line, message: reason });
                }
            },
        }
    }

    let jsonl = lines.join("\n");
    let (packets, parse_warnings) = parse_trace_str(&jsonl, strictness)?;
    warnings.extend(parse_warnings);
    warnings.sort_by_key(|w| w.line);
    Ok((packets, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_capture_fields_onto_the_canonical_layout() {
        let raw = r#"[
  {"package_name": "com.game.fun", "host": "ads.example.com:443",
   "uri": "https://ads.example.com/serve?gaid=G1&fmt=b",
   "method": "get",
   "headers": {"User-Agent": "UA", "Cookie": "sid=1", "X-Device-Token": "T"},
   "label": 1, "pii_types": ["gaid"], "timestamp": 1700000000}
]"#;
        let (packets, warnings) = convert_antmonitor(raw, Strictness::Strict).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(packets.len(), 1);
        let p = &packets[0];
        assert_eq!(p.app, "com.game.fun");
        assert_eq!(p.domain, "ads.example.com");
        assert_eq!(p.uri, "/serve?gaid=G1&fmt=b");
        assert_eq!(p.method.as_str(), "GET");
        assert_eq!(p.cookie.as_deref(), Some("sid=1"));
        assert!(p.headers.iter().any(|(n, _)| n == "x-device-token"));
        assert_eq!(p.labels.ad, Some(true));
        assert_eq!(p.labels.pii, Some(true));
        assert_eq!(p.ts, Some(1700000000));
    }

    #[test]
    fn jsonl_input_and_fallback_fields_work() {
        let raw = concat!(
            r#"{"app_name": "a.b", "domain": "x.example", "url": "/p?k=v", "ad": true}"#,
            "\n",
            r#"{"package": "c.d", "host": "y.example", "path": "q", "pii": false}"#,
            "\n",
        );
        let (packets, _) = convert_antmonitor(raw, Strictness::Strict).unwrap();
        assert_eq!(packets.len(), 2);
        assert_eq!(packets[0].labels.ad, Some(true));
        assert_eq!(packets[0].labels.pii, None);
        assert_eq!(packets[1].uri, "/q");
        assert_eq!(packets[1].labels.pii, Some(false));
        assert_eq!(packets[1].id, "r000002");
    }

    #[test]
    fn strict_mode_stops_at_the_first_unmappable_record() {
        let raw = r#"{"uri": "/p"}"#;
        let err = convert_antmonitor(raw, Strictness::Strict).unwrap_err();
        let core = err.downcast_ref::<Error>().expect("typed error");
        assert!(matches!(core, Error::MalformedRecord { line: 1, .. }), "{core:?}");

        let (packets, warnings) = convert_antmonitor(raw, Strictness::SkipInvalid).unwrap();
        assert!(packets.is_empty());
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].message.contains("missing host"));
    }

    #[test]
    fn empty_pii_types_label_negative_and_absent_labels_stay_unknown() {
        let raw =
            r#"{"host": "h.example", "uri": "/p", "pii_types": [], "label": "0"}"#;
        let (packets, _) = convert_antmonitor(raw, Strictness::Strict).unwrap();
        assert_eq!(packets[0].labels.pii, Some(false));
        assert_eq!(packets[0].labels.ad, Some(false));

        let raw = r#"{"host": "h.example", "uri": "/p"}"#;
        let (packets, _) = convert_antmonitor(raw, Strictness::Strict).unwrap();
        assert_eq!(packets[0].labels.pii, None);
        assert_eq!(packets[0].labels.ad, None);
    }
}
