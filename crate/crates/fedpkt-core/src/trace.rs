//! Packet trace parsing, emission, and corpus summaries.
//!
//! Traces use a canonical line-delimited JSON format, one record per outgoing
//! HTTP request:
//!
//! ```json
//! {"id":"p1","app":"com.example","method":"GET","domain":"ads.example.com",
//!  "uri":"/path?key=value","headers":[["host","ads.example.com"]],
//!  "cookie":"sid=abc","labels":{"pii":true,"ad":false},"ts":1}
//! ```
//!
//! Header names are lowercased on parse. A `cookie` header is promoted into
//! the dedicated `cookie` field and removed from the header list, so
//! downstream feature extraction sees cookies exactly once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureKind, StandardHeaders};

/// HTTP request method of a captured packet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Method {
    Get,
    Post,
    /// Any other method, preserved as captured.
    Other(String),
}

impl Method {
    /// Wire representation of the method.
    pub fn as_str(&self) -> &str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Other(s) => s,
        }
    }

    fn from_wire(s: &str) -> Method {
        let trimmed = s.trim();
        match trimmed.to_ascii_uppercase().as_str() {
            "GET" => Method::Get,
            "POST" => Method::Post,
            _ => Method::Other(trimmed.to_string()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground-truth labels attached to a packet, when known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub pii: Option<bool>,
    pub ad: Option<bool>,
}

/// One outgoing HTTP request captured on a device.
#[derive(Debug, Clone, PartialEq)]
pub struct HttpPacket {
    pub id: String,
    pub app: String,
    pub method: Method,
    pub domain: String,
    /// Request target; always starts with `/`.
    pub uri: String,
    /// Header name/value pairs, names lowercased, capture order preserved.
    /// Never contains a `cookie` entry; see [`HttpPacket::cookie`].
    pub headers: Vec<(String, String)>,
    pub cookie: Option<String>,
    pub labels: Labels,
    pub ts: Option<i64>,
}

/// How to treat records that fail to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Any malformed record aborts parsing with an error.
    Strict,
    /// Malformed records are skipped and reported as warnings.
    SkipInvalid,
}

/// A non-fatal observation made while parsing a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Wire-format record; field order here defines the emitted JSON layout.
#[derive(Serialize, Deserialize)]
struct WireRecord {
    id: String,
    app: String,
    method: String,
    domain: String,
    uri: String,
    headers: Vec<(String, String)>,
    cookie: Option<String>,
    #[serde(default)]
    labels: Labels,
    ts: Option<i64>,
    #[serde(flatten, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, serde_json::Value>,
}

impl WireRecord {
    fn from_packet(p: &HttpPacket) -> WireRecord {
        WireRecord {
            id: p.id.clone(),
            app: p.app.clone(),
            method: p.method.as_str().to_string(),
            domain: p.domain.clone(),
            uri: p.uri.clone(),
            headers: p.headers.clone(),
            cookie: p.cookie.clone(),
            labels: p.labels,
            ts: p.ts,
            extra: BTreeMap::new(),
        }
    }

    /// Validates and normalizes a wire record into a packet, collecting
    /// record-level warnings.
    fn into_packet(self, warnings: &mut Vec<String>) -> std::result::Result<HttpPacket, String> {
        if self.method.trim().is_empty() {
            return Err("empty method".to_string());
        }
        if !self.uri.starts_with('/') {
            return Err(format!("uri must start with '/': {:?}", self.uri));
        }
        if !self.extra.is_empty() {
            let keys: Vec<&str> = self.extra.keys().map(String::as_str).collect();
            warnings.push(format!("ignored unknown keys: {}", keys.join(", ")));
        }

        let mut headers = Vec::with_capacity(self.headers.len());
        let mut header_cookies: Vec<String> = Vec::new();
        for (name, value) in self.headers {
            let name = name.trim().to_ascii_lowercase();
            if name.is_empty() {
                return Err("empty header name".to_string());
            }
            if name == "cookie" {
                header_cookies.push(value);
            } else {
                headers.push((name, value));
            }
        }

        let field_cookie = self.cookie.filter(|c| !c.is_empty());
        let cookie = match (field_cookie, header_cookies.is_empty()) {
            (Some(c), true) => Some(c),
            (Some(c), false) => {
                warnings.push("cookie header dropped in favor of cookie field".to_string());
                Some(c)
            }
            (None, true) => None,
            (None, false) => Some(header_cookies.join("; ")),
        };

        Ok(HttpPacket {
            id: self.id,
            app: self.app,
            method: Method::from_wire(&self.method),
            domain: self.domain,
            uri: self.uri,
            headers,
            cookie,
            labels: self.labels,
            ts: self.ts,
        })
    }
}

/// Parses a canonical trace stream.
///
/// Blank lines are skipped. Under [`Strictness::Strict`] the first malformed
/// record aborts with [`Error::MalformedRecord`]; under
/// [`Strictness::SkipInvalid`] malformed records are dropped and reported in
/// the returned warnings. Records with unknown top-level keys parse fine but
/// produce a warning either way.
pub fn parse_trace<R: BufRead>(
    reader: R,
    strictness: Strictness,
) -> Result<(Vec<HttpPacket>, Vec<ParseWarning>)> {
    let mut packets = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<HttpPacket, String> = serde_json::from_str::<WireRecord>(
            &line,
        )
        .map_err(|e| e.to_string())
        .and_then(|rec| {
            let mut record_warnings = Vec::new();
            let packet = rec.into_packet(&mut record_warnings)?;
            for w in record_warnings {
                warnings.push(ParseWarning { line: line_no, message: w });
            }
            Ok(packet)
        });
        match parsed {
            Ok(p) => packets.push(p),
            Err(reason) => match strictness {
                Strictness::Strict => {
                    return Err(Error::MalformedRecord { line: line_no, reason });
                }
                Strictness::SkipInvalid => {
                    warnings.push(ParseWarning {
                        line: line_no,
                        message: format!("skipped malformed record: {reason}"),
                    });
                }
            },
        }
    }
    Ok((packets, warnings))
}

/// Parses a trace held in memory; see [`parse_trace`].
pub fn parse_trace_str(
    text: &str,
    strictness: Strictness,
) -> Result<(Vec<HttpPacket>, Vec<ParseWarning>)> {
    parse_trace(text.as_bytes(), strictness)
}

/// Writes packets in the canonical line-delimited JSON format.
///
/// Emitting and re-parsing a parsed trace reproduces it exactly.
pub fn emit_trace<W: Write>(packets: &[HttpPacket], mut writer: W) -> Result<()> {
    for p in packets {
        let rec = WireRecord::from_packet(p);
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Renders packets to a canonical trace string; see [`emit_trace`].
pub fn emit_trace_string(packets: &[HttpPacket]) -> String {
    let mut buf = Vec::new();
    emit_trace(packets, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("canonical trace output is UTF-8")
}

/// Per-app portion of a [`DatasetSummary`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AppSummary {
    pub packets: usize,
    /// Distinct extracted features across the app's packets.
    pub feature_count: usize,
    /// Distinct contacted domains.
    pub domain_count: usize,
}

/// Corpus-level statistics over a parsed trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub packet_count: usize,
    pub positive_pii: usize,
    pub positive_ad: usize,
    /// Distinct URI query keys across the corpus.
    pub uri_key_count: usize,
    /// Distinct cookie keys across the corpus.
    pub cookie_key_count: usize,
    /// Distinct non-standard header names across the corpus.
    pub custom_header_count: usize,
    /// Packets whose only feature is the file-request flag.
    pub file_request_only_count: usize,
    /// Packets with no extracted features at all.
    pub keyless_count: usize,
    /// Keyless packets sent with POST.
    pub keyless_post_count: usize,
    pub distinct_domains: usize,
    pub per_app: BTreeMap<String, AppSummary>,
}

/// Computes corpus statistics in one pass over the packets.
pub fn summarize(packets: &[HttpPacket], standard: &StandardHeaders) -> DatasetSummary {
    let mut uri_keys = BTreeSet::new();
    let mut cookie_keys = BTreeSet::new();
    let mut custom_headers = BTreeSet::new();
    let mut domains = BTreeSet::new();
    let mut per_app_features: BTreeMap<&str, BTreeSet<features::Feature>> = BTreeMap::new();
    let mut per_app_domains: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut per_app_packets: BTreeMap<&str, usize> = BTreeMap::new();

    let mut positive_pii = 0;
    let mut positive_ad = 0;
    let mut file_request_only = 0;
    let mut keyless = 0;
    let mut keyless_post = 0;

    for p in packets {
        if p.labels.pii == Some(true) {
            positive_pii += 1;
        }
        if p.labels.ad == Some(true) {
            positive_ad += 1;
        }
        domains.insert(p.domain.as_str());

        let feats = features::extract_http_keys(p, standard);
        if feats.is_empty() {
            keyless += 1;
            if p.method == Method::Post {
                keyless_post += 1;
            }
        } else if feats.iter().any(|f| f.kind == FeatureKind::FileRequest) {
            file_request_only += 1;
        }
        for f in &feats {
            match f.kind {
                FeatureKind::UriKey => {
                    uri_keys.insert(f.token.clone());
                }
                FeatureKind::CookieKey => {
                    cookie_keys.insert(f.token.clone());
                }
                FeatureKind::CustomHeader => {
                    custom_headers.insert(f.token.clone());
                }
                FeatureKind::FileRequest | FeatureKind::Word => {}
            }
        }

        *per_app_packets.entry(p.app.as_str()).or_default() += 1;
        per_app_features.entry(p.app.as_str()).or_default().extend(feats);
        per_app_domains.entry(p.app.as_str()).or_default().insert(p.domain.as_str());
    }

    let per_app = per_app_packets
        .iter()
        .map(|(&app, &count)| {
            (
                app.to_string(),
                AppSummary {
                    packets: count,
                    feature_count: per_app_features.get(app).map_or(0, BTreeSet::len),
                    domain_count: per_app_domains.get(app).map_or(0, BTreeSet::len),
                },
            )
        })
        .collect();

    DatasetSummary {
        packet_count: packets.len(),
        positive_pii,
        positive_ad,
        uri_key_count: uri_keys.len(),
        cookie_key_count: cookie_keys.len(),
        custom_header_count: custom_headers.len(),
        file_request_only_count: file_request_only,
        keyless_count: keyless,
        keyless_post_count: keyless_post,
        distinct_domains: domains.len(),
        per_app,
    }
}

/// Groups packets by app id, preserving capture order within each app.
pub fn partition_by_app(packets: &[HttpPacket]) -> BTreeMap<String, Vec<HttpPacket>> {
    let mut out: BTreeMap<String, Vec<HttpPacket>> = BTreeMap::new();
    for p in packets {
        out.entry(p.app.clone()).or_default().push(p.clone());
    }
    out
}
