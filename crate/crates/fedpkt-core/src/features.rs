//! Feature extraction and vocabulary management.
//!
//! The primary feature space consists of "HTTP keys": URI query-string keys,
//! cookie keys, custom (non-standard) header names, and a flag for parameter
//! free GET requests that fetch plain files. Values, URI paths, and domains
//! never become features, so extraction cannot leak the payload content it
//! classifies.
//!
//! Two word-based feature spaces are included for comparison: `all_words`
//! tokenizes the whole serialized request, and `recon_words` approximates a
//! word filter that drops stopwords and tokens that appear as values.
//!
//! Vocabularies are frozen at construction: features are sorted
//! lexicographically by (kind, token) and indices never change afterwards.
//! Encoding against a vocabulary drops out-of-vocabulary features and reports
//! how many were dropped.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::trace::{HttpPacket, Method};

/// Delimiters used to tokenize serialized requests in the word-based modes.
pub const WORD_DELIMITERS: &[char] = &[
    '=', '&', ';', ',', ':', '/', '?', ' ', '"', '{', '}', '[', ']', '\r', '\n',
];

/// The kind of a feature; kinds namespace tokens so a query key named
/// `sid` and a cookie key named `sid` stay distinct features.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    UriKey,
    CookieKey,
    CustomHeader,
    FileRequest,
    Word,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::UriKey => "uri_key",
            FeatureKind::CookieKey => "cookie_key",
            FeatureKind::CustomHeader => "custom_header",
            FeatureKind::FileRequest => "file_request",
            FeatureKind::Word => "word",
        }
    }

    fn from_str(s: &str) -> Option<FeatureKind> {
        Some(match s {
            "uri_key" => FeatureKind::UriKey,
            "cookie_key" => FeatureKind::CookieKey,
            "custom_header" => FeatureKind::CustomHeader,
            "file_request" => FeatureKind::FileRequest,
            "word" => FeatureKind::Word,
            _ => return None,
        })
    }
}

/// One binary feature: a kind plus a token.
///
/// Tokens never contain whitespace; the file-request flag has an empty token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub kind: FeatureKind,
    pub token: String,
}

impl Feature {
    pub fn uri_key(token: impl Into<String>) -> Feature {
        Feature { kind: FeatureKind::UriKey, token: token.into() }
    }

    pub fn cookie_key(token: impl Into<String>) -> Feature {
        Feature { kind: FeatureKind::CookieKey, token: token.into() }
    }

    pub fn custom_header(token: impl Into<String>) -> Feature {
        Feature { kind: FeatureKind::CustomHeader, token: token.into() }
    }

    pub fn file_request() -> Feature {
        Feature { kind: FeatureKind::FileRequest, token: String::new() }
    }

    pub fn word(token: impl Into<String>) -> Feature {
        Feature { kind: FeatureKind::Word, token: token.into() }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.token.is_empty() {
            f.write_str(self.kind.as_str())
        } else {
            write!(f, "{}:{}", self.kind.as_str(), self.token)
        }
    }
}

/// Which feature space a vocabulary or extraction run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    HttpKeys,
    #[serde(alias = "recon_words_approx")]
    ReconWords,
    AllWords,
}

impl FeatureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::HttpKeys => "http_keys",
            FeatureMode::ReconWords => "recon_words",
            FeatureMode::AllWords => "all_words",
        }
    }

    pub fn parse(s: &str) -> Option<FeatureMode> {
        Some(match s {
            "http_keys" => FeatureMode::HttpKeys,
            "recon_words" | "recon_words_approx" => FeatureMode::ReconWords,
            "all_words" => FeatureMode::AllWords,
            _ => return None,
        })
    }
}

/// The set of standard HTTP header names; header names outside this set are
/// treated as custom app-identifying headers.
#[derive(Debug, Clone)]
pub struct StandardHeaders {
    names: HashSet<String>,
}

static BUNDLED_HEADERS: OnceLock<StandardHeaders> = OnceLock::new();

impl StandardHeaders {
    /// The list bundled with the crate (IANA-style permanent registry names).
    pub fn bundled() -> &'static StandardHeaders {
        BUNDLED_HEADERS.get_or_init(|| {
            StandardHeaders::from_lines(include_str!("../data/standard_headers.txt").lines())
        })
    }

    /// Builds a set from lines; blank lines and `#` comments are skipped and
    /// names are lowercased.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> StandardHeaders {
        let names = lines
            .into_iter()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_ascii_lowercase)
            .collect();
        StandardHeaders { names }
    }

    /// Reads a header list in the same one-name-per-line format.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<StandardHeaders> {
        let mut collected = Vec::new();
        for line in reader.lines() {
            collected.push(line?);
        }
        Ok(StandardHeaders::from_lines(collected.iter().map(String::as_str)))
    }

    /// Whether `name` is a standard header; matching is case-insensitive.
    pub fn contains(&self, name: &str) -> bool {
        if self.names.contains(name) {
            return true;
        }
        self.names.contains(&name.to_ascii_lowercase())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Iterates the lowercased names.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

fn hex_value(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'a'..=b'f' => Some(b - b'a' + 10),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Decodes a form-encoded component: `+` becomes a space and `%XX` escapes
/// are resolved; invalid escapes pass through unchanged.
fn decode_form_component(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'+' => {
                out.push(b' ');
                i += 1;
            }
            b'%' => {
                let pair = (
                    bytes.get(i + 1).copied().and_then(hex_value),
                    bytes.get(i + 2).copied().and_then(hex_value),
                );
                if let (Some(hi), Some(lo)) = pair {
                    out.push(hi * 16 + lo);
                    i += 3;
                } else {
                    out.push(b'%');
                    i += 1;
                }
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn strip_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// The query portion of a request target, if any (between `?` and `#`).
fn query_of(uri: &str) -> Option<&str> {
    let (_, after) = uri.split_once('?')?;
    Some(after.split('#').next().unwrap_or(after))
}

/// Extracts normalized query keys from a request target. Keys are
/// form-decoded, stripped of whitespace, and deduplicated by the caller's
/// set; empty keys are dropped. Values are never returned.
fn query_keys(uri: &str) -> Vec<String> {
    let Some(query) = query_of(uri) else {
        return Vec::new();
    };
    query
        .split('&')
        .map(|segment| segment.split('=').next().unwrap_or(segment))
        .map(decode_form_component)
        .map(|k| strip_whitespace(&k))
        .filter(|k| !k.is_empty())
        .collect()
}

/// Extracts cookie keys from a cookie string (`k=v; k2=v2`). Values are
/// never returned.
fn cookie_keys(cookie: &str) -> Vec<String> {
    cookie
        .split(';')
        .map(|pair| pair.split('=').next().unwrap_or(pair))
        .map(strip_whitespace)
        .filter(|k| !k.is_empty())
        .collect()
}

/// Extracts the HTTP-key features of a packet: URI query keys, cookie keys,
/// and custom header names. A parameter-free GET request gets the single
/// file-request flag instead. Values, URI paths, and domains are never
/// consulted for tokens, and POST bodies are never parsed.
pub fn extract_http_keys(packet: &HttpPacket, standard: &StandardHeaders) -> BTreeSet<Feature> {
    let mut out = BTreeSet::new();
    for key in query_keys(&packet.uri) {
        out.insert(Feature::uri_key(key));
    }
    if let Some(cookie) = &packet.cookie {
        for key in cookie_keys(cookie) {
            out.insert(Feature::cookie_key(key));
        }
    }
    for (name, _value) in &packet.headers {
        if !standard.contains(name) {
            let clean = strip_whitespace(name);
            if !clean.is_empty() {
                out.insert(Feature::custom_header(clean));
            }
        }
    }
    if out.is_empty() && packet.method == Method::Get {
        out.insert(Feature::file_request());
    }
    out
}

/// Whether a packet yields no features at all: no keys anywhere and not a
/// file request. Keyless packets carry no usable signal and are excluded
/// from training.
pub fn is_keyless(packet: &HttpPacket, standard: &StandardHeaders) -> bool {
    extract_http_keys(packet, standard).is_empty()
}

/// Serializes a packet the way it would appear on the wire (request line,
/// headers, cookie), for word tokenization.
fn serialize_packet(packet: &HttpPacket) -> String {
    let mut s = format!("{} {}", packet.method.as_str(), packet.uri);
    for (name, value) in &packet.headers {
        s.push_str("\r\n");
        s.push_str(name);
        s.push_str(": ");
        s.push_str(value);
    }
    if let Some(cookie) = &packet.cookie {
        s.push_str("\r\ncookie: ");
        s.push_str(cookie);
    }
    s
}

fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.split(WORD_DELIMITERS).filter(|t| !t.is_empty())
}

/// All distinct word tokens of the serialized request.
pub fn extract_all_words(packet: &HttpPacket) -> BTreeSet<Feature> {
    tokenize(&serialize_packet(packet)).map(Feature::word).collect()
}

/// Tokens that appear as the value side of `k=v` pairs in the query string
/// or cookie; used to filter the word space down to key-like tokens.
fn value_tokens(packet: &HttpPacket) -> HashSet<String> {
    let mut values = HashSet::new();
    let mut add_value = |v: &str| {
        for tok in tokenize(v) {
            values.insert(tok.to_string());
        }
    };
    if let Some(query) = query_of(&packet.uri) {
        for segment in query.split('&') {
            if let Some((_, v)) = segment.split_once('=') {
                add_value(v);
            }
        }
    }
    if let Some(cookie) = &packet.cookie {
        for pair in cookie.split(';') {
            if let Some((_, v)) = pair.split_once('=') {
                add_value(v);
            }
        }
    }
    values
}

/// Builds the stopword set for the filtered word mode: standard header names
/// plus the most document-frequent `top_fraction` of word tokens across the
/// corpus.
pub fn build_recon_stopwords(
    packets: &[HttpPacket],
    standard: &StandardHeaders,
    top_fraction: f64,
) -> BTreeSet<String> {
    let mut stop: BTreeSet<String> = standard.names().map(str::to_string).collect();
    if top_fraction <= 0.0 || packets.is_empty() {
        return stop;
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for p in packets {
        let wire = serialize_packet(p);
        let distinct: BTreeSet<&str> = tokenize(&wire).collect();
        for tok in distinct {
            *df.entry(tok.to_string()).or_default() += 1;
        }
    }
    let take = ((df.len() as f64) * top_fraction).round() as usize;
    let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    stop.extend(ranked.into_iter().take(take).map(|(tok, _)| tok));
    stop
}

/// Word tokens with stopwords and value-side tokens removed; approximates a
/// key-oriented word space without hand-tuned per-app rules.
pub fn extract_recon_words(
    packet: &HttpPacket,
    stopwords: &BTreeSet<String>,
) -> BTreeSet<Feature> {
    let values = value_tokens(packet);
    tokenize(&serialize_packet(packet))
        .filter(|t| !stopwords.contains(*t) && !values.contains(*t))
        .map(Feature::word)
        .collect()
}

/// Extracts a packet's features in the requested mode. `stopwords` is only
/// consulted in [`FeatureMode::ReconWords`].
pub fn extract_features(
    packet: &HttpPacket,
    mode: FeatureMode,
    standard: &StandardHeaders,
    stopwords: &BTreeSet<String>,
) -> BTreeSet<Feature> {
    match mode {
        FeatureMode::HttpKeys => extract_http_keys(packet, standard),
        FeatureMode::AllWords => extract_all_words(packet),
        FeatureMode::ReconWords => extract_recon_words(packet, stopwords),
    }
}

/// A frozen, lexicographically ordered feature index.
///
/// Indices are assigned by sorting features by (kind, token) and never change
/// afterwards; encoding drops features that are not present.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    mode: FeatureMode,
    min_df: usize,
    features: Vec<Feature>,
    index: HashMap<Feature, usize>,
    frozen: bool,
}

impl Vocabulary {
    fn from_sorted(features: Vec<Feature>, mode: FeatureMode, min_df: usize) -> Vocabulary {
        debug_assert!(features.windows(2).all(|w| w[0] < w[1]));
        let index = features.iter().cloned().zip(0..).collect();
        Vocabulary { mode, min_df, features, index, frozen: true }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    /// Always true for a built vocabulary; kept explicit because encoding is
    /// only defined against a frozen index.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn index_of(&self, feature: &Feature) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn feature(&self, index: usize) -> Option<&Feature> {
        self.features.get(index)
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Stable content fingerprint; models record it so mismatched
    /// model/vocabulary pairs are detected.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_file_string().as_bytes()))
    }

    /// Canonical text serialization: a header line, then one
    /// `kind<TAB>token` line per feature in index order.
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "#fedpkt-vocab/1\tmode={}\tmin_df={}\n",
            self.mode.as_str(),
            self.min_df
        );
        for f in &self.features {
            out.push_str(f.kind.as_str());
            out.push('\t');
            out.push_str(&f.token);
            out.push('\n');
        }
        out
    }

    /// Parses the canonical serialization produced by [`to_file_string`].
    ///
    /// [`to_file_string`]: Vocabulary::to_file_string
    pub fn from_file_str(text: &str) -> Result<Vocabulary> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::ConfigInvalid("empty vocabulary file".to_string()))?;
        let mut parts = header.split('\t');
        if parts.next() != Some("#fedpkt-vocab/1") {
            return Err(Error::ConfigInvalid(
                "vocabulary file missing #fedpkt-vocab/1 header".to_string(),
            ));
        }
        let mut mode = None;
        let mut min_df = None;
        for part in parts {
            if let Some(m) = part.strip_prefix("mode=") {
                mode = FeatureMode::parse(m);
            } else if let Some(d) = part.strip_prefix("min_df=") {
                min_df = d.parse::<usize>().ok();
            }
        }
        let mode = mode
            .ok_or_else(|| Error::ConfigInvalid("vocabulary header lacks a valid mode".into()))?;
        let min_df = min_df
            .ok_or_else(|| Error::ConfigInvalid("vocabulary header lacks a valid min_df".into()))?;

        let mut features = Vec::new();
        for (i, line) in lines.enumerate() {
            let (kind, token) = line.split_once('\t').ok_or_else(|| {
                Error::ConfigInvalid(format!("vocabulary line {} lacks a tab", i + 2))
            })?;
            let kind = FeatureKind::from_str(kind).ok_or_else(|| {
                Error::ConfigInvalid(format!("unknown feature kind {kind:?} on line {}", i + 2))
            })?;
            features.push(Feature { kind, token: token.to_string() });
        }
        if !features.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::ConfigInvalid(
                "vocabulary file is not in sorted order".to_string(),
            ));
        }
        Ok(Vocabulary::from_sorted(features, mode, min_df))
    }
}

/// Builds a frozen vocabulary from per-packet feature sets, keeping features
/// whose document frequency is at least `min_df` (values below 1 are treated
/// as 1).
pub fn build_vocabulary(
    feature_sets: &[BTreeSet<Feature>],
    mode: FeatureMode,
    min_df: usize,
) -> Vocabulary {
    let min_df = min_df.max(1);
    let mut df: HashMap<&Feature, usize> = HashMap::new();
    for set in feature_sets {
        for f in set {
            *df.entry(f).or_default() += 1;
        }
    }
    let mut kept: Vec<Feature> =
        df.into_iter().filter(|&(_, c)| c >= min_df).map(|(f, _)| f.clone()).collect();
    kept.sort_unstable();
    Vocabulary::from_sorted(kept, mode, min_df)
}

/// A multi-hot encoded training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    /// Strictly increasing vocabulary indices of the present features.
    pub indices: Vec<usize>,
    /// +1 for the positive class, -1 for the negative class.
    pub label: i8,
    /// Example weight; reserved, always 1.0 for now.
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Id of the packet this example came from.
    pub origin_packet_id: String,
}

fn default_weight() -> f64 {
    1.0
}

/// Encodes a feature set against a frozen vocabulary. The boolean label maps
/// to +1/-1. Out-of-vocabulary features are dropped; the count of dropped
/// features is returned alongside the example.
pub fn encode(
    features: &BTreeSet<Feature>,
    label: bool,
    vocab: &Vocabulary,
    origin_packet_id: &str,
) -> (EncodedExample, usize) {
    let mut indices = Vec::with_capacity(features.len());
    let mut dropped = 0;
    for f in features {
        match vocab.index_of(f) {
            Some(i) => indices.push(i),
            None => dropped += 1,
        }
    }
    indices.sort_unstable();
    indices.dedup();
    let example = EncodedExample {
        indices,
        label: if label { 1 } else { -1 },
        weight: 1.0,
        origin_packet_id: origin_packet_id.to_string(),
    };
    (example, dropped)
}

/// Intersection and union sizes across vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabOverlap {
    pub intersection: usize,
    pub union: usize,
}

/// Computes feature overlap across vocabularies of the same mode.
pub fn vocab_overlap(vocabs: &[&Vocabulary]) -> Result<VocabOverlap> {
    let Some(first) = vocabs.first() else {
        return Err(Error::EmptyInput("vocab_overlap needs at least one vocabulary".into()));
    };
    if let Some(other) = vocabs.iter().find(|v| v.mode() != first.mode()) {
        return Err(Error::ModeMismatch(format!(
            "cannot compare {} with {}",
            first.mode().as_str(),
            other.mode().as_str()
        )));
    }
    let mut union: BTreeSet<&Feature> = BTreeSet::new();
    let mut intersection: Option<BTreeSet<&Feature>> = None;
    for v in vocabs {
        let set: BTreeSet<&Feature> = v.features().iter().collect();
        union.extend(set.iter().copied());
        intersection = Some(match intersection {
            None => set,
            Some(acc) => acc.intersection(&set).copied().collect(),
        });
    }
    Ok(VocabOverlap {
        intersection: intersection.map_or(0, |s| s.len()),
        union: union.len(),
    })
}
