//! Synthetic packet corpus with a planted classification rule.
//!
//! Generated traffic mixes parameterized API calls, bare file fetches, and
//! parameter-free POSTs. A packet is positive exactly when its query string
//! carries one of the planted keys, optionally corrupted by label noise.
//! Token pools are prefix-disjoint (keys, cookie keys, header names, values,
//! paths, domains), so tests can tell at a glance which pool a leaked string
//! came from.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::WORD_DELIMITERS;
use crate::rng::rng_from_seed;
use crate::trace::{HttpPacket, Labels, Method};

const USER_AGENT: &str = "Mozilla/5.0 (Linux; Android 10; SDK built for x86)";

/// Shape of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub packets: usize,
    pub seed: u64,
    /// Query keys whose presence makes a packet positive.
    pub positive_keys: Vec<String>,
    /// Fraction of parameterized packets that carry a planted key.
    pub positive_rate: f64,
    /// Probability that an observed label contradicts the planted rule.
    pub noise: f64,
    /// Pool sizes for benign tokens.
    pub benign_uri_keys: usize,
    pub benign_cookie_keys: usize,
    pub custom_headers: usize,
    pub apps: usize,
    pub domains: usize,
    /// Fraction of packets that are bare file fetches (no parameters).
    pub file_request_rate: f64,
    /// Fraction of packets that are parameter-free POSTs.
    pub keyless_post_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> SynthSpec {
        SynthSpec {
            packets: 1000,
            seed: 0,
            positive_keys: vec!["gaid".to_string(), "adid".to_string()],
            positive_rate: 0.45,
            noise: 0.0,
            benign_uri_keys: 120,
            benign_cookie_keys: 40,
            custom_headers: 20,
            apps: 10,
            domains: 30,
            file_request_rate: 0.05,
            keyless_post_rate: 0.03,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.packets == 0 {
            return Err(Error::ConfigInvalid("corpus needs at least one packet".into()));
        }
        if self.positive_keys.is_empty() {
            return Err(Error::ConfigInvalid("at least one planted key is required".into()));
        }
        for key in &self.positive_keys {
            if key.is_empty() || key.contains(WORD_DELIMITERS) {
                return Err(Error::ConfigInvalid(format!(
                    "planted key {key:?} is empty or contains delimiter characters"
                )));
            }
        }
        for (name, v) in [
            ("positive_rate", self.positive_rate),
            ("noise", self.noise),
            ("file_request_rate", self.file_request_rate),
            ("keyless_post_rate", self.keyless_post_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ConfigInvalid(format!(
                    "{name} must be within [0, 1], got {v}"
                )));
            }
        }
        if self.file_request_rate + self.keyless_post_rate > 1.0 {
            return Err(Error::ConfigInvalid(
                "file_request_rate + keyless_post_rate must not exceed 1".into(),
            ));
        }
        if self.benign_uri_keys == 0 || self.apps == 0 || self.domains == 0 {
            return Err(Error::ConfigInvalid(
                "benign_uri_keys, apps, and domains must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn value(rng: &mut ChaCha8Rng) -> String {
    format!("v{:08x}", rng.random::<u32>())
}

/// Generates a corpus according to the spec. The same spec always produces
/// the same packets.
pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<HttpPacket>> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let mut packets = Vec::with_capacity(spec.packets);
    for i in 0..spec.packets {
        let id = format!("p{i:06}");
        let app = format!("com.example.app{:02}", rng.random_range(0..spec.apps));
        let domain = format!("host{:02}.example.com", rng.random_range(0..spec.domains));
        let ts = Some(1_600_000_000 + i as i64);
        let base_headers = |domain: &str| {
            vec![
                ("host".to_string(), domain.to_string()),
                ("user-agent".to_string(), USER_AGENT.to_string()),
                ("accept".to_string(), "*/*".to_string()),
            ]
        };

        let roll = rng.random::<f64>();
        let packet = if roll < spec.file_request_rate {
            HttpPacket {
                id,
                app,
                method: Method::Get,
                uri: format!("/assets/img{:03}.png", rng.random_range(0..500)),
                headers: base_headers(&domain),
                cookie: None,
                labels: Labels { pii: Some(false), ad: Some(false) },
                ts,
                domain,
            }
        } else if roll < spec.file_request_rate + spec.keyless_post_rate {
            let mut headers = base_headers(&domain);
            headers.push((
                "content-type".to_string(),
                "application/x-www-form-urlencoded".to_string(),
            ));
            HttpPacket {
                id,
                app,
                method: Method::Post,
                uri: format!("/api/v{}/submit", 1 + rng.random_range(0..3)),
                headers,
                cookie: None,
                labels: Labels { pii: Some(false), ad: Some(false) },
                ts,
                domain,
            }
        } else {
            let positive = rng.random::<f64>() < spec.positive_rate;
            let mut pairs: Vec<(String, String)> = Vec::new();
            if positive {
                let k = &spec.positive_keys[rng.random_range(0..spec.positive_keys.len())];
                pairs.push((k.clone(), value(&mut rng)));
                if spec.positive_keys.len() > 1 && rng.random::<f64>() < 0.3 {
                    let other =
                        &spec.positive_keys[rng.random_range(0..spec.positive_keys.len())];
                    if other != k {
                        pairs.push((other.clone(), value(&mut rng)));
                    }
                }
            }
            for _ in 0..rng.random_range(1..=4usize) {
                let k = format!("k{:03}", rng.random_range(0..spec.benign_uri_keys));
                pairs.push((k, value(&mut rng)));
            }
            pairs.shuffle(&mut rng);
            let query: Vec<String> =
                pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let uri = format!(
                "/api/v{}/endpoint{}?{}",
                1 + rng.random_range(0..3),
                rng.random_range(0..10),
                query.join("&")
            );

            let method = if rng.random::<f64>() < 0.2 { Method::Post } else { Method::Get };
            let mut headers = base_headers(&domain);
            if method == Method::Post {
                headers.push((
                    "content-type".to_string(),
                    "application/x-www-form-urlencoded".to_string(),
                ));
            }
            if spec.custom_headers > 0 && rng.random::<f64>() < 0.3 {
                let name = format!("x-custom{:02}", rng.random_range(0..spec.custom_headers));
                headers.push((name, value(&mut rng)));
            }
            let cookie = if spec.benign_cookie_keys > 0 && rng.random::<f64>() < 0.5 {
                let n = rng.random_range(1..=2usize);
                let parts: Vec<String> = (0..n)
                    .map(|_| {
                        format!(
                            "ck{:02}={}",
                            rng.random_range(0..spec.benign_cookie_keys),
                            value(&mut rng)
                        )
                    })
                    .collect();
                Some(parts.join("; "))
            } else {
                None
            };

            let observed = positive != (rng.random::<f64>() < spec.noise);
            HttpPacket {
                id,
                app,
                method,
                uri,
                headers,
                cookie,
                labels: Labels { pii: Some(observed), ad: Some(observed) },
                ts,
                domain,
            }
        };
        packets.push(packet);
    }
    Ok(packets)
}
