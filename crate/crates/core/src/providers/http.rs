//! JSON-over-HTTP backend client.
//!
//! Every kind posts to `<base_url>/v1/<kind>` and every response carries
//! `model_id` and `dim`. Frames are sent by reference
//! (`{clip_id, source_uri, frame_index}`), never as pixels.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, FrameRef, ModelBackend, ProviderEndpoint, ProviderKind};
use crate::error::{Error, Result};

/// Endpoint per provider kind; kinds left unset are unavailable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpEndpoints {
    pub embed_image: Option<ProviderEndpoint>,
    pub embed_text: Option<ProviderEndpoint>,
    pub aesthetic: Option<ProviderEndpoint>,
    pub ocr_count: Option<ProviderEndpoint>,
    pub flow: Option<ProviderEndpoint>,
    pub chat: Option<ProviderEndpoint>,
    /// Prefix joined with the source video id to form `source_uri`.
    pub source_uri_prefix: String,
}

impl HttpEndpoints {
    pub fn get(&self, kind: ProviderKind) -> Option<&ProviderEndpoint> {
        match kind {
            ProviderKind::EmbedImage => self.embed_image.as_ref(),
            ProviderKind::EmbedText => self.embed_text.as_ref(),
            ProviderKind::Aesthetic => self.aesthetic.as_ref(),
            ProviderKind::OcrCount => self.ocr_count.as_ref(),
            ProviderKind::Flow => self.flow.as_ref(),
            ProviderKind::Chat => self.chat.as_ref(),
        }
    }

    fn slot(&mut self, kind: ProviderKind) -> &mut Option<ProviderEndpoint> {
        match kind {
            ProviderKind::EmbedImage => &mut self.embed_image,
            ProviderKind::EmbedText => &mut self.embed_text,
            ProviderKind::Aesthetic => &mut self.aesthetic,
            ProviderKind::OcrCount => &mut self.ocr_count,
            ProviderKind::Flow => &mut self.flow,
            ProviderKind::Chat => &mut self.chat,
        }
    }

    /// Every kind served from one base URL.
    pub fn uniform(endpoint: ProviderEndpoint) -> Self {
        let mut e = HttpEndpoints::default();
        for kind in ProviderKind::ALL {
            *e.slot(kind) = Some(endpoint.clone());
        }
        e
    }

    /// Applies `CFC_PROVIDER_URL_<KIND>` overrides.
    pub fn with_env_overrides(mut self) -> Self {
        for kind in ProviderKind::ALL {
            if let Ok(url) = std::env::var(kind.env_var()) {
                match self.slot(kind) {
                    Some(ep) => ep.base_url = url,
                    slot => *slot = Some(ProviderEndpoint::new(url)),
                }
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        ProviderKind::ALL
            .iter()
            .filter_map(|k| self.get(*k))
            .try_for_each(ProviderEndpoint::validate)
    }
}

/// Counting limiter with a high-water mark, one per endpoint.
#[derive(Debug)]
pub struct InFlightGauge {
    limit: usize,
    current: Mutex<usize>,
    released: Condvar,
    peak: AtomicUsize,
    requests: AtomicUsize,
}

pub struct InFlightPermit<'a>(&'a InFlightGauge);

impl InFlightGauge {
    pub fn new(limit: usize) -> Self {
        InFlightGauge {
            limit: limit.max(1),
            current: Mutex::new(0),
            released: Condvar::new(),
            peak: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut n = self.current.lock();
        while *n >= self.limit {
            self.released.wait(&mut n);
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        self.requests.fetch_add(1, Ordering::SeqCst);
        InFlightPermit(self)
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Highest concurrent request count observed.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    /// Total requests sent, retries included.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock();
        *n -= 1;
        self.0.released.notify_one();
    }
}

#[derive(Serialize)]
struct WireFrame<'a> {
    clip_id: &'a str,
    source_uri: String,
    frame_index: u64,
}

#[derive(Serialize)]
struct FramesBody<'a> {
    frames: Vec<WireFrame<'a>>,
}

#[derive(Serialize)]
struct TextsBody<'a> {
    texts: &'a [String],
}

#[derive(Serialize)]
struct WirePair<'a> {
    a: WireFrame<'a>,
    b: WireFrame<'a>,
}

#[derive(Serialize)]
struct PairsBody<'a> {
    pairs: Vec<WirePair<'a>>,
}

#[derive(Deserialize)]
struct VectorsReply {
    #[allow(dead_code)]
    model_id: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ScoresReply {
    #[allow(dead_code)]
    model_id: String,
    #[allow(dead_code)]
    dim: usize,
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct CountsReply {
    #[allow(dead_code)]
    model_id: String,
    #[allow(dead_code)]
    dim: usize,
    counts: Vec<i64>,
}

#[derive(Deserialize)]
struct FlowReply {
    #[allow(dead_code)]
    model_id: String,
    #[allow(dead_code)]
    dim: usize,
    magnitudes: Vec<f64>,
}

#[derive(Deserialize)]
struct ChatReply {
    #[allow(dead_code)]
    model_id: String,
    #[allow(dead_code)]
    dim: usize,
    answer: String,
}

pub struct HttpBackend {
    endpoints: HttpEndpoints,
    gauges: HashMap<ProviderKind, InFlightGauge>,
    client: reqwest::blocking::Client,
    dim: usize,
}

impl HttpBackend {
    pub fn new(endpoints: HttpEndpoints, dim: usize) -> Result<Self> {
        endpoints.validate()?;
        let gauges = ProviderKind::ALL
            .iter()
            .map(|k| {
                let limit = endpoints.get(*k).map_or(1, |e| e.max_in_flight);
                (*k, InFlightGauge::new(limit))
            })
            .collect();
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            endpoints,
            gauges,
            client,
            dim,
        })
    }

    pub fn gauge(&self, kind: ProviderKind) -> &InFlightGauge {
        &self.gauges[&kind]
    }

    fn wire<'a>(&self, f: &'a FrameRef) -> WireFrame<'a> {
        WireFrame {
            clip_id: &f.clip_id,
            source_uri: format!("{}{}", self.endpoints.source_uri_prefix, f.source_video_id),
            frame_index: f.frame_index,
        }
    }

    fn frames_body<'a>(&self, frames: &'a [FrameRef]) -> FramesBody<'a> {
        FramesBody {
            frames: frames.iter().map(|f| self.wire(f)).collect(),
        }
    }

    fn call<B: Serialize, R: DeserializeOwned>(&self, kind: ProviderKind, body: &B) -> Result<R> {
        let endpoint = self.endpoints.get(kind).ok_or_else(|| Error::ProviderUnavailable {
            kind,
            message: "no endpoint configured".into(),
        })?;
        let url = format!("{}/v1/{}", endpoint.base_url.trim_end_matches('/'), kind);
        let gauge = self.gauge(kind);
        let attempts = endpoint.retry_budget as usize + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(10 << attempt.min(6)));
            }
            let permit = gauge.acquire();
            let sent = self
                .client
                .post(&url)
                .timeout(Duration::from_millis(endpoint.timeout_ms))
                .json(body)
                .send();
            match sent {
                Ok(resp) if resp.status().is_success() => {
                    let parsed = resp.json::<R>();
                    drop(permit);
                    return parsed.map_err(|e| Error::ProtocolViolation {
                        kind,
                        message: format!("undecodable response: {e}"),
                    });
                }
                Ok(resp)
                    if resp.status().is_server_error()
                        || resp.status() == reqwest::StatusCode::TOO_MANY_REQUESTS =>
                {
                    last_error = format!("HTTP {}", resp.status());
                }
                Ok(resp) => {
                    return Err(Error::ProtocolViolation {
                        kind,
                        message: format!("HTTP {}", resp.status()),
                    });
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Error::ProviderUnavailable {
            kind,
            message: format!("{url}: {last_error} ({attempts} attempts)"),
        })
    }

    fn check_dim(&self, kind: ProviderKind, reply: VectorsReply) -> Result<Vec<Vec<f64>>> {
        if reply.dim != self.dim {
            return Err(Error::ProtocolViolation {
                kind,
                message: format!("backend dim {} but configured {}", reply.dim, self.dim),
            });
        }
        Ok(reply.vectors)
    }
}

impl ModelBackend for HttpBackend {
    fn model_id(&self) -> &str {
        "http"
    }

    fn embed_images(&self, frames: &[FrameRef]) -> Result<Vec<Vec<f64>>> {
        let reply: VectorsReply = self.call(ProviderKind::EmbedImage, &self.frames_body(frames))?;
        self.check_dim(ProviderKind::EmbedImage, reply)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let reply: VectorsReply = self.call(ProviderKind::EmbedText, &TextsBody { texts })?;
        self.check_dim(ProviderKind::EmbedText, reply)
    }

    fn aesthetic_scores(&self, frames: &[FrameRef]) -> Result<Vec<f64>> {
        let reply: ScoresReply = self.call(ProviderKind::Aesthetic, &self.frames_body(frames))?;
        Ok(reply.scores)
    }

    fn ocr_counts(&self, frames: &[FrameRef]) -> Result<Vec<i64>> {
        let reply: CountsReply = self.call(ProviderKind::OcrCount, &self.frames_body(frames))?;
        Ok(reply.counts)
    }

    fn flow_magnitudes(&self, pairs: &[(FrameRef, FrameRef)]) -> Result<Vec<f64>> {
        let body = PairsBody {
            pairs: pairs
                .iter()
                .map(|(a, b)| WirePair {
                    a: self.wire(a),
                    b: self.wire(b),
                })
                .collect(),
        };
        let reply: FlowReply = self.call(ProviderKind::Flow, &body)?;
        Ok(reply.magnitudes)
    }

    fn chat(&self, request: &ChatRequest) -> Result<String> {
        let reply: ChatReply = self.call(ProviderKind::Chat, request)?;
        Ok(reply.answer)
    }
}
