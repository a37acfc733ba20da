//! Rate-limited client for a Pushshift-compatible comment archive.
//!
//! The archive is queried with time windows: `after` (exclusive) and
//! `before` (exclusive) epoch seconds, a keyword `q` and a page `size`.
//! Responses are UTF-8 JSON objects with a `data` array of comments:
//!
//! ```json
//! {"data": [{"id": "e5x1", "body": "...", "created_utc": 1541030400,
//!            "link_id": "t3_9tq0", "parent_id": "t3_9tq0",
//!            "subreddit": "politics", "link_title": "...", "domain": "cnn.com"}]}
//! ```
//!
//! Only direct replies to the submission are yielded (`parent_id` absent or
//! equal to `link_id`). Requests from one client are spaced at least one
//! second apart, retries included.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{debug, warn};
use serde::{Deserialize, Deserializer, Serialize};
use url::Url;

use crate::error::{Error, Result};

/// Minimum spacing between two outbound requests of one client.
pub const MIN_REQUEST_INTERVAL: Duration = Duration::from_millis(1000);
/// Attempts per request before a transport failure is surfaced.
pub const MAX_ATTEMPTS: u32 = 3;
pub const MAX_PAGE_SIZE: u32 = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveQuery {
    pub subreddit_filter: Option<String>,
    /// `[start, end)` in UTC epoch seconds.
    pub time_range: (i64, i64),
    pub keyword_terms: Vec<String>,
    pub page_size: u32,
    pub endpoint_url: String,
}

impl ArchiveQuery {
    pub fn validate(&self) -> Result<Url> {
        let (start, end) = self.time_range;
        if start >= end {
            return Err(Error::Config(format!("empty time range [{start}, {end})")));
        }
        if self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(Error::Config(format!(
                "page_size must be in 1..={MAX_PAGE_SIZE}, got {}",
                self.page_size
            )));
        }
        Url::parse(&self.endpoint_url)
            .map_err(|e| Error::Config(format!("endpoint_url `{}`: {e}", self.endpoint_url)))
    }

    fn request_url(&self, base: &Url, from: i64) -> Url {
        let mut url = base.clone();
        {
            let mut qp = url.query_pairs_mut();
            if !self.keyword_terms.is_empty() {
                qp.append_pair("q", &self.keyword_terms.join("|"));
            }
            if let Some(sub) = &self.subreddit_filter {
                qp.append_pair("subreddit", sub);
            }
            qp.append_pair("after", &(from - 1).to_string());
            qp.append_pair("before", &self.time_range.1.to_string());
            qp.append_pair("size", &self.page_size.to_string());
            qp.append_pair("sort", "asc");
            qp.append_pair("sort_type", "created_utc");
        }
        url
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawComment {
    pub id: String,
    pub body: String,
    pub created_utc: i64,
    pub parent_submission_id: String,
    pub submission_title: String,
    pub subreddit: String,
    /// Host of the news outlet the submission linked to.
    pub source_domain: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub batch: Vec<RawComment>,
    pub next_cursor: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Issues a single GET. Errors are transport-level failures (connection,
/// timeout); HTTP error statuses come back as a normal response.
pub trait Transport {
    fn get(&mut self, url: &Url) -> std::result::Result<HttpResponse, String>;
}

/// Monotonic time source used by the throttle and retry backoff.
pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock that only advances when slept on. Clones share state, so a
/// test transport can read the time at which each request was issued.
#[derive(Debug, Clone, Default)]
pub struct ManualClock {
    now: Arc<Mutex<Duration>>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&mut self, d: Duration) {
        self.advance(d);
    }
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .user_agent(concat!("usvsthem/", env!("CARGO_PKG_VERSION")))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn get(&mut self, url: &Url) -> std::result::Result<HttpResponse, String> {
        let mut resp = self.agent.get(url.as_str()).call().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Offline transport that replays recorded responses, one file per request,
/// in lexicographic file-name order.
pub struct ReplayTransport {
    responses: Vec<Vec<u8>>,
    next: usize,
}

impl ReplayTransport {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let responses = paths.iter().map(fs::read).collect::<std::io::Result<Vec<_>>>()?;
        Ok(ReplayTransport { responses, next: 0 })
    }

    pub fn from_bodies(responses: Vec<Vec<u8>>) -> Self {
        ReplayTransport { responses, next: 0 }
    }
}

impl Transport for ReplayTransport {
    fn get(&mut self, _url: &Url) -> std::result::Result<HttpResponse, String> {
        let body = self
            .responses
            .get(self.next)
            .cloned()
            .unwrap_or_else(|| br#"{"data":[]}"#.to_vec());
        self.next += 1;
        Ok(HttpResponse { status: 200, body })
    }
}

/// Offline archive: loads comment objects from local response files (same
/// JSON shape as the service) and answers queries the way the service does.
#[derive(Debug, Clone, Default)]
pub struct LocalArchive {
    records: Vec<serde_json::Value>,
}

impl LocalArchive {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut records = Vec::new();
        for p in paths {
            let bytes = fs::read(&p)?;
            let resp: WireResponseValues = decode_json(&bytes)?;
            records.extend(resp.data);
        }
        Ok(LocalArchive { records })
    }

    pub fn from_records(records: Vec<serde_json::Value>) -> Self {
        LocalArchive { records }
    }
}

#[derive(Deserialize)]
struct WireResponseValues {
    data: Vec<serde_json::Value>,
}

impl Transport for LocalArchive {
    fn get(&mut self, url: &Url) -> std::result::Result<HttpResponse, String> {
        let params: BTreeMap<String, String> = url.query_pairs().into_owned().collect();
        let num = |k: &str| params.get(k).and_then(|v| v.parse::<i64>().ok());
        let after = num("after").unwrap_or(i64::MIN);
        let before = num("before").unwrap_or(i64::MAX);
        let size = num("size").unwrap_or(100).max(0) as usize;
        let terms: Vec<String> = params
            .get("q")
            .map(|q| q.split('|').map(|t| t.to_lowercase()).filter(|t| !t.is_empty()).collect())
            .unwrap_or_default();
        let sub = params.get("subreddit").map(|s| s.to_lowercase());

        let mut hits: Vec<(i64, &serde_json::Value)> = self
            .records
            .iter()
            .filter_map(|rec| {
                let t = rec.get("created_utc").and_then(json_epoch)?;
                if t <= after || t >= before {
                    return None;
                }
                if let Some(sub) = &sub {
                    let s = rec.get("subreddit").and_then(|v| v.as_str()).unwrap_or("");
                    if s.to_lowercase() != *sub {
                        return None;
                    }
                }
                if !terms.is_empty() {
                    let body = rec.get("body").and_then(|v| v.as_str()).unwrap_or("").to_lowercase();
                    if !terms.iter().any(|t| body.contains(t.as_str())) {
                        return None;
                    }
                }
                Some((t, rec))
            })
            .collect();
        hits.sort_by_key(|(t, _)| *t);
        hits.truncate(size);
        let data: Vec<&serde_json::Value> = hits.into_iter().map(|(_, r)| r).collect();
        let body = serde_json::to_vec(&serde_json::json!({ "data": data })).map_err(|e| e.to_string())?;
        Ok(HttpResponse { status: 200, body })
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    data: Vec<WireComment>,
}

#[derive(Debug, Deserialize)]
struct WireComment {
    id: String,
    #[serde(default)]
    body: String,
    #[serde(deserialize_with = "de_epoch")]
    created_utc: i64,
    #[serde(default)]
    link_id: String,
    #[serde(default)]
    parent_id: Option<String>,
    #[serde(default)]
    subreddit: String,
    #[serde(default)]
    link_title: String,
    #[serde(default)]
    domain: String,
}

impl WireComment {
    fn is_direct_reply(&self) -> bool {
        match &self.parent_id {
            None => true,
            Some(p) => p == &self.link_id,
        }
    }

    fn into_raw(self) -> RawComment {
        let parent = self.link_id.strip_prefix("t3_").unwrap_or(&self.link_id).to_string();
        RawComment {
            id: self.id,
            body: self.body,
            created_utc: self.created_utc,
            parent_submission_id: parent,
            submission_title: self.link_title,
            subreddit: self.subreddit,
            source_domain: self.domain.to_lowercase(),
        }
    }
}

fn json_epoch(v: &serde_json::Value) -> Option<i64> {
    match v {
        serde_json::Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f.floor() as i64)),
        serde_json::Value::String(s) => s.trim().parse::<f64>().ok().map(|f| f.floor() as i64),
        _ => None,
    }
}

fn de_epoch<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<i64, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    json_epoch(&v).ok_or_else(|| serde::de::Error::custom("created_utc is not an epoch timestamp"))
}

/// Parse a JSON payload, reporting failures with the byte offset at which the
/// decoder gave up.
fn decode_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    serde_json::from_str(text).map_err(|e| Error::Decode {
        offset: line_col_to_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

pub struct ArchiveClient<T, C = SystemClock> {
    transport: T,
    clock: C,
    last_request: Option<Duration>,
    retry_base: Duration,
}

impl<T: Transport> ArchiveClient<T, SystemClock> {
    pub fn new(transport: T) -> Self {
        Self::with_clock(transport, SystemClock::default())
    }
}

impl<T: Transport, C: Clock> ArchiveClient<T, C> {
    pub fn with_clock(transport: T, clock: C) -> Self {
        ArchiveClient {
            transport,
            clock,
            last_request: None,
            retry_base: Duration::from_secs(1),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn throttle(&mut self) {
        if let Some(last) = self.last_request {
            let ready_at = last + MIN_REQUEST_INTERVAL;
            let now = self.clock.now();
            if now < ready_at {
                self.clock.sleep(ready_at - now);
            }
        }
        self.last_request = Some(self.clock.now());
    }

    fn get_with_retry(&mut self, url: &Url) -> Result<HttpResponse> {
        let mut last_err = String::new();
        for attempt in 1..=MAX_ATTEMPTS {
            self.throttle();
            debug!("GET {url} (attempt {attempt})");
            match self.transport.get(url) {
                Ok(resp) => return Ok(resp),
                Err(e) => {
                    warn!("request failed (attempt {attempt}/{MAX_ATTEMPTS}): {e}");
                    last_err = e;
                    if attempt < MAX_ATTEMPTS {
                        let backoff = self.retry_base * 2u32.pow(attempt - 1);
                        self.clock.sleep(backoff);
                    }
                }
            }
        }
        Err(Error::Transport { attempts: MAX_ATTEMPTS, message: last_err })
    }

    /// Fetch one page starting at `cursor` (or the start of the range).
    pub fn fetch_page(&mut self, query: &ArchiveQuery, cursor: Option<i64>) -> Result<Page> {
        let base = query.validate()?;
        let (start, end) = query.time_range;
        let from = cursor.unwrap_or(start);
        if from < start || from >= end {
            return Err(Error::Config(format!("cursor {from} outside [{start}, {end})")));
        }
        let url = query.request_url(&base, from);
        let resp = self.get_with_retry(&url)?;
        if resp.status >= 400 {
            return Err(Error::Status { status: resp.status, url: url.to_string() });
        }
        let wire: WireResponse = decode_json(&resp.body)?;

        let mut records: Vec<WireComment> = wire
            .data
            .into_iter()
            .filter(|c| c.created_utc >= from && c.created_utc < end && !c.id.is_empty())
            .collect();
        records.sort_by(|a, b| a.created_utc.cmp(&b.created_utc).then_with(|| a.id.cmp(&b.id)));
        records.truncate(query.page_size as usize);

        let next_cursor = if records.len() < query.page_size as usize {
            None
        } else {
            let next = records.last().map(|c| c.created_utc + 1).unwrap_or(end);
            (next < end).then_some(next)
        };
        let batch = records
            .into_iter()
            .filter(WireComment::is_direct_reply)
            .map(WireComment::into_raw)
            .collect();
        Ok(Page { batch, next_cursor })
    }

    /// Page through the whole range. Ids are deduplicated, keeping the first
    /// occurrence; the result is ordered by `created_utc`.
    pub fn fetch_range(&mut self, query: &ArchiveQuery) -> Result<Vec<RawComment>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut cursor = None;
        loop {
            let page = self.fetch_page(query, cursor)?;
            for c in page.batch {
                if seen.insert(c.id.clone()) {
                    out.push(c);
                }
            }
            match page.next_cursor {
                Some(next) => cursor = Some(next),
                None => break,
            }
        }
        out.sort_by_key(|c| c.created_utc);
        Ok(out)
    }
}
