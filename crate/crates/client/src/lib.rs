//! Clients for the HTTP services (TEDS authoring, NCAP control) and for the
//! NCAP's line-oriented sample stream.

use std::time::Duration;

use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use snaas_core::authoring::Receipt;
use snaas_core::ident::uuid_hex;
use snaas_core::ncap::{
    ChannelModel, ChannelRuntimeState, ChannelUpdate, DeviceDetail, DeviceSummary, SampleEvent,
    StageLatencyRecord,
};
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{status}: {kind}: {message}")]
    Api {
        status: StatusCode,
        kind: String,
        message: String,
    },
    #[error("stream: {0}")]
    Stream(String),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
            ClientError::Stream(_) => None,
        }
    }

    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    message: String,
}

async fn check(resp: Response) -> Result<Response, ClientError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await.unwrap_or_default();
    let (kind, message) = match serde_json::from_str::<ErrorBody>(&text) {
        Ok(b) => (b.error, b.message),
        Err(_) => ("http".to_string(), text),
    };
    Err(ClientError::Api {
        status,
        kind,
        message,
    })
}

async fn json<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
    Ok(check(resp).await?.json().await?)
}

async fn text(resp: Response) -> Result<String, ClientError> {
    Ok(check(resp).await?.text().await?)
}

fn base_url(addr: &str) -> String {
    let trimmed = addr.trim_end_matches('/');
    if trimmed.starts_with("http://") || trimmed.starts_with("https://") {
        trimmed.to_string()
    } else {
        format!("http://{trimmed}")
    }
}

fn http() -> reqwest::Client {
    reqwest::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .expect("static client configuration")
}

/// Client for the NCAP control API.
#[derive(Debug, Clone)]
pub struct ControlClient {
    base: String,
    http: reqwest::Client,
}

impl ControlClient {
    /// `addr` is `host:port` or a full `http://` base URL.
    pub fn new(addr: &str) -> Self {
        Self {
            base: base_url(addr),
            http: http(),
        }
    }

    pub async fn devices(&self) -> Result<Vec<DeviceSummary>, ClientError> {
        json(
            self.http
                .get(format!("{}/devices", self.base))
                .send()
                .await?,
        )
        .await
    }

    pub async fn device(&self, uuid: Uuid) -> Result<DeviceDetail, ClientError> {
        json(
            self.http
                .get(format!("{}/devices/{}", self.base, uuid_hex(&uuid)))
                .send()
                .await?,
        )
        .await
    }

    pub async fn update_channel(
        &self,
        uuid: Uuid,
        channel_id: u8,
        update: &ChannelUpdate,
    ) -> Result<ChannelRuntimeState, ClientError> {
        let url = format!(
            "{}/devices/{}/channels/{}",
            self.base,
            uuid_hex(&uuid),
            channel_id
        );
        json(self.http.post(url).json(update).send().await?).await
    }

    pub async fn set_channel_enabled(
        &self,
        uuid: Uuid,
        channel_id: u8,
        enabled: bool,
    ) -> Result<ChannelRuntimeState, ClientError> {
        let update = ChannelUpdate {
            enabled: Some(enabled),
            ..Default::default()
        };
        self.update_channel(uuid, channel_id, &update).await
    }

    pub async fn set_sampling_interval(
        &self,
        uuid: Uuid,
        channel_id: u8,
        interval_us: u32,
    ) -> Result<ChannelRuntimeState, ClientError> {
        let update = ChannelUpdate {
            interval_us: Some(interval_us),
            ..Default::default()
        };
        self.update_channel(uuid, channel_id, &update).await
    }

    pub async fn set_channel_model(
        &self,
        uuid: Uuid,
        channel_id: u8,
        model: ChannelModel,
        deadband: Option<f64>,
    ) -> Result<ChannelRuntimeState, ClientError> {
        let update = ChannelUpdate {
            model: Some(model),
            deadband,
            ..Default::default()
        };
        self.update_channel(uuid, channel_id, &update).await
    }

    pub async fn latency(&self) -> Result<Vec<StageLatencyRecord>, ClientError> {
        json(
            self.http
                .get(format!("{}/metrics/latency?format=json", self.base))
                .send()
                .await?,
        )
        .await
    }

    pub async fn latency_csv(&self) -> Result<String, ClientError> {
        text(
            self.http
                .get(format!("{}/metrics/latency?format=csv", self.base))
                .send()
                .await?,
        )
        .await
    }

    /// Empties the NCAP's TEDS cache; returns how many entries it held.
    pub async fn flush_cache(&self) -> Result<usize, ClientError> {
        #[derive(Deserialize)]
        struct Flushed {
            flushed: usize,
        }
        let r: Flushed = json(
            self.http
                .post(format!("{}/cache/flush", self.base))
                .send()
                .await?,
        )
        .await?;
        Ok(r.flushed)
    }
}

/// Client for the TEDS authoring service.
#[derive(Debug, Clone)]
pub struct AuthoringClient {
    base: String,
    http: reqwest::Client,
}

impl AuthoringClient {
    pub fn new(addr: &str) -> Self {
        Self {
            base: base_url(addr),
            http: http(),
        }
    }

    /// Template XML for a class name (`meta`, `channel`, `name`, `phy`) or
    /// two-digit hex class code.
    pub async fn template(&self, class: &str) -> Result<String, ClientError> {
        text(
            self.http
                .get(format!("{}/templates/{}", self.base, class))
                .send()
                .await?,
        )
        .await
    }

    pub async fn register(&self, description_xml: &str) -> Result<Receipt, ClientError> {
        let req = self
            .http
            .post(format!("{}/devices", self.base))
            .header(reqwest::header::CONTENT_TYPE, "application/xml")
            .body(description_xml.to_string());
        json(req.send().await?).await
    }

    /// The stored description of `uuid`, as XML.
    pub async fn description(&self, uuid: Uuid) -> Result<String, ClientError> {
        text(
            self.http
                .get(format!("{}/devices/{}", self.base, uuid_hex(&uuid)))
                .send()
                .await?,
        )
        .await
    }
}

/// Subscription on the NCAP sample stream endpoint.
pub struct SampleStream {
    lines: Lines<BufReader<OwnedReadHalf>>,
    _write: OwnedWriteHalf,
}

impl SampleStream {
    pub async fn connect(addr: &str, pattern: &str) -> Result<Self, ClientError> {
        let io = |e: std::io::Error| ClientError::Stream(format!("{addr}: {e}"));
        let stream = TcpStream::connect(addr).await.map_err(io)?;
        let (r, mut w) = stream.into_split();
        w.write_all(format!("SUB {pattern}\n").as_bytes())
            .await
            .map_err(io)?;
        let mut lines = BufReader::new(r).lines();
        match lines.next_line().await.map_err(io)? {
            Some(l) if l == "OK" => Ok(Self { lines, _write: w }),
            Some(l) => Err(ClientError::Stream(l)),
            None => Err(ClientError::Stream(
                "connection closed during subscribe".into(),
            )),
        }
    }

    /// Next event, or `None` once the NCAP closes the stream.
    pub async fn next(&mut self) -> Result<Option<SampleEvent>, ClientError> {
        let line = self
            .lines
            .next_line()
            .await
            .map_err(|e| ClientError::Stream(e.to_string()))?;
        match line {
            None => Ok(None),
            Some(l) => SampleEvent::parse_line(&l)
                .map(Some)
                .ok_or_else(|| ClientError::Stream(format!("malformed event line {l:?}"))),
        }
    }
}
