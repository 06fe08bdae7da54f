//! Client for Docker-compatible engine HTTP APIs over TCP or a Unix socket.

use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use hyper::client::conn::http1;
use hyper::{header, Method, Request, StatusCode};
use hyper_util::rt::TokioIo;
use serde::Deserialize;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::TcpStream;

use super::engine::{ContainerEngine, CreateRequest, EngineError};

const API_PREFIX: &str = "/v1.41";
const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Unix(String),
}

impl Endpoint {
    /// Accepts `unix:///path`, `tcp://host:port`, `http://host:port` or a
    /// bare `host:port`.
    pub fn parse(s: &str) -> Result<Self, EngineError> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("unix://") {
            if path.is_empty() {
                return Err(EngineError::Unreachable("empty unix socket path".into()));
            }
            return Ok(Endpoint::Unix(path.to_string()));
        }
        let addr = s
            .strip_prefix("tcp://")
            .or_else(|| s.strip_prefix("http://"))
            .unwrap_or(s)
            .trim_end_matches('/');
        if addr.is_empty() || !addr.contains(':') {
            return Err(EngineError::Unreachable(format!(
                "endpoint `{s}` is not host:port or unix://path"
            )));
        }
        Ok(Endpoint::Tcp(addr.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct DockerEngine {
    endpoint: Endpoint,
}

#[derive(Deserialize)]
struct CreatedBody {
    #[serde(rename = "Id")]
    id: String,
}

#[derive(Deserialize)]
struct WaitBody {
    #[serde(rename = "StatusCode")]
    status_code: i64,
}

#[derive(Deserialize)]
struct ErrorBody {
    message: String,
}

impl DockerEngine {
    pub fn new(endpoint: &str) -> Result<Self, EngineError> {
        Ok(Self {
            endpoint: Endpoint::parse(endpoint)?,
        })
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    async fn call(
        &self,
        method: Method,
        path: &str,
        body: Option<serde_json::Value>,
    ) -> Result<(StatusCode, Bytes), EngineError> {
        let payload = match &body {
            Some(v) => Bytes::from(serde_json::to_vec(v).expect("json value serializes")),
            None => Bytes::new(),
        };
        let mut builder = Request::builder()
            .method(method)
            .uri(format!("{API_PREFIX}{path}"))
            .header(header::HOST, "engine");
        if body.is_some() {
            builder = builder.header(header::CONTENT_TYPE, "application/json");
        }
        let req = builder
            .body(Full::new(payload))
            .map_err(|e| EngineError::Protocol(e.to_string()))?;

        match &self.endpoint {
            Endpoint::Tcp(addr) => {
                let stream = connect(TcpStream::connect(addr.as_str()), addr).await?;
                send(stream, req).await
            }
            Endpoint::Unix(path) => {
                #[cfg(unix)]
                {
                    let stream =
                        connect(tokio::net::UnixStream::connect(path.as_str()), path).await?;
                    send(stream, req).await
                }
                #[cfg(not(unix))]
                {
                    Err(EngineError::Unreachable(format!(
                        "unix sockets unsupported on this platform: {path}"
                    )))
                }
            }
        }
    }

    async fn expect(
        &self,
        method: Method,
        path: &str,
        body: Option<serde_json::Value>,
        ok: &[StatusCode],
    ) -> Result<Bytes, EngineError> {
        let (status, bytes) = self.call(method, path, body).await?;
        if ok.contains(&status) {
            return Ok(bytes);
        }
        let message = serde_json::from_slice::<ErrorBody>(&bytes)
            .map(|e| e.message)
            .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
        Err(EngineError::Api {
            status: status.as_u16(),
            message,
        })
    }
}

async fn connect<S, F>(fut: F, target: &str) -> Result<S, EngineError>
where
    F: std::future::Future<Output = std::io::Result<S>>,
{
    match tokio::time::timeout(CONNECT_TIMEOUT, fut).await {
        Ok(Ok(s)) => Ok(s),
        Ok(Err(e)) => Err(EngineError::Unreachable(format!("{target}: {e}"))),
        Err(_) => Err(EngineError::Unreachable(format!(
            "{target}: connect timed out"
        ))),
    }
}

async fn send<S>(stream: S, req: Request<Full<Bytes>>) -> Result<(StatusCode, Bytes), EngineError>
where
    S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
{
    let (mut sender, conn) = http1::handshake(TokioIo::new(stream))
        .await
        .map_err(|e| EngineError::Unreachable(e.to_string()))?;
    tokio::spawn(async move {
        let _ = conn.await;
    });
    let resp = sender
        .send_request(req)
        .await
        .map_err(|e| EngineError::Protocol(e.to_string()))?;
    let status = resp.status();
    let body = resp
        .into_body()
        .collect()
        .await
        .map_err(|e| EngineError::Protocol(e.to_string()))?
        .to_bytes();
    Ok((status, body))
}

fn encode_query(v: &str) -> String {
    v.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                (b as char).to_string()
            }
            _ => format!("%{b:02X}"),
        })
        .collect()
}

/// Splits a log payload into lines. Payloads using the engine's
/// multiplexed framing (8-byte header: stream, 3 zero bytes, u32 BE length)
/// are unframed first; stdout and stderr are both kept.
pub fn demux_logs(raw: &[u8]) -> Vec<String> {
    let framed = raw.len() >= 8 && raw[0] <= 2 && raw[1..4] == [0, 0, 0];
    let mut text = Vec::with_capacity(raw.len());
    if framed {
        let mut rest = raw;
        while rest.len() >= 8 {
            let len = u32::from_be_bytes([rest[4], rest[5], rest[6], rest[7]]) as usize;
            let end = (8 + len).min(rest.len());
            text.extend_from_slice(&rest[8..end]);
            rest = &rest[end..];
        }
    } else {
        text.extend_from_slice(raw);
    }
    String::from_utf8_lossy(&text)
        .lines()
        .map(str::to_string)
        .collect()
}

#[async_trait]
impl ContainerEngine for DockerEngine {
    async fn ping(&self) -> Result<(), EngineError> {
        match self.call(Method::GET, "/_ping", None).await {
            Ok((s, _)) if s.is_success() => Ok(()),
            Ok((s, _)) => Err(EngineError::Unreachable(format!("ping returned {s}"))),
            Err(e) => Err(e),
        }
    }

    async fn ensure_image(&self, image: &str) -> Result<(), EngineError> {
        let (status, _) = self
            .call(Method::GET, &format!("/images/{image}/json"), None)
            .await?;
        if status.is_success() {
            return Ok(());
        }
        let (name, tag) = match image.rsplit_once(':') {
            Some((n, t)) if !t.contains('/') => (n, t),
            _ => (image, "latest"),
        };
        self.expect(
            Method::POST,
            &format!(
                "/images/create?fromImage={}&tag={}",
                encode_query(name),
                encode_query(tag)
            ),
            None,
            &[StatusCode::OK],
        )
        .await
        .map(|_| ())
    }

    async fn create(&self, req: &CreateRequest) -> Result<String, EngineError> {
        let bytes = self
            .expect(
                Method::POST,
                &format!("/containers/create?name={}", encode_query(&req.name)),
                Some(req.engine_body()),
                &[StatusCode::CREATED, StatusCode::OK],
            )
            .await?;
        serde_json::from_slice::<CreatedBody>(&bytes)
            .map(|b| b.id)
            .map_err(|e| EngineError::Protocol(format!("create response: {e}")))
    }

    async fn start(&self, id: &str) -> Result<(), EngineError> {
        self.expect(
            Method::POST,
            &format!("/containers/{id}/start"),
            None,
            &[StatusCode::NO_CONTENT, StatusCode::NOT_MODIFIED],
        )
        .await
        .map(|_| ())
    }

    async fn wait(&self, id: &str) -> Result<i64, EngineError> {
        let bytes = self
            .expect(
                Method::POST,
                &format!("/containers/{id}/wait"),
                None,
                &[StatusCode::OK],
            )
            .await?;
        serde_json::from_slice::<WaitBody>(&bytes)
            .map(|b| b.status_code)
            .map_err(|e| EngineError::Protocol(format!("wait response: {e}")))
    }

    async fn logs(&self, id: &str) -> Result<Vec<String>, EngineError> {
        let bytes = self
            .expect(
                Method::GET,
                &format!("/containers/{id}/logs?stdout=1&stderr=1"),
                None,
                &[StatusCode::OK],
            )
            .await?;
        Ok(demux_logs(&bytes))
    }

    async fn remove(&self, id: &str) -> Result<(), EngineError> {
        self.expect(
            Method::DELETE,
            &format!("/containers/{id}?force=1"),
            None,
            &[StatusCode::NO_CONTENT, StatusCode::OK],
        )
        .await
        .map(|_| ())
    }
}
