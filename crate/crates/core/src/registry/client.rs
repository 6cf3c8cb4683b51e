use std::collections::BTreeSet;
use std::future::Future;
use std::time::Duration;

use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use uuid::Uuid;

use super::key::{ClassKey, DirectoryKey};
use super::protocol::{Request, Status, MAX_BINARY, MAX_LINE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("registry at {addr} unreachable: {reason}")]
    Unreachable { addr: String, reason: String },
    #[error("not found")]
    NotFound,
    #[error("registry rejected request: {0}")]
    Rejected(String),
    #[error("registry protocol violation: {0}")]
    Protocol(String),
}

/// Client for the directory protocol. Each call uses its own connection, so
/// a client can be shared freely across tasks.
#[derive(Debug, Clone)]
pub struct RegistryClient {
    addr: String,
    timeout: Duration,
}

type Conn = BufReader<TcpStream>;

impl RegistryClient {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            timeout: Duration::from_secs(10),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub async fn put(&self, key: DirectoryKey, binary: &[u8]) -> Result<u64, RegistryError> {
        let req = Request::Put {
            key,
            len: binary.len(),
        };
        self.bounded(async {
            match self.send(&req, binary).await?.0 {
                Status::Ok(Some(v)) => Ok(v),
                other => Err(unexpected(other)),
            }
        })
        .await
    }

    pub async fn get(&self, key: DirectoryKey) -> Result<Vec<u8>, RegistryError> {
        self.bounded(async {
            match self.send(&Request::Get { key }, &[]).await? {
                (Status::Ok(Some(len)), mut conn) if len as usize <= MAX_BINARY => {
                    let mut buf = vec![0u8; len as usize];
                    conn.read_exact(&mut buf).await.map_err(protocol)?;
                    Ok(buf)
                }
                (other, _) => Err(unexpected(other)),
            }
        })
        .await
    }

    pub async fn list(&self, uuid: Uuid) -> Result<BTreeSet<ClassKey>, RegistryError> {
        self.bounded(async {
            match self.send(&Request::List { uuid }, &[]).await? {
                (Status::Ok(Some(count)), mut conn) => {
                    let mut keys = BTreeSet::new();
                    for _ in 0..count {
                        let line = read_line(&mut conn).await?;
                        let key = line
                            .trim_end()
                            .parse::<ClassKey>()
                            .map_err(|e| RegistryError::Protocol(e.to_string()))?;
                        keys.insert(key);
                    }
                    Ok(keys)
                }
                (other, _) => Err(unexpected(other)),
            }
        })
        .await
    }

    pub async fn delete(&self, key: DirectoryKey) -> Result<(), RegistryError> {
        self.bounded(async {
            match self.send(&Request::Del { key }, &[]).await?.0 {
                Status::Ok(None) => Ok(()),
                other => Err(unexpected(other)),
            }
        })
        .await
    }

    /// GETs the registry has served for any key of `uuid`.
    pub async fn stats(&self, uuid: Uuid) -> Result<u64, RegistryError> {
        self.stats_request(Request::Stats {
            uuid,
            class_key: None,
        })
        .await
    }

    pub async fn stats_key(&self, key: DirectoryKey) -> Result<u64, RegistryError> {
        self.stats_request(Request::Stats {
            uuid: key.uuid,
            class_key: Some(key.class_key),
        })
        .await
    }

    async fn stats_request(&self, req: Request) -> Result<u64, RegistryError> {
        self.bounded(async {
            match self.send(&req, &[]).await?.0 {
                Status::Ok(Some(n)) => Ok(n),
                other => Err(unexpected(other)),
            }
        })
        .await
    }

    fn unreachable(&self, reason: String) -> RegistryError {
        RegistryError::Unreachable {
            addr: self.addr.clone(),
            reason,
        }
    }

    async fn bounded<T>(
        &self,
        work: impl Future<Output = Result<T, RegistryError>>,
    ) -> Result<T, RegistryError> {
        tokio::time::timeout(self.timeout, work)
            .await
            .map_err(|_| self.unreachable(format!("no reply within {:?}", self.timeout)))?
    }

    async fn send(&self, req: &Request, payload: &[u8]) -> Result<(Status, Conn), RegistryError> {
        let stream = TcpStream::connect(&self.addr)
            .await
            .map_err(|e| self.unreachable(e.to_string()))?;
        let _ = stream.set_nodelay(true);
        let mut conn = BufReader::new(stream);
        let mut msg = req.to_line().into_bytes();
        msg.extend_from_slice(payload);
        conn.get_mut()
            .write_all(&msg)
            .await
            .map_err(|e| self.unreachable(e.to_string()))?;
        let status = Status::parse(&read_line(&mut conn).await?)
            .map_err(|e| RegistryError::Protocol(e.0))?;
        Ok((status, conn))
    }
}

async fn read_line(conn: &mut Conn) -> Result<String, RegistryError> {
    let mut line = String::new();
    let n = conn
        .take(MAX_LINE as u64)
        .read_line(&mut line)
        .await
        .map_err(protocol)?;
    if n == 0 || !line.ends_with('\n') {
        return Err(RegistryError::Protocol(
            "connection closed mid-reply".into(),
        ));
    }
    Ok(line)
}

fn protocol(e: std::io::Error) -> RegistryError {
    RegistryError::Protocol(e.to_string())
}

fn unexpected(status: Status) -> RegistryError {
    match status {
        Status::NotFound => RegistryError::NotFound,
        Status::Err(reason) => RegistryError::Rejected(reason),
        Status::Ok(n) => RegistryError::Protocol(format!("unexpected reply OK {n:?}")),
    }
}
