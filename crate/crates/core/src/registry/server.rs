use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::task::JoinHandle;
use tokio_util::sync::CancellationToken;

use super::protocol::{Request, Status, MAX_LINE};
use super::store::{Directory, StoreError};

#[derive(Debug, Clone, Copy, Default)]
pub struct ServerOptions {
    /// Added before answering each query (`GET`, `LIST`) to emulate a
    /// distant directory.
    pub inject_delay: Duration,
}

/// A running directory server. Dropping the handle stops it.
pub struct RegistryHandle {
    pub local_addr: SocketAddr,
    pub directory: Arc<Directory>,
    cancel: CancellationToken,
    task: Option<JoinHandle<()>>,
}

impl RegistryHandle {
    pub async fn shutdown(mut self) {
        self.cancel.cancel();
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for RegistryHandle {
    fn drop(&mut self) {
        self.cancel.cancel();
    }
}

pub async fn spawn(
    addr: impl ToSocketAddrs,
    directory: Arc<Directory>,
    options: ServerOptions,
) -> io::Result<RegistryHandle> {
    let listener = TcpListener::bind(addr).await?;
    let local_addr = listener.local_addr()?;
    let cancel = CancellationToken::new();
    let task = tokio::spawn(serve(listener, directory.clone(), options, cancel.clone()));
    Ok(RegistryHandle {
        local_addr,
        directory,
        cancel,
        task: Some(task),
    })
}

/// Accepts connections until `cancel` fires. Each connection may carry any
/// number of sequential requests.
pub async fn serve(
    listener: TcpListener,
    directory: Arc<Directory>,
    options: ServerOptions,
    cancel: CancellationToken,
) {
    loop {
        let (stream, peer) = tokio::select! {
            _ = cancel.cancelled() => return,
            accepted = listener.accept() => match accepted {
                Ok(a) => a,
                Err(e) => {
                    tracing::warn!(error = %e, "accept failed");
                    continue;
                }
            },
        };
        let directory = directory.clone();
        let cancel = cancel.clone();
        tokio::spawn(async move {
            tokio::select! {
                _ = cancel.cancelled() => {}
                result = connection(stream, directory, options) => {
                    if let Err(e) = result {
                        tracing::debug!(%peer, error = %e, "registry connection closed");
                    }
                }
            }
        });
    }
}

async fn connection(
    stream: TcpStream,
    directory: Arc<Directory>,
    options: ServerOptions,
) -> io::Result<()> {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = String::new();
    loop {
        line.clear();
        let n = (&mut reader)
            .take(MAX_LINE as u64)
            .read_line(&mut line)
            .await?;
        if n == 0 {
            return Ok(());
        }
        if !line.ends_with('\n') {
            write
                .write_all(
                    Status::Err("PROTOCOL line too long".into())
                        .to_line()
                        .as_bytes(),
                )
                .await?;
            return Ok(());
        }
        let request = match Request::parse(&line) {
            Ok(r) => r,
            Err(e) => {
                write
                    .write_all(
                        Status::Err(format!("PROTOCOL {}", e.0))
                            .to_line()
                            .as_bytes(),
                    )
                    .await?;
                return Ok(());
            }
        };
        let mut reply = Vec::new();
        match request {
            Request::Put { key, len } => {
                let mut payload = vec![0u8; len];
                reader.read_exact(&mut payload).await?;
                let dir = directory.clone();
                let result =
                    tokio::task::spawn_blocking(move || dir.put(key, Bytes::from(payload)))
                        .await
                        .map_err(io::Error::other)?;
                let status = match result {
                    Ok(version) => Status::Ok(Some(version)),
                    Err(StoreError::InvalidBinary(reason)) => {
                        Status::Err(format!("INVALID {reason}"))
                    }
                    Err(e) => Status::Err(format!("STORAGE {e}")),
                };
                reply.extend_from_slice(status.to_line().as_bytes());
            }
            Request::Get { key } => {
                delay(options).await;
                match directory.get(&key) {
                    Some(entry) => {
                        reply.extend_from_slice(
                            Status::Ok(Some(entry.binary.len() as u64))
                                .to_line()
                                .as_bytes(),
                        );
                        reply.extend_from_slice(&entry.binary);
                    }
                    None => reply.extend_from_slice(Status::NotFound.to_line().as_bytes()),
                }
            }
            Request::List { uuid } => {
                delay(options).await;
                let keys = directory.list(&uuid);
                reply.extend_from_slice(Status::Ok(Some(keys.len() as u64)).to_line().as_bytes());
                for k in keys {
                    reply.extend_from_slice(format!("{k}\n").as_bytes());
                }
            }
            Request::Del { key } => {
                let dir = directory.clone();
                let result = tokio::task::spawn_blocking(move || dir.delete(&key))
                    .await
                    .map_err(io::Error::other)?;
                let status = match result {
                    Ok(()) => Status::Ok(None),
                    Err(StoreError::NotFound(_)) => Status::NotFound,
                    Err(e) => Status::Err(format!("STORAGE {e}")),
                };
                reply.extend_from_slice(status.to_line().as_bytes());
            }
            Request::Stats { uuid, class_key } => {
                let n = match class_key {
                    None => directory.served_for_uuid(&uuid),
                    Some(k) => directory.served_for_key(&super::DirectoryKey::new(uuid, k)),
                };
                reply.extend_from_slice(Status::Ok(Some(n)).to_line().as_bytes());
            }
        }
        write.write_all(&reply).await?;
    }
}

async fn delay(options: ServerOptions) {
    if !options.inject_delay.is_zero() {
        tokio::time::sleep(options.inject_delay).await;
    }
}
