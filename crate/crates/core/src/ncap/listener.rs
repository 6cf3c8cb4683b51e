use std::net::SocketAddr;
use std::time::Instant;

use bytes::Bytes;
use tokio::net::UdpSocket;
use tokio::sync::mpsc;
use tokio_util::sync::CancellationToken;

use super::NcapError;

/// One received association datagram.
#[derive(Debug, Clone)]
pub struct RawFrame {
    pub bytes: Bytes,
    pub src: SocketAddr,
    pub arrival: Instant,
}

pub struct Listener {
    pub local_addr: SocketAddr,
    pub frames: mpsc::Receiver<RawFrame>,
    cancel: CancellationToken,
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.cancel.cancel();
    }
}

/// Binds the association endpoint and forwards every datagram, stamped with
/// its arrival time, in receive order.
pub async fn listen(addr: &str) -> Result<Listener, NcapError> {
    let socket = UdpSocket::bind(addr)
        .await
        .map_err(|e| NcapError::BindFailure {
            addr: addr.to_string(),
            reason: e.to_string(),
        })?;
    let local_addr = socket.local_addr().map_err(|e| NcapError::BindFailure {
        addr: addr.to_string(),
        reason: e.to_string(),
    })?;
    let (tx, frames) = mpsc::channel(1024);
    let cancel = CancellationToken::new();
    let stop = cancel.clone();
    tokio::spawn(async move {
        // larger than any valid packet so oversize datagrams are seen as such
        let mut buf = vec![0u8; 2048];
        loop {
            let received = tokio::select! {
                _ = stop.cancelled() => break,
                r = socket.recv_from(&mut buf) => r,
            };
            match received {
                Ok((n, src)) => {
                    let frame = RawFrame {
                        bytes: Bytes::copy_from_slice(&buf[..n]),
                        src,
                        arrival: Instant::now(),
                    };
                    if tx.send(frame).await.is_err() {
                        break;
                    }
                }
                Err(e) => tracing::debug!(error = %e, "association socket receive failed"),
            }
        }
    });
    Ok(Listener {
        local_addr,
        frames,
        cancel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn frames_arrive_in_order_per_source() {
        let mut l = listen("127.0.0.1:0").await.unwrap();
        let a = UdpSocket::bind("127.0.0.1:0").await.unwrap();
        let b = UdpSocket::bind("127.0.0.1:0").await.unwrap();
        for i in 0..5u8 {
            a.send_to(&[b'a', i], l.local_addr).await.unwrap();
            b.send_to(&[b'b', i], l.local_addr).await.unwrap();
        }
        let mut seen_a = Vec::new();
        let mut seen_b = Vec::new();
        for _ in 0..10 {
            let f = l.frames.recv().await.unwrap();
            if f.src == a.local_addr().unwrap() {
                seen_a.push(f.bytes[1]);
            } else {
                seen_b.push(f.bytes[1]);
            }
        }
        assert_eq!(seen_a, [0, 1, 2, 3, 4]);
        assert_eq!(seen_b, [0, 1, 2, 3, 4]);
    }

    #[tokio::test]
    async fn endpoint_in_use() {
        let l = listen("127.0.0.1:0").await.unwrap();
        let err = listen(&l.local_addr.to_string()).await.err().unwrap();
        assert!(matches!(err, NcapError::BindFailure { .. }));
    }
}
