//! Request and response framing for the directory protocol. One request is
//! a single `\n`-terminated ASCII line; `PUT` is followed by its payload and
//! `GET` replies carry theirs after the status line.
//!
//! ```text
//! PUT <uuid-hex-32> <class_key> <len>\n<len octets>  -> OK <version> | ERR <reason>
//! GET <uuid-hex-32> <class_key>                      -> OK <len>\n<len octets> | ERR NOTFOUND
//! LIST <uuid-hex-32>                                 -> OK <count>\n<count lines>
//! DEL <uuid-hex-32> <class_key>                      -> OK | ERR NOTFOUND
//! STATS <uuid-hex-32> [<class_key>]                  -> OK <served-query-count>
//! ```

use thiserror::Error;
use uuid::Uuid;

use super::key::{ClassKey, DirectoryKey};
use crate::ident::{parse_uuid_hex, uuid_hex};

pub const MAX_LINE: usize = 256;
pub const MAX_BINARY: usize = 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    Put {
        key: DirectoryKey,
        len: usize,
    },
    Get {
        key: DirectoryKey,
    },
    List {
        uuid: Uuid,
    },
    Del {
        key: DirectoryKey,
    },
    /// Served-query count for the whole uuid, or for one key of it.
    Stats {
        uuid: Uuid,
        class_key: Option<ClassKey>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol error: {0}")]
pub struct ProtocolError(pub String);

fn bad(msg: impl Into<String>) -> ProtocolError {
    ProtocolError(msg.into())
}

fn uuid_arg(s: Option<&str>) -> Result<Uuid, ProtocolError> {
    let s = s.ok_or_else(|| bad("missing uuid"))?;
    parse_uuid_hex(s).ok_or_else(|| bad(format!("bad uuid {s:?}")))
}

fn key_arg(uuid: Uuid, s: Option<&str>) -> Result<DirectoryKey, ProtocolError> {
    let s = s.ok_or_else(|| bad("missing class key"))?;
    let class_key = s.parse::<ClassKey>().map_err(|e| bad(e.to_string()))?;
    Ok(DirectoryKey::new(uuid, class_key))
}

impl Request {
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        let mut parts = line.split(' ');
        let verb = parts.next().unwrap_or_default();
        let req = match verb {
            "PUT" => {
                let uuid = uuid_arg(parts.next())?;
                let key = key_arg(uuid, parts.next())?;
                let len = parts
                    .next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| bad("missing or bad length"))?;
                if len > MAX_BINARY {
                    return Err(bad(format!("payload of {len} octets exceeds {MAX_BINARY}")));
                }
                Request::Put { key, len }
            }
            "GET" => {
                let uuid = uuid_arg(parts.next())?;
                Request::Get {
                    key: key_arg(uuid, parts.next())?,
                }
            }
            "LIST" => Request::List {
                uuid: uuid_arg(parts.next())?,
            },
            "DEL" => {
                let uuid = uuid_arg(parts.next())?;
                Request::Del {
                    key: key_arg(uuid, parts.next())?,
                }
            }
            "STATS" => {
                let uuid = uuid_arg(parts.next())?;
                let class_key = match parts.next() {
                    None => None,
                    Some(s) => Some(s.parse::<ClassKey>().map_err(|e| bad(e.to_string()))?),
                };
                Request::Stats { uuid, class_key }
            }
            other => return Err(bad(format!("unknown verb {other:?}"))),
        };
        if parts.next().is_some() {
            return Err(bad("trailing arguments"));
        }
        Ok(req)
    }

    /// The request line including its terminating newline.
    pub fn to_line(&self) -> String {
        match self {
            Request::Put { key, len } => {
                format!("PUT {} {} {len}\n", uuid_hex(&key.uuid), key.class_key)
            }
            Request::Get { key } => format!("GET {} {}\n", uuid_hex(&key.uuid), key.class_key),
            Request::List { uuid } => format!("LIST {}\n", uuid_hex(uuid)),
            Request::Del { key } => format!("DEL {} {}\n", uuid_hex(&key.uuid), key.class_key),
            Request::Stats {
                uuid,
                class_key: None,
            } => format!("STATS {}\n", uuid_hex(uuid)),
            Request::Stats {
                uuid,
                class_key: Some(k),
            } => format!("STATS {} {k}\n", uuid_hex(uuid)),
        }
    }
}

/// Status line of a reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok(Option<u64>),
    NotFound,
    Err(String),
}

impl Status {
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let line = line.trim_end_matches(['\n', '\r']);
        if line == "OK" {
            return Ok(Status::Ok(None));
        }
        if let Some(n) = line.strip_prefix("OK ") {
            return n
                .parse::<u64>()
                .map(|n| Status::Ok(Some(n)))
                .map_err(|_| bad(format!("bad reply {line:?}")));
        }
        if line == "ERR NOTFOUND" {
            return Ok(Status::NotFound);
        }
        if let Some(reason) = line.strip_prefix("ERR ") {
            return Ok(Status::Err(reason.to_string()));
        }
        Err(bad(format!("bad reply {line:?}")))
    }

    pub fn to_line(&self) -> String {
        match self {
            Status::Ok(None) => "OK\n".into(),
            Status::Ok(Some(n)) => format!("OK {n}\n"),
            Status::NotFound => "ERR NOTFOUND\n".into(),
            // reasons must stay on one line
            Status::Err(reason) => format!("ERR {}\n", reason.replace(['\n', '\r'], " ")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const U: &str = "00112233445566778899aabbccddeeff";

    #[test]
    fn parses_every_verb() {
        let uuid = parse_uuid_hex(U).unwrap();
        let put = Request::parse(&format!("PUT {U} 03:00 42\n")).unwrap();
        assert_eq!(
            put,
            Request::Put {
                key: DirectoryKey::new(uuid, ClassKey::channel(0)),
                len: 42
            }
        );
        assert_eq!(Request::parse(&put.to_line()).unwrap(), put);
        for line in [
            format!("GET {U} 01\n"),
            format!("LIST {U}\n"),
            format!("DEL {U} 0D\n"),
            format!("STATS {U}\n"),
            format!("STATS {U} 0C\n"),
        ] {
            let req = Request::parse(&line).unwrap();
            assert_eq!(req.to_line(), line);
        }
    }

    #[test]
    fn rejects_malformed_requests() {
        for line in [
            "".to_string(),
            "PING\n".into(),
            format!("GET {U}\n"),
            format!("GET {U} 3\n"),
            "GET 0011 01\n".into(),
            format!("PUT {U} 01\n"),
            format!("PUT {U} 01 x\n"),
            format!("PUT {U} 01 {}\n", MAX_BINARY + 1),
            format!("LIST {U} extra\n"),
        ] {
            assert!(Request::parse(&line).is_err(), "{line:?}");
        }
    }

    #[test]
    fn status_lines() {
        assert_eq!(Status::parse("OK\n").unwrap(), Status::Ok(None));
        assert_eq!(Status::parse("OK 7\n").unwrap(), Status::Ok(Some(7)));
        assert_eq!(Status::parse("ERR NOTFOUND\n").unwrap(), Status::NotFound);
        assert_eq!(
            Status::parse("ERR INVALID bad checksum\n").unwrap(),
            Status::Err("INVALID bad checksum".into())
        );
        assert!(Status::parse("HELLO\n").is_err());
        assert_eq!(Status::Err("a\nb".into()).to_line(), "ERR a b\n");
    }
}
