use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use log::warn;

use crate::server::shard_checkpoint_path;
use crate::table::check_push;
use crate::wire::{self, LoadMode, Request, Response};
use crate::{shard_of, ParamStore, PsError, Result};

/// Bounded exponential backoff for transport failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 5, base_delay: Duration::from_millis(20), max_delay: Duration::from_secs(2) }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1 << attempt.min(16)).min(self.max_delay)
    }
}

struct Conn {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// A table whose shards live in other processes.
///
/// `save` writes one file per shard, named `<path>.shard<i>` when there is
/// more than one shard; `load`/`warm_start` accept either a single merged
/// checkpoint (each server keeps its own keys) or those per-shard files.
pub struct RemoteTable {
    dim: usize,
    endpoints: Vec<String>,
    conns: Vec<Mutex<Option<Conn>>>,
    retry: RetryPolicy,
}

impl RemoteTable {
    pub fn new(endpoints: Vec<String>, dim: usize) -> Self {
        Self::with_retry(endpoints, dim, RetryPolicy::default())
    }

    pub fn with_retry(endpoints: Vec<String>, dim: usize, retry: RetryPolicy) -> Self {
        assert!(!endpoints.is_empty());
        let conns = endpoints.iter().map(|_| Mutex::new(None)).collect();
        RemoteTable { dim, endpoints, conns, retry }
    }

    pub fn num_shards(&self) -> usize {
        self.endpoints.len()
    }

    pub fn ping(&self) -> Result<()> {
        for s in 0..self.num_shards() {
            self.request(s, &Request::Ping)?;
        }
        Ok(())
    }

    fn request(&self, shard: usize, req: &Request) -> Result<Response> {
        let bytes = req.encode();
        let mut attempt = 0;
        loop {
            match self.exchange(shard, &bytes) {
                Ok(Response::Error { status, message }) => return Err(PsError::Remote { shard, status, message }),
                Ok(resp) => return Ok(resp),
                Err(e) if e.is_retryable() && attempt < self.retry.max_retries => {
                    warn!("shard {shard} ({}): {e}; retrying", self.endpoints[shard]);
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn exchange(&self, shard: usize, bytes: &[u8]) -> Result<Response> {
        let transport = |source| PsError::Transport { shard, source };
        let mut slot = self.conns[shard].lock().unwrap_or_else(|p| p.into_inner());
        if slot.is_none() {
            let stream = TcpStream::connect(&self.endpoints[shard]).map_err(transport)?;
            stream.set_nodelay(true).map_err(transport)?;
            let reader = BufReader::new(stream.try_clone().map_err(transport)?);
            *slot = Some(Conn { reader, writer: BufWriter::new(stream) });
        }
        let conn = slot.as_mut().unwrap();
        let result = wire::write_all(&mut conn.writer, bytes).and_then(|_| wire::read_frame(&mut conn.reader));
        match result {
            Ok(Some(Ok(frame))) => Response::decode(&frame),
            Ok(Some(Err(e))) => {
                *slot = None;
                Err(e)
            }
            Ok(None) => {
                *slot = None;
                Err(transport(std::io::ErrorKind::UnexpectedEof.into()))
            }
            Err(e) => {
                *slot = None;
                Err(transport(e))
            }
        }
    }

    /// Positions of `keys` grouped per shard.
    fn route(&self, keys: &[u64]) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_shards()];
        for (i, k) in keys.iter().enumerate() {
            groups[shard_of(*k, self.num_shards())].push(i);
        }
        groups
    }

    fn load_mode(&self, path: &Path, mode: LoadMode) -> Result<u64> {
        let path = path.to_string_lossy().into_owned();
        let mut total = 0;
        for s in 0..self.num_shards() {
            match self.request(s, &Request::Load { mode, path: path.clone() })? {
                Response::Loaded { count } => total += count,
                other => return Err(PsError::Protocol(format!("unexpected LOAD reply {other:?}"))),
            }
        }
        Ok(total)
    }
}

impl ParamStore for RemoteTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn pull(&self, keys: &[u64]) -> Result<Vec<f32>> {
        let d = self.dim;
        let groups = self.route(keys);
        // Collect every shard's reply before writing anything out.
        let mut replies = Vec::with_capacity(groups.len());
        for (s, pos) in groups.iter().enumerate() {
            if pos.is_empty() {
                replies.push(Vec::new());
                continue;
            }
            let req = Request::Pull { keys: pos.iter().map(|&i| keys[i]).collect() };
            match self.request(s, &req)? {
                Response::Pulled { dim, values } if dim as usize == d && values.len() == pos.len() * d => {
                    replies.push(values)
                }
                Response::Pulled { dim, .. } => return Err(PsError::DimMismatch { expected: d, got: dim as usize }),
                other => return Err(PsError::Protocol(format!("unexpected PULL reply {other:?}"))),
            }
        }
        let mut out = vec![0.0; keys.len() * d];
        for (pos, values) in groups.iter().zip(&replies) {
            for (j, &i) in pos.iter().enumerate() {
                out[i * d..(i + 1) * d].copy_from_slice(&values[j * d..(j + 1) * d]);
            }
        }
        Ok(out)
    }

    fn push(&self, keys: &[u64], grads: &[f32], lr: f32) -> Result<()> {
        let d = self.dim;
        check_push(keys, grads, d)?;
        for (s, pos) in self.route(keys).iter().enumerate() {
            if pos.is_empty() {
                continue;
            }
            let mut g = Vec::with_capacity(pos.len() * d);
            pos.iter().for_each(|&i| g.extend_from_slice(&grads[i * d..(i + 1) * d]));
            let req = Request::Push { dim: d as u32, lr, keys: pos.iter().map(|&i| keys[i]).collect(), grads: g };
            self.request(s, &req)?;
        }
        Ok(())
    }

    fn save(&self, path: &Path) -> Result<()> {
        for s in 0..self.num_shards() {
            let p = if self.num_shards() == 1 { path.to_path_buf() } else { shard_checkpoint_path(path, s) };
            self.request(s, &Request::Save { path: p.to_string_lossy().into_owned() })?;
        }
        Ok(())
    }

    fn load(&self, path: &Path) -> Result<u64> {
        self.load_mode(path, LoadMode::Replace)
    }

    fn warm_start(&self, path: &Path) -> Result<u64> {
        self.load_mode(path, LoadMode::Merge)
    }
}
