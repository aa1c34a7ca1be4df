use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, warn};

use crate::wire::{self, status, LoadMode, Request, Response};
use crate::{PsError, Shard};

/// Serves one [`Shard`] over TCP, one thread per connection.
pub struct ShardServer {
    listener: TcpListener,
    state: Arc<ServerState>,
    stop: Arc<AtomicBool>,
}

struct ServerState {
    shard: Shard,
    index: usize,
    num_shards: usize,
}

/// Stops a running [`ShardServer`] from another thread.
#[derive(Clone)]
pub struct ShutdownHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
    }
}

impl ShardServer {
    /// `index`/`num_shards` locate this shard in the deployment; LOAD keeps
    /// only the checkpoint records that route here.
    pub fn bind<A: ToSocketAddrs>(addr: A, shard: Shard, index: usize, num_shards: usize) -> io::Result<Self> {
        assert!(index < num_shards);
        Ok(ShardServer {
            listener: TcpListener::bind(addr)?,
            state: Arc::new(ServerState { shard, index, num_shards }),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shutdown_handle(&self) -> io::Result<ShutdownHandle> {
        Ok(ShutdownHandle { addr: self.local_addr()?, stop: self.stop.clone() })
    }

    /// Accepts connections until shut down.
    pub fn run(self) {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let state = self.state.clone();
                    thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, &state) {
                            debug!("connection closed: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    }

    pub fn spawn(self) -> JoinHandle<()> {
        thread::spawn(move || self.run())
    }
}

fn serve_connection(stream: TcpStream, state: &ServerState) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let frame = match wire::read_frame(&mut reader)? {
            None => return Ok(()),
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                let resp = Response::Error { status: status::MALFORMED, message: e.to_string() };
                wire::write_all(&mut writer, &resp.encode(0))?;
                return Ok(());
            }
        };
        let req = match Request::decode(&frame) {
            Ok(r) => r,
            Err(e) => {
                let resp = Response::Error { status: status::MALFORMED, message: e.to_string() };
                wire::write_all(&mut writer, &resp.encode(frame.opcode))?;
                return Ok(());
            }
        };
        let op = req.opcode();
        let resp = handle(state, req);
        wire::write_all(&mut writer, &resp.encode(op as u8))?;
    }
}

fn handle(state: &ServerState, req: Request) -> Response {
    let shard = &state.shard;
    match req {
        Request::Pull { keys } => Response::Pulled { dim: shard.dim() as u32, values: shard.pull(&keys) },
        Request::Push { dim, lr, keys, grads } => {
            if dim as usize != shard.dim() {
                return error(&PsError::DimMismatch { expected: shard.dim(), got: dim as usize });
            }
            match shard.push(&keys, &grads, lr) {
                Ok(()) => Response::Ack,
                Err(e) => error(&e),
            }
        }
        Request::Save { path } => match shard.save(Path::new(&path)) {
            Ok(()) => Response::Ack,
            Err(e) => error(&e),
        },
        Request::Load { mode, path } => {
            let path = resolve_load_path(&path, state.index);
            match shard.load_routed(&path, state.index, state.num_shards, mode == LoadMode::Replace) {
                Ok(count) => Response::Loaded { count },
                Err(e) => error(&e),
            }
        }
        Request::Ping => Response::Ack,
    }
}

/// Per-shard checkpoint name used when a remote table saves.
pub(crate) fn shard_checkpoint_path(path: &Path, index: usize) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(format!(".shard{index}"));
    PathBuf::from(s)
}

fn resolve_load_path(path: &str, index: usize) -> PathBuf {
    let p = PathBuf::from(path);
    if p.exists() {
        return p;
    }
    let per_shard = shard_checkpoint_path(&p, index);
    if per_shard.exists() {
        per_shard
    } else {
        p
    }
}

fn error(e: &PsError) -> Response {
    let st = match e {
        PsError::DimMismatch { .. } | PsError::LengthMismatch { .. } => status::DIM_MISMATCH,
        PsError::Protocol(_) => status::MALFORMED,
        _ => status::STORAGE,
    };
    Response::Error { status: st, message: e.to_string() }
}

