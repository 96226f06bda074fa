//! Blocking TCP transport: one thread per connection, frames back to back.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Result, ServiceError};
use crate::wire::{ErrorCode, MessageType, WireFrame};
use crate::Service;

fn serve_connection(stream: TcpStream, service: Arc<dyn Service>) {
    let _ = stream.set_nodelay(true);
    let Ok(read_half) = stream.try_clone() else { return };
    let mut reader = BufReader::new(read_half);
    let mut writer = BufWriter::new(stream);
    loop {
        match WireFrame::read_from(&mut reader) {
            Ok(frame) => {
                if service.handle(frame).write_to(&mut writer).is_err() {
                    return;
                }
            }
            Err(ServiceError::Wire(msg)) => {
                let _ = WireFrame::failure(MessageType::Reject, [0; 16], ErrorCode::Malformed, &msg).write_to(&mut writer);
                return;
            }
            Err(_) => return,
        }
    }
}

/// A listener running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting. Open connections end when their peer hangs up.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(j) = self.accept.take() {
            let _ = j.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

pub fn spawn(listener: TcpListener, service: Arc<dyn Service>) -> Result<ServerHandle> {
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let accept = thread::spawn(move || {
        while !flag.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let _ = stream.set_nonblocking(false);
                    let svc = Arc::clone(&service);
                    thread::spawn(move || serve_connection(stream, svc));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
    })
}

/// Serves on the calling thread until `stop` is set.
pub fn serve_until(listener: TcpListener, service: Arc<dyn Service>, stop: Arc<AtomicBool>) -> Result<()> {
    let handle = spawn(listener, service)?;
    while !stop.load(Ordering::SeqCst) {
        thread::sleep(Duration::from_millis(50));
    }
    handle.shutdown();
    Ok(())
}

/// A server reached over TCP. Keeps one connection and reconnects once if it
/// has gone stale.
pub struct Remote {
    addr: SocketAddr,
    conn: Mutex<Option<(BufReader<TcpStream>, BufWriter<TcpStream>)>>,
}

impl Remote {
    pub fn new(addr: impl ToSocketAddrs) -> Result<Self> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| ServiceError::Config("address resolves to nothing".into()))?;
        Ok(Remote {
            addr,
            conn: Mutex::new(None),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn call(&self, frame: &WireFrame) -> Result<WireFrame> {
        let mut guard = self.conn.lock().unwrap();
        for attempt in 0..2 {
            if guard.is_none() {
                let s = TcpStream::connect_timeout(&self.addr, Duration::from_secs(5))?;
                s.set_nodelay(true)?;
                *guard = Some((BufReader::new(s.try_clone()?), BufWriter::new(s)));
            }
            let (r, w) = guard.as_mut().unwrap();
            match frame.write_to(w).and_then(|_| WireFrame::read_from(r)) {
                Ok(reply) => return Ok(reply),
                Err(ServiceError::Io(_)) if attempt == 0 => *guard = None,
                Err(e) => {
                    *guard = None;
                    return Err(e);
                }
            }
        }
        unreachable!("second attempt always returns")
    }
}

impl Service for Remote {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        let id = frame.query_id;
        self.call(&frame)
            .unwrap_or_else(|e| crate::failure_frame(MessageType::Error, id, &e))
    }
}
