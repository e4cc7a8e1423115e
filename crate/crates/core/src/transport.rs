//! Byte-stream transports connecting a host to a device.
//!
//! Two endpoints carry the identical frame protocol: an in-process duplex
//! pipe and a TCP socket.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

/// An ordered, reliable duplex byte stream whose reads can time out.
pub trait Transport: Read + Write + Send {
    /// `None` blocks indefinitely. A timed-out read returns an error of kind
    /// `TimedOut` or `WouldBlock`.
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
}

impl Transport for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        (**self).set_read_timeout(timeout)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        (**self).set_read_timeout(timeout)
    }
}

pub fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock)
}

#[derive(Default)]
struct PipeState {
    // inbound[i] holds bytes waiting to be read by end i.
    inbound: [VecDeque<u8>; 2],
    closed: [bool; 2],
    blocked: [bool; 2],
}

struct Shared {
    state: Mutex<PipeState>,
    cond: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, PipeState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// One end of an in-process duplex pipe.
///
/// A read with a timeout also fails fast once the pipe is quiescent: the
/// local inbound queue is empty, the peer is itself blocked in a read and
/// nothing is queued for the peer. No byte can ever arrive in that state, so
/// waiting out the wall-clock deadline is pointless. This is what lets
/// virtual-clock sessions observe dropped responses without sleeping.
pub struct PipeEnd {
    shared: Arc<Shared>,
    side: usize,
    read_timeout: Option<Duration>,
}

/// Creates a connected pair of pipe ends.
pub fn duplex_pipe() -> (PipeEnd, PipeEnd) {
    let shared = Arc::new(Shared {
        state: Mutex::new(PipeState::default()),
        cond: Condvar::new(),
    });
    (
        PipeEnd {
            shared: Arc::clone(&shared),
            side: 0,
            read_timeout: None,
        },
        PipeEnd {
            shared,
            side: 1,
            read_timeout: None,
        },
    )
}

impl PipeEnd {
    fn peer(&self) -> usize {
        1 - self.side
    }
}

impl Read for PipeEnd {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        let deadline = self.read_timeout.map(|t| Instant::now() + t);
        let (me, peer) = (self.side, self.peer());
        let mut st = self.shared.lock();
        loop {
            if !st.inbound[me].is_empty() {
                let n = buf.len().min(st.inbound[me].len());
                for (dst, src) in buf.iter_mut().zip(st.inbound[me].drain(..n)) {
                    *dst = src;
                }
                if st.blocked[me] {
                    st.blocked[me] = false;
                    self.shared.cond.notify_all();
                }
                return Ok(n);
            }
            if st.closed[peer] {
                st.blocked[me] = false;
                return Ok(0);
            }
            if !st.blocked[me] {
                st.blocked[me] = true;
                self.shared.cond.notify_all();
            }
            match deadline {
                None => {
                    st = self.shared.cond.wait(st).unwrap_or_else(|e| e.into_inner());
                }
                Some(deadline) => {
                    let quiescent = st.blocked[peer] && st.inbound[peer].is_empty();
                    let now = Instant::now();
                    if quiescent || now >= deadline {
                        st.blocked[me] = false;
                        return Err(io::Error::new(io::ErrorKind::TimedOut, "pipe read timed out"));
                    }
                    st = self
                        .shared
                        .cond
                        .wait_timeout(st, deadline - now)
                        .unwrap_or_else(|e| e.into_inner())
                        .0;
                }
            }
        }
    }
}

impl Write for PipeEnd {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let peer = self.peer();
        let mut st = self.shared.lock();
        if st.closed[peer] {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "pipe peer closed"));
        }
        st.inbound[peer].extend(buf);
        self.shared.cond.notify_all();
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Transport for PipeEnd {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.read_timeout = timeout;
        Ok(())
    }
}

impl Drop for PipeEnd {
    fn drop(&mut self) {
        let mut st = self.shared.lock();
        st.closed[self.side] = true;
        st.blocked[self.side] = false;
        self.shared.cond.notify_all();
    }
}
