//! Frames carried over Unix stream sockets, one socket pair per channel.
//!
//! A reader thread drains each socket into a queue, so a single thread may
//! send large messages before the peer reads them without blocking.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::Shutdown;
use std::os::unix::net::UnixStream;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use super::frame::HEADER_BYTES;
use super::{Channel, Transport};
use crate::error::Error;

const RECV_TIMEOUT: Duration = Duration::from_secs(30);

struct Link {
    writer: UnixStream,
    frames: Receiver<std::io::Result<Vec<u8>>>,
    reader: Option<JoinHandle<()>>,
}

#[derive(Default)]
pub struct SocketTransport {
    links: HashMap<Channel, Link>,
}

impl SocketTransport {
    pub fn new() -> Self {
        SocketTransport::default()
    }

    fn link(&mut self, channel: Channel) -> Result<&mut Link, Error> {
        if !self.links.contains_key(&channel) {
            let (writer, mut read_end) = UnixStream::pair()?;
            let (tx, rx) = mpsc::channel();
            let reader = std::thread::Builder::new()
                .name(format!("recv {channel}"))
                .spawn(move || loop {
                    match read_frame(&mut read_end) {
                        Ok(Some(f)) => {
                            if tx.send(Ok(f)).is_err() {
                                return;
                            }
                        }
                        Ok(None) => return,
                        Err(e) => {
                            let _ = tx.send(Err(e));
                            return;
                        }
                    }
                })?;
            self.links.insert(channel, Link { writer, frames: rx, reader: Some(reader) });
        }
        Ok(self.links.get_mut(&channel).unwrap())
    }
}

/// Reads one frame, or `None` on a clean end of stream.
fn read_frame(stream: &mut UnixStream) -> std::io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; HEADER_BYTES];
    let mut got = 0;
    while got < HEADER_BYTES {
        let n = stream.read(&mut header[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated header"))
            };
        }
        got += n;
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    let mut frame = Vec::with_capacity(HEADER_BYTES + len);
    frame.extend_from_slice(&header);
    frame.resize(HEADER_BYTES + len, 0);
    stream.read_exact(&mut frame[HEADER_BYTES..])?;
    Ok(Some(frame))
}

impl Transport for SocketTransport {
    fn send_frame(&mut self, channel: Channel, frame: Vec<u8>) -> Result<(), Error> {
        let link = self.link(channel)?;
        link.writer
            .write_all(&frame)
            .map_err(|e| Error::Transport(format!("{channel}: {e}")))
    }

    fn recv_frame(&mut self, channel: Channel) -> Result<Vec<u8>, Error> {
        let link = self.link(channel)?;
        match link.frames.recv_timeout(RECV_TIMEOUT) {
            Ok(Ok(f)) => Ok(f),
            Ok(Err(e)) => Err(Error::Transport(format!("{channel}: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Protocol {
                channel: channel.to_string(),
                detail: "receive timed out with no message pending".into(),
            }),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport(format!("{channel}: closed"))),
        }
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        for link in self.links.values_mut() {
            let _ = link.writer.shutdown(Shutdown::Both);
            if let Some(h) = link.reader.take() {
                let _ = h.join();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{MsgKind, Network, Role};
    use super::*;

    #[test]
    fn carries_large_frames_on_one_thread() {
        let mut net = Network::new(Box::new(SocketTransport::new()));
        let big = vec![5u8; 1 << 20];
        net.send(Role::S3, Role::S2, MsgKind::Delta, "delta", big.clone()).unwrap();
        net.send(Role::S3, Role::S2, MsgKind::Delta, "delta", vec![]).unwrap();
        assert_eq!(net.recv(Role::S3, Role::S2, MsgKind::Delta).unwrap(), big);
        assert!(net.recv(Role::S3, Role::S2, MsgKind::Delta).unwrap().is_empty());
    }

    #[test]
    fn channels_are_independent() {
        let mut net = Network::new(Box::new(SocketTransport::new()));
        net.send(Role::S1, Role::S2, MsgKind::Z1, "z1", vec![1; 16]).unwrap();
        net.send(Role::S2, Role::S1, MsgKind::Z2, "z2", vec![2; 16]).unwrap();
        assert_eq!(net.recv(Role::S2, Role::S1, MsgKind::Z2).unwrap(), vec![2; 16]);
        assert_eq!(net.recv(Role::S1, Role::S2, MsgKind::Z1).unwrap(), vec![1; 16]);
    }
}
