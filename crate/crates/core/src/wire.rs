//! Framed byte protocol between server and device.
//!
//! Every frame is a 4-byte big-endian payload length, a 1-byte message
//! type and the payload. Multi-byte integers inside payloads are also
//! big-endian; bit vectors are packed LSB-first.
//!
//! | type | name      | payload                                             |
//! |------|-----------|-----------------------------------------------------|
//! | 1    | CHALLENGE | seed 32, counter 8, L 2, b' L, helper (795 bytes)   |
//! | 2    | RESPONSE  | response bits, ceil(L/8)                            |
//! | 3    | RESULT    | 1 = accept, 0 = reject                              |
//! | 4    | RESYNC    | device counter 8                                    |
//! | 5    | HELLO     | device id 8                                         |
//!
//! A transaction is `HELLO, CHALLENGE, (RESYNC, CHALLENGE)?, RESPONSE, RESULT`,
//! one per connection.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;

use crate::bits::{pack_lsb, unpack_lsb};
use crate::device::{DeviceReply, PufDevice, Seed};
use crate::fe::HelperData;
use crate::lwe::Zq;
use crate::server::{Challenge, Decision, DeviceLink, Registry};
use crate::{Error, Result};

pub const HEADER_BYTES: usize = 5;
pub const MAX_PAYLOAD: usize = 64 * 1024;

pub const CHALLENGE: u8 = 1;
pub const RESPONSE: u8 = 2;
pub const RESULT: u8 = 3;
pub const RESYNC: u8 = 4;
pub const HELLO: u8 = 5;

/// Seconds a socket may sit idle before the transaction is aborted.
const IO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("frame payload of {0} bytes exceeds the 64 KiB limit")]
    TooLarge(usize),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("bad {kind} payload: {detail}")]
    BadPayload { kind: &'static str, detail: String },
    #[error("peer closed the connection")]
    Closed,
}

fn bad(kind: &'static str, detail: impl Into<String>) -> WireError {
    WireError::BadPayload {
        kind,
        detail: detail.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Hello { device_id: u64 },
    Challenge(Challenge),
    /// Packed response bits; the receiver knows L from the challenge.
    Response(Vec<u8>),
    Result(bool),
    Resync(u64),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Challenge(_) => CHALLENGE,
            Message::Response(_) => RESPONSE,
            Message::Result(_) => RESULT,
            Message::Resync(_) => RESYNC,
            Message::Hello { .. } => HELLO,
        }
    }

    pub fn response(bits: &[bool]) -> Message {
        Message::Response(pack_lsb(bits))
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Message::Challenge(c) => {
                let helper = c.helper.to_bytes();
                let mut out = Vec::with_capacity(42 + c.b_prime.len() + helper.len());
                out.extend_from_slice(&c.seed);
                out.extend_from_slice(&c.counter.to_be_bytes());
                out.extend_from_slice(&(c.b_prime.len() as u16).to_be_bytes());
                out.extend(c.b_prime.iter().map(|e| e.0));
                out.extend_from_slice(&helper);
                out
            }
            Message::Response(bytes) => bytes.clone(),
            Message::Result(ok) => vec![*ok as u8],
            Message::Resync(counter) => counter.to_be_bytes().to_vec(),
            Message::Hello { device_id } => device_id.to_be_bytes().to_vec(),
        }
    }

    fn from_payload(msg_type: u8, p: &[u8]) -> std::result::Result<Message, WireError> {
        let u64_of = |kind, p: &[u8]| -> std::result::Result<u64, WireError> {
            let arr: [u8; 8] = p.try_into().map_err(|_| bad(kind, format!("{} bytes, want 8", p.len())))?;
            Ok(u64::from_be_bytes(arr))
        };
        match msg_type {
            CHALLENGE => {
                if p.len() < 42 {
                    return Err(bad("CHALLENGE", format!("{} bytes is shorter than the fixed fields", p.len())));
                }
                let seed: Seed = p[..32].try_into().expect("fixed slice");
                let counter = u64::from_be_bytes(p[32..40].try_into().expect("fixed slice"));
                let len = u16::from_be_bytes([p[40], p[41]]) as usize;
                if len == 0 || p.len() < 42 + len {
                    return Err(bad("CHALLENGE", format!("L = {len} with {} bytes", p.len())));
                }
                let b_prime = p[42..42 + len].iter().copied().map(Zq).collect();
                let helper_bytes = &p[42 + len..];
                let helper = HelperData::from_bytes(helper_bytes, 8 * helper_bytes.len())
                    .map_err(|e| bad("CHALLENGE", e.to_string()))?;
                Ok(Message::Challenge(Challenge {
                    seed,
                    counter,
                    b_prime,
                    helper,
                }))
            }
            RESPONSE => {
                if p.is_empty() {
                    return Err(bad("RESPONSE", "empty"));
                }
                Ok(Message::Response(p.to_vec()))
            }
            RESULT => match p {
                [0] => Ok(Message::Result(false)),
                [1] => Ok(Message::Result(true)),
                _ => Err(bad("RESULT", format!("{p:?}"))),
            },
            RESYNC => Ok(Message::Resync(u64_of("RESYNC", p)?)),
            HELLO => Ok(Message::Hello {
                device_id: u64_of("HELLO", p)?,
            }),
            t => Err(WireError::UnknownType(t)),
        }
    }
}

/// Serializes one message as a complete frame.
pub fn encode_msg(msg: &Message) -> std::result::Result<Vec<u8>, WireError> {
    let payload = msg.payload();
    if payload.len() > MAX_PAYLOAD {
        return Err(WireError::TooLarge(payload.len()));
    }
    let mut frame = Vec::with_capacity(HEADER_BYTES + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.push(msg.msg_type());
    frame.extend_from_slice(&payload);
    Ok(frame)
}

/// Parses one frame from the front of `buf`; returns the message and the
/// number of bytes consumed.
pub fn decode_msg(buf: &[u8]) -> std::result::Result<(Message, usize), WireError> {
    if buf.len() < HEADER_BYTES {
        return Err(WireError::Truncated {
            need: HEADER_BYTES,
            have: buf.len(),
        });
    }
    let len = u32::from_be_bytes(buf[..4].try_into().expect("fixed slice")) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    let end = HEADER_BYTES + len;
    if buf.len() < end {
        return Err(WireError::Truncated {
            need: end,
            have: buf.len(),
        });
    }
    Ok((Message::from_payload(buf[4], &buf[HEADER_BYTES..end])?, end))
}

/// Reads one raw frame. A clean EOF before the header is [`WireError::Closed`].
pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let mut frame = vec![0u8; HEADER_BYTES];
    let got = read_full(r, &mut frame)?;
    if got == 0 {
        return Err(WireError::Closed.into());
    }
    if got < HEADER_BYTES {
        return Err(WireError::Truncated {
            need: HEADER_BYTES,
            have: got,
        }
        .into());
    }
    let len = u32::from_be_bytes(frame[..4].try_into().expect("fixed slice")) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len).into());
    }
    frame.resize(HEADER_BYTES + len, 0);
    let got = read_full(r, &mut frame[HEADER_BYTES..])?;
    if got < len {
        return Err(WireError::Truncated {
            need: HEADER_BYTES + len,
            have: HEADER_BYTES + got,
        }
        .into());
    }
    Ok(frame)
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(k) => filled += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn write_msg<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode_msg(msg)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_msg<R: Read>(r: &mut R) -> Result<Message> {
    Ok(decode_msg(&read_frame(r)?)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Every frame seen by one endpoint, in order.
pub type Transcript = Vec<(Direction, Vec<u8>)>;

/// A byte stream with framing and a transcript.
#[derive(Debug)]
pub struct FramedStream<S> {
    inner: S,
    transcript: Transcript,
}

impl<S: Read + Write> FramedStream<S> {
    pub fn new(inner: S) -> Self {
        FramedStream {
            inner,
            transcript: Vec::new(),
        }
    }

    pub fn send(&mut self, msg: &Message) -> Result<()> {
        let frame = encode_msg(msg)?;
        self.inner.write_all(&frame)?;
        self.inner.flush()?;
        self.transcript.push((Direction::Sent, frame));
        Ok(())
    }

    pub fn recv(&mut self) -> Result<Message> {
        let frame = read_frame(&mut self.inner)?;
        let msg = decode_msg(&frame)?.0;
        self.transcript.push((Direction::Received, frame));
        Ok(msg)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_parts(self) -> (S, Transcript) {
        (self.inner, self.transcript)
    }
}

/// One end of an in-process duplex pipe.
#[derive(Debug)]
pub struct PipeEnd {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

impl PipeEnd {
    /// Half-closes the write side; the peer then reads EOF.
    pub fn shutdown_write(&mut self) {
        self.tx = None;
    }
}

/// A connected pair of pipe ends.
pub fn loopback() -> (PipeEnd, PipeEnd) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    let end = |tx, rx| PipeEnd {
        tx: Some(tx),
        rx,
        buf: Vec::new(),
        pos: 0,
    };
    (end(tx_a, rx_a), end(tx_b, rx_b))
}

impl Read for PipeEnd {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let k = out.len().min(self.buf.len() - self.pos);
        out[..k].copy_from_slice(&self.buf[self.pos..self.pos + k]);
        self.pos += k;
        Ok(k)
    }
}

impl Write for PipeEnd {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let tx = self.tx.as_ref().ok_or(io::ErrorKind::BrokenPipe)?;
        if data.is_empty() {
            return Ok(0);
        }
        tx.send(data.to_vec()).map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Server-side [`DeviceLink`] over a framed stream.
#[derive(Debug)]
pub struct WireLink<'a, S> {
    stream: &'a mut FramedStream<S>,
    expected_len: usize,
}

impl<'a, S: Read + Write> WireLink<'a, S> {
    pub fn new(stream: &'a mut FramedStream<S>) -> Self {
        WireLink {
            stream,
            expected_len: 0,
        }
    }
}

impl<S: Read + Write> DeviceLink for WireLink<'_, S> {
    fn exchange(&mut self, challenge: &Challenge) -> Result<DeviceReply> {
        self.expected_len = challenge.b_prime.len();
        self.stream.send(&Message::Challenge(challenge.clone()))?;
        match self.stream.recv()? {
            Message::Response(bytes) => {
                Error::check_len("response bytes", self.expected_len.div_ceil(8), bytes.len())?;
                Ok(DeviceReply::Response(unpack_lsb(&bytes, self.expected_len)))
            }
            Message::Resync(counter) => Ok(DeviceReply::Resync(counter)),
            other => Err(Error::Protocol(format!("expected RESPONSE or RESYNC, got type {}", other.msg_type()))),
        }
    }

    fn report(&mut self, accepted: bool) -> Result<()> {
        self.stream.send(&Message::Result(accepted))
    }
}

/// Runs one transaction on an accepted connection: read HELLO, then
/// authenticate the named device.
pub fn serve_connection<S: Read + Write>(registry: &Registry, stream: &mut FramedStream<S>) -> Result<Decision> {
    let device_id = match stream.recv()? {
        Message::Hello { device_id } => device_id,
        other => return Err(Error::Protocol(format!("expected HELLO, got type {}", other.msg_type()))),
    };
    registry.authenticate(device_id, &mut WireLink::new(stream))
}

/// Accepts connections until `max_connections` have been handled (or
/// forever), one thread per connection.
pub fn serve(registry: Arc<Registry>, listener: TcpListener, max_connections: Option<usize>) -> Result<()> {
    let mut workers = Vec::new();
    for (i, conn) in listener.incoming().enumerate() {
        let conn = conn?;
        let registry = Arc::clone(&registry);
        workers.push(std::thread::spawn(move || {
            let peer = conn.peer_addr().ok();
            let outcome = conn
                .set_read_timeout(Some(IO_TIMEOUT))
                .map_err(Error::from)
                .and_then(|_| serve_connection(&registry, &mut FramedStream::new(conn)));
            match outcome {
                Ok(d) => log::info!("{peer:?}: {d:?}"),
                Err(e) => log::warn!("{peer:?}: aborted: {e}"),
            }
        }));
        workers.retain(|w| !w.is_finished());
        if max_connections.is_some_and(|max| i + 1 >= max) {
            break;
        }
    }
    for w in workers {
        w.join().expect("connection thread panicked");
    }
    Ok(())
}

/// Device side of one transaction. Returns the server's verdict, or `None`
/// if the server hung up without one.
pub fn run_device<S: Read + Write, R: Rng>(
    device: &mut PufDevice<R>,
    stream: &mut FramedStream<S>,
) -> Result<Option<bool>> {
    stream.send(&Message::Hello { device_id: device.id() })?;
    loop {
        let msg = match stream.recv() {
            Err(Error::Wire(WireError::Closed)) => return Ok(None),
            other => other?,
        };
        match msg {
            Message::Challenge(c) => {
                let reply = match device.answer(c.counter, &c.seed, &c.b_prime, &c.helper)? {
                    DeviceReply::Response(bits) => Message::response(&bits),
                    DeviceReply::Resync(counter) => Message::Resync(counter),
                };
                stream.send(&reply)?;
            }
            Message::Result(accepted) => return Ok(Some(accepted)),
            other => {
                return Err(Error::Protocol(format!(
                    "device got unexpected message type {}",
                    other.msg_type()
                )))
            }
        }
    }
}

pub fn connect_device<R: Rng, A: ToSocketAddrs>(device: &mut PufDevice<R>, endpoint: A) -> Result<Option<bool>> {
    let conn = TcpStream::connect(endpoint)?;
    conn.set_read_timeout(Some(IO_TIMEOUT))?;
    run_device(device, &mut FramedStream::new(conn))
}

/// Both ends in one process over a [`loopback`] pipe. Returns the server's
/// decision and its transcript.
pub fn loopback_transaction<R: Rng + Send>(
    registry: &Registry,
    device: &mut PufDevice<R>,
) -> Result<(Decision, Transcript)> {
    let (server_end, device_end) = loopback();
    let mut server = FramedStream::new(server_end);
    let (decision, device_outcome) = std::thread::scope(|scope| {
        let dev = scope.spawn(move || run_device(device, &mut FramedStream::new(device_end)));
        let decision = serve_connection(registry, &mut server);
        // Dropping our sender lets a device still waiting for RESULT see EOF.
        server.inner.shutdown_write();
        (decision, dev.join().expect("device thread panicked"))
    });
    if let Err(e) = device_outcome {
        log::warn!("device side: {e}");
    }
    Ok((decision?, server.into_parts().1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DatapathConfig;
    use crate::fe::pok_new;
    use crate::sampler::{rng_from_seed, sample_bits, sample_bytes, PufRng};
    use crate::server::AuthPolicy;
    use proptest::prelude::*;
    use rand::Rng;

    fn challenge(len: usize, seed: u64) -> Challenge {
        let mut rng = rng_from_seed(seed);
        Challenge {
            seed: rng.random(),
            counter: rng.random(),
            b_prime: sample_bytes(len, &mut rng).into_iter().map(Zq).collect(),
            helper: HelperData::from_bits(sample_bits(6360, &mut rng)),
        }
    }

    #[test]
    fn challenge_frame_size() {
        let frame = encode_msg(&Message::Challenge(challenge(100, 1))).unwrap();
        assert_eq!(frame.len(), HEADER_BYTES + 937);
        assert_eq!(&frame[..5], &[0, 0, 3, 0xA9, CHALLENGE]);
    }

    #[test]
    fn fixed_layouts() {
        assert_eq!(encode_msg(&Message::Result(true)).unwrap(), [0, 0, 0, 1, RESULT, 1]);
        assert_eq!(
            encode_msg(&Message::Resync(0x0102)).unwrap(),
            [0, 0, 0, 8, RESYNC, 0, 0, 0, 0, 0, 0, 1, 2]
        );
        let bits: Vec<bool> = (0..100).map(|i| i == 0 || i == 9).collect();
        let frame = encode_msg(&Message::response(&bits)).unwrap();
        assert_eq!(frame.len(), 5 + 13);
        assert_eq!(&frame[5..7], &[0x01, 0x02]);
    }

    #[test]
    fn every_truncation_is_an_error() {
        let frame = encode_msg(&Message::Challenge(challenge(100, 2))).unwrap();
        for cut in 0..frame.len() {
            assert!(
                matches!(decode_msg(&frame[..cut]), Err(WireError::Truncated { .. })),
                "cut {cut}"
            );
            let mut r = &frame[..cut];
            assert!(read_msg(&mut r).is_err());
        }
        assert_eq!(decode_msg(&frame).unwrap().1, frame.len());
    }

    #[test]
    fn oversize_and_unknown_rejected() {
        let mut frame = vec![0, 1, 0, 1, RESPONSE];
        assert!(matches!(decode_msg(&frame), Err(WireError::TooLarge(65537))));
        frame.resize(5 + 65537, 0);
        assert!(matches!(
            read_msg(&mut frame.as_slice()),
            Err(Error::Wire(WireError::TooLarge(_)))
        ));
        assert!(matches!(
            encode_msg(&Message::Response(vec![0; MAX_PAYLOAD + 1])),
            Err(WireError::TooLarge(_))
        ));
        assert!(matches!(decode_msg(&[0, 0, 0, 0, 9]), Err(WireError::UnknownType(9))));
        assert!(matches!(decode_msg(&[0, 0, 0, 1, RESULT, 2]), Err(WireError::BadPayload { .. })));
        assert!(matches!(decode_msg(&[0, 0, 0, 2, RESYNC, 1, 2]), Err(WireError::BadPayload { .. })));
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        prop_oneof![
            any::<u64>().prop_map(|device_id| Message::Hello { device_id }),
            (1usize..600, any::<u64>()).prop_map(|(len, s)| Message::Challenge(challenge(len, s))),
            proptest::collection::vec(any::<u8>(), 1..200).prop_map(Message::Response),
            any::<bool>().prop_map(Message::Result),
            any::<u64>().prop_map(Message::Resync),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn roundtrip(msg in arb_message()) {
            let frame = encode_msg(&msg).unwrap();
            let (back, used) = decode_msg(&frame).unwrap();
            prop_assert_eq!(used, frame.len());
            prop_assert_eq!(back, msg);
        }
    }

    fn setup(seed: u64) -> (Registry, PufDevice<PufRng>) {
        let mut rng = rng_from_seed(seed);
        let pok = pok_new(&mut rng);
        let config = DatapathConfig::new(4, 32).unwrap();
        let registry = Registry::new(AuthPolicy::default());
        registry.enroll(3, pok.truth(), config, 5, &mut rng).unwrap();
        (registry, PufDevice::new(3, pok, config, rng_from_seed(seed + 1)))
    }

    #[test]
    fn loopback_transaction_accepts() {
        let (registry, mut device) = setup(141);
        let (decision, transcript) = loopback_transaction(&registry, &mut device).unwrap();
        assert!(decision.accepted(), "{decision:?}");
        let kinds: Vec<(Direction, u8)> = transcript.iter().map(|(d, f)| (*d, f[4])).collect();
        assert_eq!(
            kinds,
            [
                (Direction::Received, HELLO),
                (Direction::Sent, CHALLENGE),
                (Direction::Received, RESPONSE),
                (Direction::Sent, RESULT),
            ]
        );
        assert_eq!(device.counter(), 4);
    }

    #[test]
    fn wrong_key_device_rejected() {
        let (registry, _) = setup(142);
        let mut rng = rng_from_seed(999);
        let impostor_pok = pok_new(&mut rng);
        // Same helper, different SRAM: reconstruction yields a wrong key or fails.
        let mut impostor = PufDevice::new(3, impostor_pok, DatapathConfig::new(4, 32).unwrap(), rng);
        if let Ok((d, _)) = loopback_transaction(&registry, &mut impostor) { assert!(!d.accepted(), "{d:?}") }
        let record = registry.get(3).unwrap();
        let record = record.lock().unwrap();
        assert_eq!(record.remaining(), 4);
        assert!(!record.history()[0].accepted());
    }

    #[test]
    fn unknown_device_aborts() {
        let (registry, _) = setup(143);
        let mut rng = rng_from_seed(1);
        let mut stranger = PufDevice::new(77, pok_new(&mut rng), DatapathConfig::serial(), rng);
        assert!(matches!(
            loopback_transaction(&registry, &mut stranger),
            Err(Error::UnknownDevice(77))
        ));
    }

    #[test]
    fn dropped_device_consumes_crp() {
        let (registry, _) = setup(144);
        let (server_end, mut device_end) = loopback();
        let mut server = FramedStream::new(server_end);
        std::thread::scope(|s| {
            s.spawn(move || {
                let mut framed = FramedStream::new(&mut device_end);
                framed.send(&Message::Hello { device_id: 3 }).unwrap();
                framed.recv().unwrap();
                // Hang up instead of answering.
            });
            assert!(serve_connection(&registry, &mut server).is_err());
        });
        let record = registry.get(3).unwrap();
        let record = record.lock().unwrap();
        assert_eq!(record.remaining(), 4);
        assert!(matches!(record.history(), [Decision::Abort { .. }]));
    }

    #[test]
    fn tcp_matches_loopback_bytes() {
        let (registry, mut device) = setup(145);
        let (_, loop_trace) = loopback_transaction(&registry, &mut device.clone()).unwrap();

        // Fresh registry from the same seed so the same CRP is served.
        let (registry, _) = setup(145);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let tcp_trace = std::thread::scope(|s| {
            let server = s.spawn(|| {
                let (conn, _) = listener.accept().unwrap();
                let mut framed = FramedStream::new(conn);
                let decision = serve_connection(&registry, &mut framed).unwrap();
                assert!(decision.accepted());
                framed.into_parts().1
            });
            assert_eq!(connect_device(&mut device, addr).unwrap(), Some(true));
            server.join().unwrap()
        });
        assert_eq!(tcp_trace, loop_trace);
    }

    #[test]
    fn serve_handles_concurrent_devices() {
        let mut rng = rng_from_seed(146);
        let registry = Arc::new(Registry::new(AuthPolicy::default()));
        let mut devices = Vec::new();
        for id in 0..3u64 {
            let pok = pok_new(&mut rng);
            let config = DatapathConfig::new(2, 16).unwrap();
            registry.enroll(id, pok.truth(), config, 2, &mut rng).unwrap();
            devices.push(PufDevice::new(id, pok, config, rng_from_seed(id)));
        }
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = {
            let registry = Arc::clone(&registry);
            std::thread::spawn(move || serve(registry, listener, Some(3)))
        };
        let verdicts: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = devices
                .iter_mut()
                .map(|d| s.spawn(move || connect_device(d, addr).unwrap()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        server.join().unwrap().unwrap();
        assert_eq!(verdicts, vec![Some(true); 3]);
    }
}
