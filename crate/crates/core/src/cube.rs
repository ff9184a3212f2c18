//! `.pcube` photon-cube container.
//!
//! Layout (all integers little-endian, 52-byte header):
//!
//! | offset | size | field                                   |
//! |-------:|-----:|-----------------------------------------|
//! |      0 |    4 | magic `PCUB`                            |
//! |      4 |    4 | version (`u32`, currently 1)            |
//! |      8 |    4 | width (`u32`)                           |
//! |     12 |    4 | height (`u32`)                          |
//! |     16 |    4 | frame count (`u32`)                     |
//! |     20 |    4 | scene channels (`u32`, 1 or 3)          |
//! |     24 |    4 | Bayer code (`u32`, 0 = none, 1..=4)     |
//! |     28 |    8 | fps (`f64`)                             |
//! |     36 |    8 | alpha (`f64`)                           |
//! |     44 |    8 | seed (`u64`)                            |
//!
//! The payload follows immediately: frames in order, rows top to bottom,
//! eight pixels per byte with the leftmost pixel in the least significant
//! bit. Each row is padded with zero bits to a byte boundary, so the
//! payload is `frame_count * height * ceil(width / 8)` bytes.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::bayer::BayerPattern;
use crate::sim::BinaryFrame;

pub const MAGIC: [u8; 4] = *b"PCUB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 52;
pub const EXTENSION: &str = "pcube";

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("bad magic {0:02x?}, expected \"PCUB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported cube version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated cube: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("header does not match payload: {0}")]
    Inconsistent(String),
    #[error("frame range {start}..{end} outside 0..{frame_count}")]
    OutOfRange {
        start: u64,
        end: u64,
        frame_count: u32,
    },
    #[error("cube i/o: {0}")]
    Io(#[from] io::Error),
}

impl CubeError {
    /// Stable numeric code, shared with the C ABI.
    pub fn code(&self) -> i32 {
        match self {
            CubeError::BadMagic(_) => 10,
            CubeError::UnsupportedVersion(_) => 11,
            CubeError::Truncated { .. } => 12,
            CubeError::InvalidHeader(_) => 13,
            CubeError::Inconsistent(_) => 14,
            CubeError::OutOfRange { .. } => 15,
            CubeError::Io(_) => 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub fps: f64,
    pub channels: u32,
    pub pattern: Option<BayerPattern>,
    pub alpha: f64,
    pub seed: u64,
}

impl CubeHeader {
    pub fn row_bytes(&self) -> u64 {
        (self.width as u64).div_ceil(8)
    }

    pub fn frame_bytes(&self) -> u64 {
        self.row_bytes() * self.height as u64
    }

    pub fn payload_bytes(&self) -> u64 {
        self.frame_bytes() * self.frame_count as u64
    }

    fn validate(&self) -> Result<(), CubeError> {
        match (self.channels, self.pattern) {
            (1, None) | (3, Some(_)) => Ok(()),
            (c, p) => Err(CubeError::InvalidHeader(format!(
                "channels {c} with pattern {p:?} (expected 1/none or 3/pattern)"
            ))),
        }
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&VERSION.to_le_bytes());
        b[8..12].copy_from_slice(&self.width.to_le_bytes());
        b[12..16].copy_from_slice(&self.height.to_le_bytes());
        b[16..20].copy_from_slice(&self.frame_count.to_le_bytes());
        b[20..24].copy_from_slice(&self.channels.to_le_bytes());
        b[24..28].copy_from_slice(&self.pattern.map_or(0, |p| p.code()).to_le_bytes());
        b[28..36].copy_from_slice(&self.fps.to_le_bytes());
        b[36..44].copy_from_slice(&self.alpha.to_le_bytes());
        b[44..52].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    fn decode(b: &[u8; HEADER_LEN]) -> Result<Self, CubeError> {
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        let magic: [u8; 4] = b[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(CubeError::BadMagic(magic));
        }
        let version = u32_at(4);
        if version != VERSION {
            return Err(CubeError::UnsupportedVersion(version));
        }
        let pattern = BayerPattern::from_code(u32_at(24))
            .map_err(|e| CubeError::InvalidHeader(e.to_string()))?;
        let h = CubeHeader {
            width: u32_at(8),
            height: u32_at(12),
            frame_count: u32_at(16),
            channels: u32_at(20),
            pattern,
            fps: f64::from_bits(u64_at(28)),
            alpha: f64::from_bits(u64_at(36)),
            seed: u64_at(44),
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonCube {
    header: CubeHeader,
    frames: Vec<BinaryFrame>,
}

impl PhotonCube {
    /// Checks that every frame is single-channel with the header's geometry
    /// and pattern, and that `frame_count` matches.
    pub fn new(header: CubeHeader, frames: Vec<BinaryFrame>) -> Result<Self, CubeError> {
        header.validate()?;
        if frames.len() as u64 != header.frame_count as u64 {
            return Err(CubeError::Inconsistent(format!(
                "header says {} frames, payload has {}",
                header.frame_count,
                frames.len()
            )));
        }
        for (i, f) in frames.iter().enumerate() {
            if f.width() != header.width as usize
                || f.height() != header.height as usize
                || f.channels() != 1
                || f.pattern() != header.pattern
            {
                return Err(CubeError::Inconsistent(format!(
                    "frame {i} is {}x{}x{} ({:?}), header is {}x{}x1 ({:?})",
                    f.width(),
                    f.height(),
                    f.channels(),
                    f.pattern(),
                    header.width,
                    header.height,
                    header.pattern
                )));
            }
        }
        Ok(PhotonCube { header, frames })
    }

    pub fn header(&self) -> &CubeHeader {
        &self.header
    }

    pub fn frames(&self) -> &[BinaryFrame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [BinaryFrame] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<BinaryFrame> {
        self.frames
    }
}

fn pack_frame(frame: &BinaryFrame, row_bytes: usize, out: &mut Vec<u8>) {
    for row in frame.bits().chunks(frame.width().max(1)).take(frame.height()) {
        let start = out.len();
        out.resize(start + row_bytes, 0);
        for (x, &b) in row.iter().enumerate() {
            out[start + x / 8] |= b << (x % 8);
        }
    }
}

fn unpack_frame(header: &CubeHeader, bytes: &[u8]) -> BinaryFrame {
    let (w, h) = (header.width as usize, header.height as usize);
    let rb = header.row_bytes() as usize;
    let mut bits = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &bytes[y * rb..(y + 1) * rb];
        bits.extend((0..w).map(|x| (row[x / 8] >> (x % 8)) & 1));
    }
    BinaryFrame::new(w, h, 1, header.pattern, bits).expect("unpacked bits are 0/1")
}

/// Serialises `cube`; returns the number of bytes written.
pub fn write_cube<W: Write>(cube: &PhotonCube, sink: &mut W) -> Result<u64, CubeError> {
    // `PhotonCube::new` already enforces consistency; re-check in case the
    // frames were edited in place through `frames_mut`.
    let cube = PhotonCube::new(cube.header, cube.frames.clone())?;
    sink.write_all(&cube.header.encode())?;
    let rb = cube.header.row_bytes() as usize;
    let mut buf = Vec::with_capacity(cube.header.frame_bytes() as usize);
    for f in &cube.frames {
        buf.clear();
        pack_frame(f, rb, &mut buf);
        sink.write_all(&buf)?;
    }
    Ok(HEADER_LEN as u64 + cube.header.payload_bytes())
}

fn read_header<R: Read>(source: &mut R) -> Result<CubeHeader, CubeError> {
    let mut b = [0u8; HEADER_LEN];
    let got = read_fully(source, &mut b)?;
    if got >= 4 && b[0..4] != MAGIC {
        return Err(CubeError::BadMagic(b[0..4].try_into().unwrap()));
    }
    if got < HEADER_LEN {
        return Err(CubeError::Truncated {
            expected: HEADER_LEN as u64,
            actual: got as u64,
        });
    }
    CubeHeader::decode(&b)
}

fn read_fully<R: Read>(source: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match source.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Inverse of [`write_cube`]. Fails without a partial result on any error.
pub fn read_cube<R: Read>(source: &mut R) -> Result<PhotonCube, CubeError> {
    let header = read_header(source)?;
    let expected = HEADER_LEN as u64 + header.payload_bytes();
    let mut payload = Vec::new();
    source.take(header.payload_bytes()).read_to_end(&mut payload)?;
    if (payload.len() as u64) < header.payload_bytes() {
        return Err(CubeError::Truncated {
            expected,
            actual: HEADER_LEN as u64 + payload.len() as u64,
        });
    }
    let fb = header.frame_bytes() as usize;
    let frames = (0..header.frame_count as usize)
        .map(|k| unpack_frame(&header, &payload[k * fb..(k + 1) * fb]))
        .collect();
    PhotonCube::new(header, frames)
}

pub fn write_cube_file(cube: &PhotonCube, path: impl AsRef<Path>) -> Result<u64, CubeError> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = write_cube(cube, &mut w)?;
    w.flush()?;
    Ok(n)
}

pub fn read_cube_file(path: impl AsRef<Path>) -> Result<PhotonCube, CubeError> {
    read_cube(&mut BufReader::new(File::open(path)?))
}

/// Random-access reader that decodes frames on demand.
pub struct CubeReader<R> {
    header: CubeHeader,
    source: R,
    payload_start: u64,
}

impl<R: Read + Seek> CubeReader<R> {
    pub fn open(mut source: R) -> Result<Self, CubeError> {
        let header = read_header(&mut source)?;
        let payload_start = source.stream_position()?;
        Ok(CubeReader {
            header,
            source,
            payload_start,
        })
    }

    pub fn header(&self) -> &CubeHeader {
        &self.header
    }

    /// Streams frames `range.start .. range.end` in order.
    pub fn stream_frames(&mut self, range: Range<u64>) -> Result<FrameStream<'_, R>, CubeError> {
        if range.start > range.end || range.end > self.header.frame_count as u64 {
            return Err(CubeError::OutOfRange {
                start: range.start,
                end: range.end,
                frame_count: self.header.frame_count,
            });
        }
        self.source.seek(SeekFrom::Start(
            self.payload_start + range.start * self.header.frame_bytes(),
        ))?;
        Ok(FrameStream {
            reader: self,
            next: range.start,
            end: range.end,
            buf: Vec::new(),
        })
    }

    pub fn read_frame(&mut self, index: u64) -> Result<BinaryFrame, CubeError> {
        self.stream_frames(index..index + 1)?
            .next()
            .expect("range holds one frame")
    }
}

impl CubeReader<BufReader<File>> {
    pub fn open_file(path: impl AsRef<Path>) -> Result<Self, CubeError> {
        CubeReader::open(BufReader::new(File::open(path)?))
    }
}

pub struct FrameStream<'a, R> {
    reader: &'a mut CubeReader<R>,
    next: u64,
    end: u64,
    buf: Vec<u8>,
}

impl<R: Read + Seek> Iterator for FrameStream<'_, R> {
    type Item = Result<BinaryFrame, CubeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let header = self.reader.header;
        let fb = header.frame_bytes() as usize;
        self.buf.resize(fb, 0);
        let got = match read_fully(&mut self.reader.source, &mut self.buf) {
            Ok(g) => g,
            Err(e) => {
                self.next = self.end;
                return Some(Err(e.into()));
            }
        };
        if got < fb {
            let expected = self.reader.payload_start + (self.next + 1) * fb as u64;
            self.next = self.end;
            return Some(Err(CubeError::Truncated {
                expected,
                actual: expected - (fb - got) as u64,
            }));
        }
        self.next += 1;
        Some(Ok(unpack_frame(&header, &self.buf)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn header(w: u32, h: u32, frames: u32) -> CubeHeader {
        CubeHeader {
            width: w,
            height: h,
            frame_count: frames,
            fps: 20_000.0,
            channels: 1,
            pattern: None,
            alpha: 1.0,
            seed: 77,
        }
    }

    fn frame(w: usize, h: usize, f: impl Fn(usize) -> u8) -> BinaryFrame {
        BinaryFrame::new(w, h, 1, None, (0..w * h).map(f).collect()).unwrap()
    }

    fn sample_cube() -> PhotonCube {
        let frames = (0..5).map(|k| frame(13, 3, |i| ((i * 7 + k) % 3 == 0) as u8)).collect();
        PhotonCube::new(header(13, 3, 5), frames).unwrap()
    }

    #[test]
    fn hand_packed_byte() {
        let cube = PhotonCube::new(
            header(8, 1, 1),
            vec![frame(8, 1, |i| [1, 0, 1, 0, 1, 0, 1, 0][i])],
        )
        .unwrap();
        let mut out = Vec::new();
        assert_eq!(write_cube(&cube, &mut out).unwrap(), 53);
        assert_eq!(out[HEADER_LEN..], [0x55]);
        assert_eq!(&out[..4], b"PCUB");
    }

    #[test]
    fn row_padding() {
        // width 10: two bytes per row, bits 8,9 land in the low bits of byte 1
        let f = frame(10, 2, |i| (i % 10 >= 8) as u8);
        let cube = PhotonCube::new(header(10, 2, 1), vec![f]).unwrap();
        let mut out = Vec::new();
        write_cube(&cube, &mut out).unwrap();
        assert_eq!(out[HEADER_LEN..], [0x00, 0x03, 0x00, 0x03]);
    }

    #[test]
    fn empty_cube_is_header_only() {
        let cube = PhotonCube::new(header(9, 9, 0), vec![]).unwrap();
        let mut out = Vec::new();
        assert_eq!(write_cube(&cube, &mut out).unwrap(), HEADER_LEN as u64);
        assert_eq!(out.len(), HEADER_LEN);
        assert_eq!(read_cube(&mut Cursor::new(out)).unwrap(), cube);
    }

    #[test]
    fn roundtrip_and_idempotence() {
        let cube = sample_cube();
        let mut a = Vec::new();
        write_cube(&cube, &mut a).unwrap();
        let back = read_cube(&mut Cursor::new(&a)).unwrap();
        assert_eq!(back, cube);
        let mut b = Vec::new();
        write_cube(&back, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inconsistent_header_is_rejected() {
        let frames = vec![frame(4, 4, |_| 0)];
        assert!(matches!(
            PhotonCube::new(header(4, 4, 2), frames.clone()),
            Err(CubeError::Inconsistent(_))
        ));
        assert!(matches!(
            PhotonCube::new(header(5, 4, 1), frames.clone()),
            Err(CubeError::Inconsistent(_))
        ));
        let mut h = header(4, 4, 1);
        h.channels = 3;
        assert!(matches!(
            PhotonCube::new(h, frames),
            Err(CubeError::InvalidHeader(_))
        ));
    }

    #[test]
    fn distinct_errors() {
        let mut bytes = Vec::new();
        write_cube(&sample_cube(), &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        let e = read_cube(&mut Cursor::new(bad)).unwrap_err();
        assert!(matches!(e, CubeError::BadMagic(_)));

        let mut bad = bytes.clone();
        bad[4] = 2;
        let e = read_cube(&mut Cursor::new(bad)).unwrap_err();
        assert!(matches!(e, CubeError::UnsupportedVersion(2)));

        let cut = bytes.len() - 3;
        let e = read_cube(&mut Cursor::new(&bytes[..cut])).unwrap_err();
        match e {
            CubeError::Truncated { expected, actual } => {
                assert_eq!(expected, bytes.len() as u64);
                assert_eq!(actual, cut as u64);
                assert!(e.to_string().contains(&format!("{expected}")));
            }
            other => panic!("{other:?}"),
        }

        let e = read_cube(&mut Cursor::new(&bytes[..20])).unwrap_err();
        assert!(matches!(e, CubeError::Truncated { expected: 52, actual: 20 }));

        let codes: Vec<i32> = [
            CubeError::BadMagic(*b"XXXX"),
            CubeError::UnsupportedVersion(2),
            CubeError::Truncated { expected: 1, actual: 0 },
        ]
        .iter()
        .map(CubeError::code)
        .collect();
        assert_eq!(codes, [10, 11, 12]);
    }

    #[test]
    fn streaming_matches_full_read() {
        let cube = sample_cube();
        let mut bytes = Vec::new();
        write_cube(&cube, &mut bytes).unwrap();
        let mut r = CubeReader::open(Cursor::new(bytes)).unwrap();
        let all: Vec<_> = r.stream_frames(0..5).unwrap().map(Result::unwrap).collect();
        assert_eq!(all, cube.frames());
        assert_eq!(r.stream_frames(3..3).unwrap().count(), 0);
        assert_eq!(&r.read_frame(2).unwrap(), &cube.frames()[2]);
        assert!(matches!(
            r.stream_frames(4..6),
            Err(CubeError::OutOfRange { .. })
        ));
    }

    #[test]
    fn streaming_reports_truncation() {
        let mut bytes = Vec::new();
        write_cube(&sample_cube(), &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 1);
        let mut r = CubeReader::open(Cursor::new(bytes)).unwrap();
        let got: Vec<_> = r.stream_frames(0..5).unwrap().collect();
        assert_eq!(got.len(), 5);
        assert!(got[..4].iter().all(Result::is_ok));
        assert!(matches!(got[4], Err(CubeError::Truncated { .. })));
    }
}
