//! Byte-stream decoding for archive members.

use std::io::{self, Read};

use encoding_rs::{Decoder, DecoderResult, GBK};
use serde::{Deserialize, Serialize};

/// How member bytes are turned into text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingPolicy {
    Utf8,
    Gbk,
    /// UTF-8 when the first 64 KiB decode cleanly (or start with a BOM),
    /// otherwise GBK. Decided per member.
    #[default]
    AutoDetect,
}

impl std::str::FromStr for EncodingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "utf8" | "utf-8" => Ok(EncodingPolicy::Utf8),
            "gbk" | "gb18030" => Ok(EncodingPolicy::Gbk),
            "auto" | "autodetect" => Ok(EncodingPolicy::AutoDetect),
            _ => Err(format!("unknown encoding policy {s:?} (utf8, gbk, auto)")),
        }
    }
}

/// Concrete encoding chosen for one member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberEncoding {
    Utf8,
    Gbk,
}

pub(crate) const PEEK: usize = 64 * 1024;
const BOM: &[u8] = b"\xEF\xBB\xBF";

pub(crate) fn detect(peek: &[u8], at_eof: bool) -> MemberEncoding {
    if peek.starts_with(BOM) {
        return MemberEncoding::Utf8;
    }
    match std::str::from_utf8(peek) {
        Ok(_) => MemberEncoding::Utf8,
        // A multi-byte sequence cut off by the peek window.
        Err(e) if e.error_len().is_none() && !at_eof => MemberEncoding::Utf8,
        Err(_) => MemberEncoding::Gbk,
    }
}

/// Wraps `inner` so that it yields UTF-8 with any leading BOM removed.
pub(crate) fn decoded<'a, R: Read + 'a>(
    mut inner: R,
    policy: EncodingPolicy,
) -> io::Result<(MemberEncoding, Box<dyn Read + 'a>)> {
    let mut peek = Vec::with_capacity(PEEK);
    (&mut inner).take(PEEK as u64).read_to_end(&mut peek)?;
    let at_eof = peek.len() < PEEK;
    let enc = match policy {
        EncodingPolicy::Utf8 => MemberEncoding::Utf8,
        EncodingPolicy::Gbk => MemberEncoding::Gbk,
        EncodingPolicy::AutoDetect => detect(&peek, at_eof),
    };
    let skip = if enc == MemberEncoding::Utf8 && peek.starts_with(BOM) {
        BOM.len()
    } else {
        0
    };
    let stream = io::Cursor::new(peek).chain(inner);
    let mut stream: Box<dyn Read + 'a> = Box::new(stream);
    if skip > 0 {
        let mut bom = [0u8; 3];
        stream.read_exact(&mut bom)?;
    }
    Ok(match enc {
        MemberEncoding::Utf8 => (enc, stream),
        MemberEncoding::Gbk => (enc, Box::new(GbkReader::new(stream))),
    })
}

/// Streaming GBK to UTF-8 transcoder that fails on undecodable bytes
/// instead of substituting replacement characters.
pub struct GbkReader<R> {
    inner: R,
    decoder: Decoder,
    input: Vec<u8>,
    in_pos: usize,
    in_end: usize,
    output: Vec<u8>,
    out_pos: usize,
    out_end: usize,
    eof: bool,
    done: bool,
    consumed: u64,
}

impl<R: Read> GbkReader<R> {
    pub fn new(inner: R) -> Self {
        GbkReader {
            inner,
            decoder: GBK.new_decoder_without_bom_handling(),
            input: vec![0; 32 * 1024],
            in_pos: 0,
            in_end: 0,
            output: vec![0; 64 * 1024],
            out_pos: 0,
            out_end: 0,
            eof: false,
            done: false,
            consumed: 0,
        }
    }

    fn fill(&mut self) -> io::Result<()> {
        loop {
            if self.in_pos == self.in_end && !self.eof {
                self.in_pos = 0;
                self.in_end = 0;
                let n = self.inner.read(&mut self.input)?;
                self.in_end = n;
                self.eof = n == 0;
            }
            let src = &self.input[self.in_pos..self.in_end];
            let (result, read, written) =
                self.decoder
                    .decode_to_utf8_without_replacement(src, &mut self.output, self.eof);
            self.in_pos += read;
            self.consumed += read as u64;
            self.out_pos = 0;
            self.out_end = written;
            match result {
                DecoderResult::Malformed(bad, _) => {
                    let at = self.consumed.saturating_sub(u64::from(bad));
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("bytes not decodable as GBK near byte offset {at}"),
                    ));
                }
                DecoderResult::InputEmpty if self.eof => {
                    self.done = true;
                    return Ok(());
                }
                _ if written > 0 => return Ok(()),
                _ => {}
            }
        }
    }
}

impl<R: Read> Read for GbkReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.out_pos == self.out_end {
            if self.done {
                return Ok(0);
            }
            self.fill()?;
        }
        let n = buf.len().min(self.out_end - self.out_pos);
        buf[..n].copy_from_slice(&self.output[self.out_pos..self.out_pos + n]);
        self.out_pos += n;
        Ok(n)
    }
}
