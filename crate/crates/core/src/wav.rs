//! Minimal RIFF/WAVE reader.
//!
//! Accepts PCM integer (16, 24, 32 bit) and IEEE float (32 bit) data,
//! little-endian, including the `WAVE_FORMAT_EXTENSIBLE` wrapper. Chunks
//! other than `fmt ` and `data` are skipped. Integer samples are divided by
//! their full-scale value `2^(bits-1)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::SampledSignal;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Int,
    Float,
}

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    encoding: Encoding,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits_per_sample: u16,
}

/// Reads a WAV file. Multichannel files require `channel` to pick one
/// channel (0-based); mono files accept `None` or `Some(0)`.
pub fn load_wav(path: impl AsRef<Path>, channel: Option<u16>) -> Result<SampledSignal> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, channel)
}

pub fn decode_wav(bytes: &[u8], channel: Option<u16>) -> Result<SampledSignal> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("wav: missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "wav: chunk {:?} claims {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::Format("wav: no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("wav: no data chunk".into()))?;

    let channel = match (fmt.channels, channel) {
        (1, None) => 0,
        (n, None) => return Err(Error::AmbiguousChannels { channels: n }),
        (n, Some(c)) if c >= n => {
            return Err(Error::Config(format!(
                "channel {c} requested but the file has {n}"
            )))
        }
        (_, Some(c)) => c,
    };

    let bytes_per_sample = (fmt.bits_per_sample / 8) as usize;
    let block = fmt.block_align as usize;
    if block != bytes_per_sample * fmt.channels as usize {
        return Err(Error::Format(format!(
            "wav: block align {block} inconsistent with {} channels of {} bits",
            fmt.channels, fmt.bits_per_sample
        )));
    }
    if data.len() % block != 0 {
        return Err(Error::Format(format!(
            "wav: data chunk of {} bytes is not a whole number of {block}-byte frames",
            data.len()
        )));
    }

    let offset = channel as usize * bytes_per_sample;
    let samples = data
        .chunks_exact(block)
        .map(|frame| decode_sample(&frame[offset..offset + bytes_per_sample], &fmt))
        .collect();
    SampledSignal::new(samples, fmt.sample_rate)
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::Format(format!(
            "wav: fmt chunk too short ({} bytes)",
            body.len()
        )));
    }
    let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
    let mut tag = u16_at(0);
    let channels = u16_at(2);
    let sample_rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
    let block_align = u16_at(12);
    let bits_per_sample = u16_at(14);

    if tag == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) subformat GUID(16)
        if body.len() < 40 {
            return Err(Error::Format("wav: extensible fmt chunk too short".into()));
        }
        tag = u16_at(24);
    }

    let encoding = match (tag, bits_per_sample) {
        (FORMAT_PCM, 16 | 24 | 32) => Encoding::Int,
        (FORMAT_IEEE_FLOAT, 32) => Encoding::Float,
        (FORMAT_PCM, b) => return Err(Error::UnsupportedCodec(format!("{b}-bit integer PCM"))),
        (FORMAT_IEEE_FLOAT, b) => return Err(Error::UnsupportedCodec(format!("{b}-bit float"))),
        (t, _) => return Err(Error::UnsupportedCodec(format!("format tag {t:#06x}"))),
    };
    if channels == 0 {
        return Err(Error::Format("wav: zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(Error::Format("wav: zero sample rate".into()));
    }
    Ok(FmtChunk {
        encoding,
        channels,
        sample_rate,
        block_align,
        bits_per_sample,
    })
}

fn decode_sample(b: &[u8], fmt: &FmtChunk) -> f64 {
    match (fmt.encoding, fmt.bits_per_sample) {
        (Encoding::Float, _) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (Encoding::Int, 16) => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (Encoding::Int, 24) => {
            // sign-extend through the top byte of an i32
            let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        (Encoding::Int, _) => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut v = Vec::new();
        v.extend_from_slice(b"RIFF");
        v.extend_from_slice(&((4 + 8 + 16 + 8 + 10 + 8 + data.len()) as u32).to_le_bytes());
        v.extend_from_slice(b"WAVE");
        v.extend_from_slice(b"fmt ");
        v.extend_from_slice(&16u32.to_le_bytes());
        v.extend_from_slice(&tag.to_le_bytes());
        v.extend_from_slice(&channels.to_le_bytes());
        v.extend_from_slice(&rate.to_le_bytes());
        v.extend_from_slice(&(rate * block as u32).to_le_bytes());
        v.extend_from_slice(&block.to_le_bytes());
        v.extend_from_slice(&bits.to_le_bytes());
        // an odd-sized unknown chunk that must be skipped with its pad byte
        v.extend_from_slice(b"LIST");
        v.extend_from_slice(&9u32.to_le_bytes());
        v.extend_from_slice(&[7u8; 10]);
        v.extend_from_slice(b"data");
        v.extend_from_slice(&(data.len() as u32).to_le_bytes());
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn full_scale_16_bit() {
        let w = header(FORMAT_PCM, 1, 16000, 16, &32767i16.to_le_bytes());
        let s = decode_wav(&w, None).unwrap();
        assert_eq!(s.samples(), &[32767.0 / 32768.0]);
        assert_eq!(s.sample_rate_hz(), 16000);
    }

    #[test]
    fn zeros_16_bit() {
        let w = header(FORMAT_PCM, 1, 16000, 16, &vec![0u8; 96000]);
        let s = decode_wav(&w, None).unwrap();
        assert_eq!(s.len(), 48000);
        assert!(s.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn twenty_four_bit_sign_extension() {
        let data = [0xff, 0xff, 0xff, 0x00, 0x00, 0x80, 0xff, 0xff, 0x7f];
        let s = decode_wav(&header(FORMAT_PCM, 1, 8000, 24, &data), None).unwrap();
        assert_eq!(
            s.samples(),
            &[-1.0 / 8_388_608.0, -1.0, 8_388_607.0 / 8_388_608.0]
        );
    }

    #[test]
    fn float_samples_pass_through() {
        let mut data = Vec::new();
        for v in [0.25f32, -0.5] {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let s = decode_wav(&header(FORMAT_IEEE_FLOAT, 1, 22050, 32, &data), None).unwrap();
        assert_eq!(s.samples(), &[0.25, -0.5]);
    }

    #[test]
    fn stereo_needs_channel_selection() {
        let mut data = Vec::new();
        for v in [100i16, -200, 300, -400] {
            data.extend_from_slice(&v.to_le_bytes());
        }
        let w = header(FORMAT_PCM, 2, 16000, 16, &data);
        assert!(matches!(
            decode_wav(&w, None),
            Err(Error::AmbiguousChannels { channels: 2 })
        ));
        let right = decode_wav(&w, Some(1)).unwrap();
        assert_eq!(right.samples(), &[-200.0 / 32768.0, -400.0 / 32768.0]);
        assert!(decode_wav(&w, Some(2)).is_err());
    }

    #[test]
    fn malformed_and_unsupported() {
        assert!(matches!(
            decode_wav(b"RIFX0000WAVE", None),
            Err(Error::Format(_))
        ));
        let w = header(FORMAT_PCM, 1, 8000, 8, &[0, 1]);
        assert!(matches!(
            decode_wav(&w, None),
            Err(Error::UnsupportedCodec(_))
        ));
        let w = header(0x0055, 1, 8000, 16, &[0, 1]);
        assert!(matches!(
            decode_wav(&w, None),
            Err(Error::UnsupportedCodec(_))
        ));
        let mut w = header(FORMAT_PCM, 1, 8000, 16, &[0, 1, 2, 3]);
        w.truncate(w.len() - 2);
        assert!(matches!(decode_wav(&w, None), Err(Error::Format(_))));
        let w = header(FORMAT_PCM, 1, 8000, 16, &[0, 1, 2]);
        assert!(matches!(decode_wav(&w, None), Err(Error::Format(_))));
    }
}
