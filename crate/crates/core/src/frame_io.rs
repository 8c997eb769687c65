//! Text frame files.
//!
//! ```text
//! # N=128 format=Q1.11 order=natural
//! 2047 0
//! -12 5
//! ...
//! ```
//!
//! `format=float` frames carry decimal floats instead of raw integers. A file
//! may hold several frames, each introduced by its own header line.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::flowgraph::{FixedFrame, FloatFrame, Frame, Order};
use crate::fxnum::{CFx, FixedFormat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct FrameIoError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameData {
    Fixed(FixedFrame),
    Float(FloatFrame),
}

impl FrameData {
    pub fn len(&self) -> usize {
        match self {
            Self::Fixed(f) => f.len(),
            Self::Float(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn order(&self) -> Order {
        match self {
            Self::Fixed(f) => f.order,
            Self::Float(f) => f.order,
        }
    }
}

enum Kind {
    Fixed(FixedFormat),
    Float,
}

struct Header {
    n: usize,
    kind: Kind,
    order: Order,
}

fn err(line: usize, message: impl Into<String>) -> FrameIoError {
    FrameIoError {
        line,
        message: message.into(),
    }
}

fn parse_header(line: usize, text: &str) -> Result<Header, FrameIoError> {
    let (mut n, mut kind, mut order) = (None, None, Order::Natural);
    for field in text.trim_start_matches('#').split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(line, format!("header field `{field}` is not key=value")))?;
        match key {
            "N" => {
                n = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| err(line, format!("bad N `{value}`")))?,
                )
            }
            "format" if value == "float" => kind = Some(Kind::Float),
            "format" => {
                let f: FixedFormat = value.parse().map_err(|e| err(line, format!("{e}")))?;
                kind = Some(Kind::Fixed(f));
            }
            "order" => order = value.parse().map_err(|e: String| err(line, e))?,
            _ => return Err(err(line, format!("unknown header field `{key}`"))),
        }
    }
    Ok(Header {
        n: n.ok_or_else(|| err(line, "header lacks N="))?,
        kind: kind.ok_or_else(|| err(line, "header lacks format="))?,
        order,
    })
}

/// Parse every frame in `text`. Fixed samples keep the header's format with
/// default rounding and overflow.
pub fn parse_frames(text: &str) -> Result<Vec<FrameData>, FrameIoError> {
    let mut frames = Vec::new();
    let mut current: Option<(Header, usize, Vec<CFx>, Vec<Complex64>)> = None;
    let finish = |c: Option<(Header, usize, Vec<CFx>, Vec<Complex64>)>,
                  line: usize|
     -> Result<Option<FrameData>, FrameIoError> {
        let Some((h, start, fixed, float)) = c else {
            return Ok(None);
        };
        let got = fixed.len() + float.len();
        if got != h.n {
            return Err(err(
                line,
                format!("frame starting at line {start} has {got} samples, header says {}", h.n),
            ));
        }
        Ok(Some(match h.kind {
            Kind::Fixed(_) => FrameData::Fixed(Frame {
                samples: fixed,
                order: h.order,
            }),
            Kind::Float => FrameData::Float(Frame {
                samples: float,
                order: h.order,
            }),
        }))
    };
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if t.starts_with('#') {
            if let Some(f) = finish(current.take(), line)? {
                frames.push(f);
            }
            current = Some((parse_header(line, t)?, line, Vec::new(), Vec::new()));
            continue;
        }
        let (h, _, fixed, float) = current.as_mut().ok_or_else(|| err(line, "sample before header"))?;
        let mut parts = t.split_whitespace();
        let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(line, "expected two values `re im`"));
        };
        match h.kind {
            Kind::Fixed(fmt) => {
                let p = |s: &str| {
                    s.parse::<i64>()
                        .map_err(|_| err(line, format!("`{s}` is not an integer")))
                };
                let (re, im) = (p(re)?, p(im)?);
                if !fmt.contains_raw(re) || !fmt.contains_raw(im) {
                    return Err(err(line, format!("({re}, {im}) out of range for {fmt}")));
                }
                fixed.push(CFx::from_raw(re, im, fmt));
            }
            Kind::Float => {
                let p = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| err(line, format!("`{s}` is not a number")))
                };
                float.push(Complex64::new(p(re)?, p(im)?));
            }
        }
    }
    if let Some(f) = finish(current.take(), last)? {
        frames.push(f);
    }
    Ok(frames)
}

pub fn write_fixed(out: &mut String, frame: &FixedFrame) {
    let fmt = frame
        .samples
        .first()
        .map(|s| s.format())
        .unwrap_or_else(FixedFormat::q1_11);
    let _ = writeln!(out, "# N={} format={} order={}", frame.len(), fmt, frame.order.as_str());
    for s in &frame.samples {
        let (re, im) = s.raw();
        let _ = writeln!(out, "{re} {im}");
    }
}

pub fn write_float(out: &mut String, frame: &FloatFrame) {
    let _ = writeln!(out, "# N={} format=float order={}", frame.len(), frame.order.as_str());
    for s in &frame.samples {
        let _ = writeln!(out, "{:e} {:e}", s.re, s.im);
    }
}

pub fn write_frames(frames: &[FrameData]) -> String {
    let mut out = String::new();
    for f in frames {
        match f {
            FrameData::Fixed(f) => write_fixed(&mut out, f),
            FrameData::Float(f) => write_float(&mut out, f),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = FixedFormat::q1_11();
        let fixed = Frame::natural((0..4).map(|i| CFx::from_raw(i - 2, 2047 - i, f)).collect());
        let float = Frame {
            samples: vec![Complex64::new(0.1, -3.5e-7), Complex64::new(1.0, 0.0)],
            order: Order::BitReversed,
        };
        let data = vec![FrameData::Fixed(fixed), FrameData::Float(float)];
        let text = write_frames(&data);
        assert!(text.starts_with("# N=4 format=Q1.11 order=natural\n-2 2047\n"));
        assert_eq!(parse_frames(&text).unwrap(), data);
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let cases = [
            ("1 2\n", 1),
            ("# N=2 format=Q1.11\n1 2\n3\n", 3),
            ("# N=2 format=Q1.11\n1 2\n3 x\n", 3),
            ("# N=2 format=Q1.11\n1 2\n5000 0\n", 3),
            ("# N=3 format=Q1.11\n1 2\n0 0\n", 3),
            ("# N=3 format=Q9\n", 1),
            ("# N=1 format=float order=sideways\n", 1),
        ];
        for (text, line) in cases {
            assert_eq!(parse_frames(text).unwrap_err().line, line, "{text:?}");
        }
    }
}
