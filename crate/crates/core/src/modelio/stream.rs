//! One-layer-at-a-time model loading.
//!
//! The scanner makes a single chunked pass over the file to locate the byte
//! span of every element of the top-level `"layers"` array, plus the spans of
//! each element's `"weights"` and `"bias"` values. The stream then seeks back
//! and decodes one layer per step, so the resident footprint is one layer's
//! serialized bytes plus its parsed parameters — never the whole model.

use super::LayerSpec;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub start: u64,
    pub end: u64,
    /// Serialized byte length of the weights and bias values combined.
    pub param_bytes: u64,
}

impl LayerSpan {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    None,
    /// A string literal just closed; if the next token is ':' it was a key.
    Str { depth: usize, kind: KeyKind },
    /// A key we care about was followed by ':'; the next value is its value.
    Value { depth: usize, kind: KeyKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KeyKind {
    Layers,
    Params,
    Other,
}

struct Scanner {
    depth: usize,
    in_string: bool,
    escape: bool,
    str_buf: String,
    pending: Pending,
    in_layers: bool,
    element_start: Option<u64>,
    param_start: Option<u64>,
    param_depth: usize,
    current_params: u64,
    spans: Vec<LayerSpan>,
}

impl Scanner {
    fn new() -> Self {
        Scanner {
            depth: 0,
            in_string: false,
            escape: false,
            str_buf: String::new(),
            pending: Pending::None,
            in_layers: false,
            element_start: None,
            param_start: None,
            param_depth: 0,
            current_params: 0,
            spans: Vec::new(),
        }
    }

    fn feed(&mut self, byte: u8, pos: u64) {
        if self.in_string {
            if self.escape {
                self.escape = false;
            } else if byte == b'\\' {
                self.escape = true;
            } else if byte == b'"' {
                self.in_string = false;
                let kind = match self.str_buf.as_str() {
                    "layers" => KeyKind::Layers,
                    "weights" | "bias" => KeyKind::Params,
                    _ => KeyKind::Other,
                };
                self.pending = Pending::Str { depth: self.depth, kind };
            } else if self.str_buf.len() < 32 {
                self.str_buf.push(byte as char);
            }
            return;
        }
        match byte {
            b'"' => {
                self.in_string = true;
                self.str_buf.clear();
                // a string can also be a value; consume any pending key state
                if !matches!(self.pending, Pending::Str { .. }) {
                    self.pending = Pending::None;
                }
            }
            b':' => {
                if let Pending::Str { depth, kind } = self.pending {
                    self.pending = Pending::Value { depth, kind };
                } else {
                    self.pending = Pending::None;
                }
            }
            b'{' => {
                if self.in_layers && self.depth == 2 && self.element_start.is_none() {
                    self.element_start = Some(pos);
                    self.current_params = 0;
                }
                self.depth += 1;
                self.pending = Pending::None;
            }
            b'}' => {
                self.depth = self.depth.saturating_sub(1);
                if self.in_layers && self.depth == 2 {
                    if let Some(start) = self.element_start.take() {
                        self.spans.push(LayerSpan {
                            start,
                            end: pos + 1,
                            param_bytes: self.current_params,
                        });
                    }
                }
                self.pending = Pending::None;
            }
            b'[' => {
                match self.pending {
                    Pending::Value { depth, kind: KeyKind::Layers } if depth == 1 => {
                        self.in_layers = true;
                    }
                    Pending::Value { kind: KeyKind::Params, .. } => {
                        if self.param_start.is_none() {
                            self.param_start = Some(pos);
                            self.param_depth = self.depth;
                        }
                    }
                    _ => {}
                }
                self.depth += 1;
                self.pending = Pending::None;
            }
            b']' => {
                self.depth = self.depth.saturating_sub(1);
                if let Some(start) = self.param_start {
                    if self.depth == self.param_depth {
                        self.current_params += pos + 1 - start;
                        self.param_start = None;
                    }
                }
                if self.in_layers && self.depth == 1 {
                    self.in_layers = false;
                }
                self.pending = Pending::None;
            }
            b' ' | b'\t' | b'\r' | b'\n' | b',' => {}
            _ => {
                // scalar value start consumes a pending key
                if matches!(self.pending, Pending::Value { .. }) {
                    self.pending = Pending::None;
                }
            }
        }
    }
}

/// Locate every layer object in the file in one chunked pass.
pub fn scan_layer_spans(path: impl AsRef<Path>) -> Result<Vec<LayerSpan>> {
    let mut file = File::open(path)?;
    let mut scanner = Scanner::new();
    let mut buf = [0u8; 8192];
    let mut pos = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        for &b in &buf[..n] {
            scanner.feed(b, pos);
            pos += 1;
        }
    }
    Ok(scanner.spans)
}

/// Cursor over a model file yielding `(LayerSpec, param_byte_count)` in file
/// order with at most one layer's parameters materialized.
pub struct LayerStream {
    file: File,
    spans: Vec<LayerSpan>,
    next: usize,
    yielded: usize,
    resident_trace: Vec<u64>,
}

impl LayerStream {
    /// Serialized bytes held while each yielded layer was decoded.
    pub fn resident_trace(&self) -> &[u64] {
        &self.resident_trace
    }

    /// High-water mark of the trace so far.
    pub fn peak_resident(&self) -> u64 {
        self.resident_trace.iter().copied().max().unwrap_or(0)
    }

    pub fn layer_count(&self) -> usize {
        self.spans.len()
    }

    fn read_next(&mut self) -> Result<Option<(LayerSpec, u64)>> {
        let Some(span) = self.spans.get(self.next).copied() else {
            return Ok(None);
        };
        let io_err = |e: std::io::Error, yielded: usize| Error::Stream {
            last_good: yielded,
            source: e,
        };
        self.file
            .seek(SeekFrom::Start(span.start))
            .map_err(|e| io_err(e, self.yielded))?;
        let mut raw = vec![0u8; span.len() as usize];
        self.file
            .read_exact(&mut raw)
            .map_err(|e| io_err(e, self.yielded))?;
        let layer: LayerSpec = serde_json::from_slice(&raw).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: format!("layer {}: {e}", self.next),
        })?;
        self.resident_trace.push(span.len());
        self.next += 1;
        self.yielded += 1;
        Ok(Some((layer, span.param_bytes)))
    }
}

impl Iterator for LayerStream {
    type Item = Result<(LayerSpec, u64)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_next().transpose()
    }
}

/// Open a model file for layer-by-layer consumption.
///
/// The file should already pass [`super::parse_model`]; the stream does not
/// re-run cross-layer validation.
pub fn stream_layers(path: impl AsRef<Path>) -> Result<LayerStream> {
    let spans = scan_layer_spans(&path)?;
    let file = File::open(path)?;
    Ok(LayerStream { file, spans, next: 0, yielded: 0, resident_trace: Vec::new() })
}
