//! Reading and writing the numpy `.npy` format, version 1.0.
//!
//! Only little-endian `float32` (`'<f4'`) and `float64` (`'<f8'`) payloads are
//! supported. Fortran-ordered files are accepted and transposed to row-major
//! on load. Written files pad the header so the payload starts on a 64-byte
//! boundary.

use std::path::Path;

use ndarray::{Array2, Array3};

use super::{atomic_write, TensorIoError};

/// The npy magic string.
pub const NPY_MAGIC: [u8; 6] = *b"\x93NUMPY";

const PREAMBLE_LEN: usize = 10;
const ALIGNMENT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }

    pub fn item_size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_descr(descr: &str) -> Result<Self, TensorIoError> {
        match descr {
            "<f4" => Ok(Dtype::F32),
            "<f8" => Ok(Dtype::F64),
            other => Err(TensorIoError::UnsupportedDtype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn first_non_finite(&self) -> Option<usize> {
        match self {
            ArrayData::F32(v) => v.iter().position(|x| !x.is_finite()),
            ArrayData::F64(v) => v.iter().position(|x| !x.is_finite()),
        }
    }
}

/// A row-major array of 32- or 64-bit floats with an arbitrary shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: ArrayData,
    transposed_on_load: bool,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self, TensorIoError> {
        let expected = element_count(&shape).ok_or_else(|| {
            TensorIoError::HeaderParse(format!("shape {shape:?} overflows usize"))
        })?;
        if expected != data.len() {
            return Err(TensorIoError::ShapeDataMismatch {
                shape,
                expected,
                found: data.len(),
            });
        }
        Ok(DenseArray {
            shape,
            data,
            transposed_on_load: false,
        })
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorIoError> {
        Self::new(shape, ArrayData::F64(data))
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorIoError> {
        Self::new(shape, ArrayData::F32(data))
    }

    /// Stores a matrix with the requested element type.
    pub fn from_matrix(m: &Array2<f64>, dtype: Dtype) -> Self {
        let shape = vec![m.nrows(), m.ncols()];
        let data = match dtype {
            Dtype::F64 => ArrayData::F64(m.iter().copied().collect()),
            Dtype::F32 => ArrayData::F32(m.iter().map(|&x| x as f32).collect()),
        };
        DenseArray {
            shape,
            data,
            transposed_on_load: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
        }
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when the file was Fortran-ordered and the data was transposed.
    pub fn transposed_on_load(&self) -> bool {
        self.transposed_on_load
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::F64(v) => v.clone(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>, TensorIoError> {
        match self.shape[..] {
            [rows, cols] => Ok(Array2::from_shape_vec((rows, cols), self.to_f64_vec())
                .expect("shape checked at construction")),
            _ => Err(TensorIoError::HeaderParse(format!(
                "expected a 2-d array, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn to_array3(&self) -> Result<Array3<f64>, TensorIoError> {
        match self.shape[..] {
            [a, b, c] => Ok(Array3::from_shape_vec((a, b, c), self.to_f64_vec())
                .expect("shape checked at construction")),
            _ => Err(TensorIoError::HeaderParse(format!(
                "expected a 3-d array, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Little-endian payload bytes exactly as they appear in a file.
    pub fn payload_bytes(&self) -> Vec<u8> {
        match &self.data {
            ArrayData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub allow_non_finite: bool,
}

pub fn load_array(path: &Path) -> Result<DenseArray, TensorIoError> {
    load_array_with(path, LoadOptions::default())
}

pub fn load_array_with(path: &Path, opts: LoadOptions) -> Result<DenseArray, TensorIoError> {
    let bytes = std::fs::read(path).map_err(|e| TensorIoError::io(path, e))?;
    decode_npy(&bytes, opts)
}

pub fn save_array(arr: &DenseArray, path: &Path) -> Result<(), TensorIoError> {
    atomic_write(path, &encode_npy(arr))
}

pub fn encode_npy(arr: &DenseArray) -> Vec<u8> {
    let shape = match arr.shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", arr.shape[0]),
        _ => {
            let dims: Vec<String> = arr.shape.iter().map(|d| d.to_string()).collect();
            format!("({})", dims.join(", "))
        }
    };
    let mut header = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        arr.dtype().descr(),
        shape
    );
    // pad with spaces; the trailing newline is part of the header
    let unpadded = PREAMBLE_LEN + header.len() + 1;
    let padding = (ALIGNMENT - unpadded % ALIGNMENT) % ALIGNMENT;
    header.extend(std::iter::repeat(' ').take(padding));
    header.push('\n');

    let header_len = u16::try_from(header.len()).expect("npy v1.0 header exceeds 65535 bytes");
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + arr.len() * 8);
    out.extend_from_slice(&NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&arr.payload_bytes());
    out
}

pub fn decode_npy(bytes: &[u8], opts: LoadOptions) -> Result<DenseArray, TensorIoError> {
    if bytes.len() < NPY_MAGIC.len() || bytes[..NPY_MAGIC.len()] != NPY_MAGIC {
        return Err(TensorIoError::MagicMismatch);
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(TensorIoError::HeaderParse("file ends inside the preamble".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(TensorIoError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header_end = PREAMBLE_LEN + header_len;
    if bytes.len() < header_end {
        return Err(TensorIoError::HeaderParse(format!(
            "header length {header_len} runs past end of file"
        )));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..header_end])
        .map_err(|_| TensorIoError::HeaderParse("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header)?;
    let dtype = Dtype::from_descr(&dict.descr)?;

    let count = element_count(&dict.shape)
        .ok_or_else(|| TensorIoError::HeaderParse("shape overflows usize".into()))?;
    let expected = count
        .checked_mul(dtype.item_size())
        .ok_or_else(|| TensorIoError::HeaderParse("payload size overflows usize".into()))?;
    let payload = &bytes[header_end..];
    if payload.len() < expected {
        return Err(TensorIoError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(TensorIoError::TrailingData {
            expected,
            found: payload.len(),
        });
    }

    let mut data = match dtype {
        Dtype::F32 => ArrayData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => ArrayData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    if !opts.allow_non_finite {
        if let Some(index) = data.first_non_finite() {
            return Err(TensorIoError::NonFinite { index });
        }
    }
    let transposed = dict.fortran_order && dict.shape.len() > 1;
    if transposed {
        data = match data {
            ArrayData::F32(v) => ArrayData::F32(fortran_to_c(&v, &dict.shape)),
            ArrayData::F64(v) => ArrayData::F64(fortran_to_c(&v, &dict.shape)),
        };
    }
    Ok(DenseArray {
        shape: dict.shape,
        data,
        transposed_on_load: transposed,
    })
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

fn fortran_to_c<T: Copy>(src: &[T], shape: &[usize]) -> Vec<T> {
    let ndim = shape.len();
    let mut f_strides = vec![1usize; ndim];
    for a in 1..ndim {
        f_strides[a] = f_strides[a - 1] * shape[a - 1];
    }
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; ndim];
    for _ in 0..src.len() {
        let off: usize = idx.iter().zip(&f_strides).map(|(i, s)| i * s).sum();
        out.push(src[off]);
        // row-major increment
        for a in (0..ndim).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

#[derive(Debug)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    fn parse(text: &str) -> Result<Self, TensorIoError> {
        let mut p = Parser {
            s: text.as_bytes(),
            pos: 0,
        };
        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;

        p.expect(b'{')?;
        loop {
            p.skip_ws();
            if p.eat(b'}') {
                break;
            }
            let key = p.string()?;
            p.expect(b':')?;
            let slot_taken = match key.as_str() {
                "descr" => descr.replace(p.string()?).is_some(),
                "fortran_order" => fortran_order.replace(p.boolean()?).is_some(),
                "shape" => shape.replace(p.tuple()?).is_some(),
                other => return Err(p.err(&format!("unknown key {other:?}"))),
            };
            if slot_taken {
                return Err(p.err(&format!("duplicate key {key:?}")));
            }
            p.skip_ws();
            if !p.eat(b',') {
                p.expect(b'}')?;
                break;
            }
        }
        p.skip_ws();
        if p.pos != p.s.len() {
            return Err(p.err("trailing characters after header dict"));
        }
        Ok(HeaderDict {
            descr: descr.ok_or_else(|| p.err("missing key 'descr'"))?,
            fortran_order: fortran_order.ok_or_else(|| p.err("missing key 'fortran_order'"))?,
            shape: shape.ok_or_else(|| p.err("missing key 'shape'"))?,
        })
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> TensorIoError {
        TensorIoError::HeaderParse(format!("{msg} (at byte {})", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), TensorIoError> {
        self.skip_ws();
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected {:?}", c as char)))
        }
    }

    fn string(&mut self) -> Result<String, TensorIoError> {
        self.skip_ws();
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected a quoted string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(self.err("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn boolean(&mut self) -> Result<bool, TensorIoError> {
        self.skip_ws();
        let rest = &self.s[self.pos..];
        if rest.starts_with(b"True") {
            self.pos += 4;
            Ok(true)
        } else if rest.starts_with(b"False") {
            self.pos += 5;
            Ok(false)
        } else {
            Err(self.err("expected True or False"))
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>, TensorIoError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            if self.eat(b')') {
                return Ok(dims);
            }
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected a dimension"));
            }
            let digits = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
            let dim = digits
                .parse::<usize>()
                .map_err(|_| self.err("dimension out of range"))?;
            dims.push(dim);
            self.skip_ws();
            if !self.eat(b',') {
                self.expect(b')')?;
                return Ok(dims);
            }
        }
    }
}
