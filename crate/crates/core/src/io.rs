//! File formats: a raw f64 tensor container, binary netpbm images and
//! model checkpoints.
//!
//! Tensor files are `DTT1\n<H> <W> <C> f64\n` followed by `8·H·W·C` bytes of
//! little-endian IEEE-754 doubles in row-major, channel-innermost order.
//! Checkpoints are an ASCII index (`DTCK v1`, then one `<name> <bytes>` line
//! per section, then `end`) followed by the sections as tensor files in index
//! order. Netpbm 16-bit samples are big-endian, as that format requires.

use std::fs;
use std::path::Path;

use crate::edge_model::{Conv3x3, EdgeModel};
use crate::error::{DtError, Result};
use crate::types::{EdgeMap, LabelMap, ScoreMap};

const TENSOR_MAGIC: &[u8] = b"DTT1\n";
const CHECKPOINT_MAGIC: &str = "DTCK";
const CHECKPOINT_VERSION: &str = "v1";

/// Section names of a checkpoint, in the order they are written.
pub const CHECKPOINT_SECTIONS: [&str; 6] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "head.weight",
    "head.bias",
];

fn fmt_err(offset: usize, message: impl Into<String>) -> DtError {
    DtError::format(offset, message)
}

fn checked_len(dims: &[usize], unit: usize, offset: usize) -> Result<usize> {
    dims.iter()
        .try_fold(unit, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fmt_err(offset, "dimensions overflow"))
}

/// Position of the first newline at or after `from`.
fn line_end(bytes: &[u8], from: usize) -> Result<usize> {
    bytes[from..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| from + p)
        .ok_or_else(|| fmt_err(bytes.len(), "unterminated header line"))
}

fn ascii_line(bytes: &[u8], from: usize) -> Result<(&str, usize)> {
    let end = line_end(bytes, from)?;
    let text = std::str::from_utf8(&bytes[from..end]).map_err(|_| fmt_err(from, "header is not ASCII"))?;
    Ok((text, end + 1))
}

// ---------------------------------------------------------------- tensors

pub fn encode_tensor(map: &ScoreMap) -> Vec<u8> {
    let (h, w, c) = map.shape();
    let header = format!("{h} {w} {c} f64\n");
    let mut out = Vec::with_capacity(TENSOR_MAGIC.len() + header.len() + 8 * map.data().len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(header.as_bytes());
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one tensor starting at `base`; returns the map and the offset just
/// past its payload.
fn decode_tensor_at(bytes: &[u8], base: usize) -> Result<(ScoreMap, usize)> {
    if bytes.len() <= base {
        return Err(fmt_err(base, "empty tensor"));
    }
    let rest = &bytes[base..];
    if rest.len() < TENSOR_MAGIC.len() || &rest[..TENSOR_MAGIC.len()] != TENSOR_MAGIC {
        return Err(fmt_err(base, "bad tensor magic, expected DTT1"));
    }
    let header_at = base + TENSOR_MAGIC.len();
    let (line, payload_at) = ascii_line(bytes, header_at)?;
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() != 4 {
        return Err(fmt_err(header_at, format!("expected '<H> <W> <C> f64', found '{line}'")));
    }
    if fields[3] != "f64" {
        return Err(fmt_err(header_at, format!("unsupported element type '{}'", fields[3])));
    }
    let mut dims = [0usize; 3];
    for (d, f) in dims.iter_mut().zip(&fields[..3]) {
        *d = f
            .parse()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| fmt_err(header_at, format!("bad dimension '{f}'")))?;
    }
    let len = checked_len(&dims, 8, header_at)?;
    let end = payload_at
        .checked_add(len)
        .ok_or_else(|| fmt_err(header_at, "dimensions overflow"))?;
    if bytes.len() < end {
        return Err(fmt_err(
            bytes.len(),
            format!("payload truncated: need {len} bytes, found {}", bytes.len() - payload_at),
        ));
    }
    let data: Vec<f64> = bytes[payload_at..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(fmt_err(payload_at + 8 * k, "non-finite value"));
    }
    let map = ScoreMap::from_vec(dims[0], dims[1], dims[2], data).map_err(|e| fmt_err(payload_at, e.to_string()))?;
    Ok((map, end))
}

pub fn decode_tensor(bytes: &[u8]) -> Result<ScoreMap> {
    let (map, end) = decode_tensor_at(bytes, 0)?;
    if end != bytes.len() {
        return Err(fmt_err(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    Ok(map)
}

pub fn write_tensor(path: impl AsRef<Path>, map: &ScoreMap) -> Result<()> {
    Ok(fs::write(path, encode_tensor(map))?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<ScoreMap> {
    decode_tensor(&fs::read(path)?)
}

/// Edge maps travel as single-channel tensors.
pub fn read_edge_tensor(path: impl AsRef<Path>) -> Result<EdgeMap> {
    let map = read_tensor(path)?;
    if map.channels() != 1 {
        return Err(DtError::shape("1-channel edge tensor", format!("{map}")));
    }
    EdgeMap::from_vec(map.height(), map.width(), map.into_vec())
}

pub fn write_edge_tensor(path: impl AsRef<Path>, edges: &EdgeMap) -> Result<()> {
    write_tensor(path, &ScoreMap::from_vec(edges.height(), edges.width(), 1, edges.data().to_vec())?)
}

// ---------------------------------------------------------------- netpbm

struct PnmHeader {
    width: usize,
    height: usize,
    maxval: usize,
    payload_at: usize,
}

/// Parses `<magic> <width> <height> <maxval>` with `#` comments, followed by
/// exactly one whitespace byte.
fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<PnmHeader> {
    if bytes.is_empty() {
        return Err(fmt_err(0, "empty file"));
    }
    if bytes.len() < 2 || &bytes[..2] != magic {
        let expected = String::from_utf8_lossy(magic);
        return Err(fmt_err(0, format!("bad magic, only binary {expected} is supported")));
    }
    let mut pos = 2;
    let mut values = [0usize; 3];
    for v in values.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err(start, "expected a decimal header field"));
        }
        *v = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| fmt_err(start, "header field out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(fmt_err(pos, "expected whitespace after maxval")),
    }
    let [width, height, maxval] = values;
    if width == 0 || height == 0 {
        return Err(fmt_err(2, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(fmt_err(2, format!("maxval {maxval} outside 1..=65535")));
    }
    Ok(PnmHeader {
        width,
        height,
        maxval,
        payload_at: pos,
    })
}

/// Reads `count` samples after the header, 1 or 2 bytes each depending on maxval.
fn read_samples(bytes: &[u8], hdr: &PnmHeader, count: usize) -> Result<Vec<usize>> {
    let wide = hdr.maxval > 255;
    let need = checked_len(&[count], if wide { 2 } else { 1 }, hdr.payload_at)?;
    let end = hdr.payload_at + need;
    if bytes.len() < end {
        return Err(fmt_err(bytes.len(), format!("payload truncated: need {need} bytes")));
    }
    if bytes.len() > end {
        return Err(fmt_err(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    let payload = &bytes[hdr.payload_at..end];
    let samples: Vec<usize> = if wide {
        payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as usize).collect()
    } else {
        payload.iter().map(|&b| b as usize).collect()
    };
    if let Some(k) = samples.iter().position(|&s| s > hdr.maxval) {
        return Err(fmt_err(
            hdr.payload_at + if wide { 2 * k } else { k },
            format!("sample exceeds maxval {}", hdr.maxval),
        ));
    }
    Ok(samples)
}

fn encode_pnm(magic: &str, width: usize, height: usize, maxval: usize, samples: &[usize]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for &s in samples {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&s| s as u8));
    }
    out
}

/// Rounds half away from zero after clamping to `[0, maxval]`.
fn quantize(v: f64, maxval: usize) -> usize {
    (v * maxval as f64).clamp(0.0, maxval as f64).round() as usize
}

pub fn encode_ppm(image: &ScoreMap) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return Err(DtError::shape("3-channel image", format!("{image}")));
    }
    let samples: Vec<usize> = image.data().iter().map(|&v| quantize(v, 255)).collect();
    Ok(encode_pnm("P6", image.width(), image.height(), 255, &samples))
}

/// P6 with maxval up to 255; values come back as `v / maxval`.
pub fn decode_ppm(bytes: &[u8]) -> Result<ScoreMap> {
    let hdr = parse_pnm_header(bytes, b"P6")?;
    if hdr.maxval > 255 {
        return Err(fmt_err(2, format!("maxval {} above 255", hdr.maxval)));
    }
    let count = checked_len(&[hdr.width, hdr.height], 3, hdr.payload_at)?;
    let samples = read_samples(bytes, &hdr, count)?;
    let scale = hdr.maxval as f64;
    let data = samples.iter().map(|&s| s as f64 / scale).collect();
    ScoreMap::from_vec(hdr.height, hdr.width, 3, data)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &ScoreMap) -> Result<()> {
    Ok(fs::write(path, encode_ppm(image)?)?)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<ScoreMap> {
    decode_ppm(&fs::read(path)?)
}

/// Edge maps as 8-bit P5: values in `[0, 1]` map onto `0..=255`.
pub fn encode_edge_pgm(edges: &EdgeMap) -> Vec<u8> {
    let samples: Vec<usize> = edges.data().iter().map(|&v| quantize(v, 255)).collect();
    encode_pnm("P5", edges.width(), edges.height(), 255, &samples)
}

pub fn decode_edge_pgm(bytes: &[u8]) -> Result<EdgeMap> {
    let hdr = parse_pnm_header(bytes, b"P5")?;
    let samples = read_samples(bytes, &hdr, checked_len(&[hdr.width, hdr.height], 1, hdr.payload_at)?)?;
    let scale = hdr.maxval as f64;
    EdgeMap::from_vec(hdr.height, hdr.width, samples.iter().map(|&s| s as f64 / scale).collect())
}

/// Label maps as P5 holding raw class ids; 16-bit when an id exceeds 255.
pub fn encode_label_pgm(labels: &LabelMap) -> Result<Vec<u8>> {
    let top = labels.data().iter().copied().max().unwrap_or(0);
    if top > 65535 {
        return Err(DtError::InvalidParameter(format!("label {top} does not fit in 16 bits")));
    }
    let maxval = if top > 255 { 65535 } else { 255 };
    Ok(encode_pnm("P5", labels.width(), labels.height(), maxval, labels.data()))
}

pub fn decode_label_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let hdr = parse_pnm_header(bytes, b"P5")?;
    let samples = read_samples(bytes, &hdr, checked_len(&[hdr.width, hdr.height], 1, hdr.payload_at)?)?;
    LabelMap::from_vec(hdr.height, hdr.width, samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmMode {
    Edges,
    Labels,
}

pub enum PgmData {
    Edges(EdgeMap),
    Labels(LabelMap),
}

pub fn read_pgm(path: impl AsRef<Path>, mode: PgmMode) -> Result<PgmData> {
    let bytes = fs::read(path)?;
    Ok(match mode {
        PgmMode::Edges => PgmData::Edges(decode_edge_pgm(&bytes)?),
        PgmMode::Labels => PgmData::Labels(decode_label_pgm(&bytes)?),
    })
}

pub fn write_pgm(path: impl AsRef<Path>, data: &PgmData) -> Result<()> {
    let bytes = match data {
        PgmData::Edges(e) => encode_edge_pgm(e),
        PgmData::Labels(l) => encode_label_pgm(l)?,
    };
    Ok(fs::write(path, bytes)?)
}

pub fn read_label_pgm(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_label_pgm(&fs::read(path)?)
}

pub fn write_label_pgm(path: impl AsRef<Path>, labels: &LabelMap) -> Result<()> {
    Ok(fs::write(path, encode_label_pgm(labels)?)?)
}

// ---------------------------------------------------------------- checkpoints

fn tensor(h: usize, w: usize, c: usize, data: &[f64]) -> ScoreMap {
    ScoreMap::from_vec(h, w, c, data.to_vec()).expect("model parameters are finite and nonempty")
}

fn model_sections(model: &EdgeModel) -> [ScoreMap; 6] {
    let (c1, c2) = (&model.conv1, &model.conv2);
    [
        tensor(c1.out_channels, c1.in_channels, 9, &c1.weight),
        tensor(1, c1.out_channels, 1, &c1.bias),
        tensor(c2.out_channels, c2.in_channels, 9, &c2.weight),
        tensor(1, c2.out_channels, 1, &c2.bias),
        tensor(1, model.head_weights.len(), 1, &model.head_weights),
        tensor(1, 1, 1, &[model.head_bias]),
    ]
}

pub fn encode_checkpoint(model: &EdgeModel) -> Vec<u8> {
    let bodies: Vec<Vec<u8>> = model_sections(model).iter().map(encode_tensor).collect();
    let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n").into_bytes();
    for (name, body) in CHECKPOINT_SECTIONS.iter().zip(&bodies) {
        out.extend_from_slice(format!("{name} {}\n", body.len()).as_bytes());
    }
    out.extend_from_slice(b"end\n");
    for body in bodies {
        out.extend_from_slice(&body);
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EdgeModel> {
    if bytes.is_empty() {
        return Err(fmt_err(0, "empty file"));
    }
    let (first, mut pos) = ascii_line(bytes, 0)?;
    match first.split_once(' ') {
        Some((CHECKPOINT_MAGIC, CHECKPOINT_VERSION)) => {}
        Some((CHECKPOINT_MAGIC, v)) => return Err(fmt_err(5, format!("unsupported checkpoint version '{v}'"))),
        _ => return Err(fmt_err(0, "bad checkpoint magic, expected DTCK")),
    }
    let mut index: Vec<(String, usize)> = Vec::new();
    loop {
        let at = pos;
        let (line, next) = ascii_line(bytes, pos)?;
        pos = next;
        if line == "end" {
            break;
        }
        let (name, len) = line
            .split_once(' ')
            .and_then(|(n, l)| Some((n, l.parse::<usize>().ok()?)))
            .ok_or_else(|| fmt_err(at, format!("bad index line '{line}'")))?;
        if !CHECKPOINT_SECTIONS.contains(&name) {
            return Err(fmt_err(at, format!("unknown section '{name}'")));
        }
        if index.iter().any(|(n, _)| n == name) {
            return Err(fmt_err(at, format!("duplicate section '{name}'")));
        }
        index.push((name.to_string(), len));
    }
    if let Some(missing) = CHECKPOINT_SECTIONS.iter().find(|s| !index.iter().any(|(n, _)| n == *s)) {
        return Err(fmt_err(pos, format!("index is missing section '{missing}'")));
    }
    let mut maps: Vec<(String, ScoreMap)> = Vec::with_capacity(index.len());
    for (name, len) in index {
        let (map, end) = decode_tensor_at(bytes, pos)?;
        if end - pos != len {
            return Err(fmt_err(pos, format!("section '{name}' spans {} bytes, index says {len}", end - pos)));
        }
        maps.push((name, map));
        pos = end;
    }
    if pos != bytes.len() {
        return Err(fmt_err(pos, format!("{} trailing bytes", bytes.len() - pos)));
    }
    let get = |name: &str| &maps.iter().find(|(n, _)| n == name).expect("presence checked").1;
    model_from_sections(
        [
            get("conv1.weight"),
            get("conv1.bias"),
            get("conv2.weight"),
            get("conv2.bias"),
            get("head.weight"),
            get("head.bias"),
        ],
        pos,
    )
}

fn model_from_sections(s: [&ScoreMap; 6], offset: usize) -> Result<EdgeModel> {
    let bad = |what: &str| fmt_err(offset, format!("inconsistent section shapes: {what}"));
    let conv = |w: &ScoreMap, b: &ScoreMap| -> Result<Conv3x3> {
        let (out, input, taps) = w.shape();
        if taps != 9 || b.shape() != (1, out, 1) {
            return Err(bad("convolution weight must be out×in×9 and bias 1×out×1"));
        }
        Ok(Conv3x3 {
            in_channels: input,
            out_channels: out,
            weight: w.data().to_vec(),
            bias: b.data().to_vec(),
        })
    };
    let conv1 = conv(s[0], s[1])?;
    let conv2 = conv(s[2], s[3])?;
    if conv1.in_channels != 3 || conv2.in_channels != conv1.out_channels {
        return Err(bad("convolution channels do not chain from a 3-channel image"));
    }
    if s[4].shape() != (1, conv1.out_channels + conv2.out_channels, 1) || s[5].shape() != (1, 1, 1) {
        return Err(bad("head must take every feature channel"));
    }
    Ok(EdgeModel {
        conv1,
        conv2,
        head_weights: s[4].data().to_vec(),
        head_bias: s[5].data()[0],
    })
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &EdgeModel) -> Result<()> {
    Ok(fs::write(path, encode_checkpoint(model))?)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<EdgeModel> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_model::init_edge_model;

    fn offset_of(e: DtError) -> usize {
        match e {
            DtError::Format { offset, .. } => offset,
            other => panic!("expected a format error, got {other}"),
        }
    }

    #[test]
    fn tensor_layout_is_little_endian() {
        let map = ScoreMap::from_vec(1, 2, 1, vec![1.0, -2.5]).unwrap();
        let bytes = encode_tensor(&map);
        let mut expected = b"DTT1\n1 2 1 f64\n".to_vec();
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
        expected.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x04, 0xc0]);
        assert_eq!(bytes, expected);
        assert_eq!(decode_tensor(&bytes).unwrap(), map);
    }

    #[test]
    fn tensor_rejections() {
        assert_eq!(offset_of(decode_tensor(b"").unwrap_err()), 0);
        let f32_header = b"DTT1\n2 2 1 f32\n";
        assert_eq!(offset_of(decode_tensor(f32_header).unwrap_err()), 5);
        assert!(decode_tensor(b"DTT2\n1 1 1 f64\n\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_tensor(b"DTT1\n1 1 0 f64\n").is_err());
        assert!(decode_tensor(b"DTT1\n1 x 1 f64\n").is_err());

        let good = encode_tensor(&ScoreMap::new(2, 2, 1, 0.5).unwrap());
        assert!(matches!(decode_tensor(&good[..good.len() - 1]), Err(DtError::Format { .. })));
        let mut extra = good.clone();
        extra.push(0);
        assert_eq!(offset_of(decode_tensor(&extra).unwrap_err()), good.len());

        let mut nan = b"DTT1\n1 1 1 f64\n".to_vec();
        nan.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_tensor(&nan).is_err());
        assert!(decode_tensor(b"DTT1\n99999999999 99999999999 99999999999 f64\n").is_err());
    }

    #[test]
    fn ppm_scaling() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 0, 255]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(encode_ppm(&img).unwrap(), bytes);
    }

    #[test]
    fn ppm_header_comments_and_rounding() {
        let mut bytes = b"P6 # comment\n1 1 # another\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.get(0, 0, 1), 20.0 / 255.0);

        // 0.5/255 sits exactly between 0 and 1 and rounds away from zero.
        let half = ScoreMap::from_vec(1, 1, 3, vec![0.5 / 255.0, -3.0, 7.0]).unwrap();
        let enc = encode_ppm(&half).unwrap();
        assert_eq!(&enc[enc.len() - 3..], &[1, 0, 255]);
    }

    #[test]
    fn ppm_rejections() {
        assert_eq!(offset_of(decode_ppm(b"P3\n1 1\n255\n0 0 0\n").unwrap_err()), 0);
        assert_eq!(offset_of(decode_ppm(b"").unwrap_err()), 0);
        assert!(decode_ppm(b"P6\n2 1\n255\n\x01\x02").is_err());
        assert_eq!(offset_of(decode_ppm(b"P6\n2 x\n255\n").unwrap_err()), 5);
        assert!(encode_ppm(&ScoreMap::zeros(1, 1, 2).unwrap()).is_err());
    }

    #[test]
    fn pgm_edges_and_labels() {
        let mut bytes = b"P5\n1 1\n255\n".to_vec();
        bytes.push(128);
        let e = decode_edge_pgm(&bytes).unwrap();
        assert!((e.get(0, 0) - 0.5019608).abs() < 1e-7);
        assert_eq!(e.get(0, 0), 128.0 / 255.0);

        let labels = LabelMap::from_vec(2, 3, vec![0, 1, 2, 3, 2, 1]).unwrap();
        assert_eq!(decode_label_pgm(&encode_label_pgm(&labels).unwrap()).unwrap(), labels);
        let wide = LabelMap::from_vec(1, 2, vec![300, 65535]).unwrap();
        let enc = encode_label_pgm(&wide).unwrap();
        assert!(enc.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&enc[enc.len() - 4..], &[0x01, 0x2c, 0xff, 0xff]);
        assert_eq!(decode_label_pgm(&enc).unwrap(), wide);

        assert!(decode_label_pgm(b"P5\n2 2\n255\n\x00\x01\x02").is_err());
        assert!(decode_label_pgm(b"P5\n1 1\n3\n\x04").is_err());
        assert!(decode_edge_pgm(b"P6\n1 1\n255\n\x00\x00\x00").is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = init_edge_model(7);
        let back = decode_checkpoint(&encode_checkpoint(&model)).unwrap();
        let bits = |m: &EdgeModel| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&model));
        assert_eq!(back, model);
    }

    #[test]
    fn checkpoint_rejections() {
        let bytes = encode_checkpoint(&init_edge_model(1));
        let text = |b: &[u8]| String::from_utf8_lossy(b).into_owned();

        let v0 = [b"DTCK v0".as_slice(), &bytes[7..]].concat();
        assert!(text(&v0).starts_with("DTCK v0\n"));
        assert!(matches!(decode_checkpoint(&v0), Err(DtError::Format { .. })));

        // Drop the head.bias index line.
        let start = text(&bytes).find("head.bias").unwrap();
        let end = start + text(&bytes[start..]).find('\n').unwrap() + 1;
        let missing = [&bytes[..start], &bytes[end..]].concat();
        let err = decode_checkpoint(&missing).unwrap_err();
        assert!(err.to_string().contains("head.bias"), "{err}");

        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_checkpoint(b"").is_err());
        assert!(decode_checkpoint(b"NOPE v1\nend\n").is_err());
    }
}
