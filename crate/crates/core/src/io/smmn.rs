//! The "SMMN" container used for subject feature files (kind 1) and model
//! checkpoints (kind 2). All numbers are little-endian; docs/formats.md has
//! the byte tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bytes::{read_file, write_file, ByteReader};
use crate::conv::FeatureMap;
use crate::error::{Error, Result};
use crate::mesh::{build_hierarchy, icosphere_vertex_count};
use crate::net::{InputStats, MmnModel, ModelConfig};

pub const SMMN_MAGIC: [u8; 4] = *b"SMMN";
pub const SMMN_VERSION: u16 = 1;
const KIND_SUBJECT: u8 = 1;
const KIND_MODEL: u8 = 2;

/// Contents of a subject feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    pub channel_names: Vec<String>,
    pub features: FeatureMap,
}

fn header(out: &mut Vec<u8>, kind: u8) {
    out.extend_from_slice(&SMMN_MAGIC);
    out.extend_from_slice(&SMMN_VERSION.to_le_bytes());
    out.push(kind);
    out.push(0);
}

fn read_header(r: &mut ByteReader<'_>, kind: u8) -> Result<()> {
    if r.take(4, "magic")? != SMMN_MAGIC {
        return Err(r.error(0, "bad magic, expected \"SMMN\""));
    }
    let version = r.le_u16("version")?;
    if version != SMMN_VERSION {
        return Err(r.error(4, format!("unsupported version {version}")));
    }
    let got = r.u8("kind")?;
    if got != kind {
        return Err(r.error(6, format!("file kind {got}, expected {kind}")));
    }
    let reserved = r.u8("reserved byte")?;
    if reserved != 0 {
        return Err(r.error(7, format!("reserved byte is {reserved}, expected 0")));
    }
    Ok(())
}

fn u32_field(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Usage(format!("{what} {n} does not fit the format")))
}

/// Encodes features as f32; values are rounded to the nearest f32.
pub fn encode_subject(channel_names: &[String], features: &FeatureMap) -> Result<Vec<u8>> {
    let (c, v) = (features.channels(), features.vertices());
    if channel_names.len() != c {
        return Err(Error::Shape(format!(
            "{} channel names for {c} channels",
            channel_names.len()
        )));
    }
    let mut out = Vec::with_capacity(20 + 4 * c * v);
    header(&mut out, KIND_SUBJECT);
    out.extend_from_slice(&features.level().to_le_bytes());
    out.extend_from_slice(&u32_field(v, "vertex count")?.to_le_bytes());
    out.extend_from_slice(&u32_field(c, "channel count")?.to_le_bytes());
    for name in channel_names {
        let n = u16::try_from(name.len()).map_err(|_| Error::Usage(format!("channel name too long: {name}")))?;
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for ch in 0..c {
        for vi in 0..v {
            out.extend_from_slice(&(features.get(ch, vi) as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_subject(bytes: &[u8], path: &Path) -> Result<SubjectFeatures> {
    let mut r = ByteReader::new(bytes, path);
    read_header(&mut r, KIND_SUBJECT)?;
    let order = r.le_u32("order")?;
    let at = r.pos();
    let v = r.le_u32("vertex count")? as usize;
    if order > 12 || icosphere_vertex_count(order) != v {
        return Err(r.error(at, format!("vertex count {v} does not match icosphere order {order}")));
    }
    let c = r.le_u32("channel count")? as usize;
    let mut channel_names = Vec::with_capacity(c.min(1024));
    for _ in 0..c {
        let n = r.le_u16("name length")? as usize;
        let at = r.pos();
        let raw = r.take(n, "channel name")?;
        let name = std::str::from_utf8(raw).map_err(|e| r.error(at, format!("channel name is not UTF-8: {e}")))?;
        channel_names.push(name.to_string());
    }
    if r.remaining() < 4 * c * v {
        return Err(r.error(
            r.pos(),
            format!("truncated values: need {} bytes, {} left", 4 * c * v, r.remaining()),
        ));
    }
    let mut values = vec![0.0; c * v];
    for ch in 0..c {
        for vi in 0..v {
            values[vi * c + ch] = r.le_f32("value")? as f64;
        }
    }
    r.expect_end()?;
    Ok(SubjectFeatures {
        channel_names,
        features: FeatureMap::from_vertex_major(c, v, order, values)?,
    })
}

pub fn write_subject(path: impl AsRef<Path>, channel_names: &[String], features: &FeatureMap) -> Result<()> {
    write_file(path.as_ref(), &encode_subject(channel_names, features)?)
}

pub fn read_subject(path: impl AsRef<Path>) -> Result<SubjectFeatures> {
    let path = path.as_ref();
    parse_subject(&read_file(path)?, path)
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    tensor_lengths: Vec<usize>,
}

/// Encodes a model: JSON config block, parameter tensors as f64 in
/// declaration order, then the normalization statistics.
pub fn encode_model(model: &MmnModel) -> Result<Vec<u8>> {
    let params = model.parameters();
    let head = CheckpointHeader {
        config: model.config().clone(),
        tensor_lengths: params.iter().map(|(_, p)| p.len()).collect(),
    };
    let json = serde_json::to_vec(&head)?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.parameter_count());
    header(&mut out, KIND_MODEL);
    out.extend_from_slice(&u32_field(json.len(), "config length")?.to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in &params {
        for x in *p {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let s = model.stats();
    for x in s.mean.iter().chain(&s.std).chain([&s.age_mean, &s.age_std]) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn parse_model(bytes: &[u8], path: &Path) -> Result<MmnModel> {
    let mut r = ByteReader::new(bytes, path);
    read_header(&mut r, KIND_MODEL)?;
    let n = r.le_u32("config length")? as usize;
    let at = r.pos();
    let json = r.take(n, "config block")?;
    let head: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| r.error(at, format!("bad config block: {e}")))?;
    head.config.validate().map_err(|e| r.error(at, e.to_string()))?;
    let total: usize = head.tensor_lengths.iter().sum();
    let c = head.config.in_channels;
    let need = 8 * (total + 2 * c + 2);
    if r.remaining() != need {
        return Err(r.error(
            r.pos(),
            format!("parameter section is {} bytes, expected {need}", r.remaining()),
        ));
    }
    let mut params = Vec::with_capacity(head.tensor_lengths.len());
    for &len in &head.tensor_lengths {
        params.push((0..len).map(|_| r.le_f64("parameter")).collect::<Result<Vec<_>>>()?);
    }
    let mut f64s = |k: usize| (0..k).map(|_| r.le_f64("statistic")).collect::<Result<Vec<_>>>();
    let mean = f64s(c)?;
    let std = f64s(c)?;
    let age = f64s(2)?;
    let stats = InputStats {
        mean,
        std,
        age_mean: age[0],
        age_std: age[1],
    };
    let hierarchy = build_hierarchy(head.config.input_order)?;
    MmnModel::from_parts(head.config, &hierarchy, &params, stats).map_err(|e| r.error(at, e.to_string()))
}

pub fn write_model(path: impl AsRef<Path>, model: &MmnModel) -> Result<()> {
    write_file(path.as_ref(), &encode_model(model)?)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<MmnModel> {
    let path = path.as_ref();
    parse_model(&read_file(path)?, path)
}
