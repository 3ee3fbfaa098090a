//! Binary containers for fields, correlation sets and kernel checkpoints,
//! and an atomic file writer.
//!
//! Every container is an 8-byte magic, a u32 little-endian header length, a
//! UTF-8 JSON header, then a little-endian payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::correlations::{CorrelationSet, S3Table};
use crate::error::{NceError, Result};
use crate::gridfield::{volume_fraction, GenerationMeta, Microstructure};
use crate::kernels::MediumSpec;
use crate::nce::{KernelKind, KernelModel, TrainConfig};
use crate::solvers::FieldSolution;

pub const FIELD_MAGIC: &[u8; 8] = b"NCEFLD01";
pub const CORR_MAGIC: &[u8; 8] = b"NCECOR01";
pub const KERNEL_MAGIC: &[u8; 8] = b"NCEKRN01";

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(NceError::Format(msg.into()))
}

fn encode(magic: &[u8; 8], header: &Value, payload: &[u8]) -> Vec<u8> {
    let h = serde_json::to_vec(header).expect("JSON values always serialize");
    let mut out = Vec::with_capacity(12 + h.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(payload);
    out
}

fn decode<'a>(magic: &[u8; 8], bytes: &'a [u8]) -> Result<(Value, &'a [u8])> {
    if bytes.len() < 12 {
        return format_err("truncated container");
    }
    if &bytes[..8] != magic {
        return format_err(format!("bad magic, expected {}", String::from_utf8_lossy(magic)));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < len {
        return format_err("truncated header");
    }
    let header: Value =
        serde_json::from_slice(&body[..len]).map_err(|e| NceError::Format(format!("header is not valid JSON: {e}")))?;
    Ok((header, &body[len..]))
}

fn header_usize(h: &Value, key: &str) -> Result<usize> {
    h.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| NceError::Format(format!("header field `{key}` missing or not an integer")))
}

fn header_f64(h: &Value, key: &str) -> Result<f64> {
    h.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| NceError::Format(format!("header field `{key}` missing or not a number")))
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

fn push_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| NceError::Param(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn encode_field(m: &Microstructure) -> Vec<u8> {
    let meta = m.meta.as_ref();
    let header = json!({
        "side": m.side(),
        "d": 2,
        "phi": volume_fraction(m),
        "seed": meta.map(|g| g.seed),
        "corr_len_x": meta.map(|g| g.corr_len_x),
        "corr_len_y": meta.map(|g| g.corr_len_y),
        "target_phi": meta.map(|g| g.target_phi),
    });
    encode(FIELD_MAGIC, &header, m.cells())
}

pub fn decode_field(bytes: &[u8]) -> Result<Microstructure> {
    let (h, payload) = decode(FIELD_MAGIC, bytes)?;
    if let Some(p) = h.get("payload").and_then(Value::as_str) {
        if p != "uint8" {
            return format_err(format!("container holds a {p} solution, not a microstructure"));
        }
    }
    let side = header_usize(&h, "side")?;
    if payload.len() != side * side {
        return format_err(format!("header side {side} needs {} payload bytes, found {}", side * side, payload.len()));
    }
    let mut m = Microstructure::from_cells(side, payload.to_vec()).map_err(|e| NceError::Format(e.to_string()))?;
    if let (Some(seed), Some(lx), Some(ly)) = (
        h.get("seed").and_then(Value::as_u64),
        h.get("corr_len_x").and_then(Value::as_f64),
        h.get("corr_len_y").and_then(Value::as_f64),
    ) {
        let target_phi = h.get("target_phi").and_then(Value::as_f64).unwrap_or(volume_fraction(&m));
        m.meta = Some(GenerationMeta { seed, corr_len_x: lx, corr_len_y: ly, target_phi });
    }
    Ok(m)
}

pub fn write_field(m: &Microstructure, path: &Path) -> Result<()> {
    write_atomic(path, &encode_field(m))
}

pub fn read_field(path: &Path) -> Result<Microstructure> {
    decode_field(&fs::read(path)?)
}

/// Field-solution dump: complex128 payload (re, im per cell) when any
/// imaginary part is nonzero, float64 otherwise.
pub fn encode_solution(s: &FieldSolution) -> Vec<u8> {
    let complex = s.field.iter().any(|z| z.im != 0.0);
    let header = json!({
        "side": s.side,
        "d": 2,
        "payload": if complex { "complex128" } else { "float64" },
        "iterations": s.iterations,
        "residual_norm": s.residual_norm,
    });
    let mut payload = Vec::with_capacity(s.field.len() * if complex { 16 } else { 8 });
    for z in &s.field {
        payload.extend_from_slice(&z.re.to_le_bytes());
        if complex {
            payload.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    encode(FIELD_MAGIC, &header, &payload)
}

/// Side and cell values of a solution dump.
pub fn decode_solution(bytes: &[u8]) -> Result<(usize, Vec<Complex64>)> {
    let (h, payload) = decode(FIELD_MAGIC, bytes)?;
    let side = header_usize(&h, "side")?;
    let width = match h.get("payload").and_then(Value::as_str) {
        Some("float64") => 8,
        Some("complex128") => 16,
        _ => return format_err("not a solution container"),
    };
    if payload.len() != side * side * width {
        return format_err("solution payload length does not match the header");
    }
    let v = f64s(payload);
    let field = if width == 8 {
        v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()
    } else {
        v.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
    };
    Ok((side, field))
}

pub fn encode_correlations(cs: &CorrelationSet) -> Vec<u8> {
    let header = json!({
        "side": cs.side,
        "phi": cs.phi,
        "order": cs.order(),
        "n_patches": cs.n_patches,
        "window_radius": cs.window_radius,
        "s3_radius_cells": cs.s3.as_ref().map(|t| t.radius_cells()),
    });
    let mut payload = Vec::with_capacity(cs.s2.len() * 8);
    push_f64s(&mut payload, &cs.s2);
    if let Some(t) = &cs.s3 {
        for (r1, r2, v) in t.records() {
            for c in [r1[0], r1[1], r2[0], r2[1]] {
                payload.extend_from_slice(&(c as i16).to_le_bytes());
            }
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    encode(CORR_MAGIC, &header, &payload)
}

pub fn decode_correlations(bytes: &[u8]) -> Result<CorrelationSet> {
    let (h, payload) = decode(CORR_MAGIC, bytes)?;
    let side = header_usize(&h, "side")?;
    let order = header_usize(&h, "order")?;
    let n2 = side * side * 8;
    if payload.len() < n2 {
        return format_err("truncated S₂ payload");
    }
    let s2 = f64s(&payload[..n2]);
    let rest = &payload[n2..];
    let s3 = match order {
        2 if rest.is_empty() => None,
        2 => return format_err("order-2 container carries trailing bytes"),
        3 => {
            if rest.len() % 16 != 0 {
                return format_err("S₃ records are 16 bytes each");
            }
            let radius = header_usize(&h, "s3_radius_cells")? as i64;
            let i16_at = |b: &[u8], k: usize| i16::from_le_bytes([b[2 * k], b[2 * k + 1]]) as i64;
            let records: Vec<_> = rest
                .chunks_exact(16)
                .map(|r| {
                    (
                        [i16_at(r, 0), i16_at(r, 1)],
                        [i16_at(r, 2), i16_at(r, 3)],
                        f64::from_le_bytes(r[8..16].try_into().expect("8 bytes")),
                    )
                })
                .collect();
            let t = S3Table::from_records(radius, &records)?;
            if records.len() != t.offsets().len().pow(2) {
                return format_err("S₃ table is incomplete");
            }
            Some(t)
        }
        o => return format_err(format!("unsupported order {o}")),
    };
    Ok(CorrelationSet {
        side,
        phi: header_f64(&h, "phi")?,
        s2,
        s3,
        n_patches: header_usize(&h, "n_patches")?,
        window_radius: header_f64(&h, "window_radius")?,
    })
}

pub fn write_correlations(cs: &CorrelationSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_correlations(cs))
}

pub fn read_correlations(path: &Path) -> Result<CorrelationSet> {
    decode_correlations(&fs::read(path)?)
}

/// 64-bit FNV-1a, used to fingerprint the training configuration.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ *b as u64).wrapping_mul(0x100_0000_01b3))
}

#[derive(Serialize, Deserialize)]
struct KernelHeader {
    kind: KernelKind,
    #[serde(rename = "N")]
    n_max: usize,
    #[serde(rename = "M")]
    m_radial: usize,
    alpha_env: f64,
    spec: MediumSpec,
    train_config_digest: Option<String>,
    /// Payload layout, for readers outside this crate.
    layout: String,
}

/// Checkpoint payload: c_real, c_imag (each 4·(N+1)·M values, index
/// ((i·2 + j)·(N+1) + n)·M + m), then alpha ((N+1)·M values, index n·M + m).
pub fn encode_kernel(km: &KernelModel, cfg: Option<&TrainConfig>) -> Vec<u8> {
    let header = KernelHeader {
        kind: km.kind,
        n_max: km.n_max(),
        m_radial: km.m_radial,
        alpha_env: km.alpha_env,
        spec: km.spec,
        train_config_digest: cfg.map(|c| format!("{:016x}", fnv1a(&serde_json::to_vec(c).expect("config serializes")))),
        layout: "c_real[4(N+1)M], c_imag[4(N+1)M], alpha[(N+1)M]; c index ((i*2+j)*(N+1)+n)*M+m".into(),
    };
    let mut payload = Vec::new();
    push_f64s(&mut payload, &km.c_re);
    push_f64s(&mut payload, &km.c_im);
    push_f64s(&mut payload, &km.alpha);
    encode(KERNEL_MAGIC, &serde_json::to_value(header).expect("header serializes"), &payload)
}

pub fn decode_kernel(bytes: &[u8]) -> Result<KernelModel> {
    let (h, payload) = decode(KERNEL_MAGIC, bytes)?;
    let h: KernelHeader = serde_json::from_value(h).map_err(|e| NceError::Format(format!("kernel header: {e}")))?;
    let n_orders = h.n_max + 1;
    let nc = 4 * n_orders * h.m_radial;
    let na = n_orders * h.m_radial;
    if payload.len() != (2 * nc + na) * 8 {
        return format_err("kernel payload length does not match N and M");
    }
    let v = f64s(payload);
    let km = KernelModel {
        kind: h.kind,
        n_orders,
        m_radial: h.m_radial,
        c_re: v[..nc].to_vec(),
        c_im: v[nc..2 * nc].to_vec(),
        alpha: v[2 * nc..].to_vec(),
        alpha_env: h.alpha_env,
        spec: h.spec,
    };
    km.validate().map_err(|e| NceError::Format(e.to_string()))?;
    Ok(km)
}

pub fn write_kernel(km: &KernelModel, cfg: Option<&TrainConfig>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_kernel(km, cfg))
}

pub fn read_kernel(path: &Path) -> Result<KernelModel> {
    decode_kernel(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_length_is_checked() {
        let mut b = encode(FIELD_MAGIC, &json!({"side": 2}), &[0, 1, 1, 0]);
        b[8] = 200;
        assert!(matches!(decode_field(&b), Err(NceError::Format(_))));
    }

    #[test]
    fn fnv_reference_value() {
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
