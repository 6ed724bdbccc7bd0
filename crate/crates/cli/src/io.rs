//! On-disk formats: network checkpoints (JSON header + little-endian f64
//! payload), demonstration files (JSON header + little-endian f32 blocks +
//! done bitmap), normalization-reference manifests, metrics CSV, and run
//! manifests with a content hash of the inputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use ngt_core::env::NormalizationRefs;
use ngt_core::linalg::Mat;
use ngt_core::nn::{Activation, Layer, Mlp};
use ngt_core::sac::Transition;
use ngt_core::trainer::MetricsRecord;

use crate::CliError;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn runtime(msg: impl std::fmt::Display) -> CliError {
    CliError::runtime(msg.to_string())
}

fn act_to_json(a: Activation) -> Value {
    match a {
        Activation::Relu => json!("relu"),
        Activation::Tanh => json!("tanh"),
        Activation::Identity => json!("identity"),
        Activation::LeakyRelu(l) => json!({ "leaky": l }),
    }
}

fn act_from_json(v: &Value) -> Result<Activation, CliError> {
    if let Some(s) = v.as_str() {
        return match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(runtime(format!("unknown activation '{other}'"))),
        };
    }
    v.get("leaky")
        .and_then(Value::as_f64)
        .map(Activation::LeakyRelu)
        .ok_or_else(|| runtime("bad activation field"))
}

/// One JSON line describing shapes, then all weights and biases as
/// little-endian f64, layer by layer (w row-major, then b).
pub fn save_mlp(path: &Path, net: &Mlp, meta: Value) -> Result<(), CliError> {
    let layers: Vec<Value> = net
        .layers
        .iter()
        .map(|l| {
            json!({
                "rows": l.w.rows,
                "cols": l.w.cols,
                "act": act_to_json(l.act),
                "sn": l.sn_u.is_some(),
            })
        })
        .collect();
    let header = json!({ "format": "mlp-v1", "meta": meta, "layers": layers });
    let mut buf = serde_json::to_string(&header).map_err(runtime)?.into_bytes();
    buf.push(b'\n');
    for l in &net.layers {
        for &v in &l.w.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &l.b {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(u) = &l.sn_u {
            for &v in u {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(runtime)
}

pub fn load_mlp(path: &Path) -> Result<(Mlp, Value), CliError> {
    let bytes = fs::read(path).map_err(|e| runtime(format!("cannot read '{}': {e}", path.display())))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| runtime("checkpoint missing header line"))?;
    let header: Value = serde_json::from_slice(&bytes[..nl]).map_err(runtime)?;
    if header.get("format").and_then(Value::as_str) != Some("mlp-v1") {
        return Err(runtime("not an mlp-v1 checkpoint"));
    }
    let mut off = nl + 1;
    let mut read_f64 = |n: usize| -> Result<Vec<f64>, CliError> {
        let need = n * 8;
        if off + need > bytes.len() {
            return Err(runtime("checkpoint payload truncated"));
        }
        let out = bytes[off..off + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += need;
        Ok(out)
    };
    let mut layers = Vec::new();
    for lj in header["layers"].as_array().ok_or_else(|| runtime("bad layers field"))? {
        let rows = lj["rows"].as_u64().ok_or_else(|| runtime("bad rows"))? as usize;
        let cols = lj["cols"].as_u64().ok_or_else(|| runtime("bad cols"))? as usize;
        let act = act_from_json(&lj["act"])?;
        let sn = lj["sn"].as_bool().unwrap_or(false);
        let data = read_f64(rows * cols)?;
        let b = read_f64(rows)?;
        let sn_u = if sn { Some(read_f64(rows)?) } else { None };
        let mut w = Mat::zeros(rows, cols);
        w.data = data;
        layers.push(Layer { w, b, act, sn_u });
    }
    Ok((Mlp { layers }, header["meta"].clone()))
}

/// Demonstration container mirroring the in-memory set closely enough to
/// round-trip bit-identically at the file level (payload is f32).
pub struct DemoFile {
    pub task: String,
    pub expert_seed: u64,
    pub n_episodes: usize,
    pub subsample_rate: usize,
    pub subsample_offset: usize,
    pub input_mode: String,
    pub episodes: Vec<Vec<Transition>>,
}

pub fn save_demos(path: &Path, d: &DemoFile) -> Result<(), CliError> {
    let total: usize = d.episodes.iter().map(|e| e.len()).sum();
    if total == 0 {
        return Err(runtime("refusing to write an empty demonstration set"));
    }
    let first = &d.episodes.iter().find(|e| !e.is_empty()).unwrap()[0];
    let (sdim, adim) = (first.s.len(), first.a.len());
    let header = json!({
        "format": "demos-v1",
        "task": d.task,
        "expert_seed": d.expert_seed,
        "n_episodes": d.n_episodes,
        "subsample_rate": d.subsample_rate,
        "subsample_offset": d.subsample_offset,
        "input_mode": d.input_mode,
        "state_dim": sdim,
        "action_dim": adim,
        "episode_lens": d.episodes.iter().map(|e| e.len()).collect::<Vec<_>>(),
    });
    let mut buf = serde_json::to_string(&header).map_err(runtime)?.into_bytes();
    buf.push(b'\n');
    let mut put = |xs: &[f64]| {
        for &v in xs {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    for t in d.episodes.iter().flatten() {
        put(&t.s);
        put(&t.a);
        put(&t.s_next);
    }
    let mut bitmap = vec![0u8; total.div_ceil(8)];
    for (i, t) in d.episodes.iter().flatten().enumerate() {
        if t.done {
            bitmap[i / 8] |= 1 << (i % 8);
        }
    }
    buf.extend_from_slice(&bitmap);
    fs::write(path, buf).map_err(runtime)
}

pub fn load_demos(path: &Path) -> Result<DemoFile, CliError> {
    let bytes = fs::read(path).map_err(|e| runtime(format!("cannot read '{}': {e}", path.display())))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| runtime("demo file missing header line"))?;
    let header: Value = serde_json::from_slice(&bytes[..nl]).map_err(runtime)?;
    if header.get("format").and_then(Value::as_str) != Some("demos-v1") {
        return Err(runtime("not a demos-v1 file"));
    }
    let sdim = header["state_dim"].as_u64().ok_or_else(|| runtime("bad state_dim"))? as usize;
    let adim = header["action_dim"].as_u64().ok_or_else(|| runtime("bad action_dim"))? as usize;
    let lens: Vec<usize> = header["episode_lens"]
        .as_array()
        .ok_or_else(|| runtime("bad episode_lens"))?
        .iter()
        .map(|v| v.as_u64().unwrap_or(0) as usize)
        .collect();
    let total: usize = lens.iter().sum();
    let per = 2 * sdim + adim;
    let payload = &bytes[nl + 1..];
    let need = total * per * 4 + total.div_ceil(8);
    if payload.len() != need {
        return Err(runtime(format!(
            "demo payload size mismatch: {} vs expected {need}",
            payload.len()
        )));
    }
    let floats: Vec<f64> = payload[..total * per * 4]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let bitmap = &payload[total * per * 4..];
    let mut episodes = Vec::with_capacity(lens.len());
    let mut i = 0usize;
    for len in &lens {
        let mut ep = Vec::with_capacity(*len);
        for _ in 0..*len {
            let base = i * per;
            ep.push(Transition {
                s: floats[base..base + sdim].to_vec(),
                a: floats[base + sdim..base + sdim + adim].to_vec(),
                s_next: floats[base + sdim + adim..base + per].to_vec(),
                done: bitmap[i / 8] & (1 << (i % 8)) != 0,
            });
            i += 1;
        }
        episodes.push(ep);
    }
    Ok(DemoFile {
        task: header["task"].as_str().unwrap_or("").to_string(),
        expert_seed: header["expert_seed"].as_u64().unwrap_or(0),
        n_episodes: header["n_episodes"].as_u64().unwrap_or(0) as usize,
        subsample_rate: header["subsample_rate"].as_u64().unwrap_or(1) as usize,
        subsample_offset: header["subsample_offset"].as_u64().unwrap_or(0) as usize,
        input_mode: header["input_mode"].as_str().unwrap_or("state_action").to_string(),
        episodes,
    })
}

pub fn save_refs(path: &Path, task: &str, refs: &NormalizationRefs, episodes: usize) -> Result<(), CliError> {
    let v = json!({
        "format": "refs-v1",
        "task": task,
        "random_return": refs.random_return,
        "expert_return": refs.expert_return,
        "episodes": episodes,
    });
    fs::write(path, serde_json::to_string_pretty(&v).map_err(runtime)?).map_err(runtime)
}

pub fn load_refs(path: &Path) -> Result<(String, NormalizationRefs), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read '{}': {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(runtime)?;
    let refs = NormalizationRefs {
        random_return: v["random_return"].as_f64().ok_or_else(|| runtime("bad random_return"))?,
        expert_return: v["expert_return"].as_f64().ok_or_else(|| runtime("bad expert_return"))?,
    };
    Ok((v["task"].as_str().unwrap_or("").to_string(), refs))
}

pub const METRICS_HEADER: &str =
    "step,eval_return_mean,eval_return_norm,reward_loss,critic_loss,actor_loss,alpha";

pub fn save_metrics(path: &Path, rows: &[MetricsRecord]) -> Result<(), CliError> {
    let mut f = fs::File::create(path).map_err(runtime)?;
    writeln!(f, "{METRICS_HEADER}").map_err(runtime)?;
    for m in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            m.step,
            m.eval_return_mean,
            m.eval_return_norm,
            m.reward_loss,
            m.critic_loss,
            m.actor_loss,
            m.alpha
        )
        .map_err(runtime)?;
    }
    Ok(())
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime(format!("cannot read '{}': {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != METRICS_HEADER {
                return Err(runtime(format!("unexpected metrics header in '{}'", path.display())));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(runtime(format!("{}:{}: bad metrics row", path.display(), i + 1)));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| runtime("bad number in metrics row"));
        out.push(MetricsRecord {
            step: parts[0].parse().map_err(|_| runtime("bad step"))?,
            eval_return_mean: f(parts[1])?,
            eval_return_norm: f(parts[2])?,
            reward_loss: f(parts[3])?,
            critic_loss: f(parts[4])?,
            actor_loss: f(parts[5])?,
            alpha: f(parts[6])?,
        });
    }
    Ok(out)
}

/// Resolved config plus a content hash of every input file, enough to
/// re-run the experiment bit-identically.
pub fn save_manifest(path: &Path, config: Value, input_files: &[&Path]) -> Result<(), CliError> {
    let mut hashes = serde_json::Map::new();
    for p in input_files {
        let bytes = fs::read(p).map_err(|e| runtime(format!("cannot hash '{}': {e}", p.display())))?;
        hashes.insert(p.display().to_string(), json!(format!("{:016x}", fnv1a(&bytes))));
    }
    let v = json!({ "format": "manifest-v1", "config": config, "input_hashes": hashes });
    fs::write(path, serde_json::to_string_pretty(&v).map_err(runtime)?).map_err(runtime)
}
