//! Network checkpoints: a text manifest followed by raw parameters.
//!
//! ```text
//! CXTCKPT1
//! xf.hidden=8
//! ...            (key=value lines, including informational layer lines)
//! end
//! <u64 LE count><count f64 LE>   x-f parameters
//! <u64 LE count><count f64 LE>   x-t parameters
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::cxt::{read_file, write_file};
use crate::error::{Error, Result};
use crate::learned::{ConvRecNet, NetConfig, Padding};
use crate::solver::NetPair;

const MAGIC: &str = "CXTCKPT1";

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn config_lines(prefix: &str, net: &ConvRecNet, out: &mut String) {
    let c = net.config();
    out.push_str(&format!("{prefix}.hidden={}\n", c.hidden));
    out.push_str(&format!("{prefix}.layers={}\n", c.layers));
    out.push_str(&format!("{prefix}.kernel={}\n", join(&c.kernel)));
    let dil: Vec<String> = c.dilations.iter().map(|d| join(d)).collect();
    out.push_str(&format!("{prefix}.dilations={}\n", dil.join(";")));
    out.push_str(&format!("{prefix}.padding={}\n", join(&c.padding.map(|p| p.as_str()))));
    out.push_str(&format!("{prefix}.out_kernel={}\n", join(&c.out_kernel)));
    out.push_str(&format!("{prefix}.params={}\n", net.n_params()));
    for (i, line) in net.manifest().iter().enumerate() {
        out.push_str(&format!("{prefix}.layer{i}={line}\n"));
    }
}

pub fn encode_checkpoint(nets: &NetPair) -> Vec<u8> {
    let mut text = format!("{MAGIC}\n");
    config_lines("xf", &nets.xf, &mut text);
    config_lines("xt", &nets.xt, &mut text);
    text.push_str("end\n");
    let mut out = text.into_bytes();
    for net in [&nets.xf, &nets.xt] {
        out.extend_from_slice(&(net.n_params() as u64).to_le_bytes());
        for p in net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, nets: &NetPair) -> Result<()> {
    write_file(path, &encode_checkpoint(nets))
}

fn parse_triple(path: &Path, s: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(path, format!("expected three integers, got {s:?}")))?;
    v.try_into().map_err(|_| bad(path, format!("expected three integers, got {s:?}")))
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn net_config(path: &Path, kv: &BTreeMap<String, String>, prefix: &str) -> Result<NetConfig> {
    let get = |k: &str| kv.get(&format!("{prefix}.{k}")).ok_or_else(|| bad(path, format!("missing {prefix}.{k}")));
    let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(path, format!("{prefix}.{k} is not an integer"))) };
    let layers = int("layers")?;
    let dil_text = get("dilations")?;
    let dilations = if dil_text.is_empty() {
        Vec::new()
    } else {
        dil_text.split(';').map(|d| parse_triple(path, d)).collect::<Result<_>>()?
    };
    let pads: Vec<Padding> = get("padding")?
        .split(',')
        .map(|p| Padding::parse(p.trim()).ok_or_else(|| bad(path, format!("unknown padding {p:?}"))))
        .collect::<Result<_>>()?;
    let padding: [Padding; 3] = pads.try_into().map_err(|_| bad(path, "padding needs three entries"))?;
    Ok(NetConfig {
        hidden: int("hidden")?,
        layers,
        kernel: parse_triple(path, get("kernel")?)?,
        dilations,
        padding,
        out_kernel: parse_triple(path, get("out_kernel")?)?,
    })
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<NetPair> {
    let marker = b"\nend\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad(path, "manifest is not terminated by 'end'"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad(path, "manifest is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(bad(path, "bad checkpoint magic"));
    }
    let mut kv = BTreeMap::new();
    for line in lines {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(path, format!("malformed line {line:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let mut rest = &bytes[end + marker.len()..];
    let mut read_params = |name: &str| -> Result<Vec<f64>> {
        if rest.len() < 8 {
            return Err(bad(path, format!("truncated {name} parameter count")));
        }
        let n = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let need = n.checked_mul(8).ok_or_else(|| bad(path, "parameter count overflow"))?;
        if rest.len() < 8 + need {
            return Err(bad(path, format!("truncated {name} parameters")));
        }
        let v = rest[8..8 + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        rest = &rest[8 + need..];
        Ok(v)
    };
    let xf_theta = read_params("x-f")?;
    let xt_theta = read_params("x-t")?;
    if !rest.is_empty() {
        return Err(bad(path, "trailing bytes after parameters"));
    }
    let wrap = |e: Error| bad(path, e.to_string());
    Ok(NetPair {
        xf: ConvRecNet::from_params(net_config(path, &kv, "xf")?, xf_theta).map_err(wrap)?,
        xt: ConvRecNet::from_params(net_config(path, &kv, "xt")?, xt_theta).map_err(wrap)?,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<NetPair> {
    decode_checkpoint(&read_file(path)?, path)
}
