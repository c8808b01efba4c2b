//! CGN1 checkpoints: one or more networks plus a list of `u32` metadata.
//!
//! Layout after the magic: version, meta count, meta values, network count,
//! then per network its input channels, layer count and for each layer
//! `kind, a, b, alpha (f64), param_len, params (f64)`.

use super::{Layer, LayerSpec, Network};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, Reader, Writer, CHECKPOINT_MAGIC};
use std::path::Path;

const VERSION: u32 = 1;

fn spec_fields(spec: &LayerSpec) -> (u32, usize, usize, f64) {
    match *spec {
        LayerSpec::Conv3x3 { cin, cout } => (0, cin, cout, 0.0),
        LayerSpec::Dense { fin, fout } => (1, fin, fout, 0.0),
        LayerSpec::LeakyRelu(a) => (2, 0, 0, a),
        LayerSpec::Relu => (3, 0, 0, 0.0),
        LayerSpec::Sigmoid => (4, 0, 0, 0.0),
        LayerSpec::DepthToSpace(r) => (5, r, 0, 0.0),
        LayerSpec::SpaceToDepth(r) => (6, r, 0, 0.0),
        LayerSpec::Residual { filters } => (7, filters, 0, 0.0),
        LayerSpec::AppendNoise { channels } => (8, channels, 0, 0.0),
    }
}

fn spec_from(kind: u32, a: usize, b: usize, alpha: f64) -> Result<LayerSpec> {
    Ok(match kind {
        0 => LayerSpec::Conv3x3 { cin: a, cout: b },
        1 => LayerSpec::Dense { fin: a, fout: b },
        2 => LayerSpec::LeakyRelu(alpha),
        3 => LayerSpec::Relu,
        4 => LayerSpec::Sigmoid,
        5 => LayerSpec::DepthToSpace(a),
        6 => LayerSpec::SpaceToDepth(a),
        7 => LayerSpec::Residual { filters: a },
        8 => LayerSpec::AppendNoise { channels: a },
        k => return Err(Error::Malformed(format!("unknown layer kind {k}"))),
    })
}

pub fn encode_networks(nets: &[&Network], meta: &[u32]) -> Result<Vec<u8>> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    w.u32(VERSION).usize(meta.len())?;
    for &m in meta {
        w.u32(m);
    }
    w.usize(nets.len())?;
    for net in nets {
        w.usize(net.input_channels())?.usize(net.layers().len())?;
        for layer in net.layers() {
            let (kind, a, b, alpha) = spec_fields(&layer.spec);
            w.u32(kind).usize(a)?.usize(b)?;
            w.f64(alpha).usize(layer.params.len())?;
            w.f64s(&layer.params);
        }
    }
    Ok(w.finish())
}

pub fn decode_networks(buf: &[u8]) -> Result<(Vec<Network>, Vec<u32>)> {
    let mut r = Reader::open(buf, CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n_meta = r.usize()?;
    r.require(n_meta.checked_mul(4).ok_or(Error::DimensionOverflow)?)?;
    let meta = (0..n_meta).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let n_nets = r.usize()?;
    let mut nets = Vec::new();
    for _ in 0..n_nets {
        let cin = r.usize()?;
        let n_layers = r.usize()?;
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let kind = r.u32()?;
            let (a, b) = (r.usize()?, r.usize()?);
            let alpha = r.f64()?;
            let spec = spec_from(kind, a, b, alpha)?;
            let len = r.usize()?;
            let params = r.f64s(len)?;
            layers.push(Layer { spec, params });
        }
        nets.push(Network::from_layers(cin, layers).map_err(|e| Error::Malformed(e.to_string()))?);
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed(format!("{} trailing bytes", r.remaining())));
    }
    Ok((nets, meta))
}

pub fn save_networks(path: impl AsRef<Path>, nets: &[&Network], meta: &[u32]) -> Result<()> {
    write_file(path, &encode_networks(nets, meta)?)
}

pub fn load_networks(path: impl AsRef<Path>) -> Result<(Vec<Network>, Vec<u32>)> {
    decode_networks(&read_file(path)?)
}
