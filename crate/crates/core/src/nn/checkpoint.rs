//! Network checkpoint format: a length-prefixed JSON header describing the
//! architecture and provenance, followed by the flat parameter vector as
//! little-endian f64. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::{Activation, NetBody, Network, NetworkMeta};

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    architecture: ArchHeader,
    #[serde(skip_serializing_if = "Option::is_none")]
    clip: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    init_scheme: Option<String>,
    n_params: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ArchHeader {
    FeedForward {
        input_dim: usize,
        widths: Vec<usize>,
        activation: Activation,
        resnet: bool,
    },
    TwoLayerRelu3 {
        input_dim: usize,
        neurons: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        clamp: Option<f64>,
    },
}

pub fn write_network(net: &Network, w: &mut impl Write) -> Result<()> {
    let architecture = match &net.body {
        NetBody::FeedForward(n) => ArchHeader::FeedForward {
            input_dim: n.input_dim(),
            widths: n.widths().to_vec(),
            activation: n.activation(),
            resnet: n.is_resnet(),
        },
        NetBody::TwoLayer(n) => ArchHeader::TwoLayerRelu3 {
            input_dim: n.input_dim(),
            neurons: n.neurons(),
            clamp: n.clamp_bound(),
        },
    };
    let header = Header {
        format_version: FORMAT_VERSION,
        architecture,
        clip: net.clip,
        seed: net.meta.seed,
        init_scheme: net.meta.init_scheme.clone(),
        n_params: net.n_params() as u64,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| CoreError::format(format!("checkpoint header encode: {e}")))?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_network(r: &mut impl Read) -> Result<Network> {
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes)?;
    let len = u32::from_le_bytes(len_bytes) as usize;
    if len > 1 << 24 {
        return Err(CoreError::format("checkpoint: implausible header length"));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)
        .map_err(|e| CoreError::format(format!("checkpoint header decode: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CoreError::format(format!(
            "checkpoint: unsupported format version {}",
            header.format_version
        )));
    }
    let mut net = match header.architecture {
        ArchHeader::FeedForward {
            input_dim,
            widths,
            activation,
            resnet,
        } => Network::feedforward(input_dim, widths, activation, resnet)?,
        ArchHeader::TwoLayerRelu3 {
            input_dim,
            neurons,
            clamp,
        } => Network::two_layer_relu3(input_dim, neurons, clamp)?,
    };
    if net.n_params() as u64 != header.n_params {
        return Err(CoreError::format(format!(
            "checkpoint: architecture implies {} parameters, header says {}",
            net.n_params(),
            header.n_params
        )));
    }
    let mut raw = vec![0u8; net.n_params() * 8];
    r.read_exact(&mut raw)
        .map_err(|e| CoreError::format(format!("checkpoint: truncated payload: {e}")))?;
    for (p, chunk) in net.params_mut().iter_mut().zip(raw.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    net.clip = header.clip;
    net.meta = NetworkMeta {
        seed: header.seed,
        init_scheme: header.init_scheme,
    };
    Ok(net)
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_network(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        CoreError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?);
    read_network(&mut r)
}
