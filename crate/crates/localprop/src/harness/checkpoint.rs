//! Versioned binary checkpoint for network parameters.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic  b"LPCK" | version u32 | topology u8 | layer_count u32
//! per layer:  in u32 | out u32 | activation u8
//! feedback_count u32, per matrix: rows u32 | cols u32
//! payload: per layer weight f64[out*in] row-major, bias f64[out];
//!          then each feedback matrix row-major
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::net::{Activation, FeedbackTopology, LayerParams, NetworkParams};

const MAGIC: &[u8; 4] = b"LPCK";
const VERSION: u32 = 1;

fn act_code(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Softmax => 1,
        Activation::Identity => 2,
    }
}

fn act_from(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Softmax),
        2 => Ok(Activation::Identity),
        other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn write_f64s(w: &mut impl Write, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    w.write_all(&[match params.topology {
        FeedbackTopology::Layerwise => 0u8,
        FeedbackTopology::Direct => 1u8,
    }])?;
    write_u32(&mut w, params.layers.len() as u32)?;
    for layer in &params.layers {
        write_u32(&mut w, layer.weight.ncols() as u32)?;
        write_u32(&mut w, layer.weight.nrows() as u32)?;
        w.write_all(&[act_code(layer.activation)])?;
    }
    write_u32(&mut w, params.feedback.len() as u32)?;
    for fb in &params.feedback {
        write_u32(&mut w, fb.nrows() as u32)?;
        write_u32(&mut w, fb.ncols() as u32)?;
    }
    for layer in &params.layers {
        write_f64s(&mut w, layer.weight.iter().copied())?;
        write_f64s(&mut w, layer.bias.iter().copied())?;
    }
    for fb in &params.feedback {
        write_f64s(&mut w, fb.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let topology = match read_u8(&mut r)? {
        0 => FeedbackTopology::Layerwise,
        1 => FeedbackTopology::Direct,
        other => return Err(Error::Checkpoint(format!("unknown topology code {other}"))),
    };
    let layer_count = read_u32(&mut r)? as usize;
    let mut shapes = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let input = read_u32(&mut r)? as usize;
        let output = read_u32(&mut r)? as usize;
        let act = act_from(read_u8(&mut r)?)?;
        shapes.push((input, output, act));
    }
    let fb_count = read_u32(&mut r)? as usize;
    let mut fb_shapes = Vec::with_capacity(fb_count);
    for _ in 0..fb_count {
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        fb_shapes.push((rows, cols));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for &(input, output, act) in &shapes {
        let weight = read_f64s(&mut r, output * input)?;
        let bias = read_f64s(&mut r, output)?;
        layers.push(LayerParams {
            weight: Array2::from_shape_vec((output, input), weight)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
            bias: Array1::from_vec(bias),
            activation: act,
        });
    }
    let mut feedback = Vec::with_capacity(fb_count);
    for &(rows, cols) in &fb_shapes {
        let data = read_f64s(&mut r, rows * cols)?;
        feedback.push(
            Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::Checkpoint(e.to_string()))?,
        );
    }
    let params = NetworkParams {
        layers,
        feedback,
        topology,
    };
    params.assert_finite()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_params_with_topology, InitScheme, LayerSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let specs = vec![
            LayerSpec::new(3, 5, Activation::Tanh),
            LayerSpec::new(5, 2, Activation::Softmax),
        ];
        for topology in [FeedbackTopology::Layerwise, FeedbackTopology::Direct] {
            let params =
                init_params_with_topology(&specs, InitScheme::default(), 13, topology).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ckpt.bin");
            save_checkpoint(&params, &path).unwrap();
            let loaded = load_checkpoint(&path).unwrap();
            assert_eq!(params, loaded);
        }
    }

    #[test]
    fn rejects_corrupted_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::Checkpoint(_)
        ));
    }
}
