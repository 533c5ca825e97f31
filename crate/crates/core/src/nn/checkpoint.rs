//! Versioned little-endian binary format for one network.
//!
//! ```text
//! magic        4 bytes  "NFWN"
//! version      u16      1
//! n_widths     u32
//! widths       u32 * n_widths
//! hidden       u8       0 identity, 1 tanh, 2 relu
//! output       u8       0 identity, 1 bounded
//! [lo, hi]     f64 * 2  present only for bounded output
//! n_params     u64
//! params       f64 * n_params
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, MlpSpec, OutputActivation, ParamVector};

pub const NETWORK_MAGIC: &[u8; 4] = b"NFWN";
pub const NETWORK_VERSION: u16 = 1;

pub fn write_network<W: Write>(w: &mut W, spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "parameter count {} does not match spec ({})",
            params.len(),
            spec.param_count()
        )));
    }
    w.write_all(NETWORK_MAGIC)?;
    w.write_all(&NETWORK_VERSION.to_le_bytes())?;
    w.write_all(&(spec.layer_widths.len() as u32).to_le_bytes())?;
    for &width in &spec.layer_widths {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    let hidden: u8 = match spec.hidden_activation {
        Activation::Identity => 0,
        Activation::Tanh => 1,
        Activation::Relu => 2,
    };
    w.write_all(&[hidden])?;
    match spec.output_activation {
        OutputActivation::Identity => w.write_all(&[0])?,
        OutputActivation::Bounded { lo, hi } => {
            w.write_all(&[1])?;
            w.write_all(&lo.to_le_bytes())?;
            w.write_all(&hi.to_le_bytes())?;
        }
    }
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for v in &params.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_network<R: Read>(r: &mut R) -> Result<(MlpSpec, ParamVector)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != NETWORK_MAGIC {
        return Err(Error::Checkpoint("bad network magic".into()));
    }
    let version = u16::from_le_bytes(read_array(r)?);
    if version != NETWORK_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported network version {version}"
        )));
    }
    let n_widths = u32::from_le_bytes(read_array(r)?) as usize;
    if n_widths > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {n_widths}")));
    }
    let widths = (0..n_widths)
        .map(|_| Ok(u32::from_le_bytes(read_array(r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let [hidden] = read_array::<_, 1>(r)?;
    let hidden_activation = match hidden {
        0 => Activation::Identity,
        1 => Activation::Tanh,
        2 => Activation::Relu,
        other => return Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
    };
    let [output] = read_array::<_, 1>(r)?;
    let output_activation = match output {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Bounded {
            lo: f64::from_le_bytes(read_array(r)?),
            hi: f64::from_le_bytes(read_array(r)?),
        },
        other => return Err(Error::Checkpoint(format!("unknown output tag {other}"))),
    };
    let spec = MlpSpec::new(widths, hidden_activation, output_activation)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let n_params = u64::from_le_bytes(read_array(r)?) as usize;
    if n_params != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "header declares {n_params} parameters, spec needs {}",
            spec.param_count()
        )));
    }
    let values = (0..n_params)
        .map(|_| Ok(f64::from_le_bytes(read_array(r)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((spec, ParamVector { values }))
}

pub(crate) fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn round_trip(widths in prop::collection::vec(1usize..6, 2..5), seed in any::<u64>(), bounded in any::<bool>()) {
            let out = if bounded {
                OutputActivation::Bounded { lo: -5.0, hi: 5.0 }
            } else {
                OutputActivation::Identity
            };
            let spec = MlpSpec::new(widths, Activation::Tanh, out).unwrap();
            let params = ParamVector::init(&spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let mut buf = Vec::new();
            write_network(&mut buf, &spec, &params).unwrap();
            let (s2, p2) = read_network(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(s2, spec);
            prop_assert_eq!(p2, params);
        }
    }

    #[test]
    fn truncated_and_corrupt_inputs_fail() {
        let spec = MlpSpec::new(vec![2, 1], Activation::Relu, OutputActivation::Identity).unwrap();
        let mut buf = Vec::new();
        write_network(&mut buf, &spec, &ParamVector::zeros(3)).unwrap();
        assert!(read_network(&mut &buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_network(&mut bad.as_slice()), Err(Error::Checkpoint(_))));
    }
}
