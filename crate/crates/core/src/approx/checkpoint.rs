//! Parameter checkpoints: one text header line describing the net shape,
//! followed by the flat parameter vector as little-endian f64 bytes.
//!
//! Header (version 1):
//! `klpi-params v1 in=<n> hidden=<w,w,..|-> out=<n> act=<elu|tanh|identity>
//!  ln_first=<0|1> ln_tanh=<0|1> count=<n>`

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::net::{Activation, NetSpec};

fn act_tag(a: Activation) -> &'static str {
    match a {
        Activation::Elu => "elu",
        Activation::Tanh => "tanh",
        Activation::Identity => "identity",
    }
}

fn parse_act(s: &str) -> Result<Activation> {
    match s {
        "elu" => Ok(Activation::Elu),
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        other => Err(Error::Checkpoint(format!("unknown activation tag '{other}'"))),
    }
}

pub fn save_params(path: &Path, spec: &NetSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            got: params.len(),
        });
    }
    let hidden = if spec.hidden.is_empty() {
        "-".to_string()
    } else {
        spec.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
    };
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "klpi-params v1 in={} hidden={} out={} act={} ln_first={} ln_tanh={} count={}",
        spec.input,
        hidden,
        spec.output,
        act_tag(spec.activation),
        spec.layer_norm_first as u8,
        spec.layer_norm_tanh as u8,
        params.len(),
    )?;
    for &p in params {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(NetSpec, Vec<f64>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        reader.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        if header.len() > 4096 {
            return Err(Error::Checkpoint("header line too long".into()));
        }
        header.push(byte[0]);
    }
    let header = String::from_utf8(header)
        .map_err(|_| Error::Checkpoint("header is not valid UTF-8".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("klpi-params") || fields.next() != Some("v1") {
        return Err(Error::Checkpoint("unrecognized checkpoint magic/version".into()));
    }
    let mut kv = std::collections::HashMap::new();
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Checkpoint(format!("malformed header field '{field}'")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        kv.get(k).cloned().ok_or_else(|| Error::Checkpoint(format!("missing header field '{k}'")))
    };
    let parse_usize = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Checkpoint(format!("bad integer in field '{k}'")))
    };
    let hidden_str = get("hidden")?;
    let hidden: Vec<usize> = if hidden_str == "-" {
        vec![]
    } else {
        hidden_str
            .split(',')
            .map(|w| w.parse().map_err(|_| Error::Checkpoint("bad hidden width".into())))
            .collect::<Result<_>>()?
    };
    let spec = NetSpec::new(
        parse_usize("in")?,
        hidden,
        parse_usize("out")?,
        parse_act(&get("act")?)?,
    )
    .with_layer_norm(get("ln_first")? == "1", get("ln_tanh")? == "1");
    spec.validate()?;
    let count = parse_usize("count")?;
    if count != spec.param_count() {
        return Err(Error::Checkpoint(format!(
            "count {} does not match spec parameter count {}",
            count,
            spec.param_count()
        )));
    }
    let mut params = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        reader.read_exact(&mut buf)?;
        params.push(f64::from_le_bytes(buf));
    }
    Ok((spec, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::init_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let spec = NetSpec::new(3, vec![7, 5], 4, Activation::Elu).with_layer_norm(true, true);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = init_params(&spec, &mut rng);
        save_params(&path, &spec, &params).unwrap();
        let (spec2, params2) = load_params(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(params.len(), params2.len());
        for (a, b) in params.iter().zip(&params2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.bin");
        std::fs::write(&bad, b"not a checkpoint\n").unwrap();
        assert!(load_params(&bad).is_err());

        let truncated = dir.path().join("trunc.bin");
        let spec = NetSpec::new(2, vec![3], 1, Activation::Tanh);
        let params = vec![0.5; spec.param_count()];
        save_params(&truncated, &spec, &params).unwrap();
        let full = std::fs::read(&truncated).unwrap();
        std::fs::write(&truncated, &full[..full.len() - 4]).unwrap();
        assert!(load_params(&truncated).is_err());
    }
}
