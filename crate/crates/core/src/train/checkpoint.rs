//! Checkpoint container: a text manifest terminated by a `data` line, then
//! little-endian `f32` parameters followed by the feature mean.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::preprocess::{TARGET_OFFSET, TARGET_SCALE};
use crate::error::{Error, Result};
use crate::nn::{Model, NetConfig};
use crate::tensor::{Rng, Scalar};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "naimishnet-checkpoint";
const NAIMISHNET_PARAMS: usize = 7_488_962;

/// Best weights of one keypoint model together with what is needed to use them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub keypoint: String,
    pub net: NetConfig,
    pub manifest: Vec<(String, Vec<usize>)>,
    pub values: Vec<f32>,
    /// Per-pixel training mean, subtracted from normalized images.
    pub mean: Vec<f32>,
    pub target_scale: f64,
    pub target_offset: f64,
    pub seed: u64,
    pub config: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn new(
        keypoint: String,
        net: NetConfig,
        values: Vec<f32>,
        mean: Vec<f32>,
        seed: u64,
        config: Vec<(String, String)>,
    ) -> Result<Self> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            keypoint,
            manifest: net.param_manifest()?,
            net,
            values,
            mean,
            target_scale: TARGET_SCALE,
            target_offset: TARGET_OFFSET,
            seed,
            config,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    /// Snapshot of a model's current parameters.
    pub fn from_model<T: Scalar>(
        keypoint: &str,
        model: &Model<T>,
        mean: Vec<f32>,
        seed: u64,
        config: Vec<(String, String)>,
    ) -> Result<Self> {
        let values = model.export_params().into_iter().map(|v| v as f32).collect();
        Checkpoint::new(keypoint.to_string(), model.config().clone(), values, mean, seed, config)
    }

    /// A checkpoint whose every parameter is zero; the network then outputs 0.
    pub fn zeros(keypoint: &str, net: NetConfig) -> Result<Self> {
        let total = manifest_total(&net.param_manifest()?);
        let pixels = net.input_size * net.input_size;
        Checkpoint::new(
            keypoint.to_string(),
            net,
            vec![0.0; total],
            vec![0.0; pixels],
            0,
            Vec::new(),
        )
    }

    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        let mut model = Model::<T>::build(self.net.clone(), &mut Rng::new(self.seed))?;
        let values: Vec<f64> = self.values.iter().map(|&v| f64::from(v)).collect();
        model.import_params(&values)?;
        Ok(model)
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Checkpoint(msg));
        if self.version != CHECKPOINT_VERSION {
            return bad(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            ));
        }
        let total = manifest_total(&self.manifest);
        if self.net == NetConfig::naimishnet() && total != NAIMISHNET_PARAMS {
            return bad(format!(
                "NaimishNet manifest holds {total} values, expected {NAIMISHNET_PARAMS}"
            ));
        }
        if self.manifest != self.net.param_manifest()? {
            return bad("parameter manifest does not match the network configuration".into());
        }
        if self.values.len() != total {
            return bad(format!(
                "manifest describes {total} values, found {}",
                self.values.len()
            ));
        }
        let pixels = self.net.input_size * self.net.input_size;
        if self.mean.len() != pixels {
            return bad(format!(
                "feature mean has {} entries, expected {pixels}",
                self.mean.len()
            ));
        }
        if !(self.target_scale.is_finite() && self.target_scale != 0.0 && self.target_offset.is_finite()) {
            return bad("normalization constants must be finite with a nonzero scale".into());
        }
        for token in std::iter::once(&self.keypoint).chain(self.config.iter().flat_map(|(k, v)| [k, v])) {
            if token.is_empty() || token.contains(char::is_whitespace) {
                return bad(format!("manifest token {token:?} is empty or contains whitespace"));
            }
        }
        Ok(())
    }
}

fn manifest_total(manifest: &[(String, Vec<usize>)]) -> usize {
    manifest.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}

fn join<D: ToString>(items: &[D]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    ckpt.validate()?;
    let net = &ckpt.net;
    let mut head = String::new();
    let _ = writeln!(head, "{MAGIC}");
    let _ = writeln!(head, "version {}", ckpt.version);
    let _ = writeln!(head, "keypoint {}", ckpt.keypoint);
    let _ = writeln!(head, "seed {}", ckpt.seed);
    let _ = writeln!(head, "normalization {} {}", ckpt.target_scale, ckpt.target_offset);
    let _ = writeln!(head, "net input_size {}", net.input_size);
    let _ = writeln!(head, "net filters {}", join(&net.filters));
    let _ = writeln!(head, "net kernels {}", join(&net.kernels));
    let _ = writeln!(head, "net dense_units {}", join(&net.dense_units));
    let _ = writeln!(head, "net outputs {}", net.outputs);
    let _ = writeln!(head, "net dropout {}", join(&net.dropout));
    let _ = writeln!(head, "net conv_init {}", net.conv_init);
    for (k, v) in &ckpt.config {
        let _ = writeln!(head, "config {k} {v}");
    }
    for (name, shape) in &ckpt.manifest {
        let _ = writeln!(head, "param {name} {}", join(shape));
    }
    let _ = writeln!(head, "mean {}", ckpt.mean.len());
    let _ = writeln!(head, "values {}", ckpt.values.len());
    head.push_str("data\n");

    let mut out = head.into_bytes();
    out.reserve(4 * (ckpt.values.len() + ckpt.mean.len()));
    for v in ckpt.values.iter().chain(&ckpt.mean) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse<V: std::str::FromStr>(token: &str, what: &str) -> Result<V> {
    token
        .parse()
        .map_err(|_| Error::Checkpoint(format!("bad {what} {token:?}")))
}

fn parse_list<V: std::str::FromStr, const N: usize>(tokens: &[&str], what: &str) -> Result<[V; N]> {
    if tokens.len() != N {
        return Err(Error::Checkpoint(format!(
            "{what} needs {N} values, found {}",
            tokens.len()
        )));
    }
    let parsed = tokens.iter().map(|t| parse(t, what)).collect::<Result<Vec<V>>>()?;
    parsed
        .try_into()
        .map_err(|_| Error::Checkpoint(format!("{what} needs {N} values")))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let err = |msg: String| Error::Checkpoint(msg);
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err("manifest ends before the data line".into()))?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| err("manifest is not UTF-8".into()))?;
        pos += end + 1;
        if line == "data" {
            break;
        }
        lines.push(line);
    }
    if lines.first() != Some(&MAGIC) {
        return Err(err("not a naimishnet checkpoint".into()));
    }

    let mut version = None;
    let mut keypoint = None;
    let mut seed = None;
    let mut normalization = None;
    let mut net = NetConfig::naimishnet();
    let mut config = Vec::new();
    let mut manifest = Vec::new();
    let mut mean_len = None;
    let mut value_len = None;
    for line in &lines[1..] {
        let tokens: Vec<&str> = line.split(' ').collect();
        match tokens.as_slice() {
            ["version", v] => version = Some(parse::<u32>(v, "version")?),
            ["keypoint", k] => keypoint = Some(k.to_string()),
            ["seed", s] => seed = Some(parse::<u64>(s, "seed")?),
            ["normalization", s, o] => normalization = Some((parse(s, "scale")?, parse(o, "offset")?)),
            ["net", "input_size", v] => net.input_size = parse(v, "input size")?,
            ["net", "filters", rest @ ..] => net.filters = parse_list(rest, "filters")?,
            ["net", "kernels", rest @ ..] => net.kernels = parse_list(rest, "kernels")?,
            ["net", "dense_units", rest @ ..] => net.dense_units = parse_list(rest, "dense units")?,
            ["net", "outputs", v] => net.outputs = parse(v, "outputs")?,
            ["net", "dropout", rest @ ..] => net.dropout = parse_list(rest, "dropout")?,
            ["net", "conv_init", v] => net.conv_init = parse(v, "conv init")?,
            ["config", k, v] => config.push((k.to_string(), v.to_string())),
            ["param", name, dims @ ..] => {
                let shape = dims
                    .iter()
                    .map(|d| parse(d, "dimension"))
                    .collect::<Result<Vec<usize>>>()?;
                manifest.push((name.to_string(), shape));
            }
            ["mean", n] => mean_len = Some(parse::<usize>(n, "mean length")?),
            ["values", n] => value_len = Some(parse::<usize>(n, "value count")?),
            _ => return Err(err(format!("unrecognized manifest line {line:?}"))),
        }
    }
    let missing = |field: &str| err(format!("manifest lacks {field}"));
    let version = version.ok_or_else(|| missing("version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(err(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let value_len = value_len.ok_or_else(|| missing("values"))?;
    let mean_len = mean_len.ok_or_else(|| missing("mean"))?;
    let total = manifest_total(&manifest);
    if total != value_len {
        return Err(err(format!(
            "manifest shapes hold {total} values but the header declares {value_len}"
        )));
    }

    let data = &bytes[pos..];
    let expected = 4 * (value_len + mean_len);
    if data.len() < expected {
        return Err(err(format!(
            "truncated: expected {expected} data bytes, found {} ({} missing)",
            data.len(),
            expected - data.len()
        )));
    }
    if data.len() > expected {
        return Err(err(format!(
            "{} unexpected trailing bytes after {expected} data bytes",
            data.len() - expected
        )));
    }
    let mut floats = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let values: Vec<f32> = floats.by_ref().take(value_len).collect();
    let mean: Vec<f32> = floats.collect();

    let (target_scale, target_offset) = normalization.ok_or_else(|| missing("normalization"))?;
    let ckpt = Checkpoint {
        version,
        keypoint: keypoint.ok_or_else(|| missing("keypoint"))?,
        net,
        manifest,
        values,
        mean,
        target_scale,
        target_offset,
        seed: seed.ok_or_else(|| missing("seed"))?,
        config,
    };
    ckpt.validate()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reduced_checkpoint() -> Checkpoint {
        let net = NetConfig::reduced();
        let model = Model::<f32>::build(net.clone(), &mut Rng::new(5)).unwrap();
        let mean = (0..28 * 28).map(|i| i as f32 / 1000.0).collect();
        let config = vec![("batch_size".into(), "128".into())];
        Checkpoint::from_model("nose_tip", &model, mean, 5, config).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let ckpt = reduced_checkpoint();
        let bytes = write_checkpoint(&ckpt).unwrap();
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(write_checkpoint(&back).unwrap(), bytes);
        assert_eq!(back.config_value("batch_size"), Some("128"));
    }

    #[test]
    fn truncation_names_the_deficit() {
        let bytes = write_checkpoint(&reduced_checkpoint()).unwrap();
        let msg = read_checkpoint(&bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(msg.contains("1 missing"), "{msg}");
        let mut long = bytes.clone();
        long.push(0);
        assert!(read_checkpoint(&long).is_err());
    }

    #[test]
    fn version_and_manifest_are_checked() {
        let bytes = write_checkpoint(&reduced_checkpoint()).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let v2 = text.replacen("version 1", "version 2", 1);
        let msg = read_checkpoint(v2.as_bytes()).unwrap_err().to_string();
        assert!(msg.contains("version 2"), "{msg}");

        let split = bytes.windows(6).position(|w| w == b"\ndata\n").unwrap() + 6;
        let head = std::str::from_utf8(&bytes[..split]).unwrap();
        let tampered = head.replacen("param Dense3.bias 2", "param Dense3.bias 3", 1);
        let mut tampered = tampered.into_bytes();
        tampered.extend_from_slice(&bytes[split..]);
        assert!(read_checkpoint(&tampered).is_err());
    }

    #[test]
    fn naimishnet_total_is_enforced() {
        let mut ckpt = Checkpoint::zeros("left_eye_center", NetConfig::naimishnet()).unwrap();
        assert_eq!(ckpt.values.len(), 7_488_962);
        ckpt.manifest[13].1 = vec![3];
        ckpt.values.push(0.0);
        let msg = write_checkpoint(&ckpt).unwrap_err().to_string();
        assert!(msg.contains("7488963"), "{msg}");
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(read_checkpoint(b"hello\ndata\n").is_err());
        assert!(read_checkpoint(b"no newline").is_err());
    }
}
