//! Model persistence: a short text header carrying the geometry and
//! normalizer constants, a `---` separator, then the flattened parameters
//! as little-endian f64. The header keeps files inspectable; the binary
//! payload keeps the round trip bit-exact.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{invalid, Error, Result};
use crate::multiplicity::{MlpModel, Normalizer};

const MAGIC: &str = "gfra-model v1";
const SEPARATOR: &str = "---";

pub fn save_model(model: &MlpModel<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<MlpModel<f64>> {
    let bytes = std::fs::read(path)?;
    model_from_bytes(&bytes)
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn model_to_bytes(model: &MlpModel<f64>) -> Vec<u8> {
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!(
        "m={} s={} t_max={}\n",
        model.input_dim(),
        model.antennas_per_ap,
        model.t_max
    ));
    header.push_str(&format!("layers={}\n", join_usize(&model.layer_sizes)));
    match &model.normalizer {
        Normalizer::DbStandardize { floor_db, mean, std } => {
            header.push_str("normalizer=db_standardize\n");
            header.push_str(&format!("floor_db={floor_db}\n"));
            header.push_str(&format!("mean={}\n", join_floats(mean)));
            header.push_str(&format!("std={}\n", join_floats(std)));
        }
        Normalizer::MinMax { min, max } => {
            header.push_str("normalizer=min_max\n");
            header.push_str(&format!("min={}\n", join_floats(min)));
            header.push_str(&format!("max={}\n", join_floats(max)));
        }
    }
    header.push_str(&format!("params={}\n", model.param_count()));
    header.push_str(SEPARATOR);
    header.push('\n');

    let flat = model.flat_params();
    let mut bytes = header.into_bytes();
    bytes.reserve(flat.len() * 8);
    for x in flat {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    bytes
}

/// One `key=value` header line; the expected key is part of the format.
fn take_line<'a>(lines: &mut std::str::Lines<'a>, key: &str) -> Result<&'a str> {
    let line = lines
        .next()
        .ok_or_else(|| Error::Format(format!("model header ended before '{key}'")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| Error::Format(format!("expected model header line '{key}=...', got '{line}'")))
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad {what} entry '{t}'")))
        })
        .collect()
}

fn parse_float_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad {what} entry '{t}'")))
        })
        .collect()
}

fn parse_float(text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("bad {what} value '{text}'")))
}

pub(crate) fn model_from_bytes(bytes: &[u8]) -> Result<MlpModel<f64>> {
    // The header is ASCII up to the separator line; find it on raw bytes so
    // a corrupt payload cannot break UTF-8 decoding of the header.
    let sep = format!("{SEPARATOR}\n");
    let sep_bytes = sep.as_bytes();
    let header_end = (0..bytes.len().saturating_sub(sep_bytes.len() - 1))
        .find(|&i| &bytes[i..i + sep_bytes.len()] == sep_bytes)
        .ok_or_else(|| Error::Format("model file has no '---' separator".into()))?;
    let payload_start = header_end + sep_bytes.len();
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::Format("model header is not valid UTF-8".into()))?;

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("");
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad model magic: expected '{MAGIC}', got '{magic}'"
        )));
    }
    let geom = lines
        .next()
        .ok_or_else(|| Error::Format("model header ended before the geometry line".into()))?;
    let mut m = None;
    let mut s = None;
    let mut t_max = None;
    for part in geom.split_whitespace() {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad geometry field '{part}'")))?;
        let val: usize = v
            .parse()
            .map_err(|_| Error::Format(format!("bad geometry value '{part}'")))?;
        match k {
            "m" => m = Some(val),
            "s" => s = Some(val),
            "t_max" => t_max = Some(val),
            other => return Err(Error::Format(format!("unknown geometry field '{other}'"))),
        }
    }
    let (m, s, t_max) = match (m, s, t_max) {
        (Some(m), Some(s), Some(t)) => (m, s, t),
        _ => return Err(Error::Format("geometry line must carry m, s and t_max".into())),
    };

    let layer_sizes = parse_usize_list(take_line(&mut lines, "layers")?, "layer size")?;
    if layer_sizes.len() < 2 {
        return Err(Error::Format("model needs input and output layers".into()));
    }
    if layer_sizes[0] != m {
        return Err(Error::Format(format!(
            "layer widths start at {} but the geometry says m={m}",
            layer_sizes[0]
        )));
    }
    if *layer_sizes.last().unwrap() != t_max + 1 {
        return Err(Error::Format(format!(
            "output width {} does not match t_max={t_max}",
            layer_sizes.last().unwrap()
        )));
    }

    let norm_line = lines
        .next()
        .ok_or_else(|| Error::Format("model header ended before the normalizer".into()))?;
    let normalizer = match norm_line {
        "normalizer=db_standardize" => {
            let floor_db = parse_float(take_line(&mut lines, "floor_db")?, "floor_db")?;
            let mean = parse_float_list(take_line(&mut lines, "mean")?, "mean")?;
            let std = parse_float_list(take_line(&mut lines, "std")?, "std")?;
            if mean.len() != m || std.len() != m {
                return Err(Error::Format(format!(
                    "normalizer constants have {} / {} entries for m={m}",
                    mean.len(),
                    std.len()
                )));
            }
            Normalizer::DbStandardize { floor_db, mean, std }
        }
        "normalizer=min_max" => {
            let min = parse_float_list(take_line(&mut lines, "min")?, "min")?;
            let max = parse_float_list(take_line(&mut lines, "max")?, "max")?;
            if min.len() != m || max.len() != m {
                return Err(Error::Format(format!(
                    "normalizer constants have {} / {} entries for m={m}",
                    min.len(),
                    max.len()
                )));
            }
            Normalizer::MinMax { min, max }
        }
        other => {
            return Err(Error::Format(format!(
                "unknown normalizer line '{other}'"
            )))
        }
    };

    let param_count: usize = take_line(&mut lines, "params")?
        .trim()
        .parse()
        .map_err(|_| Error::Format("bad params count".into()))?;
    if let Some(extra) = lines.next() {
        return Err(Error::Format(format!(
            "unexpected model header line '{extra}'"
        )));
    }

    let expected: usize = layer_sizes
        .windows(2)
        .map(|w| w[1] * w[0] + w[1])
        .sum();
    if param_count != expected {
        return Err(Error::Format(format!(
            "params={param_count} but the layer widths imply {expected}"
        )));
    }
    let payload = &bytes[payload_start..];
    let expected_bytes = expected * 8;
    if payload.len() != expected_bytes {
        return Err(Error::Format(format!(
            "model payload holds {} bytes, expected {}; file truncated or padded at byte {}",
            payload.len(),
            expected_bytes,
            payload_start + payload.len().min(expected_bytes)
        )));
    }

    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    let mut off = 0usize;
    let next = |n: usize, off: &mut usize| -> Vec<f64> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let b: [u8; 8] = payload[*off..*off + 8].try_into().unwrap();
            v.push(f64::from_le_bytes(b));
            *off += 8;
        }
        v
    };
    for w in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let wv = next(fan_out * fan_in, &mut off);
        if wv.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("model weights contain non-finite values".into()));
        }
        weights.push(Array2::from_shape_vec((fan_out, fan_in), wv).unwrap());
        let bv = next(fan_out, &mut off);
        if bv.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("model biases contain non-finite values".into()));
        }
        biases.push(Array1::from_vec(bv));
    }

    Ok(MlpModel {
        layer_sizes,
        weights,
        biases,
        normalizer,
        t_max,
        antennas_per_ap: s,
    })
}

/// Use-site check that a loaded model matches the configured deployment.
pub(crate) fn check_model_matches(
    model: &MlpModel<f64>,
    num_aps: usize,
    antennas_per_ap: usize,
    t_max: usize,
) -> Result<()> {
    if model.input_dim() != num_aps {
        return Err(invalid(format!(
            "model expects {} APs but the config deploys {num_aps}",
            model.input_dim()
        )));
    }
    if model.antennas_per_ap != antennas_per_ap {
        return Err(invalid(format!(
            "model was trained with {} antennas per AP, config has {antennas_per_ap}",
            model.antennas_per_ap
        )));
    }
    if model.t_max != t_max {
        return Err(invalid(format!(
            "model classifies up to {} colliders, config says {t_max}",
            model.t_max
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplicity::NormalizerKind;
    use ndarray::ArrayView2;
    use rand::Rng as _;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_model(rng: &mut ChaCha8Rng) -> MlpModel<f64> {
        let m = 6;
        let rows: Vec<f64> = (0..4 * m).map(|_| rng.gen_range(0.01..2.0)).collect();
        let mut sorted = rows.clone();
        for r in sorted.chunks_mut(m) {
            r.sort_by(|a, b| b.partial_cmp(a).unwrap());
        }
        let view = ArrayView2::from_shape((4, m), &sorted).unwrap();
        let norm = Normalizer::fit(NormalizerKind::DbStandardize, view, -250.0).unwrap();
        MlpModel::init(m, &[5, 3], 2, norm, 2, rng).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = small_model(&mut rng);
        let bytes = model_to_bytes(&model);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back.layer_sizes, model.layer_sizes);
        assert_eq!(back.t_max, model.t_max);
        assert_eq!(back.antennas_per_ap, model.antennas_per_ap);
        assert_eq!(back.normalizer, model.normalizer);
        let a = model.flat_params();
        let b = back.flat_params();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = small_model(&mut rng);
        let back = model_from_bytes(&model_to_bytes(&model)).unwrap();
        for _ in 0..1000 {
            let e: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..3.0)).collect();
            assert_eq!(model.predict(&e), back.predict(&e));
        }
    }

    #[test]
    fn min_max_normalizer_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let norm = Normalizer::MinMax {
            min: vec![0.125, 0.0, -3.5, 1.0],
            max: vec![7.75, 2.0, 4.25, 1.5],
        };
        let model = MlpModel::init(4, &[3], 1, norm, 1, &mut rng).unwrap();
        let back = model_from_bytes(&model_to_bytes(&model)).unwrap();
        assert_eq!(back.normalizer, model.normalizer);
    }

    #[test]
    fn file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = small_model(&mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.gfra");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.flat_params(), model.flat_params());
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut bytes = model_to_bytes(&small_model(&mut rng));
        bytes[0] = b'x';
        let err = model_from_bytes(&bytes).unwrap_err();
        assert_eq!(err.category(), "format-error");
    }

    #[test]
    fn truncated_payload_names_the_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let bytes = model_to_bytes(&small_model(&mut rng));
        let cut = bytes.len() - 9;
        let err = model_from_bytes(&bytes[..cut]).unwrap_err();
        assert_eq!(err.category(), "format-error");
        let msg = err.to_string();
        assert!(msg.contains("byte"), "message should name an offset: {msg}");
    }

    #[test]
    fn missing_separator_is_a_format_error() {
        let err = model_from_bytes(b"gfra-model v1\nm=4 s=1 t_max=2\n").unwrap_err();
        assert_eq!(err.category(), "format-error");
        assert!(err.to_string().contains("separator"));
    }

    #[test]
    fn inconsistent_layer_widths_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let bytes = model_to_bytes(&small_model(&mut rng));
        let text = String::from_utf8_lossy(&bytes[..200]).to_string();
        let bad = text.replace("layers=6,", "layers=7,");
        let mut out = bad.into_bytes();
        out.extend_from_slice(&bytes[200..]);
        let err = model_from_bytes(&out).unwrap_err();
        assert_eq!(err.category(), "format-error");
    }

    #[test]
    fn geometry_mismatch_at_use_site_is_invalid_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let model = small_model(&mut rng);
        assert!(check_model_matches(&model, 6, 2, 2).is_ok());
        for (m, s, t) in [(7, 2, 2), (6, 1, 2), (6, 2, 3)] {
            let err = check_model_matches(&model, m, s, t).unwrap_err();
            assert_eq!(err.category(), "invalid-argument");
        }
    }
}
