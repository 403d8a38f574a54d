use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, NetworkParams};
use crate::error::{Error, Result};
use crate::json;
use crate::matrix::Matrix;

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkRecord {
    format_version: u32,
    architecture: Vec<usize>,
    activation: Activation,
    layers: Vec<LayerRecord>,
}

impl From<&NetworkParams> for NetworkRecord {
    fn from(params: &NetworkParams) -> Self {
        NetworkRecord {
            format_version: NETWORK_FORMAT_VERSION,
            architecture: params.architecture().widths().to_vec(),
            activation: params.activation(),
            layers: params
                .weights()
                .iter()
                .map(|w| LayerRecord {
                    rows: w.rows(),
                    cols: w.cols(),
                    data: w.as_slice().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkRecord> for NetworkParams {
    type Error = Error;

    fn try_from(record: NetworkRecord) -> Result<Self> {
        if record.format_version != NETWORK_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {} (expected {NETWORK_FORMAT_VERSION})",
                record.format_version
            )));
        }
        let arch = Architecture::new(record.architecture)?;
        if record.layers.len() != arch.depth() {
            return Err(Error::Format(format!(
                "architecture {arch} declares {} layers, file has {}",
                arch.depth(),
                record.layers.len()
            )));
        }
        let mut weights = Vec::with_capacity(record.layers.len());
        for (k, layer) in record.layers.into_iter().enumerate() {
            let (r, c) = arch.layer_shape(k + 1);
            if (layer.rows, layer.cols) != (r, c) {
                return Err(Error::ShapeMismatch {
                    expected_rows: r,
                    expected_cols: c,
                    rows: layer.rows,
                    cols: layer.cols,
                });
            }
            if layer.data.len() != r * c {
                return Err(Error::Format(format!(
                    "layer {} declares {r}x{c} but carries {} values",
                    k + 1,
                    layer.data.len()
                )));
            }
            weights.push(Matrix::from_vec(r, c, layer.data)?);
        }
        NetworkParams::new(arch, weights, record.activation)
    }
}

impl Serialize for NetworkParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let record = NetworkRecord::deserialize(d)?;
        NetworkParams::try_from(record).map_err(serde::de::Error::custom)
    }
}

pub fn network_to_json(params: &NetworkParams) -> Result<String> {
    json::to_string(params)
}

pub fn network_from_json(text: &str) -> Result<NetworkParams> {
    let record: NetworkRecord = serde_json::from_str(text)?;
    NetworkParams::try_from(record)
}

pub fn save_network(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, network_to_json(params)?)?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkParams> {
    network_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::build_network;
    use proptest::prelude::*;

    #[test]
    fn wrong_shape_is_rejected() {
        let text = r#"{"format_version":1,"architecture":[2,3,1],"activation":"tanh",
            "layers":[{"rows":3,"cols":2,"data":[1,2,3,4,5,6]},{"rows":3,"cols":1,"data":[1,2,3]}]}"#;
        assert!(matches!(network_from_json(text), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let text = r#"{"format_version":2,"architecture":[1,1],"activation":"tanh",
            "layers":[{"rows":1,"cols":1,"data":[1]}]}"#;
        assert!(matches!(network_from_json(text), Err(Error::Format(_))));
    }

    #[test]
    fn short_data_is_rejected() {
        let text = r#"{"format_version":1,"architecture":[1,2],"activation":"tanh",
            "layers":[{"rows":1,"cols":2,"data":[1]}]}"#;
        assert!(network_from_json(text).is_err());
    }

    #[test]
    fn malformed_json_is_rejected() {
        assert!(matches!(network_from_json("{not json"), Err(Error::Json(_))));
    }

    #[test]
    fn sample_document_loads() {
        let text = include_str!("../../../../docs/sample_network.json");
        let p = network_from_json(text).unwrap();
        assert_eq!(p.architecture().widths(), &[2, 3, 1]);
        assert_eq!(p.activation(), Activation::Tanh);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let p = build_network(&Architecture::new(vec![3, 5, 2]).unwrap(), Activation::Relu, 0.7, 2).unwrap();
        save_network(&p, &path).unwrap();
        assert_eq!(load_network(&path).unwrap(), p);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), scale in 1e-6f64..1e3) {
            let arch = Architecture::new(vec![2, 4, 3, 1]).unwrap();
            let p = build_network(&arch, Activation::Tanh, scale, seed).unwrap();
            let q = network_from_json(&network_to_json(&p).unwrap()).unwrap();
            for (a, b) in p.weights().iter().zip(q.weights()) {
                let ab: Vec<u64> = a.as_slice().iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u64> = b.as_slice().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }
}
