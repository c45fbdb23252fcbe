//! JSON checkpoint: `{direction, dims, activation, layers, adam?}`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Activation, AdamState, Dims, Direction, Params, ProjectionNet};
use crate::error::{Result, ZslError};
use crate::store::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AdamRecord {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    direction: Direction,
    dims: [usize; 3],
    activation: Activation,
    layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adam: Option<AdamRecord>,
}

fn to_layers(p: &Params) -> Vec<Layer> {
    let rows = |w: &Array2<f64>| w.rows().into_iter().map(|r| r.to_vec()).collect();
    vec![
        Layer { weights: rows(&p.w1), bias: p.b1.to_vec() },
        Layer { weights: rows(&p.w2), bias: p.b2.to_vec() },
    ]
}

fn from_layers(layers: &[Layer], dims: Dims) -> Result<Params> {
    let [l1, l2] = layers else {
        return Err(ZslError::Validation(format!("checkpoint must have 2 layers, found {}", layers.len())));
    };
    let matrix = |l: &Layer, r: usize, c: usize, name: &str| -> Result<Array2<f64>> {
        if l.weights.len() != r || l.weights.iter().any(|row| row.len() != c) {
            return Err(ZslError::Validation(format!("checkpoint {name} is not {r}x{c}")));
        }
        Ok(Array2::from_shape_vec((r, c), l.weights.concat()).expect("checked"))
    };
    let vector = |l: &Layer, n: usize, name: &str| -> Result<Array1<f64>> {
        if l.bias.len() != n {
            return Err(ZslError::Validation(format!("checkpoint {name} has length {}, expected {n}", l.bias.len())));
        }
        Ok(Array1::from(l.bias.clone()))
    };
    Ok(Params {
        w1: matrix(l1, dims.input, dims.hidden, "w1")?,
        b1: vector(l1, dims.hidden, "b1")?,
        w2: matrix(l2, dims.hidden, dims.output, "w2")?,
        b2: vector(l2, dims.output, "b2")?,
    })
}

impl Checkpoint {
    pub fn new(net: &ProjectionNet, adam: Option<&AdamState>) -> Self {
        let d = net.dims();
        Checkpoint {
            direction: net.direction,
            dims: [d.input, d.hidden, d.output],
            activation: net.activation,
            layers: to_layers(&net.params),
            adam: adam.map(|s| AdamRecord {
                lr: s.lr,
                beta1: s.beta1,
                beta2: s.beta2,
                eps: s.eps,
                t: s.t,
                m: to_layers(&s.m),
                v: to_layers(&s.v),
            }),
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn net(&self) -> Result<ProjectionNet> {
        let params = from_layers(&self.layers, self.dims())?;
        ProjectionNet::from_params(self.direction, self.activation, params)
    }

    pub fn adam(&self) -> Result<Option<AdamState>> {
        let Some(a) = &self.adam else { return Ok(None) };
        Ok(Some(AdamState {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            t: a.t,
            m: from_layers(&a.m, self.dims())?,
            v: from_layers(&a.v, self.dims())?,
        }))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ZslError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::adam_step;

    #[test]
    fn round_trip_is_exact() {
        let mut net = ProjectionNet::init(Direction::S2F, Dims::new(4, 6, 3), Activation::Tanh, 11).unwrap();
        net.params.b2[1] = 1.0 / 3.0;
        net.params.w1[[0, 0]] = -1e-300;
        let mut st = AdamState::new(&net, 1e-4);
        let mut g = Params::zeros(net.dims());
        g.w2.fill(0.123456789);
        adam_step(&mut net, &g, &mut st).unwrap();
        let ck = Checkpoint::new(&net, Some(&st));
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back.net().unwrap(), net);
        assert_eq!(back.adam().unwrap().unwrap(), st);
        assert_eq!(back.to_json().unwrap(), ck.to_json().unwrap());
    }

    #[test]
    fn malformed_shapes_are_rejected() {
        let net = ProjectionNet::init(Direction::F2S, Dims::new(2, 3, 2), Activation::Relu, 0).unwrap();
        let mut ck = Checkpoint::new(&net, None);
        ck.dims = [2, 4, 2];
        assert!(ck.net().is_err());
    }
}
