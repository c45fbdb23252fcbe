use ndarray::{Array2, Axis};

use super::{Direction, Gradients, ProjectionNet, Trace};
use crate::error::{Result, ZslError};
use crate::losses::{
    confidence_terms, hubness_terms, supervised_terms, transductive_terms, triplet_terms, unbias_terms,
    LabelSpace, LossWeights, Mode, TransductiveLoss, TripletBatch,
};
use crate::store::SemanticTable;

/// Instances and class prototypes embedded in the common space.
///
/// S2F: points are the raw features and prototypes are the projected
/// semantic vectors of every class in the table. F2S: points are projected
/// features and prototypes are the raw semantic vectors.
#[derive(Clone, Debug)]
pub struct Projection {
    direction: Direction,
    points: Array2<f64>,
    prototypes: Array2<f64>,
    trace: Trace,
}

impl Projection {
    pub fn new(net: &ProjectionNet, table: &SemanticTable, features: &Array2<f64>) -> Result<Self> {
        let dims = net.dims();
        match net.direction {
            Direction::S2F => {
                if features.ncols() != dims.output {
                    return Err(ZslError::arg(format!(
                        "feature dimension {} does not match network output {}",
                        features.ncols(),
                        dims.output
                    )));
                }
                let trace = net.forward_traced(table.vectors())?;
                Ok(Projection {
                    direction: Direction::S2F,
                    points: features.clone(),
                    prototypes: trace.output().clone(),
                    trace,
                })
            }
            Direction::F2S => {
                if table.semantic_dim() != dims.output {
                    return Err(ZslError::arg(format!(
                        "semantic dimension {} does not match network output {}",
                        table.semantic_dim(),
                        dims.output
                    )));
                }
                let trace = net.forward_traced(features)?;
                Ok(Projection {
                    direction: Direction::F2S,
                    points: trace.output().clone(),
                    prototypes: table.vectors().clone(),
                    trace,
                })
            }
        }
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn prototypes(&self) -> &Array2<f64> {
        &self.prototypes
    }

    /// `B x K` squared distances between points and prototypes.
    pub fn sq_dists(&self) -> Array2<f64> {
        crate::losses::sq_dist_matrix(&self.points, &self.prototypes).expect("dimensions checked on construction")
    }

    /// Backpropagates `dL/dD` through the distances and the network.
    pub fn backward(&self, net: &ProjectionNet, d_dists: &Array2<f64>) -> Gradients {
        match self.direction {
            Direction::S2F => {
                // dL/dq_k = -2 sum_i g_ik (p_i - q_k)
                let col = d_dists.sum_axis(Axis(0)).insert_axis(Axis(1));
                let d_protos = (&self.prototypes * &col - d_dists.t().dot(&self.points)) * 2.0;
                net.backward(&self.trace, &d_protos)
            }
            Direction::F2S => {
                // dL/dp_i = 2 sum_k g_ik (p_i - q_k)
                let row = d_dists.sum_axis(Axis(1)).insert_axis(Axis(1));
                let d_points = (&self.points * &row - d_dists.dot(&self.prototypes)) * 2.0;
                net.backward(&self.trace, &d_points)
            }
        }
    }
}

/// A loss bound to a batch, differentiable through [`loss_and_grad`].
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// Supervised regression (S2F or F2S by the network's direction), with ridge.
    Supervised { features: &'a Array2<f64>, labels: &'a [usize], lambda: f64 },
    Triplet { batch: &'a TripletBatch, margin: f64 },
    /// Confidence weight alone (the only path through which the hubness term is differentiated).
    Confidence { anchors: &'a Array2<f64>, label_space: LabelSpace },
    Hubness { anchors: &'a Array2<f64>, label_space: LabelSpace },
    Unbias { anchors: &'a Array2<f64> },
    /// Weighted triplet + hubness + unbiasing terms with fresh anchor selection.
    Transductive { anchors: &'a Array2<f64>, weights: &'a LossWeights, mode: Mode, label_space: LabelSpace },
}

fn finite(value: f64, grads: Gradients, what: &str) -> Result<(f64, Gradients)> {
    if !value.is_finite() {
        return Err(ZslError::Numeric(format!("{what} loss")));
    }
    if let Some(name) = grads.non_finite() {
        return Err(ZslError::Numeric(name.into()));
    }
    Ok((value, grads))
}

/// Loss value and exact analytic gradient with respect to every parameter.
pub fn loss_and_grad(net: &ProjectionNet, table: &SemanticTable, objective: Objective<'_>) -> Result<(f64, Gradients)> {
    match objective {
        Objective::Supervised { features, labels, lambda } => {
            if labels.is_empty() || labels.len() != features.nrows() {
                return Err(ZslError::arg("supervised batch must be nonempty with one label per row"));
            }
            if let Some(&c) = labels.iter().find(|&&c| c >= table.len() || !table.is_seen(c)) {
                return Err(ZslError::arg(format!("label {c} is not a seen class")));
            }
            let proj = Projection::new(net, table, features)?;
            let (value, dd) = supervised_terms(proj.sq_dists().view(), labels);
            let mut grads = proj.backward(net, &dd);
            grads.add_scaled(1.0, &net.l2_grad(lambda));
            finite(value + lambda * net.l2_penalty(), grads, "supervised")
        }
        Objective::Triplet { batch, margin } => {
            if batch.positive.len() != batch.anchors.nrows() {
                return Err(ZslError::arg("triplet batch is inconsistent"));
            }
            let proj = Projection::new(net, table, &batch.anchors)?;
            let (value, dd) = triplet_terms(proj.sq_dists().view(), batch, margin);
            finite(value.value, proj.backward(net, &dd), "triplet")
        }
        Objective::Confidence { anchors, label_space } => {
            let space = label_space.classes(table);
            if space.is_empty() {
                return Err(ZslError::arg("label space is empty"));
            }
            let proj = Projection::new(net, table, anchors)?;
            let d = proj.sq_dists();
            let pseudo: Vec<usize> = d.rows().into_iter().map(|r| crate::losses::argmin_over(r, &space)).collect();
            let (value, dd) = confidence_terms(d.view(), &pseudo, &space);
            finite(value, proj.backward(net, &dd), "confidence")
        }
        Objective::Hubness { anchors, label_space } => {
            let proj = Projection::new(net, table, anchors)?;
            let (parts, dd) = hubness_terms(proj.sq_dists().view(), &label_space.classes(table))?;
            finite(parts.value, proj.backward(net, &dd), "hubness")
        }
        Objective::Unbias { anchors } => {
            table.require_task()?;
            let proj = Projection::new(net, table, anchors)?;
            let (value, dd) = unbias_terms(proj.sq_dists().view(), table);
            finite(value, proj.backward(net, &dd), "unbias")
        }
        Objective::Transductive { anchors, weights, mode, label_space } => {
            let (parts, grads) = transductive_loss_and_grad(net, table, anchors, weights, mode, label_space)?;
            Ok((parts.total, grads))
        }
    }
}

/// Like [`loss_and_grad`] for [`Objective::Transductive`], also returning the components.
pub fn transductive_loss_and_grad(
    net: &ProjectionNet,
    table: &SemanticTable,
    anchors: &Array2<f64>,
    weights: &LossWeights,
    mode: Mode,
    label_space: LabelSpace,
) -> Result<(TransductiveLoss, Gradients)> {
    let proj = Projection::new(net, table, anchors)?;
    let (parts, dd) = transductive_terms(anchors, proj.sq_dists().view(), table, weights, mode, label_space)?;
    let (_, grads) = finite(parts.total, proj.backward(net, &dd), "transductive")?;
    Ok((parts, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Dims, Params};
    use crate::store::{ClassEntry, Partition};

    fn table() -> SemanticTable {
        let classes = (0..3)
            .map(|i| ClassEntry {
                id: format!("c{i}"),
                name: String::new(),
                partition: if i < 2 { Partition::Seen } else { Partition::Unseen },
            })
            .collect();
        SemanticTable::new(classes, Array2::from_shape_fn((3, 2), |(i, j)| (i as f64) - (j as f64) * 0.5)).unwrap()
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let t = table();
        let net = ProjectionNet::init(Direction::S2F, Dims::new(2, 4, 3), Activation::Tanh, 1).unwrap();
        let labels = [0, 1, 1, 0];
        let feats = net.forward_batch(&t.vectors().select(Axis(0), &labels)).unwrap();
        let (v, g) = loss_and_grad(&net, &t, Objective::Supervised { features: &feats, labels: &labels, lambda: 0.0 }).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, Params::zeros(net.dims()));
    }

    #[test]
    fn inactive_hinges_give_zero_gradient() {
        let t = table();
        let net = ProjectionNet::init(Direction::S2F, Dims::new(2, 4, 3), Activation::Tanh, 1).unwrap();
        let protos = net.forward_batch(t.vectors()).unwrap();
        // anchors sitting on the unseen prototype, far from the negative one
        let anchors = protos.select(Axis(0), &[2, 2]);
        let tb = TripletBatch { anchors, positive: vec![2, 2], negative: vec![0, 1], discarded: vec![false, false] };
        let (v, g) = loss_and_grad(&net, &t, Objective::Triplet { batch: &tb, margin: 0.0 }).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, Params::zeros(net.dims()));
    }

    #[test]
    fn unseen_label_in_supervised_batch_is_rejected() {
        let t = table();
        let net = ProjectionNet::init(Direction::S2F, Dims::new(2, 4, 3), Activation::Tanh, 1).unwrap();
        let feats = Array2::zeros((1, 3));
        let r = loss_and_grad(&net, &t, Objective::Supervised { features: &feats, labels: &[2], lambda: 0.0 });
        assert!(matches!(r, Err(ZslError::Argument(_))));
    }

    #[test]
    fn non_finite_input_names_the_failure() {
        let t = table();
        let net = ProjectionNet::init(Direction::S2F, Dims::new(2, 4, 3), Activation::Tanh, 1).unwrap();
        let feats = Array2::from_elem((1, 3), f64::INFINITY);
        let r = loss_and_grad(&net, &t, Objective::Supervised { features: &feats, labels: &[0], lambda: 0.0 });
        assert!(matches!(r, Err(ZslError::Numeric(_))), "{r:?}");
    }
}
