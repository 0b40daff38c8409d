use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{cross_entropy, softmax, Aggregation, Arch, GnnModel, GradientBundle, GraphInput, Mode};
use crate::matrix::{dot, MatRef, Matrix};
use crate::soft_median::{soft_median, soft_median_backward, SoftMedianState};
use crate::{Error, Result};

/// Logits plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    input: GraphInput,
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
    head_pre: Vec<f64>,
    head_act: Vec<f64>,
    drop_scale: Vec<f64>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Gcn {
        z_in: Matrix,
        p: Matrix,
        a_hat: Matrix,
        inv_sqrt_deg: Vec<f64>,
        pre: Matrix,
    },
    GcnSoftMedian {
        z_in: Matrix,
        a_hat: Matrix,
        neighbourhoods: Vec<Vec<usize>>,
        messages: Vec<Matrix>,
        states: Vec<SoftMedianState>,
        temperature: f64,
        pre: Matrix,
    },
    Gin {
        z_in: Matrix,
        h: Matrix,
        pre1: Matrix,
        u: Matrix,
        pre2: Matrix,
    },
    Sage {
        z_in: Matrix,
        mean: Matrix,
        counts: Vec<f64>,
        pre: Matrix,
    },
}

impl LayerCache {
    fn output_pre(&self) -> &Matrix {
        match self {
            LayerCache::Gcn { pre, .. }
            | LayerCache::GcnSoftMedian { pre, .. }
            | LayerCache::Sage { pre, .. } => pre,
            LayerCache::Gin { pre2, .. } => pre2,
        }
    }
}

impl ForwardCache {
    /// Every discrete branch the forward pass took: ReLU on/off states and
    /// soft-median source rows. Finite-difference checks use it to discard
    /// probes that straddle a kink.
    pub fn branch_signature(&self) -> Vec<usize> {
        let mut sig = Vec::new();
        let mut relu = |m: &Matrix| sig.extend(m.as_slice().iter().map(|&x| usize::from(x > 0.0)));
        for layer in &self.layers {
            match layer {
                LayerCache::Gin { pre1, pre2, .. } => {
                    relu(pre1);
                    relu(pre2);
                }
                other => relu(other.output_pre()),
            }
        }
        sig.extend(self.head_pre.iter().map(|&x| usize::from(x > 0.0)));
        for layer in &self.layers {
            if let LayerCache::GcnSoftMedian { states, .. } = layer {
                for s in states {
                    sig.extend(s.sources.iter().flat_map(|src| [src[0].0, src[1].0]));
                }
            }
        }
        sig
    }

    pub fn input(&self) -> &GraphInput {
        &self.input
    }
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for x in out.as_mut_slice() {
        *x = x.max(0.0);
    }
    out
}

fn relu_grad(upstream: &Matrix, pre: &Matrix) -> Matrix {
    let mut out = upstream.clone();
    for (g, &p) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Row vector times matrix.
fn vec_mat(v: &[f64], m: MatRef<'_>) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for (i, &a) in v.iter().enumerate() {
        if a != 0.0 {
            for (o, b) in out.iter_mut().zip(m.row(i)) {
                *o += a * b;
            }
        }
    }
    out
}

fn neighbour_count(a: &Matrix, v: usize) -> usize {
    (0..a.cols()).filter(|&u| u != v && a[(v, u)] > 0.5).count()
}

fn accumulate(d_theta: &mut [f64], offset: usize, values: &[f64]) {
    for (d, x) in d_theta[offset..offset + values.len()].iter_mut().zip(values) {
        *d += x;
    }
}

impl GnnModel {
    pub fn forward(&self, input: &GraphInput, mode: Mode<'_>) -> Result<Forward> {
        input.validate(self.spec.input_dim)?;
        let a = &input.adjacency;
        let n = input.node_count();
        let mut z = input.features.clone();
        let mut layers = Vec::with_capacity(self.spec.layers);
        for k in 0..self.spec.layers {
            let cache = match self.spec.arch {
                Arch::Gcn => self.gcn_forward(k, z, a)?,
                Arch::Gin => {
                    let eps = self.layer_block(k, 0).at(0, 0);
                    let mut h = a.matmul(&z);
                    for (hx, zx) in h.as_mut_slice().iter_mut().zip(z.as_slice()) {
                        *hx += (1.0 + eps) * zx;
                    }
                    let mut pre1 = h.view().matmul(self.layer_block(k, 1));
                    pre1.add_row(self.layer_block(k, 2).data);
                    let u = relu(&pre1);
                    let mut pre2 = u.view().matmul(self.layer_block(k, 3));
                    pre2.add_row(self.layer_block(k, 4).data);
                    LayerCache::Gin {
                        z_in: z,
                        h,
                        pre1,
                        u,
                        pre2,
                    }
                }
                Arch::Sage => {
                    let counts: Vec<f64> = (0..n).map(|v| neighbour_count(a, v).max(1) as f64).collect();
                    let mut mean = a.matmul(&z);
                    for (v, c) in counts.iter().enumerate() {
                        for x in mean.row_mut(v) {
                            *x /= c;
                        }
                    }
                    let mut pre = z.view().matmul(self.layer_block(k, 0));
                    pre.add_assign(&mean.view().matmul(self.layer_block(k, 1)));
                    pre.add_row(self.layer_block(k, 2).data);
                    LayerCache::Sage {
                        z_in: z,
                        mean,
                        counts,
                        pre,
                    }
                }
            };
            z = relu(cache.output_pre());
            layers.push(cache);
        }

        let pooled = z.column_means();
        let mut head_pre = vec_mat(&pooled, self.head_block(0));
        for (x, b) in head_pre.iter_mut().zip(self.head_block(1).data) {
            *x += b;
        }
        let mut drop_scale = vec![1.0; head_pre.len()];
        if let Mode::Train(rng) = mode {
            let p = self.spec.dropout;
            if p > 0.0 {
                for s in &mut drop_scale {
                    *s = if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) };
                }
            }
        }
        let head_act: Vec<f64> = head_pre
            .iter()
            .zip(&drop_scale)
            .map(|(&x, &s)| x.max(0.0) * s)
            .collect();
        let mut logits = vec_mat(&head_act, self.head_block(2));
        for (x, b) in logits.iter_mut().zip(self.head_block(3).data) {
            *x += b;
        }
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        Ok(Forward {
            logits,
            cache: ForwardCache {
                version: self.version,
                input: input.clone(),
                layers,
                pooled,
                head_pre,
                head_act,
                drop_scale,
            },
        })
    }

    fn gcn_forward(&self, k: usize, z: Matrix, a: &Matrix) -> Result<LayerCache> {
        let n = a.rows();
        let mut inv_sqrt_deg = Vec::with_capacity(n);
        for v in 0..n {
            let deg = 1.0 + a.row(v).iter().sum::<f64>();
            if !(deg > 0.0) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "non-positive GCN degree {deg} at node {v}"
                )));
            }
            inv_sqrt_deg.push(1.0 / libm::sqrt(deg));
        }
        let a_hat = Matrix::from_fn(n, n, |v, u| {
            let m = a[(v, u)] + if u == v { 1.0 } else { 0.0 };
            inv_sqrt_deg[v] * m * inv_sqrt_deg[u]
        });
        let p = z.view().matmul(self.layer_block(k, 0));
        let bias = self.layer_block(k, 1).data;
        match self.spec.aggregation {
            Aggregation::Sum => {
                let mut pre = a_hat.matmul(&p);
                pre.add_row(bias);
                Ok(LayerCache::Gcn {
                    z_in: z,
                    p,
                    a_hat,
                    inv_sqrt_deg,
                    pre,
                })
            }
            Aggregation::SoftMedian { temperature } => {
                let h = p.cols();
                let mut pre = Matrix::zeros(n, h);
                let mut neighbourhoods = Vec::with_capacity(n);
                let mut messages = Vec::with_capacity(n);
                let mut states = Vec::with_capacity(n);
                for v in 0..n {
                    let hood: Vec<usize> = core::iter::once(v)
                        .chain((0..n).filter(|&u| u != v && a[(v, u)] > 0.5))
                        .collect();
                    let msgs = Matrix::from_fn(hood.len(), h, |i, c| a_hat[(v, hood[i])] * p[(hood[i], c)]);
                    let state = soft_median(msgs.view(), temperature)?;
                    let size = hood.len() as f64;
                    for (o, (m, b)) in pre.row_mut(v).iter_mut().zip(state.output.iter().zip(bias)) {
                        *o = size * m + b;
                    }
                    neighbourhoods.push(hood);
                    messages.push(msgs);
                    states.push(state);
                }
                Ok(LayerCache::GcnSoftMedian {
                    z_in: z,
                    a_hat,
                    neighbourhoods,
                    messages,
                    states,
                    temperature,
                    pre,
                })
            }
        }
    }

    /// Exact reverse-mode gradients of the cross-entropy of `label`.
    pub fn backward(&self, fwd: &Forward, label: usize) -> Result<GradientBundle> {
        let cache = &fwd.cache;
        if cache.version != self.version || cache.layers.len() != self.spec.layers {
            return Err(Error::StaleCache);
        }
        let loss = cross_entropy(&fwd.logits, label)?;
        let mut d_logits = softmax(&fwd.logits);
        d_logits[label] -= 1.0;

        let mut d_theta = vec![0.0; self.theta.len()];
        let head = self.spec.layers * self.spec.arch.blocks_per_layer();
        let h = self.spec.hidden;

        let w_out = self.head_block(2);
        let mut d_w_out = vec![0.0; h * self.spec.classes];
        for (i, &a) in cache.head_act.iter().enumerate() {
            for (j, &g) in d_logits.iter().enumerate() {
                d_w_out[i * self.spec.classes + j] = a * g;
            }
        }
        accumulate(&mut d_theta, self.layout[head + 2].offset, &d_w_out);
        accumulate(&mut d_theta, self.layout[head + 3].offset, &d_logits);

        let d_head_pre: Vec<f64> = (0..h)
            .map(|i| {
                if cache.head_pre[i] > 0.0 {
                    dot(w_out.row(i), &d_logits) * cache.drop_scale[i]
                } else {
                    0.0
                }
            })
            .collect();
        let w_hidden = self.head_block(0);
        let mut d_w_hidden = vec![0.0; h * h];
        for (i, &x) in cache.pooled.iter().enumerate() {
            for (j, &g) in d_head_pre.iter().enumerate() {
                d_w_hidden[i * h + j] = x * g;
            }
        }
        accumulate(&mut d_theta, self.layout[head].offset, &d_w_hidden);
        accumulate(&mut d_theta, self.layout[head + 1].offset, &d_head_pre);
        let d_pooled: Vec<f64> = (0..h).map(|i| dot(w_hidden.row(i), &d_head_pre)).collect();

        let a = &cache.input.adjacency;
        let n = a.rows();
        let mut dz = Matrix::from_fn(n, h, |_, c| d_pooled[c] / n as f64);
        let mut d_adj = Matrix::zeros(n, n);
        for k in (0..self.spec.layers).rev() {
            dz = self.layer_backward(k, &cache.layers[k], a, dz, &mut d_theta, &mut d_adj);
        }

        let mut sym = Matrix::zeros(n, n);
        if matches!(self.spec.aggregation, Aggregation::Sum) {
            for u in 0..n {
                for v in 0..n {
                    if u != v {
                        sym[(u, v)] = d_adj[(u, v)] + d_adj[(v, u)];
                    }
                }
            }
        }
        Ok(GradientBundle {
            loss,
            d_theta,
            d_features: dz,
            d_adjacency: sym,
        })
    }

    /// Propagates `dz` (gradient w.r.t. the layer output) to the layer input,
    /// accumulating parameter and raw adjacency gradients.
    fn layer_backward(
        &self,
        k: usize,
        cache: &LayerCache,
        a: &Matrix,
        dz: Matrix,
        d_theta: &mut [f64],
        d_adj: &mut Matrix,
    ) -> Matrix {
        let base = k * self.spec.arch.blocks_per_layer();
        let n = a.rows();
        match cache {
            LayerCache::Gcn {
                z_in,
                p,
                a_hat,
                inv_sqrt_deg,
                pre,
            } => {
                let d_pre = relu_grad(&dz, pre);
                accumulate(d_theta, self.layout[base + 1].offset, &d_pre.column_sums());
                let d_p = a_hat.t_matmul(&d_pre);
                // Â_vu = s_v (A_vu + δ_vu) s_u with s = (1 + Σ_u A_vu)^(-1/2).
                let d_a_hat = d_pre.matmul_t(p);
                let mut d_s = vec![0.0; n];
                for v in 0..n {
                    for u in 0..n {
                        let g = d_a_hat[(v, u)];
                        if g == 0.0 {
                            continue;
                        }
                        d_adj[(v, u)] += g * inv_sqrt_deg[v] * inv_sqrt_deg[u];
                        let term = g * a_hat[(v, u)];
                        d_s[v] += term / inv_sqrt_deg[v];
                        d_s[u] += term / inv_sqrt_deg[u];
                    }
                }
                for v in 0..n {
                    // ∂s/∂deg = -½ deg^(-3/2) = -½ s³
                    let s = inv_sqrt_deg[v];
                    let d_deg = -0.5 * s * s * s * d_s[v];
                    for x in d_adj.row_mut(v) {
                        *x += d_deg;
                    }
                }
                let w = self.layer_block(k, 0);
                accumulate(d_theta, self.layout[base].offset, z_in.t_matmul(&d_p).as_slice());
                d_p.view().matmul_t(w)
            }
            LayerCache::GcnSoftMedian {
                z_in,
                a_hat,
                neighbourhoods,
                messages,
                states,
                temperature,
                pre,
            } => {
                let d_pre = relu_grad(&dz, pre);
                accumulate(d_theta, self.layout[base + 1].offset, &d_pre.column_sums());
                let mut d_p = Matrix::zeros(n, self.spec.hidden);
                for v in 0..n {
                    let hood = &neighbourhoods[v];
                    let size = hood.len() as f64;
                    let g: Vec<f64> = d_pre.row(v).iter().map(|x| x * size).collect();
                    let d_msgs = soft_median_backward(messages[v].view(), *temperature, &states[v], &g);
                    for (i, &u) in hood.iter().enumerate() {
                        let w = a_hat[(v, u)];
                        for (o, x) in d_p.row_mut(u).iter_mut().zip(d_msgs.row(i)) {
                            *o += w * x;
                        }
                    }
                }
                let w = self.layer_block(k, 0);
                accumulate(d_theta, self.layout[base].offset, z_in.t_matmul(&d_p).as_slice());
                d_p.view().matmul_t(w)
            }
            LayerCache::Gin {
                z_in,
                h,
                pre1,
                u,
                pre2,
            } => {
                let d_pre2 = relu_grad(&dz, pre2);
                accumulate(d_theta, self.layout[base + 3].offset, u.t_matmul(&d_pre2).as_slice());
                accumulate(d_theta, self.layout[base + 4].offset, &d_pre2.column_sums());
                let d_u = d_pre2.view().matmul_t(self.layer_block(k, 3));
                let d_pre1 = relu_grad(&d_u, pre1);
                accumulate(d_theta, self.layout[base + 1].offset, h.t_matmul(&d_pre1).as_slice());
                accumulate(d_theta, self.layout[base + 2].offset, &d_pre1.column_sums());
                let d_h = d_pre1.view().matmul_t(self.layer_block(k, 1));
                let d_eps = dot(z_in.as_slice(), d_h.as_slice());
                d_theta[self.layout[base].offset] += d_eps;
                let eps = self.layer_block(k, 0).at(0, 0);
                d_adj.add_assign(&d_h.matmul_t(z_in));
                let mut d_z = a.t_matmul(&d_h);
                for (o, x) in d_z.as_mut_slice().iter_mut().zip(d_h.as_slice()) {
                    *o += (1.0 + eps) * x;
                }
                d_z
            }
            LayerCache::Sage {
                z_in,
                mean,
                counts,
                pre,
            } => {
                let d_pre = relu_grad(&dz, pre);
                accumulate(d_theta, self.layout[base].offset, z_in.t_matmul(&d_pre).as_slice());
                accumulate(d_theta, self.layout[base + 1].offset, mean.t_matmul(&d_pre).as_slice());
                accumulate(d_theta, self.layout[base + 2].offset, &d_pre.column_sums());
                let mut d_mean = d_pre.view().matmul_t(self.layer_block(k, 1));
                for (v, c) in counts.iter().enumerate() {
                    for x in d_mean.row_mut(v) {
                        *x /= c;
                    }
                }
                d_adj.add_assign(&d_mean.matmul_t(z_in));
                let mut d_z = d_pre.view().matmul_t(self.layer_block(k, 0));
                d_z.add_assign(&a.t_matmul(&d_mean));
                d_z
            }
        }
    }
}
