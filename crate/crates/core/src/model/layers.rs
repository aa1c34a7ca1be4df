use super::linalg::{add_into, axpy, dot, matvec_acc, matvec_t_acc, outer_acc, scaled};
use super::{AttentionWeights, ModelKind, PhiMode, Real, SageWeights};

/// Intermediates of one relation layer.
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    pub neighbors: usize,
    /// Aggregated neighbors (Sage only).
    pub agg: Vec<T>,
    /// Pre-activation (Sage only).
    pub pre: Vec<T>,
}

/// `h_{v,r}^k` from the center and its neighbors under one relation.
///
/// LightGCN averages neighbors without transform; Sage computes
/// `ReLU(W_self h + W_neigh AGG(neighbors) + b)`. No neighbors aggregate to
/// the zero vector.
pub fn relation_layer<T: Real>(
    kind: ModelKind,
    center: &[T],
    neighbors: &[&[T]],
    sage: Option<&SageWeights<T>>,
) -> (Vec<T>, LayerCache<T>) {
    let d = center.len();
    let n = neighbors.len();
    let mut agg = vec![T::zero(); d];
    for h in neighbors {
        add_into(h, &mut agg);
    }
    let mean_scale = if n > 0 { T::one() / T::of(n as f64) } else { T::zero() };
    match kind {
        ModelKind::LightGcn => {
            for x in &mut agg {
                *x *= mean_scale;
            }
            (agg, LayerCache { neighbors: n, agg: Vec::new(), pre: Vec::new() })
        }
        ModelKind::SageMean | ModelKind::SageSum => {
            if kind == ModelKind::SageMean {
                for x in &mut agg {
                    *x *= mean_scale;
                }
            }
            let w = sage.expect("sage layer requires weights");
            let mut pre = w.bias.clone();
            matvec_acc(&w.w_self, center, &mut pre);
            matvec_acc(&w.w_neigh, &agg, &mut pre);
            let out = pre.iter().map(|&z| z.max(T::zero())).collect();
            (out, LayerCache { neighbors: n, agg, pre })
        }
        ModelKind::WalkOnly => panic!("walk-only model has no relation layers"),
    }
}

/// Returns `(grad wrt center, grad wrt each neighbor)`; every neighbor
/// receives the same gradient. Sage weight gradients accumulate into `grad`.
pub fn relation_layer_backward<T: Real>(
    kind: ModelKind,
    g_out: &[T],
    center: &[T],
    cache: &LayerCache<T>,
    sage: Option<&SageWeights<T>>,
    grad: Option<&mut SageWeights<T>>,
) -> (Option<Vec<T>>, Vec<T>) {
    let d = g_out.len();
    let n = cache.neighbors;
    let mean_scale = if n > 0 { T::one() / T::of(n as f64) } else { T::zero() };
    match kind {
        ModelKind::LightGcn => (None, scaled(mean_scale, g_out)),
        ModelKind::SageMean | ModelKind::SageSum => {
            let w = sage.expect("sage layer requires weights");
            let gz: Vec<T> =
                g_out.iter().zip(&cache.pre).map(|(&g, &z)| if z > T::zero() { g } else { T::zero() }).collect();
            if let Some(gw) = grad {
                outer_acc(&gz, center, &mut gw.w_self);
                outer_acc(&gz, &cache.agg, &mut gw.w_neigh);
                add_into(&gz, &mut gw.bias);
            }
            let mut g_center = vec![T::zero(); d];
            matvec_t_acc(&w.w_self, &gz, &mut g_center);
            let mut g_agg = vec![T::zero(); d];
            if n > 0 {
                matvec_t_acc(&w.w_neigh, &gz, &mut g_agg);
                if kind == ModelKind::SageMean {
                    for x in &mut g_agg {
                        *x *= mean_scale;
                    }
                }
            }
            (Some(g_center), g_agg)
        }
        ModelKind::WalkOnly => panic!("walk-only model has no relation layers"),
    }
}

#[derive(Debug, Clone)]
pub struct CombineCache<T> {
    pub phi: Vec<T>,
    /// `tanh(W h_r)` per relation (attention only).
    pub act: Vec<Vec<T>>,
}

/// `alpha * h0 + (1 - alpha) * sum_r phi_r h_r`; `phi` is 1 (uniform) or
/// `softmax_r(v . tanh(W h_r))` (attention).
pub fn relation_combine<T: Real>(
    h0: &[T],
    per_relation: &[&[T]],
    alpha: T,
    phi_mode: PhiMode,
    att: Option<&AttentionWeights<T>>,
) -> (Vec<T>, CombineCache<T>) {
    let d = h0.len();
    let (phi, act) = match phi_mode {
        PhiMode::Uniform => (vec![T::one(); per_relation.len()], Vec::new()),
        PhiMode::Attention => {
            let a = att.expect("attention mode requires weights");
            let act: Vec<Vec<T>> = per_relation
                .iter()
                .map(|h| {
                    let mut u = vec![T::zero(); d];
                    matvec_acc(&a.w, h, &mut u);
                    u.into_iter().map(|x| x.tanh()).collect()
                })
                .collect();
            let logits: Vec<T> = act.iter().map(|t| dot(&a.v, t)).collect();
            (softmax(&logits), act)
        }
    };
    let cache = CombineCache { phi, act };
    if alpha == T::one() {
        return (h0.to_vec(), cache);
    }
    let mut out = scaled(alpha, h0);
    let beta = T::one() - alpha;
    for (h, &p) in per_relation.iter().zip(&cache.phi) {
        axpy(beta * p, h, &mut out);
    }
    (out, cache)
}

/// Returns `(grad wrt h0, grad wrt each h_r)`. Attention weight gradients
/// accumulate into `grad`.
pub fn relation_combine_backward<T: Real>(
    g_out: &[T],
    per_relation: &[&[T]],
    alpha: T,
    phi_mode: PhiMode,
    att: Option<&AttentionWeights<T>>,
    grad: Option<&mut AttentionWeights<T>>,
    cache: &CombineCache<T>,
) -> (Vec<T>, Vec<Vec<T>>) {
    let d = g_out.len();
    let g_h0 = if alpha == T::one() { g_out.to_vec() } else { scaled(alpha, g_out) };
    let beta = T::one() - alpha;
    let mut g_rel: Vec<Vec<T>> = cache.phi.iter().map(|&p| scaled(beta * p, g_out)).collect();
    if phi_mode == PhiMode::Attention && beta != T::zero() {
        let a = att.expect("attention mode requires weights");
        let g_phi: Vec<T> = per_relation.iter().map(|h| beta * dot(g_out, h)).collect();
        let mean = cache.phi.iter().zip(&g_phi).fold(T::zero(), |s, (&p, &g)| s + p * g);
        let mut grad = grad;
        for (r, h) in per_relation.iter().enumerate() {
            let g_logit = cache.phi[r] * (g_phi[r] - mean);
            if g_logit == T::zero() {
                continue;
            }
            let t = &cache.act[r];
            let g_u: Vec<T> = t.iter().zip(&a.v).map(|(&t, &v)| g_logit * v * (T::one() - t * t)).collect();
            if let Some(gw) = grad.as_deref_mut() {
                axpy(g_logit, t, &mut gw.v);
                outer_acc(&g_u, h, &mut gw.w);
            }
            matvec_t_acc(&a.w, &g_u, &mut g_rel[r]);
        }
    }
    debug_assert!(g_rel.iter().all(|g| g.len() == d));
    (g_h0, g_rel)
}

fn softmax<T: Real>(x: &[T]) -> Vec<T> {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(d: usize) -> Vec<f64> {
        (0..d * d).map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn lightgcn_mean_and_empty() {
        let (h, _) = relation_layer::<f64>(ModelKind::LightGcn, &[5.0, 5.0], &[&[2.0, 0.0], &[0.0, 2.0]], None);
        assert_eq!(h, vec![1.0, 1.0]);
        let (h, _) = relation_layer::<f64>(ModelKind::LightGcn, &[5.0, 5.0], &[], None);
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn sage_sum_identity_weights() {
        let w = SageWeights { w_self: eye(2), w_neigh: eye(2), bias: vec![0.0; 2] };
        let (h, _) = relation_layer(ModelKind::SageSum, &[1.0, 0.0], &[&[0.0, 1.0]], Some(&w));
        assert_eq!(h, vec![1.0, 1.0]);
        let (h, _) = relation_layer(ModelKind::SageMean, &[-1.0, 2.0], &[], Some(&w));
        assert_eq!(h, vec![0.0, 2.0]);
    }

    #[test]
    fn combine_examples() {
        let h0 = [0.3, -0.7];
        let rel: [&[f64]; 2] = [&[1.0, 0.0], &[0.0, 1.0]];
        let (h, _) = relation_combine(&h0, &rel, 1.0, PhiMode::Uniform, None);
        assert_eq!(h, h0.to_vec());
        let (h, _) = relation_combine(&h0, &rel, 0.0, PhiMode::Uniform, None);
        assert_eq!(h, vec![1.0, 1.0]);
        let att = AttentionWeights { w: eye(2), v: vec![0.0; 2] };
        let (_, c) = relation_combine(&h0, &[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]], 0.2, PhiMode::Attention, Some(&att));
        for p in c.phi {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
