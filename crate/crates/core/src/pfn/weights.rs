//! Parameter tensors of the network and their fixed ordering.

use crate::pfn::PfnConfig;
use crate::rng::{stream, sub_rng};
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub ff_w1: Array2<f64>,
    pub ff_b1: Array1<f64>,
    pub ff_w2: Array2<f64>,
    pub ff_b2: Array1<f64>,
}

/// All parameters. Matrices are stored input-major (`x W` convention).
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub enc_w1: Array2<f64>,
    pub enc_b1: Array1<f64>,
    pub enc_w2: Array2<f64>,
    pub enc_b2: Array1<f64>,
    pub target_w: Array1<f64>,
    pub target_b: Array1<f64>,
    pub query_token: Array1<f64>,
    pub layers: Vec<LayerWeights>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

macro_rules! layer_fields {
    ($mac:ident, $lw:expr, $out:expr, $prefix:expr) => {
        $mac!($out, $prefix, "ln1.g", $lw.ln1_g);
        $mac!($out, $prefix, "ln1.b", $lw.ln1_b);
        $mac!($out, $prefix, "attn.wq", $lw.wq);
        $mac!($out, $prefix, "attn.wk", $lw.wk);
        $mac!($out, $prefix, "attn.wv", $lw.wv);
        $mac!($out, $prefix, "attn.wo", $lw.wo);
        $mac!($out, $prefix, "attn.bo", $lw.bo);
        $mac!($out, $prefix, "ln2.g", $lw.ln2_g);
        $mac!($out, $prefix, "ln2.b", $lw.ln2_b);
        $mac!($out, $prefix, "ffn.w1", $lw.ff_w1);
        $mac!($out, $prefix, "ffn.b1", $lw.ff_b1);
        $mac!($out, $prefix, "ffn.w2", $lw.ff_w2);
        $mac!($out, $prefix, "ffn.b2", $lw.ff_b2);
    };
}

macro_rules! push_ref {
    ($out:expr, $prefix:expr, $name:expr, $t:expr) => {
        $out.push((
            format!("{}{}", $prefix, $name),
            $t.shape().to_vec(),
            $t.as_slice().expect("standard layout"),
        ))
    };
}

macro_rules! push_mut {
    ($out:expr, $prefix:expr, $name:expr, $t:expr) => {
        $out.push($t.as_slice_mut().expect("standard layout"))
    };
}

/// One named tensor: name, shape, values.
pub type TensorRef<'a> = (String, Vec<usize>, &'a [f64]);

impl Weights {
    pub fn zeros(config: &PfnConfig) -> Self {
        let d = config.d_model;
        let f = config.max_features;
        let m = config.ffn_width();
        let b = config.buckets;
        let layer = || LayerWeights {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            ff_w1: Array2::zeros((d, m)),
            ff_b1: Array1::zeros(m),
            ff_w2: Array2::zeros((m, d)),
            ff_b2: Array1::zeros(d),
        };
        Weights {
            enc_w1: Array2::zeros((f, d)),
            enc_b1: Array1::zeros(d),
            enc_w2: Array2::zeros((d, d)),
            enc_b2: Array1::zeros(d),
            target_w: Array1::zeros(d),
            target_b: Array1::zeros(d),
            query_token: Array1::zeros(d),
            layers: (0..config.layers).map(|_| layer()).collect(),
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
            head_w: Array2::zeros((d, b)),
            head_b: Array1::zeros(b),
        }
    }

    /// Seeded scaled-normal initialization: matrices ~ N(0, 1/fan_in), residual
    /// output projections additionally scaled by 1/sqrt(2 layers), layer-norm
    /// gains one, biases zero. Values are rounded to f32.
    pub fn init(config: &PfnConfig) -> Self {
        let mut w = Weights::zeros(config);
        let mut rng = sub_rng(config.seed, stream::PFN_INIT, 0);
        let mut fill = |a: &mut [f64], scale: f64| {
            for x in a.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = scale * z;
            }
        };
        let d = config.d_model as f64;
        let resid = 1.0 / (2.0 * config.layers as f64).sqrt();
        fill(w.enc_w1.as_slice_mut().unwrap(), 1.0 / (config.max_features as f64).sqrt());
        fill(w.enc_w2.as_slice_mut().unwrap(), 1.0 / d.sqrt());
        fill(w.target_w.as_slice_mut().unwrap(), 1.0);
        fill(w.query_token.as_slice_mut().unwrap(), 1.0);
        for l in w.layers.iter_mut() {
            l.ln1_g.fill(1.0);
            l.ln2_g.fill(1.0);
            fill(l.wq.as_slice_mut().unwrap(), 1.0 / d.sqrt());
            fill(l.wk.as_slice_mut().unwrap(), 1.0 / d.sqrt());
            fill(l.wv.as_slice_mut().unwrap(), 1.0 / d.sqrt());
            fill(l.wo.as_slice_mut().unwrap(), resid / d.sqrt());
            fill(l.ff_w1.as_slice_mut().unwrap(), 1.0 / d.sqrt());
            fill(l.ff_w2.as_slice_mut().unwrap(), resid / (config.ffn_width() as f64).sqrt());
        }
        w.lnf_g.fill(1.0);
        fill(w.head_w.as_slice_mut().unwrap(), 1.0 / d.sqrt());
        w.round_to_f32();
        w
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out: Vec<TensorRef<'_>> = Vec::new();
        push_ref!(out, "", "enc.w1", self.enc_w1);
        push_ref!(out, "", "enc.b1", self.enc_b1);
        push_ref!(out, "", "enc.w2", self.enc_w2);
        push_ref!(out, "", "enc.b2", self.enc_b2);
        push_ref!(out, "", "target.w", self.target_w);
        push_ref!(out, "", "target.b", self.target_b);
        push_ref!(out, "", "query_token", self.query_token);
        for (i, lw) in self.layers.iter().enumerate() {
            let prefix = format!("layer{i}.");
            layer_fields!(push_ref, lw, out, prefix);
        }
        push_ref!(out, "", "lnf.g", self.lnf_g);
        push_ref!(out, "", "lnf.b", self.lnf_b);
        push_ref!(out, "", "head.w", self.head_w);
        push_ref!(out, "", "head.b", self.head_b);
        out
    }

    /// Mutable tensors in the same order as [`Weights::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        push_mut!(out, "", "", self.enc_w1);
        push_mut!(out, "", "", self.enc_b1);
        push_mut!(out, "", "", self.enc_w2);
        push_mut!(out, "", "", self.enc_b2);
        push_mut!(out, "", "", self.target_w);
        push_mut!(out, "", "", self.target_b);
        push_mut!(out, "", "", self.query_token);
        for lw in self.layers.iter_mut() {
            layer_fields!(push_mut, lw, out, "");
        }
        push_mut!(out, "", "", self.lnf_g);
        push_mut!(out, "", "", self.lnf_b);
        push_mut!(out, "", "", self.head_w);
        push_mut!(out, "", "", self.head_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (_, _, v) in self.tensors() {
            out.extend_from_slice(v);
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Weights, scale: f64) {
        let src = other.to_flat();
        let mut offset = 0;
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x += scale * src[offset];
                offset += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip_and_order() {
        let c = PfnConfig::tiny();
        let w = Weights::init(&c);
        let flat = w.to_flat();
        let mut z = Weights::zeros(&c);
        z.load_flat(&flat);
        assert_eq!(z, w);
        let names: Vec<String> = w.tensors().into_iter().map(|(n, _, _)| n).collect();
        assert_eq!(names.first().unwrap(), "enc.w1");
        assert_eq!(names.last().unwrap(), "head.b");
        assert!(names.contains(&"layer1.ffn.w2".to_string()));
        assert_eq!(names.len(), 7 + 13 * c.layers + 4);
    }

    #[test]
    fn init_values_are_f32_representable() {
        let w = Weights::init(&PfnConfig::tiny());
        assert!(w.to_flat().iter().all(|&x| x == x as f32 as f64));
    }
}
