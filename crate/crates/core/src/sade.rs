//! Scale-adaptive depthwise encoder: parallel depthwise convolutions at
//! several odd kernel sizes, ReLU'd and averaged, then a shared pointwise
//! projection.

use crate::autograd::{Bindings, Graph, Var};
use crate::error::{Error, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;

pub const DEFAULT_KERNELS: [usize; 4] = [1, 3, 5, 7];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SadeConfig {
    kernels: Vec<usize>,
    pub d: usize,
    pub c: usize,
}

impl SadeConfig {
    /// Kernels may be given in any order; they are stored ascending.
    pub fn new(kernels: &[usize], d: usize, c: usize) -> Result<Self> {
        let ks = validate_kernels(kernels)?;
        if d == 0 || c == 0 {
            return Err(Error::Config(format!("SADE widths must be positive (d={d}, c={c})")));
        }
        Ok(SadeConfig { kernels: ks, d, c })
    }

    pub fn kernels(&self) -> &[usize] {
        &self.kernels
    }

    pub fn window(&self) -> usize {
        *self.kernels.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        sade_param_count(self)
    }
}

/// Sorted copy of `kernels`; rejects empty sets, even sizes and duplicates.
pub fn validate_kernels(kernels: &[usize]) -> Result<Vec<usize>> {
    if kernels.is_empty() {
        return Err(Error::Config("kernel set is empty".into()));
    }
    let mut ks = kernels.to_vec();
    ks.sort_unstable();
    if let Some(k) = ks.iter().find(|&&k| k % 2 == 0) {
        return Err(Error::Config(format!("kernel size {k} is not odd")));
    }
    if ks.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate kernel sizes in {kernels:?}")));
    }
    Ok(ks)
}

/// Parses `"1,3,5,7"`.
pub fn parse_kernels(s: &str) -> Result<Vec<usize>> {
    let ks = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad kernel size `{}`", p.trim())))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_kernels(&ks)
}

/// Kernel sweep file: one comma-separated set per line, `#` comments.
pub fn parse_kernel_sweep(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            parse_kernels(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// `Σ_k d(k+1) + d·c + c`.
pub fn sade_param_count(cfg: &SadeConfig) -> usize {
    cfg.kernels.iter().map(|k| cfg.d * (k + 1)).sum::<usize>() + cfg.d * cfg.c + cfg.c
}

pub fn depthwise_weight(prefix: &str, k: usize) -> String {
    format!("{prefix}.dw{k}.weight")
}

pub fn depthwise_bias(prefix: &str, k: usize) -> String {
    format!("{prefix}.dw{k}.bias")
}

pub fn pointwise_weight(prefix: &str) -> String {
    format!("{prefix}.pw.weight")
}

pub fn pointwise_bias(prefix: &str) -> String {
    format!("{prefix}.pw.bias")
}

pub fn init_sade<T: Scalar>(store: &mut ParameterStore<T>, prefix: &str, cfg: &SadeConfig) -> Result<()> {
    for &k in &cfg.kernels {
        store.init_uniform(&depthwise_weight(prefix, k), &[cfg.d, k], k)?;
        store.init_uniform(&depthwise_bias(prefix, k), &[cfg.d], k)?;
    }
    store.init_uniform(&pointwise_weight(prefix), &[cfg.d, cfg.c], cfg.d)?;
    store.init_uniform(&pointwise_bias(prefix), &[cfg.c], cfg.d)
}

#[derive(Clone, Copy, Debug)]
pub struct SadeOutput {
    /// Averaged, ReLU'd depthwise features `[n×d]`.
    pub v_pre: Var,
    /// Pointwise projection `[n×c]`.
    pub v: Var,
}

/// `V = pointwise((1/|K|) Σ_k ReLU(depthwise_k(E)))`, summed in ascending `k`.
pub fn sade_forward<T: Scalar>(
    g: &mut Graph<'_, T>,
    b: &Bindings,
    prefix: &str,
    cfg: &SadeConfig,
    e: Var,
) -> Result<SadeOutput> {
    let shape = g.shape(e).to_vec();
    if shape.len() != 2 || shape[1] != cfg.d {
        return Err(Error::dim("sade_forward", &shape, &[shape.first().copied().unwrap_or(0), cfg.d]));
    }
    let mut acc: Option<Var> = None;
    for &k in &cfg.kernels {
        let w = b.get(&depthwise_weight(prefix, k))?;
        let bias = b.get(&depthwise_bias(prefix, k))?;
        let y = g.conv1d_depthwise(e, w, bias, k)?;
        let r = g.relu(y);
        acc = Some(match acc {
            None => r,
            Some(a) => g.add(a, r)?,
        });
    }
    let sum = acc.expect("non-empty kernel set");
    let v_pre = g.scale(sum, T::lit(1.0 / cfg.kernels.len() as f64));
    let v = g.conv1d_pointwise(v_pre, b.get(&pointwise_weight(prefix))?, b.get(&pointwise_bias(prefix))?)?;
    Ok(SadeOutput { v_pre, v })
}

/// Multiply-accumulate count ×2 for one forward pass over `n` tokens.
pub fn sade_flops(cfg: &SadeConfig, n: usize) -> u64 {
    let (n, d, c) = (n as u64, cfg.d as u64, cfg.c as u64);
    let dw: u64 = cfg.kernels.iter().map(|&k| 2 * n * d * k as u64).sum();
    dw + 2 * n * d * c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn run(store: &ParameterStore<f64>, cfg: &SadeConfig, e: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
        let mut g = Graph::new();
        let b = g.bind(store);
        let ev = g.constant(e.clone());
        let out = sade_forward(&mut g, &b, "sade", cfg, ev).unwrap();
        (g.value(out.v_pre).clone(), g.value(out.v).clone())
    }

    #[test]
    fn config_validation() {
        assert!(SadeConfig::new(&[], 4, 2).is_err());
        assert!(SadeConfig::new(&[2], 4, 2).is_err());
        assert!(SadeConfig::new(&[3, 3], 4, 2).is_err());
        let c = SadeConfig::new(&[7, 1, 5, 3], 4, 2).unwrap();
        assert_eq!(c.kernels(), &[1, 3, 5, 7]);
        assert_eq!(c.window(), 7);
        assert_eq!(parse_kernels("1, 3,5").unwrap(), vec![1, 3, 5]);
        assert!(parse_kernels("1,x").is_err());
        let sweep = parse_kernel_sweep("# rows\n1\n3\n1,3,5,7\n").unwrap();
        assert_eq!(sweep.len(), 3);
        assert!(matches!(parse_kernel_sweep("1\n4\n"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn param_counts() {
        assert_eq!(sade_param_count(&SadeConfig::new(&[3], 1, 1).unwrap()), 6);
        assert_eq!(sade_param_count(&SadeConfig::new(&[1, 3, 5, 7], 768, 128).unwrap()), 113_792);
        let cfg = SadeConfig::new(&[1, 3], 5, 4).unwrap();
        let mut s = ParameterStore::<f32>::new(0);
        init_sade(&mut s, "sade", &cfg).unwrap();
        assert_eq!(s.num_params(), cfg.param_count());
    }

    #[test]
    fn identity_kernel_gives_relu() {
        let cfg = SadeConfig::new(&[1], 3, 3).unwrap();
        let mut s = ParameterStore::<f64>::new(0);
        s.insert(&depthwise_weight("sade", 1), Tensor::full(&[3, 1], 1.0)).unwrap();
        s.insert(&depthwise_bias("sade", 1), Tensor::zeros(&[3])).unwrap();
        s.insert(&pointwise_weight("sade"), Tensor::eye(3)).unwrap();
        s.insert(&pointwise_bias("sade"), Tensor::zeros(&[3])).unwrap();
        let e = Tensor::from_f64(&[2, 3], &[1.0, -2.0, 0.5, -0.1, 3.0, -4.0]).unwrap();
        let (_, v) = run(&s, &cfg, &e);
        assert_eq!(v.data(), &[1.0, 0.0, 0.5, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn two_branch_hand_case() {
        // d=1, K={1,3}; branch 1: w=[2], b=0; branch 3: w=[1,1,1], b=-1.
        let cfg = SadeConfig::new(&[1, 3], 1, 1).unwrap();
        let mut s = ParameterStore::<f64>::new(0);
        s.insert(&depthwise_weight("sade", 1), Tensor::from_f64(&[1, 1], &[2.0]).unwrap()).unwrap();
        s.insert(&depthwise_bias("sade", 1), Tensor::zeros(&[1])).unwrap();
        s.insert(&depthwise_weight("sade", 3), Tensor::from_f64(&[1, 3], &[1.0, 1.0, 1.0]).unwrap())
            .unwrap();
        s.insert(&depthwise_bias("sade", 3), Tensor::from_f64(&[1], &[-1.0]).unwrap()).unwrap();
        s.insert(&pointwise_weight("sade"), Tensor::from_f64(&[1, 1], &[1.0]).unwrap()).unwrap();
        s.insert(&pointwise_bias("sade"), Tensor::zeros(&[1])).unwrap();
        let e = Tensor::from_f64(&[3, 1], &[1.0, -1.0, 2.0]).unwrap();
        // branch 1: [2,-2,4] → relu [2,0,4]
        // branch 3 (zero padded sums): [0,2,1] - 1 → [-1,1,0] → relu [0,1,0]
        let (v_pre, v) = run(&s, &cfg, &e);
        assert_eq!(v_pre.data(), &[1.0, 0.5, 2.0]);
        assert_eq!(v.data(), v_pre.data());
    }

    #[test]
    fn single_kernel_equals_single_branch() {
        let cfg = SadeConfig::new(&[3], 4, 5).unwrap();
        let mut s = ParameterStore::<f32>::new(11);
        init_sade(&mut s, "sade", &cfg).unwrap();
        let e = Tensor::<f32>::uniform(&[6, 4], 1.0, s.rng());
        let mut g = Graph::new();
        let b = g.bind(&s);
        let ev = g.constant(e.clone());
        let out = sade_forward(&mut g, &b, "sade", &cfg, ev).unwrap();

        let mut h = Graph::new();
        let b2 = h.bind(&s);
        let ev = h.constant(e);
        let y = h
            .conv1d_depthwise(ev, b2.get("sade.dw3.weight").unwrap(), b2.get("sade.dw3.bias").unwrap(), 3)
            .unwrap();
        let r = h.relu(y);
        let v = h
            .conv1d_pointwise(r, b2.get("sade.pw.weight").unwrap(), b2.get("sade.pw.bias").unwrap())
            .unwrap();
        assert!(g.value(out.v).bit_eq(h.value(v)));
    }

    #[test]
    fn permuted_kernels_give_identical_output() {
        let cfg = SadeConfig::new(&[1, 3, 5], 3, 2).unwrap();
        let mut s = ParameterStore::<f32>::new(2);
        init_sade(&mut s, "sade", &cfg).unwrap();
        let e = Tensor::<f32>::uniform(&[7, 3], 1.0, s.rng());
        let permuted = SadeConfig::new(&[5, 1, 3], 3, 2).unwrap();
        let mut g = Graph::new();
        let b = g.bind(&s);
        let ev = g.constant(e.clone());
        let a = sade_forward(&mut g, &b, "sade", &cfg, ev).unwrap();
        let c = sade_forward(&mut g, &b, "sade", &permuted, ev).unwrap();
        assert!(g.value(a.v).bit_eq(g.value(c.v)));
        assert!(g.value(a.v_pre).data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn width_mismatch() {
        let cfg = SadeConfig::new(&[3], 4, 2).unwrap();
        let mut s = ParameterStore::<f64>::new(0);
        init_sade(&mut s, "sade", &cfg).unwrap();
        let mut g = Graph::new();
        let b = g.bind(&s);
        let e = g.constant(Tensor::zeros(&[3, 5]));
        assert!(matches!(sade_forward(&mut g, &b, "sade", &cfg, e), Err(Error::Dimension { .. })));
    }

    #[test]
    fn flops_scale_linearly() {
        let cfg = SadeConfig::new(&[1, 3], 4, 2).unwrap();
        assert_eq!(sade_flops(&cfg, 10) * 2, sade_flops(&cfg, 20));
        assert_eq!(sade_flops(&cfg, 1), 2 * 4 * (1 + 3) + 2 * 4 * 2);
    }
}
