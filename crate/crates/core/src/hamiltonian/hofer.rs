//! Sampled estimate of `∫_{T²} (sup h̃ − inf h̃) dV`.
//!
//! Sampling: `q` on a uniform lattice of `q_per_axis^{2n}` points, `p` on
//! radial shells `|p| = √ρ·s/S` (`s = 0..S`) along fixed deterministic
//! directions, `t` on a uniform `time_per_axis²` grid. A `p`-independent `h`
//! only needs `p = 0` and, for finite `ρ`, the value `0` reached where the
//! cut-off vanishes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::torus::grid_point;

/// Upper bound on the number of `q` lattice points.
pub const Q_LATTICE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoferSampling {
    pub q_per_axis: usize,
    pub p_shells: usize,
    pub p_directions: usize,
    pub time_per_axis: usize,
}

impl HoferSampling {
    /// Default resolution for `spec`, capped at roughly `2^26` evaluations.
    pub fn default_for(spec: &HamiltonianSpec) -> Self {
        let dims = 2 * spec.pairs() as u32;
        let mut q = 64usize;
        while q.pow(dims) > Q_LATTICE_CAP {
            q /= 2;
        }
        let momentum = spec.nonlinearity().momentum_dependent();
        let (shells, dirs) = if momentum { (8, 8) } else { (0, 0) };
        let mut time = if spec.time_dependent() { 32 } else { 1 };
        let p_count = 1 + shells * dirs;
        while time > 4 && q.pow(dims) * p_count * time * time > 1 << 26 {
            time /= 2;
        }
        while q > 8 && q.pow(dims) * p_count * time * time > 1 << 26 {
            q /= 2;
        }
        Self {
            q_per_axis: q,
            p_shells: shells,
            p_directions: dirs,
            time_per_axis: time,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoferEstimate {
    /// `∫ (sup − inf) dV`, without the factor 2.
    pub value: f64,
    pub sampling: HoferSampling,
    pub q_samples: usize,
    pub p_samples: usize,
    pub time_samples: usize,
}

fn p_samples(spec: &HamiltonianSpec, sampling: &HoferSampling) -> Result<Vec<Vec<f64>>> {
    let d = 2 * spec.pairs();
    let rho = spec.rho();
    let mut out = vec![vec![0.0; d]];
    if spec.nonlinearity().momentum_dependent() {
        if rho.is_infinite() {
            return Err(Error::InvalidArgument(
                "a momentum-dependent h needs a finite cut-off radius".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x40fe);
        let dirs: Vec<Vec<f64>> = (0..sampling.p_directions)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        for s in 1..=sampling.p_shells {
            let r = rho.sqrt() * s as f64 / sampling.p_shells as f64;
            for dir in &dirs {
                out.push(dir.iter().map(|x| r * x).collect());
            }
        }
    }
    Ok(out)
}

/// Estimates the Hofer norm of `h̃ρ` on the documented sample grid.
pub fn hofer_norm(spec: &HamiltonianSpec, sampling: &HoferSampling) -> Result<HoferEstimate> {
    let n = spec.pairs();
    let dims = 2 * n;
    if sampling.q_per_axis == 0 || sampling.time_per_axis == 0 {
        return Err(Error::InvalidArgument(
            "sampling resolution must be positive".into(),
        ));
    }
    let ps = p_samples(spec, sampling)?;
    let q_count = sampling.q_per_axis.pow(dims as u32);
    let times: Vec<[f64; 2]> = if spec.time_dependent() {
        let tn = sampling.time_per_axis;
        (0..tn * tn)
            .map(|i| [grid_point(tn, i / tn), grid_point(tn, i % tn)])
            .collect()
    } else {
        vec![[0.0, 0.0]]
    };
    let include_zero = spec.rho().is_finite();
    let mut z = vec![0.0; 4 * n];
    let mut total = 0.0;
    for &t in &times {
        let (mut hi, mut lo) = if include_zero {
            (0.0_f64, 0.0_f64)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        };
        for idx in 0..q_count {
            let mut rem = idx;
            for zc in z.iter_mut().take(dims) {
                *zc = grid_point(sampling.q_per_axis, rem % sampling.q_per_axis);
                rem /= sampling.q_per_axis;
            }
            for p in &ps {
                z[dims..].copy_from_slice(p);
                let v = spec.h_tilde(t, &z);
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        total += hi - lo;
    }
    Ok(HoferEstimate {
        value: total / times.len() as f64,
        sampling: *sampling,
        q_samples: q_count,
        p_samples: ps.len(),
        time_samples: times.len(),
    })
}
