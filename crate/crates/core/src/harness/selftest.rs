//! Fast invariant checks behind `kmdp selftest`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::agents::EpisodeRecord;
use crate::domain::BoxSet;
use crate::envs::{riccati_map, riccati_solution, LqrEnv, NoiseScales};
use crate::error::Result;
use crate::gp::GpPosterior;
use crate::infogain::info_gain;
use crate::kernels::KernelSpec;
use crate::planners::{evaluate_policy, plan, Model, Policy};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type CheckFn = fn(u64) -> Result<(bool, String)>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("gp_incremental_matches_dense", gp_incremental),
    ("info_gain_telescopes", telescoping),
    ("planner_matches_enumeration", planner),
    ("riccati_fixed_point", riccati),
    ("episode_csv_round_trip", csv_round_trip),
];

pub fn run_selftest(seed: u64) -> Vec<Check> {
    CHECKS
        .iter()
        .map(|(name, f)| match f(seed) {
            Ok((pass, detail)) => Check { name, pass, detail },
            Err(e) => Check {
                name,
                pass: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

fn gp_incremental(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream(seed, Stream::Mesh);
    let kernel = KernelSpec::squared_exponential(2, 0.7);
    let lambda = 0.3;
    let bx = BoxSet::symmetric(2, 1.0)?;
    let xs: Vec<Vec<f64>> = (0..60).map(|_| bx.sample(&mut rng)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1] + rng.gen_range(-0.1..0.1)).collect();
    let mut post = GpPosterior::new(kernel.clone(), lambda)?;
    for (x, y) in xs.iter().zip(&ys) {
        post.extend(std::slice::from_ref(x), &[*y])?;
    }
    let k = kernel.gram(&xs)? + DMatrix::identity(xs.len(), xs.len()) * lambda;
    let inv = k.try_inverse().expect("regularized gram is invertible");
    let yv = DVector::from_column_slice(&ys);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = bx.sample(&mut rng);
        let kz = DVector::from_iterator(xs.len(), xs.iter().map(|x| kernel.eval_unchecked(x, &z)));
        let mean = (kz.transpose() * &inv * &yv)[0];
        let var = kernel.eval_unchecked(&z, &z) - (kz.transpose() * &inv * &kz)[0];
        let (m, v) = post.predict(&z)?;
        worst = worst
            .max((m - mean).abs() / mean.abs().max(1.0))
            .max((v - var).abs() / var.abs().max(1e-3));
    }
    Ok((worst <= 1e-8, format!("max_rel_err={worst:e}")))
}

fn telescoping(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream(seed, Stream::Mesh);
    let kernel = KernelSpec::matern(1, 2.5, 0.4);
    let lambda = 0.5;
    let xs: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
    let batch = info_gain(&kernel, &xs, lambda)?;
    let mut post = GpPosterior::new(kernel, lambda)?;
    let mut seq = 0.0;
    for x in &xs {
        let (_, var) = post.predict(x)?;
        seq += 0.5 * (1.0 + var / lambda).ln();
        post.extend(std::slice::from_ref(x), &[0.0])?;
    }
    let diff = (batch - seq).abs();
    Ok((diff <= 1e-8, format!("abs_diff={diff:e}")))
}

fn planner(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream(seed, Stream::Exploration);
    let (ns, na, h) = (3, 2, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let rewards: Vec<f64> = (0..ns * na).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let next: Vec<Vec<(usize, f64)>> = (0..ns * na)
            .map(|_| {
                let w: Vec<f64> = (0..ns).map(|_| rng.gen_range(0.0..1.0)).collect();
                let t: f64 = w.iter().sum();
                w.iter().enumerate().map(|(s, p)| (s, p / t)).collect()
            })
            .collect();
        let model = Model::new(ns, na, rewards, next)?;
        let v = plan(&model, h).values;
        let n_policies = na.pow((ns * h) as u32);
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for code in 0..n_policies {
                let mut c = code;
                let actions = (0..ns * h)
                    .map(|_| {
                        let a = c % na;
                        c /= na;
                        a
                    })
                    .collect();
                let val = evaluate_policy(&model, &Policy::new(ns, h, actions)?)?.value(0, s);
                best = best.max(val);
            }
            worst = worst.max((best - v.value(0, s)).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max_abs_diff={worst:e}")))
}

fn riccati(_seed: u64) -> Result<(bool, String)> {
    let env = LqrEnv::scalar(0.9, 0.4, 1.0, 0.2, 5, NoiseScales::default())?;
    let g = riccati_solution(&env)?;
    let r = (riccati_map(&env, &g)? - &g).abs().max();
    Ok((r <= 1e-8, format!("residual={r:e}")))
}

fn csv_round_trip(seed: u64) -> Result<(bool, String)> {
    let mut rng = stream(seed, Stream::Bootstrap);
    let records: Vec<EpisodeRecord> = (1..=20)
        .map(|l| EpisodeRecord {
            episode: l,
            realized_return: rng.gen::<f64>() * 1e3 - 500.0,
            optimal_value: rng.gen(),
            policy_value: rng.gen::<f64>() * 1e-12,
            inst_regret: rng.gen(),
            cum_regret: rng.gen::<f64>() * l as f64,
            beta_r: rng.gen(),
            beta_p: rng.gen(),
            reward_dev_sum: rng.gen(),
            trans_dev_sum: rng.gen(),
            wall_ms: 0.0,
        })
        .collect();
    let bytes = super::episodes_to_csv(&records)?;
    let back: Vec<EpisodeRecord> = csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<std::result::Result<_, _>>()?;
    Ok((back == records, format!("rows={}", back.len())))
}
