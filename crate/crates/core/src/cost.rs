//! Combined detection/estimation cost of SJDE against SLRT&E and SPRT&E on a
//! single real channel.

use rayon::prelude::*;

use crate::baselines::{slrt_e_decide, SprtConfig};
use crate::channel::{
    gen_pilot, observe, realify, sample_channel, ChannelPrior, Constellation, ConstellationSpec,
    Hypothesis,
};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::sim::{geomspace, stratified_hypothesis};
use crate::sjde::{decide, estimate_from_stats, llr_from_stats, CostSample, CostWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct CostStudyConfig {
    pub prior: ChannelPrior,
    pub constellation: ConstellationSpec,
    pub weights: CostWeights,
    pub gammas: Vec<f64>,
    /// Preamble length cap.
    pub horizon: usize,
    pub tuning_frames: usize,
    pub eval_frames: usize,
    pub sprt_lower: Vec<f64>,
    pub sprt_upper: Vec<f64>,
    pub seed: u64,
}

impl Default for CostStudyConfig {
    fn default() -> Self {
        CostStudyConfig {
            prior: ChannelPrior::rayleigh(1.0, 1.0).expect("valid prior"),
            constellation: ConstellationSpec::default(),
            weights: CostWeights::default(),
            gammas: (1..=12).map(|j| 2.0 * j as f64).collect(),
            horizon: 400,
            tuning_frames: 40_000,
            eval_frames: 200_000,
            sprt_lower: geomspace(0.05, 20.0, 16).into_iter().map(|a| -a).collect(),
            sprt_upper: geomspace(0.05, 40.0, 20),
            seed: 1,
        }
    }
}

impl CostStudyConfig {
    fn sprt_grid(&self) -> Vec<SprtConfig> {
        self.sprt_lower
            .iter()
            .flat_map(|&a| {
                self.sprt_upper
                    .iter()
                    .map(move |&b| SprtConfig { lower: a, upper: b })
            })
            .collect()
    }
}

/// Sufficient-statistic paths of one frame.
struct Path {
    hypothesis: Hypothesis,
    x: f64,
    u: Vec<f64>,
    l: Vec<f64>,
    xhat: Vec<f64>,
    run_max: Vec<f64>,
    run_min: Vec<f64>,
}

fn simulate_path(cfg: &CostStudyConfig, c: &Constellation, purpose: Purpose, index: u64) -> Path {
    let hyp = stratified_hypothesis(index);
    let mut rng = stream(cfg.seed, purpose, index);
    let h = sample_channel(&cfg.prior, &mut rng);
    let n = cfg.horizon;
    let mut p = Path {
        hypothesis: hyp,
        x: h.re,
        u: Vec::with_capacity(n),
        l: Vec::with_capacity(n),
        xhat: Vec::with_capacity(n),
        run_max: Vec::with_capacity(n),
        run_min: Vec::with_capacity(n),
    };
    let (mut u, mut v) = (0.0, 0.0);
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..n {
        let pilot = gen_pilot(c, &mut rng);
        let y = realify(observe(hyp, h, &pilot, &cfg.prior, &mut rng), &pilot);
        u += y.pilot_power;
        v += y.y1;
        let l = llr_from_stats(v, u, &cfg.prior);
        hi = hi.max(l);
        lo = lo.min(l);
        p.u.push(u);
        p.l.push(l);
        p.xhat.push(estimate_from_stats(v, u, &cfg.prior));
        p.run_max.push(hi);
        p.run_min.push(lo);
    }
    p
}

/// Index of the first step with `U ≥ γ`, or the last step.
fn sjde_stop(p: &Path, gamma: f64) -> usize {
    p.u.partition_point(|&u| u < gamma).min(p.u.len() - 1)
}

/// First exit step and decision of an SPRT on the LLR path.
fn sprt_stop(p: &Path, cfg: &SprtConfig) -> (usize, bool) {
    let up = p.run_max.partition_point(|&m| m < cfg.upper);
    let down = p.run_min.partition_point(|&m| m > cfg.lower);
    let last = p.l.len() - 1;
    if up.min(down) > last {
        (last, p.l[last] >= 0.0)
    } else {
        (up.min(down), up < down)
    }
}

fn term(p: &Path, step: usize, decision: bool, w: &CostWeights) -> f64 {
    CostSample {
        hypothesis: p.hypothesis,
        decision,
        channels: vec![(p.x, p.xhat[step])],
    }
    .term(w)
}

/// Costs at step index `s` of SJDE and SLRT&E.
fn shared_stop_terms(p: &Path, s: usize, w: &CostWeights) -> Result<(f64, f64)> {
    let d = decide(p.l[s], &[p.xhat[s]], w)?.decision;
    let d_slrt = slrt_e_decide(p.l[s], w.c0, w.c1);
    Ok((term(p, s, d, w), term(p, s, d_slrt, w)))
}

/// Per-hypothesis running sums.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: [f64; 2],
    sum: [f64; 2],
    sum_sq: [f64; 2],
}

impl Moments {
    fn add(&mut self, hyp: Hypothesis, x: f64) {
        let h = hyp.is_active() as usize;
        self.n[h] += 1.0;
        self.sum[h] += x;
        self.sum_sq[h] += x * x;
    }

    fn merge(&mut self, o: &Moments) {
        for h in 0..2 {
            self.n[h] += o.n[h];
            self.sum[h] += o.sum[h];
            self.sum_sq[h] += o.sum_sq[h];
        }
    }

    /// `w·(mean_0 + mean_1)` and its standard error.
    fn combined(&self, w: f64) -> (f64, f64) {
        let mut m = 0.0;
        let mut se2 = 0.0;
        for h in 0..2 {
            if self.n[h] == 0.0 {
                continue;
            }
            let mean = self.sum[h] / self.n[h];
            m += w * mean;
            if self.n[h] > 1.0 {
                let var = ((self.sum_sq[h] - self.n[h] * mean * mean) / (self.n[h] - 1.0)).max(0.0);
                se2 += w * w * var / self.n[h];
            }
        }
        (m, se2.sqrt())
    }
}

const CHUNK: usize = 256;

/// Deterministic parallel reduction over frames.
fn reduce_frames<T, F>(
    cfg: &CostStudyConfig,
    purpose: Purpose,
    frames: usize,
    init: T,
    f: F,
) -> Result<T>
where
    T: Clone + Send + Sync + Merge,
    F: Fn(&Path, &mut T) -> Result<()> + Sync,
{
    let c = cfg.constellation.build()?;
    let chunks: Vec<T> = (0..frames.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut acc = init.clone();
            for j in ch * CHUNK..((ch + 1) * CHUNK).min(frames) {
                f(&simulate_path(cfg, &c, purpose, j as u64), &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = init;
    for c in &chunks {
        total.merge(c);
    }
    Ok(total)
}

trait Merge {
    fn merge(&mut self, o: &Self);
}

impl Merge for Vec<Moments> {
    fn merge(&mut self, o: &Self) {
        for (a, b) in self.iter_mut().zip(o) {
            Moments::merge(a, b);
        }
    }
}

/// One γ point of the study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoint {
    pub gamma: f64,
    pub etau_sjde: f64,
    pub sprt: SprtConfig,
    pub etau_sprt: f64,
    /// Combined cost of SJDE, SLRT&E, SPRT&E.
    pub cost: [f64; 3],
    pub cost_se: [f64; 3],
    /// SLRT&E − SJDE and SPRT&E − SLRT&E, paired.
    pub gap: [f64; 2],
    pub gap_se: [f64; 2],
}

impl CostPoint {
    /// Strict ordering with each gap above two standard errors.
    pub fn ordered(&self) -> bool {
        self.gap[0] > 2.0 * self.gap_se[0] && self.gap[1] > 2.0 * self.gap_se[1]
    }
}

pub fn run_cost_study(cfg: &CostStudyConfig) -> Result<Vec<CostPoint>> {
    cfg.weights.validate()?;
    if cfg.gammas.is_empty() || cfg.horizon == 0 || cfg.tuning_frames == 0 || cfg.eval_frames == 0 {
        return Err(Error::Empty("cost study grid"));
    }
    let w = cfg.weights;
    let grid = cfg.sprt_grid();
    let ng = cfg.gammas.len();

    // Tuning: per-candidate cost and stopping time, plus SJDE stopping times.
    let tuned = reduce_frames(
        cfg,
        Purpose::CostTuning,
        cfg.tuning_frames,
        vec![Moments::default(); 2 * grid.len() + ng],
        |p, acc| {
            for (c, s) in grid.iter().enumerate() {
                let (k, d) = sprt_stop(p, s);
                acc[2 * c].add(p.hypothesis, term(p, k, d, &w));
                acc[2 * c + 1].add(p.hypothesis, (k + 1) as f64);
            }
            for (g, &gamma) in cfg.gammas.iter().enumerate() {
                acc[2 * grid.len() + g].add(p.hypothesis, (sjde_stop(p, gamma) + 1) as f64);
            }
            Ok(())
        },
    )?;
    let mut chosen = Vec::with_capacity(ng);
    for g in 0..ng {
        let budget = tuned[2 * grid.len() + g].combined(0.5).0;
        let best = (0..grid.len())
            .filter(|&c| tuned[2 * c + 1].combined(0.5).0 <= budget)
            .min_by(|&a, &b| {
                tuned[2 * a]
                    .combined(1.0)
                    .0
                    .total_cmp(&tuned[2 * b].combined(1.0).0)
            })
            .ok_or_else(|| {
                Error::NoFeasiblePoint(format!("no SPRT&E candidate within E[tau] {budget}"))
            })?;
        chosen.push(grid[best]);
    }

    // Evaluation on fresh frames: 7 moments per γ.
    let eval = reduce_frames(
        cfg,
        Purpose::CostStudy,
        cfg.eval_frames,
        vec![Moments::default(); 7 * ng],
        |p, acc| {
            for (g, &gamma) in cfg.gammas.iter().enumerate() {
                let s = sjde_stop(p, gamma);
                let (c_sjde, c_slrt) = shared_stop_terms(p, s, &w)?;
                let (k, d) = sprt_stop(p, &chosen[g]);
                let c_sprt = term(p, k, d, &w);
                let a = &mut acc[7 * g..7 * g + 7];
                a[0].add(p.hypothesis, c_sjde);
                a[1].add(p.hypothesis, c_slrt);
                a[2].add(p.hypothesis, c_sprt);
                a[3].add(p.hypothesis, c_slrt - c_sjde);
                a[4].add(p.hypothesis, c_sprt - c_slrt);
                a[5].add(p.hypothesis, (s + 1) as f64);
                a[6].add(p.hypothesis, (k + 1) as f64);
            }
            Ok(())
        },
    )?;
    Ok((0..ng)
        .map(|g| {
            let m: Vec<(f64, f64)> = eval[7 * g..7 * g + 7]
                .iter()
                .enumerate()
                .map(|(j, m)| m.combined(if j < 5 { 1.0 } else { 0.5 }))
                .collect();
            CostPoint {
                gamma: cfg.gammas[g],
                etau_sjde: m[5].0,
                sprt: chosen[g],
                etau_sprt: m[6].0,
                cost: [m[0].0, m[1].0, m[2].0],
                cost_se: [m[0].1, m[1].1, m[2].1],
                gap: [m[3].0, m[4].0],
                gap_se: [m[3].1, m[4].1],
            }
        })
        .collect())
}

pub const COST_HEADER: [&str; 14] = [
    "gamma",
    "Etau_sjde",
    "Etau_sprt",
    "sprt_lower",
    "sprt_upper",
    "cost_sjde",
    "cost_sjde_se",
    "cost_slrt_e",
    "cost_slrt_e_se",
    "cost_sprt_e",
    "cost_sprt_e_se",
    "gap_slrt_sjde_se",
    "gap_sprt_slrt_se",
    "ordered",
];

pub fn write_cost_csv<W: std::io::Write>(points: &[CostPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_HEADER)?;
    for p in points {
        w.write_record([
            p.gamma.to_string(),
            p.etau_sjde.to_string(),
            p.etau_sprt.to_string(),
            p.sprt.lower.to_string(),
            p.sprt.upper.to_string(),
            p.cost[0].to_string(),
            p.cost_se[0].to_string(),
            p.cost[1].to_string(),
            p.cost_se[1].to_string(),
            p.cost[2].to_string(),
            p.cost_se[2].to_string(),
            p.gap_se[0].to_string(),
            p.gap_se[1].to_string(),
            p.ordered().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CostStudyConfig {
        CostStudyConfig {
            gammas: vec![2.0, 8.0],
            horizon: 100,
            tuning_frames: 600,
            eval_frames: 600,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_consistent() {
        let a = run_cost_study(&small()).unwrap();
        let b = run_cost_study(&small()).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!(p.etau_sprt <= p.etau_sjde * 1.5 + 1.0);
            assert!((p.cost[1] - p.cost[0] - p.gap[0]).abs() < 1e-9);
            assert!(p.cost.iter().all(|c| c.is_finite() && *c >= 0.0));
        }
    }

    #[test]
    fn sprt_first_passage_matches_scan() {
        let cfg = small();
        let c = cfg.constellation.build().unwrap();
        for j in 0..50 {
            let p = simulate_path(&cfg, &c, Purpose::CostTuning, j);
            for s in cfg.sprt_grid().iter().step_by(17) {
                let scan = p.l.iter().position(|&l| l >= s.upper || l <= s.lower);
                let (k, d) = sprt_stop(&p, s);
                match scan {
                    Some(i) => {
                        assert_eq!(k, i);
                        assert_eq!(d, p.l[i] >= s.upper);
                    }
                    None => assert_eq!(k, p.l.len() - 1),
                }
            }
        }
    }
}
