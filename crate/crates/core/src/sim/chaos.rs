//! Rate experiments: empirical-measure convergence and the N-agent gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lifted::quantile;
use crate::model::{InitialCondition, MeanFieldModel};
use crate::spaces::DiscreteMeasure;
use crate::transport::distance_weights;

use super::rng::{open_uniform, Purpose, Streams};
use super::{mean_ci, simulate_mkv, simulate_n_agent, GainEstimate, Policy, RunConfig};

/// Least-squares fit of `ln y = intercept + slope · ln x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// `None` with fewer than two points or any nonpositive value.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<LogLogFit> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LogLogFit { slope, intercept, r_squared })
}

/// One (N, replication) cell; the long-format CSV row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosSample {
    pub n: usize,
    pub replication: usize,
    pub gain: Option<f64>,
    /// `J^N_r − J_r` against the limit gain on the same common-noise path.
    pub gap: Option<f64>,
    pub w_distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosRow {
    pub n: usize,
    pub gain: Option<GainEstimate>,
    /// `|V^{N,π} − V^π|` from paired differences.
    pub gap: Option<f64>,
    pub gap_ci: Option<f64>,
    pub w_mean: f64,
    pub w_ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// `V^π` from the exact law paths (gap experiments only).
    pub limit_gain: Option<GainEstimate>,
    pub rows: Vec<ChaosRow>,
    pub gap_fit: Option<LogLogFit>,
    pub w_fit: Option<LogLogFit>,
    pub samples: Vec<ChaosSample>,
}

impl ChaosReport {
    /// Gaps strictly decrease along `ns`.
    pub fn gap_decreasing(&self) -> bool {
        let g: Vec<f64> = self.rows.iter().filter_map(|r| r.gap).collect();
        g.len() == self.rows.len() && g.windows(2).all(|w| w[1] < w[0])
    }
}

fn check_ns(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("N list must be nonempty, positive and strictly increasing".into()));
    }
    Ok(())
}

/// Mean `W(ν_N, ν)` over `replications` empirical measures per `N`. Samples
/// are nested: replication `r` draws one i.i.d. sequence and `ν_N` uses its
/// first `N` points.
pub fn empirical_measure_rate(
    nu: &DiscreteMeasure,
    ns: &[usize],
    replications: usize,
    seed: u64,
    exec: Execution,
) -> Result<ChaosReport> {
    check_ns(ns)?;
    if replications < 30 {
        return Err(Error::Contract(format!("need at least 30 replications, got {replications}")));
    }
    let space = nu.space().clone();
    let w = nu.weights();
    let streams = Streams::new(seed, Purpose::Sampling);
    let per_rep: Vec<Vec<f64>> = exec.map_range(replications, |r| {
        let mut g = streams.lane(r as u64, 0);
        let mut counts = vec![0u64; w.len()];
        let mut drawn = 0;
        ns.iter()
            .map(|&n| {
                while drawn < n {
                    counts[quantile(w, open_uniform(&mut g))] += 1;
                    drawn += 1;
                }
                let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
                distance_weights(&space, &emp, w)
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(ns.len());
    let mut samples = Vec::with_capacity(ns.len() * replications);
    for (k, &n) in ns.iter().enumerate() {
        let ws: Vec<f64> = per_rep.iter().map(|v| v[k]).collect();
        let (w_mean, _, w_ci) = mean_ci(&ws);
        rows.push(ChaosRow { n, gain: None, gap: None, gap_ci: None, w_mean, w_ci });
        samples.extend(ws.iter().enumerate().map(|(r, &wd)| ChaosSample {
            n,
            replication: r,
            gain: None,
            gap: None,
            w_distance: wd,
        }));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let w_fit = fit_loglog(&xs, &rows.iter().map(|r| r.w_mean).collect::<Vec<_>>());
    Ok(ChaosReport { ns: ns.to_vec(), replications, seed, limit_gain: None, rows, gap_fit: None, w_fit, samples })
}

/// Runs the N-agent system for every `N` in `ns` and the limit system once,
/// all on the same seed so that common-noise paths and per-agent streams are
/// shared across `N`. `cfg.agents` is ignored.
pub fn chaos_experiment(
    model: &MeanFieldModel,
    policy: &Policy,
    init: &InitialCondition,
    ns: &[usize],
    cfg: &RunConfig,
) -> Result<ChaosReport> {
    check_ns(ns)?;
    let limit = simulate_mkv(model, policy, init, &RunConfig { agents: 1, record_agents: 0, ..*cfg })?;
    let mut rows = Vec::with_capacity(ns.len());
    let mut samples = Vec::new();
    for &n in ns {
        let run = simulate_n_agent(model, policy, init, &RunConfig { agents: n, record_agents: 0, ..*cfg })?;
        let diffs: Vec<f64> = run.replications.iter().zip(&limit.path_gains).map(|(a, b)| a.gain - b).collect();
        let (d_mean, _, d_ci) = mean_ci(&diffs);
        let ws: Vec<f64> = run.replications.iter().map(|r| r.w_distance).collect();
        let (w_mean, _, w_ci) = mean_ci(&ws);
        rows.push(ChaosRow { n, gain: Some(run.gain), gap: Some(d_mean.abs()), gap_ci: Some(d_ci), w_mean, w_ci });
        samples.extend(run.replications.iter().zip(&diffs).enumerate().map(|(r, (rep, d))| ChaosSample {
            n,
            replication: r,
            gain: Some(rep.gain),
            gap: Some(*d),
            w_distance: rep.w_distance,
        }));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let gap_fit = fit_loglog(&xs, &rows.iter().map(|r| r.gap.unwrap_or(0.0)).collect::<Vec<_>>());
    let w_fit = fit_loglog(&xs, &rows.iter().map(|r| r.w_mean).collect::<Vec<_>>());
    Ok(ChaosReport {
        ns: ns.to_vec(),
        replications: cfg.replications,
        seed: cfg.seed,
        limit_gain: Some(limit.gain),
        rows,
        gap_fit,
        w_fit,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::FiniteMetricSpace;
    use std::sync::Arc;

    #[test]
    fn fit_recovers_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_loglog(&xs, &[1.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn dirac_has_zero_distance() {
        let sp = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0, 2.0]).unwrap());
        let rep = empirical_measure_rate(&DiscreteMeasure::dirac(sp, 1), &[1, 10, 100], 30, 3, Execution::Sequential)
            .unwrap();
        assert!(rep.rows.iter().all(|r| r.w_mean == 0.0));
        assert!(rep.w_fit.is_none());
    }

    #[test]
    fn bernoulli_matches_mean_absolute_deviation() {
        let sp = Arc::new(FiniteMetricSpace::discrete(vec!["a".into(), "b".into()], None).unwrap());
        let nu = DiscreteMeasure::uniform(sp);
        let ns = [16, 64, 256, 1024];
        let rep = empirical_measure_rate(&nu, &ns, 400, 11, Execution::Parallel).unwrap();
        for row in &rep.rows {
            // exact E|S/N - 1/2| for S ~ Bin(N, 1/2)
            let n = row.n;
            let mut exact = 0.0;
            let mut logc = 0.0f64;
            for k in 0..=n {
                if k > 0 {
                    logc += ((n - k + 1) as f64).ln() - (k as f64).ln();
                }
                exact += (logc - n as f64 * 2f64.ln()).exp() * (k as f64 / n as f64 - 0.5).abs();
            }
            assert!((row.w_mean - exact).abs() < 4.0 * row.w_ci.max(1e-3), "N={n}: {} vs {exact}", row.w_mean);
        }
        let fit = rep.w_fit.unwrap();
        assert!((-0.6..=-0.4).contains(&fit.slope), "{fit:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let sp = Arc::new(FiniteMetricSpace::euclidean(&[0.0, 1.0]).unwrap());
        let nu = DiscreteMeasure::uniform(sp);
        assert!(empirical_measure_rate(&nu, &[10, 10], 30, 0, Execution::Sequential).is_err());
        assert!(empirical_measure_rate(&nu, &[], 30, 0, Execution::Sequential).is_err());
        assert!(empirical_measure_rate(&nu, &[10], 29, 0, Execution::Sequential).is_err());
    }
}
