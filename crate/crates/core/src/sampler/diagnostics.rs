use serde::{Deserialize, Serialize};

use super::ChainOutput;
use crate::error::{Error, Result};

/// Split potential scale reduction factor.
///
/// `value` is `+inf` with `degenerate = true` when the pooled within-chain
/// variance is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RHat {
    pub value: f64,
    pub degenerate: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Split-R-hat over equal-length series; each series is halved (a middle
/// draw is dropped when the length is odd).
pub fn gelman_rubin_series(chains: &[Vec<f64>]) -> Result<RHat> {
    if chains.len() < 2 {
        return Err(Error::InvalidArgument("R-hat needs at least two chains".into()));
    }
    let len = chains[0].len();
    if len < 10 || chains.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidArgument(
            "R-hat needs equal chain lengths of at least 10".into(),
        ));
    }
    let half = len / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[len - half..]])
        .collect();
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let within = mean(&halves.iter().map(|h| sample_var(h)).collect::<Vec<_>>());
    let between = n * sample_var(&means);
    if !(within > 0.0) {
        return Ok(RHat {
            value: f64::INFINITY,
            degenerate: true,
        });
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok(RHat {
        value: (var_plus / within).sqrt(),
        degenerate: false,
    })
}

/// R-hat for the scalar picked out of each chain by `selector`.
pub fn gelman_rubin(chains: &[ChainOutput], selector: impl Fn(&ChainOutput) -> Vec<f64>) -> Result<RHat> {
    let series: Vec<Vec<f64>> = chains.iter().map(selector).collect();
    gelman_rubin_series(&series)
}

/// R-hat for every `alpha`, `beta`, `log_tau` and (when it moves) `rho` column.
pub fn rhat_table(chains: &[ChainOutput], rho_fixed: bool, tau_fixed: bool) -> Result<Vec<(String, RHat)>> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidArgument("no chains".into()))?;
    let mut columns: Vec<usize> = (0..first.k).collect();
    columns.extend((0..first.j).map(|j| first.beta_offset() + j));
    if !tau_fixed {
        columns.push(first.log_tau_index());
    }
    if !rho_fixed {
        columns.push(first.rho_index());
    }
    columns
        .into_iter()
        .map(|c| Ok((first.names[c].clone(), gelman_rubin(chains, |o| o.column(c))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_chains_are_degenerate() {
        let r = gelman_rubin_series(&[vec![1.0; 20], vec![1.0; 20]]).unwrap();
        assert!(r.degenerate && r.value.is_infinite());
    }

    #[test]
    fn separated_chains_flagged() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin() * 0.01).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 5.0).collect();
        let r = gelman_rubin_series(&[a, b]).unwrap();
        assert!(r.value > 1.1);
        let r = gelman_rubin_series(&[vec![0.0; 20], vec![3.0; 20]]).unwrap();
        assert!(r.value > 1.1);
    }

    #[test]
    fn iid_normal_chains_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let chains: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let r = gelman_rubin_series(&chains).unwrap();
        assert!((0.999..=1.01).contains(&r.value), "{}", r.value);
    }

    #[test]
    fn argument_checks() {
        assert!(gelman_rubin_series(&[vec![0.0; 20]]).is_err());
        assert!(gelman_rubin_series(&[vec![0.0; 20], vec![0.0; 19]]).is_err());
        assert!(gelman_rubin_series(&[vec![0.0; 5], vec![0.0; 5]]).is_err());
    }
}
