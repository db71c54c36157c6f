use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian over joint torques.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

fn same_dim(a: usize, b: usize, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: dimension {a} vs {b}")))
    }
}

impl ActionDistribution {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        same_dim(mean.len(), log_std.len(), "mean and log_std")?;
        if let Some(i) = log_std.iter().position(|s| !s.is_finite()) {
            return Err(Error::Numerical {
                index: i,
                what: "log_std is not finite".into(),
            });
        }
        Ok(Self { mean, log_std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|s| s.exp()).collect()
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        same_dim(self.dim(), action.len(), "action")?;
        Ok(gaussian_log_prob(&self.mean, &self.log_std, action))
    }

    /// Gradients of [`log_prob`](Self::log_prob) with respect to the mean and log_std.
    pub fn log_prob_grad(&self, action: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        same_dim(self.dim(), action.len(), "action")?;
        let mut d_mean = Vec::with_capacity(self.dim());
        let mut d_log_std = Vec::with_capacity(self.dim());
        for ((a, m), ls) in action.iter().zip(&self.mean).zip(&self.log_std) {
            let var = (2.0 * ls).exp();
            let diff = a - m;
            d_mean.push(diff / var);
            d_log_std.push(diff * diff / var - 1.0);
        }
        Ok((d_mean, d_log_std))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| s + 0.5 + HALF_LOG_TWO_PI).sum()
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..mean.len() {
        let z = (action[i] - mean[i]) / log_std[i].exp();
        total += -0.5 * z * z - log_std[i] - HALF_LOG_TWO_PI;
    }
    total
}

/// KL(old ‖ new) for diagonal Gaussians given as slices.
pub fn gaussian_kl(old_mean: &[f64], old_log_std: &[f64], new_mean: &[f64], new_log_std: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..old_mean.len() {
        let old_var = (2.0 * old_log_std[i]).exp();
        let new_var = (2.0 * new_log_std[i]).exp();
        let dm = old_mean[i] - new_mean[i];
        total += new_log_std[i] - old_log_std[i] + (old_var + dm * dm) / (2.0 * new_var) - 0.5;
    }
    total
}

pub fn kl_divergence(old: &ActionDistribution, new: &ActionDistribution) -> Result<f64> {
    same_dim(old.dim(), new.dim(), "KL")?;
    Ok(gaussian_kl(&old.mean, &old.log_std, &new.mean, &new.log_std))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(mean: &[f64], log_std: &[f64]) -> ActionDistribution {
        ActionDistribution::new(mean.to_vec(), log_std.to_vec()).unwrap()
    }

    #[test]
    fn log_prob_closed_forms() {
        let unit = d(&[0.3], &[0.0]);
        assert!((unit.log_prob(&[0.3]).unwrap() + 0.9189385332).abs() < 1e-9);
        assert!((unit.log_prob(&[1.3]).unwrap() + 1.4189385332).abs() < 1e-9);

        let pair = d(&[0.1, -0.4], &[0.2, -0.3]);
        let a = [0.5, 0.0];
        let sum = d(&[0.1], &[0.2]).log_prob(&a[..1]).unwrap() + d(&[-0.4], &[-0.3]).log_prob(&a[1..]).unwrap();
        assert!((pair.log_prob(&a).unwrap() - sum).abs() < 1e-14);
        assert!(pair.log_prob(&[0.0]).is_err());
    }

    #[test]
    fn unit_log_std_means_unit_std() {
        assert_eq!(d(&[1.0, 2.0], &[0.0, 0.0]).std(), vec![1.0, 1.0]);
    }

    #[test]
    fn kl_closed_forms() {
        let a = d(&[0.2, -1.0], &[0.1, 0.3]);
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        let shifted = kl_divergence(&d(&[0.0], &[0.0]), &d(&[0.7], &[0.0])).unwrap();
        assert!((shifted - 0.245).abs() < 1e-14);
        let wider = kl_divergence(&d(&[0.0], &[0.0]), &d(&[0.0], &[2f64.ln()])).unwrap();
        assert!((wider - (2f64.ln() + 0.125 - 0.5)).abs() < 1e-14);
        assert!((wider - 0.3181).abs() < 1e-4);
        assert!(kl_divergence(&a, &d(&[0.0], &[0.0])).is_err());
    }

    #[test]
    fn log_prob_gradient_matches_finite_differences() {
        let dist = d(&[0.3, -0.2, 0.9], &[-0.5, 0.1, 0.4]);
        let action = [0.1, 0.4, -1.0];
        let (dm, ds) = dist.log_prob_grad(&action).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut p = dist.clone();
            p.mean[i] += h;
            let mut m = dist.clone();
            m.mean[i] -= h;
            let fd = (p.log_prob(&action).unwrap() - m.log_prob(&action).unwrap()) / (2.0 * h);
            assert!((fd - dm[i]).abs() <= 1e-4 * fd.abs().max(1e-8));
            let mut p = dist.clone();
            p.log_std[i] += h;
            let mut m = dist.clone();
            m.log_std[i] -= h;
            let fd = (p.log_prob(&action).unwrap() - m.log_prob(&action).unwrap()) / (2.0 * h);
            assert!((fd - ds[i]).abs() <= 1e-4 * fd.abs().max(1e-8));
        }
    }

    #[test]
    fn rejects_bad_log_std() {
        assert!(ActionDistribution::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(ActionDistribution::new(vec![0.0], vec![]).is_err());
    }
}
