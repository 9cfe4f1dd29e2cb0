use serde::{Deserialize, Serialize};

use super::regret::RegretCurve;
use crate::{Error, Result};

pub const MIN_FIT_POINTS: usize = 8;

/// Largest allowed ratio between the widest and narrowest log-spacing of a
/// checkpoint grid.
pub const SPACING_TOLERANCE: f64 = 1.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    pub t_min: usize,
    pub t_max: usize,
    pub points: usize,
    /// Euclidean norm of the log-log residuals.
    pub residual_norm: f64,
    pub theoretical: Option<f64>,
}

impl RateFit {
    /// `exponent - theoretical`, when a theoretical value is attached.
    pub fn gap(&self) -> Option<f64> {
        self.theoretical.map(|th| self.exponent - th)
    }
}

/// `round(t_min 2^(i/per_octave))` up to `t_max`, deduplicated; always
/// contains `t_min` and `t_max`.
pub fn geometric_checkpoints(t_min: usize, t_max: usize, per_octave: usize) -> Result<Vec<usize>> {
    if t_min < 1 || t_max < t_min {
        return Err(Error::param(
            "checkpoints",
            format!("need 1 <= t_min <= t_max, got {t_min}..{t_max}"),
        ));
    }
    if per_octave < 1 {
        return Err(Error::param("checkpoints", "need at least one point per octave"));
    }
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        let t = (t_min as f64 * 2f64.powf(i as f64 / per_octave as f64)).round() as usize;
        if t > t_max {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
        i += 1;
    }
    if out.last() != Some(&t_max) {
        out.push(t_max);
    }
    Ok(out)
}

/// Checkpoints in the upper half of the grid's log range.
pub fn tail_half(checkpoints: &[usize]) -> Vec<usize> {
    let (Some(&lo), Some(&hi)) = (checkpoints.first(), checkpoints.last()) else {
        return Vec::new();
    };
    let mid = 0.5 * ((lo as f64).ln() + (hi as f64).ln());
    checkpoints
        .iter()
        .copied()
        .filter(|&t| (t as f64).ln() >= mid - 1e-12)
        .collect()
}

fn check_grid(ts: &[usize]) -> Result<()> {
    if ts.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit(format!(
            "{} checkpoints, need at least {MIN_FIT_POINTS}",
            ts.len()
        )));
    }
    if ts[0] < 1 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateFit(
            "checkpoints must be positive and increasing".into(),
        ));
    }
    let gaps: Vec<f64> = ts.windows(2).map(|w| (w[1] as f64 / w[0] as f64).ln()).collect();
    let widest = gaps.iter().copied().fold(0.0, f64::max);
    let narrowest = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    if widest > SPACING_TOLERANCE * narrowest {
        return Err(Error::DegenerateFit(format!(
            "checkpoints are not geometric (log gaps {narrowest:.4}..{widest:.4})"
        )));
    }
    Ok(())
}

/// Least-squares line through `(ln x, ln y)`: `(slope, intercept, residual norm)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit("need at least two paired points".into()));
    }
    if let Some((x, y)) = xs.iter().zip(ys).find(|(x, y)| !(**x > 0.0 && **y > 0.0)) {
        return Err(Error::DegenerateFit(format!("non-positive value at ({x}, {y})")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((slope, intercept, residual))
}

/// Fits `ln cum(T)` against `ln T` over `checkpoints`, where `cum[t-1]` is the
/// cumulative excess at `t`.
pub fn fit_cumulative(cum: &[f64], checkpoints: &[usize], theoretical: Option<f64>) -> Result<RateFit> {
    check_grid(checkpoints)?;
    let t_max = *checkpoints.last().expect("checked non-empty");
    if t_max > cum.len() {
        return Err(Error::HorizonTooLong {
            horizon: t_max,
            available: cum.len(),
        });
    }
    let xs: Vec<f64> = checkpoints.iter().map(|&t| t as f64).collect();
    let ys: Vec<f64> = checkpoints.iter().map(|&t| cum[t - 1]).collect();
    let (exponent, intercept, residual_norm) = fit_power_law(&xs, &ys)?;
    Ok(RateFit {
        exponent,
        intercept,
        t_min: checkpoints[0],
        t_max,
        points: checkpoints.len(),
        residual_norm,
        theoretical,
    })
}

pub fn fit_growth_exponent(curve: &RegretCurve, checkpoints: &[usize], theoretical: Option<f64>) -> Result<RateFit> {
    fit_cumulative(&curve.cumulative_excess(), checkpoints, theoretical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn synthetic(t_max: usize, mut f: impl FnMut(f64) -> f64) -> Vec<f64> {
        (1..=t_max).map(|t| f(t as f64)).collect()
    }

    #[test]
    fn checkpoint_grid() {
        let g = geometric_checkpoints(256, 32768, 1).unwrap();
        assert_eq!(g, vec![256, 512, 1024, 2048, 4096, 8192, 16384, 32768]);
        let g4 = geometric_checkpoints(1024, 32768, 4).unwrap();
        assert_eq!(g4.len(), 21);
        assert_eq!(tail_half(&geometric_checkpoints(256, 32768, 4).unwrap()).len(), 14);
        assert!(geometric_checkpoints(10, 5, 1).is_err());
    }

    #[test]
    fn exact_power_laws() {
        let grid = geometric_checkpoints(256, 32768, 2).unwrap();
        let fit = fit_cumulative(&synthetic(32768, |t| t.powf(0.86)), &grid, Some(0.86)).unwrap();
        assert!((fit.exponent - 0.86).abs() < 1e-9);
        assert!(fit.gap().unwrap().abs() < 1e-9);
        let lin = fit_cumulative(&synthetic(32768, |t| 0.3 * t), &grid, None).unwrap();
        assert!((lin.exponent - 1.0).abs() < 1e-9);
        assert!((lin.intercept - 0.3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn noisy_square_root() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let grid = geometric_checkpoints(256, 32768, 4).unwrap();
        let cum = synthetic(32768, |t| 3.0 * t.sqrt() * (1.0 + rng.gen_range(-0.01..0.01)));
        let fit = fit_cumulative(&cum, &grid, None).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.02, "{}", fit.exponent);
    }

    #[test]
    fn degenerate_inputs() {
        let grid = geometric_checkpoints(256, 32768, 1).unwrap();
        let mut cum = synthetic(32768, |t| t);
        cum[1023] = 0.0;
        assert!(matches!(
            fit_cumulative(&cum, &grid, None),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_cumulative(&cum, &grid[..4], None).is_err());
        let uneven = [1, 2, 4, 8, 16, 32, 64, 1000];
        assert!(fit_cumulative(&synthetic(1000, |t| t), &uneven, None).is_err());
        assert!(matches!(
            fit_cumulative(&synthetic(100, |t| t), &grid, None),
            Err(Error::HorizonTooLong { .. })
        ));
    }
}
