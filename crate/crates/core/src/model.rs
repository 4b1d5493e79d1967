//! Closed-form checkpoint/restart overhead models.
//!
//! With failure rate `λ`, checkpoint cost `T_ckp`, recovery cost `T_rc` and a
//! Young-optimal interval, the expected run time of `N` iterations of length
//! `T_it` is `N·T_it / (1 − √(2λT_ckp) − λT_rc)`. Lossy checkpointing adds
//! `λ·N′·T_it` to the subtracted term, where `N′` counts the extra iterations
//! one lossy recovery costs. Every formula here is meaningless once that
//! denominator reaches zero; such inputs return [`Error::Saturated`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be non-negative, got {v}")))
    }
}

/// Young's interval `√(2·T_f·T_ckp)` in time units.
pub fn young_interval(t_f: f64, t_ckp: f64) -> Result<f64> {
    positive("T_f", t_f)?;
    positive("T_ckp", t_ckp)?;
    Ok((2.0 * t_f * t_ckp).sqrt())
}

/// Young's interval expressed in iterations, rounded to the nearest count ≥ 1.
pub fn young_iterations(t_f: f64, t_ckp: f64, t_it: f64) -> Result<usize> {
    positive("T_it", t_it)?;
    Ok(((young_interval(t_f, t_ckp)? / t_it).round() as usize).max(1))
}

/// `f(t, λ) = √(2λt) + λt`, the per-unit-time loss from checkpoints of cost `t`.
pub fn failure_cost_fraction(t: f64, lambda: f64) -> f64 {
    (2.0 * lambda * t).sqrt() + lambda * t
}

fn fraction(numerator: f64) -> Result<f64> {
    let denominator = 1.0 - numerator;
    if denominator <= 0.0 {
        return Err(Error::Saturated { denominator });
    }
    Ok(numerator / denominator)
}

/// Expected total time `N·T_it / (1 − √(2λT_ckp) − λT_rc)`.
pub fn expected_total_time(lambda: f64, n: f64, t_it: f64, t_ckp: f64, t_rc: f64) -> Result<f64> {
    Ok(n * t_it + overhead_exact(lambda, n, t_it, t_ckp, t_rc)?)
}

/// Expected fault-tolerance overhead `T_t − N·T_it` with distinct `T_rc`.
pub fn overhead_exact(lambda: f64, n: f64, t_it: f64, t_ckp: f64, t_rc: f64) -> Result<f64> {
    non_negative("lambda", lambda)?;
    non_negative("N", n)?;
    positive("T_it", t_it)?;
    non_negative("T_ckp", t_ckp)?;
    non_negative("T_rc", t_rc)?;
    Ok(n * t_it * fraction((2.0 * lambda * t_ckp).sqrt() + lambda * t_rc)?)
}

/// Overhead with `T_rc ≈ T_ckp`.
pub fn overhead_traditional(lambda: f64, n: f64, t_it: f64, t_ckp: f64) -> Result<f64> {
    overhead_exact(lambda, n, t_it, t_ckp, t_ckp)
}

/// Overhead relative to productive time, `f(T_ckp, λ) / (1 − f(T_ckp, λ))`.
pub fn overhead_ratio_traditional(lambda: f64, t_ckp: f64) -> Result<f64> {
    non_negative("lambda", lambda)?;
    non_negative("T_ckp", t_ckp)?;
    fraction(failure_cost_fraction(t_ckp, lambda))
}

/// Lossy overhead with a distinct lossy recovery cost.
pub fn overhead_lossy_exact(
    lambda: f64,
    n: f64,
    t_it: f64,
    t_ckp_lossy: f64,
    t_rc_lossy: f64,
    n_prime: f64,
) -> Result<f64> {
    non_negative("lambda", lambda)?;
    non_negative("N", n)?;
    positive("T_it", t_it)?;
    non_negative("T_ckp^lossy", t_ckp_lossy)?;
    non_negative("T_rc^lossy", t_rc_lossy)?;
    if !n_prime.is_finite() {
        return Err(invalid("N' must be finite"));
    }
    let loss = (2.0 * lambda * t_ckp_lossy).sqrt() + lambda * t_rc_lossy + lambda * n_prime * t_it;
    Ok(n * t_it * fraction(loss)?)
}

/// Lossy overhead with `T_rc^lossy ≈ T_ckp^lossy`.
pub fn overhead_lossy(lambda: f64, n: f64, t_it: f64, t_ckp_lossy: f64, n_prime: f64) -> Result<f64> {
    overhead_lossy_exact(lambda, n, t_it, t_ckp_lossy, t_ckp_lossy, n_prime)
}

/// Largest `N′` for which lossy checkpointing is no slower than traditional:
/// `(f(T_ckp^trad, λ) − f(T_ckp^lossy, λ)) / (λ·T_it)`. `+∞` when `λ = 0`.
pub fn n_prime_bound(lambda: f64, t_it: f64, t_ckp_trad: f64, t_ckp_lossy: f64) -> Result<f64> {
    non_negative("lambda", lambda)?;
    positive("T_it", t_it)?;
    non_negative("T_ckp^trad", t_ckp_trad)?;
    non_negative("T_ckp^lossy", t_ckp_lossy)?;
    if lambda == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((failure_cost_fraction(t_ckp_trad, lambda) - failure_cost_fraction(t_ckp_lossy, lambda)) / (lambda * t_it))
}

/// Whether a measured `N′` keeps lossy checkpointing worthwhile.
pub fn lossy_worthwhile(n_prime: f64, lambda: f64, t_it: f64, t_ckp_trad: f64, t_ckp_lossy: f64) -> Result<bool> {
    Ok(n_prime <= n_prime_bound(lambda, t_it, t_ckp_trad, t_ckp_lossy)?)
}

/// Parameter set for the lossy-vs-traditional comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfModelParams {
    pub lambda: f64,
    pub t_it: f64,
    pub t_ckp_trad: f64,
    pub t_ckp_lossy: f64,
    /// Defaults to `t_ckp_trad`.
    pub t_rc: Option<f64>,
    /// Defaults to `t_ckp_lossy`.
    pub t_rc_lossy: Option<f64>,
    pub n_iterations: f64,
    pub n_prime: Option<f64>,
}

/// Both overheads and the decision bound for one parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub overhead_traditional: f64,
    pub overhead_lossy: Option<f64>,
    pub n_prime_bound: f64,
    pub worthwhile: Option<bool>,
}

impl PerfModelParams {
    pub fn compare(&self) -> Result<ModelComparison> {
        let t_rc = self.t_rc.unwrap_or(self.t_ckp_trad);
        let t_rc_lossy = self.t_rc_lossy.unwrap_or(self.t_ckp_lossy);
        let overhead_traditional = overhead_exact(self.lambda, self.n_iterations, self.t_it, self.t_ckp_trad, t_rc)?;
        let overhead_lossy = self
            .n_prime
            .map(|np| overhead_lossy_exact(self.lambda, self.n_iterations, self.t_it, self.t_ckp_lossy, t_rc_lossy, np))
            .transpose()?;
        let bound = n_prime_bound(self.lambda, self.t_it, self.t_ckp_trad, self.t_ckp_lossy)?;
        Ok(ModelComparison {
            overhead_traditional,
            overhead_lossy,
            n_prime_bound: bound,
            worthwhile: self.n_prime.map(|np| np <= bound),
        })
    }
}

/// One cell of the overhead-ratio surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda_per_unit: f64,
    pub t_ckp: f64,
    /// `+∞` for saturated cells.
    pub overhead_ratio: f64,
    pub saturated: bool,
}

pub const SWEEP_CSV_HEADER: &str = "lambda_per_unit,t_ckp,overhead_ratio,saturated";

/// Overhead ratio over a `λ × T_ckp` grid; saturated cells are flagged.
pub fn sweep_overhead_surface(lambdas: &[f64], t_ckps: &[f64]) -> Result<Vec<SweepCell>> {
    if lambdas.is_empty() || t_ckps.is_empty() {
        return Err(invalid("sweep grids must be nonempty"));
    }
    let mut cells = Vec::with_capacity(lambdas.len() * t_ckps.len());
    for &lambda in lambdas {
        for &t_ckp in t_ckps {
            let cell = match overhead_ratio_traditional(lambda, t_ckp) {
                Ok(r) => SweepCell {
                    lambda_per_unit: lambda,
                    t_ckp,
                    overhead_ratio: r,
                    saturated: false,
                },
                Err(Error::Saturated { .. }) => SweepCell {
                    lambda_per_unit: lambda,
                    t_ckp,
                    overhead_ratio: f64::INFINITY,
                    saturated: true,
                },
                Err(e) => return Err(e),
            };
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// `0, step, …` up to 3.5 failures per hour, expressed per second.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=14).map(|i| i as f64 * 0.25 / 3600.0).collect()
}

/// `0, 10, …, 140` seconds.
pub fn default_tckp_grid() -> Vec<f64> {
    (0..=14).map(|i| i as f64 * 10.0).collect()
}

pub fn sweep_to_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.lambda_per_unit, c.t_ckp, c.overhead_ratio, c.saturated
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: f64 = 1.0 / 3600.0;

    #[test]
    fn young_examples() {
        let k = young_interval(3600.0, 120.0).unwrap();
        assert!((k - 864000f64.sqrt()).abs() < 1e-9);
        assert!((k - 929.516).abs() < 1e-3);
        assert!(young_interval(3600.0, 1e-300).unwrap() < 1e-140);
        let d = young_interval(7200.0, 240.0).unwrap();
        assert!((d - 2.0 * k).abs() < 1e-9);
        assert_eq!(young_iterations(3600.0, 120.0, 1.2).unwrap(), 775);
        assert_eq!(young_iterations(1.0, 1e-6, 100.0).unwrap(), 1);
        assert!(young_interval(0.0, 1.0).is_err());
        assert!(young_interval(1.0, -1.0).is_err());
    }

    #[test]
    fn hourly_mtti_ratio() {
        let r = overhead_ratio_traditional(LAMBDA, 120.0).unwrap();
        let f = (240.0f64 / 3600.0).sqrt() + 120.0 / 3600.0;
        assert!((r - f / (1.0 - f)).abs() < 1e-15);
        assert!((r - 0.4114).abs() < 1e-3, "{r}");
        assert_eq!(overhead_ratio_traditional(0.0, 120.0).unwrap(), 0.0);
    }

    #[test]
    fn ratio_diverges_near_pole() {
        // f(t) = 1 at √(2λt) = √3 − 1
        let t_pole = (3f64.sqrt() - 1.0).powi(2) / (2.0 * LAMBDA);
        let near = overhead_ratio_traditional(LAMBDA, t_pole * (1.0 - 1e-9)).unwrap();
        assert!(near > 1e6);
        assert!(matches!(
            overhead_ratio_traditional(LAMBDA, t_pole * 1.01),
            Err(Error::Saturated { .. })
        ));
    }

    #[test]
    fn lossy_degenerates_to_traditional() {
        let a = overhead_lossy(LAMBDA, 5875.0, 1.2, 120.0, 0.0).unwrap();
        let b = overhead_traditional(LAMBDA, 5875.0, 1.2, 120.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worked_example_bound() {
        let bound = n_prime_bound(LAMBDA, 1.2, 120.0, 25.0).unwrap();
        assert!((bound - 500.0).abs() <= 1.0, "{bound}");
        assert_eq!(bound.floor(), 500.0);
        assert_eq!(n_prime_bound(LAMBDA, 1.2, 60.0, 60.0).unwrap(), 0.0);
        assert_eq!(n_prime_bound(0.0, 1.2, 120.0, 25.0).unwrap(), f64::INFINITY);
        // rearranged identity
        let lhs = bound * LAMBDA * 1.2 + failure_cost_fraction(25.0, LAMBDA);
        assert!((lhs - failure_cost_fraction(120.0, LAMBDA)).abs() < 1e-14);
    }

    #[test]
    fn bound_is_the_break_even_point() {
        let trad = overhead_traditional(LAMBDA, 5875.0, 1.2, 120.0).unwrap();
        let at_500 = overhead_lossy(LAMBDA, 5875.0, 1.2, 25.0, 500.0).unwrap();
        assert!(((at_500 - trad) / trad).abs() < 5e-3);
        let at_1000 = overhead_lossy(LAMBDA, 5875.0, 1.2, 25.0, 1000.0).unwrap();
        assert!(at_1000 > trad);
        assert!(lossy_worthwhile(499.0, LAMBDA, 1.2, 120.0, 25.0).unwrap());
        assert!(!lossy_worthwhile(501.0, LAMBDA, 1.2, 120.0, 25.0).unwrap());
    }

    #[test]
    fn params_compare() {
        let p = PerfModelParams {
            lambda: LAMBDA,
            t_it: 1.2,
            t_ckp_trad: 120.0,
            t_ckp_lossy: 25.0,
            t_rc: None,
            t_rc_lossy: None,
            n_iterations: 5875.0,
            n_prime: Some(250.0),
        };
        let c = p.compare().unwrap();
        assert_eq!(c.worthwhile, Some(true));
        assert!(c.overhead_lossy.unwrap() < c.overhead_traditional);
    }

    #[test]
    fn sweep_surface() {
        let cells = sweep_overhead_surface(&default_lambda_grid(), &default_tckp_grid()).unwrap();
        assert_eq!(cells.len(), 15 * 15);
        let anchor = cells
            .iter()
            .find(|c| (c.lambda_per_unit - LAMBDA).abs() < 1e-12 && c.t_ckp == 120.0)
            .unwrap();
        assert!((anchor.overhead_ratio - 0.4114).abs() < 1e-3);
        assert!(cells.iter().filter(|c| c.lambda_per_unit == 0.0).all(|c| c.overhead_ratio == 0.0));
        // monotone along both axes
        for i in 0..15 {
            for j in 0..15 {
                let c = cells[i * 15 + j];
                if j + 1 < 15 {
                    assert!(cells[i * 15 + j + 1].overhead_ratio >= c.overhead_ratio);
                }
                if i + 1 < 15 {
                    assert!(cells[(i + 1) * 15 + j].overhead_ratio >= c.overhead_ratio);
                }
            }
        }
        let csv = sweep_to_csv(&cells);
        assert!(csv.starts_with("lambda_per_unit,t_ckp,overhead_ratio,saturated\n"));
        assert!(sweep_overhead_surface(&[], &[1.0]).is_err());
    }

    #[test]
    fn saturated_cells_flagged() {
        let cells = sweep_overhead_surface(&[0.01], &[100.0]).unwrap();
        assert!(cells[0].saturated);
        assert_eq!(cells[0].overhead_ratio, f64::INFINITY);
    }
}
