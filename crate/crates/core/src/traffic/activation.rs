use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use super::{AlarmScenario, CellGeometry};
use crate::rng::substream;
use crate::{Error, Result};

/// Number of newly activated stations per time bin, counted from `origin_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationCurve {
    pub origin_s: f64,
    pub bin_width_s: f64,
    pub counts: Vec<u64>,
}

impl ActivationCurve {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn occupied_range(&self) -> Option<(usize, usize)> {
        let first = self.counts.iter().position(|&c| c > 0)?;
        let last = self.counts.iter().rposition(|&c| c > 0)?;
        Some((first, last))
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Activation period: from the start of the first occupied bin to the end
    /// of the last one.
    pub fn span_s(&self) -> Option<f64> {
        self.occupied_range()
            .map(|(f, l)| (l - f + 1) as f64 * self.bin_width_s)
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.origin_s + i as f64 * self.bin_width_s
    }

    /// Writes `bin_start_s,count` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start_s,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_start(i), c)?;
        }
        Ok(())
    }
}

/// Bins the activation instants of the stations triggered by `scenario`.
/// Each station is triggered independently with its correlation factor.
pub fn activation_curve(
    geometry: &CellGeometry,
    scenario: &AlarmScenario,
    bin_width_s: f64,
    seed: u64,
) -> Result<ActivationCurve> {
    if !(bin_width_s > 0.0) {
        return Err(Error::invalid("bin_width_s", "must be positive"));
    }
    scenario.validate()?;
    let mut rng = substream(seed, 0);
    let mut counts: Vec<u64> = Vec::new();
    for p in geometry.positions() {
        let psi = scenario.trigger_probability(p);
        if psi > 0.0 && rng.random::<f64>() < psi {
            let offset = scenario.activation_time(p) - scenario.t_a_s;
            let bin = (offset / bin_width_s).floor() as usize;
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
    }
    Ok(ActivationCurve {
        origin_s: scenario.t_a_s,
        bin_width_s,
        counts,
    })
}

/// Beta density of activation instants on `[0, span]`.
pub fn beta_pdf(t: f64, alpha: f64, beta: f64, span: f64) -> f64 {
    if !(0.0..=span).contains(&t) {
        return 0.0;
    }
    let x = t / span;
    x.powf(alpha - 1.0) * (1.0 - x).powf(beta - 1.0) / (ln_beta(alpha, beta).exp() * span)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub alpha: f64,
    pub beta: f64,
    pub t_span_s: f64,
    /// Sum of squared differences between observed and fitted bin fractions.
    pub residual: f64,
}

/// Least-squares Beta fit of a binned activation curve.
///
/// The activation period is fixed to the observed span; the shapes minimize
/// the squared error between the observed bin fractions and the Beta mass of
/// each bin, starting from the method-of-moments estimate.
pub fn fit_beta(curve: &ActivationCurve) -> Result<BetaFit> {
    let (first, last) = curve
        .occupied_range()
        .ok_or_else(|| Error::Unfittable("empty curve".into()))?;
    if curve.nonempty_bins() < 2 {
        return Err(Error::Unfittable("all activations fall in one bin".into()));
    }
    let observed: Vec<f64> = {
        let total = curve.total() as f64;
        curve.counts[first..=last]
            .iter()
            .map(|&c| c as f64 / total)
            .collect()
    };
    let bins = observed.len();
    let span = bins as f64 * curve.bin_width_s;

    let (mean, var) = {
        let centers = (0..bins).map(|i| (i as f64 + 0.5) / bins as f64);
        let mean: f64 = centers.clone().zip(&observed).map(|(x, w)| x * w).sum();
        let var: f64 = centers.zip(&observed).map(|(x, w)| w * (x - mean).powi(2)).sum();
        (mean, var)
    };
    let common = (mean * (1.0 - mean) / var - 1.0).max(0.1);
    let start = [(mean * common).ln(), ((1.0 - mean) * common).ln()];

    let sse = |v: &[f64; 2]| -> f64 {
        let (a, b) = (v[0].exp(), v[1].exp());
        if !a.is_finite() || !b.is_finite() || a > 1e4 || b > 1e4 {
            return f64::INFINITY;
        }
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (i, y) in observed.iter().enumerate() {
            let cdf = if i + 1 == bins {
                1.0
            } else {
                beta_reg(a, b, (i + 1) as f64 / bins as f64)
            };
            acc += (y - (cdf - prev)).powi(2);
            prev = cdf;
        }
        acc
    };

    let (best, residual) = nelder_mead(sse, start, 0.3, 1e-14, 2000);
    Ok(BetaFit {
        alpha: best[0].exp(),
        beta: best[1].exp(),
        t_span_s: span,
        residual,
    })
}

/// Minimal two-dimensional Nelder-Mead.
fn nelder_mead<F: Fn(&[f64; 2]) -> f64>(
    f: F,
    start: [f64; 2],
    scale: f64,
    tol: f64,
    max_iter: usize,
) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + scale, start[1]],
        [start[0], start[1] + scale],
    ];
    let mut values = simplex.map(|p| f(&p));
    let lerp = |a: &[f64; 2], b: &[f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for _ in 0..max_iter {
        let mut order = [0, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if (values[2] - values[0]).abs() <= tol * (1.0 + values[0].abs()) {
            break;
        }
        let centroid = lerp(&simplex[0], &simplex[1], 0.5);
        let reflected = lerp(&centroid, &simplex[2], -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = lerp(&centroid, &simplex[2], -2.0);
            let fe = f(&expanded);
            (simplex[2], values[2]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < values[1] {
            (simplex[2], values[2]) = (reflected, fr);
        } else {
            let contracted = if fr < values[2] {
                lerp(&centroid, &reflected, 0.5)
            } else {
                lerp(&centroid, &simplex[2], 0.5)
            };
            let fc = f(&contracted);
            if fc < values[2].min(fr) {
                (simplex[2], values[2]) = (contracted, fc);
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(&simplex[0], &simplex[i], 0.5);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    (simplex[best], values[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{place_stations, CorrelationModel, Point};
    use rand_distr::{Beta, Distribution};

    fn scenario(correlation: CorrelationModel) -> AlarmScenario {
        AlarmScenario::new(Point::ORIGIN, 4000.0, 0.0, correlation).unwrap()
    }

    #[test]
    fn beta_pdf_integrates_to_one() {
        for (a, b) in [(1.0, 1.0), (3.0, 4.0), (2.0, 8.0)] {
            let span = 10.0;
            // composite Simpson on a fine grid; all three densities are bounded
            let n = 200_000;
            let h = span / n as f64;
            let mut acc = beta_pdf(0.0, a, b, span) + beta_pdf(span, a, b, span);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * beta_pdf(i as f64 * h, a, b, span);
            }
            let integral = acc * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-6, "({a},{b}): {integral}");
        }
    }

    #[test]
    fn unit_model_activates_everyone_within_radius_over_speed() {
        let g = place_stations(1000, 1000.0, 1).unwrap();
        let c = activation_curve(&g, &scenario(CorrelationModel::Unit), 0.005, 2).unwrap();
        assert_eq!(c.total(), 1000);
        let span = c.span_s().unwrap();
        assert!((span - 0.25).abs() <= 0.005 + 1e-9, "span {span}");
    }

    #[test]
    fn sqrt_cap_reaches_more_stations_but_exp_decay_lasts_longer() {
        let g = place_stations(1000, 1000.0, 4).unwrap();
        let sq = activation_curve(&g, &scenario(CorrelationModel::SqrtCap { d_max_m: 500.0 }), 0.005, 5)
            .unwrap();
        let ex = activation_curve(&g, &scenario(CorrelationModel::ExpDecay { decay_per_m: 0.005 }), 0.005, 5)
            .unwrap();
        assert!(sq.total() > ex.total(), "{} vs {}", sq.total(), ex.total());
        assert!(ex.span_s().unwrap() > sq.span_s().unwrap());
    }

    #[test]
    fn sqrt_cap_total_matches_monte_carlo_mean_factor() {
        // independent oracle: average psi over fresh uniform-disk draws
        let model = CorrelationModel::SqrtCap { d_max_m: 500.0 };
        let mut rng = substream(77, 0);
        let draws = 2_000_000;
        let mean_psi = (0..draws)
            .map(|_| model.psi(1000.0 * rng.random::<f64>().sqrt()))
            .sum::<f64>()
            / draws as f64;
        let n = 20_000;
        let g = place_stations(n, 1000.0, 8).unwrap();
        let c = activation_curve(&g, &scenario(model), 0.005, 9).unwrap();
        let expected = n as f64 * mean_psi;
        // binomial spread of the activations plus the spread of the placement
        let sd = (n as f64 * mean_psi * (1.0 + mean_psi)).sqrt();
        assert!((c.total() as f64 - expected).abs() < 3.0 * sd, "{} vs {expected}", c.total());
    }

    #[test]
    fn rejects_non_positive_bin_width() {
        let g = place_stations(10, 10.0, 1).unwrap();
        assert!(activation_curve(&g, &scenario(CorrelationModel::Unit), 0.0, 1).is_err());
    }

    #[test]
    fn beta_round_trip_recovers_3gpp_shape() {
        let dist = Beta::new(3.0, 4.0).unwrap();
        let mut rng = substream(10, 0);
        let width = 0.05;
        let mut counts = vec![0u64; 200];
        for _ in 0..1_000_000 {
            let t = 10.0 * dist.sample(&mut rng);
            counts[((t / width) as usize).min(199)] += 1;
        }
        let fit = fit_beta(&ActivationCurve { origin_s: 0.0, bin_width_s: width, counts }).unwrap();
        assert!((fit.alpha - 3.0).abs() < 0.15, "{fit:?}");
        assert!((fit.beta - 4.0).abs() < 0.2, "{fit:?}");
        assert!((fit.t_span_s - 10.0).abs() < 0.5);
    }

    #[test]
    fn symmetric_curve_fits_equal_shapes() {
        let counts: Vec<u64> = (0..40)
            .map(|i| {
                let x = (i as f64 + 0.5) / 40.0;
                (1e5 * x * x * (1.0 - x) * (1.0 - x)).round() as u64
            })
            .collect();
        let fit = fit_beta(&ActivationCurve { origin_s: 0.0, bin_width_s: 0.01, counts }).unwrap();
        assert!((fit.alpha - fit.beta).abs() < 0.02 * fit.alpha, "{fit:?}");
    }

    #[test]
    fn unit_model_period_is_an_order_below_3gpp() {
        let g = place_stations(1000, 1000.0, 12).unwrap();
        let c = activation_curve(&g, &scenario(CorrelationModel::Unit), 0.005, 13).unwrap();
        let fit = fit_beta(&c).unwrap();
        assert!(fit.t_span_s < 1.0 && fit.t_span_s > 0.1, "{fit:?}");
    }

    #[test]
    fn single_bin_is_unfittable() {
        let c = ActivationCurve { origin_s: 0.0, bin_width_s: 1.0, counts: vec![0, 12, 0] };
        assert!(matches!(fit_beta(&c), Err(Error::Unfittable(_))));
        let e = ActivationCurve { origin_s: 0.0, bin_width_s: 1.0, counts: vec![] };
        assert!(fit_beta(&e).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let c = ActivationCurve { origin_s: 1.0, bin_width_s: 0.5, counts: vec![2, 0, 3] };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "bin_start_s,count\n1,2\n1.5,0\n2,3\n");
    }
}
