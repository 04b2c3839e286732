use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    /// Points in the window whose regret was not positive (clamped to 1).
    pub nonpositive: usize,
}

/// Least-squares slope of `ln(max(regret, 1))` against `ln t` over
/// `t1 <= t <= t2`.
pub fn fit_regret_exponent(
    points: impl IntoIterator<Item = (u64, f64)>,
    (t1, t2): (u64, u64),
) -> Result<SlopeFit, HarnessError> {
    if t1 == 0 || t2 <= t1 {
        return Err(HarnessError::DegenerateWindow(format!("[{t1}, {t2}]")));
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0usize, 0.0, 0.0, 0.0, 0.0);
    let mut nonpositive = 0;
    for (t, regret) in points {
        if t < t1 || t > t2 {
            continue;
        }
        if regret.is_nan() || regret <= 0.0 {
            nonpositive += 1;
        }
        let x = (t as f64).ln();
        let y = regret.max(1.0).ln();
        n += 1;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if n < 2 {
        return Err(HarnessError::DegenerateWindow(format!("{n} points in [{t1}, {t2}]")));
    }
    let nf = n as f64;
    let denom = nf * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(HarnessError::DegenerateWindow("all points share one time".into()));
    }
    let slope = (nf * sxy - sx * sy) / denom;
    Ok(SlopeFit {
        slope,
        intercept: (sy - slope * sx) / nf,
        points: n,
        nonpositive,
    })
}

/// Quantities entering the high-probability regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub diameter_star: f64,
    pub states_star: usize,
    /// Total number of states over all candidate models.
    pub states_total: usize,
    pub actions: usize,
    pub models: usize,
    pub delta: f64,
    pub horizon: u64,
    pub rho_star: f64,
}

/// Numerical value of the regret bound
///
/// `(8 D S* + 4 sqrt(S*)) sqrt(A ln(48 S* A T^3 / delta)) L (sqrt((AS + |Phi|) T) + (AS + |Phi|) L)
///  + (rho* + D)(AS + |Phi|) L^2` with `L = ln(2T / SA)`.
pub fn evaluate_bound(inputs: &BoundInputs) -> Result<f64, HarnessError> {
    let sa = (inputs.states_total * inputs.actions) as u64;
    if inputs.horizon < sa {
        return Err(HarnessError::HorizonTooShort { t: inputs.horizon, sa });
    }
    let t = inputs.horizon as f64;
    let s_star = inputs.states_star as f64;
    let a = inputs.actions as f64;
    let d = inputs.diameter_star;
    let l = (2.0 * t / sa as f64).ln();
    let width = sa as f64 + inputs.models as f64;
    let lead = (8.0 * d * s_star + 4.0 * s_star.sqrt())
        * (a * (48.0 * s_star * a * t.powi(3) / inputs.delta).ln()).sqrt()
        * l
        * ((width * t).sqrt() + width * l);
    Ok(lead + (inputs.rho_star + d) * width * l * l)
}

/// `S A log2(2T / SA) + |Phi| - 1`.
pub fn episode_bound(states_total: usize, actions: usize, models: usize, horizon: u64) -> f64 {
    let sa = (states_total * actions) as f64;
    sa * (2.0 * horizon as f64 / sa).log2() + models as f64 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_laws() {
        let sqrt_law = (1..=10_000u64).map(|t| (t, 3.0 * (t as f64).sqrt()));
        let fit = fit_regret_exponent(sqrt_law, (100, 10_000)).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-3);
        let linear = (1..=10_000u64).map(|t| (t, 0.2 * t as f64));
        let fit = fit_regret_exponent(linear, (100, 10_000)).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-3);
        assert_eq!(fit.nonpositive, 0);
    }

    #[test]
    fn nonpositive_regret_is_flagged() {
        let fit = fit_regret_exponent((1..=100u64).map(|t| (t, -1.0)), (10, 100)).unwrap();
        assert_eq!(fit.nonpositive, 91);
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn degenerate_windows() {
        let pts = || (1..=10u64).map(|t| (t, t as f64));
        assert!(fit_regret_exponent(pts(), (5, 5)).is_err());
        assert!(fit_regret_exponent(pts(), (0, 5)).is_err());
        assert!(fit_regret_exponent(pts(), (20, 30)).is_err());
    }

    fn inputs(horizon: u64) -> BoundInputs {
        BoundInputs {
            diameter_star: 3.0,
            states_star: 4,
            states_total: 6,
            actions: 2,
            models: 2,
            delta: 0.05,
            horizon,
            rho_star: 0.6,
        }
    }

    #[test]
    fn bound_is_positive_and_scales_like_root_t() {
        assert!(evaluate_bound(&inputs(12)).unwrap() > 0.0);
        let big = 1u64 << 40;
        let ratio = evaluate_bound(&inputs(2 * big)).unwrap() / evaluate_bound(&inputs(big)).unwrap();
        assert!((1.3..=1.7).contains(&ratio), "{ratio}");
        assert!(matches!(
            evaluate_bound(&inputs(11)),
            Err(HarnessError::HorizonTooShort { t: 11, sa: 12 })
        ));
    }

    #[test]
    fn episode_bound_value() {
        // SA = 12, T = 96: 12 * log2(16) + 1.
        assert!((episode_bound(6, 2, 2, 96) - 49.0).abs() < 1e-12);
    }
}
