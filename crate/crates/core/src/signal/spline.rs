use super::Knots;
use crate::error::{Error, Result};

/// Natural cubic spline through a set of knots.
///
/// Second derivatives vanish at both end knots. Evaluation outside the knot
/// span returns the value of the nearest end knot.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    t: Vec<f64>,
    v: Vec<f64>,
    /// Second derivative at each knot.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(knots: &Knots) -> Result<Self> {
        let (t, v) = (knots.times(), knots.values());
        let n = t.len();
        if n < 2 {
            return Err(Error::TooFewKnots(n));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicKnots(i + 1));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas algorithm).
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                diag[j] = 2.0 * (h0 + h1);
                upper[j] = h1;
                rhs[j] = 6.0 * ((v[i + 1] - v[i]) / h1 - (v[i] - v[i - 1]) / h0);
            }
            for j in 1..k {
                let lower = t[j + 1] - t[j];
                let w = lower / diag[j - 1];
                diag[j] -= w * upper[j - 1];
                rhs[j] -= w * rhs[j - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for j in (0..k - 1).rev() {
                m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
            }
        }
        Ok(CubicSpline { t: t.to_vec(), v: v.to_vec(), m })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        if x <= self.t[0] {
            return self.v[0];
        }
        if x >= self.t[n - 1] {
            return self.v[n - 1];
        }
        // Segment i such that t[i] <= x < t[i+1].
        let i = self.t.partition_point(|&k| k <= x) - 1;
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - x) / h;
        let b = (x - self.t[i]) / h;
        a * self.v[i]
            + b * self.v[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.m
    }
}

/// Natural cubic spline through `knots`, evaluated at each query time.
pub fn cubic_interpolate(knots: &Knots, query_times: &[f64]) -> Result<Vec<f64>> {
    if query_times.iter().any(|q| !q.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let spline = CubicSpline::new(knots)?;
    Ok(query_times.iter().map(|&q| spline.eval(q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data() {
        let k = Knots::from_pairs(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        assert_eq!(cubic_interpolate(&k, &[0.5, 1.5]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn two_knots_are_linear() {
        let k = Knots::from_pairs(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        assert_eq!(cubic_interpolate(&k, &[0.5]).unwrap(), vec![0.5]);
    }

    #[test]
    fn cubic_samples_reproduced_at_knots() {
        let ts = [0.0, 1.0, 2.0, 3.0];
        let k = Knots::from_pairs(&ts.map(|t: f64| (t, t.powi(3)))).unwrap();
        let out = cubic_interpolate(&k, &ts).unwrap();
        for (o, t) in out.iter().zip(ts) {
            assert!((o - t.powi(3)).abs() < 1e-9);
        }
    }

    #[test]
    fn clamps_outside_span() {
        let k = Knots::from_pairs(&[(1.0, 2.0), (2.0, 5.0), (3.0, -1.0)]).unwrap();
        assert_eq!(cubic_interpolate(&k, &[-10.0, 99.0]).unwrap(), vec![2.0, -1.0]);
    }

    #[test]
    fn natural_boundary() {
        let k = Knots::from_pairs(&[(0.0, 0.0), (1.0, 3.0), (2.5, -1.0), (3.0, 2.0)]).unwrap();
        let s = CubicSpline::new(&k).unwrap();
        assert_eq!(s.second_derivatives()[0], 0.0);
        assert_eq!(*s.second_derivatives().last().unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let one = Knots::from_pairs(&[(0.0, 1.0)]).unwrap();
        assert!(matches!(cubic_interpolate(&one, &[0.0]), Err(Error::TooFewKnots(1))));
        assert!(Knots::from_pairs(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }
}
