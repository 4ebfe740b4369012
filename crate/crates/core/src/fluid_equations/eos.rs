use num_traits::{One, Zero};

use crate::energy_stress::{to_f64, Generator, Rational};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum EosKind {
    /// `p = w ρ`.
    Linear { w: Rational },
    /// Piecewise-linear `ρ(p)` through sorted samples.
    Tabulated { p: Vec<f64>, rho: Vec<f64> },
    /// `ρ = F(u)`, `p = 2uF′(u) − F(u)` with `u = n²`.
    Generator(Generator),
}

/// Barotropic equation of state with its fluid index `f(p)`, normalized by
/// `f(p₀) = 1`.
#[derive(Debug, Clone)]
pub struct EquationOfState {
    pub kind: EosKind,
    pub reference_pressure: f64,
}

impl EquationOfState {
    pub fn linear(w: Rational, reference_pressure: f64) -> Self {
        EquationOfState {
            kind: EosKind::Linear { w },
            reference_pressure,
        }
    }

    /// `p = (2k − 1) ρ`.
    pub fn from_exponent(k: Rational, reference_pressure: f64) -> Self {
        Self::linear(k * 2 - 1, reference_pressure)
    }

    pub fn stiff(reference_pressure: f64) -> Self {
        Self::linear(Rational::one(), reference_pressure)
    }

    pub fn radiation(reference_pressure: f64) -> Self {
        Self::linear(Rational::new(1, 3), reference_pressure)
    }

    pub fn dust() -> Self {
        Self::linear(Rational::zero(), 1.0)
    }

    pub fn cosmological_constant(reference_pressure: f64) -> Self {
        Self::linear(-Rational::one(), reference_pressure)
    }

    pub fn quintessence(reference_pressure: f64) -> Self {
        Self::linear(Rational::new(-1, 3), reference_pressure)
    }

    pub fn tabulated(p: Vec<f64>, rho: Vec<f64>, reference_pressure: f64) -> Result<Self> {
        if p.len() != rho.len() || p.len() < 2 {
            return Err(Error::Domain("tabulated EoS needs at least two matching samples".into()));
        }
        if p.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("tabulated pressures must be strictly increasing".into()));
        }
        Ok(EquationOfState {
            kind: EosKind::Tabulated { p, rho },
            reference_pressure,
        })
    }

    pub fn generator(gen: Generator, reference_pressure: f64) -> Self {
        EquationOfState {
            kind: EosKind::Generator(gen),
            reference_pressure,
        }
    }

    /// Exponent `w/(1+w)` with `f = (p/p₀)^{w/(1+w)}` for linear laws.
    pub fn index_exponent(&self) -> Result<Rational> {
        match &self.kind {
            EosKind::Linear { w } => {
                if w.is_zero() {
                    return Err(Error::EosSingular("dust: ρ is not a function of p".into()));
                }
                if *w == -Rational::one() {
                    return Err(Error::EosSingular("ρ + p = 0: the fluid index is undefined".into()));
                }
                Ok(w / (w + 1))
            }
            _ => Err(Error::Unsupported("index exponent exists only for linear laws".into())),
        }
    }

    pub fn rho(&self, p: f64) -> Result<f64> {
        match &self.kind {
            EosKind::Linear { w } => {
                if w.is_zero() {
                    return Err(Error::EosSingular("dust: ρ is not a function of p".into()));
                }
                Ok(p / to_f64(*w))
            }
            EosKind::Tabulated { p: ps, rho } => interpolate(ps, rho, p),
            EosKind::Generator(g) => {
                let u = invert_generator(g, p)?;
                Ok((g.f)(u))
            }
        }
    }

    /// `ln f(p)`.
    pub fn ln_index(&self, p: f64) -> Result<f64> {
        let p0 = self.reference_pressure;
        match &self.kind {
            EosKind::Linear { .. } => {
                let e = to_f64(self.index_exponent()?);
                if !(p / p0 > 0.0) {
                    return Err(Error::Domain(format!(
                        "pressure {p} and reference {p0} must share sign for a linear index"
                    )));
                }
                Ok(e * (p / p0).ln())
            }
            EosKind::Tabulated { .. } => {
                let integrand = |q: f64| -> Result<f64> {
                    let s = self.rho(q)? + q;
                    if s == 0.0 {
                        return Err(Error::EosSingular(format!("ρ + p = 0 at p = {q}")));
                    }
                    Ok(1.0 / s)
                };
                adaptive_simpson(&integrand, p0, p, 1e-13)
            }
            EosKind::Generator(g) => {
                // f = n F′(n²)
                let u = invert_generator(g, p)?;
                let u0 = invert_generator(g, p0)?;
                let num = u.sqrt() * (g.df)(u);
                let den = u0.sqrt() * (g.df)(u0);
                if !(num / den > 0.0) {
                    return Err(Error::EosSingular("F′ vanishes or changes sign".into()));
                }
                Ok((num / den).ln())
            }
        }
    }

    pub fn index(&self, p: f64) -> Result<f64> {
        Ok(self.ln_index(p)?.exp())
    }

    /// `f′ = f / (ρ + p)`.
    pub fn index_derivative(&self, p: f64) -> Result<f64> {
        let s = self.rho(p)? + p;
        if s == 0.0 {
            return Err(Error::EosSingular(format!("ρ + p = 0 at p = {p}")));
        }
        Ok(self.index(p)? / s)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let last = xs.len() - 1;
    if !(x >= xs[0] && x <= xs[last]) {
        return Err(Error::Domain(format!("p = {x} outside the tabulated range")));
    }
    let i = match xs.binary_search_by(|v| v.partial_cmp(&x).expect("finite")) {
        Ok(i) => return Ok(ys[i]),
        Err(i) => i - 1,
    };
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    Ok(ys[i] + t * (ys[i + 1] - ys[i]))
}

fn generator_pressure(g: &Generator, u: f64) -> f64 {
    2.0 * u * (g.df)(u) - (g.f)(u)
}

/// Solve `p(u) = p` for `u > 0` by bracketing and bisection.
fn invert_generator(g: &Generator, p: f64) -> Result<f64> {
    let f = |u: f64| generator_pressure(g, u) - p;
    let mut lo = 1e-12;
    let mut hi = 1.0;
    let mut tries = 0;
    while f(lo).signum() == f(hi).signum() {
        lo *= 1e-2;
        hi *= 10.0;
        tries += 1;
        if tries > 40 || !f(hi).is_finite() {
            return Err(Error::Domain(format!("pressure {p} is not attained by the generator")));
        }
    }
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radiation_index_is_quarter_power() {
        let eos = EquationOfState::radiation(1.0);
        assert_eq!(eos.index_exponent().unwrap(), Rational::new(1, 4));
        assert!((eos.index(16.0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_laws() {
        assert!(matches!(EquationOfState::dust().ln_index(1.0), Err(Error::EosSingular(_))));
        assert!(matches!(
            EquationOfState::cosmological_constant(1.0).ln_index(1.0),
            Err(Error::EosSingular(_))
        ));
    }

    #[test]
    fn tabulated_matches_linear() {
        let ps: Vec<f64> = (0..=400).map(|i| 0.1 + i as f64 * 0.01).collect();
        let rhos: Vec<f64> = ps.iter().map(|p| 3.0 * p).collect();
        let tab = EquationOfState::tabulated(ps, rhos, 1.0).unwrap();
        let lin = EquationOfState::radiation(1.0);
        for p in [0.2, 0.5, 2.0, 3.7] {
            assert!((tab.ln_index(p).unwrap() - lin.ln_index(p).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn generator_index_matches_power_law() {
        let k = Rational::new(2, 3);
        let eos = EquationOfState::generator(Generator::power(k), 0.5);
        let lin = EquationOfState::from_exponent(k, 0.5);
        for p in [0.1, 0.5, 2.0] {
            assert!((eos.ln_index(p).unwrap() - lin.ln_index(p).unwrap()).abs() < 1e-9, "{p}");
            assert!((eos.rho(p).unwrap() - 3.0 * p).abs() < 1e-9 * p);
        }
    }

    #[test]
    fn index_logarithmic_derivative() {
        let eos = EquationOfState::linear(Rational::new(1, 2), 1.0);
        let p = 1.7;
        let h = 1e-5;
        let d = (eos.ln_index(p + h).unwrap() - eos.ln_index(p - h).unwrap()) / (2.0 * h);
        assert!((d - 1.0 / (eos.rho(p).unwrap() + p)).abs() < 1e-9);
    }
}
