//! Closed-form routing probabilities and a Monte Carlo check of the
//! route-break probability.
//!
//! Symbols: `lambda` is the packet-arrival rate and `mu` the location-change
//! rate (both exponential), `e_l` the expected route length, `e_n` the number
//! of monitors, `kk` the hop count of a failed self-diagnosis, `p0` the
//! per-step probability of finding the next node and `k` the index of the
//! failing hop.
//!
//! The end-to-end success expression is evaluated as printed, without any
//! normalization; its middle term can be counted once or twice (see
//! [`PsMode`]) and the per-term breakdown is returned so callers can audit
//! either reading.

use crate::error::SimError;
use crate::kernel::RngStream;

/// Inputs for the whole family of closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticParams {
    pub lambda: f64,
    pub mu: f64,
    pub e_l: f64,
    pub e_n: u32,
    pub kk: u32,
    pub p0: f64,
    pub k: f64,
    pub n: u32,
    pub r: f64,
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        if !(self.lambda >= 0.0 && self.mu >= 0.0) {
            return bad("rates must be nonnegative");
        }
        if self.lambda + self.mu <= 0.0 {
            return bad("lambda + mu must be positive");
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad("p0 must lie in [0, 1]");
        }
        if !(1.0..).contains(&self.e_l) {
            return bad("e_l must be at least 1");
        }
        if !(1.0..=self.e_l).contains(&self.k) {
            return bad("k must satisfy 1 <= k <= e_l");
        }
        if !(0.0..).contains(&self.r) {
            return bad("r must be nonnegative");
        }
        Ok(())
    }

    pub fn pb(&self) -> Result<f64, SimError> {
        eval_pb(self.lambda, self.mu)
    }

    pub fn ps_inputs(&self) -> Result<PsInputs, SimError> {
        self.validate()?;
        Ok(PsInputs {
            e_l: self.e_l,
            k: self.k,
            kk: self.kk,
            e_n: self.e_n,
            p0: self.p0,
            pb: self.pb()?,
        })
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(SimError::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {p}"
        )))
    }
}

/// `base^exp` for bases in [0, 1] and nonnegative exponents, with `0^0 = 1`.
fn pow(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else {
        base.powf(exp)
    }
}

/// `x^(1/m)`; with `m = 0` only `x = 1` has a defined value.
fn root(x: f64, m: f64) -> Result<f64, SimError> {
    if m == 0.0 {
        if x == 1.0 {
            Ok(1.0)
        } else {
            Err(SimError::InvalidParameter(format!(
                "exponent 1/0 undefined for base {x}"
            )))
        }
    } else {
        Ok(pow(x, 1.0 / m))
    }
}

/// Probability that a route breaks before the next packet arrives: `mu / (mu + lambda)`.
pub fn eval_pb(lambda: f64, mu: f64) -> Result<f64, SimError> {
    if !(lambda >= 0.0 && mu >= 0.0) || !(lambda.is_finite() && mu.is_finite()) {
        return Err(SimError::InvalidParameter(format!(
            "rates must be finite and nonnegative (lambda={lambda}, mu={mu})"
        )));
    }
    if lambda + mu <= 0.0 {
        return Err(SimError::InvalidParameter(
            "lambda and mu cannot both be zero".into(),
        ));
    }
    Ok(mu / (mu + lambda))
}

/// Probability that one monitor finds the route: `(1 - pb)^3`.
pub fn rho(pb: f64) -> f64 {
    pow(1.0 - pb, 3.0)
}

/// Probability that at least one of `e_n` monitors can route.
pub fn eval_pn(pb: f64, e_n: u32) -> Result<f64, SimError> {
    check_prob("pb", pb)?;
    Ok(1.0 - pow(1.0 - rho(pb), e_n as f64))
}

/// Binomial(`e_n`, rho) probability mass over `K = 0..=e_n`.
pub fn eval_pk_distribution(e_n: u32, pb: f64) -> Result<Vec<f64>, SimError> {
    check_prob("pb", pb)?;
    let r = rho(pb);
    let n = e_n as usize;
    let mut coeff = 1.0f64;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            coeff = coeff * (n - k + 1) as f64 / k as f64;
        }
        out.push(coeff * pow(r, k as f64) * pow(1.0 - r, (n - k) as f64));
    }
    Ok(out)
}

/// Self-diagnosis failure over `kk` hops: `(1 - p0)^kk`.
pub fn eval_pf0(p0: f64, kk: u32) -> Result<f64, SimError> {
    check_prob("p0", p0)?;
    Ok(pow(1.0 - p0, kk as f64))
}

/// Failure of all `e_n` monitors: `(1 - p0)^(kk * e_n)`.
pub fn eval_pf1(p0: f64, kk: u32, e_n: u32) -> Result<f64, SimError> {
    check_prob("p0", p0)?;
    Ok(pow(1.0 - p0, kk as f64 * e_n as f64))
}

/// Route-discovery success: `1 - (1 - p0)^kk (1 - p0)^(kk * e_n)`.
pub fn eval_pr(p0: f64, kk: u32, e_n: u32) -> Result<f64, SimError> {
    check_prob("p0", p0)?;
    Ok(1.0 - pow(1.0 - p0, kk as f64) * pow(1.0 - p0, kk as f64 * e_n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsMode {
    /// Middle term counted twice, as the expression is printed.
    Literal,
    /// Middle term counted once.
    Dedup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsInputs {
    pub e_l: f64,
    pub k: f64,
    pub kk: u32,
    pub e_n: u32,
    pub p0: f64,
    pub pb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsBreakdown {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub value: f64,
    /// Whether `value` happens to fall inside [0, 1]; the value is never clamped.
    pub in_unit_interval: bool,
}

/// End-to-end success expression, raw and per term.
pub fn eval_ps(inp: &PsInputs, mode: PsMode) -> Result<PsBreakdown, SimError> {
    check_prob("p0", inp.p0)?;
    check_prob("pb", inp.pb)?;
    if !(inp.e_l >= inp.k && inp.k >= 0.0) {
        return Err(SimError::InvalidParameter(format!(
            "need 0 <= k <= e_l (k={}, e_l={})",
            inp.k, inp.e_l
        )));
    }
    let kk = inp.kk as f64;
    let ken = kk * inp.e_n as f64;
    let pf0 = eval_pf0(inp.p0, inp.kk)?;
    let pf1 = eval_pf1(inp.p0, inp.kk, inp.e_n)?;
    let rest = inp.e_l - inp.k;

    let term1 = pow(1.0 - root(pf0, kk)?, inp.e_l);
    let term2 = rest * pow(1.0 - root(pf1, ken)?, rest);
    let term3 = pow(1.0 - inp.pb, inp.k)
        * (1.0 - pow(1.0 - inp.p0, kk) * pow(1.0 - inp.p0, ken * rest));
    let value = match mode {
        PsMode::Literal => term1 + 2.0 * term2 + term3,
        PsMode::Dedup => term1 + term2 + term3,
    };
    Ok(PsBreakdown {
        term1,
        term2,
        term3,
        value,
        in_unit_interval: (0.0..=1.0).contains(&value),
    })
}

/// Fraction of trials in which an Exp(`mu`) location change precedes an
/// Exp(`lambda`) packet arrival.
pub fn monte_carlo_pb(
    lambda: f64,
    mu: f64,
    samples: u64,
    stream: &mut RngStream,
) -> Result<f64, SimError> {
    eval_pb(lambda, mu)?;
    if samples == 0 {
        return Err(SimError::InvalidParameter("samples must be >= 1".into()));
    }
    if mu == 0.0 {
        return Ok(0.0);
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let mut breaks = 0u64;
    for _ in 0..samples {
        let change = stream.exponential(mu)?;
        let arrival = stream.exponential(lambda)?;
        if change < arrival {
            breaks += 1;
        }
    }
    Ok(breaks as f64 / samples as f64)
}
