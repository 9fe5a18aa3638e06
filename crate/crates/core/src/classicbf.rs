//! Classical beamforming: the conjugate-phase optimum for a single user,
//! rate metrics, a search-based solver for the localized multi-cell problem,
//! and feedback-bit accounting.

use num_complex::Complex64;
use rand::Rng;

use crate::chanmodel::{stream_rng, ChannelSample, Stream};
use crate::error::{check_dim, invalid, Result};
use crate::models::BeamVector;

/// Linear SNR `rho = P / sigma^2` (with `P = 1`) and interference ratio `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub rho: f64,
    pub alpha: f64,
}

impl RateParams {
    pub fn new(rho: f64, alpha: f64) -> Result<Self> {
        let p = Self { rho, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn from_snr_db(snr_db: f64, alpha: f64) -> Result<Self> {
        Self::new(10f64.powf(snr_db / 10.0), alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("rho must be positive and finite, got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `h^H v`.
pub fn inner(h: &[Complex64], v: &[Complex64]) -> Complex64 {
    h.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

/// `|h^H v|^2`.
pub fn beam_gain(h: &ChannelSample, v: &BeamVector) -> f64 {
    inner(h.as_slice(), v.as_slice()).norm_sqr()
}

/// `v_k = exp(j arg h_k)`, with phase 0 where `h_k = 0`.
pub fn conj_phase_bf(h: &ChannelSample) -> BeamVector {
    let phases: Vec<f64> = h
        .as_slice()
        .iter()
        .map(|z| if z.re == 0.0 && z.im == 0.0 { 0.0 } else { z.arg() })
        .collect();
    BeamVector::from_phases(&phases)
}

/// `log2(1 + rho / n_t |h^H v|^2)`.
pub fn spectral_efficiency(h: &ChannelSample, v: &BeamVector, rho: f64) -> f64 {
    let n = v.n_t() as f64;
    (1.0 + rho / n * beam_gain(h, v)).log2()
}

/// Per-user SINR `|h^H w|^2 / (alpha |g^H w|^2 + 1/rho)` with `w = v / sqrt(n_t)`.
pub fn sinr(h: &ChannelSample, g: &ChannelSample, v: &BeamVector, params: RateParams) -> f64 {
    let n = v.n_t() as f64;
    let desired = beam_gain(h, v) / n;
    let interference = beam_gain(g, v) / n;
    desired / (params.alpha * interference + 1.0 / params.rho)
}

pub fn sinr_and_rate(h: &ChannelSample, g: &ChannelSample, v: &BeamVector, params: RateParams) -> (f64, f64) {
    let s = sinr(h, g, v, params);
    (s, (1.0 + s).log2())
}

pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|s| (1.0 + s).log2()).sum()
}

pub fn mean_rate(sinrs: &[f64]) -> f64 {
    if sinrs.is_empty() {
        return 0.0;
    }
    sum_rate(sinrs) / sinrs.len() as f64
}

/// Result of the multi-cell search.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub beam: BeamVector,
    /// SINR at the returned beam, the argument of the log objective.
    pub sinr: f64,
    /// False when some restart hit the iteration cap before converging.
    pub converged: bool,
}

pub const ORACLE_MAX_ITERS: usize = 500;
pub const ORACLE_TOL: f64 = 1e-9;
pub const ORACLE_DEFAULT_RESTARTS: usize = 8;
const ORACLE_SEED: u64 = 0x0bf0_5eed;

struct LocalProblem<'a> {
    h: &'a [Complex64],
    g: &'a [Complex64],
    alpha: f64,
    noise: f64,
    n: f64,
}

impl LocalProblem<'_> {
    /// Natural-log objective `ln A - ln(alpha B + 1/rho)` and its phase gradient.
    fn eval(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let v: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let sh = inner(self.h, &v);
        let sg = inner(self.g, &v);
        let a = sh.norm_sqr() / self.n;
        let b = sg.norm_sqr() / self.n;
        let d = self.alpha * b + self.noise;
        if let Some(grad) = grad {
            for k in 0..theta.len() {
                // d|s|^2 / dtheta_k = -2 Im(conj(s) conj(x_k) v_k)
                let da = -2.0 * (sh.conj() * self.h[k].conj() * v[k]).im / self.n;
                let db = -2.0 * (sg.conj() * self.g[k].conj() * v[k]).im / self.n;
                grad[k] = da / a - self.alpha * db / d;
            }
        }
        a.ln() - d.ln()
    }
}

/// Phase-space gradient ascent with Armijo backtracking for the localized
/// multi-cell objective `log2(|h^H w|^2 / (alpha |g^H w|^2 + 1/rho))` over
/// unit-modulus beams. Restart 0 starts from `conj_phase_bf(h)`; the rest from
/// seeded random phases. Best SINR wins, ties go to the lowest restart index.
pub fn multicell_bf_oracle(
    h: &ChannelSample,
    g: &ChannelSample,
    params: RateParams,
    restarts: usize,
) -> Result<OracleResult> {
    params.validate()?;
    check_dim(h.n_t(), g.n_t())?;
    if restarts == 0 {
        return Err(invalid("oracle needs at least one restart"));
    }
    let n_t = h.n_t();
    let start = conj_phase_bf(h);
    if h.norm_sqr() == 0.0 {
        return Ok(OracleResult {
            sinr: sinr(h, g, &start, params),
            beam: start,
            converged: true,
        });
    }
    let problem = LocalProblem {
        h: h.as_slice(),
        g: g.as_slice(),
        alpha: params.alpha,
        noise: 1.0 / params.rho,
        n: n_t as f64,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = true;
    for r in 0..restarts {
        let theta0 = if r == 0 {
            start.phases()
        } else {
            let mut rng = stream_rng(ORACLE_SEED, Stream::Training, r as u64);
            (0..n_t).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
        };
        let (value, theta, ok) = ascend(&problem, theta0);
        converged &= ok;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, theta));
        }
    }
    let (_, theta) = best.expect("at least one restart");
    let beam = BeamVector::from_phases(&theta);
    Ok(OracleResult {
        sinr: sinr(h, g, &beam, params),
        beam,
        converged,
    })
}

fn ascend(problem: &LocalProblem<'_>, mut theta: Vec<f64>) -> (f64, Vec<f64>, bool) {
    let n = theta.len();
    let mut grad = vec![0.0; n];
    let mut value = problem.eval(&theta, Some(&mut grad));
    let mut step = 1.0;
    let mut trial = vec![0.0; n];
    for _ in 0..ORACLE_MAX_ITERS {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 || !gnorm2.is_finite() {
            return (value, theta, true);
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            for k in 0..n {
                trial[k] = theta[k] + t * grad[k];
            }
            let v = problem.eval(&trial, None);
            if v >= value + 1e-4 * t * gnorm2 {
                accepted = Some(v);
                break;
            }
            t *= 0.5;
        }
        let Some(new_value) = accepted else {
            return (value, theta, true);
        };
        let gain = new_value - value;
        std::mem::swap(&mut theta, &mut trial);
        value = problem.eval(&theta, Some(&mut grad));
        step = t * 2.0;
        if gain < ORACLE_TOL {
            return (value, theta, true);
        }
    }
    (value, theta, false)
}

/// Codeword elements of one stream, `2 n_t / beta`; `beta` must divide `2 n_t`.
pub fn elements_for_beta(n_t: usize, beta: usize) -> Result<usize> {
    if n_t == 0 {
        return Err(invalid("n_t must be >= 1"));
    }
    if beta == 0 || (2 * n_t) % beta != 0 {
        return Err(invalid(format!("compression ratio {beta} does not divide 2*n_t = {}", 2 * n_t)));
    }
    Ok(2 * n_t / beta)
}

/// Feedback bits of one stream: `(2 n_t / beta) * B`.
pub fn bit_accounting(n_t: usize, bits: u32, beta: usize) -> Result<u64> {
    Ok(elements_for_beta(n_t, beta)? as u64 * bits as u64)
}

/// Per-stream and total bits for the desired/interfering pair.
pub fn bit_accounting_pair(n_t: usize, bits: u32, beta_h: usize, beta_g: usize) -> Result<(u64, u64, u64)> {
    let h = bit_accounting(n_t, bits, beta_h)?;
    let g = bit_accounting(n_t, bits, beta_g)?;
    Ok((h, g, h + g))
}

/// Splits `total_elements` between the two streams in ratio `h_share : g_share`,
/// rounding to the nearest feasible integer counts with at least one element each.
pub fn split_elements(total_elements: usize, h_share: usize, g_share: usize) -> Result<(usize, usize)> {
    if total_elements < 2 || h_share == 0 || g_share == 0 {
        return Err(invalid("each stream needs at least one element and a positive share"));
    }
    let h = ((total_elements * h_share) as f64 / (h_share + g_share) as f64).round() as usize;
    let h = h.clamp(1, total_elements - 1);
    Ok((h, total_elements - h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chanmodel::{rayleigh_channel, steering_vector};
    use crate::models::BeamVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ch(v: Vec<Complex64>) -> ChannelSample {
        ChannelSample::new(v).unwrap()
    }

    #[test]
    fn conj_phase_examples() {
        let h = ch(vec![Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)]);
        let v = conj_phase_bf(&h);
        assert!(v.as_slice().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let h = ch(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let v = conj_phase_bf(&h);
        assert!((v.as_slice()[1] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((beam_gain(&h, &v).sqrt() - 2.0).abs() < 1e-12);

        let h = ch(vec![Complex64::new(0.0, 0.0), Complex64::new(-0.0, 0.0)]);
        assert_eq!(conj_phase_bf(&h).phases(), vec![0.0, 0.0]);
    }

    #[test]
    fn se_arithmetic() {
        let h = ch(steering_vector(0.0, 4, 0.5).unwrap());
        let v = BeamVector::from_phases(&[0.0; 4]);
        assert!((spectral_efficiency(&h, &v, 10.0) - 41f64.log2()).abs() < 1e-12);
        assert!(spectral_efficiency(&h, &v, 1e-12) < 1e-10);
    }

    #[test]
    fn sinr_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = rayleigh_channel(6, &mut rng);
        let g = rayleigh_channel(6, &mut rng);
        let v = conj_phase_bf(&h);
        let p0 = RateParams::new(20.0, 0.0).unwrap();
        let want = 20.0 * beam_gain(&h, &v) / 6.0;
        assert!((sinr(&h, &g, &v, p0) - want).abs() < 1e-9 * want);
        // g orthogonal to v
        let h2 = ch(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let g2 = ch(vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
        let v2 = BeamVector::from_phases(&[0.0, 0.0]);
        let p = RateParams::new(10.0, 0.7).unwrap();
        assert!((sinr(&h2, &g2, &v2, p) - 10.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn high_sinr_log_gap() {
        for x in [100.0, 150.0, 1e3, 1e6] {
            let gap: f64 = (1.0f64 + x).log2() - f64::log2(x);
            assert!(gap < 0.015, "{x}: {gap}");
        }
    }

    #[test]
    fn rate_params_validation() {
        assert!(RateParams::new(0.0, 0.1).is_err());
        assert!(RateParams::new(f64::INFINITY, 0.1).is_err());
        assert!(RateParams::new(1.0, 1.5).is_err());
        let p = RateParams::from_snr_db(10.0, 0.1).unwrap();
        assert!((p.rho - 10.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_alpha_zero_matches_conj_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let h = rayleigh_channel(8, &mut rng);
            let g = rayleigh_channel(8, &mut rng);
            let p = RateParams::new(10.0, 0.0).unwrap();
            let r = multicell_bf_oracle(&h, &g, p, 4).unwrap();
            let cp = sinr(&h, &g, &conj_phase_bf(&h), p);
            assert!((r.sinr - cp).abs() <= 1e-6 * cp, "{} vs {cp}", r.sinr);
        }
    }

    #[test]
    fn oracle_never_below_conj_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let h = rayleigh_channel(6, &mut rng);
            let g = rayleigh_channel(6, &mut rng);
            let p = RateParams::new(30.0, 0.8).unwrap();
            let r = multicell_bf_oracle(&h, &g, p, 3).unwrap();
            assert!(r.sinr >= sinr(&h, &g, &conj_phase_bf(&h), p));
            assert!(r.beam.max_modulus_error() < 1e-12);
        }
    }

    #[test]
    fn oracle_with_g_equal_h_bounded_by_inverse_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = rayleigh_channel(5, &mut rng);
        let p = RateParams::new(1e4, 1.0).unwrap();
        let r = multicell_bf_oracle(&h, &h, p, 8).unwrap();
        assert!(r.sinr < 1.0);
    }

    #[test]
    fn oracle_rejects_zero_restarts() {
        let h = ChannelSample::zeros(3);
        assert!(multicell_bf_oracle(&h, &h, RateParams::new(1.0, 0.1).unwrap(), 0).is_err());
    }

    #[test]
    fn bit_accounting_examples() {
        assert_eq!(bit_accounting(64, 4, 128).unwrap(), 4);
        assert_eq!(bit_accounting_pair(32, 4, 16, 16).unwrap(), (16, 16, 32));
        // 48 bits for h at n_t = 32 needs beta_h = 16/3, not an integer ratio
        assert!(bit_accounting(32, 4, 5).is_err());
        assert_eq!(split_elements(16, 3, 1).unwrap(), (12, 4));
        assert_eq!(split_elements(4, 3, 1).unwrap(), (3, 1));
        assert!(split_elements(1, 1, 1).is_err());
        assert!(bit_accounting(32, 4, 0).is_err());
    }
}
