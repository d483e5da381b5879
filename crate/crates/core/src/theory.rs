//! Analytic quantities and non-existence certificates.
//!
//! The two certificates are one-sided: when they fire, no allocation of the
//! corresponding kind exists; silence proves nothing.  Both are cross-checked
//! against the exhaustive oracles in the integration suite.

use serde::{Deserialize, Serialize};

use crate::instance::{sample_instance_unchecked, DisutilityMatrix, DistributionSpec};
use crate::seeding::derive;
use crate::{Error, Result};

/// Which sufficient condition fired, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// More repeated favorite chores than the 2(m−n) budget.
    RepeatedFavorites,
    /// Some chore costs every agent more than her proportional share.
    UnassignableChore,
    None,
}

impl std::fmt::Display for CertificateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CertificateKind::RepeatedFavorites => "repeated_favorites",
            CertificateKind::UnassignableChore => "unassignable_chore",
            CertificateKind::None => "none",
        })
    }
}

/// Proof object for non-existence.  `t` is the repeated-favorite count (kept
/// even when the certificate does not fire); `chore` is the unassignable
/// chore, serialized 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCertificate", into = "RawCertificate")]
pub struct NonExistenceCertificate {
    pub kind: CertificateKind,
    pub t: Option<u64>,
    pub chore: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawCertificate {
    kind: CertificateKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chore: Option<usize>,
}

impl TryFrom<RawCertificate> for NonExistenceCertificate {
    type Error = Error;
    fn try_from(raw: RawCertificate) -> Result<Self> {
        let chore = match raw.chore {
            Some(0) => return Err(Error::InvalidConfig("chore indices are 1-based".into())),
            Some(j) => Some(j - 1),
            None => None,
        };
        Ok(NonExistenceCertificate {
            kind: raw.kind,
            t: raw.t,
            chore,
        })
    }
}

impl From<NonExistenceCertificate> for RawCertificate {
    fn from(c: NonExistenceCertificate) -> Self {
        RawCertificate {
            kind: c.kind,
            t: c.t,
            chore: c.chore.map(|j| j + 1),
        }
    }
}

impl NonExistenceCertificate {
    pub fn fired(&self) -> bool {
        self.kind != CertificateKind::None
    }
}

/// Number of chores that are the favorite (row argmin) of two or more agents.
pub fn count_repeated_favorites(matrix: &DisutilityMatrix) -> u64 {
    let mut fans = vec![0u32; matrix.m()];
    for i in 0..matrix.n() {
        fans[matrix.favorite(i)] += 1;
    }
    fans.iter().filter(|&&c| c > 1).count() as u64
}

/// Fires when T > 2(m − n), in which case no envy-free allocation exists:
/// each of the T contested chores forces a spare chore as compensation, and
/// only m − n spares exist.  Signed arithmetic makes the threshold negative
/// whenever m < n, so the certificate also fires on every such instance
/// (where an empty bundle is unavoidable).
pub fn ef_nonexistence_certificate(matrix: &DisutilityMatrix) -> NonExistenceCertificate {
    let t = count_repeated_favorites(matrix);
    let threshold = 2 * (matrix.m() as i64 - matrix.n() as i64);
    let kind = if t as i64 > threshold {
        CertificateKind::RepeatedFavorites
    } else {
        CertificateKind::None
    };
    NonExistenceCertificate {
        kind,
        t: Some(t),
        chore: None,
    }
}

/// Fires on the first chore j with dᵢ(j) > dᵢ(M)/n for every agent i: whoever
/// received j would already exceed her share.  The coarser sufficient test
/// dᵢ(j) > m/n is tried first; it implies the exact one because dᵢ(M) ≤ m.
pub fn prop_nonexistence_certificate(matrix: &DisutilityMatrix) -> NonExistenceCertificate {
    let n = matrix.n();
    let m = matrix.m();
    let coarse = m as f64 / n as f64;
    let share: Vec<f64> = (0..n).map(|i| matrix.total(i) / n as f64).collect();
    for j in 0..m {
        let quick = (0..n).all(|i| matrix.cost(i, j) > coarse);
        if quick || (0..n).all(|i| matrix.cost(i, j) > share[i]) {
            return NonExistenceCertificate {
                kind: CertificateKind::UnassignableChore,
                t: None,
                chore: Some(j),
            };
        }
    }
    NonExistenceCertificate {
        kind: CertificateKind::None,
        t: None,
        chore: None,
    }
}

/// Exact closed form E[T] = m(1 − (1 + (n−1)/m)(1 − 1/m)^(n−1)) for the
/// expected number of repeated favorite chores when favorites are i.i.d.
/// uniform over the m chores.
pub fn expected_repeated_favorites(n: u64, m: u64) -> f64 {
    assert!(n >= 1 && m >= 1, "need n, m ≥ 1");
    let nf = n as f64;
    let mf = m as f64;
    mf * (1.0 - (1.0 + (nf - 1.0) / mf) * (1.0 - 1.0 / mf).powi((n - 1) as i32))
}

/// Left-hand side of the threshold-ratio equation ν(1 + (1 + 1/ν)e^(−1/ν)).
pub fn nu_equation(nu: f64) -> f64 {
    nu * (1.0 + (1.0 + 1.0 / nu) * (-1.0 / nu).exp())
}

/// The unique positive root of ν(1 + (1 + 1/ν)e^(−1/ν)) = 2, by bisection.
///
/// The left side is increasing, and [1, 2] brackets the root: at ν = 1 it is
/// 1 + 2/e < 2 and at ν = 2 it is 2 + 3e^(−1/2) > 2.  Bisection is
/// unconditionally convergent here; the residual ends below 10⁻¹².
pub fn solve_nu() -> f64 {
    let mut lo = 1.0f64;
    let mut hi = 2.0f64;
    debug_assert!(nu_equation(lo) < 2.0 && nu_equation(hi) > 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if nu_equation(mid) < 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// The e^(−2βm) lower bound on the probability that no proportional
/// allocation exists (regime m/n ≤ 1/(2β), enforced by the caller).
pub fn prop_nonexistence_lower_bound(beta: f64, m: u64) -> Result<f64> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "density supremum β must be ≥ 1, got {beta}"
        )));
    }
    Ok((-2.0 * beta * m as f64).exp())
}

/// Monte Carlo moments of T over uniform instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TStatistics {
    pub trials: usize,
    pub mean: f64,
    /// Unbiased sample variance of T.
    pub variance: f64,
    /// Standard error of `mean`.
    pub se_mean: f64,
    /// Standard error of `variance` (moment estimate).
    pub se_variance: f64,
}

/// Samples `trials` uniform n×m instances and returns the first two sample
/// moments of the repeated-favorite count, with standard errors.
pub fn repeated_favorites_stats(
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<TStatistics> {
    if trials < 2 {
        return Err(Error::InvalidConfig("need at least 2 trials".into()));
    }
    let dist = DistributionSpec::uniform();
    let mut counts = Vec::with_capacity(trials);
    for t in 0..trials {
        let inst = sample_instance_unchecked(n, m, &dist, derive(seed, t as u64))?;
        counts.push(count_repeated_favorites(&inst) as f64);
    }
    let tf = trials as f64;
    let mean = counts.iter().sum::<f64>() / tf;
    let m2 = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / tf;
    let m4 = counts.iter().map(|c| (c - mean).powi(4)).sum::<f64>() / tf;
    let variance = m2 * tf / (tf - 1.0);
    Ok(TStatistics {
        trials,
        mean,
        variance,
        se_mean: (m2 / tf).sqrt(),
        se_variance: ((m4 - m2 * m2).max(0.0) / tf).sqrt(),
    })
}

/// Outcome of the bounded-differences variance check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfronSteinReport {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    pub estimate: f64,
    /// The n/4 bound: T changes by at most 1 when one agent's row resamples.
    pub bound: f64,
    pub std_error: f64,
    pub pass: bool,
}

/// Estimates Var(T) by Monte Carlo and compares it against the n/4 bound
/// implied by bounded differences (T is a 1-Lipschitz function of the n
/// independent rows).
pub fn efron_stein_variance_check(
    n: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<EfronSteinReport> {
    if trials < 1000 {
        return Err(Error::InvalidConfig(format!(
            "variance check needs ≥ 1000 trials, got {trials}"
        )));
    }
    let stats = repeated_favorites_stats(n, m, trials, seed)?;
    let bound = n as f64 / 4.0;
    Ok(EfronSteinReport {
        n,
        m,
        trials,
        estimate: stats.variance,
        bound,
        std_error: stats.se_variance,
        pass: stats.variance <= bound + 3.0 * stats.se_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::sample_instance;
    use crate::oracle::{exists_envy_free, exists_proportional};

    fn matrix(rows: Vec<Vec<f64>>) -> DisutilityMatrix {
        DisutilityMatrix::new(rows).unwrap()
    }

    #[test]
    fn repeated_favorite_counting() {
        // Distinct favorites.
        let d = matrix(vec![vec![0.1, 0.9], vec![0.9, 0.1]]);
        assert_eq!(count_repeated_favorites(&d), 0);
        // All three agents favor chore 2 (index 1).
        let d2 = matrix(vec![
            vec![0.5, 0.1, 0.9],
            vec![0.7, 0.2, 0.8],
            vec![0.6, 0.3, 0.7],
        ]);
        assert_eq!(count_repeated_favorites(&d2), 1);
        // Favorites (1, 1, 2, 2): two chores each favored twice.
        let d3 = matrix(vec![
            vec![0.1, 0.5, 0.9],
            vec![0.2, 0.6, 0.9],
            vec![0.5, 0.1, 0.9],
            vec![0.6, 0.2, 0.9],
        ]);
        assert_eq!(count_repeated_favorites(&d3), 2);
    }

    #[test]
    fn ef_certificate_threshold() {
        // n = m with a shared favorite: T = 1 > 2(m−n) = 0.
        let d = matrix(vec![vec![0.1, 0.9], vec![0.2, 0.9]]);
        let cert = ef_nonexistence_certificate(&d);
        assert_eq!(cert.kind, CertificateKind::RepeatedFavorites);
        assert_eq!(cert.t, Some(1));
        assert!(cert.fired());
        // m ≥ 2n with all favorites distinct: silent.
        let d2 = matrix(vec![vec![0.1, 0.5, 0.6, 0.7], vec![0.5, 0.2, 0.6, 0.7]]);
        assert!(!ef_nonexistence_certificate(&d2).fired());
        // m < n always fires: the threshold is negative and pigeonhole
        // forces at least one repeated favorite anyway.
        let d3 = matrix(vec![vec![0.5, 0.4], vec![0.6, 0.3], vec![0.2, 0.7]]);
        let cert3 = ef_nonexistence_certificate(&d3);
        assert!(cert3.fired());
        assert_eq!(cert3.t, Some(1));
    }

    #[test]
    fn prop_certificate_examples() {
        // Chore 1 costs both agents 0.9 > dᵢ(M)/2 = 0.5.
        let d = matrix(vec![vec![0.9, 0.1], vec![0.9, 0.1]]);
        let cert = prop_nonexistence_certificate(&d);
        assert_eq!(cert.kind, CertificateKind::UnassignableChore);
        assert_eq!(cert.chore, Some(0));
        // The exact share test fires where the coarse m/n test cannot:
        // 0.6 > 0.35 = dᵢ(M)/2 but 0.6 < m/n = 1.
        let d2 = matrix(vec![vec![0.6, 0.1], vec![0.6, 0.1]]);
        assert!(prop_nonexistence_certificate(&d2).fired());
        // A chore below some agent's share can never certify; here each
        // chore is cheap for one of the two agents.
        let d3 = matrix(vec![vec![0.1, 0.6], vec![0.5, 0.2]]);
        assert!(!prop_nonexistence_certificate(&d3).fired());
    }

    #[test]
    fn certificates_sound_against_oracles() {
        // Shapes where each certificate actually has room to fire: m < n
        // makes the repeated-favorites threshold negative (always fires);
        // (6, 7) fires only at the maximal T = 3; (3, 4) exercises the
        // expensive-chore certificate.
        let u = DistributionSpec::uniform();
        let mut ef_fired = 0;
        let mut prop_fired = 0;
        for (n, m) in [(4usize, 3usize), (3, 4), (6, 7)] {
            for seed in 0..300u64 {
                let d = sample_instance(n, m, &u, 91_000 + seed).unwrap();
                if ef_nonexistence_certificate(&d).fired() {
                    ef_fired += 1;
                    assert!(exists_envy_free(&d).unwrap().is_none(), "({n},{m}) seed {seed}");
                }
                if prop_nonexistence_certificate(&d).fired() {
                    prop_fired += 1;
                    assert!(
                        exists_proportional(&d).unwrap().is_none(),
                        "({n},{m}) seed {seed}"
                    );
                }
            }
        }
        // Both certificates must have been exercised, including the
        // nontrivial positive-threshold case.
        assert!(ef_fired >= 300, "ef fired {ef_fired}");
        assert!(prop_fired > 0, "prop fired {prop_fired}");
    }

    #[test]
    fn expected_t_matches_profile_enumeration() {
        // Favorites are i.i.d. uniform over chores, so E[T] can be computed
        // exactly by enumerating all mⁿ favorite profiles.
        fn enumerate(n: u32, m: usize) -> f64 {
            let profiles = (m as u64).pow(n);
            let mut total = 0u64;
            for code in 0..profiles {
                let mut fans = vec![0u32; m];
                let mut c = code;
                for _ in 0..n {
                    fans[(c % m as u64) as usize] += 1;
                    c /= m as u64;
                }
                total += fans.iter().filter(|&&f| f > 1).count() as u64;
            }
            total as f64 / profiles as f64
        }
        assert!((expected_repeated_favorites(2, 2) - 0.5).abs() < 1e-15);
        assert!((enumerate(2, 2) - 0.5).abs() < 1e-15);
        assert!((expected_repeated_favorites(3, 3) - 7.0 / 9.0).abs() < 1e-12);
        assert!((enumerate(3, 3) - 7.0 / 9.0).abs() < 1e-12);
        for (n, m) in [(2, 3), (4, 2), (4, 5), (5, 4)] {
            let closed = expected_repeated_favorites(n as u64, m as u64);
            assert!(
                (closed - enumerate(n, m)).abs() < 1e-10,
                "mismatch at ({n}, {m})"
            );
        }
        // One agent never repeats.
        assert_eq!(expected_repeated_favorites(1, 10), 0.0);
    }

    #[test]
    fn closed_form_dominates_exponential_bound() {
        // 1 + x ≤ eˣ makes the e-based expression a lower bound.
        for n in [2u64, 5, 10, 40, 100] {
            for m in [2u64, 5, 10, 40, 100] {
                let closed = expected_repeated_favorites(n, m);
                let nf = n as f64;
                let mf = m as f64;
                let loose = mf * (1.0 - (1.0 + (nf - 1.0) / mf) * (-(nf - 1.0) / mf).exp());
                assert!(closed >= loose - 1e-12, "({n}, {m}): {closed} < {loose}");
            }
        }
    }

    #[test]
    fn nu_root_value_and_residual() {
        let nu = solve_nu();
        assert!((nu - 1.12566).abs() < 1e-4, "nu = {nu}");
        assert!((nu_equation(nu) - 2.0).abs() <= 1e-12);
        assert!(nu_equation(1.0) < 2.0);
        assert!(nu_equation(2.0) > 2.0);
    }

    #[test]
    fn lower_bound_evaluations() {
        let b = prop_nonexistence_lower_bound(1.0, 2).unwrap();
        assert!((b - (-4.0f64).exp()).abs() < 1e-15);
        assert_eq!(prop_nonexistence_lower_bound(1.0, 0).unwrap(), 1.0);
        assert!(prop_nonexistence_lower_bound(0.5, 2).is_err());
    }

    #[test]
    fn variance_check_degenerate_and_deterministic() {
        // m = 1: every agent favors the lone chore, so T ≡ 1 and Var = 0.
        let rep = efron_stein_variance_check(2, 1, 1000, 7).unwrap();
        assert_eq!(rep.estimate, 0.0);
        assert!(rep.pass);
        let a = efron_stein_variance_check(5, 5, 2000, 42).unwrap();
        let b = efron_stein_variance_check(5, 5, 2000, 42).unwrap();
        assert_eq!(a, b);
        assert!(efron_stein_variance_check(5, 5, 10, 1).is_err());
    }

    #[test]
    fn certificate_json_round_trip() {
        let d = matrix(vec![vec![0.9, 0.1], vec![0.9, 0.1]]);
        let cert = prop_nonexistence_certificate(&d);
        let text = serde_json::to_string(&cert).unwrap();
        // 1-based chore index on the wire.
        assert_eq!(text, r#"{"kind":"unassignable_chore","chore":1}"#);
        let back: NonExistenceCertificate = serde_json::from_str(&text).unwrap();
        assert_eq!(cert, back);
    }
}
