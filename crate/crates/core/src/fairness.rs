//! Allocations and fairness predicates: envy-freeness, proportionality, EFX,
//! and exact maximin shares.
//!
//! Comparisons are exact `≤` on floats with zero tolerance — the definitions
//! are sharp inequalities, and any slack would silently shift measured
//! existence frequencies.  [`FairnessReport`] exposes violation magnitudes so
//! callers can apply their own tolerance if they want one.

use serde::{Deserialize, Serialize};

use crate::instance::DisutilityMatrix;
use crate::{Error, Result};

/// Guard for exact maximin-share computation: refuse when nᵐ exceeds this.
pub const MMS_ENUMERATION_LIMIT: f64 = 1e7;

/// A partition of the m chores into n bundles, one per agent.
///
/// Bundles may be empty.  Chore indices are 0-based internally; the JSON wire
/// form (`{"bundles": [[...]]}`) is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAllocation", into = "RawAllocation")]
pub struct Allocation {
    n: usize,
    m: usize,
    bundles: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawAllocation {
    bundles: Vec<Vec<usize>>,
}

impl TryFrom<RawAllocation> for Allocation {
    type Error = Error;
    fn try_from(raw: RawAllocation) -> Result<Self> {
        let zero_based = raw
            .bundles
            .into_iter()
            .map(|b| {
                b.into_iter()
                    .map(|j| {
                        j.checked_sub(1).ok_or_else(|| {
                            Error::InvalidAllocation("chore indices are 1-based".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Allocation::new(zero_based)
    }
}

impl From<Allocation> for RawAllocation {
    fn from(a: Allocation) -> Self {
        RawAllocation {
            bundles: a
                .bundles
                .into_iter()
                .map(|b| b.into_iter().map(|j| j + 1).collect())
                .collect(),
        }
    }
}

impl Allocation {
    /// Builds an allocation from per-agent bundles (0-based chore indices).
    /// The bundles must partition {0, …, m−1} where m is their total size.
    pub fn new(bundles: Vec<Vec<usize>>) -> Result<Self> {
        let n = bundles.len();
        if n == 0 {
            return Err(Error::InvalidAllocation("no agents".into()));
        }
        let m: usize = bundles.iter().map(Vec::len).sum();
        let mut seen = vec![false; m];
        for b in &bundles {
            for &j in b {
                if j >= m {
                    return Err(Error::InvalidAllocation(format!(
                        "chore index {} out of range for m={m}",
                        j + 1
                    )));
                }
                if seen[j] {
                    return Err(Error::InvalidAllocation(format!(
                        "chore {} assigned twice",
                        j + 1
                    )));
                }
                seen[j] = true;
            }
        }
        // Total size m and no duplicates already force full coverage.
        let mut bundles = bundles;
        for b in &mut bundles {
            b.sort_unstable();
        }
        Ok(Allocation { n, m, bundles })
    }

    /// Builds an allocation from a chore→agent assignment vector.
    pub fn from_assignment(assignment: &[usize], n: usize) -> Result<Self> {
        let mut bundles = vec![Vec::new(); n];
        for (j, &a) in assignment.iter().enumerate() {
            if a >= n {
                return Err(Error::InvalidAllocation(format!(
                    "agent index {a} out of range for n={n}"
                )));
            }
            bundles[a].push(j);
        }
        Allocation::new(bundles)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn bundles(&self) -> &[Vec<usize>] {
        &self.bundles
    }

    pub fn bundle(&self, agent: usize) -> &[usize] {
        &self.bundles[agent]
    }

    /// All bundles share one cardinality (possible only when n divides m).
    pub fn is_balanced(&self) -> bool {
        self.bundles.iter().all(|b| b.len() == self.bundles[0].len())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("allocation serializes")
    }
}

fn check_dims(matrix: &DisutilityMatrix, alloc: &Allocation) -> Result<()> {
    if matrix.n() != alloc.n() || matrix.m() != alloc.m() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, allocation is {}x{}",
            matrix.n(),
            matrix.m(),
            alloc.n(),
            alloc.m()
        )));
    }
    Ok(())
}

/// dᵢ(bundle) = Σ_{j∈bundle} dᵢ(j); the empty bundle costs 0.
pub fn bundle_disutility(
    matrix: &DisutilityMatrix,
    agent: usize,
    bundle: &[usize],
) -> Result<f64> {
    if agent >= matrix.n() {
        return Err(Error::DimensionMismatch(format!(
            "agent {agent} out of range for n={}",
            matrix.n()
        )));
    }
    let mut sum = 0.0;
    for &j in bundle {
        if j >= matrix.m() {
            return Err(Error::DimensionMismatch(format!(
                "chore {j} out of range for m={}",
                matrix.m()
            )));
        }
        sum += matrix.cost(agent, j);
    }
    Ok(sum)
}

#[inline]
fn bundle_cost(matrix: &DisutilityMatrix, agent: usize, bundle: &[usize]) -> f64 {
    bundle.iter().map(|&j| matrix.cost(agent, j)).sum()
}

/// No agent's own bundle costs her more than any other agent's bundle.
pub fn is_envy_free(matrix: &DisutilityMatrix, alloc: &Allocation) -> Result<bool> {
    check_dims(matrix, alloc)?;
    for i in 0..matrix.n() {
        let own = bundle_cost(matrix, i, alloc.bundle(i));
        for k in 0..alloc.n() {
            if k != i && own > bundle_cost(matrix, i, alloc.bundle(k)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Every agent's bundle costs her at most dᵢ(M)/n.
pub fn is_proportional(matrix: &DisutilityMatrix, alloc: &Allocation) -> Result<bool> {
    check_dims(matrix, alloc)?;
    let n = matrix.n() as f64;
    for i in 0..matrix.n() {
        if bundle_cost(matrix, i, alloc.bundle(i)) > matrix.total(i) / n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Envy-freeness up to any chore: removing an arbitrary single chore from an
/// agent's bundle eliminates her envy toward every other bundle.
pub fn is_efx(matrix: &DisutilityMatrix, alloc: &Allocation) -> Result<bool> {
    check_dims(matrix, alloc)?;
    for i in 0..matrix.n() {
        if alloc.bundle(i).is_empty() {
            continue;
        }
        let own = bundle_cost(matrix, i, alloc.bundle(i));
        let mut min_other = f64::INFINITY;
        for k in 0..alloc.n() {
            if k != i {
                min_other = min_other.min(bundle_cost(matrix, i, alloc.bundle(k)));
            }
        }
        for &c in alloc.bundle(i) {
            if own - matrix.cost(i, c) > min_other {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Agent `agent`'s maximin share: the minimum over all n-partitions of M of
/// the maximum bundle cost under her disutilities, computed exactly.
///
/// Refuses when nᵐ > 10⁷; the search is branch-and-bound over canonical
/// partitions (bundle labels deduplicated), so the practical cost is far
/// below the guard.
pub fn mms_share(matrix: &DisutilityMatrix, agent: usize) -> Result<f64> {
    if agent >= matrix.n() {
        return Err(Error::DimensionMismatch(format!(
            "agent {agent} out of range for n={}",
            matrix.n()
        )));
    }
    let n = matrix.n();
    let m = matrix.m();
    if (n as f64).powf(m as f64) > MMS_ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!(
            "maximin share needs n^m ≤ {MMS_ENUMERATION_LIMIT:.0}, got {n}^{m}"
        )));
    }
    // Descending costs tighten the running max early and sharpen pruning.
    let mut costs: Vec<f64> = matrix.row(agent).to_vec();
    costs.sort_by(|a, b| b.partial_cmp(a).unwrap());

    fn dfs(costs: &[f64], depth: usize, sums: &mut Vec<f64>, cur_max: f64, best: &mut f64) {
        if cur_max >= *best {
            return;
        }
        if depth == costs.len() {
            *best = cur_max;
            return;
        }
        let mut used = sums.iter().take_while(|&&s| s > 0.0).count();
        // Bundles are interchangeable: trying one empty bundle covers all.
        if used < sums.len() {
            used += 1;
        }
        for k in 0..used {
            sums[k] += costs[depth];
            dfs(costs, depth + 1, sums, cur_max.max(sums[k]), best);
            sums[k] -= costs[depth];
        }
    }

    let mut best = f64::INFINITY;
    let mut sums = vec![0.0; n];
    dfs(&costs, 0, &mut sums, 0.0, &mut best);
    Ok(best)
}

/// Verdict and violation magnitudes for one allocation.
///
/// Invariants by construction: `envy_free ⇔ max_envy = 0` and
/// `proportional ⇔ prop_violation = 0`.  `mms_fair` is present only when the
/// exact share is computable (nᵐ ≤ 10⁷).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub envy_free: bool,
    pub proportional: bool,
    pub efx: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mms_fair: Option<bool>,
    pub max_envy: f64,
    pub prop_violation: f64,
}

/// Evaluates every fairness notion on one allocation.
pub fn fairness_report(matrix: &DisutilityMatrix, alloc: &Allocation) -> Result<FairnessReport> {
    check_dims(matrix, alloc)?;
    let n = matrix.n();
    let mut max_envy: f64 = 0.0;
    let mut prop_violation: f64 = 0.0;
    let mut efx = true;
    for i in 0..n {
        let own = bundle_cost(matrix, i, alloc.bundle(i));
        let mut min_other = f64::INFINITY;
        for k in 0..n {
            if k != i {
                min_other = min_other.min(bundle_cost(matrix, i, alloc.bundle(k)));
            }
        }
        if n > 1 {
            max_envy = max_envy.max(own - min_other);
            for &c in alloc.bundle(i) {
                if own - matrix.cost(i, c) > min_other {
                    efx = false;
                }
            }
        }
        prop_violation = prop_violation.max(own - matrix.total(i) / n as f64);
    }
    max_envy = max_envy.max(0.0);
    prop_violation = prop_violation.max(0.0);
    let mms_fair = if (n as f64).powf(matrix.m() as f64) <= MMS_ENUMERATION_LIMIT {
        let mut ok = true;
        for i in 0..n {
            let own = bundle_cost(matrix, i, alloc.bundle(i));
            if own > mms_share(matrix, i)? {
                ok = false;
                break;
            }
        }
        Some(ok)
    } else {
        None
    };
    Ok(FairnessReport {
        envy_free: max_envy == 0.0,
        proportional: prop_violation == 0.0,
        efx,
        mms_fair,
        max_envy,
        prop_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> DisutilityMatrix {
        DisutilityMatrix::new(rows).unwrap()
    }

    fn alloc(bundles: Vec<Vec<usize>>) -> Allocation {
        Allocation::new(bundles).unwrap()
    }

    #[test]
    fn allocation_validates_partition() {
        assert!(Allocation::new(vec![vec![0, 1], vec![2]]).is_ok());
        assert!(Allocation::new(vec![vec![0, 1], vec![1]]).is_err()); // duplicate
        assert!(Allocation::new(vec![vec![0, 3], vec![1]]).is_err()); // gap
        assert!(Allocation::new(vec![]).is_err());
        // All-empty bundles form the (vacuous) partition of zero chores.
        let empty = Allocation::new(vec![vec![], vec![]]).unwrap();
        assert_eq!((empty.n(), empty.m()), (2, 0));
        let a = Allocation::new(vec![vec![1, 0], vec![2]]).unwrap();
        assert_eq!(a.bundle(0), &[0, 1]); // stored sorted
    }

    #[test]
    fn allocation_json_is_one_based() {
        let a = alloc(vec![vec![0, 2], vec![1]]);
        assert_eq!(a.to_json(), r#"{"bundles":[[1,3],[2]]}"#);
        let back = Allocation::from_json(r#"{"bundles":[[1,3],[2]]}"#).unwrap();
        assert_eq!(a, back);
        assert!(Allocation::from_json(r#"{"bundles":[[0,2],[1]]}"#).is_err());
    }

    #[test]
    fn bundle_disutility_is_additive() {
        let d = matrix(vec![vec![0.3, 0.2], vec![0.5, 0.5]]);
        assert_eq!(bundle_disutility(&d, 0, &[]).unwrap(), 0.0);
        assert_eq!(bundle_disutility(&d, 0, &[0]).unwrap(), 0.3);
        assert_eq!(bundle_disutility(&d, 0, &[0, 1]).unwrap(), 0.5);
        assert!(bundle_disutility(&d, 0, &[7]).is_err());
        assert!(bundle_disutility(&d, 2, &[0]).is_err());
    }

    #[test]
    fn envy_free_on_opposed_preferences() {
        let d = matrix(vec![vec![0.1, 0.9], vec![0.9, 0.1]]);
        assert!(is_envy_free(&d, &alloc(vec![vec![0], vec![1]])).unwrap());
        assert!(!is_envy_free(&d, &alloc(vec![vec![1], vec![0]])).unwrap());
    }

    #[test]
    fn proportional_includes_equality_boundary() {
        let d = matrix(vec![vec![0.4, 0.4], vec![0.4, 0.4]]);
        assert!(is_proportional(&d, &alloc(vec![vec![0], vec![1]])).unwrap());
        let d2 = matrix(vec![vec![0.5, 0.1], vec![0.1, 0.5]]);
        assert!(!is_proportional(&d2, &alloc(vec![vec![0], vec![1]])).unwrap());
    }

    #[test]
    fn efx_catches_heavy_pair() {
        // Removing either 0.5-chore still leaves 0.5 > 0.1 = d₁(A₂).
        let d = matrix(vec![vec![0.5, 0.5, 0.1], vec![0.5, 0.5, 0.1]]);
        let a = alloc(vec![vec![0, 1], vec![2]]);
        assert!(!is_efx(&d, &a).unwrap());
        assert!(!is_envy_free(&d, &a).unwrap());
        // Singleton bundles are EFX regardless of costs.
        let d3 = matrix(vec![vec![0.9, 0.8], vec![0.9, 0.8]]);
        assert!(is_efx(&d3, &alloc(vec![vec![0], vec![1]])).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let d = matrix(vec![vec![0.1, 0.9], vec![0.9, 0.1]]);
        let a = alloc(vec![vec![0], vec![1], vec![2]]);
        assert!(is_envy_free(&d, &a).is_err());
        assert!(fairness_report(&d, &a).is_err());
    }

    #[test]
    fn mms_small_cases() {
        let d = matrix(vec![vec![0.3, 0.5], vec![0.2, 0.2]]);
        assert_eq!(mms_share(&d, 0).unwrap(), 0.5); // split the two chores
        let one = DisutilityMatrix::new(vec![vec![0.7], vec![0.1]]).unwrap();
        assert_eq!(mms_share(&one, 0).unwrap(), 0.7); // someone takes the chore
        let sym = matrix(vec![vec![0.2; 3], vec![0.2; 3], vec![0.2; 3]]);
        assert!((mms_share(&sym, 0).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mms_matches_plain_enumeration() {
        // Independent oracle: raw nᵐ loop without canonicalization or pruning.
        let d = matrix(vec![
            vec![0.31, 0.17, 0.52, 0.08, 0.44],
            vec![0.2, 0.3, 0.4, 0.05, 0.6],
            vec![0.9, 0.01, 0.33, 0.21, 0.15],
        ]);
        for agent in 0..3 {
            let (n, m) = (3usize, 5usize);
            let mut best = f64::INFINITY;
            for code in 0..n.pow(m as u32) {
                let mut sums = vec![0.0; n];
                let mut c = code;
                for j in 0..m {
                    sums[c % n] += d.cost(agent, j);
                    c /= n;
                }
                best = best.min(sums.iter().cloned().fold(0.0, f64::max));
            }
            assert_eq!(mms_share(&d, agent).unwrap(), best);
        }
    }

    #[test]
    fn mms_refuses_oversize() {
        let d = DisutilityMatrix::new(vec![vec![0.5; 30]; 6]).unwrap();
        assert!(matches!(mms_share(&d, 0), Err(Error::TooLarge(_))));
    }

    #[test]
    fn report_magnitudes_match_flags() {
        let d = matrix(vec![vec![0.1, 0.9], vec![0.9, 0.1]]);
        let good = fairness_report(&d, &alloc(vec![vec![0], vec![1]])).unwrap();
        assert!(good.envy_free && good.proportional && good.efx);
        assert_eq!(good.max_envy, 0.0);
        assert_eq!(good.prop_violation, 0.0);
        assert_eq!(good.mms_fair, Some(true));

        let bad = fairness_report(&d, &alloc(vec![vec![1], vec![0]])).unwrap();
        assert!(!bad.envy_free && !bad.proportional);
        assert!((bad.max_envy - 0.8).abs() < 1e-15);
        assert!((bad.prop_violation - 0.4).abs() < 1e-15);
    }

    #[test]
    fn proportional_implies_mms_fair_here() {
        // Max bundle in any partition is at least the average, so the maximin
        // share is at least dᵢ(M)/n and PROP allocations are MMS-fair.
        let d = matrix(vec![
            vec![0.3, 0.2, 0.9, 0.4],
            vec![0.8, 0.1, 0.2, 0.3],
        ]);
        let a = alloc(vec![vec![0, 3], vec![1, 2]]);
        let rep = fairness_report(&d, &a).unwrap();
        assert!(rep.proportional); // 0.7 ≤ 0.9 and 0.3 ≤ 0.7
        assert_eq!(rep.mms_fair, Some(true));
    }

    #[test]
    fn report_serialization_drops_absent_mms() {
        let wide = DisutilityMatrix::new(vec![vec![0.25; 40]; 4]).unwrap();
        let bundles: Vec<Vec<usize>> = (0..4).map(|i| (0..40).filter(|j| j % 4 == i).collect()).collect();
        let rep = fairness_report(&wide, &Allocation::new(bundles).unwrap()).unwrap();
        assert!(rep.mms_fair.is_none());
        let text = serde_json::to_string(&rep).unwrap();
        assert!(!text.contains("mms_fair"));
    }
}
