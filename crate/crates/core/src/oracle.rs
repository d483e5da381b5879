//! Exact existence oracles for envy-free and proportional allocations.
//!
//! Both decide by exhaustive search over all nᵐ chore→agent assignments,
//! pruned by branch-and-bound.  Pruning is sound because bundle costs only
//! grow as chores are assigned, so a partial state that already violates a
//! necessary condition has no valid completion; the lexicographically first
//! witness (in mixed-radix order, chore-major with agent digits ascending)
//! is therefore preserved.

use crate::fairness::{is_envy_free, is_proportional, Allocation};
use crate::instance::DisutilityMatrix;
use crate::{Error, Result};

/// Enumeration guard: refuse instances with nᵐ above this.
pub const ORACLE_ENUMERATION_LIMIT: f64 = 1e8;

fn check_guard(matrix: &DisutilityMatrix) -> Result<()> {
    let n = matrix.n();
    let m = matrix.m();
    if (n as f64).powf(m as f64) > ORACLE_ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!(
            "existence oracle needs n^m ≤ {ORACLE_ENUMERATION_LIMIT:.0}, got {n}^{m}"
        )));
    }
    Ok(())
}

struct EfSearch<'a> {
    d: &'a DisutilityMatrix,
    n: usize,
    m: usize,
    /// levels[j] holds the n×n partial bundle-cost grid after assigning
    /// chores 0..j; kept per level (not undone in place) so every value is
    /// the plain ascending-order float sum that `is_envy_free` would compute.
    levels: Vec<Vec<f64>>,
    /// suffix[i·(m+1)+j] = Σ_{j′≥j} dᵢ(j′): the most any later chores can add.
    suffix: Vec<f64>,
    assign: Vec<usize>,
}

impl<'a> EfSearch<'a> {
    fn new(d: &'a DisutilityMatrix) -> Self {
        let n = d.n();
        let m = d.m();
        let mut suffix = vec![0.0; n * (m + 1)];
        for i in 0..n {
            for j in (0..m).rev() {
                suffix[i * (m + 1) + j] = suffix[i * (m + 1) + j + 1] + d.cost(i, j);
            }
        }
        EfSearch {
            d,
            n,
            m,
            levels: vec![vec![0.0; n * n]; m + 1],
            suffix,
            assign: vec![0; m],
        }
    }

    /// A partial state is hopeless for agent i when her own cost already
    /// exceeds her cheapest view of any other bundle even if every remaining
    /// chore were piled onto that bundle.
    fn pruned(&self, level: usize) -> bool {
        let v = &self.levels[level];
        let n = self.n;
        for i in 0..n {
            let own = v[i * n + i];
            let mut min_other = f64::INFINITY;
            for k in 0..n {
                if k != i {
                    min_other = min_other.min(v[i * n + k]);
                }
            }
            if own > min_other + self.suffix[i * (self.m + 1) + level] {
                return true;
            }
        }
        false
    }

    fn dfs(&mut self, j: usize) -> bool {
        if j == self.m {
            // pruned(m) with zero suffix is exactly the envy check, and the
            // parent already verified it.
            return true;
        }
        for a in 0..self.n {
            let (head, tail) = self.levels.split_at_mut(j + 1);
            let cur = &head[j];
            let next = &mut tail[0];
            next.copy_from_slice(cur);
            for i in 0..self.n {
                next[i * self.n + a] += self.d.cost(i, j);
            }
            self.assign[j] = a;
            if !self.pruned(j + 1) && self.dfs(j + 1) {
                return true;
            }
        }
        false
    }
}

/// Decides whether any envy-free allocation exists; on success returns the
/// lexicographically first witness.
pub fn exists_envy_free(matrix: &DisutilityMatrix) -> Result<Option<Allocation>> {
    check_guard(matrix)?;
    let mut search = EfSearch::new(matrix);
    if search.pruned(0) || !search.dfs(0) {
        return Ok(None);
    }
    let witness = Allocation::from_assignment(&search.assign, matrix.n())?;
    debug_assert!(is_envy_free(matrix, &witness).unwrap());
    Ok(Some(witness))
}

struct PropSearch<'a> {
    d: &'a DisutilityMatrix,
    n: usize,
    m: usize,
    /// own[j·n + a] = agent a's bundle cost after assigning chores 0..j.
    own: Vec<f64>,
    threshold: Vec<f64>,
    assign: Vec<usize>,
}

impl<'a> PropSearch<'a> {
    fn new(d: &'a DisutilityMatrix) -> Self {
        let n = d.n();
        let m = d.m();
        let threshold = (0..n).map(|i| d.total(i) / n as f64).collect();
        PropSearch {
            d,
            n,
            m,
            own: vec![0.0; (m + 1) * n],
            threshold,
            assign: vec![0; m],
        }
    }

    fn dfs(&mut self, j: usize) -> bool {
        if j == self.m {
            return true;
        }
        for a in 0..self.n {
            let cost = self.d.cost(a, j);
            let base = j * self.n;
            let grown = self.own[base + a] + cost;
            // Own costs only grow, so exceeding the share is terminal.
            if grown > self.threshold[a] {
                continue;
            }
            let (head, tail) = self.own.split_at_mut(base + self.n);
            tail[..self.n].copy_from_slice(&head[base..]);
            tail[a] = grown;
            self.assign[j] = a;
            if self.dfs(j + 1) {
                return true;
            }
        }
        false
    }
}

/// Decides whether any proportional allocation exists; on success returns the
/// lexicographically first witness.
pub fn exists_proportional(matrix: &DisutilityMatrix) -> Result<Option<Allocation>> {
    check_guard(matrix)?;
    let mut search = PropSearch::new(matrix);
    if !search.dfs(0) {
        return Ok(None);
    }
    let witness = Allocation::from_assignment(&search.assign, matrix.n())?;
    debug_assert!(is_proportional(matrix, &witness).unwrap());
    Ok(Some(witness))
}
