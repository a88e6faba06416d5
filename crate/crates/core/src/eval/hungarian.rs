//! Maximum-profit assignment.
//!
//! The optimum is found with the potentials form of the Hungarian method.
//! Any perfect matching on tight edges (zero reduced cost) of an optimal
//! dual is optimal, so the lexicographically smallest optimum is the
//! lexicographically smallest perfect matching of that equality graph.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column chosen for each input row; `None` when the row landed on a padding column.
    pub mapping: Vec<Option<usize>>,
    pub total: f64,
}

/// Maximizes total profit over injective row-to-column assignments.
/// Rectangular input is padded to square with zero profit.
pub fn hungarian(profit: &[Vec<f64>]) -> Result<Assignment> {
    let rows = profit.len();
    let cols = profit.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Invalid("hungarian: empty profit matrix".into()));
    }
    for (i, r) in profit.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Invalid(format!("hungarian: row {i} has {} columns, expected {cols}", r.len())));
        }
        if let Some(v) = r.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invalid(format!("hungarian: entry {v} in row {i} is not a finite non-negative value")));
        }
    }
    let n = rows.max(cols);
    let cost: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i < rows && j < cols {
                -profit[i][j]
            } else {
                0.0
            }
        })
        .collect();

    let (u, v, mut col_of) = solve_min_cost(n, &cost);
    let scale = 1.0 + cost.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let tol = 1e-9 * scale;
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| (cost[i * n + j] - u[i] - v[j]).abs() <= tol).collect())
        .collect();
    lex_smallest(n, &tight, &mut col_of);

    let mapping: Vec<Option<usize>> = (0..rows).map(|i| Some(col_of[i]).filter(|&j| j < cols)).collect();
    let total = mapping
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| profit[i][j]))
        .sum();
    Ok(Assignment { mapping, total })
}

/// Minimum-cost perfect matching on a dense square matrix. Returns row and
/// column potentials and the column matched to each row.
fn solve_min_cost(n: usize, cost: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), col_of)
}

/// Rewrites a perfect matching of the `tight` graph into the
/// lexicographically smallest one, fixing rows in order.
fn lex_smallest(n: usize, tight: &[Vec<bool>], col_of: &mut [usize]) {
    let mut row_of = vec![0; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    let mut col_fixed = vec![false; n];
    for r in 0..n {
        let target = col_of[r];
        // Rows (other than r, unfixed) that can hand their column along an
        // alternating path ending at `target`; `next` is the column they take.
        let mut next = vec![usize::MAX; n];
        let mut queue = VecDeque::from([target]);
        while let Some(c) = queue.pop_front() {
            for x in (r + 1)..n {
                if next[x] == usize::MAX && tight[x][c] {
                    next[x] = c;
                    queue.push_back(col_of[x]);
                }
            }
        }
        let chosen = (0..n)
            .find(|&c| !col_fixed[c] && tight[r][c] && (c == target || next[row_of[c]] != usize::MAX))
            .expect("current column is always feasible");
        if chosen != target {
            let mut x = row_of[chosen];
            col_of[r] = chosen;
            row_of[chosen] = r;
            loop {
                let c = next[x];
                let displaced = row_of[c];
                col_of[x] = c;
                row_of[c] = x;
                if c == target {
                    break;
                }
                x = displaced;
            }
        }
        col_fixed[chosen] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out.sort();
        out
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, hi: u32) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(0..=hi) as f64).collect())
            .collect()
    }

    #[test]
    fn identity_matrix() {
        let m: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let a = hungarian(&m).unwrap();
        assert_eq!(a.mapping, vec![Some(0), Some(1), Some(2), Some(3)]);
        assert_eq!(a.total, 4.0);
    }

    #[test]
    fn single_cell() {
        let a = hungarian(&[vec![3.5]]).unwrap();
        assert_eq!(a.mapping, vec![Some(0)]);
        assert_eq!(a.total, 3.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hungarian(&[]).is_err());
        assert!(hungarian(&[vec![]]).is_err());
        assert!(hungarian(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(hungarian(&[vec![-1.0]]).is_err());
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn rectangular_padding() {
        let wide = hungarian(&[vec![1.0, 5.0, 2.0]]).unwrap();
        assert_eq!(wide.mapping, vec![Some(1)]);
        let tall = hungarian(&[vec![1.0], vec![5.0], vec![2.0]]).unwrap();
        assert_eq!(tall.mapping, vec![None, Some(0), None]);
        assert_eq!(tall.total, 5.0);
    }

    #[test]
    fn all_zero_is_identity() {
        let a = hungarian(&vec![vec![0.0; 5]; 5]).unwrap();
        assert_eq!(a.mapping, (0..5).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn matches_permutation_brute_force_7x7() {
        let perms = permutations(7);
        assert_eq!(perms.len(), 5040);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..50 {
            // Small value range forces many tied optima.
            let hi = if case % 2 == 0 { 3 } else { 100 };
            let m = random_matrix(&mut rng, 7, 7, hi);
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for p in &perms {
                let t: f64 = p.iter().enumerate().map(|(i, &j)| m[i][j]).sum();
                if t > best.0 {
                    best = (t, p.clone());
                }
            }
            let a = hungarian(&m).unwrap();
            assert_eq!(a.total, best.0, "case {case}");
            let got: Vec<usize> = a.mapping.iter().map(|j| j.unwrap()).collect();
            assert_eq!(got, best.1, "case {case}: not the lexicographically first optimum");
        }
    }

    #[test]
    fn lexicographic_tie_rule_on_rectangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (r, c) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let m = random_matrix(&mut rng, r, c, 2);
            let n = r.max(c);
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for p in permutations(n) {
                let t: f64 = p.iter().take(r).enumerate().filter(|(_, &j)| j < c).map(|(i, &j)| m[i][j]).sum();
                if t > best.0 {
                    best = (t, p);
                }
            }
            let a = hungarian(&m).unwrap();
            assert_eq!(a.total, best.0);
            let expect: Vec<Option<usize>> = best.1[..r].iter().map(|&j| Some(j).filter(|&j| j < c)).collect();
            assert_eq!(a.mapping, expect, "{m:?}");
        }
    }

    #[test]
    fn never_worse_than_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (r, c) = (rng.random_range(1..=12), rng.random_range(1..=12));
            let m = random_matrix(&mut rng, r, c, 50);
            let mut used_r = vec![false; r];
            let mut used_c = vec![false; c];
            let mut cells: Vec<(f64, usize, usize)> =
                (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| (m[i][j], i, j)).collect();
            cells.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut greedy = 0.0;
            for (p, i, j) in cells {
                if !used_r[i] && !used_c[j] {
                    used_r[i] = true;
                    used_c[j] = true;
                    greedy += p;
                }
            }
            let a = hungarian(&m).unwrap();
            assert!(a.total >= greedy);
            let mut seen = vec![false; c];
            for j in a.mapping.iter().flatten() {
                assert!(!seen[*j], "not injective");
                seen[*j] = true;
            }
        }
    }

    #[test]
    fn fractional_profits() {
        let m = vec![vec![0.1, 0.7, 0.2], vec![0.65, 0.6, 0.0], vec![0.3, 0.3, 0.35]];
        let a = hungarian(&m).unwrap();
        assert_eq!(a.mapping, vec![Some(1), Some(0), Some(2)]);
        assert!((a.total - 1.7).abs() < 1e-12);
    }
}
