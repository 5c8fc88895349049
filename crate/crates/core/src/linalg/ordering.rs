//! Bandwidth-reducing orderings.

use std::collections::VecDeque;

use super::CsrMatrix;

/// Reverse Cuthill-McKee ordering of the symmetrized pattern of `m`.
/// Returns `perm` with `perm[new] = old`. Each connected component starts
/// from a pseudo-peripheral vertex; ties break by index, so the result is
/// deterministic.
pub fn rcm_ordering(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n_rows();
    let adj = symmetric_adjacency(m);
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, &degree, seed);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Inverse of a permutation.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

fn symmetric_adjacency(m: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = m.n_rows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for &j in m.row(i).0 {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Level sets from `root` restricted to its component.
fn level_structure(adj: &[Vec<usize>], root: usize, level: &mut [usize]) -> (usize, Vec<usize>) {
    level.iter_mut().for_each(|l| *l = usize::MAX);
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut last_level = vec![root];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                if level[w] > depth {
                    depth = level[w];
                    last_level.clear();
                }
                last_level.push(w);
                queue.push_back(w);
            }
        }
    }
    (depth, last_level)
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut level = vec![usize::MAX; adj.len()];
    let mut root = seed;
    let (mut depth, mut last) = level_structure(adj, root, &mut level);
    loop {
        let candidate = *last.iter().min_by_key(|&&v| (degree[v], v)).expect("nonempty level");
        let (d, l) = level_structure(adj, candidate, &mut level);
        if d <= depth {
            return root;
        }
        root = candidate;
        depth = d;
        last = l;
    }
}

impl CsrMatrix {
    /// `P M Pᵀ` with `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> CsrMatrix {
        assert_eq!(
            self.n_rows(),
            self.n_cols(),
            "symmetric permutation needs a square matrix"
        );
        assert_eq!(perm.len(), self.n_rows(), "permutation length");
        let inv = invert_permutation(perm);
        let mut offsets = Vec::with_capacity(self.n_rows() + 1);
        offsets.push(0);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &old in perm {
            let (c, v) = self.row(old);
            row.clear();
            row.extend(c.iter().map(|&j| inv[j]).zip(v.iter().copied()));
            row.sort_unstable_by_key(|e| e.0);
            for &(j, x) in &row {
                cols.push(j);
                vals.push(x);
            }
            offsets.push(cols.len());
        }
        CsrMatrix::new(self.n_rows(), self.n_cols(), offsets, cols, vals).expect("permutation keeps a valid pattern")
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n_rows())
            .flat_map(|i| self.row(i).0.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }
}
