//! Dense LU solve and chain-structure helpers (closed classes, period).

use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `n · eps · max|a|`.
pub fn solve<T: Scalar>(mut a: Dense<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let tiny = T::epsilon() * T::from_count(n.max(1)) * scale;
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a.get(r, col).abs()))
            .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs <= tiny {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                a.data.swap(col * n + j, pivot_row * n + j);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a.get(col, col);
        let (upper, lower) = a.data.split_at_mut((col + 1) * n);
        let pivot_row_vals = &upper[col * n..];
        for r in 0..(n - col - 1) {
            let row = &mut lower[r * n..(r + 1) * n];
            let factor = row[col] / pivot;
            if factor == T::zero() {
                continue;
            }
            row[col] = T::zero();
            for j in (col + 1)..n {
                row[j] -= factor * pivot_row_vals[j];
            }
            let bc = b[col];
            b[col + 1 + r] -= factor * bc;
        }
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in (i + 1)..n {
            acc -= a.get(i, j) * b[j];
        }
        b[i] = acc / a.get(i, i);
    }
    Some(b)
}

/// Adjacency lists of the positive-probability transition graph.
pub fn support_graph<T: Scalar>(p: &Dense<T>) -> Vec<Vec<usize>> {
    (0..p.n)
        .map(|i| (0..p.n).filter(|&j| p.get(i, j) > T::zero()).collect())
        .collect()
}

/// Strongly connected components that have no outgoing edges (the recurrent classes).
pub fn closed_classes(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    // Kosaraju: finishing order on the graph, then components on the reverse graph.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        seen[root] = true;
        while let Some((v, next)) = stack.pop() {
            if next < adj[v].len() {
                stack.push((v, next + 1));
                let w = adj[v][next];
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
            }
        }
    }
    let mut rev = vec![Vec::new(); n];
    for (v, outs) in adj.iter().enumerate() {
        for &w in outs {
            rev[w].push(v);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut members = vec![root];
        comp[root] = id;
        let mut i = 0;
        while i < members.len() {
            let v = members[i];
            i += 1;
            for &w in &rev[v] {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    members.push(w);
                }
            }
        }
        comps.push(members);
    }
    comps
        .into_iter()
        .enumerate()
        .filter(|(id, members)| members.iter().all(|&v| adj[v].iter().all(|&w| comp[w] == *id)))
        .map(|(_, mut members)| {
            members.sort_unstable();
            members
        })
        .collect()
}

/// Period of a strongly connected class: gcd of `level(u) + 1 - level(v)` over its edges.
pub fn period(adj: &[Vec<usize>], class: &[usize]) -> usize {
    let n = adj.len();
    let mut in_class = vec![false; n];
    for &v in class {
        in_class[v] = true;
    }
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[class[0]] = 0;
    queue.push_back(class[0]);
    let mut g = 0usize;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !in_class[v] {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] + 1).abs_diff(level[v]);
                g = gcd(g, diff);
            }
        }
    }
    g.max(1)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let mut a = Dense::<f64>::zeros(3);
        a.data = vec![0.0, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let x = solve(a.clone(), vec![5.0, 6.0, 13.0]).unwrap();
        for i in 0..3 {
            let lhs: f64 = (0..3).map(|j| a.get(i, j) * x[j]).sum();
            assert!((lhs - [5.0, 6.0, 13.0][i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_detected() {
        let mut a = Dense::<f64>::zeros(2);
        a.data = vec![1.0, 2.0, 2.0, 4.0];
        assert!(solve(a, vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn classes_and_period() {
        // 0 -> 1 -> 2 -> 1 (closed {1,2}, period 2); 3 -> 3 (closed, aperiodic)
        let adj = vec![vec![1], vec![2], vec![1], vec![3]];
        let classes = closed_classes(&adj);
        assert_eq!(classes.len(), 2);
        assert!(classes.contains(&vec![1, 2]));
        assert_eq!(period(&adj, &[1, 2]), 2);
        assert_eq!(period(&adj, &[3]), 1);
        let cycle3 = vec![vec![1], vec![2], vec![0, 1]];
        assert_eq!(period(&cycle3, &[0, 1, 2]), 1);
    }
}
