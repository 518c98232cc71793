//! Sparse LU factorisation of a simplex basis with Markowitz pivot selection,
//! plus a product-form eta file for basis updates between refactorisations.
//!
//! Rows of the basis are constraint rows; columns are basis positions. The
//! factorisation records a pivot sequence `(row_k, pos_k)`, the column
//! multipliers of each elimination step (L) and the pivot rows (U).

use crate::scalar::Scalar;

const NONE: usize = usize::MAX;

/// Columns examined by the general Markowitz search once a candidate exists.
const SEARCH_COLUMNS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

/// Intrusive doubly linked lists of indices bucketed by nonzero count.
struct Buckets {
    head: Vec<usize>,
    next: Vec<usize>,
    prev: Vec<usize>,
    count: Vec<usize>,
    linked: Vec<bool>,
}

impl Buckets {
    fn new(items: usize, max_count: usize) -> Self {
        Buckets {
            head: vec![NONE; max_count + 2],
            next: vec![NONE; items],
            prev: vec![NONE; items],
            count: vec![0; items],
            linked: vec![false; items],
        }
    }

    fn insert(&mut self, i: usize, count: usize) {
        let count = count.min(self.head.len() - 1);
        self.count[i] = count;
        self.prev[i] = NONE;
        self.next[i] = self.head[count];
        if self.head[count] != NONE {
            self.prev[self.head[count]] = i;
        }
        self.head[count] = i;
        self.linked[i] = true;
    }

    fn remove(&mut self, i: usize) {
        if !self.linked[i] {
            return;
        }
        let (p, n) = (self.prev[i], self.next[i]);
        if p != NONE {
            self.next[p] = n;
        } else {
            self.head[self.count[i]] = n;
        }
        if n != NONE {
            self.prev[n] = p;
        }
        self.linked[i] = false;
    }

    fn update(&mut self, i: usize, count: usize) {
        if self.linked[i] {
            self.remove(i);
            self.insert(i, count);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LuFactors<T> {
    m: usize,
    piv_row: Vec<usize>,
    piv_pos: Vec<usize>,
    diag: Vec<T>,
    l_cols: Vec<Vec<(usize, T)>>,
    u_rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> LuFactors<T> {
    /// Factorises the `m x m` matrix whose column `pos` is `columns[pos]`
    /// given as `(row, value)` pairs.
    pub fn factorize(
        m: usize,
        columns: &[&[(usize, T)]],
        threshold: T,
        zero_tol: T,
    ) -> Result<Self, Singular> {
        debug_assert_eq!(columns.len(), m);
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (pos, col) in columns.iter().enumerate() {
            for &(r, v) in col.iter() {
                if v != T::zero() {
                    rows[r].push((pos, v));
                    col_rows[pos].push(r);
                }
            }
        }
        let mut col_count: Vec<usize> = col_rows.iter().map(Vec::len).collect();
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut dead_cols = Vec::new();

        let mut col_b = Buckets::new(m, m);
        let mut row_b = Buckets::new(m, m);
        for c in (0..m).rev() {
            col_b.insert(c, col_count[c]);
        }
        for r in (0..m).rev() {
            row_b.insert(r, rows[r].len());
        }

        let mut f = LuFactors {
            m,
            piv_row: Vec::with_capacity(m),
            piv_pos: Vec::with_capacity(m),
            diag: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_rows: Vec::with_capacity(m),
        };
        let mut mark = vec![NONE; m];

        let find = |rows: &Vec<Vec<(usize, T)>>, r: usize, c: usize| -> Option<usize> {
            rows[r].iter().position(|&(j, _)| j == c)
        };

        for _ in 0..m {
            // Empty columns can never be pivoted.
            while col_b.head[0] != NONE {
                let c = col_b.head[0];
                col_b.remove(c);
                dead_cols.push(c);
            }

            let mut choice: Option<(usize, usize)> = None;

            // Column singletons.
            while choice.is_none() && col_b.head[1] != NONE {
                let c = col_b.head[1];
                let r = col_rows[c]
                    .iter()
                    .copied()
                    .find(|&r| !row_done[r])
                    .expect("column count matches active rows");
                let v = rows[r][find(&rows, r, c).expect("entry present")].1;
                if v.abs() > zero_tol {
                    choice = Some((r, c));
                } else {
                    col_b.remove(c);
                    dead_cols.push(c);
                }
            }

            // Row singletons, accepted when stable relative to their column.
            if choice.is_none() {
                let mut r = row_b.head[1];
                let mut tries = 0;
                while r != NONE && tries < SEARCH_COLUMNS {
                    let (c, v) = rows[r][0];
                    let colmax = col_rows[c]
                        .iter()
                        .filter(|&&rr| !row_done[rr])
                        .filter_map(|&rr| find(&rows, rr, c).map(|i| rows[rr][i].1.abs()))
                        .fold(T::zero(), T::max);
                    if v.abs() > zero_tol && v.abs() >= threshold * colmax {
                        choice = Some((r, c));
                        break;
                    }
                    r = row_b.next[r];
                    tries += 1;
                }
            }

            // General Markowitz search over the sparsest columns.
            if choice.is_none() {
                let mut best: Option<(usize, T, usize, usize)> = None;
                let mut examined = 0;
                'outer: for count in 2..col_b.head.len() {
                    let mut c = col_b.head[count];
                    while c != NONE {
                        let next = col_b.next[c];
                        let entries: Vec<(usize, T)> = col_rows[c]
                            .iter()
                            .filter(|&&r| !row_done[r])
                            .filter_map(|&r| find(&rows, r, c).map(|i| (r, rows[r][i].1)))
                            .collect();
                        let colmax = entries.iter().fold(T::zero(), |a, e| a.max(e.1.abs()));
                        if colmax <= zero_tol {
                            col_b.remove(c);
                            dead_cols.push(c);
                            c = next;
                            continue;
                        }
                        for &(r, v) in &entries {
                            if v.abs() < threshold * colmax || v.abs() <= zero_tol {
                                continue;
                            }
                            let cost = (rows[r].len() - 1) * (col_count[c] - 1);
                            let better = match best {
                                None => true,
                                Some((bc, bv, br, bcol)) => {
                                    cost < bc
                                        || (cost == bc
                                            && (v.abs() > bv
                                                || (v.abs() == bv && (r, c) < (br, bcol))))
                                }
                            };
                            if better {
                                best = Some((cost, v.abs(), r, c));
                            }
                        }
                        examined += 1;
                        if best.is_some() && examined >= SEARCH_COLUMNS {
                            break 'outer;
                        }
                        c = next;
                    }
                    if best.is_some() {
                        break;
                    }
                }
                choice = best.map(|(_, _, r, c)| (r, c));
            }

            let Some((pr, pc)) = choice else { break };

            // Eliminate.
            let pi = find(&rows, pr, pc).expect("pivot entry");
            let pivot = rows[pr][pi].1;
            let mut u_row: Vec<(usize, T)> = rows[pr]
                .iter()
                .copied()
                .filter(|&(j, _)| j != pc)
                .collect();
            u_row.sort_unstable_by_key(|e| e.0);
            let mut l_col = Vec::new();
            let pattern = std::mem::take(&mut col_rows[pc]);
            for &rr in &pattern {
                if row_done[rr] || rr == pr {
                    continue;
                }
                let Some(idx) = find(&rows, rr, pc) else { continue };
                let a = rows[rr].swap_remove(idx).1;
                let l = a / pivot;
                l_col.push((rr, l));
                for (k, &(j, _)) in rows[rr].iter().enumerate() {
                    mark[j] = k;
                }
                for &(j, u) in &u_row {
                    if mark[j] != NONE {
                        let k = mark[j];
                        rows[rr][k].1 = rows[rr][k].1 - l * u;
                    } else {
                        rows[rr].push((j, -l * u));
                        col_rows[j].push(rr);
                        col_count[j] += 1;
                        col_b.update(j, col_count[j]);
                    }
                }
                for &(j, _) in rows[rr].iter() {
                    mark[j] = NONE;
                }
                row_b.update(rr, rows[rr].len());
            }
            col_rows[pc] = pattern;
            for &(j, _) in &u_row {
                col_count[j] -= 1;
                col_b.update(j, col_count[j]);
            }
            row_done[pr] = true;
            col_done[pc] = true;
            row_b.remove(pr);
            col_b.remove(pc);
            rows[pr].clear();

            f.piv_row.push(pr);
            f.piv_pos.push(pc);
            f.diag.push(pivot);
            f.l_cols.push(l_col);
            f.u_rows.push(u_row);
        }

        if f.piv_row.len() < m {
            let mut positions: Vec<usize> = (0..m).filter(|&c| !col_done[c]).collect();
            let mut rows_left: Vec<usize> = (0..m).filter(|&r| !row_done[r]).collect();
            positions.sort_unstable();
            rows_left.sort_unstable();
            return Err(Singular {
                positions,
                rows: rows_left,
            });
        }
        Ok(f)
    }

    /// Solves `B x = rhs` in place: `rhs` is indexed by row on entry and the
    /// result is indexed by basis position.
    pub fn solve(&self, rhs: &mut [T], scratch: &mut [T]) {
        let w = rhs;
        for k in 0..self.piv_row.len() {
            let v = w[self.piv_row[k]];
            if v != T::zero() {
                for &(r, l) in &self.l_cols[k] {
                    w[r] = w[r] - l * v;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let mut acc = w[self.piv_row[k]];
            for &(j, u) in &self.u_rows[k] {
                acc = acc - u * scratch[j];
            }
            scratch[self.piv_pos[k]] = acc / self.diag[k];
        }
        w[..self.m].copy_from_slice(&scratch[..self.m]);
    }

    /// Solves `B^T y = rhs` in place: `rhs` is indexed by basis position on
    /// entry and the result is indexed by row.
    pub fn solve_transpose(&self, rhs: &mut [T], scratch: &mut [T]) {
        let c = rhs;
        for k in 0..self.piv_row.len() {
            let z = c[self.piv_pos[k]] / self.diag[k];
            if z != T::zero() {
                for &(j, u) in &self.u_rows[k] {
                    c[j] = c[j] - u * z;
                }
            }
            scratch[self.piv_row[k]] = z;
        }
        for k in (0..self.piv_row.len()).rev() {
            let mut s = T::zero();
            for &(r, l) in &self.l_cols[k] {
                s = s + l * scratch[r];
            }
            let p = self.piv_row[k];
            scratch[p] = scratch[p] - s;
        }
        c[..self.m].copy_from_slice(&scratch[..self.m]);
    }

    pub fn nnz(&self) -> usize {
        self.l_cols.iter().map(Vec::len).sum::<usize>()
            + self.u_rows.iter().map(Vec::len).sum::<usize>()
            + self.m
    }
}

/// One product-form update: basis position `pos` replaced by a column whose
/// representation in the previous basis is `alpha`.
#[derive(Debug, Clone)]
pub(crate) struct Eta<T> {
    pos: usize,
    pivot: T,
    others: Vec<(usize, T)>,
}

impl<T: Scalar> Eta<T> {
    pub fn new(pos: usize, alpha: &[T], drop_tol: T) -> Self {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, a)| i != pos && a.abs() > drop_tol)
            .map(|(i, &a)| (i, a))
            .collect();
        Eta {
            pos,
            pivot: alpha[pos],
            others,
        }
    }

    fn apply(&self, x: &mut [T]) {
        let xr = x[self.pos] / self.pivot;
        x[self.pos] = xr;
        if xr != T::zero() {
            for &(i, a) in &self.others {
                x[i] = x[i] - a * xr;
            }
        }
    }

    fn apply_transpose(&self, c: &mut [T]) {
        let mut s = c[self.pos];
        for &(i, a) in &self.others {
            s = s - a * c[i];
        }
        c[self.pos] = s / self.pivot;
    }
}

/// Basis inverse representation: LU of the last refactorised basis followed
/// by the etas of every pivot since.
#[derive(Debug, Clone)]
pub(crate) struct BasisInverse<T> {
    lu: LuFactors<T>,
    etas: Vec<Eta<T>>,
    scratch: Vec<T>,
}

impl<T: Scalar> BasisInverse<T> {
    pub fn new(lu: LuFactors<T>) -> Self {
        let m = lu.m;
        BasisInverse {
            lu,
            etas: Vec::new(),
            scratch: vec![T::zero(); m],
        }
    }

    pub fn ftran(&mut self, x: &mut [T]) {
        self.lu.solve(x, &mut self.scratch);
        for e in &self.etas {
            e.apply(x);
        }
    }

    pub fn btran(&mut self, c: &mut [T]) {
        for e in self.etas.iter().rev() {
            e.apply_transpose(c);
        }
        self.lu.solve_transpose(c, &mut self.scratch);
    }

    pub fn push_eta(&mut self, eta: Eta<T>) {
        self.etas.push(eta);
    }

    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }

    pub fn eta_nnz(&self) -> usize {
        self.etas.iter().map(|e| e.others.len() + 1).sum()
    }

    pub fn lu_nnz(&self) -> usize {
        self.lu.nnz()
    }
}
