//! Transportation simplex (stepping-stone method) for unit supplies.
//!
//! Rows `0..n` are the examples (supply 1 each) and columns the classes
//! (demand `n(y)`). A basis is a spanning tree over the `n + m` nodes with
//! `n + m − 1` cells; at most `n` of them carry flow, so every basis is
//! degenerate of order `m − 1` or more.
//!
//! The starting basis takes the cells of a feasible assignment and joins the
//! class components through zero-flow cells in row 0, the lexicographically
//! lowest choice. Each iteration prices all non-basic cells through the
//! node potentials and pivots on the first cell in row-major order with a
//! negative reduced cost; the leaving cell is the lowest-index cell among
//! the minimum-flow cells on the minus side of the cycle. This is Bland's
//! rule, so degenerate pivots cannot cycle.

use crate::data::LabelCounts;
use crate::error::Result;
use crate::matrix::CostMatrix;

use super::{check_init, check_instance, greedy_init_from_costs, Assignment};

#[derive(Clone, Debug)]
pub struct SimplexConfig {
    /// Pivot budget; the current basis is returned if it runs out.
    pub max_iterations: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        SimplexConfig {
            max_iterations: usize::MAX,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimplexStats {
    pub iterations: usize,
    pub degenerate_pivots: usize,
    /// False only when `max_iterations` stopped the search.
    pub optimal: bool,
}

/// Exact solution, starting from the greedy assignment on `−c`.
pub fn solve_simplex(costs: &CostMatrix, counts: &LabelCounts) -> Result<Assignment> {
    check_instance(costs, counts)?;
    let init = greedy_init_from_costs(costs, counts)?;
    solve_simplex_from(costs, counts, &init, &SimplexConfig::default()).map(|(a, _)| a)
}

/// Exact solution starting from the basis built on a feasible `init`.
pub fn solve_simplex_from(
    costs: &CostMatrix,
    counts: &LabelCounts,
    init: &Assignment,
    cfg: &SimplexConfig,
) -> Result<(Assignment, SimplexStats)> {
    check_instance(costs, counts)?;
    check_init(costs, counts, init)?;
    let n = costs.rows();
    let m = costs.cols();
    if n == 0 || m == 1 {
        let stats = SimplexStats {
            optimal: true,
            ..Default::default()
        };
        return Ok((Assignment::scored(init.labels().to_vec(), costs), stats));
    }

    let mut basis = Basis::new(costs, init.labels());
    let scale = costs.values().iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let eps = 1e-11 * scale;
    let mut stats = SimplexStats::default();

    loop {
        basis.price();
        let Some((ei, ey)) = basis.entering(eps) else {
            stats.optimal = true;
            break;
        };
        if stats.iterations == cfg.max_iterations {
            break;
        }
        stats.iterations += 1;
        if basis.pivot(ei, ey) == 0 {
            stats.degenerate_pivots += 1;
        }
    }

    Ok((Assignment::scored(basis.extract(), costs), stats))
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    row: usize,
    col: usize,
    flow: u32,
}

struct Basis<'a> {
    costs: &'a CostMatrix,
    n: usize,
    m: usize,
    cells: Vec<Cell>,
    /// Cell slots incident to each node; rows are nodes `0..n`, columns
    /// `n..n + m`.
    adj: Vec<Vec<usize>>,
    is_basic: Vec<bool>,
    potential: Vec<f64>,
    parent_node: Vec<usize>,
    parent_slot: Vec<usize>,
    depth: Vec<usize>,
    stack: Vec<usize>,
    cycle: Vec<usize>,
    down: Vec<usize>,
}

impl<'a> Basis<'a> {
    fn new(costs: &'a CostMatrix, labels: &[usize]) -> Self {
        let n = costs.rows();
        let m = costs.cols();
        let nodes = n + m;
        let mut basis = Basis {
            costs,
            n,
            m,
            cells: Vec::with_capacity(nodes - 1),
            adj: vec![Vec::new(); nodes],
            is_basic: vec![false; n * m],
            potential: vec![0.0; nodes],
            parent_node: vec![usize::MAX; nodes],
            parent_slot: vec![usize::MAX; nodes],
            depth: vec![usize::MAX; nodes],
            stack: Vec::with_capacity(nodes),
            cycle: Vec::new(),
            down: Vec::new(),
        };
        for (i, &y) in labels.iter().enumerate() {
            basis.insert(Cell { row: i, col: y, flow: 1 });
        }
        for y in (0..m).filter(|&y| y != labels[0]) {
            basis.insert(Cell { row: 0, col: y, flow: 0 });
        }
        basis
    }

    fn insert(&mut self, cell: Cell) {
        let slot = self.cells.len();
        self.cells.push(cell);
        self.attach(slot);
    }

    fn attach(&mut self, slot: usize) {
        let Cell { row, col, .. } = self.cells[slot];
        self.adj[row].push(slot);
        self.adj[self.n + col].push(slot);
        self.is_basic[row * self.m + col] = true;
    }

    fn detach(&mut self, slot: usize) {
        let Cell { row, col, .. } = self.cells[slot];
        for node in [row, self.n + col] {
            let list = &mut self.adj[node];
            let pos = list.iter().position(|&s| s == slot).expect("slot is attached");
            list.swap_remove(pos);
        }
        self.is_basic[row * self.m + col] = false;
    }

    /// Potentials with `u_0 = 0` and `u_i + v_y = c_iy` on basic cells, plus
    /// parent links of the tree rooted at row 0.
    fn price(&mut self) {
        self.depth.iter_mut().for_each(|d| *d = usize::MAX);
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        self.stack.clear();
        self.stack.push(0);
        let mut visited = 1;
        while let Some(a) = self.stack.pop() {
            for k in 0..self.adj[a].len() {
                let slot = self.adj[a][k];
                let Cell { row, col, .. } = self.cells[slot];
                let other = if a < self.n { self.n + col } else { row };
                if self.depth[other] != usize::MAX {
                    continue;
                }
                self.depth[other] = self.depth[a] + 1;
                self.parent_node[other] = a;
                self.parent_slot[other] = slot;
                self.potential[other] = self.costs.get(row, col) - self.potential[a];
                self.stack.push(other);
                visited += 1;
            }
        }
        debug_assert_eq!(visited, self.n + self.m, "basis is not a spanning tree");
    }

    /// First non-basic cell in row-major order with reduced cost below
    /// `−eps`.
    fn entering(&self, eps: f64) -> Option<(usize, usize)> {
        let (n, m) = (self.n, self.m);
        let col_pot = &self.potential[n..];
        for i in 0..n {
            let u = self.potential[i];
            let row = self.costs.row(i);
            let basic = &self.is_basic[i * m..(i + 1) * m];
            for y in 0..m {
                if !basic[y] && row[y] - u - col_pot[y] < -eps {
                    return Some((i, y));
                }
            }
        }
        None
    }

    /// Pivots `(row, col)` into the basis and returns the flow moved.
    fn pivot(&mut self, row: usize, col: usize) -> u32 {
        // Tree path from the row node to the column node: edges climbing
        // from the row side, then edges descending to the column side.
        self.cycle.clear();
        self.down.clear();
        let mut a = row;
        let mut b = self.n + col;
        while self.depth[a] > self.depth[b] {
            self.cycle.push(self.parent_slot[a]);
            a = self.parent_node[a];
        }
        while self.depth[b] > self.depth[a] {
            self.down.push(self.parent_slot[b]);
            b = self.parent_node[b];
        }
        while a != b {
            self.cycle.push(self.parent_slot[a]);
            a = self.parent_node[a];
            self.down.push(self.parent_slot[b]);
            b = self.parent_node[b];
        }
        self.cycle.extend(self.down.iter().rev());

        // Even positions lose flow, odd positions gain it.
        let mut leaving = usize::MAX;
        let mut theta = u32::MAX;
        let mut leaving_key = usize::MAX;
        for &slot in self.cycle.iter().step_by(2) {
            let c = self.cells[slot];
            let key = c.row * self.m + c.col;
            if c.flow < theta || (c.flow == theta && key < leaving_key) {
                theta = c.flow;
                leaving = slot;
                leaving_key = key;
            }
        }
        for (k, &slot) in self.cycle.iter().enumerate() {
            if k % 2 == 0 {
                self.cells[slot].flow -= theta;
            } else {
                self.cells[slot].flow += theta;
            }
        }
        self.detach(leaving);
        self.cells[leaving] = Cell { row, col, flow: theta };
        self.attach(leaving);
        theta
    }

    fn extract(&self) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.n];
        for c in &self.cells {
            assert!(c.flow <= 1, "fractional or excess flow in final basis");
            if c.flow == 1 {
                assert_eq!(labels[c.row], usize::MAX, "row {} assigned twice", c.row);
                labels[c.row] = c.col;
            }
        }
        assert!(labels.iter().all(|&y| y != usize::MAX), "unassigned row in final basis");
        labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::brute_force;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_class() {
        let c = CostMatrix::from_rows(&[vec![0.5], vec![0.25], vec![2.0]]);
        let a = solve_simplex(&c, &LabelCounts::new(vec![3])).unwrap();
        assert_eq!(a.labels(), &[0, 0, 0]);
        assert_eq!(a.objective(), Some(0.5 + 0.25 + 2.0));
    }

    #[test]
    fn identical_rows_any_feasible_is_optimal() {
        let r = [0.3, 0.1, 0.7];
        let c = CostMatrix::from_rows(&vec![r.to_vec(); 6]);
        let counts = LabelCounts::new(vec![1, 3, 2]);
        let a = solve_simplex(&c, &counts).unwrap();
        assert!(a.satisfies(&counts));
        let expected = 0.3 + 3.0 * 0.1 + 2.0 * 0.7;
        assert!((a.objective().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let n = rng.gen_range(1..=8);
            let m = rng.gen_range(1..=3);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen()).collect()).collect();
            let c = CostMatrix::from_rows(&rows);
            let mut counts = vec![0; m];
            for _ in 0..n {
                counts[rng.gen_range(0..m)] += 1;
            }
            let counts = LabelCounts::new(counts);
            let a = solve_simplex(&c, &counts).unwrap();
            assert!(a.satisfies(&counts));
            assert_eq!(a.objective(), brute_force(&c, &counts).unwrap().objective());
        }
    }

    #[test]
    fn integer_costs_with_heavy_degeneracy_terminate() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let n = rng.gen_range(1..=8);
            let m = rng.gen_range(2..=3);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| f64::from(rng.gen_range(0..3u8))).collect()).collect();
            let c = CostMatrix::from_rows(&rows);
            let counts = crate::data::derive_label_counts(&vec![1.0 / m as f64; m], n).unwrap();
            let a = solve_simplex(&c, &counts).unwrap();
            assert_eq!(a.objective(), brute_force(&c, &counts).unwrap().objective());
        }
    }

    #[test]
    fn all_unit_demands_terminate() {
        // square assignment problem: every supply and demand is 1
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 30;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| f64::from(rng.gen_range(0..4u8))).collect()).collect();
        let c = CostMatrix::from_rows(&rows);
        let counts = LabelCounts::new(vec![1; n]);
        let init = greedy_init_from_costs(&c, &counts).unwrap();
        let (a, stats) = solve_simplex_from(&c, &counts, &init, &SimplexConfig::default()).unwrap();
        assert!(stats.optimal);
        assert!(a.satisfies(&counts));
        assert!(a.objective().unwrap() <= init.objective().unwrap());
    }

    #[test]
    fn iteration_budget_returns_feasible_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let c = CostMatrix::from_rows(&rows);
        let counts = LabelCounts::new(vec![20, 10, 10, 10]);
        let init = Assignment::scored((0..50).map(|i| if i < 20 { 0 } else { 1 + (i - 20) / 10 }).collect(), &c);
        let cfg = SimplexConfig { max_iterations: 3 };
        let (a, stats) = solve_simplex_from(&c, &counts, &init, &cfg).unwrap();
        assert!(!stats.optimal);
        assert_eq!(stats.iterations, 3);
        assert!(a.satisfies(&counts));
    }
}
