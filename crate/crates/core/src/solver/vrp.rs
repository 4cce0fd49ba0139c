//! Multi-vehicle routing over a symmetric integer cost matrix.
//!
//! Rows `0..num_vehicles` are vehicle start positions, the remaining rows are
//! targets. Construction is greedy cheapest insertion across all vehicles;
//! the result is then improved by first-improvement local search over
//! intra-route 2-opt, inter-route relocate and inter-route swap, in that
//! order, until no improving move exists or the move cap is hit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matrix::INFINITE_COST;

pub const DEFAULT_MAX_MOVES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VrpOptions {
    /// Seeds the target enumeration order of the local search; 0 keeps
    /// matrix order.
    pub seed: u64,
    pub return_to_start: bool,
    pub max_moves: usize,
}

impl Default for VrpOptions {
    fn default() -> Self {
        VrpOptions {
            seed: 0,
            return_to_start: false,
            max_moves: DEFAULT_MAX_MOVES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VrpError {
    /// Target rows that no vehicle can reach.
    #[error("targets {0:?} are unreachable from every vehicle")]
    Infeasible(Vec<usize>),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrpSolution {
    /// Per vehicle, the ordered target rows it visits.
    pub routes: Vec<Vec<usize>>,
    pub construction_cost: i64,
    pub cost: i64,
    pub moves: usize,
}

struct Problem<'a> {
    cost: &'a [Vec<i64>],
    vehicles: usize,
    closed: bool,
}

impl Problem<'_> {
    fn c(&self, a: usize, b: Option<usize>) -> i128 {
        b.map_or(0, |b| self.cost[a][b] as i128)
    }

    /// Node before position `k` of `route` (the vehicle for k == 0).
    fn prev(&self, v: usize, route: &[usize], k: usize) -> usize {
        if k == 0 {
            v
        } else {
            route[k - 1]
        }
    }

    /// Node after position `k`; the vehicle on closed routes, nothing on open ones.
    fn next(&self, v: usize, route: &[usize], k: usize) -> Option<usize> {
        if k + 1 < route.len() {
            Some(route[k + 1])
        } else if self.closed {
            Some(v)
        } else {
            None
        }
    }

    /// Node at insertion slot `k`, i.e. the one the inserted node would precede.
    fn at(&self, v: usize, route: &[usize], k: usize) -> Option<usize> {
        if k < route.len() {
            Some(route[k])
        } else if self.closed {
            Some(v)
        } else {
            None
        }
    }

    fn route_cost(&self, v: usize, route: &[usize]) -> i128 {
        let mut total = 0i128;
        let mut prev = v;
        for &t in route {
            total += self.cost[prev][t] as i128;
            prev = t;
        }
        if self.closed && !route.is_empty() {
            total += self.cost[prev][v] as i128;
        }
        total
    }

    fn insertion_delta(&self, v: usize, route: &[usize], k: usize, x: usize) -> i128 {
        let prev = self.prev(v, route, k);
        let next = self.at(v, route, k);
        self.c(prev, Some(x)) + self.c(x, next) - self.c(prev, next)
    }

    fn removal_delta(&self, v: usize, route: &[usize], k: usize) -> i128 {
        let x = route[k];
        let prev = self.prev(v, route, k);
        let next = self.next(v, route, k);
        self.c(prev, next) - self.c(prev, Some(x)) - self.c(x, next)
    }
}

fn total(problem: &Problem, routes: &[Vec<usize>]) -> i128 {
    routes
        .iter()
        .enumerate()
        .map(|(v, r)| problem.route_cost(v, r))
        .sum()
}

fn validate(cost: &[Vec<i64>], vehicles: usize) -> Result<(), VrpError> {
    let n = cost.len();
    if vehicles == 0 || vehicles > n {
        return Err(VrpError::InvalidMatrix(format!(
            "{vehicles} vehicles for a {n}x{n} matrix"
        )));
    }
    for (i, row) in cost.iter().enumerate() {
        if row.len() != n {
            return Err(VrpError::InvalidMatrix(format!("row {i} has {} entries", row.len())));
        }
        for (j, &c) in row.iter().enumerate() {
            if c < 0 || c > INFINITE_COST {
                return Err(VrpError::InvalidMatrix(format!("entry ({i},{j}) = {c}")));
            }
            if c != cost[j][i] {
                return Err(VrpError::InvalidMatrix(format!("asymmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Greedy cheapest insertion: repeatedly insert the (target, vehicle,
/// position) with the smallest cost increase, ties by target, vehicle,
/// position.
fn construct(problem: &Problem) -> Result<Vec<Vec<usize>>, VrpError> {
    let n = problem.cost.len();
    let v_count = problem.vehicles;
    let mut routes: Vec<Vec<usize>> = vec![Vec::new(); v_count];
    let mut pending: Vec<usize> = (v_count..n).collect();

    // best[t][v] = (delta, position) of target t in route v
    let best_in = |routes: &Vec<Vec<usize>>, v: usize, t: usize| -> (i128, usize) {
        (0..=routes[v].len())
            .map(|k| (problem.insertion_delta(v, &routes[v], k, t), k))
            .min()
            .expect("at least one slot")
    };
    let mut best: Vec<Vec<(i128, usize)>> = vec![Vec::new(); n];
    for &t in &pending {
        best[t] = (0..v_count).map(|v| best_in(&routes, v, t)).collect();
    }

    while !pending.is_empty() {
        let mut choice: Option<(i128, usize, usize, usize, usize)> = None; // delta, t, v, k, pending idx
        for (pi, &t) in pending.iter().enumerate() {
            for v in 0..v_count {
                let (d, k) = best[t][v];
                let cand = (d, t, v, k, pi);
                if choice.is_none_or(|c| (cand.0, cand.1, cand.2, cand.3) < (c.0, c.1, c.2, c.3)) {
                    choice = Some(cand);
                }
            }
        }
        let (delta, t, v, k, pi) = choice.expect("pending is non-empty");
        if delta >= INFINITE_COST as i128 {
            let mut stuck: Vec<usize> = pending.clone();
            stuck.sort_unstable();
            return Err(VrpError::Infeasible(stuck));
        }
        routes[v].insert(k, t);
        pending.swap_remove(pi);
        for &u in &pending {
            best[u][v] = best_in(&routes, v, u);
        }
    }
    Ok(routes)
}

enum Move {
    TwoOpt { v: usize, i: usize, j: usize },
    Relocate { a: usize, i: usize, b: usize, j: usize },
    Swap { a: usize, i: usize, b: usize, j: usize },
}

struct Search<'a> {
    problem: &'a Problem<'a>,
    /// Seeded rank of each target row, used to order the scans.
    order: Vec<usize>,
}

impl Search<'_> {
    /// Positions of `route` enumerated in seeded target order.
    fn positions(&self, route: &[usize]) -> Vec<usize> {
        let mut pos: Vec<usize> = (0..route.len()).collect();
        pos.sort_by_key(|&k| self.order[route[k]]);
        pos
    }

    fn two_opt(&self, routes: &[Vec<usize>]) -> Option<(i128, Move)> {
        let p = self.problem;
        for (v, route) in routes.iter().enumerate() {
            for i in self.positions(route) {
                for j in i + 1..route.len() {
                    let before = p.prev(v, route, i);
                    let after = p.next(v, route, j);
                    let delta = p.c(before, Some(route[j])) + p.c(route[i], after)
                        - p.c(before, Some(route[i]))
                        - p.c(route[j], after);
                    if delta < 0 {
                        return Some((delta, Move::TwoOpt { v, i, j }));
                    }
                }
            }
        }
        None
    }

    fn relocate(&self, routes: &[Vec<usize>]) -> Option<(i128, Move)> {
        let p = self.problem;
        for (a, ra) in routes.iter().enumerate() {
            for i in self.positions(ra) {
                let removal = p.removal_delta(a, ra, i);
                for (b, rb) in routes.iter().enumerate() {
                    if a == b {
                        continue;
                    }
                    for j in 0..=rb.len() {
                        let delta = removal + p.insertion_delta(b, rb, j, ra[i]);
                        if delta < 0 {
                            return Some((delta, Move::Relocate { a, i, b, j }));
                        }
                    }
                }
            }
        }
        None
    }

    fn swap(&self, routes: &[Vec<usize>]) -> Option<(i128, Move)> {
        let p = self.problem;
        let replace = |v: usize, route: &[usize], k: usize, y: usize| -> i128 {
            let prev = p.prev(v, route, k);
            let next = p.next(v, route, k);
            let x = route[k];
            p.c(prev, Some(y)) + p.c(y, next) - p.c(prev, Some(x)) - p.c(x, next)
        };
        for (a, ra) in routes.iter().enumerate() {
            for i in self.positions(ra) {
                for (b, rb) in routes.iter().enumerate().skip(a + 1) {
                    for j in self.positions(rb) {
                        let delta = replace(a, ra, i, rb[j]) + replace(b, rb, j, ra[i]);
                        if delta < 0 {
                            return Some((delta, Move::Swap { a, i, b, j }));
                        }
                    }
                }
            }
        }
        None
    }

    fn apply(routes: &mut [Vec<usize>], mv: Move) {
        match mv {
            Move::TwoOpt { v, i, j } => routes[v][i..=j].reverse(),
            Move::Relocate { a, i, b, j } => {
                let x = routes[a].remove(i);
                routes[b].insert(j, x);
            }
            Move::Swap { a, i, b, j } => {
                let x = routes[a][i];
                routes[a][i] = routes[b][j];
                routes[b][j] = x;
            }
        }
    }

    fn run(&self, routes: &mut [Vec<usize>], max_moves: usize) -> usize {
        let mut moves = 0;
        'outer: loop {
            let mut improved = false;
            for neighborhood in [Self::two_opt, Self::relocate, Self::swap] {
                while let Some((delta, mv)) = neighborhood(self, routes) {
                    let before = total(self.problem, routes);
                    Self::apply(routes, mv);
                    debug_assert_eq!(total(self.problem, routes), before + delta);
                    moves += 1;
                    improved = true;
                    if moves >= max_moves {
                        break 'outer;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        moves
    }
}

/// Solves the open (or, with `return_to_start`, closed) multi-vehicle
/// routing problem minimizing total distance. Deterministic for a given
/// matrix and options.
pub fn solve_vrp(cost: &[Vec<i64>], num_vehicles: usize, opts: &VrpOptions) -> Result<VrpSolution, VrpError> {
    validate(cost, num_vehicles)?;
    let n = cost.len();
    let unreachable: Vec<usize> = (num_vehicles..n)
        .filter(|&t| (0..num_vehicles).all(|v| cost[v][t] >= INFINITE_COST))
        .collect();
    if !unreachable.is_empty() {
        return Err(VrpError::Infeasible(unreachable));
    }

    let problem = Problem {
        cost,
        vehicles: num_vehicles,
        closed: opts.return_to_start,
    };
    let mut routes = construct(&problem)?;
    let construction_cost = total(&problem, &routes);

    let mut order: Vec<usize> = (0..n).collect();
    if opts.seed != 0 {
        order[num_vehicles..].shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    }
    let mut rank = vec![0; n];
    for (r, &row) in order.iter().enumerate() {
        rank[row] = r;
    }
    let search = Search {
        problem: &problem,
        order: rank,
    };
    let moves = search.run(&mut routes, opts.max_moves);
    let cost_after = total(&problem, &routes);

    Ok(VrpSolution {
        routes,
        construction_cost: construction_cost.min(i64::MAX as i128) as i64,
        cost: cost_after.min(i64::MAX as i128) as i64,
        moves,
    })
}
