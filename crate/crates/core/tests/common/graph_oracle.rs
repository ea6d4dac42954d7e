//! Exhaustive search over surface tuples, with branch-and-bound pruning.

use choroidseg::graphseg::{GraphSegProblem, Separation, Smoothness};
use rand::Rng;

pub struct Optimum {
    pub cost: f64,
    /// z[surface][column]
    pub z: Vec<Vec<usize>>,
}

/// Minimum-cost feasible tuple; among equal costs, the pointwise-lowest one
/// (first found in ascending-z depth-first order). `None` if no tuple
/// satisfies the constraints.
///
/// Variables are visited column by column; each assignment is propagated
/// through the difference constraints to interval bounds consistency, and
/// partial sums plus the cheapest remaining choices are cut off against the
/// best complete tuple found so far.
pub fn brute_force(p: &GraphSegProblem) -> Option<Optimum> {
    let (nx, ny, _) = p.dims();
    let cols = nx * ny;
    let n = p.n_surfaces();
    let vars = n * cols;
    // variable v = column * n + surface
    let cost: Vec<Vec<f64>> = (0..vars)
        .map(|v| {
            let (c, s) = (v / n, v % n);
            let (lo, hi) = p.band(c % nx, c / nx);
            (0..=hi).map(|z| if z < lo { f64::INFINITY } else { p.cost(s, c % nx, c / nx, z).unwrap() }).collect()
        })
        .collect();
    let Smoothness { dx, dy } = p.smoothness();
    let mut links: Vec<Vec<(usize, i64, i64)>> = vec![Vec::new(); vars];
    let mut link = |a: usize, b: usize, lo: i64, hi: i64| {
        // z_b - z_a in [lo, hi]
        links[a].push((b, lo, hi));
        links[b].push((a, -hi, -lo));
    };
    for c in 0..cols {
        let x = c % nx;
        for s in 0..n {
            let v = c * n + s;
            if x + 1 < nx {
                link(v, v + n, -(dx as i64), dx as i64);
            }
            if c + nx < cols {
                link(v, v + nx * n, -(dy as i64), dy as i64);
            }
            if s + 1 < n {
                let sep: Separation = p.separations()[s];
                link(v, v + 1, sep.min_gap as i64, sep.max_gap as i64);
            }
        }
    }
    let domains: Vec<(i64, i64)> = (0..vars)
        .map(|v| {
            let c = v / n;
            let (lo, hi) = p.band(c % nx, c / nx);
            (lo as i64, hi as i64)
        })
        .collect();
    let mut search = Search {
        cost,
        links,
        vars,
        assign: vec![0; vars],
        best: None,
        best_cost: f64::INFINITY,
    };
    let mut domains = domains;
    if search.propagate(&mut domains, 0) {
        search.go(0, 0.0, domains);
    }
    let best = search.best?;
    let z = (0..n)
        .map(|s| (0..cols).map(|c| best[c * n + s]).collect())
        .collect();
    Some(Optimum {
        cost: search.best_cost,
        z,
    })
}

struct Search {
    cost: Vec<Vec<f64>>,
    links: Vec<Vec<(usize, i64, i64)>>,
    vars: usize,
    assign: Vec<usize>,
    best: Option<Vec<usize>>,
    best_cost: f64,
}

impl Search {
    /// Bounds consistency over every link until no domain shrinks.
    fn propagate(&self, domains: &mut [(i64, i64)], from: usize) -> bool {
        loop {
            let mut changed = false;
            for v in from..self.vars {
                for &(u, a, b) in &self.links[v] {
                    let (lo, hi) = (domains[v].0 + a, domains[v].1 + b);
                    let d = &mut domains[u];
                    if lo > d.0 {
                        d.0 = lo;
                        changed = true;
                    }
                    if hi < d.1 {
                        d.1 = hi;
                        changed = true;
                    }
                    if d.0 > d.1 {
                        return false;
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn lower_bound(&self, v: usize, domains: &[(i64, i64)]) -> f64 {
        (v..self.vars)
            .map(|u| {
                let (lo, hi) = domains[u];
                self.cost[u][lo as usize..=hi as usize]
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    fn go(&mut self, v: usize, acc: f64, domains: Vec<(i64, i64)>) {
        if v == self.vars {
            if acc < self.best_cost {
                self.best_cost = acc;
                self.best = Some(self.assign.clone());
            }
            return;
        }
        if acc + self.lower_bound(v, &domains) >= self.best_cost {
            return;
        }
        let (lo, hi) = domains[v];
        for z in lo..=hi {
            let mut next = domains.clone();
            next[v] = (z, z);
            if !self.propagate(&mut next, v) {
                continue;
            }
            self.assign[v] = z as usize;
            let c = self.cost[v][z as usize];
            self.go(v + 1, acc + c, next);
        }
    }
}

/// Random instance within the exhaustive-search limits: at most 9 columns,
/// 6 depths and 3 surfaces, integer costs so sums are exact.
pub fn random_small_problem(rng: &mut impl Rng) -> GraphSegProblem {
    let nx = rng.gen_range(1..=3);
    let ny = rng.gen_range(1..=3);
    let nz = rng.gen_range(2..=6);
    let n = rng.gen_range(1..=3);
    let bands: Vec<(usize, usize)> = (0..nx * ny)
        .map(|_| {
            if rng.gen_bool(0.6) {
                (0, nz - 1)
            } else {
                let a = rng.gen_range(0..nz);
                let b = rng.gen_range(0..nz);
                (a.min(b), a.max(b))
            }
        })
        .collect();
    let levels = if rng.gen_bool(0.3) { 3 } else { 40 };
    let costs: Vec<f64> = (0..n * nx * ny * nz)
        .map(|_| rng.gen_range(0..levels) as f64)
        .collect();
    let smooth = Smoothness {
        dx: rng.gen_range(0..nz),
        dy: rng.gen_range(0..nz),
    };
    let seps = (1..n)
        .map(|_| {
            let min = rng.gen_range(0..=2);
            Separation::new(min, rng.gen_range(min..=nz))
        })
        .collect();
    GraphSegProblem::from_fn((nx, ny, nz), n, bands, |s, x, y, z| {
        costs[((s * ny + y) * nx + x) * nz + z]
    })
    .unwrap()
    .with_smoothness(smooth)
    .with_separations(seps)
    .unwrap()
}

/// Single surface on a 3x3 grid, 11-depth band, |dz| <= 1 between neighbours.
pub fn random_band_problem(rng: &mut impl Rng) -> GraphSegProblem {
    let (nx, ny, nz) = (3, 3, 11);
    let costs: Vec<f64> = (0..nx * ny * nz)
        .map(|_| rng.gen_range(0..1000) as f64 / 8.0)
        .collect();
    GraphSegProblem::from_fn((nx, ny, nz), 1, vec![(0, nz - 1); 9], |_, x, y, z| {
        costs[(y * nx + x) * nz + z]
    })
    .unwrap()
    .with_smoothness(Smoothness::uniform(1))
}
