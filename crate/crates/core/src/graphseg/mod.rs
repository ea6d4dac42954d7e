//! Optimal multi-surface segmentation by minimum s-t cut.
//!
//! Each surface picks one depth per column of an (x, y) lattice. Hard
//! constraints bound the depth change between 4-neighbour columns
//! (smoothness) and the gap between consecutive surfaces in the same column
//! (separation). The globally optimal set of surfaces is the minimum closed
//! set of a node-weighted graph, found with one max-flow computation.
//!
//! Costs are quantized to integers (`round(cost * scale)`) so flow arithmetic
//! is exact. The returned solution is the pointwise-lowest optimum: among all
//! surface sets of minimal cost, every surface takes the smallest possible z
//! in every column.

mod maxflow;

use std::collections::VecDeque;
use std::io::Write;

pub use maxflow::FlowGraph;

use crate::costs::CostVolume;
use crate::error::{Error, Result};
use crate::volume::Surface;

pub const DEFAULT_QUANTIZATION: f64 = 1e4;

/// Maximum |z(p) - z(q)| between neighbouring columns along x and along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Smoothness {
    pub dx: usize,
    pub dy: usize,
}

impl Smoothness {
    pub fn uniform(d: usize) -> Self {
        Smoothness { dx: d, dy: d }
    }
}

/// Allowed gap `z[i + 1] - z[i]` between consecutive surfaces, in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Separation {
    pub min_gap: usize,
    pub max_gap: usize,
}

impl Separation {
    pub fn new(min_gap: usize, max_gap: usize) -> Self {
        Separation { min_gap, max_gap }
    }
}

#[derive(Debug, Clone)]
pub struct GraphSegProblem {
    nx: usize,
    ny: usize,
    nz: usize,
    level: u8,
    /// Inclusive z range per column.
    bands: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    /// Band-local costs per surface, column-major in band order.
    costs: Vec<Vec<f64>>,
    smoothness: Smoothness,
    separations: Vec<Separation>,
    quantization: f64,
}

impl GraphSegProblem {
    /// Builds a problem with costs sampled from `cost(surface, x, y, z)` for
    /// z inside each column's band. Smoothness starts unconstrained (`nz`)
    /// and separations at `[0, nz]`.
    pub fn from_fn(
        (nx, ny, nz): (usize, usize, usize),
        n_surfaces: usize,
        bands: Vec<(usize, usize)>,
        cost: impl Fn(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArgument(format!(
                "empty lattice {nx}x{ny}x{nz}"
            )));
        }
        if n_surfaces == 0 {
            return Err(Error::InvalidArgument("no surfaces requested".into()));
        }
        if bands.len() != nx * ny {
            return Err(Error::InvalidArgument(format!(
                "{} bands for {} columns",
                bands.len(),
                nx * ny
            )));
        }
        let mut offsets = Vec::with_capacity(bands.len() + 1);
        offsets.push(0);
        for (col, &(lo, hi)) in bands.iter().enumerate() {
            if lo > hi || hi >= nz {
                return Err(Error::InvalidArgument(format!(
                    "band [{lo}, {hi}] of column (x={}, y={}) is empty or outside 0..{nz}",
                    col % nx,
                    col / nx
                )));
            }
            offsets.push(offsets[col] + hi - lo + 1);
        }
        let total = offsets[bands.len()];
        let mut costs = Vec::with_capacity(n_surfaces);
        for s in 0..n_surfaces {
            let mut c = Vec::with_capacity(total);
            for (col, &(lo, hi)) in bands.iter().enumerate() {
                let (x, y) = (col % nx, col / nx);
                for z in lo..=hi {
                    let v = cost(s, x, y, z);
                    if !v.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "non-finite cost for surface {s} at ({x}, {y}, {z})"
                        )));
                    }
                    c.push(v);
                }
            }
            costs.push(c);
        }
        Ok(GraphSegProblem {
            nx,
            ny,
            nz,
            level: 0,
            bands,
            offsets,
            costs,
            smoothness: Smoothness::uniform(nz),
            separations: vec![Separation::new(0, nz); n_surfaces - 1],
            quantization: DEFAULT_QUANTIZATION,
        })
    }

    /// One surface per cost volume, all sharing `bands` (full columns when `None`).
    pub fn from_cost_volumes(
        costs: &[&CostVolume],
        bands: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        let first = costs
            .first()
            .ok_or_else(|| Error::InvalidArgument("no cost volumes".into()))?;
        let g = *first.geometry();
        if let Some(other) = costs.iter().find(|c| {
            let o = c.geometry();
            (o.nx, o.ny, o.nz) != (g.nx, g.ny, g.nz)
        }) {
            let o = other.geometry();
            return Err(Error::LatticeMismatch(format!(
                "cost volumes {}x{}x{} and {}x{}x{}",
                g.nx, g.ny, g.nz, o.nx, o.ny, o.nz
            )));
        }
        let bands = bands.unwrap_or_else(|| vec![(0, g.nz - 1); g.columns()]);
        GraphSegProblem::from_fn((g.nx, g.ny, g.nz), costs.len(), bands, |s, x, y, z| {
            costs[s].get(x, y, z)
        })
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    /// Gaps between surface `i` and `i + 1`; needs `n_surfaces - 1` entries.
    pub fn with_separations(mut self, separations: Vec<Separation>) -> Result<Self> {
        if separations.len() + 1 != self.n_surfaces() {
            return Err(Error::InvalidArgument(format!(
                "{} separations for {} surfaces",
                separations.len(),
                self.n_surfaces()
            )));
        }
        if let Some(s) = separations.iter().find(|s| s.min_gap > s.max_gap) {
            return Err(Error::InvalidArgument(format!(
                "separation min gap {} exceeds max gap {}",
                s.min_gap, s.max_gap
            )));
        }
        self.separations = separations;
        Ok(self)
    }

    /// Level recorded on the output surfaces.
    pub fn with_level(mut self, level: u8) -> Self {
        self.level = level;
        self
    }

    pub fn with_quantization(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "quantization scale {scale} must be positive"
            )));
        }
        self.quantization = scale;
        Ok(self)
    }

    pub fn n_surfaces(&self) -> usize {
        self.costs.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn band(&self, x: usize, y: usize) -> (usize, usize) {
        self.bands[y * self.nx + x]
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn separations(&self) -> &[Separation] {
        &self.separations
    }

    /// Cost of surface `s` at depth `z` of column (x, y); `None` outside the band.
    pub fn cost(&self, s: usize, x: usize, y: usize, z: usize) -> Option<f64> {
        let col = y * self.nx + x;
        let (lo, hi) = self.bands[col];
        (lo..=hi)
            .contains(&z)
            .then(|| self.costs[s][self.offsets[col] + z - lo])
    }

    fn columns(&self) -> usize {
        self.nx * self.ny
    }

    fn neighbours(&self, col: usize) -> impl Iterator<Item = (usize, usize, &'static str)> {
        let (nx, ny) = (self.nx, self.ny);
        let (x, y) = (col % nx, col / nx);
        let Smoothness { dx, dy } = self.smoothness;
        [
            (x > 0).then(|| (col - 1, dx, "x-smoothness")),
            (x + 1 < nx).then(|| (col + 1, dx, "x-smoothness")),
            (y > 0).then(|| (col - nx, dy, "y-smoothness")),
            (y + 1 < ny).then(|| (col + nx, dy, "y-smoothness")),
        ]
        .into_iter()
        .flatten()
    }

    /// Shrinks every (surface, column) range to the depths that can belong to
    /// some feasible solution. Propagation of the difference constraints
    /// either reaches a fixpoint (then the lower bounds themselves form a
    /// feasible solution) or empties a range (then no solution exists).
    fn tighten(&self) -> Result<Vec<(i64, i64)>> {
        let cols = self.columns();
        let n = self.n_surfaces();
        let mut b: Vec<(i64, i64)> = (0..n)
            .flat_map(|_| self.bands.iter().map(|&(lo, hi)| (lo as i64, hi as i64)))
            .collect();
        let mut queued = vec![true; n * cols];
        let mut queue: VecDeque<usize> = (0..n * cols).collect();
        while let Some(k) = queue.pop_front() {
            queued[k] = false;
            let (s, col) = (k / cols, k % cols);
            let (lo, hi) = b[k];
            let mut update = |j: usize, lo: i64, hi: i64, what: &str| -> Result<()> {
                let (l, h) = b[j];
                let (nl, nh) = (l.max(lo), h.min(hi));
                if (nl, nh) == (l, h) {
                    return Ok(());
                }
                if nl > nh {
                    let jc = j % cols;
                    return Err(Error::Infeasible {
                        surface: j / cols,
                        x: jc % self.nx,
                        y: jc / self.nx,
                        constraint: format!(
                            "{what} against surface {s} at column (x={}, y={})",
                            col % self.nx,
                            col / self.nx
                        ),
                    });
                }
                b[j] = (nl, nh);
                if !queued[j] {
                    queued[j] = true;
                    queue.push_back(j);
                }
                Ok(())
            };
            for (q, d, what) in self.neighbours(col) {
                let d = d as i64;
                update(s * cols + q, lo - d, hi + d, what)?;
            }
            if s + 1 < n {
                let sep = self.separations[s];
                let (min, max) = (sep.min_gap as i64, sep.max_gap as i64);
                update(k + cols, lo + min, hi + max, "separation")?;
            }
            if s > 0 {
                let sep = self.separations[s - 1];
                let (min, max) = (sep.min_gap as i64, sep.max_gap as i64);
                update(k - cols, lo - max, hi - min, "separation")?;
            }
        }
        Ok(b)
    }

    /// Checks that at least one surface set satisfies every constraint.
    pub fn check_feasible(&self) -> Result<()> {
        self.tighten().map(|_| ())
    }

    fn quantized(&self) -> Result<Vec<Vec<i64>>> {
        let scale = self.quantization;
        self.costs
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&v| {
                        let q = (v * scale).round();
                        if q.abs() > i32::MAX as f64 {
                            Err(Error::CostOutOfRange { value: v, scale })
                        } else {
                            Ok(q as i64)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Builds the flow network for this problem.
    pub fn build_graph(&self) -> Result<SurfaceGraph> {
        let bounds = self.tighten()?;
        let q = self.quantized()?;
        let cols = self.columns();
        let mut base = Vec::with_capacity(bounds.len() + 1);
        base.push(0usize);
        for &(lo, hi) in &bounds {
            base.push(base.last().unwrap() + (hi - lo) as usize);
        }
        let nodes = *base.last().unwrap();
        if nodes >= u32::MAX as usize - 3 {
            return Err(Error::InvalidArgument(format!(
                "graph with {nodes} nodes is too large"
            )));
        }
        let qcost = |k: usize, z: i64| -> i64 {
            let col = k % cols;
            q[k / cols][self.offsets[col] + (z as usize - self.bands[col].0)]
        };

        let mut weight_sum: i64 = 0;
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            for z in lo + 1..=hi {
                weight_sum += (qcost(k, z) - qcost(k, z - 1)).abs();
            }
        }
        let infinite = weight_sum + 1;

        let graph = {
            let bounds = &bounds;
            let base = &base;
            let seps = &self.separations;
            FlowGraph::build(nodes, |emit| {
                let node = |k: usize, z: i64| (base[k] + (z - bounds[k].0 - 1) as usize) as u32;
                let n = bounds.len() / cols;
                for k in 0..bounds.len() {
                    let (s, col) = (k / cols, k % cols);
                    let (lo, hi) = bounds[k];
                    for z in lo + 1..=hi {
                        let u = node(k, z);
                        if z - 1 > lo {
                            emit(u, node(k, z - 1), infinite, 0);
                        }
                        for (qc, d, _) in self.neighbours(col) {
                            let j = s * cols + qc;
                            let t = (z - d as i64).max(bounds[j].0);
                            debug_assert!(t <= bounds[j].1);
                            if t > bounds[j].0 {
                                emit(u, node(j, t), infinite, 0);
                            }
                        }
                        if s + 1 < n {
                            let j = k + cols;
                            let t = (z + seps[s].min_gap as i64).max(bounds[j].0);
                            debug_assert!(t <= bounds[j].1);
                            if t > bounds[j].0 {
                                emit(u, node(j, t), infinite, 0);
                            }
                        }
                        if s > 0 {
                            let j = k - cols;
                            let t = (z - seps[s - 1].max_gap as i64).max(bounds[j].0);
                            debug_assert!(t <= bounds[j].1);
                            if t > bounds[j].0 {
                                emit(u, node(j, t), infinite, 0);
                            }
                        }
                    }
                }
            })
        };
        let mut graph = graph;
        let mut base_cost = 0i64;
        let mut negative = 0i64;
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            base_cost += qcost(k, lo);
            for z in lo + 1..=hi {
                let w = qcost(k, z) - qcost(k, z - 1);
                let u = (base[k] + (z - lo - 1) as usize) as u32;
                if w < 0 {
                    negative += w;
                    graph.add_terminal(u, -w, 0);
                } else if w > 0 {
                    graph.add_terminal(u, 0, w);
                }
            }
        }
        Ok(SurfaceGraph {
            graph,
            bounds,
            base,
            base_cost,
            negative,
            infinite,
        })
    }

    /// Writes the flow network as a text edge list: a `nodes N` header, then
    /// `s u cap` / `u t cap` terminal lines and `u v inf` constraint arcs.
    pub fn write_edge_list(&self, out: &mut impl Write) -> std::io::Result<()> {
        let sg = self
            .build_graph()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
        let g = &sg.graph;
        writeln!(out, "nodes {}", g.node_count())?;
        writeln!(out, "infinite {}", sg.infinite)?;
        for (u, s, t) in g.terminals() {
            if s > 0 {
                writeln!(out, "s {u} {s}")?;
            }
            if t > 0 {
                writeln!(out, "{u} t {t}")?;
            }
        }
        for (u, v, c) in g.residual_arcs() {
            writeln!(out, "{u} {v} {c}")?;
        }
        Ok(())
    }
}

/// Flow network for one problem plus the bookkeeping to map a cut back to
/// surface positions.
#[derive(Debug, Clone)]
pub struct SurfaceGraph {
    graph: FlowGraph,
    bounds: Vec<(i64, i64)>,
    base: Vec<usize>,
    base_cost: i64,
    negative: i64,
    infinite: i64,
}

impl SurfaceGraph {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn arc_count(&self) -> usize {
        self.graph.half_edge_count() / 2
    }

    pub fn memory_bytes(&self) -> usize {
        self.graph.memory_bytes()
    }

    /// Capacity used for hard-constraint arcs.
    pub fn infinite_capacity(&self) -> i64 {
        self.infinite
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GraphStats {
    pub nodes: usize,
    pub arcs: usize,
    pub memory_bytes: usize,
    pub max_flow: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    pub surfaces: Vec<Surface>,
    /// Sum of the original costs at the selected voxels.
    pub total_cost: f64,
    /// Same sum over the quantized costs used by the solver.
    pub quantized_cost: i64,
    pub quantization: f64,
    pub stats: GraphStats,
}

/// Finds the globally optimal surface set.
pub fn solve(problem: &GraphSegProblem) -> Result<SurfaceSet> {
    let mut sg = problem.build_graph()?;
    let flow = sg.graph.max_flow();
    let side = sg.graph.source_side();

    let cols = problem.columns();
    let (nx, ny) = (problem.nx, problem.ny);
    let n = problem.n_surfaces();
    let mut heights = vec![vec![0.0; cols]; n];
    let mut total_cost = 0.0;
    let mut quantized_cost = 0i64;
    let q = problem.quantized()?;
    for (k, &(lo, hi)) in sg.bounds.iter().enumerate() {
        let (s, col) = (k / cols, k % cols);
        let chosen = &side[sg.base[k]..sg.base[k + 1]];
        let count = chosen.iter().take_while(|&&b| b).count();
        debug_assert!(chosen[count..].iter().all(|&b| !b));
        let z = lo + count as i64;
        debug_assert!(z <= hi);
        heights[s][col] = z as f64;
        let i = problem.offsets[col] + (z as usize - problem.bands[col].0);
        total_cost += problem.costs[s][i];
        quantized_cost += q[s][i];
    }
    debug_assert_eq!(quantized_cost, sg.base_cost + flow + sg.negative);

    let surfaces = heights
        .into_iter()
        .map(|h| Surface::new(problem.level, nx, ny, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceSet {
        surfaces,
        total_cost,
        quantized_cost,
        quantization: problem.quantization,
        stats: GraphStats {
            nodes: sg.node_count(),
            arcs: sg.arc_count(),
            memory_bytes: sg.memory_bytes(),
            max_flow: flow,
        },
    })
}
