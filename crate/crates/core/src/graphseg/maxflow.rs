//! Boykov–Kolmogorov augmenting-path max-flow on a compressed adjacency
//! layout.
//!
//! Every arc is stored as a pair of half-edges (arc and sister) in the
//! adjacency ranges of both endpoints. Terminal arcs are folded into a single
//! signed residual per node: positive means residual capacity from the source,
//! negative means residual capacity to the sink.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;
const INFINITE_D: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct FlowGraph {
    first: Vec<u32>,
    head: Vec<u32>,
    sister: Vec<u32>,
    rcap: Vec<i64>,
    tr_cap: Vec<i64>,
    flow: i64,
}

impl FlowGraph {
    /// Builds the adjacency from an arc enumerator that is called twice
    /// (once to count degrees, once to fill). Each call must emit the same
    /// arcs `(from, to, capacity, reverse_capacity)` in the same order.
    pub fn build<F>(n: usize, for_each_arc: F) -> Self
    where
        F: Fn(&mut dyn FnMut(u32, u32, i64, i64)),
    {
        let mut first = vec![0u32; n + 1];
        for_each_arc(&mut |u, v, _, _| {
            first[u as usize + 1] += 1;
            first[v as usize + 1] += 1;
        });
        for i in 0..n {
            first[i + 1] += first[i];
        }
        let m = first[n] as usize;
        let mut head = vec![0u32; m];
        let mut sister = vec![0u32; m];
        let mut rcap = vec![0i64; m];
        let mut cursor: Vec<u32> = first[..n].to_vec();
        for_each_arc(&mut |u, v, cap, rev| {
            let a = cursor[u as usize];
            cursor[u as usize] += 1;
            let b = cursor[v as usize];
            cursor[v as usize] += 1;
            head[a as usize] = v;
            head[b as usize] = u;
            sister[a as usize] = b;
            sister[b as usize] = a;
            rcap[a as usize] = cap;
            rcap[b as usize] = rev;
        });
        FlowGraph {
            first,
            head,
            sister,
            rcap,
            tr_cap: vec![0; n],
            flow: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.tr_cap.len()
    }

    /// Number of half-edges (twice the arc count).
    pub fn half_edge_count(&self) -> usize {
        self.head.len()
    }

    /// Approximate heap footprint of the graph plus solver state, in bytes.
    pub fn memory_bytes(&self) -> usize {
        let n = self.node_count();
        let m = self.half_edge_count();
        // first + tr_cap + parent + ts + dist + flags
        n * (4 + 8 + 4 + 4 + 4 + 2) + m * (4 + 4 + 8)
    }

    /// Adds terminal capacities to node `i`.
    pub fn add_terminal(&mut self, i: u32, source_cap: i64, sink_cap: i64) {
        let i = i as usize;
        let mut delta = source_cap - sink_cap;
        // capacity on both sides is pushed straight through
        self.flow += source_cap.min(sink_cap);
        delta += self.tr_cap[i];
        self.tr_cap[i] = delta;
    }

    pub fn flow(&self) -> i64 {
        self.flow
    }

    /// `(node, source_cap, sink_cap)` residual terminal capacities.
    pub fn terminals(&self) -> impl Iterator<Item = (u32, i64, i64)> + '_ {
        self.tr_cap
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u32, c.max(0), (-c).max(0)))
    }

    /// Every half-edge with positive residual capacity as `(from, to, cap)`.
    pub fn residual_arcs(&self) -> impl Iterator<Item = (u32, u32, i64)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.arcs(i)
                .filter(move |&a| self.rcap[a] > 0)
                .map(move |a| (i as u32, self.head[a], self.rcap[a]))
        })
    }

    #[inline]
    fn arcs(&self, i: usize) -> std::ops::Range<usize> {
        self.first[i] as usize..self.first[i + 1] as usize
    }

    /// Runs the solver to completion and returns the max-flow value.
    pub fn max_flow(&mut self) -> i64 {
        let n = self.node_count();
        let mut st = State {
            parent: vec![NONE; n],
            is_sink: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            active: vec![false; n],
            queue: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
        };
        for i in 0..n {
            if self.tr_cap[i] != 0 {
                st.is_sink[i] = self.tr_cap[i] < 0;
                st.parent[i] = TERMINAL;
                st.dist[i] = 1;
                st.set_active(i as u32);
            }
        }

        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(i) => {
                    st.active[i] = false;
                    if st.parent[i] != NONE {
                        Some(i)
                    } else {
                        st.next_active()
                    }
                }
                None => st.next_active(),
            };
            let Some(i) = i else { break };

            let mut middle = NONE;
            if !st.is_sink[i] {
                for a in self.arcs(i) {
                    if self.rcap[a] == 0 {
                        continue;
                    }
                    let j = self.head[a] as usize;
                    if st.parent[j] == NONE {
                        st.is_sink[j] = false;
                        st.parent[j] = self.sister[a];
                        st.ts[j] = st.ts[i];
                        st.dist[j] = st.dist[i] + 1;
                        st.set_active(j as u32);
                    } else if st.is_sink[j] {
                        middle = a as u32;
                        break;
                    } else if st.ts[j] <= st.ts[i] && st.dist[j] > st.dist[i] {
                        st.parent[j] = self.sister[a];
                        st.ts[j] = st.ts[i];
                        st.dist[j] = st.dist[i] + 1;
                    }
                }
            } else {
                for a in self.arcs(i) {
                    let sis = self.sister[a] as usize;
                    if self.rcap[sis] == 0 {
                        continue;
                    }
                    let j = self.head[a] as usize;
                    if st.parent[j] == NONE {
                        st.is_sink[j] = true;
                        st.parent[j] = sis as u32;
                        st.ts[j] = st.ts[i];
                        st.dist[j] = st.dist[i] + 1;
                        st.set_active(j as u32);
                    } else if !st.is_sink[j] {
                        middle = sis as u32;
                        break;
                    } else if st.ts[j] <= st.ts[i] && st.dist[j] > st.dist[i] {
                        st.parent[j] = sis as u32;
                        st.ts[j] = st.ts[i];
                        st.dist[j] = st.dist[i] + 1;
                    }
                }
            }
            st.time = st.time.wrapping_add(1);

            if middle != NONE {
                // keep growing from i after augmenting
                st.active[i] = true;
                current = Some(i);
                self.augment(&mut st, middle as usize);
                while let Some(o) = st.orphans.pop_front() {
                    if st.is_sink[o as usize] {
                        self.adopt_sink_orphan(&mut st, o as usize);
                    } else {
                        self.adopt_source_orphan(&mut st, o as usize);
                    }
                }
            }
        }
        self.flow
    }

    fn augment(&mut self, st: &mut State, middle: usize) {
        let mut bottleneck = self.rcap[middle];
        let mut i = self.head[self.sister[middle] as usize] as usize;
        loop {
            let a = st.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.rcap[self.sister[a as usize] as usize]);
            i = self.head[a as usize] as usize;
        }
        bottleneck = bottleneck.min(self.tr_cap[i]);
        let mut i = self.head[middle] as usize;
        loop {
            let a = st.parent[i];
            if a == TERMINAL {
                break;
            }
            bottleneck = bottleneck.min(self.rcap[a as usize]);
            i = self.head[a as usize] as usize;
        }
        bottleneck = bottleneck.min(-self.tr_cap[i]);

        let sis = self.sister[middle] as usize;
        self.rcap[sis] += bottleneck;
        self.rcap[middle] -= bottleneck;

        let mut i = self.head[sis] as usize;
        loop {
            let a = st.parent[i];
            if a == TERMINAL {
                break;
            }
            let a = a as usize;
            let s = self.sister[a] as usize;
            self.rcap[a] += bottleneck;
            self.rcap[s] -= bottleneck;
            if self.rcap[s] == 0 {
                st.set_orphan_front(i);
            }
            i = self.head[a] as usize;
        }
        self.tr_cap[i] -= bottleneck;
        if self.tr_cap[i] == 0 {
            st.set_orphan_front(i);
        }

        let mut i = self.head[middle] as usize;
        loop {
            let a = st.parent[i];
            if a == TERMINAL {
                break;
            }
            let a = a as usize;
            let s = self.sister[a] as usize;
            self.rcap[s] += bottleneck;
            self.rcap[a] -= bottleneck;
            if self.rcap[a] == 0 {
                st.set_orphan_front(i);
            }
            i = self.head[a] as usize;
        }
        self.tr_cap[i] += bottleneck;
        if self.tr_cap[i] == 0 {
            st.set_orphan_front(i);
        }
        self.flow += bottleneck;
    }

    /// Length of the tree path from `j` to its terminal, or `INFINITE_D` if
    /// it runs into an orphan. Caches distances with the current timestamp.
    fn origin_distance(&self, st: &mut State, start: usize) -> u32 {
        let mut j = start;
        let mut d = 0u32;
        loop {
            if st.ts[j] == st.time {
                d += st.dist[j];
                break;
            }
            let a = st.parent[j];
            d += 1;
            if a == TERMINAL {
                st.ts[j] = st.time;
                st.dist[j] = 1;
                break;
            }
            if a == ORPHAN {
                return INFINITE_D;
            }
            j = self.head[a as usize] as usize;
        }
        let mut j = start;
        let mut dd = d;
        while st.ts[j] != st.time {
            st.ts[j] = st.time;
            st.dist[j] = dd;
            dd -= 1;
            j = self.head[st.parent[j] as usize] as usize;
        }
        d
    }

    fn adopt_source_orphan(&mut self, st: &mut State, i: usize) {
        let mut best = NONE;
        let mut d_min = INFINITE_D;
        for a0 in self.arcs(i) {
            if self.rcap[self.sister[a0] as usize] == 0 {
                continue;
            }
            let j = self.head[a0] as usize;
            if st.is_sink[j] || st.parent[j] == NONE {
                continue;
            }
            let d = self.origin_distance(st, j);
            if d < d_min {
                best = a0 as u32;
                d_min = d;
            }
        }
        if best != NONE {
            st.parent[i] = best;
            st.ts[i] = st.time;
            st.dist[i] = d_min + 1;
            return;
        }
        st.parent[i] = NONE;
        for a0 in self.arcs(i) {
            let j = self.head[a0] as usize;
            let a = st.parent[j];
            if st.is_sink[j] || a == NONE {
                continue;
            }
            if self.rcap[self.sister[a0] as usize] > 0 {
                st.set_active(j as u32);
            }
            if a != TERMINAL && a != ORPHAN && self.head[a as usize] as usize == i {
                st.set_orphan_rear(j);
            }
        }
    }

    fn adopt_sink_orphan(&mut self, st: &mut State, i: usize) {
        let mut best = NONE;
        let mut d_min = INFINITE_D;
        for a0 in self.arcs(i) {
            if self.rcap[a0] == 0 {
                continue;
            }
            let j = self.head[a0] as usize;
            if !st.is_sink[j] || st.parent[j] == NONE {
                continue;
            }
            let d = self.origin_distance(st, j);
            if d < d_min {
                best = a0 as u32;
                d_min = d;
            }
        }
        if best != NONE {
            st.parent[i] = best;
            st.ts[i] = st.time;
            st.dist[i] = d_min + 1;
            return;
        }
        st.parent[i] = NONE;
        for a0 in self.arcs(i) {
            let j = self.head[a0] as usize;
            let a = st.parent[j];
            if !st.is_sink[j] || a == NONE {
                continue;
            }
            if self.rcap[a0] > 0 {
                st.set_active(j as u32);
            }
            if a != TERMINAL && a != ORPHAN && self.head[a as usize] as usize == i {
                st.set_orphan_rear(j);
            }
        }
    }

    /// Nodes reachable from the source in the residual graph: the smallest
    /// source side among all minimum cuts.
    pub fn source_side(&self) -> Vec<bool> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack: Vec<u32> = Vec::new();
        for i in 0..n {
            if self.tr_cap[i] > 0 {
                seen[i] = true;
                stack.push(i as u32);
            }
        }
        while let Some(i) = stack.pop() {
            for a in self.arcs(i as usize) {
                if self.rcap[a] > 0 {
                    let j = self.head[a] as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j as u32);
                    }
                }
            }
        }
        seen
    }
}

struct State {
    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    active: Vec<bool>,
    queue: VecDeque<u32>,
    orphans: VecDeque<u32>,
    time: u32,
}

impl State {
    #[inline]
    fn set_active(&mut self, i: u32) {
        if !self.active[i as usize] {
            self.active[i as usize] = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.queue.pop_front() {
            let i = i as usize;
            self.active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    #[inline]
    fn set_orphan_front(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_front(i as u32);
    }

    #[inline]
    fn set_orphan_rear(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i as u32);
    }
}
