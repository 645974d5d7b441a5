//! Successive shortest paths on small dense networks with real capacities.

const CAP_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    cap: f64,
    cost: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EdgeRef {
    from: usize,
    index: usize,
    capacity: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct MinCostFlow {
    graph: Vec<Vec<Edge>>,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self {
            graph: vec![Vec::new(); nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, capacity: f64, cost: f64) -> EdgeRef {
        let index = self.graph[from].len();
        let rev = self.graph[to].len() + usize::from(from == to);
        self.graph[from].push(Edge {
            to,
            rev,
            cap: capacity,
            cost,
        });
        self.graph[to].push(Edge {
            to: from,
            rev: index,
            cap: 0.0,
            cost: -cost,
        });
        EdgeRef { from, index, capacity }
    }

    pub fn flow_on(&self, e: EdgeRef) -> f64 {
        e.capacity - self.graph[e.from][e.index].cap
    }

    /// Sends up to `required` units from `source` to `sink` at minimum cost.
    /// Returns `(sent, cost)`.
    pub fn run(&mut self, source: usize, sink: usize, required: f64) -> (f64, f64) {
        let n = self.graph.len();
        let mut sent = 0.0;
        let mut total_cost = 0.0;
        while required - sent > CAP_EPS * required.max(1.0) {
            // Bellman-Ford: residual costs may be negative
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            dist[source] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for (k, e) in self.graph[u].iter().enumerate() {
                        if e.cap > CAP_EPS && dist[u] + e.cost < dist[e.to] - 1e-15 {
                            dist[e.to] = dist[u] + e.cost;
                            prev[e.to] = Some((u, k));
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[sink] == f64::INFINITY {
                break;
            }
            let mut push = required - sent;
            let mut v = sink;
            while let Some((u, k)) = prev[v] {
                push = push.min(self.graph[u][k].cap);
                v = u;
            }
            let mut v = sink;
            while let Some((u, k)) = prev[v] {
                let rev = self.graph[u][k].rev;
                self.graph[u][k].cap -= push;
                self.graph[v][rev].cap += push;
                v = u;
            }
            sent += push;
            total_cost += push * dist[sink];
        }
        (sent, total_cost)
    }

    /// Cheapest residual-path cost from every node to `target`.
    pub fn distances_to(&self, target: usize) -> Vec<f64> {
        let n = self.graph.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[target] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                for e in &self.graph[u] {
                    if e.cap > CAP_EPS && dist[e.to] < f64::INFINITY && e.cost + dist[e.to] < dist[u] - 1e-15 {
                        dist[u] = e.cost + dist[e.to];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefers_cheap_path_then_spills() {
        // s -> a -> t (cost 1, cap 2), s -> b -> t (cost 3, cap 5)
        let mut g = MinCostFlow::new(4);
        let sa = g.add_edge(0, 1, 2.0, 0.0);
        g.add_edge(1, 3, 10.0, 1.0);
        let sb = g.add_edge(0, 2, 5.0, 0.0);
        g.add_edge(2, 3, 10.0, 3.0);
        let (sent, cost) = g.run(0, 3, 4.0);
        assert_eq!(sent, 4.0);
        assert_eq!(cost, 2.0 * 1.0 + 2.0 * 3.0);
        assert_eq!(g.flow_on(sa), 2.0);
        assert_eq!(g.flow_on(sb), 2.0);
    }

    #[test]
    fn reroutes_through_negative_residual_arcs() {
        // classic instance where the second augmentation must cancel flow
        let mut g = MinCostFlow::new(4);
        g.add_edge(0, 1, 1.0, 1.0);
        g.add_edge(0, 2, 1.0, 2.0);
        g.add_edge(1, 2, 1.0, 0.0);
        g.add_edge(1, 3, 1.0, 2.0);
        g.add_edge(2, 3, 1.0, 1.0);
        let (sent, cost) = g.run(0, 3, 2.0);
        assert_eq!(sent, 2.0);
        assert_eq!(cost, 6.0);
    }
}
