//! Two-phase Louvain modularity maximization on a weighted undirected graph.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimum modularity increase for a single node move.
const MOVE_EPS: f64 = 1e-12;
/// Minimum modularity increase for another aggregation level.
const LEVEL_EPS: f64 = 1e-10;
/// Visit orders tried per call; the first run with the highest Q is kept.
const RESTARTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LouvainResult {
    /// Community per node, numbered by first appearance.
    pub labels: Vec<usize>,
    pub modularity: f64,
    /// Modularity of the full-graph partition after every local-move pass.
    pub history: Vec<f64>,
    pub levels: usize,
    /// The graph carried no weight; every node was left in its own community.
    pub empty_graph: bool,
}

/// Weighted graph with explicit self-loops, as produced by aggregation.
#[derive(Debug, Clone)]
struct Graph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl Graph {
    fn from_dense(w: &DMatrix<f64>) -> Self {
        let n = w.nrows();
        let mut adj = vec![Vec::new(); n];
        let mut self_loop = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let v = w[(i, j)];
                if v == 0.0 {
                    continue;
                }
                if i == j {
                    self_loop[i] = v;
                } else {
                    adj[i].push((j, v));
                }
            }
        }
        Self::finish(adj, self_loop)
    }

    fn finish(adj: Vec<Vec<(usize, f64)>>, self_loop: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&self_loop)
            .map(|(row, s)| row.iter().map(|(_, v)| v).sum::<f64>() + s)
            .collect();
        let two_m = degree.iter().sum();
        Self {
            adj,
            self_loop,
            degree,
            two_m,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Graph {
        let mut dense = vec![vec![0.0; count]; count];
        for (i, row) in self.adj.iter().enumerate() {
            let ci = community[i];
            for &(j, v) in row {
                dense[ci][community[j]] += v;
            }
            dense[ci][ci] += self.self_loop[i];
        }
        let mut adj = vec![Vec::new(); count];
        let mut self_loop = vec![0.0; count];
        for (c, row) in dense.into_iter().enumerate() {
            for (d, v) in row.into_iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                if c == d {
                    self_loop[c] = v;
                } else {
                    adj[c].push((d, v));
                }
            }
        }
        Graph::finish(adj, self_loop)
    }
}

/// Q = (1/2m) Σ_ij (w_ij − γ k_i k_j / 2m) δ(c_i, c_j).
pub fn modularity(w: &DMatrix<f64>, labels: &[usize], resolution: f64) -> f64 {
    let n = w.nrows();
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let two_m: f64 = degree.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += w[(i, j)] - resolution * degree[i] * degree[j] / two_m;
            }
        }
    }
    q / two_m
}

fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// One level of greedy local moves, starting from `start` (singletons when
/// `None`). Returns the community of every node and whether anything moved.
fn local_moves(
    g: &Graph,
    resolution: f64,
    rng: &mut ChaCha8Rng,
    start: Option<Vec<usize>>,
    mut on_pass: impl FnMut(&[usize]),
) -> (Vec<usize>, bool) {
    let n = g.len();
    let mut community: Vec<usize> = start.unwrap_or_else(|| (0..n).collect());
    let mut tot = vec![0.0; n];
    for (u, &c) in community.iter().enumerate() {
        tot[c] += g.degree[u];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut weight_to = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any_move = false;

    loop {
        let mut moved = false;
        for &u in &order {
            let cu = community[u];
            let ku = g.degree[u];
            tot[cu] -= ku;

            for &c in &touched {
                weight_to[c] = 0.0;
            }
            touched.clear();
            touched.push(cu);
            for &(v, w) in &g.adj[u] {
                let c = community[v];
                if weight_to[c] == 0.0 && !touched.contains(&c) {
                    touched.push(c);
                }
                weight_to[c] += w;
            }

            let gain = |c: usize, weight_to: &[f64], tot: &[f64]| {
                weight_to[c] - resolution * tot[c] * ku / g.two_m
            };
            let stay = gain(cu, &weight_to, &tot);
            let mut best = cu;
            let mut best_gain = stay;
            let mut candidates = touched.clone();
            candidates.sort_unstable();
            for &c in &candidates {
                let gc = gain(c, &weight_to, &tot);
                if gc > best_gain || (gc == best_gain && c < best) {
                    best = c;
                    best_gain = gc;
                }
            }
            // ΔQ of the move is 2·(best_gain − stay)/2m
            let target = if best != cu && 2.0 * (best_gain - stay) / g.two_m > MOVE_EPS {
                best
            } else {
                cu
            };
            tot[target] += ku;
            if target != cu {
                community[u] = target;
                moved = true;
                any_move = true;
            }
        }
        on_pass(&community);
        if !moved {
            break;
        }
    }
    (community, any_move)
}

/// One Kernighan–Lin pass: every node moves exactly once, each step taking
/// the best available move (possibly a loss, possibly into an empty
/// community), and the partition is cut back to the best prefix of the
/// sequence. Returns it when that prefix gains more than `LEVEL_EPS`.
fn kernighan_lin(g: &Graph, resolution: f64, start: &[usize]) -> Option<Vec<usize>> {
    let n = g.len();
    let mut community = start.to_vec();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for (u, &c) in community.iter().enumerate() {
        tot[c] += g.degree[u];
        size[c] += 1;
    }
    let two_m = g.two_m;
    let mut frozen = vec![false; n];
    let mut moves: Vec<(usize, usize)> = Vec::with_capacity(n);
    let (mut total, mut best_total, mut best_len) = (0.0, 0.0, 0);
    let mut weight_to = vec![0.0; n];

    for _ in 0..n {
        // an empty label to move into, if one exists
        let empty = size.iter().position(|&s| s == 0);
        let mut step: Option<(f64, usize, usize)> = None;
        for u in (0..n).filter(|&u| !frozen[u]) {
            let cu = community[u];
            let ku = g.degree[u];
            let mut targets: Vec<usize> = Vec::new();
            for &(v, w) in &g.adj[u] {
                let c = community[v];
                if weight_to[c] == 0.0 && !targets.contains(&c) {
                    targets.push(c);
                }
                weight_to[c] += w;
            }
            let own = weight_to[cu];
            if size[cu] > 1 {
                targets.extend(empty);
            }
            targets.sort_unstable();
            for &c in targets.iter().filter(|&&c| c != cu) {
                let gain = 2.0 * (weight_to[c] - own) / two_m
                    - 2.0 * resolution * ku * (tot[c] - tot[cu] + ku) / (two_m * two_m);
                if step.map_or(true, |(g0, _, _)| gain > g0) {
                    step = Some((gain, u, c));
                }
            }
            for &(v, _) in &g.adj[u] {
                weight_to[community[v]] = 0.0;
            }
        }
        let Some((gain, u, c)) = step else { break };
        let cu = community[u];
        tot[cu] -= g.degree[u];
        size[cu] -= 1;
        tot[c] += g.degree[u];
        size[c] += 1;
        community[u] = c;
        frozen[u] = true;
        moves.push((u, cu));
        total += gain;
        if total > best_total + MOVE_EPS {
            best_total = total;
            best_len = moves.len();
        }
    }
    for &(u, from) in moves[best_len..].iter().rev() {
        community[u] = from;
    }
    (best_total > LEVEL_EPS).then_some(community)
}

/// Louvain clustering of a symmetric non-negative weight matrix.
///
/// Node visit order is shuffled once per level from `seed`; a node only
/// moves for a strictly positive modularity gain, and ties between target
/// communities go to the lowest community id.
///
/// Once the multilevel descent and single-node refinement stall, a
/// Kernighan–Lin pass on the original graph escapes local optima that need
/// several nodes to move at once; the descent then resumes from its result.
/// All of this is repeated for `RESTARTS` visit orders drawn from one seeded
/// stream, and the reported history is the winning run's.
pub fn louvain(w: &DMatrix<f64>, resolution: f64, seed: u64) -> LouvainResult {
    let n = w.nrows();
    let graph = Graph::from_dense(w);
    if graph.two_m <= 0.0 {
        log::warn!("all-zero affinity matrix: every node is its own community");
        return LouvainResult {
            labels: (0..n).collect(),
            modularity: 0.0,
            history: Vec::new(),
            levels: 0,
            empty_graph: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = descend(w, &graph, resolution, &mut rng);
    for _ in 1..RESTARTS {
        let run = descend(w, &graph, resolution, &mut rng);
        if run.modularity > best.modularity + LEVEL_EPS {
            best = run;
        }
    }
    best
}

/// One multilevel descent with refinement passes.
fn descend(w: &DMatrix<f64>, original: &Graph, resolution: f64, rng: &mut ChaCha8Rng) -> LouvainResult {
    let n = w.nrows();
    let mut graph = original.clone();
    // membership of original nodes in current super-nodes
    let mut membership: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut levels = 0;
    let mut current_q = modularity(w, &membership, resolution);

    loop {
        loop {
            let snapshot = membership.clone();
            let (community, moved) = local_moves(&graph, resolution, rng, None, |comm| {
                let flat: Vec<usize> = snapshot.iter().map(|&s| comm[s]).collect();
                history.push(modularity(w, &flat, resolution));
            });
            if !moved {
                break;
            }
            let (community, count) = renumber(&community);
            for m in membership.iter_mut() {
                *m = community[*m];
            }
            levels += 1;
            let q = modularity(w, &membership, resolution);
            let improved = q - current_q;
            current_q = q;
            if improved <= LEVEL_EPS || count == graph.len() {
                break;
            }
            graph = graph.aggregate(&community, count);
        }

        // Aggregation freezes nodes inside their super-node; let single nodes
        // move once more on the original graph, then re-aggregate if it helped.
        let (refined, moved) = local_moves(original, resolution, rng, Some(membership.clone()), |comm| {
            history.push(modularity(w, comm, resolution));
        });
        let (refined, _) = renumber(&refined);
        let q = modularity(w, &refined, resolution);
        let refined = if moved && q - current_q > LEVEL_EPS {
            refined
        } else {
            match kernighan_lin(original, resolution, &membership) {
                Some(better) => {
                    let better = renumber(&better).0;
                    history.push(modularity(w, &better, resolution));
                    better
                }
                None => break,
            }
        };
        let (refined, count) = renumber(&refined);
        let q = modularity(w, &refined, resolution);
        if q - current_q <= LEVEL_EPS {
            break;
        }
        membership = refined;
        current_q = q;
        graph = original.aggregate(&membership, count);
    }

    let (labels, _) = renumber(&membership);
    LouvainResult {
        modularity: modularity(w, &labels, resolution),
        labels,
        history,
        levels,
        empty_graph: false,
    }
}
