use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::env::Environment;
use crate::error::{Error, Result};
use crate::rng::{self, PURPOSE_PLANNER};
use crate::Point2;

pub const DEFAULT_GOAL_BIAS: f64 = 0.05;
pub const DEFAULT_MAX_NODES: usize = 150;
/// Node budget used for the finest step size.
pub const FINE_STEP_MAX_NODES: usize = 300;
pub const DEFAULT_ITERATION_BUDGET: usize = 50_000;
const COST_EPS: f64 = 1e-9;

/// Node budget paired with a step size: fine steps need the larger tree.
pub fn default_max_nodes(step: f64) -> usize {
    if step <= 50.0 {
        FINE_STEP_MAX_NODES
    } else {
        DEFAULT_MAX_NODES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub pos: Point2,
    pub parent: Option<usize>,
    pub cost: f64,
    pub children: Vec<usize>,
    /// Reachable from the root. Only false for the severed subtree that
    /// still holds the goal while a repair is in progress.
    pub attached: bool,
}

/// Fixed-node RRT* tree. Slots of removed nodes are reused, lowest first.
#[derive(Debug, Clone)]
pub struct PlanTree {
    nodes: Vec<Option<Node>>,
    free: Vec<usize>,
    count: usize,
    pub root: usize,
    pub goal: Point2,
    pub step: f64,
    pub max_nodes: usize,
    pub goal_bias: f64,
    pub rng_seed: u64,
    goal_node: Option<usize>,
    last_added: Option<usize>,
    rng: ChaCha8Rng,
}

impl PlanTree {
    pub fn new(origin: Point2, goal: Point2, step: f64, max_nodes: usize, seed: u64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {step}")));
        }
        if max_nodes < 2 {
            return Err(Error::Config("node budget must allow at least two nodes".into()));
        }
        let root = Node { pos: origin, parent: None, cost: 0.0, children: Vec::new(), attached: true };
        Ok(Self {
            nodes: vec![Some(root)],
            free: Vec::new(),
            count: 1,
            root: 0,
            goal,
            step,
            max_nodes,
            goal_bias: DEFAULT_GOAL_BIAS,
            rng_seed: seed,
            goal_node: None,
            last_added: None,
            rng: rng::stream(seed, &[PURPOSE_PLANNER]),
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn node(&self, i: usize) -> Option<&Node> {
        self.nodes.get(i).and_then(Option::as_ref)
    }

    fn n(&self, i: usize) -> &Node {
        self.nodes[i].as_ref().expect("live node")
    }

    fn n_mut(&mut self, i: usize) -> &mut Node {
        self.nodes[i].as_mut().expect("live node")
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Node)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| n.as_ref().map(|n| (i, n)))
    }

    pub fn neighbor_radius(&self) -> f64 {
        2.0 * self.step
    }

    pub fn last_added(&self) -> Option<usize> {
        self.last_added
    }

    pub fn goal_node(&self) -> Option<usize> {
        self.goal_node
    }

    /// Adds a node under `parent` without any collision checks.
    pub fn add_node(&mut self, pos: Point2, parent: usize) -> usize {
        let cost = self.n(parent).cost + self.n(parent).pos.dist(&pos);
        let attached = self.n(parent).attached;
        let node = Node { pos, parent: Some(parent), cost, children: Vec::new(), attached };
        let id = match self.free.pop() {
            Some(id) => {
                self.nodes[id] = Some(node);
                id
            }
            None => {
                self.nodes.push(Some(node));
                self.nodes.len() - 1
            }
        };
        self.n_mut(parent).children.push(id);
        self.count += 1;
        self.last_added = Some(id);
        id
    }

    fn delete(&mut self, i: usize) {
        let node = self.nodes[i].take().expect("live node");
        if let Some(p) = node.parent {
            if let Some(pn) = self.nodes[p].as_mut() {
                pn.children.retain(|&c| c != i);
            }
        }
        for c in node.children {
            if let Some(cn) = self.nodes[c].as_mut() {
                cn.parent = None;
            }
        }
        if self.goal_node == Some(i) {
            self.goal_node = None;
        }
        if self.last_added == Some(i) {
            self.last_added = None;
        }
        self.count -= 1;
        // Keep reuse order deterministic: smallest free slot first.
        let at = self.free.partition_point(|&f| f > i);
        self.free.insert(at, i);
    }

    fn detach(&mut self, i: usize) {
        if let Some(p) = self.n_mut(i).parent.take() {
            self.n_mut(p).children.retain(|&c| c != i);
        }
    }

    fn set_parent(&mut self, i: usize, parent: usize) {
        self.detach(i);
        self.n_mut(i).parent = Some(parent);
        self.n_mut(parent).children.push(i);
        self.refresh_costs(i);
    }

    /// Recomputes costs below `i` from its parent's cost.
    fn refresh_costs(&mut self, i: usize) {
        let mut stack = vec![i];
        while let Some(u) = stack.pop() {
            let cost = match self.n(u).parent {
                Some(p) => self.n(p).cost + self.n(p).pos.dist(&self.n(u).pos),
                None => 0.0,
            };
            let node = self.n_mut(u);
            node.cost = cost;
            stack.extend(node.children.iter().copied());
        }
    }

    fn subtree(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut k = 0;
        while k < out.len() {
            out.extend(self.n(out[k]).children.iter().copied());
            k += 1;
        }
        out
    }

    fn nearest_attached(&self, p: &Point2) -> usize {
        self.iter()
            .filter(|(_, n)| n.attached)
            .min_by(|a, b| a.1.pos.dist_sq(p).total_cmp(&b.1.pos.dist_sq(p)))
            .map(|(i, _)| i)
            .expect("root is always attached")
    }

    fn attached_within(&self, p: &Point2, r: f64) -> Vec<usize> {
        let r2 = r * r;
        self.iter()
            .filter(|(_, n)| n.attached && n.pos.dist_sq(p) <= r2)
            .map(|(i, _)| i)
            .collect()
    }

    /// Root-to-goal node sequence once the goal is connected to the root.
    pub fn solution_path(&self) -> Option<Vec<usize>> {
        let g = self.goal_node?;
        if !self.n(g).attached {
            return None;
        }
        let mut path = vec![g];
        let mut cur = g;
        while let Some(p) = self.n(cur).parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    pub fn solution_points(&self) -> Option<Vec<Point2>> {
        self.solution_path().map(|p| p.into_iter().map(|i| self.n(i).pos).collect())
    }

    fn on_solution(&self) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        if let Some(path) = self.solution_path() {
            for i in path {
                flags[i] = true;
            }
        }
        flags
    }

    /// Childless nodes that force removal may pick.
    pub fn eligible_for_removal(&self, protected: Option<usize>) -> Vec<usize> {
        let sol = self.on_solution();
        self.iter()
            .filter(|&(i, n)| {
                i != self.root && n.attached && n.children.is_empty() && Some(i) != protected && !sol[i]
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Removes one uniformly chosen childless node other than `protected`
    /// and the solution path. No-op when nothing is eligible.
    pub fn force_remove(&mut self, protected: Option<usize>) -> Option<usize> {
        let eligible = self.eligible_for_removal(protected);
        if eligible.is_empty() {
            return None;
        }
        let victim = eligible[self.rng.random_range(0..eligible.len())];
        self.delete(victim);
        Some(victim)
    }

    fn sample(&mut self, env: &Environment) -> Point2 {
        if self.rng.random::<f64>() < self.goal_bias {
            return self.goal;
        }
        let b = env.bounds;
        let x = b.min_x + (b.max_x - b.min_x) * self.rng.random::<f64>();
        let y = b.min_y + (b.max_y - b.min_y) * self.rng.random::<f64>();
        Point2::new(x, y)
    }

    /// One sampling iteration. Returns the id of the added node, if any.
    pub fn grow(&mut self, env: &Environment) -> Option<usize> {
        let sample = self.sample(env);
        let near = self.nearest_attached(&sample);
        let from = self.n(near).pos;
        let pos = from.steer(&sample, self.step);
        if pos.dist(&from) < 1e-6 || !env.point_free(&pos) {
            return None;
        }
        let neighbors = self.attached_within(&pos, self.neighbor_radius());
        let parent = neighbors
            .iter()
            .copied()
            .map(|m| (m, self.n(m).cost + self.n(m).pos.dist(&pos)))
            .filter(|&(m, _)| env.segment_free(&self.n(m).pos, &pos))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(m, _)| m)?;
        if self.count >= self.max_nodes
            && !self.eligible_for_removal(self.last_added).iter().any(|&e| e != parent)
        {
            return None;
        }
        let id = self.add_node(pos, parent);
        self.rewire_from(id, env);
        while self.count > self.max_nodes {
            if self.force_remove(Some(id)).is_none() {
                break;
            }
        }
        if pos.dist(&self.goal) < 1e-9 {
            self.drop_detached();
            self.goal_node = Some(id);
        } else if self.goal_node.is_none()
            && pos.dist(&self.goal) <= self.step
            && env.segment_free(&pos, &self.goal)
        {
            let g = self.add_node(self.goal, id);
            self.goal_node = Some(g);
            self.rewire_from(g, env);
            while self.count > self.max_nodes {
                if self.force_remove(Some(g)).is_none() {
                    self.delete(g);
                    break;
                }
            }
        }
        Some(id)
    }

    /// Propagating rewire: whenever a node gets cheaper, its neighbors are
    /// offered the cheaper route through it.
    fn rewire_from(&mut self, start: usize, env: &Environment) {
        let mut queue = VecDeque::from([start]);
        let r = self.neighbor_radius();
        while let Some(u) = queue.pop_front() {
            if self.node(u).is_none_or(|n| !n.attached) {
                continue;
            }
            let (upos, ucost) = (self.n(u).pos, self.n(u).cost);
            for v in self.attached_within(&upos, r) {
                if v == u || v == self.root || self.n(u).parent == Some(v) {
                    continue;
                }
                let via = ucost + upos.dist(&self.n(v).pos);
                if via < self.n(v).cost - COST_EPS && env.segment_free(&upos, &self.n(v).pos) {
                    self.set_parent(v, u);
                    queue.extend(self.subtree(v));
                }
            }
        }
    }

    /// Drops nodes and edges that are no longer free in `env`. Returns false
    /// when the root or the goal became blocked.
    fn sever(&mut self, env: &Environment) -> bool {
        if !env.point_free(&self.n(self.root).pos) || !env.point_free(&self.goal) {
            return false;
        }
        let ids: Vec<usize> = self.iter().map(|(i, _)| i).collect();
        for &i in &ids {
            if i != self.root && !env.point_free(&self.n(i).pos) {
                self.delete(i);
            }
        }
        for &i in &ids {
            let Some(node) = self.node(i) else { continue };
            if let Some(p) = node.parent {
                if !env.segment_free(&self.n(p).pos, &node.pos) {
                    self.detach(i);
                }
            }
        }
        for n in self.nodes.iter_mut().flatten() {
            n.attached = false;
        }
        for i in self.subtree(self.root) {
            self.n_mut(i).attached = true;
        }
        // The severed subtree holding the goal is kept for reconnection,
        // every other orphan is discarded.
        let keep_root = self.goal_node.filter(|&g| !self.n(g).attached).map(|g| {
            let mut cur = g;
            while let Some(p) = self.n(cur).parent {
                cur = p;
            }
            cur
        });
        let keep: Vec<usize> = keep_root.map(|k| self.subtree(k)).unwrap_or_default();
        let orphans: Vec<usize> = self
            .iter()
            .filter(|&(i, n)| !n.attached && !keep.contains(&i))
            .map(|(i, _)| i)
            .collect();
        for i in orphans {
            self.delete(i);
        }
        if keep_root.is_none() && self.goal_node.is_none() {
            // The goal node itself was dropped; it is re-added by growth.
            self.last_added = None;
        }
        self.refresh_costs(self.root);
        true
    }

    fn drop_detached(&mut self) {
        for i in self.detached_component() {
            self.delete(i);
        }
    }

    fn detached_component(&self) -> Vec<usize> {
        self.iter().filter(|(_, n)| !n.attached).map(|(i, _)| i).collect()
    }

    /// Tree distance from every detached node to the goal.
    fn distances_to_goal(&self, comp: &[usize]) -> Vec<(usize, f64)> {
        let Some(g) = self.goal_node else { return Vec::new() };
        let mut dist = vec![(g, 0.0)];
        let mut k = 0;
        while k < dist.len() {
            let (u, d) = dist[k];
            let n = self.n(u);
            let adj = n.children.iter().copied().chain(n.parent);
            for v in adj {
                if comp.contains(&v) && !dist.iter().any(|&(w, _)| w == v) {
                    dist.push((v, d + n.pos.dist(&self.n(v).pos)));
                }
            }
            k += 1;
        }
        dist
    }

    /// Makes `new_root` the root of its detached component, then hangs it
    /// under the attached node `anchor`.
    fn reroot_and_attach(&mut self, new_root: usize, anchor: usize) {
        let mut chain = vec![new_root];
        let mut cur = new_root;
        while let Some(p) = self.n(cur).parent {
            chain.push(p);
            cur = p;
        }
        for &i in &chain {
            self.detach(i);
        }
        for w in chain.windows(2) {
            self.n_mut(w[1]).parent = Some(w[0]);
            self.n_mut(w[0]).children.push(w[1]);
        }
        self.n_mut(anchor).children.push(new_root);
        self.n_mut(new_root).parent = Some(anchor);
        for i in self.subtree(new_root) {
            self.n_mut(i).attached = true;
        }
        self.refresh_costs(new_root);
    }

    /// Attempts a direct link from the attached tree (or just `from`, when
    /// given) into the detached goal subtree, choosing the cheapest result.
    fn try_reconnect(&mut self, env: &Environment, from: Option<usize>) -> bool {
        let comp = self.detached_component();
        if comp.is_empty() {
            return self.goal_node.is_some();
        }
        let to_goal = self.distances_to_goal(&comp);
        let r = self.neighbor_radius();
        let mut best: Option<(f64, usize, usize)> = None;
        for &(d, dg) in &to_goal {
            let dpos = self.n(d).pos;
            let anchors = match from {
                Some(a) => vec![a],
                None => self.attached_within(&dpos, r),
            };
            for a in anchors {
                let an = self.n(a);
                if !an.attached || an.pos.dist(&dpos) > r {
                    continue;
                }
                let total = an.cost + an.pos.dist(&dpos) + dg;
                if best.is_none_or(|b| total < b.0) && env.segment_free(&an.pos, &dpos) {
                    best = Some((total, d, a));
                }
            }
        }
        match best {
            Some((_, d, a)) => {
                self.reroot_and_attach(d, a);
                true
            }
            None => false,
        }
    }

    /// Removes blocked nodes and edges after `env` gained obstacles, then
    /// reconnects the goal: first directly, then by regrowing for at most
    /// `budget` iterations.
    pub fn sever_and_repair(&mut self, env: &Environment, budget: usize) -> Result<Vec<Point2>> {
        if !self.sever(env) {
            return Err(Error::Planning("origin or destination is blocked".into()));
        }
        if let Some(p) = self.solution_points() {
            return Ok(p);
        }
        if self.try_reconnect(env, None) {
            if let Some(p) = self.solution_points() {
                return Ok(p);
            }
        }
        for _ in 0..budget {
            let Some(id) = self.grow(env) else { continue };
            if self.goal_node.is_some_and(|g| !self.n(g).attached) && self.node(id).is_some() {
                self.try_reconnect(env, Some(id));
            }
            if let Some(p) = self.solution_points() {
                return Ok(p);
            }
        }
        Err(Error::Planning(format!("repair did not reconnect the destination within {budget} iterations")))
    }

    /// Structural audit: parent/child symmetry, acyclicity, exact costs and
    /// the node budget.
    pub fn audit(&self) -> std::result::Result<(), String> {
        if self.count > self.max_nodes {
            return Err(format!("{} nodes exceed budget {}", self.count, self.max_nodes));
        }
        if self.iter().count() != self.count {
            return Err("node count out of sync".into());
        }
        for (i, n) in self.iter() {
            for &c in &n.children {
                if self.node(c).map(|cn| cn.parent) != Some(Some(i)) {
                    return Err(format!("child {c} of {i} does not point back"));
                }
            }
            if let Some(p) = n.parent {
                let pn = self.node(p).ok_or(format!("node {i} has dead parent {p}"))?;
                if !pn.children.contains(&i) {
                    return Err(format!("parent {p} does not list {i}"));
                }
                let expect = pn.cost + pn.pos.dist(&n.pos);
                if (n.cost - expect).abs() > 1e-6 {
                    return Err(format!("node {i} cost {} != {}", n.cost, expect));
                }
            }
            if n.attached {
                let mut cur = i;
                let mut hops = 0;
                while let Some(p) = self.n(cur).parent {
                    cur = p;
                    hops += 1;
                    if hops > self.count {
                        return Err(format!("cycle through {i}"));
                    }
                }
                if cur != self.root {
                    return Err(format!("attached node {i} does not reach the root"));
                }
            }
        }
        Ok(())
    }
}

/// Grows a fresh tree until the goal connects or `budget` iterations pass.
pub fn plan_candidate(
    env: &Environment,
    origin: Point2,
    goal: Point2,
    step: f64,
    max_nodes: usize,
    budget: usize,
    seed: u64,
) -> Result<(PlanTree, Vec<Point2>)> {
    env.validate()?;
    env.validate_endpoint("origin", &origin)?;
    env.validate_endpoint("destination", &goal)?;
    let mut tree = PlanTree::new(origin, goal, step, max_nodes, seed)?;
    if origin.dist(&goal) <= step && env.segment_free(&origin, &goal) {
        let g = tree.add_node(goal, tree.root);
        tree.goal_node = Some(g);
    }
    for _ in 0..budget {
        if let Some(path) = tree.solution_points() {
            return Ok((tree, path));
        }
        tree.grow(env);
    }
    match tree.solution_points() {
        Some(path) => Ok((tree, path)),
        None => Err(Error::Planning(format!("no route found within {budget} iterations"))),
    }
}
