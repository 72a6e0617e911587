//! Lossless linearized DistFlow (LinDistFlow) on the radial feeder.
//!
//! For every line `i -> j` the sending-end flow equals the total load
//! downstream of `j`, and squared voltage drops along the line as
//! `v_sq[j] = v_sq[i] - 2 (r P + x Q)`. Current magnitude uses the
//! sending-end voltage: `|I| = sqrt(P^2 + Q^2) / sqrt(v_sq[i])`.
//! All quantities are per unit on the scenario bases.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::scenario::{LineId, NodeId, PerUnitBases, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerFlowError {
    #[error("feeder is not a radial tree rooted at the substation: {0}")]
    NonRadial(String),
    #[error("load vector has {found} entries, expected {expected} (one per non-substation node)")]
    LoadShape { found: usize, expected: usize },
    #[error("non-finite load at node {0}")]
    NonFinite(NodeId),
    #[error("model breakdown: squared voltage {v_sq} at node {} is not positive", .node.0)]
    ModelBreakdown { node: NodeId, v_sq: f64 },
}

/// Per-unit load at every non-substation node, in node-id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalLoad {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl NodalLoad {
    pub fn zeros(n_loads: usize) -> Self {
        Self { p: vec![0.0; n_loads], q: vec![0.0; n_loads] }
    }

    pub fn from_kw(bases: &PerUnitBases, p_kw: &[f64], q_kvar: &[f64]) -> Self {
        let k = bases.kw_per_pu();
        Self { p: p_kw.iter().map(|v| v / k).collect(), q: q_kvar.iter().map(|v| v / k).collect() }
    }

    /// `a * self + b * other`, entry by entry.
    pub fn combine(&self, a: f64, other: &NodalLoad, b: f64) -> NodalLoad {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
        NodalLoad { p: mix(&self.p, &other.p), q: mix(&self.q, &other.q) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Squared voltage per node, node-id order; the substation is 1.0.
    pub v_sq: Vec<f64>,
    /// Sending-end flows and current per line, line-id order.
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    pub i: Vec<f64>,
}

impl FlowSolution {
    pub fn v_pu(&self) -> impl Iterator<Item = f64> + '_ {
        self.v_sq.iter().map(|v| v.sqrt())
    }
}

/// Tree structure of a radial feeder, built once per scenario.
#[derive(Debug, Clone)]
pub struct Feeder {
    node_ids: Vec<NodeId>,
    line_ids: Vec<LineId>,
    root: usize,
    /// Node positions in breadth-first order from the substation.
    order: Vec<usize>,
    /// Line feeding each node (`None` at the substation).
    parent_line: Vec<Option<usize>>,
    line_from: Vec<usize>,
    line_to: Vec<usize>,
    r: Vec<f64>,
    x: Vec<f64>,
    /// Position of each node in the load vector (`None` at the substation).
    load_slot: Vec<Option<usize>>,
}

impl Feeder {
    pub fn new(s: &Scenario) -> Result<Self, PowerFlowError> {
        let node_pos: BTreeMap<NodeId, usize> =
            s.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let root = s
            .nodes
            .iter()
            .position(|n| n.is_substation)
            .ok_or_else(|| PowerFlowError::NonRadial("no substation".into()))?;
        if s.lines.len() + 1 != s.nodes.len() {
            return Err(PowerFlowError::NonRadial(format!(
                "{} lines for {} nodes",
                s.lines.len(),
                s.nodes.len()
            )));
        }
        let n = s.nodes.len();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut line_from = Vec::with_capacity(s.lines.len());
        let mut line_to = Vec::with_capacity(s.lines.len());
        for (k, l) in s.lines.iter().enumerate() {
            let (Some(&a), Some(&b)) = (node_pos.get(&l.from_node), node_pos.get(&l.to_node)) else {
                return Err(PowerFlowError::NonRadial(format!("line {} has an unknown endpoint", l.id.0)));
            };
            children[a].push(k);
            line_from.push(a);
            line_to.push(b);
        }
        let mut parent_line = vec![None; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &k in &children[u] {
                let v = line_to[k];
                if seen[v] {
                    return Err(PowerFlowError::NonRadial(format!("node {} is fed twice", s.nodes[v].id.0)));
                }
                seen[v] = true;
                parent_line[v] = Some(k);
                queue.push_back(v);
            }
        }
        if order.len() != n {
            return Err(PowerFlowError::NonRadial(format!(
                "{} of {n} nodes reachable from the substation along line orientation",
                order.len()
            )));
        }
        let mut next_slot = 0;
        let load_slot = (0..n)
            .map(|i| {
                (i != root).then(|| {
                    next_slot += 1;
                    next_slot - 1
                })
            })
            .collect();
        Ok(Self {
            node_ids: s.nodes.iter().map(|n| n.id).collect(),
            line_ids: s.lines.iter().map(|l| l.id).collect(),
            root,
            order,
            parent_line,
            line_from,
            line_to,
            r: s.lines.iter().map(|l| l.r_pu).collect(),
            x: s.lines.iter().map(|l| l.x_pu).collect(),
            load_slot,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_loads(&self) -> usize {
        self.node_ids.len() - 1
    }

    pub fn n_lines(&self) -> usize {
        self.line_ids.len()
    }

    pub fn node_id(&self, pos: usize) -> NodeId {
        self.node_ids[pos]
    }

    pub fn line_id(&self, pos: usize) -> LineId {
        self.line_ids[pos]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Slot of a node in a [`NodalLoad`]; `None` for the substation.
    pub fn load_slot(&self, node_pos: usize) -> Option<usize> {
        self.load_slot[node_pos]
    }

    /// Lines on the path from the substation down to `node_pos`.
    pub fn path_lines(&self, node_pos: usize) -> Vec<usize> {
        let mut lines = Vec::new();
        let mut cur = node_pos;
        while let Some(k) = self.parent_line[cur] {
            lines.push(k);
            cur = self.line_from[k];
        }
        lines.reverse();
        lines
    }

    pub fn line_to(&self, line_pos: usize) -> usize {
        self.line_to[line_pos]
    }

    pub fn line_from(&self, line_pos: usize) -> usize {
        self.line_from[line_pos]
    }

    /// Lines leaving the substation.
    pub fn root_lines(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_lines()).filter(|&k| self.line_from[k] == self.root)
    }

    pub fn solve(&self, loads: &NodalLoad) -> Result<FlowSolution, PowerFlowError> {
        let expected = self.n_loads();
        if loads.p.len() != expected || loads.q.len() != expected {
            return Err(PowerFlowError::LoadShape { found: loads.p.len().min(loads.q.len()), expected });
        }
        let n = self.n_nodes();
        let mut down_p = vec![0.0; n];
        let mut down_q = vec![0.0; n];
        let mut p_flow = vec![0.0; self.n_lines()];
        let mut q_flow = vec![0.0; self.n_lines()];

        for &u in self.order.iter().rev() {
            let Some(k) = self.parent_line[u] else { continue };
            let slot = self.load_slot[u].expect("non-root node has a load slot");
            let (p, q) = (loads.p[slot], loads.q[slot]);
            if !(p.is_finite() && q.is_finite()) {
                return Err(PowerFlowError::NonFinite(self.node_ids[u]));
            }
            p_flow[k] = p + down_p[u];
            q_flow[k] = q + down_q[u];
            let parent = self.line_from[k];
            down_p[parent] += p_flow[k];
            down_q[parent] += q_flow[k];
        }

        let mut v_sq = vec![0.0; n];
        v_sq[self.root] = 1.0;
        let mut current = vec![0.0; self.n_lines()];
        for &u in &self.order {
            let Some(k) = self.parent_line[u] else { continue };
            let sending = v_sq[self.line_from[k]];
            let v = sending - 2.0 * (self.r[k] * p_flow[k] + self.x[k] * q_flow[k]);
            if v <= 0.0 || !v.is_finite() {
                return Err(PowerFlowError::ModelBreakdown { node: self.node_ids[u], v_sq: v });
            }
            v_sq[u] = v;
            current[k] = p_flow[k].hypot(q_flow[k]) / sending.sqrt();
        }
        Ok(FlowSolution { v_sq, p_flow, q_flow, i: current })
    }

    /// Power leaving the substation, `(kW, kvar)`.
    pub fn substation_power(&self, sol: &FlowSolution, bases: &PerUnitBases) -> (f64, f64) {
        let (p, q) = self
            .root_lines()
            .fold((0.0, 0.0), |(p, q), k| (p + sol.p_flow[k], q + sol.q_flow[k]));
        (p * bases.kw_per_pu(), q * bases.kw_per_pu())
    }
}

pub fn solve_lindistflow(s: &Scenario, loads: &NodalLoad) -> Result<FlowSolution, PowerFlowError> {
    Feeder::new(s)?.solve(loads)
}

pub fn substation_power(sol: &FlowSolution, s: &Scenario) -> Result<(f64, f64), PowerFlowError> {
    Ok(Feeder::new(s)?.substation_power(sol, &s.bases))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Undervoltage,
    Overvoltage,
    Overcurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum GridComponent {
    Node(NodeId),
    Line(LineId),
}

/// A limit breach. Voltages are per-unit magnitudes, currents per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub component: GridComponent,
    pub kind: ViolationKind,
    pub value: f64,
    pub limit: f64,
    pub t: usize,
}

pub type ViolationList = Vec<Violation>;

/// Compare a solution against voltage bounds and ampacities.
pub fn check_limits(sol: &FlowSolution, s: &Scenario, t: usize) -> ViolationList {
    let mut out = Vec::new();
    for (node, v_sq) in s.nodes.iter().zip(&sol.v_sq) {
        let v = v_sq.sqrt();
        if v < node.v_min {
            out.push(Violation {
                component: GridComponent::Node(node.id),
                kind: ViolationKind::Undervoltage,
                value: v,
                limit: node.v_min,
                t,
            });
        } else if v > node.v_max {
            out.push(Violation {
                component: GridComponent::Node(node.id),
                kind: ViolationKind::Overvoltage,
                value: v,
                limit: node.v_max,
                t,
            });
        }
    }
    for (line, &i) in s.lines.iter().zip(&sol.i) {
        if i > line.i_max_pu {
            out.push(Violation {
                component: GridComponent::Line(line.id),
                kind: ViolationKind::Overcurrent,
                value: i,
                limit: line.i_max_pu,
                t,
            });
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scenario::{PowerLine, PowerNode, Scenario};

    /// Minimal scenario holding only a feeder; transit parts empty.
    pub(crate) fn feeder_only(lines: &[(u32, u32, f64, f64, f64)], n_nodes: u32, mva: f64) -> Scenario {
        let mut s = crate::scenario::parkcity::park_city_33();
        s.bases.mva = mva;
        s.nodes = (1..=n_nodes)
            .map(|id| PowerNode {
                id: NodeId(id),
                is_substation: id == 1,
                v_min: 0.95,
                v_max: 1.05,
                angle_deg: None,
                inflexible_p_kw: vec![0.0; 288],
                inflexible_q_kvar: vec![0.0; 288],
            })
            .collect();
        s.lines = lines
            .iter()
            .enumerate()
            .map(|(k, &(from, to, r, x, i_max))| PowerLine {
                id: LineId(k as u32 + 1),
                from_node: NodeId(from),
                to_node: NodeId(to),
                r_pu: r,
                x_pu: x,
                i_max_pu: i_max,
            })
            .collect();
        s.stations.clear();
        s.coupling.clear();
        s.bebs.clear();
        s
    }

    fn chain3() -> Scenario {
        feeder_only(&[(1, 2, 0.01, 0.01, 1.0), (2, 3, 0.01, 0.01, 1.0)], 3, 100.0)
    }

    fn chain3_loads() -> NodalLoad {
        NodalLoad { p: vec![0.1, 0.1], q: vec![0.0, 0.0] }
    }

    #[test]
    fn no_load_identity() {
        let s = chain3();
        let sol = solve_lindistflow(&s, &NodalLoad::zeros(2)).unwrap();
        assert_eq!(sol.v_sq, vec![1.0; 3]);
        assert_eq!(sol.p_flow, vec![0.0; 2]);
        assert_eq!(sol.i, vec![0.0; 2]);
        assert!(check_limits(&sol, &s, 0).is_empty());
        assert_eq!(substation_power(&sol, &s).unwrap(), (0.0, 0.0));
    }

    // Hand oracle: flows 0.2 / 0.1; v_sq[2] = 1 - 2(0.01*0.2) = 0.996,
    // v_sq[3] = 0.996 - 2(0.01*0.1) = 0.994; i(1-2) = 0.2 / sqrt(1) = 0.2.
    #[test]
    fn three_node_chain() {
        let s = chain3();
        let sol = solve_lindistflow(&s, &chain3_loads()).unwrap();
        assert!((sol.p_flow[0] - 0.2).abs() < 1e-15);
        assert!((sol.p_flow[1] - 0.1).abs() < 1e-15);
        assert!((sol.v_sq[1] - 0.996).abs() < 1e-15);
        assert!((sol.v_sq[2] - 0.994).abs() < 1e-15);
        assert!((sol.i[0] - 0.2).abs() < 1e-15);
        assert!((sol.i[1] - 0.1 / 0.996f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn three_node_undervoltage() {
        let mut s = chain3();
        for n in &mut s.nodes {
            n.v_min = 0.999;
        }
        let sol = solve_lindistflow(&s, &chain3_loads()).unwrap();
        let v = check_limits(&sol, &s, 4);
        let nodes: Vec<_> = v.iter().map(|x| (x.component, x.kind)).collect();
        assert_eq!(
            nodes,
            vec![
                (GridComponent::Node(NodeId(2)), ViolationKind::Undervoltage),
                (GridComponent::Node(NodeId(3)), ViolationKind::Undervoltage),
            ]
        );
        assert!((v[0].value - 0.99800).abs() < 1e-5);
        assert!((v[1].value - 0.99700).abs() < 1e-5);
        assert!(v.iter().all(|x| x.t == 4 && x.value < x.limit));
    }

    #[test]
    fn three_node_overcurrent() {
        let mut s = chain3();
        s.lines[0].i_max_pu = 0.1;
        let sol = solve_lindistflow(&s, &chain3_loads()).unwrap();
        let v = check_limits(&sol, &s, 0);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].component, GridComponent::Line(LineId(1)));
        assert_eq!(v[0].kind, ViolationKind::Overcurrent);
        assert!(v[0].value > v[0].limit);
    }

    #[test]
    fn substation_power_in_kw() {
        let s = chain3();
        let sol = solve_lindistflow(&s, &chain3_loads()).unwrap();
        let (p, q) = substation_power(&sol, &s).unwrap();
        assert!((p - 20_000.0).abs() < 1e-9);
        assert_eq!(q, 0.0);
    }

    #[test]
    fn breakdown_is_reported_not_clamped() {
        let s = chain3();
        let loads = NodalLoad { p: vec![30.0, 30.0], q: vec![0.0, 0.0] };
        match solve_lindistflow(&s, &loads) {
            Err(PowerFlowError::ModelBreakdown { node, v_sq }) => {
                assert_eq!(node, NodeId(2));
                assert!(v_sq <= 0.0);
            }
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_load_shape_and_non_radial() {
        let s = chain3();
        assert!(matches!(
            solve_lindistflow(&s, &NodalLoad::zeros(3)),
            Err(PowerFlowError::LoadShape { expected: 2, .. })
        ));
        let looped = feeder_only(&[(1, 2, 0.01, 0.01, 1.0), (2, 3, 0.01, 0.01, 1.0), (3, 2, 0.01, 0.01, 1.0)], 3, 100.0);
        assert!(matches!(Feeder::new(&looped), Err(PowerFlowError::NonRadial(_))));
    }
}
