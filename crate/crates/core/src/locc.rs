//! Finite-round LOCC protocols as trees of local instruments.
//!
//! Each node belongs to one party and holds that party's instrument; child `k`
//! (if present) is the next round after outcome `k`, otherwise outcome `k`
//! ends the protocol. Simulating a tree yields, per leaf, the cumulative local
//! Kraus operators, the `(x, y)` trajectory of the POVM element, and the
//! outcome statistics on the discrimination task.
//!
//! Alice's round only touches her factor of `Ĝ`, so `y` is copied through her
//! rounds and `x` through Bob's: trajectories are zigzags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    gram_params, random_operator, AlgebraError, LocalGramParams, LocalOperator, Mat4,
};
use crate::gap::{check_feasible, f_pm_operator, gamma_pm, in_enlarged_region, prefactor, GapError, Sign};
use crate::measures::EntanglementMeasure;
use crate::separable::{c_bound, p_of_operator, q_of_operator, OutcomeStats};
use crate::{COMPLETENESS_TOL, NULL_TRACE, PROB_ZERO};

/// Default bound on protocol depth.
pub const DEFAULT_MAX_DEPTH: usize = 8;

/// Tolerance of the inequality audits.
pub const AUDIT_TOL: f64 = 1e-9;

/// Outcome string k₁…k_m.
pub type History = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoccError {
    #[error("instrument has no Kraus operators")]
    EmptyInstrument,
    #[error("Kraus operator has non-finite entries")]
    NonFinite,
    #[error("instrument at {history:?} is incomplete (defect {defect:e})")]
    Incomplete { history: History, defect: f64 },
    #[error("parties do not alternate at {history:?}")]
    NonAlternating { history: History },
    #[error("child key {key} at {history:?} has no matching Kraus operator")]
    ChildOutOfRange { history: History, key: usize },
    #[error("protocol depth {depth} exceeds the maximum {max}")]
    TooDeep { depth: usize, max: usize },
    #[error("unknown protocol family `{0}`")]
    UnknownFamily(String),
    #[error("bad parameters for protocol family: {0}")]
    BadFamilyParams(String),
    #[error("malformed protocol JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Self {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
        })
    }
}

/// Kraus operators of one local measurement, Σ K†K = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalInstrument {
    kraus: Vec<LocalOperator>,
}

impl LocalInstrument {
    pub fn new(kraus: Vec<LocalOperator>) -> Result<Self, LoccError> {
        if kraus.is_empty() {
            return Err(LoccError::EmptyInstrument);
        }
        if kraus.iter().any(|k| !k.is_finite()) {
            return Err(LoccError::NonFinite);
        }
        let inst = Self { kraus };
        let defect = inst.completeness_defect();
        if !(defect <= COMPLETENESS_TOL) {
            return Err(LoccError::Incomplete {
                history: Vec::new(),
                defect,
            });
        }
        Ok(inst)
    }

    pub fn kraus(&self) -> &[LocalOperator] {
        &self.kraus
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    pub fn completeness_defect(&self) -> f64 {
        self.kraus
            .iter()
            .fold(LocalOperator::zero(), |acc, k| acc + k.gram())
            .max_abs_diff(&LocalOperator::identity())
    }

    pub fn identity() -> Self {
        Self {
            kraus: vec![LocalOperator::identity()],
        }
    }

    /// {|0⟩⟨0|, |1⟩⟨1|}
    pub fn projective_z() -> Self {
        Self {
            kraus: vec![LocalOperator::diag(1.0, 0.0), LocalOperator::diag(0.0, 1.0)],
        }
    }

    /// {diag(cos θ, sin θ), diag(sin θ, cos θ)}
    pub fn partial_diagonal(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            kraus: vec![LocalOperator::diag(c, s), LocalOperator::diag(s, c)],
        }
    }

    /// Diagonal Kraus diag(√a_k, √b_k) from per-outcome probabilities of the
    /// two basis states.
    pub fn from_diagonal_probabilities(p0: &[f64], p1: &[f64]) -> Result<Self, LoccError> {
        let kraus = p0
            .iter()
            .zip(p1)
            .map(|(&a, &b)| LocalOperator::diag(a.max(0.0).sqrt(), b.max(0.0).sqrt()))
            .collect();
        Self::new(kraus)
    }

    /// Diagonal instrument with random weights; each entry is zeroed with
    /// probability `sparsity`.
    pub fn random_diagonal<R: Rng + ?Sized>(rng: &mut R, outcomes: usize, sparsity: f64) -> Self {
        let draw = |rng: &mut R| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..outcomes)
                    .map(|_| {
                        if rng.random_bool(sparsity) {
                            0.0
                        } else {
                            rng.random::<f64>()
                        }
                    })
                    .collect();
                let s: f64 = v.iter().sum();
                if s > 1e-3 {
                    return v.into_iter().map(|a| a / s).collect();
                }
            }
        };
        let p0 = draw(rng);
        let p1 = draw(rng);
        Self::from_diagonal_probabilities(&p0, &p1).expect("normalized")
    }

    /// K_k = X_k S^{-1/2} with Gaussian X_k and S = Σ X_k†X_k.
    pub fn random_general<R: Rng + ?Sized>(rng: &mut R, outcomes: usize) -> Self {
        loop {
            let xs: Vec<LocalOperator> = (0..outcomes).map(|_| random_operator(rng)).collect();
            let s = xs.iter().fold(LocalOperator::zero(), |acc, x| acc + x.gram());
            let Some(inv_sqrt) = s.sqrt_psd().inverse() else {
                continue;
            };
            let kraus: Vec<LocalOperator> = xs.into_iter().map(|x| x * inv_sqrt).collect();
            if let Ok(inst) = Self::new(kraus) {
                return inst;
            }
        }
    }
}

/// One round: the acting party, its instrument, and continuations by outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolNode {
    pub party: Party,
    pub instrument: LocalInstrument,
    pub children: BTreeMap<usize, ProtocolNode>,
}

impl ProtocolNode {
    pub fn leaf_round(party: Party, instrument: LocalInstrument) -> Self {
        Self {
            party,
            instrument,
            children: BTreeMap::new(),
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children.values().map(|c| c.depth()).max().unwrap_or(0)
    }
}

/// A protocol tree with a declared maximum depth.
#[derive(Debug, Clone, PartialEq)]
pub struct LoccProtocol {
    root: ProtocolNode,
    max_depth: usize,
}

impl LoccProtocol {
    pub fn new(root: ProtocolNode, max_depth: usize) -> Result<Self, LoccError> {
        let proto = Self { root, max_depth };
        proto.validate()?;
        Ok(proto)
    }

    pub fn root(&self) -> &ProtocolNode {
        &self.root
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Single identity round by Alice: no measurement at all.
    pub fn identity() -> Self {
        Self {
            root: ProtocolNode::leaf_round(Party::Alice, LocalInstrument::identity()),
            max_depth: 1,
        }
    }

    pub fn validate(&self) -> Result<(), LoccError> {
        let depth = self.depth();
        if depth > self.max_depth {
            return Err(LoccError::TooDeep {
                depth,
                max: self.max_depth,
            });
        }
        fn walk(node: &ProtocolNode, history: &mut History) -> Result<(), LoccError> {
            let inst = &node.instrument;
            if inst.is_empty() {
                return Err(LoccError::EmptyInstrument);
            }
            let defect = inst.completeness_defect();
            if !(defect <= COMPLETENESS_TOL) {
                return Err(LoccError::Incomplete {
                    history: history.clone(),
                    defect,
                });
            }
            for (&k, child) in &node.children {
                if k >= inst.len() {
                    return Err(LoccError::ChildOutOfRange {
                        history: history.clone(),
                        key: k,
                    });
                }
                history.push(k);
                if child.party == node.party {
                    return Err(LoccError::NonAlternating {
                        history: history.clone(),
                    });
                }
                walk(child, history)?;
                history.pop();
            }
            Ok(())
        }
        walk(&self.root, &mut Vec::new())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NodeJson::from(&self.root)).expect("serializable")
    }

    pub fn from_json(s: &str, max_depth: usize) -> Result<Self, LoccError> {
        let node: NodeJson = serde_json::from_str(s).map_err(|e| LoccError::Json(e.to_string()))?;
        Self::new(node.try_into()?, max_depth)
    }
}

/// Wire form of a protocol node. Each Kraus operator is four `[re, im]`
/// pairs in row-major order; child keys are decimal outcome indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeJson {
    pub party: Party,
    pub kraus: Vec<[[f64; 2]; 4]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub children: BTreeMap<String, NodeJson>,
}

impl From<&ProtocolNode> for NodeJson {
    fn from(node: &ProtocolNode) -> Self {
        let kraus = node
            .instrument
            .kraus()
            .iter()
            .map(|k| {
                let m = &k.0;
                [m[0][0], m[0][1], m[1][0], m[1][1]].map(|z| [z.re, z.im])
            })
            .collect();
        // Numeric order, not lexicographic.
        let children = node
            .children
            .iter()
            .map(|(k, c)| (k.to_string(), NodeJson::from(c)))
            .collect();
        Self {
            party: node.party,
            kraus,
            children,
        }
    }
}

impl TryFrom<NodeJson> for ProtocolNode {
    type Error = LoccError;

    fn try_from(node: NodeJson) -> Result<Self, LoccError> {
        let kraus = node
            .kraus
            .iter()
            .map(|e| {
                let z = e.map(|[re, im]| Complex64::new(re, im));
                LocalOperator::new([[z[0], z[1]], [z[2], z[3]]])
            })
            .collect();
        let instrument = LocalInstrument::new(kraus)?;
        let mut children = BTreeMap::new();
        for (key, child) in node.children {
            let k: usize = key
                .parse()
                .map_err(|_| LoccError::Json(format!("outcome key `{key}` is not a decimal index")))?;
            children.insert(k, child.try_into()?);
        }
        Ok(Self {
            party: node.party,
            instrument,
            children,
        })
    }
}

/// A surviving node of the simulated tree (root, intermediate, or leaf).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub history: History,
    pub kraus_a: LocalOperator,
    pub kraus_b: LocalOperator,
    pub a_params: LocalGramParams,
    pub b_params: LocalGramParams,
    pub point: (f64, f64),
    /// Number of outcomes of the instrument applied at this node, 0 for leaves.
    pub outcomes: usize,
}

impl NodeRecord {
    /// Ĝ = A†A ⊗ B†B.
    pub fn gram(&self) -> Mat4 {
        Mat4::kron(&self.kraus_a.gram(), &self.kraus_b.gram())
    }

    pub fn is_leaf(&self) -> bool {
        self.outcomes == 0
    }
}

/// One final outcome with Ĝ ≠ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub history: History,
    /// Acting party of each round along the branch.
    pub actors: Vec<Party>,
    pub cumulative_a: LocalOperator,
    pub cumulative_b: LocalOperator,
    pub a_params: LocalGramParams,
    pub b_params: LocalGramParams,
    /// (0, 0) followed by one point per completed round.
    pub trajectory: Vec<(f64, f64)>,
    pub stats: OutcomeStats,
}

impl BranchRecord {
    pub fn w(&self) -> f64 {
        self.a_params.w * self.b_params.w
    }

    pub fn point(&self) -> (f64, f64) {
        *self.trajectory.last().expect("trajectory starts at the origin")
    }

    pub fn gram(&self) -> Mat4 {
        Mat4::kron(&self.cumulative_a.gram(), &self.cumulative_b.gram())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub leaves: Vec<BranchRecord>,
    pub nodes: BTreeMap<History, NodeRecord>,
    /// Branches dropped because Tr Ĝ ≤ 1e-14.
    pub pruned: usize,
    pub pruned_trace: f64,
}

impl Simulation {
    /// max |(Σ_leaves Ĝ − 1)_{ij}|
    pub fn completeness_defect(&self) -> f64 {
        self.leaves
            .iter()
            .fold(Mat4::zero(), |acc, l| acc + l.gram())
            .max_abs_diff(&Mat4::identity())
    }

    /// Largest entrywise mismatch between a node's Ĝ and the sum over its
    /// surviving children.
    pub fn parent_child_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (h, node) in &self.nodes {
            if node.is_leaf() {
                continue;
            }
            let mut child = h.clone();
            child.push(0);
            let mut sum = Mat4::zero();
            for k in 0..node.outcomes {
                *child.last_mut().expect("nonempty") = k;
                if let Some(c) = self.nodes.get(&child) {
                    sum = sum + c.gram();
                }
            }
            worst = worst.max(sum.max_abs_diff(&node.gram()));
        }
        worst
    }

    /// Largest deviation between stored trajectory points and (x, y)
    /// recomputed from the 4×4 operator Ĝ of each prefix.
    pub fn recomputed_trajectory_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for leaf in &self.leaves {
            for (m, &(x, y)) in leaf.trajectory.iter().enumerate() {
                let Some(node) = self.nodes.get(&leaf.history[..m]) else {
                    return f64::INFINITY;
                };
                let g = node.gram();
                let d: [f64; 4] = std::array::from_fn(|i| g.diagonal(i));
                let tr = d.iter().sum::<f64>();
                let gx = (d[0] + d[1] - d[2] - d[3]) / tr;
                let gy = (d[0] - d[1] + d[2] - d[3]) / tr;
                worst = worst.max((gx - x).abs()).max((gy - y).abs());
            }
        }
        worst
    }
}

/// Runs the protocol tree and records every surviving leaf.
pub fn simulate(proto: &LoccProtocol) -> Result<Simulation, LoccError> {
    proto.validate()?;
    let mut sim = Simulation {
        leaves: Vec::new(),
        nodes: BTreeMap::new(),
        pruned: 0,
        pruned_trace: 0.0,
    };
    let start = Cursor {
        history: Vec::new(),
        actors: Vec::new(),
        a: LocalOperator::identity(),
        b: LocalOperator::identity(),
        a_params: LocalGramParams::identity(),
        b_params: LocalGramParams::identity(),
        trajectory: vec![(0.0, 0.0)],
    };
    visit(&proto.root, start, &mut sim);
    Ok(sim)
}

struct Cursor {
    history: History,
    actors: Vec<Party>,
    a: LocalOperator,
    b: LocalOperator,
    a_params: LocalGramParams,
    b_params: LocalGramParams,
    trajectory: Vec<(f64, f64)>,
}

impl Cursor {
    fn record(&self, outcomes: usize) -> NodeRecord {
        NodeRecord {
            history: self.history.clone(),
            kraus_a: self.a,
            kraus_b: self.b,
            a_params: self.a_params,
            b_params: self.b_params,
            point: *self.trajectory.last().expect("nonempty"),
            outcomes,
        }
    }
}

fn visit(node: &ProtocolNode, cur: Cursor, sim: &mut Simulation) {
    sim.nodes
        .insert(cur.history.clone(), cur.record(node.instrument.len()));
    for (k, kraus) in node.instrument.kraus().iter().enumerate() {
        let (a, b) = match node.party {
            Party::Alice => (*kraus * cur.a, cur.b),
            Party::Bob => (cur.a, *kraus * cur.b),
        };
        let (prev_x, prev_y) = *cur.trajectory.last().expect("nonempty");
        // Only the acting party's factor is recomputed; the other is copied.
        let refreshed = match node.party {
            Party::Alice => gram_params(&a.gram()).map(|p| (p, cur.b_params, (p.x, prev_y))),
            Party::Bob => gram_params(&b.gram()).map(|p| (cur.a_params, p, (prev_x, p.x))),
        };
        let trace = a.gram().trace().re * b.gram().trace().re;
        let (a_params, b_params, point) = match refreshed {
            Ok(v) if trace > NULL_TRACE => v,
            _ => {
                sim.pruned += 1;
                sim.pruned_trace += trace.max(0.0);
                continue;
            }
        };
        let mut history = cur.history.clone();
        history.push(k);
        let mut actors = cur.actors.clone();
        actors.push(node.party);
        let mut trajectory = cur.trajectory.clone();
        trajectory.push(point);
        let next = Cursor {
            history,
            actors,
            a,
            b,
            a_params,
            b_params,
            trajectory,
        };
        match node.children.get(&k) {
            Some(child) => visit(child, next, sim),
            None => {
                sim.nodes.insert(next.history.clone(), next.record(0));
                sim.leaves.push(BranchRecord {
                    stats: OutcomeStats::from_kraus(&next.a, &next.b),
                    history: next.history,
                    actors: next.actors,
                    cumulative_a: next.a,
                    cumulative_b: next.b,
                    a_params: next.a_params,
                    b_params: next.b_params,
                    trajectory: next.trajectory,
                });
            }
        }
    }
}

/// True iff every round moves only the acting party's coordinate and leaves
/// the other bitwise unchanged.
pub fn verify_zigzag(records: &[BranchRecord]) -> bool {
    records.iter().all(|rec| {
        rec.trajectory.len() == rec.actors.len() + 1
            && rec.actors.iter().enumerate().all(|(m, party)| {
                let (x0, y0) = rec.trajectory[m];
                let (x1, y1) = rec.trajectory[m + 1];
                match party {
                    Party::Alice => y0.to_bits() == y1.to_bits(),
                    Party::Bob => x0.to_bits() == x1.to_bits(),
                }
            })
    })
}

/// Partition of the leaves by where their trajectory first enters R+ ∪ R−.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaClassification {
    pub r: f64,
    pub gamma0: BTreeSet<History>,
    pub gamma_plus: BTreeSet<History>,
    pub gamma_minus: BTreeSet<History>,
    /// Prefixes at which Γ+ branches first enter (Γ′+).
    pub entry_plus: BTreeSet<History>,
    /// Prefixes at which Γ− branches first enter (Γ′−).
    pub entry_minus: BTreeSet<History>,
}

impl GammaClassification {
    pub fn class_of(&self, history: &History) -> Option<Sign> {
        if self.gamma_plus.contains(history) {
            Some(Sign::Plus)
        } else if self.gamma_minus.contains(history) {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    /// Largest entrywise mismatch of Σ_{Γ′±} Ĝ against Σ_{Γ±} Ĝ.
    pub fn entry_sum_defect(&self, sim: &Simulation) -> f64 {
        let sum = |set: &BTreeSet<History>| {
            set.iter()
                .filter_map(|h| sim.nodes.get(h))
                .fold(Mat4::zero(), |acc, n| acc + n.gram())
        };
        let plus = sum(&self.entry_plus).max_abs_diff(&sum(&self.gamma_plus));
        let minus = sum(&self.entry_minus).max_abs_diff(&sum(&self.gamma_minus));
        plus.max(minus)
    }
}

/// First-entry classification of every leaf for region parameter `r`.
///
/// Only trajectory nodes are tested: within a round γ± is affine in the
/// moving coordinate, so a segment meets a region only if an endpoint does.
pub fn classify(sim: &Simulation, r: f64) -> GammaClassification {
    let mut out = GammaClassification {
        r,
        gamma0: BTreeSet::new(),
        gamma_plus: BTreeSet::new(),
        gamma_minus: BTreeSet::new(),
        entry_plus: BTreeSet::new(),
        entry_minus: BTreeSet::new(),
    };
    for leaf in &sim.leaves {
        let entry = leaf.trajectory.iter().enumerate().find_map(|(l, &(x, y))| {
            if gamma_pm(x, y, r, Sign::Plus) >= 0.0 {
                Some((l, Sign::Plus))
            } else if gamma_pm(x, y, r, Sign::Minus) >= 0.0 {
                Some((l, Sign::Minus))
            } else {
                None
            }
        });
        match entry {
            None => {
                out.gamma0.insert(leaf.history.clone());
            }
            Some((l, Sign::Plus)) => {
                out.gamma_plus.insert(leaf.history.clone());
                out.entry_plus.insert(leaf.history[..l].to_vec());
            }
            Some((l, Sign::Minus)) => {
                out.gamma_minus.insert(leaf.history.clone());
                out.entry_minus.insert(leaf.history[..l].to_vec());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::NotApplicable => "n/a",
        })
    }
}

/// One audited inequality `lhs ≥ rhs` (or `lhs = rhs` for equalities).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub status: CheckStatus,
}

impl AuditCheck {
    fn at_least(name: &'static str, lhs: f64, rhs: f64, applicable: bool) -> Self {
        let status = if !applicable {
            CheckStatus::NotApplicable
        } else if lhs >= rhs - AUDIT_TOL {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name,
            lhs,
            rhs,
            status,
        }
    }

    fn equal(name: &'static str, lhs: f64, rhs: f64, tol: f64) -> Self {
        let status = if (lhs - rhs).abs() <= tol {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name,
            lhs,
            rhs,
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    /// Σ q over leaves with p ≤ 1e-12.
    pub efficiency: f64,
    pub meets_efficiency: bool,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Evaluates the chain of inequalities that bounds any LOCC protocol:
///
/// * `landing`: every discriminating leaf is in Γ+ ∪ Γ−;
/// * `entry_sums`: Σ_{Γ′±} Ĝ = Σ_{Γ±} Ĝ;
/// * `q_sum`: q+ + q− ≥ Q (needs the efficiency condition);
/// * `p_plus_ratio`, `p_minus_ratio`: p± ≥ (1−r)/(1+r)·q±;
/// * `f_plus`, `f_minus`: Σ_{Γ±} f±(Ĝ) ≥ 0;
/// * `p_lower`: Σ_{(x,y) ∈ R+^α ∪ R−^α} p ≥ [2α/(1−r²+2α)]·[(1−r)/(1+r)]·Q
///   (needs the efficiency condition).
pub fn audit_inequalities(
    sim: &Simulation,
    class: &GammaClassification,
    q: f64,
    r: f64,
    alpha: f64,
) -> Result<AuditReport, GapError> {
    check_feasible(q, r, alpha)?;
    let owned;
    let class = if class.r == r {
        class
    } else {
        owned = classify(sim, r);
        &owned
    };
    let efficiency: f64 = sim
        .leaves
        .iter()
        .filter(|l| l.stats.is_discriminating())
        .map(|l| l.stats.q)
        .fold(0.0, |acc, v| acc + v);
    let meets = efficiency >= q - PROB_ZERO;

    let discriminating: Vec<&BranchRecord> =
        sim.leaves.iter().filter(|l| l.stats.is_discriminating()).collect();
    let landed = discriminating
        .iter()
        .filter(|l| class.class_of(&l.history).is_some())
        .count();

    let mut p_side = [0.0; 2];
    let mut q_side = [0.0; 2];
    let mut f_side = [0.0; 2];
    let mut p_enlarged = 0.0;
    for leaf in &sim.leaves {
        let (x, y) = leaf.point();
        let g = leaf.gram();
        if let Some(sign) = class.class_of(&leaf.history) {
            let i = (sign == Sign::Minus) as usize;
            p_side[i] += p_of_operator(&g);
            q_side[i] += q_of_operator(&g);
            f_side[i] += f_pm_operator(&g, r, sign);
        }
        if in_enlarged_region(x, y, r, alpha, Sign::Plus)
            || in_enlarged_region(x, y, r, alpha, Sign::Minus)
        {
            p_enlarged += leaf.stats.p;
        }
    }
    let ratio = (1.0 - r) / (1.0 + r);
    let checks = vec![
        AuditCheck::at_least("landing", landed as f64, discriminating.len() as f64, true),
        AuditCheck::equal("entry_sums", class.entry_sum_defect(sim), 0.0, COMPLETENESS_TOL),
        AuditCheck::at_least("q_sum", q_side[0] + q_side[1], q, meets),
        AuditCheck::at_least("p_plus_ratio", p_side[0], ratio * q_side[0], true),
        AuditCheck::at_least("p_minus_ratio", p_side[1], ratio * q_side[1], true),
        AuditCheck::at_least("f_plus", f_side[0], 0.0, true),
        AuditCheck::at_least("f_minus", f_side[1], 0.0, true),
        AuditCheck::at_least("p_lower", p_enlarged, prefactor(r, alpha) * q, meets),
    ];
    Ok(AuditReport {
        efficiency,
        meets_efficiency: meets,
        checks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EbarLocc {
    /// Ē from the true post-measurement concurrences.
    pub ebar: f64,
    /// Σ_{p ≠ 0} p·𝓔(C(x, y)), an upper bound on `ebar`.
    pub bound: f64,
}

/// Mean residual entanglement of the simulated leaves.
pub fn ebar_locc<M: EntanglementMeasure + ?Sized>(sim: &Simulation, m: &M) -> EbarLocc {
    let mut ebar = 0.0;
    let mut bound = 0.0;
    for leaf in &sim.leaves {
        if leaf.stats.is_discriminating() {
            continue;
        }
        ebar += leaf.stats.residual(m);
        let (x, y) = leaf.point();
        if let Ok(c) = c_bound(x, y) {
            bound += leaf.stats.p * m.eval(c);
        }
    }
    EbarLocc { ebar, bound }
}

/// Named fixture families.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolFamily {
    /// Alternating Z measurements, Alice first, on every branch.
    ProjectiveZZ { depth: usize },
    /// One partial-strength diagonal round per angle, alternating parties.
    PartialDiagonal { thetas: Vec<f64>, first: Party },
    /// Seeded random tree mixing projective, diagonal and general instruments.
    Random {
        seed: u64,
        depth: usize,
        branching: usize,
    },
}

impl FromStr for ProtocolFamily {
    type Err = LoccError;

    /// `projective-zz:<depth>`, `partial-diagonal:<θ1>,<θ2>,…[:bob]`,
    /// `random:<seed>:<depth>:<branching>`.
    fn from_str(s: &str) -> Result<Self, LoccError> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let args: Vec<&str> = parts.collect();
        let bad = |msg: &str| LoccError::BadFamilyParams(format!("{s}: {msg}"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad("expected an integer"));
        match name {
            "projective-zz" => {
                let depth = args.first().map_or(Ok(2), |v| int(v))?;
                Ok(ProtocolFamily::ProjectiveZZ { depth })
            }
            "partial-diagonal" => {
                let thetas = args
                    .first()
                    .ok_or_else(|| bad("missing angle list"))?
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| bad("bad angle")))
                    .collect::<Result<Vec<_>, _>>()?;
                let first = match args.get(1).copied() {
                    None | Some("alice") => Party::Alice,
                    Some("bob") => Party::Bob,
                    Some(_) => return Err(bad("first party must be alice or bob")),
                };
                Ok(ProtocolFamily::PartialDiagonal { thetas, first })
            }
            "random" => {
                if args.len() != 3 {
                    return Err(bad("expected random:<seed>:<depth>:<branching>"));
                }
                Ok(ProtocolFamily::Random {
                    seed: args[0].parse().map_err(|_| bad("bad seed"))?,
                    depth: int(args[1])?,
                    branching: int(args[2])?,
                })
            }
            other => Err(LoccError::UnknownFamily(other.to_string())),
        }
    }
}

fn full_tree<F>(party: Party, depth: usize, make: &mut F) -> ProtocolNode
where
    F: FnMut(usize) -> LocalInstrument,
{
    let level = 0;
    full_tree_at(party, depth, level, make)
}

fn full_tree_at<F>(party: Party, depth: usize, level: usize, make: &mut F) -> ProtocolNode
where
    F: FnMut(usize) -> LocalInstrument,
{
    let instrument = make(level);
    let mut children = BTreeMap::new();
    if level + 1 < depth {
        for k in 0..instrument.len() {
            children.insert(k, full_tree_at(party.other(), depth, level + 1, make));
        }
    }
    ProtocolNode {
        party,
        instrument,
        children,
    }
}

fn random_tree(rng: &mut ChaCha8Rng, party: Party, depth_left: usize, branching: usize) -> ProtocolNode {
    let kind: f64 = rng.random();
    let instrument = if kind < 0.3 {
        LocalInstrument::projective_z()
    } else {
        let outcomes = rng.random_range(2..=branching.max(2));
        if kind < 0.7 {
            LocalInstrument::random_diagonal(rng, outcomes, 0.2)
        } else {
            LocalInstrument::random_general(rng, outcomes)
        }
    };
    let mut children = BTreeMap::new();
    if depth_left > 1 {
        for k in 0..instrument.len() {
            if rng.random_bool(0.75) {
                children.insert(k, random_tree(rng, party.other(), depth_left - 1, branching));
            }
        }
    }
    ProtocolNode {
        party,
        instrument,
        children,
    }
}

/// Builds a fixture protocol.
pub fn build_protocol_family(family: &ProtocolFamily) -> Result<LoccProtocol, LoccError> {
    match family {
        ProtocolFamily::ProjectiveZZ { depth } => {
            if *depth == 0 {
                return Err(LoccError::BadFamilyParams("depth must be at least 1".into()));
            }
            let root = full_tree(Party::Alice, *depth, &mut |_| LocalInstrument::projective_z());
            LoccProtocol::new(root, (*depth).max(DEFAULT_MAX_DEPTH))
        }
        ProtocolFamily::PartialDiagonal { thetas, first } => {
            if thetas.is_empty() || thetas.iter().any(|t| !t.is_finite()) {
                return Err(LoccError::BadFamilyParams("need finite angles".into()));
            }
            let root = full_tree(*first, thetas.len(), &mut |level| {
                LocalInstrument::partial_diagonal(thetas[level])
            });
            LoccProtocol::new(root, thetas.len().max(DEFAULT_MAX_DEPTH))
        }
        ProtocolFamily::Random {
            seed,
            depth,
            branching,
        } => {
            if *depth == 0 || *branching < 2 {
                return Err(LoccError::BadFamilyParams(
                    "depth ≥ 1 and branching ≥ 2 required".into(),
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let first = if rng.random_bool(0.5) { Party::Alice } else { Party::Bob };
            let root = random_tree(&mut rng, first, *depth, *branching);
            LoccProtocol::new(root, (*depth).max(DEFAULT_MAX_DEPTH))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::EqMeasure;

    fn zz(depth: usize) -> LoccProtocol {
        build_protocol_family(&ProtocolFamily::ProjectiveZZ { depth }).unwrap()
    }

    #[test]
    fn single_projective_round() {
        let sim = simulate(&zz(1)).unwrap();
        assert_eq!(sim.leaves.len(), 2);
        let pts: Vec<_> = sim.leaves.iter().map(|l| l.point()).collect();
        assert_eq!(pts, vec![(1.0, 0.0), (-1.0, 0.0)]);
        for l in &sim.leaves {
            assert_eq!(l.w(), 0.5);
            assert!((l.stats.p - 0.5).abs() < 1e-15);
            assert!((l.stats.q - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn four_corner_protocol() {
        let sim = simulate(&zz(2)).unwrap();
        assert_eq!(sim.leaves.len(), 4);
        for l in &sim.leaves {
            let (x, y) = l.point();
            assert_eq!(l.w(), 0.25);
            if x == y {
                assert!((l.stats.p - 0.5).abs() < 1e-15);
                assert_eq!(l.stats.q, 0.0);
            } else {
                assert_eq!(l.stats.p, 0.0);
                assert!((l.stats.q - 0.5).abs() < 1e-15);
            }
        }
        assert!(sim.completeness_defect() < 1e-15);
        assert!(verify_zigzag(&sim.leaves));
    }

    #[test]
    fn deeper_zz_prunes_null_branches() {
        let sim = simulate(&zz(3)).unwrap();
        assert_eq!(sim.leaves.len(), 4);
        assert_eq!(sim.pruned, 4);
        assert_eq!(sim.pruned_trace, 0.0);
        assert!(sim.completeness_defect() < 1e-15);
    }

    #[test]
    fn diagonal_protocols_stay_diagonal() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let root = full_tree(Party::Bob, 4, &mut |_| {
                LocalInstrument::random_diagonal(&mut rng, 3, 0.1)
            });
            let sim = simulate(&LoccProtocol::new(root, 8).unwrap()).unwrap();
            for l in &sim.leaves {
                assert_eq!(l.a_params.xi, Complex64::new(0.0, 0.0));
                assert_eq!(l.b_params.xi, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn partial_diagonal_first_step() {
        let thetas = vec![0.3, 0.5, 0.2];
        let proto = build_protocol_family(&ProtocolFamily::PartialDiagonal {
            thetas: thetas.clone(),
            first: Party::Alice,
        })
        .unwrap();
        let sim = simulate(&proto).unwrap();
        assert_eq!(sim.leaves.len(), 8);
        let first = &sim.leaves[0];
        assert!((first.trajectory[1].0 - (2.0 * thetas[0]).cos()).abs() < 1e-15);
        assert!((first.trajectory[2].1 - (2.0 * thetas[1]).cos()).abs() < 1e-15);
        // Alice again: cos²θ₀cos²θ₂ vs sin²θ₀sin²θ₂.
        let (c0, s0) = (thetas[0].cos().powi(2), thetas[0].sin().powi(2));
        let (c2, s2) = (thetas[2].cos().powi(2), thetas[2].sin().powi(2));
        let x3 = (c0 * c2 - s0 * s2) / (c0 * c2 + s0 * s2);
        assert!((first.trajectory[3].0 - x3).abs() < 1e-14);
    }

    #[test]
    fn zigzag_negative_control() {
        let sim = simulate(&zz(2)).unwrap();
        let mut bad = sim.leaves.clone();
        // Round 0 is Alice's; perturb y there.
        bad[0].trajectory[1].1 = 0.25;
        assert!(!verify_zigzag(&bad));
    }

    #[test]
    fn random_protocols_are_reproducible_and_consistent() {
        for seed in 0..50 {
            let family = ProtocolFamily::Random {
                seed,
                depth: 6,
                branching: 3,
            };
            let p1 = build_protocol_family(&family).unwrap();
            let p2 = build_protocol_family(&family).unwrap();
            assert_eq!(p1, p2);
            let sim = simulate(&p1).unwrap();
            assert!(verify_zigzag(&sim.leaves));
            assert!(sim.completeness_defect() < 1e-10);
            assert!(sim.parent_child_defect() < 1e-10);
            assert!(sim.recomputed_trajectory_defect() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn classification_examples() {
        // Alice measures Z, then Bob measures Z on her outcome-0 branch only.
        let mut root = ProtocolNode::leaf_round(Party::Alice, LocalInstrument::projective_z());
        root.children
            .insert(0, ProtocolNode::leaf_round(Party::Bob, LocalInstrument::projective_z()));
        root.children
            .insert(1, ProtocolNode::leaf_round(Party::Bob, LocalInstrument::projective_z()));
        let sim = simulate(&LoccProtocol::new(root, 8).unwrap()).unwrap();
        let c = classify(&sim, 0.7);
        // (0,0)→(1,0)→(1,−1): enters R+ at (1,0).
        assert!(c.gamma_plus.contains(&vec![0, 1]));
        assert!(c.entry_plus.contains(&vec![0]));
        // (0,0)→(−1,0)→(−1,1): enters R− at (−1,0).
        assert!(c.gamma_minus.contains(&vec![1, 0]));
        assert!(c.entry_minus.contains(&vec![1]));
        assert!(c.entry_sum_defect(&sim) < 1e-15);

        let id = simulate(&LoccProtocol::identity()).unwrap();
        let c = classify(&id, 0.7);
        assert_eq!(c.gamma0.len(), 1);
        assert!(c.gamma_plus.is_empty() && c.gamma_minus.is_empty());
    }

    #[test]
    fn audit_of_four_corner_protocol() {
        let sim = simulate(&zz(2)).unwrap();
        let c = classify(&sim, 0.7);
        let rep = audit_inequalities(&sim, &c, 0.2, 0.7, 0.08).unwrap();
        assert!((rep.efficiency - 1.0).abs() < 1e-15);
        assert!(rep.meets_efficiency);
        assert!(rep.all_passed(), "{rep:?}");
        let qs = rep.check("q_sum").unwrap();
        assert!((qs.lhs - 1.0).abs() < 1e-15);
    }

    #[test]
    fn audit_rejects_infeasible_parameters() {
        let sim = simulate(&zz(2)).unwrap();
        let c = classify(&sim, 0.7);
        assert!(matches!(
            audit_inequalities(&sim, &c, 0.2, 0.3, 0.08),
            Err(GapError::RadiusInfeasible { .. })
        ));
        assert!(matches!(
            audit_inequalities(&sim, &c, 0.2, 0.7, 0.5),
            Err(GapError::AlphaInfeasible { .. })
        ));
    }

    #[test]
    fn identity_protocol_audit_not_applicable() {
        let sim = simulate(&LoccProtocol::identity()).unwrap();
        let c = classify(&sim, 0.7);
        let rep = audit_inequalities(&sim, &c, 0.2, 0.7, 0.08).unwrap();
        assert!(!rep.meets_efficiency);
        assert_eq!(rep.check("q_sum").unwrap().status, CheckStatus::NotApplicable);
        assert_eq!(rep.check("p_lower").unwrap().status, CheckStatus::NotApplicable);
        assert!(rep.all_passed());
    }

    #[test]
    fn ebar_examples() {
        let m = EqMeasure::new(0.2).unwrap();
        let id = ebar_locc(&simulate(&LoccProtocol::identity()).unwrap(), &m);
        assert!((id.ebar - m.eval(1.0)).abs() < 1e-15);
        let zz2 = ebar_locc(&simulate(&zz(2)).unwrap(), &m);
        assert_eq!(zz2.ebar, 0.0);
        assert_eq!(zz2.bound, 0.0);
    }

    #[test]
    fn malformed_protocols_rejected() {
        let mut root = ProtocolNode::leaf_round(Party::Alice, LocalInstrument::projective_z());
        root.children
            .insert(0, ProtocolNode::leaf_round(Party::Alice, LocalInstrument::projective_z()));
        assert!(matches!(
            LoccProtocol::new(root.clone(), 8),
            Err(LoccError::NonAlternating { .. })
        ));
        root.children.clear();
        root.children
            .insert(5, ProtocolNode::leaf_round(Party::Bob, LocalInstrument::projective_z()));
        assert!(matches!(
            LoccProtocol::new(root, 8),
            Err(LoccError::ChildOutOfRange { key: 5, .. })
        ));
        assert!(matches!(
            LocalInstrument::new(vec![LocalOperator::diag(1.0, 0.5)]),
            Err(LoccError::Incomplete { .. })
        ));
        let deep = zz(4);
        assert!(matches!(
            LoccProtocol::new(deep.root().clone(), 3),
            Err(LoccError::TooDeep { depth: 4, max: 3 })
        ));
    }

    #[test]
    fn family_parsing() {
        assert_eq!(
            "projective-zz:2".parse::<ProtocolFamily>().unwrap(),
            ProtocolFamily::ProjectiveZZ { depth: 2 }
        );
        assert_eq!(
            "random:7:6:3".parse::<ProtocolFamily>().unwrap(),
            ProtocolFamily::Random {
                seed: 7,
                depth: 6,
                branching: 3
            }
        );
        assert!(matches!(
            "partial-diagonal:0.1,0.2:bob".parse::<ProtocolFamily>().unwrap(),
            ProtocolFamily::PartialDiagonal { first: Party::Bob, .. }
        ));
        assert!(matches!(
            "teleport:1".parse::<ProtocolFamily>(),
            Err(LoccError::UnknownFamily(_))
        ));
        assert!("random:1:2".parse::<ProtocolFamily>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let proto = build_protocol_family(&ProtocolFamily::Random {
            seed: 3,
            depth: 4,
            branching: 3,
        })
        .unwrap();
        let back = LoccProtocol::from_json(&proto.to_json(), DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(proto, back);
        let bad = r#"{"party": "alice", "kraus": [[[1,0],[0,0],[0,0],[1,0]]], "children": {"x": {"party": "bob", "kraus": [[[1,0],[0,0],[0,0],[1,0]]]}}}"#;
        assert!(matches!(LoccProtocol::from_json(bad, 8), Err(LoccError::Json(_))));
    }
}
