//! Classical counterpart: Alice holds bit `i`, Bob holds bit `j`, and they
//! publicly announce outcomes. A channel P(k|ij) scores like the quantum task
//! with p_k = [P(k|00) + P(k|11)]/2, q_k = [P(k|01) + P(k|10)]/2 and residual
//! privacy K(λ_k), λ_k = P(k|00)/(2p_k).
//!
//! Public-communication (PC) protocols compile to diagonal-Kraus LOCC
//! protocols that reproduce these numbers on the quantum task.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::locc::{LocalInstrument, LoccError, LoccProtocol, Party, ProtocolNode, DEFAULT_MAX_DEPTH};
use crate::measures::{privacy_k, EntanglementMeasure, MeasureError};
use crate::separable::optimal_parameters;
use crate::PROB_ZERO;

/// Normalization tolerance of distributions and channels.
pub const NORM_TOL: f64 = 1e-12;

/// Residual bound for the product-form witness.
pub const WITNESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassicalError {
    #[error("distribution for bit {bit} at {history:?} is not normalized or has negative entries")]
    InvalidDistribution { history: Vec<usize>, bit: usize },
    #[error("per-bit distributions at {history:?} have different lengths")]
    LengthMismatch { history: Vec<usize> },
    #[error("parties do not alternate at {history:?}")]
    NonAlternating { history: Vec<usize> },
    #[error("child key {key} at {history:?} has no matching outcome")]
    ChildOutOfRange { history: Vec<usize>, key: usize },
    #[error("protocol depth {depth} exceeds the maximum {max}")]
    TooDeep { depth: usize, max: usize },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid separable agent: {0}")]
    InvalidAgent(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Locc(#[from] LoccError),
}

/// Index of input pair (i, j) in a channel table.
pub fn pair_index(i: usize, j: usize) -> usize {
    2 * i + j
}

const PAIR_KEYS: [&str; 4] = ["00", "01", "10", "11"];

/// Conditional distribution P(k|ij) over a finite list of labelled outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalChannel {
    outcomes: Vec<Vec<usize>>,
    /// `table[2i + j][k]`
    table: [Vec<f64>; 4],
}

impl ClassicalChannel {
    pub fn new(outcomes: Vec<Vec<usize>>, table: [Vec<f64>; 4]) -> Result<Self, ClassicalError> {
        for (ij, row) in table.iter().enumerate() {
            if row.len() != outcomes.len() {
                return Err(ClassicalError::InvalidChannel(format!(
                    "row {} has {} entries for {} outcomes",
                    PAIR_KEYS[ij],
                    row.len(),
                    outcomes.len()
                )));
            }
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(ClassicalError::InvalidChannel(format!(
                    "row {} has a negative or non-finite entry",
                    PAIR_KEYS[ij]
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > NORM_TOL {
                return Err(ClassicalError::InvalidChannel(format!(
                    "row {} sums to {s}",
                    PAIR_KEYS[ij]
                )));
            }
        }
        Ok(Self { outcomes, table })
    }

    pub fn outcomes(&self) -> &[Vec<usize>] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// P(k|ij)
    pub fn prob(&self, k: usize, i: usize, j: usize) -> f64 {
        self.table[pair_index(i, j)][k]
    }

    /// Row of the table for outcome `k`, ordered 00, 01, 10, 11.
    pub fn column(&self, k: usize) -> [f64; 4] {
        std::array::from_fn(|ij| self.table[ij][k])
    }

    /// Position of an outcome label.
    pub fn find(&self, label: &[usize]) -> Option<usize> {
        self.outcomes.iter().position(|o| o == label)
    }

    /// Announce Alice's bit (one outcome per bit).
    pub fn full_reveal_alice() -> Self {
        Self::new(
            vec![vec![0], vec![1]],
            [vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        )
        .expect("valid")
    }

    /// Announce both bits.
    pub fn full_reveal_both() -> Self {
        let outcomes = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        let table = std::array::from_fn(|ij| (0..4).map(|k| if k == ij { 1.0 } else { 0.0 }).collect());
        Self::new(outcomes, table).expect("valid")
    }

    /// A fair coin independent of the inputs.
    pub fn uniform_coin() -> Self {
        Self::new(vec![vec![0], vec![1]], std::array::from_fn(|_| vec![0.5, 0.5])).expect("valid")
    }

    pub fn to_json(&self) -> String {
        let table = PAIR_KEYS
            .iter()
            .zip(&self.table)
            .map(|(k, row)| (k.to_string(), row.clone()))
            .collect();
        serde_json::to_string_pretty(&ChannelJson {
            outcomes: self.outcomes.clone(),
            table,
        })
        .expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, ClassicalError> {
        let mut raw: ChannelJson = serde_json::from_str(s).map_err(|e| ClassicalError::Json(e.to_string()))?;
        let mut rows = Vec::with_capacity(4);
        for key in PAIR_KEYS {
            rows.push(
                raw.table
                    .remove(key)
                    .ok_or_else(|| ClassicalError::Json(format!("missing table row `{key}`")))?,
            );
        }
        let table: [Vec<f64>; 4] = rows.try_into().expect("four rows");
        Self::new(raw.outcomes, table)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChannelJson {
    outcomes: Vec<Vec<usize>>,
    table: BTreeMap<String, Vec<f64>>,
}

/// Per-outcome scores of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalStats {
    pub p_cl: f64,
    pub q_cl: f64,
    /// Undefined where p_cl ≤ 1e-12.
    pub lambda_cl: Option<f64>,
}

pub fn channel_stats(ch: &ClassicalChannel) -> Vec<ClassicalStats> {
    (0..ch.len())
        .map(|k| {
            let [p00, p01, p10, p11] = ch.column(k);
            let p_cl = (p00 + p11) / 2.0;
            let q_cl = (p01 + p10) / 2.0;
            let lambda_cl = (p_cl > PROB_ZERO).then(|| (p00 / (2.0 * p_cl)).clamp(0.0, 1.0));
            ClassicalStats { p_cl, q_cl, lambda_cl }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KbarReport {
    pub kbar: f64,
    /// Σ q_cl over outcomes with p_cl ≤ 1e-12.
    pub efficiency: f64,
    pub meets_efficiency: bool,
}

/// Mean residual privacy K̄ = Σ p_cl K(λ_cl).
pub fn kbar<M: EntanglementMeasure + ?Sized>(
    ch: &ClassicalChannel,
    m: &M,
    q: f64,
) -> Result<KbarReport, ClassicalError> {
    let mut kbar = 0.0;
    let mut efficiency = 0.0;
    for s in channel_stats(ch) {
        match s.lambda_cl {
            Some(l) => kbar += s.p_cl * privacy_k(l, m)?,
            None => efficiency += s.q_cl,
        }
    }
    Ok(KbarReport {
        kbar,
        efficiency,
        meets_efficiency: efficiency >= q - PROB_ZERO,
    })
}

/// Helper agent announcing k with p(k|ij) = w_k[1 + (−1)^i x_k][1 + (−1)^j y_k].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalSeparableAgent {
    elements: Vec<(f64, f64, f64)>,
}

impl ClassicalSeparableAgent {
    pub fn new(elements: Vec<(f64, f64, f64)>) -> Result<Self, ClassicalError> {
        for &(w, x, y) in &elements {
            if !(w >= 0.0 && x.abs() <= 1.0 && y.abs() <= 1.0) {
                return Err(ClassicalError::InvalidAgent(format!("bad element ({w}, {x}, {y})")));
            }
        }
        let agent = Self { elements };
        agent.channel()?;
        Ok(agent)
    }

    pub fn elements(&self) -> &[(f64, f64, f64)] {
        &self.elements
    }

    pub fn prob(&self, k: usize, i: usize, j: usize) -> f64 {
        let (w, x, y) = self.elements[k];
        let si = if i == 0 { 1.0 } else { -1.0 };
        let sj = if j == 0 { 1.0 } else { -1.0 };
        w * (1.0 + si * x) * (1.0 + sj * y)
    }

    pub fn channel(&self) -> Result<ClassicalChannel, ClassicalError> {
        let n = self.elements.len();
        let outcomes = (0..n).map(|k| vec![k]).collect();
        let table = std::array::from_fn(|ij| (0..n).map(|k| self.prob(k, ij / 2, ij % 2)).collect());
        ClassicalChannel::new(outcomes, table)
    }
}

/// The agent with the parameters of the optimal separable instrument.
pub fn build_classical_separable(q: f64) -> Result<ClassicalSeparableAgent, ClassicalError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(MeasureError::EfficiencyOutOfRange(q).into());
    }
    ClassicalSeparableAgent::new(optimal_parameters(q).to_vec())
}

/// True iff P(k|00)P(k|11) = P(k|01)P(k|10) for every k.
pub fn is_product_form(ch: &ClassicalChannel, tol: f64) -> bool {
    (0..ch.len()).all(|k| {
        let [p00, p01, p10, p11] = ch.column(k);
        (p00 * p11 - p01 * p10).abs() <= tol
    })
}

/// Per-outcome (w, x, y) fitted to the marginal moments, and the largest
/// absolute reconstruction error over the table.
pub fn product_witness(ch: &ClassicalChannel) -> (Vec<(f64, f64, f64)>, f64) {
    let mut residual: f64 = 0.0;
    let fits = (0..ch.len())
        .map(|k| {
            let [p00, p01, p10, p11] = ch.column(k);
            let total = p00 + p01 + p10 + p11;
            if total <= 0.0 {
                return (0.0, 0.0, 0.0);
            }
            let w = total / 4.0;
            let x = (p00 + p01 - p10 - p11) / total;
            let y = (p00 - p01 + p10 - p11) / total;
            for (ij, p) in [p00, p01, p10, p11].into_iter().enumerate() {
                let si = if ij / 2 == 0 { 1.0 } else { -1.0 };
                let sj = if ij % 2 == 0 { 1.0 } else { -1.0 };
                residual = residual.max((w * (1.0 + si * x) * (1.0 + sj * y) - p).abs());
            }
            (w, x, y)
        })
        .collect();
    (fits, residual)
}

/// The channel is reachable by a separable helper agent.
pub fn is_separable_channel(ch: &ClassicalChannel) -> bool {
    is_product_form(ch, NORM_TOL) && product_witness(ch).1 <= WITNESS_TOL
}

/// One announcement: the speaker's distribution over outcomes for each value
/// of their own bit, and continuations by outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PcNode {
    pub party: Party,
    pub probs: [Vec<f64>; 2],
    pub children: BTreeMap<usize, PcNode>,
}

impl PcNode {
    pub fn leaf_round(party: Party, probs: [Vec<f64>; 2]) -> Self {
        Self {
            party,
            probs,
            children: BTreeMap::new(),
        }
    }

    pub fn outcomes(&self) -> usize {
        self.probs[0].len()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.values().map(|c| c.depth()).max().unwrap_or(0)
    }
}

/// Alternating public-communication protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct PcProtocol {
    root: PcNode,
    max_depth: usize,
}

impl PcProtocol {
    pub fn new(root: PcNode, max_depth: usize) -> Result<Self, ClassicalError> {
        let proto = Self { root, max_depth };
        proto.validate()?;
        Ok(proto)
    }

    pub fn root(&self) -> &PcNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn validate(&self) -> Result<(), ClassicalError> {
        let depth = self.depth();
        if depth > self.max_depth {
            return Err(ClassicalError::TooDeep {
                depth,
                max: self.max_depth,
            });
        }
        fn walk(node: &PcNode, history: &mut Vec<usize>) -> Result<(), ClassicalError> {
            if node.probs[0].is_empty() || node.probs[0].len() != node.probs[1].len() {
                return Err(ClassicalError::LengthMismatch {
                    history: history.clone(),
                });
            }
            for (bit, dist) in node.probs.iter().enumerate() {
                let ok = dist.iter().all(|&v| v >= 0.0 && v.is_finite())
                    && (dist.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL;
                if !ok {
                    return Err(ClassicalError::InvalidDistribution {
                        history: history.clone(),
                        bit,
                    });
                }
            }
            for (&k, child) in &node.children {
                if k >= node.outcomes() {
                    return Err(ClassicalError::ChildOutOfRange {
                        history: history.clone(),
                        key: k,
                    });
                }
                history.push(k);
                if child.party == node.party {
                    return Err(ClassicalError::NonAlternating {
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

    /// Alice announces her bit.
    pub fn full_reveal() -> Self {
        Self {
            root: PcNode::leaf_round(Party::Alice, [vec![1.0, 0.0], vec![0.0, 1.0]]),
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    /// Alice then Bob announce their bits.
    pub fn full_reveal_both() -> Self {
        let reveal = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let mut root = PcNode::leaf_round(Party::Alice, reveal.clone());
        for k in 0..2 {
            root.children.insert(k, PcNode::leaf_round(Party::Bob, reveal.clone()));
        }
        Self {
            root,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    /// Alice announces a fair coin.
    pub fn uniform_coin() -> Self {
        Self {
            root: PcNode::leaf_round(Party::Alice, [vec![0.5, 0.5], vec![0.5, 0.5]]),
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PcNodeJson::from(&self.root)).expect("serializable")
    }

    pub fn from_json(s: &str, max_depth: usize) -> Result<Self, ClassicalError> {
        let node: PcNodeJson = serde_json::from_str(s).map_err(|e| ClassicalError::Json(e.to_string()))?;
        Self::new(node.try_into()?, max_depth)
    }
}

/// Wire form of a PC round: `probs[b]` is the outcome distribution when the
/// speaker's bit is `b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcNodeJson {
    pub party: Party,
    pub probs: [Vec<f64>; 2],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub children: BTreeMap<String, PcNodeJson>,
}

impl From<&PcNode> for PcNodeJson {
    fn from(node: &PcNode) -> Self {
        Self {
            party: node.party,
            probs: node.probs.clone(),
            children: node
                .children
                .iter()
                .map(|(k, c)| (k.to_string(), PcNodeJson::from(c)))
                .collect(),
        }
    }
}

impl TryFrom<PcNodeJson> for PcNode {
    type Error = ClassicalError;

    fn try_from(node: PcNodeJson) -> Result<Self, ClassicalError> {
        let mut children = BTreeMap::new();
        for (key, child) in node.children {
            let k: usize = key
                .parse()
                .map_err(|_| ClassicalError::Json(format!("outcome key `{key}` is not a decimal index")))?;
            children.insert(k, child.try_into()?);
        }
        Ok(Self {
            party: node.party,
            probs: node.probs,
            children,
        })
    }
}

/// Channel induced by a PC protocol: P(k|ij) is the product of round
/// probabilities along the history k. Histories with zero probability for
/// every input pair are dropped.
pub fn channel_of_pc(proto: &PcProtocol) -> Result<ClassicalChannel, ClassicalError> {
    proto.validate()?;
    fn walk(node: &PcNode, history: &mut Vec<usize>, weight: [f64; 4], out: &mut Vec<(Vec<usize>, [f64; 4])>) {
        for k in 0..node.outcomes() {
            let next: [f64; 4] = std::array::from_fn(|ij| {
                let own = match node.party {
                    Party::Alice => ij / 2,
                    Party::Bob => ij % 2,
                };
                weight[ij] * node.probs[own][k]
            });
            if next.iter().all(|&v| v <= 0.0) {
                continue;
            }
            history.push(k);
            match node.children.get(&k) {
                Some(child) => walk(child, history, next, out),
                None => out.push((history.clone(), next)),
            }
            history.pop();
        }
    }
    let mut leaves = Vec::new();
    walk(&proto.root, &mut Vec::new(), [1.0; 4], &mut leaves);
    let table = std::array::from_fn(|ij| leaves.iter().map(|(_, w)| w[ij]).collect());
    ClassicalChannel::new(leaves.into_iter().map(|(h, _)| h).collect(), table)
}

/// Diagonal-Kraus LOCC protocol with the same tree: the speaker's round
/// becomes Kraus diag(√P(k|0), √P(k|1)) on their qubit.
pub fn compile_pc_to_locc(proto: &PcProtocol) -> Result<LoccProtocol, ClassicalError> {
    proto.validate()?;
    fn convert(node: &PcNode) -> Result<ProtocolNode, ClassicalError> {
        let instrument = LocalInstrument::from_diagonal_probabilities(&node.probs[0], &node.probs[1])?;
        let children = node
            .children
            .iter()
            .map(|(&k, c)| Ok((k, convert(c)?)))
            .collect::<Result<_, ClassicalError>>()?;
        Ok(ProtocolNode {
            party: node.party,
            instrument,
            children,
        })
    }
    Ok(LoccProtocol::new(convert(&proto.root)?, proto.max_depth)?)
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|a| a / s).collect()
}

fn random_pc_node(rng: &mut ChaCha8Rng, party: Party, depth_left: usize, branching: usize) -> PcNode {
    let probs = if rng.random_bool(0.3) {
        [vec![1.0, 0.0], vec![0.0, 1.0]]
    } else {
        let n = rng.random_range(2..=branching.max(2));
        [dirichlet(rng, n), dirichlet(rng, n)]
    };
    let mut children = BTreeMap::new();
    if depth_left > 1 {
        for k in 0..probs[0].len() {
            if rng.random_bool(0.75) {
                children.insert(k, random_pc_node(rng, party.other(), depth_left - 1, branching));
            }
        }
    }
    PcNode {
        party,
        probs,
        children,
    }
}

/// Seeded random PC protocol of depth ≤ `depth`. Rounds are either a full
/// reveal of the speaker's bit or normalized exponential samples.
pub fn random_pc_protocol(seed: u64, depth: usize, branching: usize) -> Result<PcProtocol, ClassicalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = if rng.random_bool(0.5) { Party::Alice } else { Party::Bob };
    let root = random_pc_node(&mut rng, first, depth.max(1), branching);
    PcProtocol::new(root, depth.max(1).max(DEFAULT_MAX_DEPTH))
}
