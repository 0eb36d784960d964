//! Separable instruments in the `(w, x, y, ξ, η)` product parametrization.
//!
//! An element `Ĝ = w·[[1+x, ξ], [ξ*, 1−x]] ⊗ [[1+y, η], [η*, 1−y]]` is a
//! POVM element of a product Kraus operator `Â ⊗ B̂`. On the discrimination
//! task (Bell states |Φ±⟩ versus |01⟩, |10⟩) the outcome probabilities only
//! see the diagonal: `p = w(1+xy)` and `q = w(1−xy)`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{
    apply_product_kraus, gram_params, AlgebraError, LocalGramParams, LocalOperator, Mat4,
    TwoQubitPureState,
};
use crate::measures::EntanglementMeasure;
use crate::{COMPLETENESS_TOL, DIVISOR_GUARD, PROB_ZERO};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeparableError {
    #[error("invalid element: {0}")]
    InvalidElement(String),
    #[error("instrument is incomplete: Σ G differs from identity by {defect:e}")]
    Incomplete { defect: f64 },
    #[error("1 + xy = {0:e} is on the discriminating ray; C(x, y) is undefined")]
    DiscriminatingRay(f64),
    #[error("efficiency Q = {0} outside the open interval (0, 1)")]
    EfficiencyOutOfRange(f64),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("malformed instrument JSON: {0}")]
    Json(String),
}

/// One product POVM element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableElement {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub xi: Complex64,
    pub eta: Complex64,
}

const SLACK: f64 = 1e-12;

impl SeparableElement {
    pub fn new(w: f64, x: f64, y: f64, xi: Complex64, eta: Complex64) -> Result<Self, SeparableError> {
        let el = Self { w, x, y, xi, eta };
        el.validate()?;
        Ok(el)
    }

    /// Element with ξ = η = 0.
    pub fn diagonal(w: f64, x: f64, y: f64) -> Result<Self, SeparableError> {
        Self::new(w, x, y, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    }

    fn validate(&self) -> Result<(), SeparableError> {
        let finite = [self.w, self.x, self.y, self.xi.re, self.xi.im, self.eta.re, self.eta.im]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SeparableError::InvalidElement("non-finite parameter".into()));
        }
        if !(0.0..=1.0 + SLACK).contains(&self.w) {
            return Err(SeparableError::InvalidElement(format!("w = {} outside [0, 1]", self.w)));
        }
        if self.x.abs() > 1.0 + SLACK || self.y.abs() > 1.0 + SLACK {
            return Err(SeparableError::InvalidElement(format!(
                "(x, y) = ({}, {}) outside [-1, 1]²",
                self.x, self.y
            )));
        }
        if self.xi.norm_sqr() > 1.0 - self.x * self.x + SLACK {
            return Err(SeparableError::InvalidElement("|ξ|² > 1 − x²".into()));
        }
        if self.eta.norm_sqr() > 1.0 - self.y * self.y + SLACK {
            return Err(SeparableError::InvalidElement("|η|² > 1 − y²".into()));
        }
        Ok(())
    }

    /// Combines Alice's and Bob's local factors; the weight is w_A·w_B.
    pub fn from_factors(a: &LocalGramParams, b: &LocalGramParams) -> Self {
        Self {
            w: a.w * b.w,
            x: a.x,
            y: b.x,
            xi: a.xi,
            eta: b.xi,
        }
    }

    /// Element of the product POVM `ga ⊗ gb`.
    pub fn from_grams(ga: &LocalOperator, gb: &LocalOperator) -> Result<Self, SeparableError> {
        Ok(Self::from_factors(&gram_params(ga)?, &gram_params(gb)?))
    }

    /// Alice's factor, carrying the full weight.
    pub fn factor_a(&self) -> LocalGramParams {
        LocalGramParams {
            w: self.w,
            x: self.x,
            xi: self.xi,
        }
    }

    /// Bob's factor, with unit weight.
    pub fn factor_b(&self) -> LocalGramParams {
        LocalGramParams {
            w: 1.0,
            x: self.y,
            xi: self.eta,
        }
    }

    pub fn gram(&self) -> Mat4 {
        Mat4::kron(&self.factor_a().reconstruct(), &self.factor_b().reconstruct())
    }

    /// Canonical Kraus pair: positive square roots of the two local factors.
    pub fn canonical_kraus(&self) -> (LocalOperator, LocalOperator) {
        (
            self.factor_a().reconstruct().sqrt_psd(),
            self.factor_b().reconstruct().sqrt_psd(),
        )
    }

    pub fn is_diagonal(&self) -> bool {
        self.xi == Complex64::new(0.0, 0.0) && self.eta == Complex64::new(0.0, 0.0)
    }
}

/// p(Ĝ) = w(1 + xy).
pub fn p_functional(g: &SeparableElement) -> f64 {
    g.w * (1.0 + g.x * g.y)
}

/// q(Ĝ) = w(1 − xy).
pub fn q_functional(g: &SeparableElement) -> f64 {
    g.w * (1.0 - g.x * g.y)
}

/// (⟨00|G|00⟩ + ⟨11|G|11⟩)/2 for an arbitrary operator.
pub fn p_of_operator(g: &Mat4) -> f64 {
    (g.diagonal(0) + g.diagonal(3)) / 2.0
}

/// (⟨01|G|01⟩ + ⟨10|G|10⟩)/2 for an arbitrary operator.
pub fn q_of_operator(g: &Mat4) -> f64 {
    (g.diagonal(1) + g.diagonal(2)) / 2.0
}

/// Diagonal concurrence bound C(x, y) = √((1−x²)(1−y²)) / (1 + xy).
pub fn c_bound(x: f64, y: f64) -> Result<f64, SeparableError> {
    let denom = 1.0 + x * y;
    if denom <= DIVISOR_GUARD {
        return Err(SeparableError::DiscriminatingRay(denom));
    }
    let num = ((1.0 - x * x).max(0.0) * (1.0 - y * y).max(0.0)).sqrt();
    Ok((num / denom).min(1.0))
}

/// Per-outcome probabilities and post-measurement concurrences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeStats {
    pub p_plus: f64,
    pub p_minus: f64,
    pub p: f64,
    pub q: f64,
    pub c_plus: Option<f64>,
    pub c_minus: Option<f64>,
}

impl OutcomeStats {
    /// Propagates |Φ±⟩, |01⟩ and |10⟩ through the Kraus operator `a ⊗ b`.
    pub fn from_kraus(a: &LocalOperator, b: &LocalOperator) -> Self {
        let plus = apply_product_kraus(a, b, &TwoQubitPureState::bell_plus());
        let minus = apply_product_kraus(a, b, &TwoQubitPureState::bell_minus());
        let q01 = apply_product_kraus(a, b, &TwoQubitPureState::basis(0, 1)).norm_sqr();
        let q10 = apply_product_kraus(a, b, &TwoQubitPureState::basis(1, 0)).norm_sqr();
        let p_plus = plus.norm_sqr();
        let p_minus = minus.norm_sqr();
        let conc = |s: &TwoQubitPureState, p: f64| {
            if p > PROB_ZERO {
                s.concurrence().ok()
            } else {
                None
            }
        };
        Self {
            p_plus,
            p_minus,
            p: (p_plus + p_minus) / 2.0,
            q: (q01 + q10) / 2.0,
            c_plus: conc(&plus, p_plus),
            c_minus: conc(&minus, p_minus),
        }
    }

    /// The outcome certifies {|01⟩, |10⟩}.
    pub fn is_discriminating(&self) -> bool {
        self.p <= PROB_ZERO
    }

    /// [p₊𝓔(C₊) + p₋𝓔(C₋)] / 2, zero for discriminating outcomes.
    pub fn residual<M: EntanglementMeasure + ?Sized>(&self, m: &M) -> f64 {
        if self.is_discriminating() {
            return 0.0;
        }
        let term = |p: f64, c: Option<f64>| c.map_or(0.0, |c| p * m.eval(c));
        (term(self.p_plus, self.c_plus) + term(self.p_minus, self.c_minus)) / 2.0
    }
}

/// A finite separable instrument whose elements sum to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableInstrument {
    elements: Vec<SeparableElement>,
}

impl SeparableInstrument {
    pub fn new(elements: Vec<SeparableElement>) -> Result<Self, SeparableError> {
        for el in &elements {
            el.validate()?;
        }
        let inst = Self { elements };
        let defect = inst.completeness_defect();
        if defect > COMPLETENESS_TOL || defect.is_nan() {
            return Err(SeparableError::Incomplete { defect });
        }
        Ok(inst)
    }

    pub fn elements(&self) -> &[SeparableElement] {
        &self.elements
    }

    /// max |(Σ_k Ĝ_k − 1)_{ij}|
    pub fn completeness_defect(&self) -> f64 {
        let sum = self
            .elements
            .iter()
            .fold(Mat4::zero(), |acc, el| acc + el.gram());
        sum.max_abs_diff(&Mat4::identity())
    }

    pub fn identity() -> Self {
        Self {
            elements: vec![SeparableElement::diagonal(1.0, 0.0, 0.0).expect("valid")],
        }
    }

    /// Z ⊗ Z measurement: four rank-one diagonal elements at the corners.
    pub fn projective_zz() -> Self {
        let elements = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .into_iter()
            .map(|(x, y)| SeparableElement::diagonal(0.25, x, y).expect("valid"))
            .collect();
        Self { elements }
    }

    pub fn to_json(&self) -> String {
        let items: Vec<ElementJson> = self.elements.iter().map(ElementJson::from).collect();
        serde_json::to_string_pretty(&items).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, SeparableError> {
        let items: Vec<ElementJson> =
            serde_json::from_str(s).map_err(|e| SeparableError::Json(e.to_string()))?;
        let elements = items
            .into_iter()
            .map(|e| {
                SeparableElement::new(
                    e.w,
                    e.x,
                    e.y,
                    Complex64::new(e.xi_re, e.xi_im),
                    Complex64::new(e.eta_re, e.eta_im),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(elements)
    }
}

/// Wire form of one element.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ElementJson {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub xi_re: f64,
    #[serde(default)]
    pub xi_im: f64,
    #[serde(default)]
    pub eta_re: f64,
    #[serde(default)]
    pub eta_im: f64,
}

impl From<&SeparableElement> for ElementJson {
    fn from(e: &SeparableElement) -> Self {
        Self {
            w: e.w,
            x: e.x,
            y: e.y,
            xi_re: e.xi.re,
            xi_im: e.xi.im,
            eta_re: e.eta.re,
            eta_im: e.eta.im,
        }
    }
}

/// Weights and diagonal coordinates of the optimal four-outcome instrument.
pub(crate) fn optimal_parameters(q: f64) -> [(f64, f64, f64); 4] {
    let s = (q / (2.0 - q)).sqrt();
    let w_fail = q / 4.0;
    let w_keep = (2.0 - q) / 4.0;
    [
        (w_fail, 1.0, -1.0),
        (w_fail, -1.0, 1.0),
        (w_keep, s, s),
        (w_keep, -s, -s),
    ]
}

/// Four diagonal elements reaching Ē = 𝓔(1 − Q) with efficiency exactly Q.
pub fn build_optimal_instrument(q: f64) -> Result<SeparableInstrument, SeparableError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(SeparableError::EfficiencyOutOfRange(q));
    }
    let elements = optimal_parameters(q)
        .into_iter()
        .map(|(w, x, y)| SeparableElement::diagonal(w, x, y))
        .collect::<Result<Vec<_>, _>>()?;
    SeparableInstrument::new(elements)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EbarReport {
    pub ebar: f64,
    pub efficiency: f64,
    pub stats: Vec<OutcomeStats>,
}

/// Mean residual entanglement and discrimination efficiency of an instrument,
/// realized with canonical Kraus operators.
pub fn evaluate_ebar<M: EntanglementMeasure + ?Sized>(
    inst: &SeparableInstrument,
    m: &M,
) -> Result<EbarReport, SeparableError> {
    let defect = inst.completeness_defect();
    if defect > COMPLETENESS_TOL {
        return Err(SeparableError::Incomplete { defect });
    }
    let stats: Vec<OutcomeStats> = inst
        .elements
        .iter()
        .map(|el| {
            let (a, b) = el.canonical_kraus();
            OutcomeStats::from_kraus(&a, &b)
        })
        .collect();
    let ebar = stats.iter().map(|s| s.residual(m)).fold(0.0, |acc, v| acc + v);
    let efficiency = stats
        .iter()
        .filter(|s| s.is_discriminating())
        .map(|s| s.q)
        .fold(0.0, |acc, v| acc + v);
    Ok(EbarReport {
        ebar,
        efficiency,
        stats,
    })
}

/// Σ_{k: p_k = 0} q_k ≥ Q, with p_k = 0 meaning p_k ≤ 1e-12.
pub fn check_efficiency(inst: &SeparableInstrument, q: f64) -> bool {
    let efficiency: f64 = inst
        .elements
        .iter()
        .filter(|el| p_functional(el) <= PROB_ZERO)
        .map(q_functional)
        .sum();
    efficiency >= q - PROB_ZERO
}

/// A random complete diagonal instrument.
///
/// `n_interior` random points in [−1, 1]² get random weights, scaled by
/// `fill ∈ (0, 1)` of the largest admissible factor; the four corners
/// (±1, ±1) absorb the remaining moments so that Σ Ĝ = 1.
pub fn random_diagonal_instrument<R: Rng + ?Sized>(
    rng: &mut R,
    n_interior: usize,
    fill: f64,
) -> SeparableInstrument {
    let pts: Vec<(f64, f64, f64)> = (0..n_interior)
        .map(|_| {
            (
                rng.random::<f64>(),
                rng.random_range(-1.0..=1.0),
                rng.random_range(-1.0..=1.0),
            )
        })
        .collect();
    // Diagonal entry (s, t) of Σ Ĝ: Σ w (1 + s x)(1 + t y).
    let entry = |s: f64, t: f64| -> f64 {
        pts.iter()
            .map(|&(w, x, y)| w * (1.0 + s * x) * (1.0 + t * y))
            .sum()
    };
    let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let max_entry = corners
        .iter()
        .map(|&(s, t)| entry(s, t))
        .fold(0.0, f64::max);
    let scale = if max_entry > 0.0 { fill / max_entry } else { 0.0 };
    let mut elements: Vec<SeparableElement> = pts
        .iter()
        .map(|&(w, x, y)| SeparableElement::diagonal(w * scale, x, y).expect("in range"))
        .collect();
    for (s, t) in corners {
        // A corner element w_c at (s, t) contributes 4 w_c to entry (s, t) only.
        let w_c = (1.0 - scale * entry(s, t)) / 4.0;
        elements.push(SeparableElement::diagonal(w_c.max(0.0), s, t).expect("in range"));
    }
    SeparableInstrument::new(elements).expect("complete by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_operator, Mat4};
    use crate::measures::{EqMeasure, PowerMeasure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn functional_examples() {
        let id = SeparableElement::diagonal(1.0, 0.0, 0.0).unwrap();
        assert_eq!((p_functional(&id), q_functional(&id)), (1.0, 1.0));
        let k1 = SeparableElement::diagonal(0.05, 1.0, -1.0).unwrap();
        assert_eq!(p_functional(&k1), 0.0);
        assert!((q_functional(&k1) - 0.1).abs() < 1e-15);
        let el = SeparableElement::diagonal(0.45, 1.0 / 3.0, 1.0 / 3.0).unwrap();
        assert!((p_functional(&el) - 0.5).abs() < 1e-15);
        assert!((q_functional(&el) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn functionals_agree_with_operator_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = random_operator(&mut rng);
            let b = random_operator(&mut rng);
            let g = Mat4::kron(&a.gram(), &b.gram());
            let el = SeparableElement::from_grams(&a.gram(), &b.gram()).unwrap();
            let scale = 1.0 + g.trace().re;
            assert!((p_functional(&el) - p_of_operator(&g)).abs() < 1e-12 * scale);
            assert!((q_functional(&el) - q_of_operator(&g)).abs() < 1e-12 * scale);
            assert!(el.gram().max_abs_diff(&g) < 1e-12 * scale);
        }
    }

    #[test]
    fn c_bound_examples() {
        assert_eq!(c_bound(0.0, 0.0).unwrap(), 1.0);
        assert!((c_bound(1.0 / 3.0, 1.0 / 3.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((c_bound(0.5, -0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(c_bound(1.0, 0.3).unwrap(), 0.0);
        assert!(matches!(c_bound(1.0, -1.0), Err(SeparableError::DiscriminatingRay(_))));
    }

    #[test]
    fn optimal_instrument_at_q_02() {
        let inst = build_optimal_instrument(0.2).unwrap();
        let ws: Vec<f64> = inst.elements().iter().map(|e| e.w).collect();
        assert_eq!(ws, vec![0.05, 0.05, 0.45, 0.45]);
        assert!((inst.elements()[2].x - 1.0 / 3.0).abs() < 1e-15);
        let m = EqMeasure::new(0.2).unwrap();
        let rep = evaluate_ebar(&inst, &m).unwrap();
        assert!((rep.ebar - 1.0).abs() < 1e-12);
        assert!((rep.efficiency - 0.2).abs() < 1e-12);
        for s in &rep.stats[..2] {
            assert!(s.p.abs() < 1e-15);
            assert!((s.q - 0.1).abs() < 1e-15);
        }
        for s in &rep.stats[2..] {
            assert!((s.p_plus - 0.5).abs() < 1e-12 && (s.p_minus - 0.5).abs() < 1e-12);
            assert!((s.c_plus.unwrap() - 0.8).abs() < 1e-12);
            assert!((s.c_minus.unwrap() - 0.8).abs() < 1e-12);
        }
        assert!(check_efficiency(&inst, 0.2));
    }

    #[test]
    fn optimal_instrument_across_q() {
        for i in 1..100 {
            let q = i as f64 / 100.0;
            let inst = build_optimal_instrument(q).unwrap();
            assert!(inst.completeness_defect() < 1e-14);
            let eff: f64 = inst.elements()[..2].iter().map(q_functional).sum();
            assert!((eff - q).abs() < 1e-15);
        }
        let inst = build_optimal_instrument(0.5).unwrap();
        assert!((inst.elements()[2].x - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(build_optimal_instrument(0.0).is_err());
        assert!(build_optimal_instrument(1.0).is_err());
    }

    #[test]
    fn trivial_instruments() {
        let m = EqMeasure::new(0.2).unwrap();
        let rep = evaluate_ebar(&SeparableInstrument::identity(), &m).unwrap();
        assert!((rep.ebar - m.eval(1.0)).abs() < 1e-15);
        assert_eq!(rep.efficiency, 0.0);
        assert!(!check_efficiency(&SeparableInstrument::identity(), 0.2));

        let zz = SeparableInstrument::projective_zz();
        let rep = evaluate_ebar(&zz, &m).unwrap();
        assert_eq!(rep.ebar, 0.0);
        assert!((rep.efficiency - 1.0).abs() < 1e-15);
        for q in [0.1, 0.5, 0.99, 1.0] {
            assert!(check_efficiency(&zz, q));
        }
    }

    #[test]
    fn incomplete_instrument_rejected() {
        let el = SeparableElement::diagonal(0.5, 0.0, 0.0).unwrap();
        assert!(matches!(
            SeparableInstrument::new(vec![el]),
            Err(SeparableError::Incomplete { .. })
        ));
        assert!(SeparableElement::diagonal(0.5, 1.5, 0.0).is_err());
        assert!(SeparableElement::new(0.5, 0.8, 0.0, Complex64::new(0.7, 0.0), Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = build_optimal_instrument(0.3).unwrap();
        let back = SeparableInstrument::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
        assert!(SeparableInstrument::from_json("[{\"w\": 0.5, \"x\": 0, \"y\": 0}]").is_err());
    }

    #[test]
    fn canonical_kraus_concurrence_matches_determinant_formula() {
        // The Kraus decomposition is free; the branch concurrence is not.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let a = random_operator(&mut rng);
            let b = random_operator(&mut rng);
            let el = SeparableElement::from_grams(&a.gram(), &b.gram()).unwrap();
            let (ca, cb) = el.canonical_kraus();
            let canon = OutcomeStats::from_kraus(&ca, &cb);
            let raw = OutcomeStats::from_kraus(&a, &b);
            let tol = 1e-10;
            assert!((canon.p_plus - raw.p_plus).abs() < tol * (1.0 + raw.p_plus));
            assert!((canon.c_plus.unwrap() - raw.c_plus.unwrap()).abs() < tol);
            assert!((canon.c_minus.unwrap() - raw.c_minus.unwrap()).abs() < tol);
        }
    }

    #[test]
    fn random_diagonal_instruments_respect_sep_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q = 0.2;
        let eq = EqMeasure::new(q).unwrap();
        let pw = PowerMeasure::new(0.5).unwrap();
        let mut checked = 0;
        while checked < 300 {
            let n = rng.random_range(1..6);
            let fill = rng.random_range(0.05..0.95);
            let inst = random_diagonal_instrument(&mut rng, n, fill);
            if !check_efficiency(&inst, q) {
                continue;
            }
            checked += 1;
            assert!(evaluate_ebar(&inst, &eq).unwrap().ebar <= eq.eval(1.0 - q) + 1e-9);
            assert!(evaluate_ebar(&inst, &pw).unwrap().ebar <= pw.eval(1.0 - q) + 1e-9);
        }
    }
}
