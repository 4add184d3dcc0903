//! Rule-based step-correctness oracle.
//!
//! Given a gold reasoning step and a candidate, the oracle applies
//! proximity filters (is the candidate a plausible minimal variant of the
//! gold step?), hard semantic validators (does the math check out under
//! exact evaluation?), and structural validators (are entities and
//! bindings consistent?). Candidates failing proximity are rejected;
//! otherwise the validators decide Correct vs Incorrect.

pub mod embed;
pub mod expr;
pub mod lev;
pub mod token;

use std::collections::BTreeMap;

use num::rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use embed::{cosine, Embedder, HashedBagEmbedder};
use expr::{
    extract_at_bindings, extract_bindings, extract_expressions, Expr,
};
use token::{is_number, tokenize};

/// A step with its cached token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ReasoningStep {
    pub raw: String,
    pub tokens: Vec<String>,
}

impl ReasoningStep {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let raw = text.into();
        if raw.trim().is_empty() {
            return Err(Error::InvalidArgument("empty reasoning step".into()));
        }
        let tokens = tokenize(&raw);
        Ok(ReasoningStep { raw, tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Filter and validator thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleThresholds {
    pub tau_min: f64,
    pub tau_max: f64,
    pub delta_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub epsilon: f64,
}

impl Default for OracleThresholds {
    fn default() -> Self {
        OracleThresholds {
            tau_min: 0.5,
            tau_max: 0.9,
            delta_max: 0.35,
            alpha_min: 0.5,
            alpha_max: 0.95,
            epsilon: 1e-6,
        }
    }
}

impl OracleThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.tau_min && self.tau_min < self.tau_max && self.tau_max <= 1.0) {
            return Err(Error::InvalidArgument(
                "similarity band must satisfy 0 <= tau_min < tau_max <= 1".into(),
            ));
        }
        if !(self.delta_max > 0.0 && self.delta_max < 1.0) {
            return Err(Error::InvalidArgument("delta_max must be in (0, 1)".into()));
        }
        if !(self.alpha_min < self.alpha_max) {
            return Err(Error::InvalidArgument("alpha_min must be < alpha_max".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Tri-state validator outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tri {
    Fires,
    Clear,
    Abstain,
}

/// Outcome plus a human-readable reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatorOutcome {
    pub state: Tri,
    pub reason: String,
}

impl ValidatorOutcome {
    fn fires(reason: impl Into<String>) -> Self {
        ValidatorOutcome {
            state: Tri::Fires,
            reason: reason.into(),
        }
    }
    fn clear(reason: impl Into<String>) -> Self {
        ValidatorOutcome {
            state: Tri::Clear,
            reason: reason.into(),
        }
    }
    fn abstain(reason: impl Into<String>) -> Self {
        ValidatorOutcome {
            state: Tri::Abstain,
            reason: reason.into(),
        }
    }
}

/// (P1) Length window: half to double the gold token count, inclusive.
pub fn length_window(gold: &ReasoningStep, candidate: &ReasoningStep) -> bool {
    let lg = gold.len() as f64;
    let lc = candidate.len() as f64;
    0.5 * lg <= lc && lc <= 2.0 * lg
}

/// (P2) Similarity band: cosine of the embeddings within
/// [tau_min, tau_max], inclusive. A zero embedding fails with a
/// "degenerate embedding" reason.
pub fn similarity_band(
    gold: &ReasoningStep,
    candidate: &ReasoningStep,
    embedder: &dyn Embedder,
    thresholds: &OracleThresholds,
) -> (bool, Option<f64>, Option<String>) {
    let eg = embedder.embed(gold);
    let ec = embedder.embed(candidate);
    match cosine(&eg, &ec) {
        Some(c) => {
            let pass = thresholds.tau_min <= c && c <= thresholds.tau_max;
            let reason = if pass {
                None
            } else if c > thresholds.tau_max {
                Some(format!("cosine {c:.4} above band (too similar)"))
            } else {
                Some(format!("cosine {c:.4} below band (unrelated)"))
            };
            (pass, Some(c), reason)
        }
        None => (false, None, Some("degenerate embedding".into())),
    }
}

/// (P4 ingredient) Token-level normalized Levenshtein distance.
pub fn normalized_levenshtein(gold: &ReasoningStep, candidate: &ReasoningStep) -> f64 {
    lev::normalized_levenshtein(&gold.tokens, &candidate.tokens)
}

/// Proximity filter report; `None` entries were short-circuited away.
#[derive(Debug, Clone)]
pub struct ProximityReport {
    pub pass: bool,
    pub p1: Option<bool>,
    pub p2: Option<bool>,
    pub p3: Option<bool>,
    pub p4: Option<bool>,
    pub cosine: Option<f64>,
    pub lev: Option<f64>,
    pub reason: Option<String>,
}

/// Conjunction of P1-P4, evaluated in short-circuit order P3 (raw
/// inequality), P1 (length), P4 (minimality), P2 (similarity band).
pub fn proximity_filter(
    gold: &ReasoningStep,
    candidate: &ReasoningStep,
    embedder: &dyn Embedder,
    thresholds: &OracleThresholds,
) -> ProximityReport {
    let mut rep = ProximityReport {
        pass: false,
        p1: None,
        p2: None,
        p3: None,
        p4: None,
        cosine: None,
        lev: None,
        reason: None,
    };
    let p3 = gold.raw != candidate.raw;
    rep.p3 = Some(p3);
    if !p3 {
        rep.reason = Some("candidate identical to gold (P3)".into());
        return rep;
    }
    let p1 = length_window(gold, candidate);
    rep.p1 = Some(p1);
    if !p1 {
        rep.reason = Some("token length outside window (P1)".into());
        return rep;
    }
    let lev = normalized_levenshtein(gold, candidate);
    rep.lev = Some(lev);
    let p4 = lev <= thresholds.delta_max;
    rep.p4 = Some(p4);
    if !p4 {
        rep.reason = Some(format!("edit distance {lev:.3} exceeds delta_max (P4)"));
        return rep;
    }
    let (p2, cos, reason) = similarity_band(gold, candidate, embedder, thresholds);
    rep.p2 = Some(p2);
    rep.cosine = cos;
    if !p2 {
        rep.reason = reason.map(|r| format!("{r} (P2)"));
        return rep;
    }
    rep.pass = true;
    rep
}

/// Deterministic evaluation points: a fixed coprime sequence.
fn eval_sequence() -> Vec<BigRational> {
    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }
    vec![
        rat(2, 1),
        rat(3, 1),
        rat(5, 2),
        rat(-1, 1),
        rat(7, 3),
        rat(-4, 1),
        rat(11, 5),
        rat(13, 1),
    ]
}

/// Exact multi-point equivalence of one expression pair.
/// `None` when no assignment is evaluable for both sides.
fn pair_equivalent(a: &Expr, b: &Expr) -> Option<bool> {
    let seq = eval_sequence();
    let mut vars: Vec<String> = a.variables().union(&b.variables()).cloned().collect();
    vars.sort();
    let mut evaluated = 0;
    for j in 0..seq.len() {
        let mut env = BTreeMap::new();
        for (i, v) in vars.iter().enumerate() {
            env.insert(v.clone(), seq[(i + j) % seq.len()].clone());
        }
        match (a.eval_rational(&env), b.eval_rational(&env)) {
            (Some(va), Some(vb)) => {
                evaluated += 1;
                if va != vb {
                    return Some(false);
                }
            }
            _ => continue,
        }
    }
    if evaluated == 0 {
        None
    } else {
        Some(true)
    }
}

/// (H1) Symbolic equivalence via exact rational evaluation at the fixed
/// point set. Fires when some positionally paired expressions disagree.
pub fn symbolic_equivalence(gold_exprs: &[Expr], cand_exprs: &[Expr]) -> ValidatorOutcome {
    let n = gold_exprs.len().min(cand_exprs.len());
    if n == 0 {
        return ValidatorOutcome::abstain("no parseable expression pair");
    }
    let mut decided = 0;
    for i in 0..n {
        match pair_equivalent(&gold_exprs[i], &cand_exprs[i]) {
            Some(false) => {
                return ValidatorOutcome::fires(format!("expression pair {i} not equivalent"))
            }
            Some(true) => decided += 1,
            None => continue,
        }
    }
    if decided == 0 {
        ValidatorOutcome::abstain("no expression pair evaluable")
    } else {
        ValidatorOutcome::clear("all paired expressions equivalent")
    }
}

/// (H2) Numeric consistency: floating-point evaluation over the same
/// point set; fires when any difference exceeds epsilon.
pub fn numeric_consistency(
    gold_exprs: &[Expr],
    cand_exprs: &[Expr],
    epsilon: f64,
) -> ValidatorOutcome {
    let n = gold_exprs.len().min(cand_exprs.len());
    if n == 0 {
        return ValidatorOutcome::abstain("no parseable expression pair");
    }
    let seq: Vec<f64> = eval_sequence()
        .iter()
        .map(|r| num::traits::ToPrimitive::to_f64(r).unwrap())
        .collect();
    let mut decided = 0;
    for i in 0..n {
        let a = &gold_exprs[i];
        let b = &cand_exprs[i];
        let mut vars: Vec<String> = a.variables().union(&b.variables()).cloned().collect();
        vars.sort();
        for j in 0..seq.len() {
            let mut env = BTreeMap::new();
            for (k, v) in vars.iter().enumerate() {
                env.insert(v.clone(), seq[(k + j) % seq.len()]);
            }
            if let (Some(va), Some(vb)) = (a.eval_f64(&env), b.eval_f64(&env)) {
                decided += 1;
                if (va - vb).abs() > epsilon {
                    return ValidatorOutcome::fires(format!(
                        "pair {i} differs by {:.3e} at a test point",
                        (va - vb).abs()
                    ));
                }
            }
        }
    }
    if decided == 0 {
        ValidatorOutcome::abstain("nothing evaluable")
    } else {
        ValidatorOutcome::clear("all evaluations within epsilon")
    }
}

/// (H3) Algebraic legality: fires when a candidate expression containing a
/// step-declared substitution variable ("at x = c") hits an exactly-zero
/// denominator at every test assignment with that binding pinned.
pub fn algebraic_legality(
    cand_exprs: &[Expr],
    bindings: &BTreeMap<String, BigRational>,
) -> ValidatorOutcome {
    if cand_exprs.is_empty() {
        return ValidatorOutcome::abstain("no expressions");
    }
    if bindings.is_empty() {
        return ValidatorOutcome::clear("no declared substitution points");
    }
    let seq = eval_sequence();
    for (i, e) in cand_exprs.iter().enumerate() {
        let vars = e.variables();
        if !vars.iter().any(|v| bindings.contains_key(v)) {
            continue;
        }
        let free: Vec<&String> = vars.iter().filter(|v| !bindings.contains_key(*v)).collect();
        let mut all_fail = true;
        for j in 0..seq.len() {
            let mut env: BTreeMap<String, BigRational> = bindings.clone();
            for (k, v) in free.iter().enumerate() {
                env.insert((*v).clone(), seq[(k + j) % seq.len()].clone());
            }
            if e.eval_rational(&env).is_some() {
                all_fail = false;
                break;
            }
        }
        if all_fail {
            return ValidatorOutcome::fires(format!(
                "expression {i} is illegal at the declared substitution point"
            ));
        }
    }
    ValidatorOutcome::clear("all evaluations legal at declared points")
}

/// (H4) Theorem preconditions: a pluggable hook; the default
/// implementation always abstains.
pub fn precondition_check(_gold: &ReasoningStep, _candidate: &ReasoningStep) -> ValidatorOutcome {
    ValidatorOutcome::abstain("theorem-precondition checking not implemented")
}

const UNIT_TABLE: &[(&str, f64)] = &[
    ("m", 1.0),
    ("cm", 0.01),
    ("mm", 0.001),
    ("km", 1000.0),
    ("kg", 1.0),
    ("g", 0.001),
    ("mg", 1e-6),
    ("s", 1.0),
    ("ms", 1e-3),
    ("Pa", 1.0),
    ("kPa", 1e3),
    ("MPa", 1e6),
    ("N", 1.0),
    ("J", 1.0),
    ("kJ", 1e3),
    ("W", 1.0),
    ("K", 1.0),
    ("mol", 1.0),
    ("L", 1e-3),
    ("mL", 1e-6),
];

fn unit_factor(token: &str) -> Option<f64> {
    UNIT_TABLE
        .iter()
        .find(|(name, _)| *name == token)
        .map(|(_, f)| *f)
}

/// Annotated quantities `value unit` in a token stream.
fn annotations(step: &ReasoningStep) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for i in 0..step.tokens.len().saturating_sub(1) {
        if is_number(&step.tokens[i]) {
            if let Some(f) = unit_factor(&step.tokens[i + 1]) {
                if let Ok(v) = step.tokens[i].parse::<f64>() {
                    out.push((i, v, f));
                }
            }
        }
    }
    out
}

/// (H5) Units: fires when the candidate annotates a non-SI quantity and
/// reuses its raw magnitude in an expression without the converted value
/// appearing anywhere. Abstains when neither step has unit annotations.
pub fn unit_consistency(gold: &ReasoningStep, candidate: &ReasoningStep) -> ValidatorOutcome {
    let g_ann = annotations(gold);
    let c_ann = annotations(candidate);
    if g_ann.is_empty() && c_ann.is_empty() {
        return ValidatorOutcome::abstain("no annotated units");
    }
    for &(idx, v, f) in &c_ann {
        if (f - 1.0).abs() < 1e-12 {
            continue;
        }
        let vstr = &candidate.tokens[idx];
        let reused = candidate.tokens.iter().enumerate().any(|(j, t)| {
            j != idx
                && t == vstr
                && candidate
                    .tokens
                    .get(j + 1)
                    .map_or(true, |next| unit_factor(next).is_none())
        });
        if !reused {
            continue;
        }
        let converted = v * f;
        let converted_present = candidate.tokens.iter().any(|t| {
            is_number(t)
                && t.parse::<f64>()
                    .map(|x| (x - converted).abs() <= 1e-9 * converted.abs().max(1.0))
                    .unwrap_or(false)
        });
        if !converted_present {
            return ValidatorOutcome::fires(format!(
                "magnitude {vstr} reused without unit conversion"
            ));
        }
    }
    ValidatorOutcome::clear("unit usage consistent")
}

const OPERATOR_TOKENS: &[&str] = &[
    "+", "-", "\u{2212}", "*", "\u{00d7}", "/", "\u{00f7}", "^", "=", "<", ">", "\u{2264}",
    "\u{2265}",
];

fn is_operator(token: &str) -> bool {
    OPERATOR_TOKENS.contains(&token)
}

/// Entity multiset: numbers, operator tokens, and alphanumeric
/// identifiers (parentheses/braces/commas are excluded).
fn entities(step: &ReasoningStep) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in &step.tokens {
        if is_number(t) || is_operator(t) || expr::is_identifier(t) {
            *out.entry(t.clone()).or_insert(0) += 1;
        }
    }
    out
}

fn multiset_jaccard(a: &BTreeMap<String, usize>, b: &BTreeMap<String, usize>) -> Option<f64> {
    let mut inter = 0usize;
    let mut union = 0usize;
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for k in keys {
        let ca = a.get(k).copied().unwrap_or(0);
        let cb = b.get(k).copied().unwrap_or(0);
        inter += ca.min(cb);
        union += ca.max(cb);
    }
    if union == 0 {
        None
    } else {
        Some(inter as f64 / union as f64)
    }
}

/// (S1) Entity/number alignment: fires when the multiset Jaccard lies
/// inside [alpha_min, alpha_max] (the candidate is a targeted edit, not a
/// copy and not unrelated). The ordered operator-sequence edit distance is
/// returned for the trace.
pub fn jaccard_alignment(
    gold: &ReasoningStep,
    candidate: &ReasoningStep,
    thresholds: &OracleThresholds,
) -> (ValidatorOutcome, Option<f64>, Option<f64>) {
    let ea = entities(gold);
    let eb = entities(candidate);
    let ops_a: Vec<&String> = gold.tokens.iter().filter(|t| is_operator(t)).collect();
    let ops_b: Vec<&String> = candidate.tokens.iter().filter(|t| is_operator(t)).collect();
    let op_seq = if ops_a.is_empty() && ops_b.is_empty() {
        None
    } else {
        Some(lev::normalized_levenshtein(&ops_a, &ops_b))
    };
    match multiset_jaccard(&ea, &eb) {
        None => (
            ValidatorOutcome::abstain("no entities in either step"),
            None,
            op_seq,
        ),
        Some(j) => {
            let inside = thresholds.alpha_min <= j && j <= thresholds.alpha_max;
            let outcome = if inside {
                ValidatorOutcome::fires(format!("entity Jaccard {j:.3} inside band"))
            } else {
                ValidatorOutcome::clear(format!("entity Jaccard {j:.3} outside band"))
            };
            (outcome, Some(j), op_seq)
        }
    }
}

/// (S2) Variable binding consistency: fires when some identifier is bound
/// in both steps to non-equivalent expressions.
pub fn binding_consistency(gold: &ReasoningStep, candidate: &ReasoningStep) -> ValidatorOutcome {
    let bg = extract_bindings(&gold.tokens);
    let bc = extract_bindings(&candidate.tokens);
    if bg.is_empty() || bc.is_empty() {
        return ValidatorOutcome::abstain("no shared bindings");
    }
    let mut gold_map: BTreeMap<&str, &Expr> = BTreeMap::new();
    for (name, e) in &bg {
        gold_map.entry(name.as_str()).or_insert(e);
    }
    let mut shared_evaluable = 0;
    let mut seen: std::collections::BTreeSet<&str> = Default::default();
    for (name, ce) in &bc {
        if !seen.insert(name.as_str()) {
            continue;
        }
        if let Some(ge) = gold_map.get(name.as_str()) {
            match pair_equivalent(ge, ce) {
                Some(false) => {
                    return ValidatorOutcome::fires(format!(
                        "binding of '{name}' differs between steps"
                    ))
                }
                Some(true) => shared_evaluable += 1,
                None => continue,
            }
        }
    }
    if shared_evaluable == 0 {
        ValidatorOutcome::abstain("no shared bindings")
    } else {
        ValidatorOutcome::clear("all shared bindings equivalent")
    }
}

/// Labeling mode: the literal all-indicators conjunction, or the default
/// gated any-fires reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelingMode {
    Strict,
    #[default]
    AnyFires,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictLabel {
    Correct,
    Incorrect,
    Rejected,
}

/// Full per-check trace. `None` marks checks that were never computed
/// (short-circuited filters, validators after a rejection).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    #[serde(rename = "P1")]
    pub p1: Option<bool>,
    #[serde(rename = "P2")]
    pub p2: Option<bool>,
    #[serde(rename = "P3")]
    pub p3: Option<bool>,
    #[serde(rename = "P4")]
    pub p4: Option<bool>,
    #[serde(rename = "H1")]
    pub h1: Option<Tri>,
    #[serde(rename = "H2")]
    pub h2: Option<Tri>,
    #[serde(rename = "H3")]
    pub h3: Option<Tri>,
    #[serde(rename = "H4")]
    pub h4: Option<Tri>,
    #[serde(rename = "H5")]
    pub h5: Option<Tri>,
    #[serde(rename = "S1")]
    pub s1: Option<Tri>,
    #[serde(rename = "S2")]
    pub s2: Option<Tri>,
    /// Ordered operator-sequence edit distance (S1 side channel).
    pub op_seq: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Distances {
    pub cos: Option<f64>,
    pub lev: Option<f64>,
    pub jaccard: Option<f64>,
}

/// The oracle's decision on one (gold, candidate) pair.
#[derive(Debug, Clone)]
pub struct OracleVerdict {
    pub label: VerdictLabel,
    pub trace: Trace,
    pub distances: Distances,
    /// Reasons for fired/abstained checks, in evaluation order.
    pub notes: Vec<String>,
}

impl OracleVerdict {
    /// Ground-truth label for reward purposes: a rejected candidate is a
    /// failed corruption and maps to y = 1 (correct-step penalty).
    pub fn y_label(&self) -> crate::game::Label {
        match self.label {
            VerdictLabel::Incorrect => crate::game::Label::Incorrect,
            VerdictLabel::Correct | VerdictLabel::Rejected => crate::game::Label::Correct,
        }
    }
}

/// An immutable oracle instance: thresholds, embedder, labeling mode, and
/// an optional theorem-precondition hook.
pub struct Oracle {
    pub thresholds: OracleThresholds,
    pub embedder: Box<dyn Embedder>,
    pub mode: LabelingMode,
    pub precondition_hook:
        Option<Box<dyn Fn(&ReasoningStep, &ReasoningStep) -> ValidatorOutcome + Send + Sync>>,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            thresholds: OracleThresholds::default(),
            embedder: Box::new(HashedBagEmbedder::default()),
            mode: LabelingMode::default(),
            precondition_hook: None,
        }
    }
}

impl Oracle {
    pub fn new(thresholds: OracleThresholds, embedder: Box<dyn Embedder>, mode: LabelingMode) -> Result<Self> {
        thresholds.validate()?;
        Ok(Oracle {
            thresholds,
            embedder,
            mode,
            precondition_hook: None,
        })
    }

    pub fn label(&self, gold: &str, candidate: &str) -> Result<OracleVerdict> {
        let gold = ReasoningStep::new(gold)?;
        let cand = ReasoningStep::new(candidate)?;
        Ok(self.label_steps(&gold, &cand))
    }

    pub fn label_steps(&self, gold: &ReasoningStep, cand: &ReasoningStep) -> OracleVerdict {
        label_pipeline(
            gold,
            cand,
            self.embedder.as_ref(),
            &self.thresholds,
            self.mode,
            self.precondition_hook.as_deref(),
        )
    }
}

type PreconditionHook = dyn Fn(&ReasoningStep, &ReasoningStep) -> ValidatorOutcome + Send + Sync;

fn label_pipeline(
    gold: &ReasoningStep,
    cand: &ReasoningStep,
    embedder: &dyn Embedder,
    thresholds: &OracleThresholds,
    mode: LabelingMode,
    hook: Option<&PreconditionHook>,
) -> OracleVerdict {
    {
        let mut notes = Vec::new();
        let prox = proximity_filter(gold, cand, embedder, thresholds);
        let mut trace = Trace {
            p1: prox.p1,
            p2: prox.p2,
            p3: prox.p3,
            p4: prox.p4,
            h1: None,
            h2: None,
            h3: None,
            h4: None,
            h5: None,
            s1: None,
            s2: None,
            op_seq: None,
        };
        if !prox.pass {
            if let Some(r) = prox.reason {
                notes.push(r);
            }
            return OracleVerdict {
                label: VerdictLabel::Rejected,
                trace,
                distances: Distances {
                    cos: prox.cosine,
                    lev: prox.lev,
                    jaccard: None,
                },
                notes,
            };
        }

        let gold_exprs = extract_expressions(&gold.tokens);
        let cand_exprs = extract_expressions(&cand.tokens);
        let at_points = {
            let mut pts = extract_at_bindings(&cand.tokens);
            // Substitution points declared in the gold step also bind the
            // candidate's expressions.
            for (k, v) in extract_at_bindings(&gold.tokens) {
                pts.entry(k).or_insert(v);
            }
            pts
        };

        let h1 = symbolic_equivalence(&gold_exprs, &cand_exprs);
        let h2 = numeric_consistency(&gold_exprs, &cand_exprs, thresholds.epsilon);
        let h3 = algebraic_legality(&cand_exprs, &at_points);
        let h4 = match hook {
            Some(hook) => hook(gold, cand),
            None => precondition_check(gold, cand),
        };
        let h5 = unit_consistency(gold, cand);
        let (s1, jaccard, op_seq) = jaccard_alignment(gold, cand, thresholds);
        let s2 = binding_consistency(gold, cand);

        for (name, v) in [
            ("H1", &h1),
            ("H2", &h2),
            ("H3", &h3),
            ("H4", &h4),
            ("H5", &h5),
            ("S1", &s1),
            ("S2", &s2),
        ] {
            if v.state != Tri::Clear {
                notes.push(format!("{name}: {}", v.reason));
            }
        }

        trace.h1 = Some(h1.state);
        trace.h2 = Some(h2.state);
        trace.h3 = Some(h3.state);
        trace.h4 = Some(h4.state);
        trace.h5 = Some(h5.state);
        trace.s1 = Some(s1.state);
        trace.s2 = Some(s2.state);
        trace.op_seq = op_seq;

        let label = match mode {
            LabelingMode::Strict => {
                let all = [&h1, &h2, &h3, &h4, &h5, &s1, &s2];
                let evaluated: Vec<&&ValidatorOutcome> =
                    all.iter().filter(|v| v.state != Tri::Abstain).collect();
                if !evaluated.is_empty() && evaluated.iter().all(|v| v.state == Tri::Fires) {
                    VerdictLabel::Incorrect
                } else {
                    VerdictLabel::Correct
                }
            }
            LabelingMode::AnyFires => {
                let semantic_fired = [&h1, &h2, &h3, &h5, &s2]
                    .iter()
                    .any(|v| v.state == Tri::Fires);
                if s1.state == Tri::Fires && semantic_fired {
                    VerdictLabel::Incorrect
                } else {
                    VerdictLabel::Correct
                }
            }
        };

        OracleVerdict {
            label,
            trace,
            distances: Distances {
                cos: prox.cosine,
                lev: prox.lev,
                jaccard,
            },
            notes,
        }
    }
}

/// One-shot labeling with explicit parts, mirroring [`Oracle::label`].
pub fn oracle_label(
    gold: &str,
    candidate: &str,
    embedder: &dyn Embedder,
    thresholds: &OracleThresholds,
    mode: LabelingMode,
) -> Result<OracleVerdict> {
    thresholds.validate()?;
    let gold = ReasoningStep::new(gold)?;
    let cand = ReasoningStep::new(candidate)?;
    Ok(label_pipeline(&gold, &cand, embedder, thresholds, mode, None))
}
