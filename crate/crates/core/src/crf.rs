//! Linear-chain CRF over a paragraph's relation-slot sequence: a typed
//! state space with kind masking, Viterbi decoding, the forward
//! log-partition, a constrained forward for gold sets, and negative
//! log-likelihood training.
//!
//! Emission scores are the raw logits of the kind-matched head; the
//! softmax normalizer is absorbed by the partition function. States of
//! the wrong kind for a slot are masked with a large negative constant
//! rather than negative infinity so arithmetic stays finite.

use crate::corpus::{SlotKind, NUM_LABELS};
use crate::error::{Error, Result};
use crate::numeric::{logsumexp, Matrix, ParamId, ParamStore, Tape, Var};

/// Emission score assigned to states whose kind mismatches the slot.
pub const MASK_SCORE: f64 = -1e4;

/// TYPED-8 couples (kind, label) pairs so the transition matrix can
/// express implicit/explicit patterns; PLAIN-4 runs over bare labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrfStateSpace {
    Plain4,
    Typed8,
}

impl CrfStateSpace {
    pub fn size(self) -> usize {
        match self {
            CrfStateSpace::Plain4 => NUM_LABELS,
            CrfStateSpace::Typed8 => 2 * NUM_LABELS,
        }
    }

    /// Label component of a state. TYPED-8 states are kind-major:
    /// implicit labels occupy 0..4, explicit labels 4..8.
    pub fn state_label(self, state: usize) -> usize {
        state % NUM_LABELS
    }

    pub fn state_kind(self, state: usize) -> Option<SlotKind> {
        match self {
            CrfStateSpace::Plain4 => None,
            CrfStateSpace::Typed8 => {
                Some(if state < NUM_LABELS { SlotKind::Implicit } else { SlotKind::Explicit })
            }
        }
    }

    fn kind_offset(self, kind: SlotKind) -> usize {
        match (self, kind) {
            (CrfStateSpace::Plain4, _) => 0,
            (CrfStateSpace::Typed8, SlotKind::Implicit) => 0,
            (CrfStateSpace::Typed8, SlotKind::Explicit) => NUM_LABELS,
        }
    }

    /// States consistent with a slot's kind and gold label set.
    pub fn allowed_states(self, kind: SlotKind, gold_labels: &[usize]) -> Vec<usize> {
        let offset = self.kind_offset(kind);
        gold_labels.iter().map(|l| offset + l).collect()
    }

    /// All states of the slot's kind (the mask-consistent block).
    pub fn kind_states(self, kind: SlotKind) -> std::ops::Range<usize> {
        let offset = self.kind_offset(kind);
        offset..offset + NUM_LABELS
    }
}

/// Transition, start, and end potentials. Everything is zero-initialized
/// so an untrained CRF reproduces the factorized per-slot model exactly.
#[derive(Clone, Copy, Debug)]
pub struct CrfLayer {
    pub space: CrfStateSpace,
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
}

impl CrfLayer {
    pub fn new(store: &mut ParamStore, space: CrfStateSpace) -> Self {
        let s = space.size();
        CrfLayer {
            space,
            transitions: store.add("crf.transitions", Matrix::zeros(s, s), true),
            start: store.add("crf.start", Matrix::zeros(s, 1), true),
            end: store.add("crf.end", Matrix::zeros(s, 1), true),
        }
    }
}

/// Per-slot emission scores for one paragraph, `T x S`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionTable {
    pub scores: Matrix,
}

impl EmissionTable {
    pub fn new(scores: Matrix) -> Self {
        EmissionTable { scores }
    }

    pub fn slots(&self) -> usize {
        self.scores.rows()
    }

    pub fn states(&self) -> usize {
        self.scores.cols()
    }
}

/// Build per-slot emission nodes from kind-matched head logits. In
/// TYPED-8 the wrong-kind block is filled with [`MASK_SCORE`]; PLAIN-4
/// passes the logits through.
pub fn emissions(tape: &mut Tape, logits: &[Var], kinds: &[SlotKind], space: CrfStateSpace) -> Result<Vec<Var>> {
    if logits.len() != kinds.len() {
        return Err(Error::Config(format!("{} logit vectors for {} slots", logits.len(), kinds.len())));
    }
    let mut out = Vec::with_capacity(logits.len());
    for (lv, kind) in logits.iter().zip(kinds.iter()) {
        if tape.value(*lv).rows() != NUM_LABELS {
            return Err(Error::Config(format!(
                "emission logits must be {NUM_LABELS}-dim, got {}",
                tape.value(*lv).rows()
            )));
        }
        let node = match space {
            CrfStateSpace::Plain4 => *lv,
            CrfStateSpace::Typed8 => {
                let mask = tape.constant(Matrix::filled(NUM_LABELS, 1, MASK_SCORE));
                match kind {
                    SlotKind::Implicit => tape.concat(&[*lv, mask])?,
                    SlotKind::Explicit => tape.concat(&[mask, *lv])?,
                }
            }
        };
        out.push(node);
    }
    Ok(out)
}

/// Snapshot emission node values into a plain `T x S` table for decoding.
pub fn emission_values(tape: &Tape, nodes: &[Var]) -> EmissionTable {
    let states = tape.value(nodes[0]).rows();
    let mut scores = Matrix::zeros(nodes.len(), states);
    for (t, node) in nodes.iter().enumerate() {
        for (s, v) in tape.value(*node).data().iter().enumerate() {
            scores.set(t, s, *v);
        }
    }
    EmissionTable::new(scores)
}

/// Highest-scoring state sequence and its score:
/// `start[s_1] + sum E[t][s_t] + sum transitions[s_t][s_{t+1}] + end[s_T]`.
/// Ties break toward the lowest state index at each backtrack step.
pub fn viterbi(e: &EmissionTable, transitions: &Matrix, start: &Matrix, end: &Matrix) -> Result<(Vec<usize>, f64)> {
    let (slots, states) = (e.slots(), e.states());
    if slots == 0 {
        return Err(Error::Dimension("viterbi over zero slots".into()));
    }
    if transitions.rows() != states || transitions.cols() != states || start.rows() != states || end.rows() != states {
        return Err(Error::Dimension("CRF parameter shapes do not match the state count".into()));
    }

    let mut score: Vec<f64> = (0..states).map(|s| start.data()[s] + e.scores.get(0, s)).collect();
    let mut backptr: Vec<Vec<usize>> = Vec::with_capacity(slots.saturating_sub(1));

    for t in 1..slots {
        let mut next = vec![f64::NEG_INFINITY; states];
        let mut ptr = vec![0usize; states];
        for (n, (nv, np)) in next.iter_mut().zip(ptr.iter_mut()).enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0usize;
            for (p, prev_score) in score.iter().enumerate() {
                let cand = prev_score + transitions.get(p, n);
                if cand > best {
                    best = cand;
                    best_prev = p;
                }
            }
            *nv = best + e.scores.get(t, n);
            *np = best_prev;
        }
        score = next;
        backptr.push(ptr);
    }

    let mut best_state = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    for (s, v) in score.iter().enumerate() {
        let total = v + end.data()[s];
        if total > best_score {
            best_score = total;
            best_state = s;
        }
    }

    let mut path = vec![best_state];
    for ptr in backptr.iter().rev() {
        path.push(ptr[*path.last().unwrap()]);
    }
    path.reverse();
    Ok((path, best_score))
}

/// Tape-bound CRF potentials.
pub struct CrfVars {
    pub transitions: Var,
    pub start: Var,
    pub end: Var,
}

impl CrfLayer {
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> CrfVars {
        CrfVars {
            transitions: tape.param(store, self.transitions),
            start: tape.param(store, self.start),
            end: tape.param(store, self.end),
        }
    }

    /// Log partition function over all state sequences, via the forward
    /// recursion in log space.
    pub fn forward_logz(&self, tape: &mut Tape, vars: &CrfVars, emissions: &[Var]) -> Result<Var> {
        if emissions.is_empty() {
            return Err(Error::Dimension("forward_logz over zero slots".into()));
        }
        let mut alpha = tape.add(emissions[0], vars.start)?;
        for e in &emissions[1..] {
            let scores = tape.broadcast_add_col(alpha, vars.transitions)?;
            let reduced = tape.col_logsumexp(scores)?;
            alpha = tape.add(reduced, *e)?;
        }
        let terminal = tape.add(alpha, vars.end)?;
        tape.logsumexp(terminal)
    }

    /// Forward recursion restricted to the allowed states of each slot.
    pub fn constrained_logz(
        &self,
        tape: &mut Tape,
        vars: &CrfVars,
        emissions: &[Var],
        allowed: &[Vec<usize>],
    ) -> Result<Var> {
        if emissions.is_empty() || emissions.len() != allowed.len() {
            return Err(Error::Dimension(format!(
                "constrained_logz: {} emission rows, {} allowed sets",
                emissions.len(),
                allowed.len()
            )));
        }
        if allowed.iter().any(|a| a.is_empty()) {
            return Err(Error::Data("constrained_logz: empty allowed state set".into()));
        }
        let first = tape.add(emissions[0], vars.start)?;
        let mut alpha = tape.gather_rows(first, &allowed[0])?;
        for (t, e) in emissions.iter().enumerate().skip(1) {
            let sub = tape.gather_sub(vars.transitions, &allowed[t - 1], &allowed[t])?;
            let scores = tape.broadcast_add_col(alpha, sub)?;
            let reduced = tape.col_logsumexp(scores)?;
            let em = tape.gather_rows(*e, &allowed[t])?;
            alpha = tape.add(reduced, em)?;
        }
        let last = allowed.last().unwrap();
        let end_sub = tape.gather_rows(vars.end, last)?;
        let terminal = tape.add(alpha, end_sub)?;
        tape.logsumexp(terminal)
    }

    /// Negative log-likelihood of the gold-consistent paths:
    /// `forward_logz - constrained_logz`. Gradients flow to the
    /// emissions (hence heads and encoder) and every CRF potential.
    pub fn nll(&self, tape: &mut Tape, vars: &CrfVars, emissions: &[Var], allowed: &[Vec<usize>]) -> Result<Var> {
        let logz = self.forward_logz(tape, vars, emissions)?;
        let gold = self.constrained_logz(tape, vars, emissions, allowed)?;
        tape.sub(logz, gold)
    }
}

/// Exhaustive enumeration over all `S^T` state sequences. Independent of
/// the dynamic programs above; used by tests and the verification suite.
pub mod oracle {
    use super::*;

    fn path_score(e: &EmissionTable, transitions: &Matrix, start: &Matrix, end: &Matrix, path: &[usize]) -> f64 {
        let mut score = start.data()[path[0]] + e.scores.get(0, path[0]);
        for t in 1..path.len() {
            score += transitions.get(path[t - 1], path[t]) + e.scores.get(t, path[t]);
        }
        score + end.data()[*path.last().unwrap()]
    }

    fn for_each_path(slots: usize, states: usize, mut f: impl FnMut(&[usize])) {
        let mut path = vec![0usize; slots];
        loop {
            f(&path);
            let mut t = slots;
            loop {
                if t == 0 {
                    return;
                }
                t -= 1;
                path[t] += 1;
                if path[t] < states {
                    break;
                }
                path[t] = 0;
            }
        }
    }

    /// Best path and score by brute force (lexicographically first on ties).
    pub fn best_path(e: &EmissionTable, transitions: &Matrix, start: &Matrix, end: &Matrix) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for_each_path(e.slots(), e.states(), |path| {
            let score = path_score(e, transitions, start, end, path);
            if best.as_ref().map_or(true, |(_, b)| score > *b) {
                best = Some((path.to_vec(), score));
            }
        });
        best.unwrap()
    }

    /// Log partition by brute force.
    pub fn logz(e: &EmissionTable, transitions: &Matrix, start: &Matrix, end: &Matrix) -> f64 {
        let mut scores = Vec::new();
        for_each_path(e.slots(), e.states(), |path| {
            scores.push(path_score(e, transitions, start, end, path));
        });
        logsumexp(&scores).unwrap()
    }

    /// Log total mass of paths consistent with the allowed sets.
    pub fn constrained_logz(
        e: &EmissionTable,
        transitions: &Matrix,
        start: &Matrix,
        end: &Matrix,
        allowed: &[Vec<usize>],
    ) -> f64 {
        let mut scores = Vec::new();
        for_each_path(e.slots(), e.states(), |path| {
            if path.iter().zip(allowed.iter()).all(|(s, a)| a.contains(s)) {
                scores.push(path_score(e, transitions, start, end, path));
            }
        });
        logsumexp(&scores).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn random_instance(slots: usize, states: usize, rng: &mut Rng) -> (EmissionTable, Matrix, Matrix, Matrix) {
        let mut scores = Matrix::zeros(slots, states);
        for i in 0..slots {
            for j in 0..states {
                scores.set(i, j, rng.uniform(-3.0, 3.0));
            }
        }
        let mut transitions = Matrix::zeros(states, states);
        for i in 0..states {
            for j in 0..states {
                transitions.set(i, j, rng.uniform(-2.0, 2.0));
            }
        }
        let start_v: Vec<f64> = (0..states).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let end_v: Vec<f64> = (0..states).map(|_| rng.uniform(-1.0, 1.0)).collect();
        (EmissionTable::new(scores), transitions, Matrix::column(&start_v), Matrix::column(&end_v))
    }

    fn tape_logz(e: &EmissionTable, transitions: &Matrix, start: &Matrix, end: &Matrix) -> f64 {
        let mut store = ParamStore::new();
        let layer = CrfLayer {
            space: CrfStateSpace::Typed8,
            transitions: store.add("t", transitions.clone(), true),
            start: store.add("s", start.clone(), true),
            end: store.add("e", end.clone(), true),
        };
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape, &store);
        let nodes: Vec<Var> = (0..e.slots())
            .map(|t| tape.constant(Matrix::column(e.scores.row(t))))
            .collect();
        let z = layer.forward_logz(&mut tape, &vars, &nodes).unwrap();
        tape.value(z).data()[0]
    }

    fn tape_constrained(
        e: &EmissionTable,
        transitions: &Matrix,
        start: &Matrix,
        end: &Matrix,
        allowed: &[Vec<usize>],
    ) -> f64 {
        let mut store = ParamStore::new();
        let layer = CrfLayer {
            space: CrfStateSpace::Typed8,
            transitions: store.add("t", transitions.clone(), true),
            start: store.add("s", start.clone(), true),
            end: store.add("e", end.clone(), true),
        };
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape, &store);
        let nodes: Vec<Var> = (0..e.slots())
            .map(|t| tape.constant(Matrix::column(e.scores.row(t))))
            .collect();
        let z = layer.constrained_logz(&mut tape, &vars, &nodes, allowed).unwrap();
        tape.value(z).data()[0]
    }

    #[test]
    fn typed8_masking_layout() {
        let space = CrfStateSpace::Typed8;
        assert_eq!(space.size(), 8);
        assert_eq!(space.state_kind(0), Some(SlotKind::Implicit));
        assert_eq!(space.state_kind(7), Some(SlotKind::Explicit));
        assert_eq!(space.state_label(5), 1);
        assert_eq!(space.allowed_states(SlotKind::Explicit, &[0, 2]), vec![4, 6]);

        let mut tape = Tape::new();
        let logits = tape.constant(Matrix::column(&[0.1, 0.2, 0.3, 0.4]));
        let nodes = emissions(&mut tape, &[logits], &[SlotKind::Explicit], space).unwrap();
        let v = tape.value(nodes[0]);
        assert_eq!(v.rows(), 8);
        for s in 0..4 {
            assert_eq!(v.data()[s], MASK_SCORE);
        }
        assert_eq!(&v.data()[4..], &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn plain4_passes_logits_through() {
        let mut tape = Tape::new();
        let logits = tape.constant(Matrix::column(&[1.0, -1.0, 0.5, 0.0]));
        let nodes = emissions(&mut tape, &[logits], &[SlotKind::Implicit], CrfStateSpace::Plain4).unwrap();
        assert_eq!(tape.value(nodes[0]).data(), &[1.0, -1.0, 0.5, 0.0]);
    }

    #[test]
    fn emission_table_shape() {
        let mut tape = Tape::new();
        let kinds = [SlotKind::Implicit, SlotKind::Explicit, SlotKind::Implicit];
        let logits: Vec<Var> =
            (0..3).map(|i| tape.constant(Matrix::filled(4, 1, i as f64))).collect();
        let nodes = emissions(&mut tape, &logits, &kinds, CrfStateSpace::Typed8).unwrap();
        let table = emission_values(&tape, &nodes);
        assert_eq!((table.slots(), table.states()), (3, 8));
    }

    #[test]
    fn viterbi_single_slot_is_argmax_of_start_emission_end() {
        let e = EmissionTable::new(Matrix::from_vec(1, 3, vec![0.5, 2.0, 1.0]).unwrap());
        let transitions = Matrix::zeros(3, 3);
        let start = Matrix::column(&[0.0, 0.0, 5.0]);
        let end = Matrix::column(&[0.0, 0.0, 0.0]);
        let (path, score) = viterbi(&e, &transitions, &start, &end).unwrap();
        assert_eq!(path, vec![2]);
        assert!((score - 6.0).abs() < 1e-12);
    }

    #[test]
    fn viterbi_zero_potentials_factorizes() {
        let e = EmissionTable::new(
            Matrix::from_vec(3, 4, vec![
                0.0, 3.0, 1.0, 2.0,
                5.0, 0.0, 1.0, 2.0,
                0.0, 1.0, 2.0, 9.0,
            ])
            .unwrap(),
        );
        let (path, score) = viterbi(&e, &Matrix::zeros(4, 4), &Matrix::zeros(4, 1), &Matrix::zeros(4, 1)).unwrap();
        assert_eq!(path, vec![1, 0, 3]);
        assert!((score - 17.0).abs() < 1e-12);
    }

    #[test]
    fn viterbi_ties_break_to_lowest_state() {
        let e = EmissionTable::new(Matrix::zeros(3, 3));
        let (path, score) = viterbi(&e, &Matrix::zeros(3, 3), &Matrix::zeros(3, 1), &Matrix::zeros(3, 1)).unwrap();
        assert_eq!(path, vec![0, 0, 0]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let mut rng = Rng::new(13);
        for case in 0..40 {
            let slots = 1 + rng.below(4);
            let states = if case % 2 == 0 { 4 } else { 8 };
            let (e, t, s, en) = random_instance(slots, states, &mut rng);
            let (path, score) = viterbi(&e, &t, &s, &en).unwrap();
            let (want_path, want_score) = oracle::best_path(&e, &t, &s, &en);
            assert_eq!(path, want_path);
            assert!((score - want_score).abs() < 1e-8);
        }
    }

    #[test]
    fn forward_logz_single_slot_zero_boundaries() {
        let e = EmissionTable::new(Matrix::from_vec(1, 4, vec![0.3, -0.7, 1.1, 0.0]).unwrap());
        let z = tape_logz(&e, &Matrix::zeros(4, 4), &Matrix::zeros(4, 1), &Matrix::zeros(4, 1));
        let want = logsumexp(&[0.3, -0.7, 1.1, 0.0]).unwrap();
        assert!((z - want).abs() < 1e-12);
    }

    #[test]
    fn forward_logz_all_zero_scores_is_t_ln_s() {
        for (slots, states) in [(1usize, 4usize), (3, 4), (2, 8), (4, 8)] {
            let e = EmissionTable::new(Matrix::zeros(slots, states));
            let z = tape_logz(&e, &Matrix::zeros(states, states), &Matrix::zeros(states, 1), &Matrix::zeros(states, 1));
            let want = slots as f64 * (states as f64).ln();
            assert!((z - want).abs() < 1e-10, "{slots}x{states}: {z} vs {want}");
        }
    }

    #[test]
    fn forward_logz_matches_enumeration() {
        let mut rng = Rng::new(17);
        for case in 0..30 {
            let slots = 1 + rng.below(4);
            let states = if case % 2 == 0 { 4 } else { 8 };
            let (e, t, s, en) = random_instance(slots, states, &mut rng);
            let z = tape_logz(&e, &t, &s, &en);
            let want = oracle::logz(&e, &t, &s, &en);
            assert!((z - want).abs() < 1e-8);
        }
    }

    #[test]
    fn forward_logz_dominates_viterbi_score() {
        let mut rng = Rng::new(19);
        for _ in 0..20 {
            let (e, t, s, en) = random_instance(1 + rng.below(4), 4, &mut rng);
            let (_, best) = viterbi(&e, &t, &s, &en).unwrap();
            let z = tape_logz(&e, &t, &s, &en);
            assert!(z > best, "logZ {z} must strictly exceed best path {best} for S >= 2");
        }
    }

    #[test]
    fn constrained_singletons_give_exact_path_score() {
        let mut rng = Rng::new(23);
        let (e, t, s, en) = random_instance(3, 4, &mut rng);
        let path = vec![2usize, 0, 3];
        let allowed: Vec<Vec<usize>> = path.iter().map(|p| vec![*p]).collect();
        let z = tape_constrained(&e, &t, &s, &en, &allowed);
        let mut want = s.data()[2] + e.scores.get(0, 2);
        want += t.get(2, 0) + e.scores.get(1, 0);
        want += t.get(0, 3) + e.scores.get(2, 3);
        want += en.data()[3];
        assert!((z - want).abs() < 1e-10);
    }

    #[test]
    fn vacuous_constraints_equal_forward() {
        let mut rng = Rng::new(29);
        let (e, t, s, en) = random_instance(3, 4, &mut rng);
        let allowed: Vec<Vec<usize>> = (0..3).map(|_| (0..4).collect()).collect();
        let z = tape_constrained(&e, &t, &s, &en, &allowed);
        let full = tape_logz(&e, &t, &s, &en);
        assert!((z - full).abs() < 1e-10);
        assert!(z <= full + 1e-10);
    }

    #[test]
    fn mixed_constraints_match_enumeration() {
        let mut rng = Rng::new(31);
        for _ in 0..20 {
            let (e, t, s, en) = random_instance(3, 4, &mut rng);
            let allowed: Vec<Vec<usize>> = (0..3)
                .map(|_| {
                    let mut set: Vec<usize> = (0..4).filter(|_| rng.bernoulli(0.5)).collect();
                    if set.is_empty() {
                        set.push(rng.below(4));
                    }
                    set
                })
                .collect();
            let z = tape_constrained(&e, &t, &s, &en, &allowed);
            let want = oracle::constrained_logz(&e, &t, &s, &en, &allowed);
            assert!((z - want).abs() < 1e-8);
            let full = tape_logz(&e, &t, &s, &en);
            assert!(z <= full + 1e-10);
        }
    }

    #[test]
    fn empty_allowed_set_is_data_error() {
        let mut store = ParamStore::new();
        let layer = CrfLayer::new(&mut store, CrfStateSpace::Plain4);
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape, &store);
        let e0 = tape.constant(Matrix::column(&[0.0; 4]));
        let err = layer.constrained_logz(&mut tape, &vars, &[e0], &[vec![]]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn nll_is_nonnegative_and_matches_enumeration() {
        let mut rng = Rng::new(37);
        for _ in 0..20 {
            let (e, t, s, en) = random_instance(3, 4, &mut rng);
            let allowed: Vec<Vec<usize>> = (0..3).map(|_| vec![rng.below(4)]).collect();

            let mut store = ParamStore::new();
            let layer = CrfLayer {
                space: CrfStateSpace::Plain4,
                transitions: store.add("t", t.clone(), true),
                start: store.add("s", s.clone(), true),
                end: store.add("e", en.clone(), true),
            };
            let mut tape = Tape::new();
            let vars = layer.bind(&mut tape, &store);
            let nodes: Vec<Var> =
                (0..3).map(|i| tape.constant(Matrix::column(e.scores.row(i)))).collect();
            let nll = layer.nll(&mut tape, &vars, &nodes, &allowed).unwrap();
            let got = tape.value(nll).data()[0];

            assert!(got >= 0.0);
            let want = oracle::logz(&e, &t, &s, &en) - oracle::constrained_logz(&e, &t, &s, &en, &allowed);
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn crf_gradients_pass_finite_differences() {
        use crate::numeric::{finite_diff_check, FdSettings};
        let mut rng = Rng::new(41);
        let (e, t, s, en) = random_instance(4, 8, &mut rng);
        let mut store = ParamStore::new();
        let layer = CrfLayer {
            space: CrfStateSpace::Typed8,
            transitions: store.add("crf.t", t, true),
            start: store.add("crf.s", s, true),
            end: store.add("crf.e", en, true),
        };
        let allowed: Vec<Vec<usize>> = vec![vec![0, 5], vec![2], vec![1, 7], vec![4]];
        let report = finite_diff_check(
            &mut store,
            |st, with_grad| {
                let mut tape = Tape::new();
                let vars = layer.bind(&mut tape, st);
                let nodes: Vec<Var> =
                    (0..4).map(|i| tape.constant(Matrix::column(e.scores.row(i)))).collect();
                let nll = layer.nll(&mut tape, &vars, &nodes, &allowed)?;
                if with_grad {
                    tape.backward(nll, st)?;
                }
                Ok(tape.value(nll).data()[0])
            },
            &FdSettings { coords_per_block: 0, ..FdSettings::default() },
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn masked_states_never_decoded() {
        let mut rng = Rng::new(43);
        let space = CrfStateSpace::Typed8;
        for _ in 0..30 {
            let slots = 1 + rng.below(5);
            let kinds: Vec<SlotKind> = (0..slots)
                .map(|_| if rng.bernoulli(0.5) { SlotKind::Explicit } else { SlotKind::Implicit })
                .collect();
            let mut tape = Tape::new();
            let logits: Vec<Var> = (0..slots)
                .map(|_| {
                    let v: Vec<f64> = (0..4).map(|_| rng.uniform(-100.0, 100.0)).collect();
                    tape.constant(Matrix::column(&v))
                })
                .collect();
            let nodes = emissions(&mut tape, &logits, &kinds, space).unwrap();
            let table = emission_values(&tape, &nodes);

            let mut transitions = Matrix::zeros(8, 8);
            for i in 0..8 {
                for j in 0..8 {
                    transitions.set(i, j, rng.uniform(-100.0, 100.0));
                }
            }
            let start_v: Vec<f64> = (0..8).map(|_| rng.uniform(-100.0, 100.0)).collect();
            let end_v: Vec<f64> = (0..8).map(|_| rng.uniform(-100.0, 100.0)).collect();
            let (path, _) =
                viterbi(&table, &transitions, &Matrix::column(&start_v), &Matrix::column(&end_v)).unwrap();
            for (state, kind) in path.iter().zip(kinds.iter()) {
                assert_eq!(space.state_kind(*state), Some(*kind));
            }
        }
    }
}
