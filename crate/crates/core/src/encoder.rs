//! Two-level recurrent encoder: a word-level bidirectional LSTM over the
//! whole paragraph, max-pooling per discourse-unit span, and a unit-level
//! bidirectional LSTM producing the final unit representations.

use crate::corpus::{featurize, EmbeddingTable, FeaturizerConfig, Paragraph};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, ParamId, ParamStore, Rng, Tape, Var};

/// One direction of an LSTM layer. Gate order in the stacked weight
/// matrices is fixed as [input, forget, cell-candidate, output].
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H x input_dim`
    pub input_weights: ParamId,
    /// `4H x H`
    pub recurrent_weights: ParamId,
    /// `4H x 1`; the forget segment is initialized to 1.0
    pub bias: ParamId,
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let four_h = 4 * hidden_dim;
        let input_weights = store.add(format!("{name}.w_in"), xavier(four_h, input_dim, rng), true);
        let recurrent_weights = store.add(format!("{name}.w_rec"), xavier(four_h, hidden_dim, rng), true);
        let mut bias = Matrix::zeros(four_h, 1);
        for i in hidden_dim..2 * hidden_dim {
            bias.data_mut()[i] = 1.0;
        }
        let bias = store.add(format!("{name}.bias"), bias, true);
        LstmParams { input_dim, hidden_dim, input_weights, recurrent_weights, bias }
    }
}

/// Tape-bound handles to one direction's weights.
#[derive(Clone, Copy)]
pub struct LstmVars {
    pub hidden_dim: usize,
    pub input_weights: Var,
    pub recurrent_weights: Var,
    pub bias: Var,
}

impl LstmParams {
    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> LstmVars {
        LstmVars {
            hidden_dim: self.hidden_dim,
            input_weights: tape.param(store, self.input_weights),
            recurrent_weights: tape.param(store, self.recurrent_weights),
            bias: tape.param(store, self.bias),
        }
    }
}

/// One LSTM cell update: sigmoid input/forget/output gates, tanh
/// candidate, `c_t = f (.) c_prev + i (.) g`, `h_t = o (.) tanh(c_t)`.
pub fn lstm_step(tape: &mut Tape, params: &LstmVars, x: Var, h_prev: Var, c_prev: Var) -> Result<(Var, Var)> {
    let h = params.hidden_dim;
    let wx = tape.matvec(params.input_weights, x)?;
    let wh = tape.matvec(params.recurrent_weights, h_prev)?;
    let sum = tape.add(wx, wh)?;
    let pre = tape.add(sum, params.bias)?;

    let i_pre = tape.slice(pre, 0, h)?;
    let f_pre = tape.slice(pre, h, h)?;
    let g_pre = tape.slice(pre, 2 * h, h)?;
    let o_pre = tape.slice(pre, 3 * h, h)?;

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let g = tape.tanh(g_pre);
    let o = tape.sigmoid(o_pre);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c);
    let h_out = tape.mul(o, c_act)?;
    Ok((h_out, c))
}

/// Forward and backward directions over one input dimensionality.
#[derive(Clone, Debug)]
pub struct BiLstmLayer {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmLayer {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        BiLstmLayer {
            forward: LstmParams::new(store, &format!("{name}.fwd"), input_dim, hidden_dim, rng),
            backward: LstmParams::new(store, &format!("{name}.bwd"), input_dim, hidden_dim, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden_dim
    }
}

fn run_direction(tape: &mut Tape, params: &LstmVars, xs: &[Var], reversed: bool) -> Result<Vec<Var>> {
    let h = params.hidden_dim;
    let zero = tape.constant(Matrix::zeros(h, 1));
    let mut state = (zero, zero);
    let mut states = Vec::with_capacity(xs.len());
    let order: Vec<usize> =
        if reversed { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
    for t in order {
        state = lstm_step(tape, params, xs[t], state.0, state.1)?;
        states.push(state.0);
    }
    if reversed {
        states.reverse();
    }
    Ok(states)
}

/// Run both directions over a sequence; output t is `[fwd_t ; bwd_t]`,
/// a `2H`-dim vector, with zero initial states.
pub fn bilstm_run(tape: &mut Tape, store: &ParamStore, layer: &BiLstmLayer, xs: &[Var]) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(Error::Dimension("bilstm_run over an empty sequence".into()));
    }
    let fwd = layer.forward.bind(tape, store);
    let bwd = layer.backward.bind(tape, store);
    let fwd_states = run_direction(tape, &fwd, xs, false)?;
    let bwd_states = run_direction(tape, &bwd, xs, true)?;
    fwd_states
        .iter()
        .zip(bwd_states.iter())
        .map(|(f, b)| tape.concat(&[*f, *b]))
        .collect()
}

/// Coordinate-wise maximum of the word vectors inside one unit span
/// (inclusive). Gradient flows only to argmax positions; the first
/// occurrence wins on ties.
pub fn du_maxpool(tape: &mut Tape, hs: &[Var], span: (usize, usize)) -> Result<Var> {
    let (start, end) = span;
    if start > end || end >= hs.len() {
        return Err(Error::Dimension(format!("pool span ({start}, {end}) out of {} positions", hs.len())));
    }
    tape.max_over(&hs[start..=end])
}

/// Dropout configuration for the encoder pipeline. Site 3 (between
/// max-pooling and the unit-level layer) is switchable because its
/// placement is a modeling choice rather than a structural one.
#[derive(Clone, Copy, Debug)]
pub struct DropoutPlan {
    pub p: f64,
    pub after_pool: bool,
}

impl DropoutPlan {
    pub fn disabled() -> Self {
        DropoutPlan { p: 0.0, after_pool: true }
    }
}

/// The two-level encoder: word layer over the whole paragraph, pooling
/// per unit span, then the unit-level layer.
#[derive(Clone, Debug)]
pub struct EncoderStack {
    pub word_layer: BiLstmLayer,
    pub du_layer: BiLstmLayer,
    pub dropout: DropoutPlan,
}

impl EncoderStack {
    pub fn new(store: &mut ParamStore, feature_dim: usize, hidden_dim: usize, dropout: DropoutPlan, rng: &mut Rng) -> Self {
        let word_layer = BiLstmLayer::new(store, "encoder.word", feature_dim, hidden_dim, rng);
        let du_layer = BiLstmLayer::new(store, "encoder.du", 2 * hidden_dim, hidden_dim, rng);
        EncoderStack { word_layer, du_layer, dropout }
    }

    /// Representation width of one discourse unit (`2H`).
    pub fn unit_dim(&self) -> usize {
        self.du_layer.output_dim()
    }

    /// Featurize tokens and push them through the full pipeline:
    /// features -> dropout -> word Bi-LSTM -> dropout -> max-pool per
    /// span -> dropout (optional site) -> unit Bi-LSTM -> dropout.
    /// Returns one representation per discourse unit.
    pub fn encode_paragraph(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        paragraph: &Paragraph,
        table: &EmbeddingTable,
        features: &FeaturizerConfig,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Vec<Var>> {
        paragraph.validate()?;
        let p = self.dropout.p;

        let mut inputs = Vec::with_capacity(paragraph.tokens.len());
        for token in &paragraph.tokens {
            let feat = tape.constant(featurize(token, table, features));
            inputs.push(tape.dropout(feat, p, rng, training)?);
        }

        let word_states = bilstm_run(tape, store, &self.word_layer, &inputs)?;
        let mut dropped = Vec::with_capacity(word_states.len());
        for h in word_states {
            dropped.push(tape.dropout(h, p, rng, training)?);
        }

        let mut pooled = Vec::with_capacity(paragraph.num_units());
        for span in &paragraph.du_spans {
            let mp = du_maxpool(tape, &dropped, *span)?;
            let mp = if self.dropout.after_pool { tape.dropout(mp, p, rng, training)? } else { mp };
            pooled.push(mp);
        }

        let du_states = bilstm_run(tape, store, &self.du_layer, &pooled)?;
        du_states.into_iter().map(|h| tape.dropout(h, p, rng, training)).collect()
    }
}
