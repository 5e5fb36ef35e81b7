//! The two layer families the model needs: a two-layer ReLU perceptron and
//! a single-layer recurrent encoder (gated by default, vanilla tanh behind
//! the same interface for ablations).

use super::store::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use rand::Rng;

/// Two-layer perceptron: `out = W2 * relu(W1 * x + b1) + b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w1 = store.register_uniform(&format!("{prefix}.w1"), hidden, in_dim, in_dim, rng);
        let b1 = store.register_uniform(&format!("{prefix}.b1"), hidden, 1, in_dim, rng);
        let w2 = store.register_uniform(&format!("{prefix}.w2"), out_dim, hidden, hidden, rng);
        let b2 = store.register_uniform(&format!("{prefix}.b2"), out_dim, 1, hidden, rng);
        Mlp {
            w1,
            b1,
            w2,
            b2,
            in_dim,
            hidden,
            out_dim,
        }
    }

    /// Build the forward graph for one input column vector.
    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        assert_eq!(
            x.rows(),
            self.in_dim,
            "mlp input width {} != expected {}",
            x.rows(),
            self.in_dim
        );
        let w1 = tape.param(store, self.w1);
        let b1 = tape.param(store, self.b1);
        let w2 = tape.param(store, self.w2);
        let b2 = tape.param(store, self.b2);
        let h = tape.matmul(w1, x);
        let h = tape.add(h, b1);
        let h = tape.relu(h);
        let o = tape.matmul(w2, h);
        tape.add(o, b2)
    }

    /// Weight matrices only (for regularization penalties).
    pub fn weight_ids(&self) -> [ParamId; 2] {
        [self.w1, self.w2]
    }
}

/// Cell flavor for [`Rnn`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    /// Update/reset-gated cell.
    Gated,
    /// Plain tanh recurrence.
    Vanilla,
}

/// Single-layer recurrent encoder over per-visit input vectors.
///
/// Gated recursion (zero initial state):
/// ```text
/// r_t = sigmoid(W_r x_t + U_r h + b_r)
/// u_t = sigmoid(W_u x_t + U_u h + b_u)
/// c_t = tanh(W_c x_t + U_c (r_t . h) + b_c)
/// h_t = u_t . h + (1 - u_t) . c_t
/// ```
/// Backpropagation runs through the full sequence; no truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rnn {
    pub kind: RnnKind,
    w_r: ParamId,
    u_r: ParamId,
    b_r: ParamId,
    w_u: ParamId,
    u_u: ParamId,
    b_u: ParamId,
    w_c: ParamId,
    u_c: ParamId,
    b_c: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl Rnn {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        kind: RnnKind,
        in_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut reg = |suffix: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut _| {
            store.register_uniform(&format!("{prefix}.{suffix}"), rows, cols, fan_in, rng)
        };
        let w_r = reg("w_r", hidden, in_dim, in_dim, rng);
        let u_r = reg("u_r", hidden, hidden, hidden, rng);
        let b_r = reg("b_r", hidden, 1, hidden, rng);
        let w_u = reg("w_u", hidden, in_dim, in_dim, rng);
        let u_u = reg("u_u", hidden, hidden, hidden, rng);
        let b_u = reg("b_u", hidden, 1, hidden, rng);
        let w_c = reg("w_c", hidden, in_dim, in_dim, rng);
        let u_c = reg("u_c", hidden, hidden, hidden, rng);
        let b_c = reg("b_c", hidden, 1, hidden, rng);
        Rnn {
            kind,
            w_r,
            u_r,
            b_r,
            w_u,
            u_u,
            b_u,
            w_c,
            u_c,
            b_c,
            in_dim,
            hidden,
        }
    }

    /// Encode a non-empty sequence of input vectors; returns the final
    /// hidden state as an `hidden x 1` node.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, steps: &[Vec<f64>]) -> Var {
        assert!(!steps.is_empty(), "rnn encode on empty sequence");
        let zeros = vec![0.0; self.hidden];
        let mut h = tape.constant(self.hidden, 1, &zeros);
        for step in steps {
            assert_eq!(
                step.len(),
                self.in_dim,
                "rnn input width {} != expected {}",
                step.len(),
                self.in_dim
            );
            let x = tape.constant(self.in_dim, 1, step);
            h = match self.kind {
                RnnKind::Gated => {
                    let w_r = tape.param(store, self.w_r);
                    let u_r = tape.param(store, self.u_r);
                    let b_r = tape.param(store, self.b_r);
                    let w_u = tape.param(store, self.w_u);
                    let u_u = tape.param(store, self.u_u);
                    let b_u = tape.param(store, self.b_u);
                    let w_c = tape.param(store, self.w_c);
                    let u_c = tape.param(store, self.u_c);
                    let b_c = tape.param(store, self.b_c);

                    let rx = tape.matmul(w_r, x);
                    let rh = tape.matmul(u_r, h);
                    let r = tape.add(rx, rh);
                    let r = tape.add(r, b_r);
                    let r = tape.sigmoid(r);

                    let ux = tape.matmul(w_u, x);
                    let uh = tape.matmul(u_u, h);
                    let u = tape.add(ux, uh);
                    let u = tape.add(u, b_u);
                    let u = tape.sigmoid(u);

                    let gated = tape.mul(r, h);
                    let cx = tape.matmul(w_c, x);
                    let ch = tape.matmul(u_c, gated);
                    let c = tape.add(cx, ch);
                    let c = tape.add(c, b_c);
                    let c = tape.tanh(c);

                    let keep = tape.mul(u, h);
                    let one_minus_u = tape.affine(u, -1.0, 1.0);
                    let new = tape.mul(one_minus_u, c);
                    tape.add(keep, new)
                }
                RnnKind::Vanilla => {
                    let w_c = tape.param(store, self.w_c);
                    let u_c = tape.param(store, self.u_c);
                    let b_c = tape.param(store, self.b_c);
                    let cx = tape.matmul(w_c, x);
                    let ch = tape.matmul(u_c, h);
                    let c = tape.add(cx, ch);
                    let c = tape.add(c, b_c);
                    tape.tanh(c)
                }
            };
        }
        h
    }

    pub fn weight_ids(&self) -> Vec<ParamId> {
        match self.kind {
            RnnKind::Gated => vec![self.w_r, self.u_r, self.w_u, self.u_u, self.w_c, self.u_c],
            RnnKind::Vanilla => vec![self.w_c, self.u_c],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mlp_zero_weights_pass_bias_through() {
        let mut store = ParamStore::new();
        let mlp = Mlp {
            w1: store.register("m.w1", 3, 2, vec![0.0; 6]),
            b1: store.register("m.b1", 3, 1, vec![0.0; 3]),
            w2: store.register("m.w2", 2, 3, vec![0.0; 6]),
            b2: store.register("m.b2", 2, 1, vec![0.7, -0.3]),
            in_dim: 2,
            hidden: 3,
            out_dim: 2,
        };
        let mut tape = Tape::new();
        let x = tape.constant(2, 1, &[5.0, -9.0]);
        let y = mlp.apply(&mut tape, &store, x);
        assert_eq!(tape.value(y), &[0.7, -0.3]);
    }

    #[test]
    fn mlp_relu_gates_negative_input() {
        let mut store = ParamStore::new();
        let mlp = Mlp {
            w1: store.register("m.w1", 1, 1, vec![1.0]),
            b1: store.register("m.b1", 1, 1, vec![0.0]),
            w2: store.register("m.w2", 1, 1, vec![1.0]),
            b2: store.register("m.b2", 1, 1, vec![0.0]),
            in_dim: 1,
            hidden: 1,
            out_dim: 1,
        };
        let mut tape = Tape::new();
        let x = tape.constant(1, 1, &[-2.0]);
        let y = mlp.apply(&mut tape, &store, x);
        assert_eq!(tape.value(y), &[0.0]);
    }

    #[test]
    fn rnn_zero_weights_fixed_point() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rnn = Rnn::new(&mut store, "enc", RnnKind::Gated, 3, 4, &mut rng);
        for id in store.ids() {
            store.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let h = rnn.encode(
            &mut tape,
            &store,
            &[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 0.1]],
        );
        assert!(tape.value(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rnn_depends_on_sequence_length() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let rnn = Rnn::new(&mut store, "enc", RnnKind::Gated, 2, 3, &mut rng);
        let step = vec![0.4, -1.2];
        let mut t1 = Tape::new();
        let h1 = rnn.encode(&mut t1, &store, std::slice::from_ref(&step));
        let mut t2 = Tape::new();
        let h2 = rnn.encode(&mut t2, &store, &[step.clone(), step.clone()]);
        assert_ne!(t1.value(h1), t2.value(h2));
    }

    #[test]
    #[should_panic(expected = "empty sequence")]
    fn rnn_empty_sequence_panics() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let rnn = Rnn::new(&mut store, "enc", RnnKind::Gated, 2, 3, &mut rng);
        let mut tape = Tape::new();
        rnn.encode(&mut tape, &store, &[]);
    }
}
