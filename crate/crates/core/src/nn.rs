//! Layers on top of the tape: embeddings, affine maps, stacked GRUs and the
//! two-layer ReLU MLP.
//!
//! Layers only hold [`ParamId`]s into a shared [`ParamStore`]; the same
//! layer value works against any store built with the same names and shapes
//! (including a precision-cast copy).

use rand::Rng;
use sgg_autodiff::{ParamId, ParamStore, Result, Scalar, Tape, Tensor, Var};

/// Uniform `(−bound, bound)` matrix drawn row-major from `rng`.
pub fn uniform_tensor<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    bound: f64,
    rng: &mut R,
) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-bound..bound)))
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub entries: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        entries: usize,
        dim: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let table = store.add(name, uniform_tensor(entries, dim, bound, rng))?;
        Ok(Self {
            table,
            entries,
            dim,
        })
    }

    /// One row per index: `len × dim`.
    pub fn lookup<T: Scalar>(&self, tape: &mut Tape<'_, T>, indices: &[usize]) -> Result<Var> {
        self.lookup_packed(tape, indices, 1)
    }

    /// `per_row` consecutive indices laid side by side: `(len/per_row) × (per_row·dim)`.
    pub fn lookup_packed<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        indices: &[usize],
        per_row: usize,
    ) -> Result<Var> {
        let t = tape.param(self.table);
        tape.gather(t, indices, per_row)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    /// Weights uniform in `±1/√inputs`, bias zero. Every affine layer in the
    /// model reads a hidden state, so this is the `±1/√H` rule.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = store.add(format!("{name}.weight"), uniform_tensor(inputs, outputs, bound, rng))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(1, outputs))?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

/// Single GRU layer. Gates are fused column-wise in `[z | r | n]` order:
///
/// ```text
/// z = σ(x·W_z + h·U_z + b_z)
/// r = σ(x·W_r + h·U_r + b_r)
/// n = tanh(x·W_n + r ⊙ (h·U_n + b_n))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

/// Recorded in checkpoints so saved models say which gate variant they use.
pub const GRU_VARIANT: &str = "cho-reset-after-hidden-affine";

impl GruCell {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w = store.add(format!("{name}.w"), uniform_tensor(inputs, 3 * hidden, bound, rng))?;
        let u = store.add(format!("{name}.u"), uniform_tensor(hidden, 3 * hidden, bound, rng))?;
        let b = store.add(format!("{name}.b"), Tensor::zeros(1, 3 * hidden))?;
        Ok(Self {
            w,
            u,
            b,
            inputs,
            hidden,
        })
    }

    /// `x: n×inputs`, `h: n×hidden` → `n×hidden`.
    pub fn step<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden;
        let w = tape.param(self.w);
        let u = tape.param(self.u);
        let b = tape.param(self.b);
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(h, u)?;
        let hu = tape.add_bias(hu, b)?;

        let x_zr = tape.slice_cols(xw, 0, 2 * hs)?;
        let h_zr = tape.slice_cols(hu, 0, 2 * hs)?;
        let zr = tape.add(x_zr, h_zr)?;
        let zr = tape.sigmoid(zr);
        let z = tape.slice_cols(zr, 0, hs)?;
        let r = tape.slice_cols(zr, hs, hs)?;

        let x_n = tape.slice_cols(xw, 2 * hs, hs)?;
        let h_n = tape.slice_cols(hu, 2 * hs, hs)?;
        let gated = tape.mul(r, h_n)?;
        let n = tape.add(x_n, gated)?;
        let n = tape.tanh(n);

        // (1−z)⊙n + z⊙h  ==  n + z⊙(h−n)
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }
}

#[derive(Debug, Clone)]
pub struct GruStack {
    pub layers: Vec<GruCell>,
}

impl GruStack {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        assert!(num_layers >= 1, "a GRU stack needs at least one layer");
        let layers = (0..num_layers)
            .map(|l| {
                let width = if l == 0 { inputs } else { hidden };
                GruCell::new(store, &format!("{name}.l{l}"), width, hidden, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Zero per-layer states for `rows` sequences.
    pub fn zero_state<T: Scalar>(&self, tape: &mut Tape<'_, T>, rows: usize) -> Vec<Var> {
        self.layers
            .iter()
            .map(|c| tape.zeros(rows, c.hidden))
            .collect()
    }

    /// Advances every layer once; layer ℓ reads layer ℓ−1's new state.
    /// Returns the new per-layer states; the last one is the stack output.
    pub fn step<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, state: &[Var]) -> Result<Vec<Var>> {
        assert_eq!(state.len(), self.layers.len(), "one state per layer");
        let mut input = x;
        let mut next = Vec::with_capacity(state.len());
        for (cell, &h) in self.layers.iter().zip(state) {
            input = cell.step(tape, input, h)?;
            next.push(input);
        }
        Ok(next)
    }
}

/// affine → ReLU → affine.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        assert!(hidden > 0, "MLP hidden width must be positive");
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.0"), inputs, hidden, rng)?,
            out: Linear::new(store, &format!("{name}.1"), hidden, outputs, rng)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let a = self.hidden.forward(tape, x)?;
        let a = tape.relu(a);
        self.out.forward(tape, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use sgg_autodiff::{finite_difference_check, GradCheckConfig};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-loop GRU reference: `w` is in×3H, `u` is H×3H, row-major.
    fn gru_oracle(x: &[f64], h: &[f64], w: &[f64], u: &[f64], b: &[f64]) -> Vec<f64> {
        let hs = h.len();
        let lin = |k: usize| -> (f64, f64) {
            let xw: f64 = x.iter().enumerate().map(|(i, xi)| xi * w[i * 3 * hs + k]).sum();
            let hu: f64 = h.iter().enumerate().map(|(i, hi)| hi * u[i * 3 * hs + k]).sum();
            (xw, hu + b[k])
        };
        (0..hs)
            .map(|q| {
                let (zx, zh) = lin(q);
                let (rx, rh) = lin(hs + q);
                let (nx, nh) = lin(2 * hs + q);
                let z = sig(zx + zh);
                let r = sig(rx + rh);
                let n = (nx + r * nh).tanh();
                (1.0 - z) * n + z * h[q]
            })
            .collect()
    }

    fn fixed_cell(store: &mut ParamStore<f64>, inputs: usize, hs: usize, seed: u64) -> GruCell {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = GruCell::new(store, &format!("c{seed}"), inputs, hs, &mut rng).unwrap();
        // non-zero biases so the bias path is exercised too
        *store.get_mut(cell.b) = uniform_tensor(1, 3 * hs, 0.5, &mut rng);
        cell
    }

    #[test]
    fn zero_parameters_are_a_fixed_point() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = GruStack::new(&mut store, "g", 3, 4, 2, &mut rng).unwrap();
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new(&store);
        let mut state = stack.zero_state(&mut tape, 2);
        for _ in 0..3 {
            let x = tape.constant(Tensor::filled(2, 3, 0.7));
            state = stack.step(&mut tape, x, &state).unwrap();
        }
        for s in state {
            assert!(tape.value(s).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn two_unit_cell_matches_hand_values() {
        // hand-picked weights, x = (1, −2), h = (0.5, −0.25)
        let w: Vec<f64> = vec![
            0.1, -0.2, 0.3, 0.05, -0.1, 0.2, //
            0.0, 0.15, -0.05, 0.1, 0.2, -0.3,
        ];
        let u: Vec<f64> = vec![
            0.2, 0.1, -0.1, 0.3, 0.05, 0.1, //
            -0.2, 0.25, 0.15, -0.1, 0.3, 0.2,
        ];
        let b: Vec<f64> = vec![0.01, -0.02, 0.03, 0.0, 0.1, -0.1];
        let x = [1.0, -2.0];
        let h = [0.5, -0.25];

        let mut store = ParamStore::<f64>::new();
        let cell = GruCell {
            w: store.add("w", Tensor::new(2, 6, w.clone()).unwrap()).unwrap(),
            u: store.add("u", Tensor::new(2, 6, u.clone()).unwrap()).unwrap(),
            b: store.add("b", Tensor::new(1, 6, b.clone()).unwrap()).unwrap(),
            inputs: 2,
            hidden: 2,
        };
        let mut tape = Tape::new(&store);
        let xv = tape.constant(Tensor::new(1, 2, x.to_vec()).unwrap());
        let hv = tape.constant(Tensor::new(1, 2, h.to_vec()).unwrap());
        let out = cell.step(&mut tape, xv, hv).unwrap();

        // unit 0 written out by hand (columns z0 z1 r0 r1 n0 n1):
        //   z: x·W = 0.1 + 0 = 0.1;   h·U + b = 0.1 + 0.05 + 0.01 = 0.16
        //   r: x·W = 0.3 + 0.1 = 0.4; h·U + b = −0.05 − 0.0375 + 0.03 = −0.0575
        //   n: x·W = −0.1 − 0.4 = −0.5; h·U + b = 0.025 − 0.075 + 0.1 = 0.05
        let z0 = sig(0.26);
        let r0 = sig(0.3425);
        let n0 = (-0.5 + r0 * 0.05f64).tanh();
        let h0 = (1.0 - z0) * n0 + z0 * 0.5;
        let got = tape.value(out);
        assert!((got[0] - h0).abs() < 1e-12, "{} vs {}", got[0], h0);

        let oracle = gru_oracle(&x, &h, &w, &u, &b);
        for (g, o) in got.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_rows_are_independent() {
        let mut store = ParamStore::<f64>::new();
        let cell = fixed_cell(&mut store, 3, 4, 1);
        let xs = Tensor::from_fn(3, 3, |r, c| (r as f64 - c as f64) * 0.3);
        let hs = Tensor::from_fn(3, 4, |r, c| ((r * 4 + c) as f64 * 0.7).sin() * 0.9);
        let mut tape = Tape::new(&store);
        let xv = tape.constant(xs.clone());
        let hv = tape.constant(hs.clone());
        let out = cell.step(&mut tape, xv, hv).unwrap();
        let got = tape.tensor(out);
        for r in 0..3 {
            let o = gru_oracle(
                xs.row(r),
                hs.row(r),
                store.get(cell.w).data(),
                store.get(cell.u).data(),
                store.get(cell.b).data(),
            );
            for q in 0..4 {
                assert!((got.get(r, q) - o[q]).abs() < 1e-12);
                assert!(got.get(r, q).abs() < 1.0);
            }
        }
    }

    #[test]
    fn two_layer_stack_composes_cells() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let stack = GruStack::new(&mut store, "s", 3, 2, 2, &mut rng).unwrap();
        for c in &stack.layers {
            *store.get_mut(c.b) = uniform_tensor(1, 6, 0.3, &mut rng);
        }
        let x = [0.4, -0.9, 1.3];
        let h = [[0.1, -0.3], [0.6, 0.2]];
        let mut tape = Tape::new(&store);
        let xv = tape.constant(Tensor::new(1, 3, x.to_vec()).unwrap());
        let state: Vec<Var> = h
            .iter()
            .map(|s| tape.constant(Tensor::new(1, 2, s.to_vec()).unwrap()))
            .collect();
        let next = stack.step(&mut tape, xv, &state).unwrap();

        let p = |c: &GruCell| (store.get(c.w).data(), store.get(c.u).data(), store.get(c.b).data());
        let (w0, u0, b0) = p(&stack.layers[0]);
        let (w1, u1, b1) = p(&stack.layers[1]);
        let l0 = gru_oracle(&x, &h[0], w0, u0, b0);
        let l1 = gru_oracle(&l0, &h[1], w1, u1, b1);
        for (got, want) in [(next[0], &l0), (next[1], &l1)] {
            for (g, w) in tape.value(got).iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_layer_stack_is_the_cell() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stack = GruStack::new(&mut store, "s", 2, 3, 1, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::filled(1, 2, 0.5));
        let h = tape.constant(Tensor::filled(1, 3, -0.2));
        let via_stack = stack.step(&mut tape, x, &[h]).unwrap()[0];
        let via_cell = stack.layers[0].step(&mut tape, x, h).unwrap();
        assert_eq!(tape.value(via_stack), tape.value(via_cell));
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = GruStack::new(&mut store, "s", 3, 3, 2, &mut rng).unwrap();
        for c in &stack.layers {
            *store.get_mut(c.b) = uniform_tensor(1, 9, 0.3, &mut rng);
        }
        let xs = Tensor::from_fn(2, 3, |r, c| ((r * 3 + c) as f64).cos());
        let report = finite_difference_check(&mut store, &GradCheckConfig::default(), |tape| {
            let mut state = stack.zero_state(tape, 2);
            for _ in 0..2 {
                let x = tape.constant(xs.clone());
                state = stack.step(tape, x, &state)?;
            }
            let top = *state.last().unwrap();
            let sq = tape.mul(top, top)?;
            let s = tape.sum(sq);
            let t = tape.sum(top);
            tape.add(s, t)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn embedding_lookup_and_gradient() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = Embedding::new(&mut store, "e", 5, 2, 0.5, &mut rng).unwrap();
        let mut tape = Tape::new(&store);
        let rows = emb.lookup(&mut tape, &[3, 1, 3]).unwrap();
        assert_eq!(&tape.value(rows)[0..2], store.get(emb.table).row(3));
        let packed = emb.lookup_packed(&mut tape, &[3, 1, 3, 0], 2).unwrap();
        assert_eq!(tape.shape(packed).dims(), [2, 4]);
        assert_eq!(&tape.value(packed)[2..4], store.get(emb.table).row(1));
        let s = tape.sum(rows);
        let g = tape.backward(s).unwrap();
        let grad = g.get(emb.table);
        let want = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0, 0.0, 0.0];
        assert_eq!(grad.data(), &want);
    }

    #[test]
    fn mlp_zero_weights_give_bias_and_relu_clips() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = Mlp::new(&mut store, "m", 2, 2, 3, &mut rng).unwrap();
        *store.get_mut(mlp.out.bias) = Tensor::new(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let saved = store.get(mlp.hidden.weight).clone();
        store.get_mut(mlp.hidden.weight).data_mut().fill(0.0);
        {
            let mut tape = Tape::new(&store);
            let x = tape.constant(Tensor::filled(1, 2, 3.0));
            let y = mlp.forward(&mut tape, x).unwrap();
            assert_eq!(tape.value(y), &[1.0, -2.0, 0.5]);
        }
        // hidden pre-activations (1·1 + 1·(−1), 1·(−2) + 1·(−1)) = (0, −3) → both clipped
        *store.get_mut(mlp.hidden.weight) = Tensor::new(2, 2, vec![1.0, -2.0, -1.0, -1.0]).unwrap();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::filled(1, 2, 1.0));
        let y = mlp.forward(&mut tape, x).unwrap();
        assert_eq!(tape.value(y), &[1.0, -2.0, 0.5]);
        *store.get_mut(mlp.hidden.weight) = saved;
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mlp = Mlp::new(&mut store, "m", 3, 4, 3, &mut rng).unwrap();
        *store.get_mut(mlp.hidden.bias) = uniform_tensor(1, 4, 0.2, &mut rng);
        let xs = Tensor::from_fn(2, 3, |r, c| (r as f64 + 1.0) * (c as f64 - 1.0) * 0.8);
        let report = finite_difference_check(&mut store, &GradCheckConfig::default(), |tape| {
            let x = tape.constant(xs.clone());
            let y = mlp.forward(tape, x)?;
            let ce = tape.cross_entropy(y, &[0, 2])?;
            Ok(tape.sum(ce))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn initialization_is_seeded() {
        let build = |seed| {
            let mut store = ParamStore::<f32>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            GruStack::new(&mut store, "g", 4, 8, 2, &mut rng).unwrap();
            store.iter().map(|(_, _, t)| t.data().to_vec()).collect::<Vec<_>>()
        };
        assert_eq!(build(11), build(11));
        assert_ne!(build(11), build(12));
        let bound = 1.0 / 8f32.sqrt();
        assert!(build(11).iter().flatten().all(|v| v.abs() <= bound));
    }
}
