use super::{ParamId, ParamStore, Scalar, Tape, Var};
use crate::media::SeededRng;

/// Stride-1 "same" convolution with an odd kernel.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub pad: (usize, usize),
}

impl Conv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        gain: f64,
        rng: &mut SeededRng,
    ) -> Self {
        assert!(kernel.0 % 2 == 1 && kernel.1 % 2 == 1, "kernel must be odd");
        let fan_in = cin * kernel.0 * kernel.1;
        let w = store.add_scaled_normal(
            format!("{name}.w"),
            &[cout, cin, kernel.0, kernel.1],
            fan_in,
            gain,
            rng,
        );
        let b = store.add_zeros(format!("{name}.b"), &[cout]);
        Self {
            w,
            b,
            pad: (kernel.0 / 2, kernel.1 / 2),
        }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.conv2d(x, w, b, self.pad)
    }
}

/// Fully connected layer on `[N, F]`.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        fin: usize,
        fout: usize,
        gain: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let w = store.add_scaled_normal(format!("{name}.w"), &[fout, fin], fin, gain, rng);
        let b = store.add_zeros(format!("{name}.b"), &[fout]);
        Self { w, b }
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.linear(x, w, b)
    }
}

/// Residual block with an optional per-sample conditioning vector:
/// `skip(x) + conv2(silu(conv1(silu(x)) + dense(silu(cond))))`.
#[derive(Clone, Copy, Debug)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub cond: Option<Dense>,
    pub skip: Option<Conv>,
}

impl ResBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        cond_dim: Option<usize>,
        rng: &mut SeededRng,
    ) -> Self {
        let conv1 = Conv::new(store, &format!("{name}.conv1"), cin, cout, kernel, 1.4, rng);
        let cond = cond_dim.map(|d| Dense::new(store, &format!("{name}.cond"), d, cout, 1.0, rng));
        // Small second conv: the block starts close to its skip path.
        let conv2 = Conv::new(store, &format!("{name}.conv2"), cout, cout, kernel, 0.2, rng);
        let skip = (cin != cout)
            .then(|| Conv::new(store, &format!("{name}.skip"), cin, cout, (1, 1), 1.0, rng));
        Self {
            conv1,
            conv2,
            cond,
            skip,
        }
    }

    pub fn apply<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        cond: Option<Var>,
    ) -> Var {
        let a = tape.silu(x);
        let mut h = self.conv1.apply(tape, store, a);
        if let (Some(dense), Some(c)) = (self.cond, cond) {
            let c = tape.silu(c);
            let offset = dense.apply(tape, store, c);
            h = tape.channel_bias(h, offset);
        }
        let h = tape.silu(h);
        let h = self.conv2.apply(tape, store, h);
        let skip = match self.skip {
            Some(conv) => conv.apply(tape, store, x),
            None => x,
        };
        tape.add(skip, h)
    }
}
