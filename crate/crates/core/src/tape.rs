//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. [`Tape::backward`]
//! walks the record in reverse and returns the adjoint of each recorded
//! value. Only the handful of operations the encoder and denoiser need are
//! supported; the hyperbolic maps carry closed-form Jacobians.

use ndarray::{Array2, Axis};

use crate::manifold::ball;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Labelled node pairs for the Fermi-Dirac edge loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTargets {
    pub pairs: Vec<(usize, usize)>,
    /// 1.0 for an edge, 0.0 for a sampled non-edge.
    pub labels: Vec<f64>,
    pub c: f64,
    /// Edges are scored against `r - margin` and non-edges against
    /// `r + margin`; 0 is the plain decoder.
    pub margin: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulSorted(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulScalar(Var, Var),
    Tanh(Var),
    Silu(Var),
    ExpMap0(Var, f64),
    LogMap0(Var, f64),
    Mse(Var, Var),
    FermiDirac(Var, Var, Box<EdgeTargets>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    clamps: usize,
}

/// Adjoints indexed by [`Var`].
#[derive(Debug)]
pub struct Grads(Vec<Option<Array2<f64>>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    /// Adjoint of `v`, or zeros shaped like `like` when nothing flowed back.
    pub fn take_or_zeros(&mut self, v: Var, like: &Array2<f64>) -> Array2<f64> {
        self.0[v.0].take().unwrap_or_else(|| Array2::zeros(like.raw_dim()))
    }
}

/// Squared-distance scale below which a pair is treated as coincident.
const COINCIDENT: f64 = 1e-24;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `f(n) = tanh(s n)/(s n)` and `f'(n)/n` for the origin exponential map.
fn exp_scale(n: f64, s: f64) -> (f64, f64) {
    let u = s * n;
    if u < 1e-2 {
        let u2 = u * u;
        (1.0 - u2 / 3.0 + 2.0 * u2 * u2 / 15.0, s * s * (-2.0 / 3.0 + 8.0 * u2 / 15.0 - 34.0 * u2 * u2 / 105.0))
    } else {
        let th = u.tanh();
        let sech2 = 1.0 - th * th;
        (th / u, s * s * (sech2 * u - th) / (u * u * u))
    }
}

/// `h(n) = artanh(s n)/(s n)` and `h'(n)/n` for the origin logarithmic map.
fn log_scale(n: f64, s: f64) -> (f64, f64) {
    let u = (s * n).min(1.0 - 1e-16);
    if u < 1e-2 {
        let u2 = u * u;
        (1.0 + u2 / 3.0 + u2 * u2 / 5.0, s * s * (2.0 / 3.0 + 4.0 * u2 / 5.0 + 6.0 * u2 * u2 / 7.0))
    } else {
        let at = u.atanh();
        (at / u, s * s * (u / (1.0 - u * u) - at) / (u * u * u))
    }
}

/// Backward pass of a row-wise radial map `y = f(|x|) x`.
fn radial_backward(x: &Array2<f64>, g: &Array2<f64>, c: f64, scale: fn(f64, f64) -> (f64, f64)) -> Array2<f64> {
    let s = c.sqrt();
    let mut out = Array2::zeros(x.raw_dim());
    for ((xr, gr), mut or) in x.rows().into_iter().zip(g.rows()).zip(out.rows_mut()) {
        let n = xr.dot(&xr).sqrt();
        let (f, fp_over_n) = scale(n, s);
        let xg = xr.dot(&gr);
        for ((o, &xv), &gv) in or.iter_mut().zip(xr).zip(gr) {
            *o = f * gv + fp_over_n * xg * xv;
        }
    }
    out
}

fn fermi_dirac_loss(x: &Array2<f64>, r: f64, tau: f64, t: &EdgeTargets) -> f64 {
    let total: f64 = t
        .pairs
        .iter()
        .zip(&t.labels)
        .map(|(&(i, j), &y)| {
            let d = ball::distance_arccosh(x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap(), t.c);
            let s = (r + t.margin * (1.0 - 2.0 * y) - d) / tau;
            y * softplus(-s) + (1.0 - y) * softplus(s)
        })
        .sum();
    total / t.pairs.len().max(1) as f64
}

/// Adjoints for the embedding and for the `[r, tau]` row.
///
/// Each node's contributions are summed in sorted order so that relabelling
/// the nodes permutes the result exactly instead of up to rounding.
fn fermi_dirac_backward(x: &Array2<f64>, r: f64, tau: f64, t: &EdgeTargets, g: f64) -> (Array2<f64>, [f64; 2]) {
    let c = t.c;
    let sc = c.sqrt();
    let m = t.pairs.len().max(1) as f64;
    let dim = x.ncols();
    let mut g_fd = [0.0; 2];
    // per pair: coefficient k and the self weights for both endpoints
    let mut coef = vec![(0.0, 0.0, 0.0); t.pairs.len()];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); x.nrows()];
    for (p, (&(i, j), &y)) in t.pairs.iter().zip(&t.labels).enumerate() {
        let xi = x.row(i);
        let xj = x.row(j);
        let diff2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
        let a = 1.0 - c * xi.dot(&xi);
        let b = 1.0 - c * xj.dot(&xj);
        let e = 2.0 * c * diff2 / (a * b);
        let d = (e + (e * (e + 2.0)).sqrt()).ln_1p() / sc;
        let s = (r + t.margin * (1.0 - 2.0 * y) - d) / tau;
        let dl_ds = (sigmoid(s) - y) * g / m;
        g_fd[0] += dl_ds / tau;
        g_fd[1] -= dl_ds * s / tau;
        // coincident points have no defined direction to move along
        if e <= COINCIDENT {
            continue;
        }
        let dl_dd = -dl_ds / tau;
        let dd_de = 1.0 / (sc * (e * (e + 2.0)).sqrt());
        coef[p] = (dl_dd * dd_de * 4.0 * c / (a * b), c * diff2 / a, c * diff2 / b);
        incident[i].push(p);
        incident[j].push(p);
    }
    let mut out = Array2::zeros(x.raw_dim());
    let mut parts: Vec<f64> = Vec::new();
    for (node, list) in incident.iter().enumerate() {
        parts.clear();
        for &p in list {
            let (i, j) = t.pairs[p];
            let (k, wi, wj) = coef[p];
            let (other, w) = if node == i { (j, wi) } else { (i, wj) };
            for q in 0..dim {
                let own = x[[node, q]];
                parts.push(k * ((own - x[[other, q]]) + w * own));
            }
        }
        let mut rows: Vec<&[f64]> = parts.chunks(dim).collect();
        rows.sort_by(|a, b| {
            a.iter().zip(b.iter()).map(|(u, v)| u.total_cmp(v)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut acc = out.row_mut(node);
        for row in rows {
            for (o, v) in acc.iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    (out, g_fd)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of ball projections triggered by [`Tape::expmap0`] so far.
    pub fn clamp_count(&self) -> usize {
        self.clamps
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Input that receives no adjoint.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    /// `a b` where every entry sums the nonzero products of `a`'s row in
    /// sorted order, so permuting rows and columns consistently permutes the
    /// result bit for bit. Meant for sparse propagation matrices.
    pub fn matmul_sorted(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let mut v = Array2::zeros((av.nrows(), bv.ncols()));
        let mut terms = Vec::new();
        for (i, row) in av.rows().into_iter().enumerate() {
            for k in 0..bv.ncols() {
                terms.clear();
                terms.extend(row.iter().zip(bv.column(k)).filter(|(x, _)| **x != 0.0).map(|(x, y)| x * y));
                terms.sort_by(f64::total_cmp);
                v[[i, k]] = terms.iter().sum();
            }
        }
        self.push(v, Op::MatMulSorted(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    /// Adds the `1 x m` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b), &[a, b])
    }

    /// Multiplies `a` by the `1 x 1` value `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let v = self.value(a) * self.value(s)[[0, 0]];
        self.push(v, Op::MulScalar(a, s), &[a, s])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * sigmoid(x));
        self.push(v, Op::Silu(a), &[a])
    }

    /// Row-wise `expmap_o`; rows that land on the ball boundary are clamped.
    pub fn expmap0(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros(src.raw_dim());
        let mut clamped = 0;
        for (row, mut out) in src.rows().into_iter().zip(v.rows_mut()) {
            let s = c.sqrt();
            let n = row.dot(&row).sqrt();
            let (f, _) = exp_scale(n, s);
            out.assign(&(&row * f));
            if ball::project(out.as_slice_mut().unwrap(), c) {
                clamped += 1;
            }
        }
        self.clamps += clamped;
        self.push(v, Op::ExpMap0(a, c), &[a])
    }

    /// Row-wise `logmap_o`.
    pub fn logmap0(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let mut v = Array2::zeros(src.raw_dim());
        for (row, mut out) in src.rows().into_iter().zip(v.rows_mut()) {
            let n = row.dot(&row).sqrt();
            let (h, _) = log_scale(n, c.sqrt());
            out.assign(&(&row * h));
        }
        self.push(v, Op::LogMap0(a, c), &[a])
    }

    /// Mean squared error over all entries, as a `1 x 1` value.
    pub fn mse(&mut self, pred: Var, target: Var) -> Var {
        let d = self.value(pred) - self.value(target);
        let v = d.mapv(|x| x * x).mean().unwrap_or(0.0);
        self.push(Array2::from_elem((1, 1), v), Op::Mse(pred, target), &[pred, target])
    }

    /// Mean binary cross-entropy of Fermi-Dirac edge probabilities between
    /// rows of the ball embedding `x`. `fd` is the `1 x 2` row `[r, tau]`.
    pub fn fermi_dirac_bce(&mut self, x: Var, fd: Var, targets: EdgeTargets) -> Var {
        let (r, tau) = (self.value(fd)[[0, 0]], self.value(fd)[[0, 1]]);
        let v = fermi_dirac_loss(self.value(x), r, tau, &targets);
        self.push(Array2::from_elem((1, 1), v), Op::FermiDirac(x, fd, Box::new(targets)), &[x, fd])
    }

    /// Adjoints of every recorded value with respect to the scalar `out`.
    pub fn backward(&self, out: Var) -> Grads {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Array2::ones(self.nodes[out.0].value.raw_dim()));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].as_ref() else { continue };
            let mut deltas: Vec<(Var, Array2<f64>)> = Vec::with_capacity(2);
            let wants = |v: Var| self.nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) | Op::MatMulSorted(a, b) => {
                    if wants(*a) {
                        deltas.push((*a, g.dot(&self.value(*b).t())));
                    }
                    if wants(*b) {
                        deltas.push((*b, self.value(*a).t().dot(g)));
                    }
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        if wants(p) {
                            deltas.push((p, g.clone()));
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    if wants(*a) {
                        deltas.push((*a, g.clone()));
                    }
                    if wants(*b) {
                        deltas.push((*b, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                    }
                }
                Op::MulScalar(a, s) => {
                    let sv = self.value(*s)[[0, 0]];
                    if wants(*a) {
                        deltas.push((*a, g * sv));
                    }
                    if wants(*s) {
                        let gs = (g * self.value(*a)).sum();
                        deltas.push((*s, Array2::from_elem((1, 1), gs)));
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    deltas.push((*a, g * &y.mapv(|v| 1.0 - v * v)));
                }
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let d = x.mapv(|v| {
                        let s = sigmoid(v);
                        s * (1.0 + v * (1.0 - s))
                    });
                    deltas.push((*a, g * &d));
                }
                Op::ExpMap0(a, c) => {
                    deltas.push((*a, radial_backward(self.value(*a), g, *c, exp_scale)));
                }
                Op::LogMap0(a, c) => {
                    deltas.push((*a, radial_backward(self.value(*a), g, *c, log_scale)));
                }
                Op::Mse(p, t) => {
                    let d = self.value(*p) - self.value(*t);
                    let k = 2.0 * g[[0, 0]] / d.len().max(1) as f64;
                    let gp = d * k;
                    if wants(*t) {
                        deltas.push((*t, -&gp));
                    }
                    if wants(*p) {
                        deltas.push((*p, gp));
                    }
                }
                Op::FermiDirac(x, fd, targets) => {
                    let fdv = self.value(*fd);
                    let (gx, gfd) = fermi_dirac_backward(self.value(*x), fdv[[0, 0]], fdv[[0, 1]], targets, g[[0, 0]]);
                    if wants(*x) {
                        deltas.push((*x, gx));
                    }
                    if wants(*fd) {
                        deltas.push((*fd, Array2::from_shape_vec((1, 2), gfd.to_vec()).unwrap()));
                    }
                }
            }
            for (v, d) in deltas {
                match &mut grads[v.0] {
                    Some(acc) => *acc += &d,
                    slot => *slot = Some(d),
                }
            }
        }
        Grads(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
    }

    /// Checks every input coordinate of `f` against central differences.
    fn check(inputs: Vec<Array2<f64>>, f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out);
        let eval = |xs: &[Array2<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs.iter().map(|x| t.param(x.clone())).collect();
            let o = f(&mut t, &vs);
            t.value(o)[[0, 0]]
        };
        let h = 1e-5;
        for (k, x) in inputs.iter().enumerate() {
            let g = grads.get(vars[k]).expect("gradient reached every input");
            for idx in 0..x.len() {
                let (r, c) = (idx / x.ncols(), idx % x.ncols());
                let mut plus = inputs.clone();
                plus[k][[r, c]] += h;
                let mut minus = inputs.clone();
                minus[k][[r, c]] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = g[[r, c]];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                assert!(err < 1e-6, "input {k} [{r},{c}]: analytic {an} vs numeric {fd}");
            }
        }
    }

    #[test]
    fn dense_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(4, 3, 1.0, &mut rng);
        let w = random(3, 5, 1.0, &mut rng);
        let b = random(1, 5, 1.0, &mut rng);
        let s = random(1, 1, 1.0, &mut rng);
        let target = random(4, 5, 1.0, &mut rng);
        check(vec![x, w, b, s], move |t, v| {
            let h = t.matmul(v[0], v[1]);
            let h = t.add_row(h, v[2]);
            let m = t.mul_scalar(h, v[3]);
            let h = t.add(h, m);
            let a = t.silu(h);
            let h = t.tanh(a);
            let tg = t.constant(target.clone());
            t.mse(h, tg)
        });
    }

    #[test]
    fn hyperbolic_map_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // includes a tiny row to exercise the series branch
        let mut x = random(5, 3, 1.5, &mut rng);
        x.row_mut(4).assign(&array![1e-4, -2e-4, 5e-5]);
        let target = random(5, 3, 0.5, &mut rng);
        for c in [0.5, 1.0, 2.0] {
            let tg = target.clone();
            check(vec![x.clone()], move |t, v| {
                let e = t.expmap0(v[0], c);
                let l = t.logmap0(e, c);
                let e2 = t.expmap0(l, c);
                let tgt = t.constant(tg.clone());
                t.mse(e2, tgt)
            });
        }
    }

    #[test]
    fn fermi_dirac_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(6, 4, 0.8, &mut rng);
        let targets = EdgeTargets {
            pairs: vec![(0, 1), (1, 2), (2, 5), (3, 4), (0, 5), (1, 4)],
            labels: vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            c: 1.0,
            margin: 0.0,
        };
        for margin in [0.0, 0.4] {
            let targets = EdgeTargets { margin, ..targets.clone() };
            check(vec![x.clone(), array![[1.7, 0.8]]], move |t, v| {
                let e = t.expmap0(v[0], 1.0);
                t.fermi_dirac_bce(e, v[1], targets.clone())
            });
        }
    }

    #[test]
    fn maps_match_ball_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(10, 3, 2.0, &mut rng);
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let e = t.expmap0(v, 1.5);
        let l = t.logmap0(e, 1.5);
        for i in 0..10 {
            let want = ball::expmap0(x.row(i).as_slice().unwrap(), 1.5);
            for (a, b) in t.value(e).row(i).iter().zip(&want) {
                assert!((a - b).abs() < 1e-14);
            }
            for (a, b) in t.value(l).row(i).iter().zip(x.row(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert_eq!(t.clamp_count(), 0);
    }

    #[test]
    fn sorted_matmul_matches_and_permutes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(6, 6, 1.0, &mut rng);
        let b = random(6, 3, 1.0, &mut rng);
        check(vec![b.clone()], {
            let a = a.clone();
            move |t, v| {
                let av = t.constant(a.clone());
                let m = t.matmul_sorted(av, v[0]);
                let z = t.constant(Array2::zeros((6, 3)));
                t.mse(m, z)
            }
        });
        let perm = [3usize, 0, 5, 1, 4, 2];
        let pa = Array2::from_shape_fn((6, 6), |(i, j)| a[[perm[i], perm[j]]]);
        let pb = Array2::from_shape_fn((6, 3), |(i, k)| b[[perm[i], k]]);
        let mut t = Tape::new();
        let (av, bv, pav, pbv) = (t.constant(a.clone()), t.constant(b), t.constant(pa), t.constant(pb));
        let m = t.matmul_sorted(av, bv);
        let pm = t.matmul_sorted(pav, pbv);
        for i in 0..6 {
            for k in 0..3 {
                assert_eq!(t.value(pm)[[i, k]], t.value(m)[[perm[i], k]]);
            }
        }
    }

    #[test]
    fn constants_get_no_adjoint() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0]]);
        let w = t.param(array![[1.0], [1.0]]);
        let y = t.matmul(a, w);
        let z = t.constant(array![[0.0]]);
        let l = t.mse(y, z);
        let g = t.backward(l);
        assert!(g.get(a).is_none());
        assert_eq!(g.get(w).unwrap(), &array![[6.0], [12.0]]);
    }
}
