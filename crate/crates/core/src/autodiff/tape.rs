use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        padding: usize,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    AddBias(Var, Var),
    Reshape(Var),
    Slice {
        input: Var,
        start: usize,
    },
    Clamp {
        input: Var,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Wengert list of primitive ops. Nodes are appended in evaluation order, so
/// parents always precede children.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the root does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    pub fn take(&mut self, var: Var) -> Tensor {
        self.grads[var.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

/// `c = a * b + beta * c` for row-major `c` of shape `m x n`; `a` and `b`
/// are addressed through explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the debug assertions above describe the extents accessed; all
    // callers pass buffers sized from the same shape arithmetic.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn im2col(&self, img: &[f64], cols: &mut [f64]) {
        let hw_out = self.col_cols();
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                    for oh in 0..self.out_h {
                        let ih = oh as isize + ki as isize - self.padding as isize;
                        let line = &mut dst[oh * self.out_w..(oh + 1) * self.out_w];
                        if ih < 0 || ih >= self.height as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &img[(c * self.height + ih as usize) * self.width..];
                        for (ow, out) in line.iter_mut().enumerate() {
                            let iw = ow as isize + kj as isize - self.padding as isize;
                            *out = if iw < 0 || iw >= self.width as isize {
                                0.0
                            } else {
                                src[iw as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], img: &mut [f64]) {
        let hw_out = self.col_cols();
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &cols[row * hw_out..(row + 1) * hw_out];
                    for oh in 0..self.out_h {
                        let ih = oh as isize + ki as isize - self.padding as isize;
                        if ih < 0 || ih >= self.height as isize {
                            continue;
                        }
                        let base = (c * self.height + ih as usize) * self.width;
                        for ow in 0..self.out_w {
                            let iw = ow as isize + kj as isize - self.padding as isize;
                            if iw >= 0 && iw < self.width as isize {
                                img[base + iw as usize] += src[oh * self.out_w + ow];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_geom(x: &[usize], w: &[usize], padding: usize) -> Result<(usize, usize, ConvGeom)> {
    let mismatch = || Error::ShapeMismatch {
        op: "conv2d",
        lhs: x.to_vec(),
        rhs: w.to_vec(),
    };
    if x.len() != 4 || w.len() != 4 || x[1] != w[1] {
        return Err(mismatch());
    }
    let (h, wd) = (x[2] + 2 * padding, x[3] + 2 * padding);
    if w[2] > h || w[3] > wd {
        return Err(mismatch());
    }
    Ok((
        x[0],
        w[0],
        ConvGeom {
            channels: x[1],
            height: x[2],
            width: x[3],
            kh: w[2],
            kw: w[3],
            padding,
            out_h: h - w[2] + 1,
            out_w: wd - w[3] + 1,
        },
    ))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable leaf (a trainable parameter or an input we
    /// want gradients for).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Records a constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push_raw(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push_raw(value, op, needs_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.zip(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(v, Op::Scale(a, c), &[a])
    }

    /// Adds the constant `c` to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::Offset(a), &[a])
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            0.0,
            &mut out,
        );
        let v = Tensor::new(vec![m, n], out)?;
        Ok(self.push(v, Op::MatMul(a, b), &[a, b]))
    }

    /// Stride-1 cross-correlation of `[N, C, H, W]` with `[O, C, kh, kw]`
    /// and symmetric zero padding.
    pub fn conv2d(&mut self, input: Var, weight: Var, padding: usize) -> Result<Var> {
        let (n, o, g) = conv_geom(self.shape(input), self.shape(weight), padding)?;
        let (rows, cols_n) = (g.col_rows(), g.col_cols());
        let mut cols = vec![0.0; rows * cols_n];
        let mut out = vec![0.0; n * o * cols_n];
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let img_len = g.channels * g.height * g.width;
        for i in 0..n {
            g.im2col(&x[i * img_len..(i + 1) * img_len], &mut cols);
            gemm(
                o,
                rows,
                cols_n,
                w,
                (rows, 1),
                &cols,
                (cols_n, 1),
                0.0,
                &mut out[i * o * cols_n..(i + 1) * o * cols_n],
            );
        }
        let v = Tensor::new(vec![n, o, g.out_h, g.out_w], out)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                input,
                weight,
                padding,
            },
            &[input, weight],
        ))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::ShapeMismatch {
                op: "max_pool2",
                lhs: s,
                rhs: vec![2, 2],
            });
        }
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(nc * oh * ow);
        let mut argmax = Vec::with_capacity(nc * oh * ow);
        for plane in 0..nc {
            let base = plane * h * w;
            for r in 0..oh {
                for c in 0..ow {
                    let mut best = base + 2 * r * w + 2 * c;
                    for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * r + dr) * w + 2 * c + dc;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let v = Tensor::new(vec![s[0], s[1], oh, ow], out)?;
        Ok(self.push(v, Op::MaxPool2 { input, argmax }, &[input]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Adds `bias[c]` along axis 1 of `a` (shape `[d0, C, ...]`).
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(bias).to_vec());
        if sa.len() < 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: sa,
                rhs: sb,
            });
        }
        let inner: usize = sa[2..].iter().product();
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(a).data().to_vec();
        for (chunk_idx, chunk) in out.chunks_mut(inner).enumerate() {
            let bc = b[chunk_idx % sa[1]];
            chunk.iter_mut().for_each(|x| *x += bc);
        }
        let v = Tensor::new(sa, out)?;
        Ok(self.push(v, Op::AddBias(a, bias), &[a, bias]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).reshaped(shape).map_err(|_| Error::ShapeMismatch {
            op: "reshape",
            lhs: self.shape(a).to_vec(),
            rhs: shape.to_vec(),
        })?;
        Ok(self.push(v, Op::Reshape(a), &[a]))
    }

    /// Contiguous range `[start, start + len)` of the flattened value, as a
    /// 1-D tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if start + len > t.len() {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: t.shape().to_vec(),
                rhs: vec![start, start + len],
            });
        }
        let v = Tensor::vector(t.data()[start..start + len].to_vec());
        Ok(self.push(v, Op::Slice { input: a, start }, &[a]))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp { input: a, lo, hi }, &[a])
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::Empty("tape"));
        }
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut [f64]> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v)));
        }
        slot.as_mut().map(|t| t.data_mut())
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let unary = |grads: &mut [Option<Tensor>], a: Var, f: &dyn Fn(usize, f64) -> f64| {
            if let Some(buf) = self.grad_buf(grads, a) {
                for (j, (b, &gj)) in buf.iter_mut().zip(gd).enumerate() {
                    *b += f(j, gj);
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                unary(grads, *a, &|_, gj| gj);
                unary(grads, *b, &|_, gj| gj);
            }
            Op::Sub(a, b) => {
                unary(grads, *a, &|_, gj| gj);
                unary(grads, *b, &|_, gj| -gj);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                unary(grads, *a, &|j, gj| gj * vb[j]);
                unary(grads, *b, &|j, gj| gj * va[j]);
            }
            Op::Scale(a, c) => unary(grads, *a, &|_, gj| c * gj),
            Op::Offset(a) | Op::Reshape(a) => unary(grads, *a, &|_, gj| gj),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                unary(grads, *a, &|j, gj| if x[j] > 0.0 { gj } else { 0.0 });
            }
            Op::Exp(a) => {
                let y = node.value.data();
                unary(grads, *a, &|j, gj| gj * y[j]);
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                unary(grads, *a, &|j, gj| gj / x[j]);
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                unary(grads, *a, &|j, gj| 2.0 * x[j] * gj);
            }
            Op::Clamp { input, lo, hi } => {
                let x = self.value(*input).data();
                unary(grads, *input, &|j, gj| {
                    if x[j] >= *lo && x[j] <= *hi {
                        gj
                    } else {
                        0.0
                    }
                });
            }
            Op::Sum(a) => {
                let g0 = gd[0];
                if let Some(buf) = self.grad_buf(grads, *a) {
                    buf.iter_mut().for_each(|b| *b += g0);
                }
            }
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                let g0 = gd[0] / n;
                if let Some(buf) = self.grad_buf(grads, *a) {
                    buf.iter_mut().for_each(|b| *b += g0);
                }
            }
            Op::Slice { input, start } => {
                if let Some(buf) = self.grad_buf(grads, *input) {
                    for (b, &gj) in buf[*start..*start + gd.len()].iter_mut().zip(gd) {
                        *b += gj;
                    }
                }
            }
            Op::AddBias(a, bias) => {
                unary(grads, *a, &|_, gj| gj);
                let s = self.shape(*a);
                let (channels, inner) = (s[1], s[2..].iter().product::<usize>());
                if let Some(buf) = self.grad_buf(grads, *bias) {
                    for (chunk_idx, chunk) in gd.chunks(inner).enumerate() {
                        buf[chunk_idx % channels] += chunk.iter().sum::<f64>();
                    }
                }
            }
            Op::MaxPool2 { input, argmax } => {
                if let Some(buf) = self.grad_buf(grads, *input) {
                    for (&idx, &gj) in argmax.iter().zip(gd) {
                        buf[idx] += gj;
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(buf) = self.grad_buf(grads, *a) {
                    // dA = G B^T
                    gemm(m, n, k, gd, (n, 1), vb, (1, n), 1.0, buf);
                }
                if let Some(buf) = self.grad_buf(grads, *b) {
                    // dB = A^T G
                    gemm(k, m, n, va, (1, k), gd, (n, 1), 1.0, buf);
                }
            }
            Op::Conv2d {
                input,
                weight,
                padding,
            } => {
                let (n, o, geom) =
                    conv_geom(self.shape(*input), self.shape(*weight), *padding).expect("checked");
                let (rows, cols_n) = (geom.col_rows(), geom.col_cols());
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                let img_len = geom.channels * geom.height * geom.width;
                let mut cols = vec![0.0; rows * cols_n];
                if self.nodes[weight.0].needs_grad {
                    for i in 0..n {
                        geom.im2col(&x[i * img_len..(i + 1) * img_len], &mut cols);
                        let gi = &gd[i * o * cols_n..(i + 1) * o * cols_n];
                        let buf = self.grad_buf(grads, *weight).expect("needs grad");
                        gemm(o, cols_n, rows, gi, (cols_n, 1), &cols, (1, cols_n), 1.0, buf);
                    }
                }
                if let Some(buf) = self.grad_buf(grads, *input) {
                    for i in 0..n {
                        let gi = &gd[i * o * cols_n..(i + 1) * o * cols_n];
                        gemm(rows, o, cols_n, w, (1, rows), gi, (cols_n, 1), 0.0, &mut cols);
                        geom.col2im_add(&cols, &mut buf[i * img_len..(i + 1) * img_len]);
                    }
                }
            }
        }
    }
}
