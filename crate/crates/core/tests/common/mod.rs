#![allow(dead_code)]

use std::path::PathBuf;

use afterkernel::data::{parse_idx, Dataset, Split};
use afterkernel::nn::{LayerSpec, Network};
use afterkernel::Image;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MNIST_ENV: &str = "AFTERKERNEL_MNIST_DIR";

/// Directory holding the four raw MNIST files, if present.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os(MNIST_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let files = [
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ];
    files.iter().all(|f| dir.join(f).is_file()).then_some(dir)
}

pub fn load_mnist_train(dir: &std::path::Path) -> Dataset {
    let images = std::fs::read(dir.join("train-images-idx3-ubyte")).unwrap();
    let labels = std::fs::read(dir.join("train-labels-idx1-ubyte")).unwrap();
    parse_idx(&images, &labels, "mnist", Split::Train).unwrap()
}

/// ReLU on/off bits and max-pool winners. Two parameter vectors with the
/// same pattern lie in the same linear piece of the network.
pub fn pattern(net: &Network, image: &Image) -> Vec<usize> {
    let acts = net.forward(image).unwrap();
    let mut out = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Relu { .. } => out.extend(acts.layer(i).iter().map(|&v| usize::from(v > 0.0))),
            LayerSpec::MaxPool { input, output } => {
                let x = if i == 0 { image.data() } else { acts.layer(i - 1) };
                for oy in 0..output.height {
                    for ox in 0..output.width {
                        for c in 0..output.channels {
                            let mut best = (usize::MAX, f64::NEG_INFINITY);
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let idx = ((2 * oy + dy) * input.width + 2 * ox + dx) * input.channels + c;
                                    if best.0 == usize::MAX || x[idx] > best.1 {
                                        best = (idx, x[idx]);
                                    }
                                }
                            }
                            out.push(best.0);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Below this magnitude the f64 central difference is recomputed with the
/// double-double forward pass.
const EXTENDED_BELOW: f64 = 1e-3;

/// Largest relative error between `grad_params` and central differences
/// over components with magnitude above `floor`, and the number of such
/// components. `None` if some perturbation crosses a kink.
pub fn finite_difference_check(net: &mut Network, image: &Image, eps: f64, floor: f64) -> Option<(f64, usize)> {
    let grad = net.grad_params(image).unwrap();
    let base = pattern(net, image);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for k in 0..net.param_count() {
        let theta = net.params()[k];
        net.params_mut()[k] = theta + eps;
        let same_plus = pattern(net, image) == base;
        let plus = net.output(image).unwrap();
        net.params_mut()[k] = theta - eps;
        let same_minus = pattern(net, image) == base;
        let minus = net.output(image).unwrap();
        net.params_mut()[k] = theta;
        if !(same_plus && same_minus) {
            return None;
        }
        if grad[k].abs() > floor {
            let fd = if grad[k].abs() < EXTENDED_BELOW {
                let up = Dd::from(eps);
                let plus = dd_output(net, image, k, up);
                let minus = dd_output(net, image, k, up.neg());
                plus.sub(minus).hi / (2.0 * eps)
            } else {
                (plus - minus) / (2.0 * eps)
            };
            worst = worst.max((fd - grad[k]).abs() / grad[k].abs());
            checked += 1;
        }
    }
    Some((worst, checked))
}

/// Double-double number `hi + lo`.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn norm(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let e = e + t;
        let (s, e) = (s + e, e - ((s + e) - s));
        Dd::norm(s, e + f)
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        Dd::norm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn gt(self, o: Dd) -> bool {
        self.hi > o.hi || (self.hi == o.hi && self.lo > o.lo)
    }
}

/// Network output in double-double arithmetic with parameter `k` shifted by
/// `delta`. Written from the documented parameter layout, independent of the
/// library forward pass.
fn dd_output(net: &Network, image: &Image, k: usize, delta: Dd) -> Dd {
    let mut params: Vec<Dd> = net.params().iter().map(|&p| Dd::from(p)).collect();
    params[k] = params[k].add(delta);
    let mut x: Vec<Dd> = image.data().iter().map(|&v| Dd::from(v)).collect();
    let mut offset = 0;
    for layer in net.layers() {
        let p = &params[offset..offset + layer.param_count()];
        offset += layer.param_count();
        x = match *layer {
            LayerSpec::Flatten { .. } => x,
            LayerSpec::Relu { .. } => x.into_iter().map(|v| if v.gt(Dd::default()) { v } else { Dd::default() }).collect(),
            LayerSpec::Sum { .. } => vec![x.iter().fold(Dd::default(), |a, &v| a.add(v))],
            LayerSpec::Dense { inputs, outputs, bias } => (0..outputs)
                .map(|j| {
                    let start = if bias { p[inputs * outputs + j] } else { Dd::default() };
                    (0..inputs).fold(start, |acc, i| acc.add(x[i].mul(p[i * outputs + j])))
                })
                .collect(),
            LayerSpec::MaxPool { input, output } => {
                let mut out = Vec::with_capacity(output.len());
                for oy in 0..output.height {
                    for ox in 0..output.width {
                        for c in 0..output.channels {
                            let mut best: Option<Dd> = None;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let v = x[((2 * oy + dy) * input.width + 2 * ox + dx) * input.channels + c];
                                    if best.map_or(true, |b| v.gt(b)) {
                                        best = Some(v);
                                    }
                                }
                            }
                            out.push(best.unwrap());
                        }
                    }
                }
                out
            }
            LayerSpec::Conv2d { input, output, pad } => {
                let (ci_n, co_n) = (input.channels, output.channels);
                let weights = &p[..9 * ci_n * co_n];
                let bias = &p[9 * ci_n * co_n..];
                let mut out = Vec::with_capacity(output.len());
                for oy in 0..output.height {
                    for ox in 0..output.width {
                        for co in 0..co_n {
                            let mut acc = bias[co];
                            for ky in 0..3 {
                                let iy = (oy + ky) as isize - pad as isize;
                                if iy < 0 || iy >= input.height as isize {
                                    continue;
                                }
                                for kx in 0..3 {
                                    let ix = (ox + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= input.width as isize {
                                        continue;
                                    }
                                    for ci in 0..ci_n {
                                        let a = x[(iy as usize * input.width + ix as usize) * ci_n + ci];
                                        acc = acc.add(a.mul(weights[((ky * 3 + kx) * ci_n + ci) * co_n + co]));
                                    }
                                }
                            }
                            out.push(acc);
                        }
                    }
                }
                out
            }
        };
    }
    x[0]
}

/// Random separable instance: rows in `[-1, 1]^d`, labels from a random
/// hyperplane, points within 0.1 of it rejected.
pub fn separable_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    loop {
        let d = rng.gen_range(1..=5);
        let n = rng.gen_range(4..=20);
        let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let b0 = rng.gen_range(-0.3..0.3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < n {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = (x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() + b0) / norm;
            if s.abs() > 0.1 {
                labels.push(s.signum());
                rows.push(x);
            }
        }
        if labels.contains(&1.0) && labels.contains(&-1.0) {
            return (rows, labels);
        }
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Exact maximum-margin separator `(w, b)` for the kernel
/// `x~_i . x~_j + [i == j] / (2C)`, with `x~ = (x, 1)`. This is the hard
/// margin problem whose solution coincides with the squared-hinge SVM at
/// penalty `C`.
///
/// Brute force over support sets by increasing size: the first set whose
/// equality-constrained dual solution is positive and satisfies the margin
/// conditions everywhere else is the optimum.
pub fn hard_margin_oracle(rows: &[Vec<f64>], labels: &[f64], c: f64) -> Vec<f64> {
    let n = rows.len();
    let aug: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().copied().chain([1.0]).collect()).collect();
    let q = |i: usize, j: usize| {
        let k: f64 = aug[i].iter().zip(&aug[j]).map(|(a, b)| a * b).sum();
        labels[i] * labels[j] * (k + if i == j { 0.5 / c } else { 0.0 })
    };
    for size in 1..=n {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let a = subset.iter().map(|&i| subset.iter().map(|&j| q(i, j)).collect()).collect();
            if let Some(alpha) = solve(a, vec![1.0; size]) {
                if alpha.iter().all(|&x| x > 0.0) {
                    let margins_ok = (0..n).filter(|i| !subset.contains(i)).all(|i| {
                        let g: f64 = subset.iter().zip(&alpha).map(|(&j, &aj)| q(i, j) * aj).sum();
                        g >= 1.0 - 1e-10
                    });
                    if margins_ok {
                        let mut w = vec![0.0; aug[0].len()];
                        for (&j, &aj) in subset.iter().zip(&alpha) {
                            for (wk, xk) in w.iter_mut().zip(&aug[j]) {
                                *wk += aj * labels[j] * xk;
                            }
                        }
                        return w;
                    }
                }
            }
            if !next_subset(&mut subset, n) {
                break;
            }
        }
    }
    panic!("no support set satisfies the optimality conditions");
}

fn next_subset(s: &mut [usize], n: usize) -> bool {
    let k = s.len();
    for i in (0..k).rev() {
        if s[i] < n - k + i {
            s[i] += 1;
            for j in i + 1..k {
                s[j] = s[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `(w, b) / |w|`
pub fn normalized(w: &[f64], b: f64) -> Vec<f64> {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter().chain([&b]).map(|x| x / norm).collect()
}

pub fn random_image(shape: afterkernel::Shape, rng: &mut ChaCha8Rng) -> Image {
    Image::new(shape, (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}
