//! Gaussian-process surrogates over encoded or mixed inputs.
//!
//! Four kernel variants cover the drivers: Matern-5/2 ARD over numeric
//! coordinates, an exponentiated-overlap kernel over category indices, and
//! two weighted add/multiply combinations of a categorical and a continuous
//! kernel (one overlap-based, one Matern over a one-hot block). Values are
//! standardized before fitting; hyperparameters maximize the log marginal
//! likelihood by multi-restart Adam with analytic gradients.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RunRng;
use nalgebra::{DMatrix, DVector};

const SQRT5: f64 = 2.236_067_977_499_79;
/// Fixed diagonal stabilizer applied to every kernel matrix during fitting so
/// the likelihood surface stays smooth for gradient checks.
const BASE_JITTER: f64 = 1e-10;

pub const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);
pub const NOISE_BOUNDS: (f64, f64) = (1e-8, 1e-1);
const SIGNAL_BOUNDS: (f64, f64) = (1e-4, 1e4);

/// Matern-5/2 radial profile at scaled distance r, unit variance.
fn matern52(r: f64) -> f64 {
    (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * (-SQRT5 * r).exp()
}

/// d matern52 / d(r^2) expressed through the pair factor used by the ARD
/// gradients: d k / d ln l_j = pair_factor * (delta_j / l_j)^2.
fn matern52_pair_factor(r: f64) -> f64 {
    (5.0 / 3.0) * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// k = sv * matern52(r), r^2 = sum_j (a_j - b_j)^2 / l_j^2.
    Matern52Ard {
        lengthscales: Vec<f64>,
        signal_variance: f64,
    },
    /// Exponentiated overlap over category indices, normalized so
    /// k(h, h) = sv: k = sv * exp(-(1/d_h) * sum_{j: a_j != b_j} l_j).
    TransformedOverlap {
        lengthscales: Vec<f64>,
        signal_variance: f64,
    },
    /// CoCaBO combination with an overlap categorical part:
    /// k = sv * [(1 - w)(k_h + k_x)/2 + w k_h k_x].
    MixedCocabo {
        comb_dims: Vec<usize>,
        cont_dims: Vec<usize>,
        comb_lengthscales: Vec<f64>,
        cont_lengthscales: Vec<f64>,
        signal_variance: f64,
        mix_weight: f64,
    },
    /// Same combination with Matern-5/2 over a one-hot categorical block.
    BounceMixed {
        onehot_dims: Vec<usize>,
        cont_dims: Vec<usize>,
        onehot_lengthscales: Vec<f64>,
        cont_lengthscales: Vec<f64>,
        signal_variance: f64,
        mix_weight: f64,
    },
}

impl KernelSpec {
    pub fn signal_variance(&self) -> f64 {
        match self {
            KernelSpec::Matern52Ard { signal_variance, .. }
            | KernelSpec::TransformedOverlap { signal_variance, .. }
            | KernelSpec::MixedCocabo { signal_variance, .. }
            | KernelSpec::BounceMixed { signal_variance, .. } => *signal_variance,
        }
    }

    /// Evaluate the kernel for two feature vectors.
    pub fn eval(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            KernelSpec::Matern52Ard {
                lengthscales,
                signal_variance,
            } => {
                let r2: f64 = lengthscales
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        let d = (a[j] - b[j]) / l;
                        d * d
                    })
                    .sum();
                signal_variance * matern52(r2.sqrt())
            }
            KernelSpec::TransformedOverlap {
                lengthscales,
                signal_variance,
            } => {
                let dh = lengthscales.len() as f64;
                let mismatch: f64 = lengthscales
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| a[*j] != b[*j])
                    .map(|(_, l)| l)
                    .sum();
                signal_variance * (-mismatch / dh).exp()
            }
            KernelSpec::MixedCocabo {
                comb_dims,
                cont_dims,
                comb_lengthscales,
                cont_lengthscales,
                signal_variance,
                mix_weight,
            } => {
                let kh = overlap_unit(a, b, comb_dims, comb_lengthscales);
                let kx = matern_unit_on(a, b, cont_dims, cont_lengthscales);
                signal_variance * combine(kh, kx, *mix_weight, comb_dims, cont_dims)
            }
            KernelSpec::BounceMixed {
                onehot_dims,
                cont_dims,
                onehot_lengthscales,
                cont_lengthscales,
                signal_variance,
                mix_weight,
            } => {
                let kh = matern_unit_on(a, b, onehot_dims, onehot_lengthscales);
                let kx = matern_unit_on(a, b, cont_dims, cont_lengthscales);
                signal_variance * combine(kh, kx, *mix_weight, onehot_dims, cont_dims)
            }
        }
    }
}

fn overlap_unit(a: &DVector<f64>, b: &DVector<f64>, dims: &[usize], ls: &[f64]) -> f64 {
    if dims.is_empty() {
        return 1.0;
    }
    let dh = dims.len() as f64;
    let mismatch: f64 = dims
        .iter()
        .zip(ls)
        .filter(|(&d, _)| a[d] != b[d])
        .map(|(_, l)| l)
        .sum();
    (-mismatch / dh).exp()
}

fn matern_unit_on(a: &DVector<f64>, b: &DVector<f64>, dims: &[usize], ls: &[f64]) -> f64 {
    if dims.is_empty() {
        return 1.0;
    }
    let r2: f64 = dims
        .iter()
        .zip(ls)
        .map(|(&d, l)| {
            let x = (a[d] - b[d]) / l;
            x * x
        })
        .sum();
    matern52(r2.sqrt())
}

/// Weighted average of addition and multiplication; degenerates to the
/// remaining part when one side has no dimensions.
fn combine(kh: f64, kx: f64, w: f64, comb: &[usize], cont: &[usize]) -> f64 {
    if comb.is_empty() {
        kx
    } else if cont.is_empty() {
        kh
    } else {
        (1.0 - w) * 0.5 * (kh + kx) + w * kh * kx
    }
}

/// One-hot layout for categorical feature blocks; columns for each variable's
/// categories follow the continuous columns.
#[derive(Debug, Clone)]
pub struct OneHotLayout {
    pub cont_count: usize,
    pub cardinalities: Vec<usize>,
}

impl OneHotLayout {
    pub fn width(&self) -> usize {
        self.cont_count + self.cardinalities.iter().sum::<usize>()
    }

    pub fn cont_dims(&self) -> Vec<usize> {
        (0..self.cont_count).collect()
    }

    pub fn onehot_dims(&self) -> Vec<usize> {
        (self.cont_count..self.width()).collect()
    }

    /// Expand continuous values plus category indices into a feature vector.
    pub fn expand(&self, cont: &[f64], categories: &[usize]) -> DVector<f64> {
        assert_eq!(cont.len(), self.cont_count);
        assert_eq!(categories.len(), self.cardinalities.len());
        let mut v = DVector::zeros(self.width());
        for (i, &x) in cont.iter().enumerate() {
            v[i] = x;
        }
        let mut offset = self.cont_count;
        for (&cat, &card) in categories.iter().zip(&self.cardinalities) {
            assert!(cat < card);
            v[offset + cat] = 1.0;
            offset += card;
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Hyperparameter vector packing
// ---------------------------------------------------------------------------

/// Internal view of a kernel as (structure, packed log/logit parameters).
/// Layout: [ln lengthscales..., ln signal, ln noise, (logit mix)].
struct Packed {
    theta: Vec<f64>,
    has_mix: bool,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    (p / (1.0 - p)).ln()
}

fn pack(kernel: &KernelSpec, noise: f64) -> Packed {
    let mut theta = Vec::new();
    let mut has_mix = false;
    match kernel {
        KernelSpec::Matern52Ard { lengthscales, signal_variance }
        | KernelSpec::TransformedOverlap { lengthscales, signal_variance } => {
            theta.extend(lengthscales.iter().map(|l| l.ln()));
            theta.push(signal_variance.ln());
        }
        KernelSpec::MixedCocabo {
            comb_lengthscales,
            cont_lengthscales,
            signal_variance,
            mix_weight,
            ..
        }
        | KernelSpec::BounceMixed {
            onehot_lengthscales: comb_lengthscales,
            cont_lengthscales,
            signal_variance,
            mix_weight,
            ..
        } => {
            theta.extend(comb_lengthscales.iter().map(|l| l.ln()));
            theta.extend(cont_lengthscales.iter().map(|l| l.ln()));
            theta.push(signal_variance.ln());
            has_mix = true;
            theta.push(noise.ln());
            theta.push(logit(*mix_weight));
            return Packed { theta, has_mix };
        }
    }
    theta.push(noise.ln());
    Packed { theta, has_mix }
}

/// Rebuild (kernel, noise) from a packed vector, clamping into bounds.
fn unpack(template: &KernelSpec, packed: &Packed) -> (KernelSpec, f64) {
    let t = &packed.theta;
    let ls_clamp = |v: f64| v.exp().clamp(LENGTHSCALE_BOUNDS.0, LENGTHSCALE_BOUNDS.1);
    let sv_clamp = |v: f64| v.exp().clamp(SIGNAL_BOUNDS.0, SIGNAL_BOUNDS.1);
    let noise_clamp = |v: f64| v.exp().clamp(NOISE_BOUNDS.0, NOISE_BOUNDS.1);
    match template {
        KernelSpec::Matern52Ard { lengthscales, .. } => {
            let d = lengthscales.len();
            (
                KernelSpec::Matern52Ard {
                    lengthscales: t[..d].iter().map(|&v| ls_clamp(v)).collect(),
                    signal_variance: sv_clamp(t[d]),
                },
                noise_clamp(t[d + 1]),
            )
        }
        KernelSpec::TransformedOverlap { lengthscales, .. } => {
            let d = lengthscales.len();
            (
                KernelSpec::TransformedOverlap {
                    lengthscales: t[..d].iter().map(|&v| ls_clamp(v)).collect(),
                    signal_variance: sv_clamp(t[d]),
                },
                noise_clamp(t[d + 1]),
            )
        }
        KernelSpec::MixedCocabo {
            comb_dims,
            cont_dims,
            comb_lengthscales,
            cont_lengthscales,
            ..
        } => {
            let (dc, dx) = (comb_lengthscales.len(), cont_lengthscales.len());
            (
                KernelSpec::MixedCocabo {
                    comb_dims: comb_dims.clone(),
                    cont_dims: cont_dims.clone(),
                    comb_lengthscales: t[..dc].iter().map(|&v| ls_clamp(v)).collect(),
                    cont_lengthscales: t[dc..dc + dx].iter().map(|&v| ls_clamp(v)).collect(),
                    signal_variance: sv_clamp(t[dc + dx]),
                    mix_weight: sigmoid(t[dc + dx + 2]),
                },
                noise_clamp(t[dc + dx + 1]),
            )
        }
        KernelSpec::BounceMixed {
            onehot_dims,
            cont_dims,
            onehot_lengthscales,
            cont_lengthscales,
            ..
        } => {
            let (dc, dx) = (onehot_lengthscales.len(), cont_lengthscales.len());
            (
                KernelSpec::BounceMixed {
                    onehot_dims: onehot_dims.clone(),
                    cont_dims: cont_dims.clone(),
                    onehot_lengthscales: t[..dc].iter().map(|&v| ls_clamp(v)).collect(),
                    cont_lengthscales: t[dc..dc + dx].iter().map(|&v| ls_clamp(v)).collect(),
                    signal_variance: sv_clamp(t[dc + dx]),
                    mix_weight: sigmoid(t[dc + dx + 2]),
                },
                noise_clamp(t[dc + dx + 1]),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Kernel matrices and likelihood gradients
// ---------------------------------------------------------------------------

/// Scale selected coordinates by 1/lengthscale into a dense row matrix and
/// return the squared row norms alongside.
fn gather_scaled(
    points: &[DVector<f64>],
    dims: &[usize],
    ls: &[f64],
) -> (DMatrix<f64>, Vec<f64>) {
    let n = points.len();
    let m = dims.len();
    let mut z = DMatrix::zeros(n, m);
    let mut norms = vec![0.0; n];
    for (i, p) in points.iter().enumerate() {
        let mut acc = 0.0;
        for (c, (&d, l)) in dims.iter().zip(ls).enumerate() {
            let v = p[d] / l;
            z[(i, c)] = v;
            acc += v * v;
        }
        norms[i] = acc;
    }
    (z, norms)
}

/// Unit-variance Matern-5/2 cross matrix over the given coordinate block;
/// the squared distances run through gemm.
fn matern_cross(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    dims: &[usize],
    ls: &[f64],
) -> DMatrix<f64> {
    if dims.is_empty() {
        return DMatrix::from_element(a.len(), b.len(), 1.0);
    }
    let (za, na) = gather_scaled(a, dims, ls);
    let (zb, nb) = gather_scaled(b, dims, ls);
    let mut g = DMatrix::zeros(a.len(), b.len());
    g.gemm(-2.0, &za, &zb.transpose(), 0.0);
    for j in 0..b.len() {
        for i in 0..a.len() {
            let r2 = (g[(i, j)] + na[i] + nb[j]).max(0.0);
            g[(i, j)] = matern52(r2.sqrt());
        }
    }
    g
}

/// Unit-variance exponentiated-overlap cross matrix over the given block.
fn overlap_cross(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
    dims: &[usize],
    ls: &[f64],
) -> DMatrix<f64> {
    if dims.is_empty() {
        return DMatrix::from_element(a.len(), b.len(), 1.0);
    }
    let dh = dims.len() as f64;
    let mut k = DMatrix::zeros(a.len(), b.len());
    for j in 0..b.len() {
        for i in 0..a.len() {
            let mismatch: f64 = dims
                .iter()
                .zip(ls)
                .filter(|(&d, _)| a[i][d] != b[j][d])
                .map(|(_, l)| l)
                .sum();
            k[(i, j)] = (-mismatch / dh).exp();
        }
    }
    k
}

/// Cross-kernel matrix, rows over `xs`, columns over `qs`.
pub fn kernel_cross(kernel: &KernelSpec, xs: &[DVector<f64>], qs: &[DVector<f64>]) -> DMatrix<f64> {
    match kernel {
        KernelSpec::Matern52Ard {
            lengthscales,
            signal_variance,
        } => {
            let dims: Vec<usize> = (0..lengthscales.len()).collect();
            let mut k = matern_cross(xs, qs, &dims, lengthscales);
            k *= *signal_variance;
            k
        }
        KernelSpec::TransformedOverlap {
            lengthscales,
            signal_variance,
        } => {
            let dims: Vec<usize> = (0..lengthscales.len()).collect();
            let mut k = overlap_cross(xs, qs, &dims, lengthscales);
            k *= *signal_variance;
            k
        }
        KernelSpec::MixedCocabo {
            comb_dims,
            cont_dims,
            comb_lengthscales,
            cont_lengthscales,
            signal_variance,
            mix_weight,
        } => {
            let kh = overlap_cross(xs, qs, comb_dims, comb_lengthscales);
            let kx = matern_cross(xs, qs, cont_dims, cont_lengthscales);
            combine_cross(kh, kx, *mix_weight, comb_dims, cont_dims, *signal_variance)
        }
        KernelSpec::BounceMixed {
            onehot_dims,
            cont_dims,
            onehot_lengthscales,
            cont_lengthscales,
            signal_variance,
            mix_weight,
        } => {
            let kh = matern_cross(xs, qs, onehot_dims, onehot_lengthscales);
            let kx = matern_cross(xs, qs, cont_dims, cont_lengthscales);
            combine_cross(kh, kx, *mix_weight, onehot_dims, cont_dims, *signal_variance)
        }
    }
}

fn combine_cross(
    kh: DMatrix<f64>,
    kx: DMatrix<f64>,
    w: f64,
    comb: &[usize],
    cont: &[usize],
    sv: f64,
) -> DMatrix<f64> {
    if comb.is_empty() {
        return kx * sv;
    }
    if cont.is_empty() {
        return kh * sv;
    }
    let mut out = kh;
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            let h = out[(i, j)];
            let x = kx[(i, j)];
            out[(i, j)] = sv * ((1.0 - w) * 0.5 * (h + x) + w * h * x);
        }
    }
    out
}

/// Kernel matrix over a training set.
pub fn kernel_matrix(kernel: &KernelSpec, xs: &[DVector<f64>]) -> DMatrix<f64> {
    let mut k = kernel_cross(kernel, xs, xs);
    // Symmetrize away gemm rounding drift.
    for j in 0..k.ncols() {
        for i in 0..j {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Gradient of 0.5 * sum_ij B_ij dK_ij/dtheta for every packed kernel
/// hyperparameter (lengthscales, signal, then a slot for noise filled by the
/// caller, then mix weight if present).
fn grad_packed(
    kernel: &KernelSpec,
    xs: &[DVector<f64>],
    k_matrix: &DMatrix<f64>,
    b: &DMatrix<f64>,
    has_mix: bool,
) -> Vec<f64> {
    let n = xs.len();
    let mut grads: Vec<f64>;
    match kernel {
        KernelSpec::Matern52Ard {
            lengthscales,
            signal_variance,
        } => {
            let d = lengthscales.len();
            grads = vec![0.0; d + 2];
            for i in 0..n {
                for j in 0..i {
                    let bij = 2.0 * b[(i, j)];
                    let kij = k_matrix[(i, j)];
                    let r2: f64 = (0..d)
                        .map(|l| {
                            let z = (xs[i][l] - xs[j][l]) / lengthscales[l];
                            z * z
                        })
                        .sum();
                    let pf = signal_variance * matern52_pair_factor(r2.sqrt());
                    for l in 0..d {
                        let z = (xs[i][l] - xs[j][l]) / lengthscales[l];
                        grads[l] += 0.5 * bij * pf * z * z;
                    }
                    grads[d] += 0.5 * bij * kij;
                }
            }
            // Diagonal contributes only to the signal gradient.
            for i in 0..n {
                grads[d] += 0.5 * b[(i, i)] * k_matrix[(i, i)];
            }
        }
        KernelSpec::TransformedOverlap {
            lengthscales,
            ..
        } => {
            let d = lengthscales.len();
            let dh = d as f64;
            grads = vec![0.0; d + 2];
            for i in 0..n {
                for j in 0..i {
                    let bij = 2.0 * b[(i, j)];
                    let kij = k_matrix[(i, j)];
                    for l in 0..d {
                        if xs[i][l] != xs[j][l] {
                            grads[l] += 0.5 * bij * (-lengthscales[l] / dh) * kij;
                        }
                    }
                    grads[d] += 0.5 * bij * kij;
                }
            }
            for i in 0..n {
                grads[d] += 0.5 * b[(i, i)] * k_matrix[(i, i)];
            }
        }
        KernelSpec::MixedCocabo {
            comb_dims,
            cont_dims,
            comb_lengthscales,
            cont_lengthscales,
            signal_variance,
            mix_weight,
        } => {
            grads = mixed_grads(
                xs,
                b,
                comb_dims,
                cont_dims,
                comb_lengthscales,
                cont_lengthscales,
                *signal_variance,
                *mix_weight,
                false,
            );
        }
        KernelSpec::BounceMixed {
            onehot_dims,
            cont_dims,
            onehot_lengthscales,
            cont_lengthscales,
            signal_variance,
            mix_weight,
        } => {
            grads = mixed_grads(
                xs,
                b,
                onehot_dims,
                cont_dims,
                onehot_lengthscales,
                cont_lengthscales,
                *signal_variance,
                *mix_weight,
                true,
            );
        }
    }
    debug_assert!(has_mix == (grads.len() >= 3 && matches!(kernel, KernelSpec::MixedCocabo { .. } | KernelSpec::BounceMixed { .. })) || !has_mix);
    grads
}

#[allow(clippy::too_many_arguments)]
fn mixed_grads(
    xs: &[DVector<f64>],
    b: &DMatrix<f64>,
    comb_dims: &[usize],
    cont_dims: &[usize],
    comb_ls: &[f64],
    cont_ls: &[f64],
    sv: f64,
    w: f64,
    comb_is_matern: bool,
) -> Vec<f64> {
    let n = xs.len();
    let (dc, dx) = (comb_ls.len(), cont_ls.len());
    // lengthscale grads, signal grad, noise slot, mix grad
    let mut grads = vec![0.0; dc + dx + 3];
    let dh = dc as f64;
    let dsig = dc + dx;
    let dmix = dc + dx + 2;
    let degenerate = comb_dims.is_empty() || cont_dims.is_empty();
    for i in 0..n {
        for j in 0..i {
            let bij = 2.0 * b[(i, j)];
            let (kh, kh_pf, rh) = if comb_is_matern {
                let r2: f64 = comb_dims
                    .iter()
                    .zip(comb_ls)
                    .map(|(&d, l)| {
                        let z = (xs[i][d] - xs[j][d]) / l;
                        z * z
                    })
                    .sum();
                let r = r2.sqrt();
                (matern52(r), matern52_pair_factor(r), r)
            } else {
                (overlap_unit(&xs[i], &xs[j], comb_dims, comb_ls), 0.0, 0.0)
            };
            let _ = rh;
            let r2x: f64 = cont_dims
                .iter()
                .zip(cont_ls)
                .map(|(&d, l)| {
                    let z = (xs[i][d] - xs[j][d]) / l;
                    z * z
                })
                .sum();
            let rx = r2x.sqrt();
            let kx = if cont_dims.is_empty() { 1.0 } else { matern52(rx) };
            let kx_pf = matern52_pair_factor(rx);

            let kij = sv * combine(kh, kx, w, comb_dims, cont_dims);
            // Outer-derivative factors of the combination wrt each part.
            let (dk_dkh, dk_dkx) = if comb_dims.is_empty() {
                (0.0, sv)
            } else if cont_dims.is_empty() {
                (sv, 0.0)
            } else {
                (
                    sv * ((1.0 - w) * 0.5 + w * kx),
                    sv * ((1.0 - w) * 0.5 + w * kh),
                )
            };
            // Combinatorial lengthscales.
            for (slot, (&d, l)) in comb_dims.iter().zip(comb_ls).enumerate() {
                let g = if comb_is_matern {
                    let z = (xs[i][d] - xs[j][d]) / l;
                    kh_pf * z * z
                } else if xs[i][d] != xs[j][d] {
                    (-l / dh) * kh
                } else {
                    0.0
                };
                grads[slot] += 0.5 * bij * dk_dkh * g;
            }
            // Continuous lengthscales.
            for (slot, (&d, l)) in cont_dims.iter().zip(cont_ls).enumerate() {
                let z = (xs[i][d] - xs[j][d]) / l;
                grads[dc + slot] += 0.5 * bij * dk_dkx * kx_pf * z * z;
            }
            grads[dsig] += 0.5 * bij * kij;
            if !degenerate {
                let dk_dw = sv * (-(kh + kx) * 0.5 + kh * kx) * w * (1.0 - w);
                grads[dmix] += 0.5 * bij * dk_dw;
            }
        }
    }
    for i in 0..n {
        grads[dsig] += 0.5 * b[(i, i)] * sv;
    }
    grads
}

/// Log marginal likelihood of standardized values under (kernel, noise), with
/// the fixed base jitter on the diagonal.
pub fn log_marginal_likelihood(
    features: &[DVector<f64>],
    values_std: &DVector<f64>,
    kernel: &KernelSpec,
    noise: f64,
) -> Result<f64> {
    let (lml, _, _, _) = lml_parts(features, values_std, kernel, noise)?;
    Ok(lml)
}

fn lml_parts(
    features: &[DVector<f64>],
    values_std: &DVector<f64>,
    kernel: &KernelSpec,
    noise: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let n = features.len();
    let mut k = kernel_matrix(kernel, features);
    let mean_diag = k.diagonal().iter().sum::<f64>() / n as f64;
    let ridge = noise + BASE_JITTER * mean_diag.max(1.0);
    for i in 0..n {
        k[(i, i)] += ridge;
    }
    let mut chol = k.clone();
    linalg::cholesky_lower(&mut chol)
        .map_err(|_| Error::numerical("kernel matrix not positive definite"))?;
    let alpha = linalg::cholesky_solve_vec(&chol, values_std);
    let log_det: f64 = (0..n).map(|i| chol[(i, i)].ln()).sum();
    let lml = -0.5 * values_std.dot(&alpha)
        - log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    // Undo the ridge so callers see the noise-free kernel matrix.
    for i in 0..n {
        k[(i, i)] -= ridge;
    }
    Ok((lml, k, chol, alpha))
}

/// LML and its gradient in the packed parameterization.
pub fn lml_and_grad(
    features: &[DVector<f64>],
    values_std: &DVector<f64>,
    kernel: &KernelSpec,
    noise: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = features.len();
    let (lml, k, chol, alpha) = lml_parts(features, values_std, kernel, noise)?;
    let k_inv = linalg::cholesky_inverse(&chol);
    // B = alpha alpha^T - K_inv; grad_theta = 0.5 tr(B dK/dtheta).
    let b = &alpha * alpha.transpose() - &k_inv;
    let packed = pack(kernel, noise);
    let mut grads = grad_packed(kernel, features, &k, &b, packed.has_mix);
    // Noise gradient: dK/d(ln noise) = noise * I.
    let noise_slot = if packed.has_mix {
        grads.len() - 2
    } else {
        grads.len() - 1
    };
    let tr_b: f64 = (0..n).map(|i| b[(i, i)]).sum();
    grads[noise_slot] = 0.5 * noise * tr_b;
    let _ = lml;
    Ok((lml, grads))
}

// ---------------------------------------------------------------------------
// Model fitting and posterior
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Hyperparameters from a previous fit to seed the first restart.
    pub warm_start: Option<(KernelSpec, f64)>,
    /// Weight of the smoothing gamma priors on the likelihood ascent
    /// (0 recovers pure maximum likelihood). Inputs in [0,1] and
    /// standardized values assumed.
    pub prior_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 4,
            max_steps: 60,
            learning_rate: 0.08,
            warm_start: None,
            prior_weight: 1.0,
        }
    }
}

// Gamma(shape, rate) log-density regularizers in the style of common BO
// stacks, keeping ARD lengthscales away from degenerate extremes on small
// training sets. log p(x) = (shape-1) ln x - rate x + const.
const LS_PRIOR: (f64, f64) = (3.0, 6.0);
const SV_PRIOR: (f64, f64) = (2.0, 0.15);
const NOISE_PRIOR: (f64, f64) = (1.1, 0.05);

fn log_gamma_prior(x: f64, (shape, rate): (f64, f64)) -> f64 {
    (shape - 1.0) * x.ln() - rate * x
}

/// d log p / d ln x.
fn dlog_gamma_prior(x: f64, (shape, rate): (f64, f64)) -> f64 {
    (shape - 1.0) - rate * x
}

/// Log-prior over the packed hyperparameters and its gradient, added to the
/// likelihood during fitting.
fn prior_and_grad(kernel: &KernelSpec, noise: f64, weight: f64) -> (f64, Vec<f64>) {
    let packed = pack(kernel, noise);
    let n_theta = packed.theta.len();
    let ls_count = n_theta - 2 - usize::from(packed.has_mix);
    let mut value = 0.0;
    let mut grad = vec![0.0; n_theta];
    for slot in 0..ls_count {
        let l = packed.theta[slot].exp();
        value += log_gamma_prior(l, LS_PRIOR);
        grad[slot] = dlog_gamma_prior(l, LS_PRIOR);
    }
    let sv = packed.theta[ls_count].exp();
    value += log_gamma_prior(sv, SV_PRIOR);
    grad[ls_count] = dlog_gamma_prior(sv, SV_PRIOR);
    let nz = packed.theta[ls_count + 1].exp();
    value += log_gamma_prior(nz, NOISE_PRIOR);
    grad[ls_count + 1] = dlog_gamma_prior(nz, NOISE_PRIOR);
    (
        weight * value,
        grad.into_iter().map(|g| weight * g).collect(),
    )
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelSpec,
    noise_variance: f64,
    features: Vec<DVector<f64>>,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
    log_marginal: f64,
}

impl GpModel {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn train_len(&self) -> usize {
        self.features.len()
    }

    /// Posterior mean vector and full covariance over query features, in
    /// original value units.
    pub fn posterior(&self, queries: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let q = queries.len();
        let k_star = kernel_cross(&self.kernel, &self.features, queries);
        let k_qq = kernel_matrix(&self.kernel, queries);
        let mean_std = k_star.transpose() * &self.alpha;
        let mut v = k_star;
        linalg::solve_lower_in_place(&self.chol, &mut v);
        let mut cov = k_qq;
        cov.gemm(-1.0, &v.transpose(), &v, 1.0);
        let mean = DVector::from_fn(q, |i, _| self.y_mean + self.y_scale * mean_std[i]);
        cov *= self.y_scale * self.y_scale;
        (mean, cov)
    }

    /// Posterior mean and variance at one query, in original units.
    pub fn posterior_point(&self, query: &DVector<f64>) -> (f64, f64) {
        let (mean, cov) = self.posterior(std::slice::from_ref(query));
        (mean[0], cov[(0, 0)].max(0.0))
    }
}

/// Fit hyperparameters by multi-restart Adam ascent on the log marginal
/// likelihood; condition the returned model on all supplied points.
///
/// `template` fixes the kernel structure and supplies the default initial
/// hyperparameters. Deterministic for a given `rng` state.
pub fn fit(
    features: &[DVector<f64>],
    values: &[f64],
    template: &KernelSpec,
    rng: &mut RunRng,
    options: &FitOptions,
) -> Result<GpModel> {
    if features.len() < 2 {
        return Err(Error::invalid("GP fit needs at least 2 points"));
    }
    if features.len() != values.len() {
        return Err(Error::invalid("GP fit inputs and values differ in length"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("GP fit values must be finite"));
    }
    let n = values.len();
    let y_mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
    let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let values_std = DVector::from_fn(n, |i, _| (values[i] - y_mean) / y_scale);

    let mut best: Option<(f64, KernelSpec, f64)> = None;
    for restart in 0..options.restarts.max(1) {
        let (init_kernel, init_noise) = initial_point(template, restart, options, rng);
        let packed0 = pack(&init_kernel, init_noise);
        let result =
            adam_ascent(features, &values_std, template, packed0, options, options.max_steps);
        if let Some((lml, kernel, noise)) = result {
            if best.as_ref().map_or(true, |(b, _, _)| lml > *b) {
                best = Some((lml, kernel, noise));
            }
        }
    }
    let (mut lml, kernel, mut noise) =
        best.ok_or_else(|| Error::numerical("every GP fit restart failed"))?;

    // Gradient ascent moves ln(noise) slowly when its optimum sits orders of
    // magnitude away, and the smoothing prior must not hold noise off the
    // floor on clean data; refine noise on a geometric grid by pure
    // likelihood at the fixed kernel.
    if let Ok(mut best_raw) = log_marginal_likelihood(features, &values_std, &kernel, noise) {
        for factor in [1e-1, 1e-2, 1e-4, 0.0, 1e1] {
            let cand = if factor == 0.0 {
                NOISE_BOUNDS.0
            } else {
                (noise * factor).clamp(NOISE_BOUNDS.0, NOISE_BOUNDS.1)
            };
            if cand == noise {
                continue;
            }
            if let Ok(l) = log_marginal_likelihood(features, &values_std, &kernel, cand) {
                if l > best_raw {
                    best_raw = l;
                    noise = cand;
                }
            }
        }
        lml = best_raw;
    }

    condition(features.to_vec(), values_std, kernel, noise, y_mean, y_scale, lml)
}

/// Condition a model with known hyperparameters (no fitting).
pub fn condition_with(
    features: &[DVector<f64>],
    values: &[f64],
    kernel: KernelSpec,
    noise: f64,
) -> Result<GpModel> {
    let n = values.len();
    if n == 0 || features.len() != n {
        return Err(Error::invalid("conditioning needs matching non-empty data"));
    }
    let y_mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
    let y_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
    let values_std = DVector::from_fn(n, |i, _| (values[i] - y_mean) / y_scale);
    condition(features.to_vec(), values_std, kernel, noise, y_mean, y_scale, f64::NAN)
}

fn condition(
    features: Vec<DVector<f64>>,
    values_std: DVector<f64>,
    kernel: KernelSpec,
    noise: f64,
    y_mean: f64,
    y_scale: f64,
    lml: f64,
) -> Result<GpModel> {
    let n = features.len();
    let mut k = kernel_matrix(&kernel, &features);
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let (chol, _) = linalg::cholesky_with_jitter(&k, 1e-10, 1e-4)?;
    let alpha = linalg::cholesky_solve_vec(&chol, &values_std);
    Ok(GpModel {
        kernel,
        noise_variance: noise,
        features,
        chol,
        alpha,
        y_mean,
        y_scale,
        log_marginal: lml,
    })
}

fn initial_point(
    template: &KernelSpec,
    restart: usize,
    options: &FitOptions,
    rng: &mut RunRng,
) -> (KernelSpec, f64) {
    if restart == 0 {
        if let Some((kernel, noise)) = &options.warm_start {
            return (kernel.clone(), *noise);
        }
        return (template.clone(), 1e-4);
    }
    // Random log-uniform draws around the unit-cube scale.
    fn draw_ls(rng: &mut RunRng, lo: f64, hi: f64) -> f64 {
        rng.uniform_in(lo.ln(), hi.ln()).exp()
    }
    let noise = (rng.uniform_in((1e-6f64).ln(), (1e-2f64).ln())).exp();
    let kernel = match template {
        KernelSpec::Matern52Ard { lengthscales, .. } => KernelSpec::Matern52Ard {
            lengthscales: lengthscales.iter().map(|_| draw_ls(rng, 0.1, 2.0)).collect(),
            signal_variance: draw_ls(rng, 0.3, 3.0),
        },
        KernelSpec::TransformedOverlap { lengthscales, .. } => KernelSpec::TransformedOverlap {
            lengthscales: lengthscales.iter().map(|_| draw_ls(rng, 0.1, 5.0)).collect(),
            signal_variance: draw_ls(rng, 0.3, 3.0),
        },
        KernelSpec::MixedCocabo {
            comb_dims,
            cont_dims,
            comb_lengthscales,
            cont_lengthscales,
            ..
        } => KernelSpec::MixedCocabo {
            comb_dims: comb_dims.clone(),
            cont_dims: cont_dims.clone(),
            comb_lengthscales: comb_lengthscales.iter().map(|_| draw_ls(rng, 0.1, 5.0)).collect(),
            cont_lengthscales: cont_lengthscales.iter().map(|_| draw_ls(rng, 0.1, 2.0)).collect(),
            signal_variance: draw_ls(rng, 0.3, 3.0),
            mix_weight: rng.uniform_in(0.2, 0.8),
        },
        KernelSpec::BounceMixed {
            onehot_dims,
            cont_dims,
            onehot_lengthscales,
            cont_lengthscales,
            ..
        } => KernelSpec::BounceMixed {
            onehot_dims: onehot_dims.clone(),
            cont_dims: cont_dims.clone(),
            onehot_lengthscales: onehot_lengthscales.iter().map(|_| draw_ls(rng, 0.1, 2.0)).collect(),
            cont_lengthscales: cont_lengthscales.iter().map(|_| draw_ls(rng, 0.1, 2.0)).collect(),
            signal_variance: draw_ls(rng, 0.3, 3.0),
            mix_weight: rng.uniform_in(0.2, 0.8),
        },
    };
    (kernel, noise)
}

fn adam_ascent(
    features: &[DVector<f64>],
    values_std: &DVector<f64>,
    template: &KernelSpec,
    mut packed: Packed,
    options: &FitOptions,
    max_steps: usize,
) -> Option<(f64, KernelSpec, f64)> {
    let dim = packed.theta.len();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut best_lml = f64::NEG_INFINITY;
    let mut best_theta = packed.theta.clone();
    let mut stall = 0usize;
    let tol = 1e-7 * features.len() as f64;

    for step in 1..=max_steps {
        let (kernel, noise) = unpack(template, &packed);
        let Ok((lml, mut grads)) = lml_and_grad(features, values_std, &kernel, noise) else {
            break;
        };
        let (prior, prior_grad) = prior_and_grad(&kernel, noise, options.prior_weight);
        let objective = lml + prior;
        for (g, pg) in grads.iter_mut().zip(&prior_grad) {
            *g += pg;
        }
        if objective > best_lml + tol {
            best_lml = objective;
            best_theta = packed.theta.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= 8 {
                break;
            }
        }
        let bias1 = 1.0 - beta1.powi(step as i32);
        let bias2 = 1.0 - beta2.powi(step as i32);
        for i in 0..dim {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
            packed.theta[i] += options.learning_rate * (m[i] / bias1) / ((v[i] / bias2).sqrt() + eps);
        }
        clamp_theta(template, &mut packed);
    }
    if best_lml.is_finite() {
        packed.theta = best_theta;
        let (kernel, noise) = unpack(template, &packed);
        Some((best_lml, kernel, noise))
    } else {
        None
    }
}

/// Keep the packed vector inside the hyperparameter box so the ascent cannot
/// drift arbitrarily far past a clamp.
fn clamp_theta(template: &KernelSpec, packed: &mut Packed) {
    let ls_count = match template {
        KernelSpec::Matern52Ard { lengthscales, .. }
        | KernelSpec::TransformedOverlap { lengthscales, .. } => lengthscales.len(),
        KernelSpec::MixedCocabo {
            comb_lengthscales,
            cont_lengthscales,
            ..
        }
        | KernelSpec::BounceMixed {
            onehot_lengthscales: comb_lengthscales,
            cont_lengthscales,
            ..
        } => comb_lengthscales.len() + cont_lengthscales.len(),
    };
    for slot in 0..ls_count {
        packed.theta[slot] = packed.theta[slot]
            .clamp(LENGTHSCALE_BOUNDS.0.ln(), LENGTHSCALE_BOUNDS.1.ln());
    }
    packed.theta[ls_count] = packed.theta[ls_count].clamp(SIGNAL_BOUNDS.0.ln(), SIGNAL_BOUNDS.1.ln());
    packed.theta[ls_count + 1] =
        packed.theta[ls_count + 1].clamp(NOISE_BOUNDS.0.ln(), NOISE_BOUNDS.1.ln());
    if packed.has_mix {
        packed.theta[ls_count + 2] = packed.theta[ls_count + 2].clamp(-10.0, 10.0);
    }
}
