//! Cone arithmetic for the product cone K = R₊ˡ × Q(q₁) × … × Q(qₙ), where
//! Q(q) = {u ∈ Rᑫ : u₀ ≥ ‖u₁..‖₂} is the second-order cone.
//!
//! The interior-point iteration works in the scaled space defined by the
//! Nesterov-Todd point w with W z = W⁻ᵀ s = λ. For the orthant W is diagonal;
//! for a second-order cone W = β·(2vvᵀ − J) with vᵀJv = 1, J = diag(1, −I).

#[derive(Clone, Debug, PartialEq)]
pub struct ConeDims {
    /// leading nonnegative-orthant coordinates
    pub nonneg: usize,
    /// sizes (≥ 2) of the trailing second-order cones
    pub soc: Vec<usize>,
}

impl ConeDims {
    pub fn total(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree of the cone: one per orthant coordinate and one per
    /// second-order cone (with the identity e = (1, 0, …, 0)).
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// Identity element of the cone algebra.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.total()];
        for v in e.iter_mut().take(self.nonneg) {
            *v = 1.0;
        }
        let mut off = self.nonneg;
        for &q in &self.soc {
            e[off] = 1.0;
            off += q;
        }
        e
    }

    /// Largest α ≥ 0 such that u + α·du stays in the (closed) cone, or
    /// `f64::INFINITY` when the ray never leaves it. Requires u interior.
    pub fn max_step(&self, u: &[f64], du: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for i in 0..self.nonneg {
            if du[i] < 0.0 {
                alpha = alpha.min(-u[i] / du[i]);
            }
        }
        let mut off = self.nonneg;
        for &q in &self.soc {
            let (u0, u1) = (u[off], &u[off + 1..off + q]);
            let (d0, d1) = (du[off], &du[off + 1..off + q]);
            // boundary of Q ∪ −Q: (u0+αd0)² − ‖u1+αd1‖² = 0
            let a = d0 * d0 - dot(d1, d1);
            let b = 2.0 * (u0 * d0 - dot(u1, d1));
            let c = u0 * u0 - dot(u1, u1);
            if let Some(r) = smallest_positive_root(a, b, c) {
                alpha = alpha.min(r);
            }
            if d0 < 0.0 {
                alpha = alpha.min(-u0 / d0);
            }
            off += q;
        }
        alpha
    }

    /// Jordan product u ∘ w.
    pub fn product(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total()];
        for i in 0..self.nonneg {
            out[i] = u[i] * w[i];
        }
        let mut off = self.nonneg;
        for &q in &self.soc {
            let (u0, u1) = (u[off], &u[off + 1..off + q]);
            let (w0, w1) = (w[off], &w[off + 1..off + q]);
            out[off] = u0 * w0 + dot(u1, w1);
            for i in 1..q {
                out[off + i] = u0 * w[off + i] + w0 * u[off + i];
            }
            off += q;
        }
        out
    }

    /// Solve λ ∘ x = d for x (inverse of the arrow operator L(λ)).
    pub fn arrow_solve(&self, lambda: &[f64], d: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.total()];
        for i in 0..self.nonneg {
            x[i] = d[i] / lambda[i];
        }
        let mut off = self.nonneg;
        for &q in &self.soc {
            let l0 = lambda[off];
            let l1 = &lambda[off + 1..off + q];
            let d0 = d[off];
            let d1 = &d[off + 1..off + q];
            let det = l0 * l0 - dot(l1, l1);
            let x0 = (l0 * d0 - dot(l1, d1)) / det;
            x[off] = x0;
            for i in 1..q {
                x[off + i] = (d[off + i] - x0 * lambda[off + i]) / l0;
            }
            off += q;
        }
        x
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Smallest positive root of aα² + bα + c = 0 with c > 0 (inside at α = 0).
fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a.abs() < 1e-300 {
        if b < 0.0 {
            return Some(-c / b);
        }
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots.iter().copied().find(|&r| r > 0.0)
}

/// Nesterov-Todd scaling for one second-order cone, stored as (β, v) with
/// W = β (2vvᵀ − J).
#[derive(Clone, Debug)]
pub struct SocScaling {
    pub beta: f64,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Scaling {
    /// diagonal of W on the orthant part: dᵢ = √(sᵢ/zᵢ)
    pub orth: Vec<f64>,
    pub socs: Vec<SocScaling>,
    /// scaled point λ = W z = W⁻ᵀ s
    pub lambda: Vec<f64>,
    dims: ConeDims,
}

impl Scaling {
    /// Compute the NT scaling from interior points s, z.
    pub fn compute(dims: &ConeDims, s: &[f64], z: &[f64]) -> Scaling {
        let mut orth = Vec::with_capacity(dims.nonneg);
        let mut lambda = vec![0.0; dims.total()];
        for i in 0..dims.nonneg {
            orth.push((s[i] / z[i]).sqrt());
            lambda[i] = (s[i] * z[i]).sqrt();
        }
        let mut socs = Vec::with_capacity(dims.soc.len());
        let mut off = dims.nonneg;
        for &q in &dims.soc {
            let sb = &s[off..off + q];
            let zb = &z[off..off + q];
            let a = jnorm(sb);
            let b = jnorm(zb);
            let beta = (a / b).sqrt();
            let c = ((dot_full(sb, zb) / (a * b) + 1.0) / 2.0).sqrt();

            // v_raw = (s/a + J z/b) / (2c), then shift by e and renormalize so
            // that vᵀJv = 1.
            let mut v = vec![0.0; q];
            v[0] = (sb[0] / a + zb[0] / b) / (2.0 * c);
            for i in 1..q {
                v[i] = (sb[i] / a - zb[i] / b) / (2.0 * c);
            }
            let shift = (2.0 * (v[0] + 1.0)).sqrt();
            v[0] += 1.0;
            for vi in v.iter_mut() {
                *vi /= shift;
            }

            // λ block
            let scale = (a * b).sqrt();
            let d = sb[0] / a + zb[0] / b + 2.0 * c;
            lambda[off] = c * scale;
            for i in 1..q {
                lambda[off + i] = scale
                    * ((c + zb[0] / b) / d * (sb[i] / a) + (c + sb[0] / a) / d * (zb[i] / b));
            }

            socs.push(SocScaling { beta, v });
            off += q;
        }
        Scaling {
            orth,
            socs,
            lambda,
            dims: dims.clone(),
        }
    }

    /// y = W x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dims.total()];
        for i in 0..self.dims.nonneg {
            y[i] = self.orth[i] * x[i];
        }
        let mut off = self.dims.nonneg;
        for (k, &q) in self.dims.soc.iter().enumerate() {
            let sc = &self.socs[k];
            let xb = &x[off..off + q];
            let vtx = dot_full(&sc.v, xb);
            y[off] = sc.beta * (2.0 * sc.v[0] * vtx - xb[0]);
            for i in 1..q {
                y[off + i] = sc.beta * (2.0 * sc.v[i] * vtx + xb[i]);
            }
            off += q;
        }
        y
    }

    /// y = W⁻¹ x  (W is symmetric, so this is also W⁻ᵀ x)
    pub fn apply_inv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dims.total()];
        for i in 0..self.dims.nonneg {
            y[i] = x[i] / self.orth[i];
        }
        let mut off = self.dims.nonneg;
        for (k, &q) in self.dims.soc.iter().enumerate() {
            let sc = &self.socs[k];
            let xb = &x[off..off + q];
            // W⁻¹ = (1/β)(2(Jv)(Jv)ᵀ − J)
            let jvtx = sc.v[0] * xb[0] - dot_full(&sc.v[1..], &xb[1..]);
            y[off] = (2.0 * sc.v[0] * jvtx - xb[0]) / sc.beta;
            for i in 1..q {
                y[off + i] = (-2.0 * sc.v[i] * jvtx + xb[i]) / sc.beta;
            }
            off += q;
        }
        y
    }
}

fn dot_full(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// √(u₀² − ‖u₁‖²) for an interior SOC point.
fn jnorm(u: &[f64]) -> f64 {
    let tail = dot_full(&u[1..], &u[1..]);
    (u[0] * u[0] - tail).max(0.0).sqrt()
}
