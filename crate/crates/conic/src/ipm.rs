//! Homogeneous self-dual interior-point method over R₊ˡ × SOC products with
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector step.
//!
//! Solves  min cᵀx  s.t.  A x = b,  G x + s = h,  s ∈ K  by embedding the
//! primal-dual pair into the self-dual model with variables (x, y, z, s, τ, κ)
//! and driving the residuals
//!   rx = Aᵀy + Gᵀz + cτ,  ry = Ax − bτ,  rz = Gx + s − hτ,
//!   rt = κ + cᵀx + bᵀy + hᵀz
//! to zero together with the complementarity s∘z, τκ.

use crate::cone::{ConeDims, Scaling};
use crate::dense::{Lu, Mat};
use crate::program::{IterStat, Residuals, SolveOptions, SolveStatus, StandardForm};

pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub residuals: Residuals,
    pub iterations: usize,
    pub trace: Vec<IterStat>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// Ruiz-style equilibration. Second-order cone rows share one scale factor so
/// the cone geometry is preserved.
struct Equilibration {
    ra: Vec<f64>,
    rg: Vec<f64>,
    dc: Vec<f64>,
    obj_scale: f64,
    a: Mat,
    g: Mat,
    b: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

impl Equilibration {
    fn compute(sf: &StandardForm) -> Equilibration {
        let p = sf.a.rows;
        let m = sf.g.rows;
        let n = sf.c.len();
        let mut ra = vec![1.0; p];
        let mut rg = vec![1.0; m];
        let mut dc = vec![1.0; n];

        // row groups of G: orthant rows alone, soc blocks together
        let mut groups: Vec<(usize, usize)> = (0..sf.dims.nonneg).map(|i| (i, i + 1)).collect();
        let mut off = sf.dims.nonneg;
        for &q in &sf.dims.soc {
            groups.push((off, off + q));
            off += q;
        }

        for _ in 0..3 {
            for i in 0..p {
                let mut mx = 0.0f64;
                for j in 0..n {
                    mx = mx.max((sf.a.get(i, j) * ra[i] * dc[j]).abs());
                }
                if mx > 1e-12 {
                    ra[i] /= mx.sqrt();
                }
            }
            for &(lo, hi) in &groups {
                let mut mx = 0.0f64;
                for i in lo..hi {
                    for j in 0..n {
                        mx = mx.max((sf.g.get(i, j) * rg[i] * dc[j]).abs());
                    }
                }
                if mx > 1e-12 {
                    let f = 1.0 / mx.sqrt();
                    for r in rg.iter_mut().take(hi).skip(lo) {
                        *r *= f;
                    }
                }
            }
            for j in 0..n {
                let mut mx = 0.0f64;
                for i in 0..p {
                    mx = mx.max((sf.a.get(i, j) * ra[i] * dc[j]).abs());
                }
                for i in 0..m {
                    mx = mx.max((sf.g.get(i, j) * rg[i] * dc[j]).abs());
                }
                if mx > 1e-12 {
                    dc[j] /= mx.sqrt();
                }
            }
        }

        let mut a = Mat::zeros(p, n);
        for i in 0..p {
            for j in 0..n {
                a.set(i, j, sf.a.get(i, j) * ra[i] * dc[j]);
            }
        }
        let mut g = Mat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                g.set(i, j, sf.g.get(i, j) * rg[i] * dc[j]);
            }
        }
        let b: Vec<f64> = sf.b.iter().zip(ra.iter()).map(|(v, r)| v * r).collect();
        let h: Vec<f64> = sf.h.iter().zip(rg.iter()).map(|(v, r)| v * r).collect();
        let mut c: Vec<f64> = sf.c.iter().zip(dc.iter()).map(|(v, d)| v * d).collect();
        let obj_scale = c.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for v in c.iter_mut() {
            *v /= obj_scale;
        }

        Equilibration {
            ra,
            rg,
            dc,
            obj_scale,
            a,
            g,
            b,
            h,
            c,
        }
    }
}

/// Candidate solution in original (unscaled) units.
struct Candidate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    pcost: f64,
    dcost: f64,
    pres: f64,
    dres: f64,
    gap: f64,
    rel_gap: f64,
}

impl Candidate {
    fn build(sf: &StandardForm, eq: &Equilibration, st: &State) -> Candidate {
        let tau = st.tau;
        let x: Vec<f64> = st
            .x
            .iter()
            .zip(eq.dc.iter())
            .map(|(v, d)| v * d / tau)
            .collect();
        let y: Vec<f64> = st
            .y
            .iter()
            .zip(eq.ra.iter())
            .map(|(v, r)| v * r * eq.obj_scale / tau)
            .collect();
        let z: Vec<f64> = st
            .z
            .iter()
            .zip(eq.rg.iter())
            .map(|(v, r)| v * r * eq.obj_scale / tau)
            .collect();
        let s: Vec<f64> = st
            .s
            .iter()
            .zip(eq.rg.iter())
            .map(|(v, r)| v / r / tau)
            .collect();

        let pcost = dot(&sf.c, &x);
        let dcost = -(dot(&sf.b, &y) + dot(&sf.h, &z));

        let mut ry = sf.a.mul_vec(&x);
        for (v, bi) in ry.iter_mut().zip(sf.b.iter()) {
            *v -= bi;
        }
        let mut rz = sf.g.mul_vec(&x);
        for ((v, si), hi) in rz.iter_mut().zip(s.iter()).zip(sf.h.iter()) {
            *v += si - hi;
        }
        let mut rx = sf.a.mul_vec_t(&y);
        let gz = sf.g.mul_vec_t(&z);
        for ((v, gi), ci) in rx.iter_mut().zip(gz.iter()).zip(sf.c.iter()) {
            *v += gi + ci;
        }

        let pres = (norm2(&ry) / (1.0 + norm2(&sf.b))).max(norm2(&rz) / (1.0 + norm2(&sf.h)));
        let dres = norm2(&rx) / (1.0 + norm2(&sf.c));
        let gap = dot(&s, &z);
        let rel_gap = gap / 1.0f64.max(pcost.abs());

        // weak duality up to residual slack:
        //   pcost − dcost = sᵀz + xᵀrx − yᵀry − zᵀrz  with sᵀz ≥ 0
        debug_assert!({
            let slack = dot(&x, &rx).abs() + dot(&y, &ry).abs() + dot(&z, &rz).abs();
            dcost - pcost <= slack + 1e-7 * (1.0 + pcost.abs() + dcost.abs())
        });

        Candidate {
            x,
            y,
            z,
            s,
            pcost,
            dcost,
            pres,
            dres,
            gap,
            rel_gap,
        }
    }

    fn score(&self) -> f64 {
        self.pres.max(self.dres).max(self.rel_gap)
    }
}

struct State {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

pub(crate) fn solve_standard(sf: &StandardForm, opts: &SolveOptions) -> RawSolution {
    let n = sf.c.len();
    let p = sf.a.rows;
    let m = sf.g.rows;
    let dims = sf.dims.clone();
    debug_assert_eq!(dims.total(), m);

    let eq = Equilibration::compute(sf);
    let e = dims.identity();
    let degree = dims.degree() as f64;

    let mut st = State {
        x: vec![0.0; n],
        y: vec![0.0; p],
        z: e.clone(),
        s: e.clone(),
        tau: 1.0,
        kappa: 1.0,
    };

    let mut trace: Vec<IterStat> = Vec::new();
    let mut best: Option<(Candidate, f64)> = None;
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut tiny_steps = 0;

    let ntot = n + p + m;
    let mut kkt = Mat::zeros(ntot, ntot);

    for iter in 0..=opts.max_iters {
        iterations = iter;

        // residuals of the embedding, in scaled space
        let mut resx = eq.a.mul_vec_t(&st.y);
        let gz = eq.g.mul_vec_t(&st.z);
        for j in 0..n {
            resx[j] += gz[j] + eq.c[j] * st.tau;
        }
        let mut resy = eq.a.mul_vec(&st.x);
        for (v, bi) in resy.iter_mut().zip(eq.b.iter()) {
            *v -= bi * st.tau;
        }
        let mut resz = eq.g.mul_vec(&st.x);
        for ((v, si), hi) in resz.iter_mut().zip(st.s.iter()).zip(eq.h.iter()) {
            *v += si - hi * st.tau;
        }
        let rest = st.kappa + dot(&eq.c, &st.x) + dot(&eq.b, &st.y) + dot(&eq.h, &st.z);
        let gap_total = dot(&st.s, &st.z) + st.tau * st.kappa;
        let mu = gap_total / (degree + 1.0);

        // convergence bookkeeping on the original data
        let cand = Candidate::build(sf, &eq, &st);
        let iter_stat = IterStat {
            pcost: cand.pcost,
            dcost: cand.dcost,
            primal_res: cand.pres,
            dual_res: cand.dres,
            rel_gap: cand.rel_gap,
            mu,
            step: 0.0,
        };
        let score = cand.score();
        if best.as_ref().is_none_or(|(_, s)| score < *s) {
            best = Some((cand, score));
        }
        let (cand_ref, _) = best.as_ref().unwrap();

        let optimal = cand_ref.pres <= opts.tol
            && cand_ref.dres <= opts.tol
            && (cand_ref.rel_gap <= opts.tol || cand_ref.gap <= opts.tol * opts.tol);

        // infeasibility certificates (unnormalized by τ)
        let y_cert: Vec<f64> = st
            .y
            .iter()
            .zip(eq.ra.iter())
            .map(|(v, r)| v * r * eq.obj_scale)
            .collect();
        let z_cert: Vec<f64> = st
            .z
            .iter()
            .zip(eq.rg.iter())
            .map(|(v, r)| v * r * eq.obj_scale)
            .collect();
        let x_cert: Vec<f64> = st.x.iter().zip(eq.dc.iter()).map(|(v, d)| v * d).collect();
        let s_cert: Vec<f64> = st.s.iter().zip(eq.rg.iter()).map(|(v, r)| v / r).collect();

        let by_hz = dot(&sf.b, &y_cert) + dot(&sf.h, &z_cert);
        let mut pinf_vec = sf.a.mul_vec_t(&y_cert);
        let gz_cert = sf.g.mul_vec_t(&z_cert);
        for (v, g) in pinf_vec.iter_mut().zip(gz_cert.iter()) {
            *v += g;
        }
        let primal_infeasible = by_hz < -1e-10 && norm2(&pinf_vec) <= opts.tol * (-by_hz);

        let cx = dot(&sf.c, &x_cert);
        let ax = sf.a.mul_vec(&x_cert);
        let mut gxs = sf.g.mul_vec(&x_cert);
        for (v, s) in gxs.iter_mut().zip(s_cert.iter()) {
            *v += s;
        }
        let dual_infeasible = cx < -1e-10 && norm2(&ax).max(norm2(&gxs)) <= opts.tol * (-cx);

        if optimal {
            status = SolveStatus::Optimal;
            break;
        }
        if primal_infeasible && st.tau < 1e-6 {
            status = SolveStatus::Infeasible;
            break;
        }
        if dual_infeasible && st.tau < 1e-6 {
            status = SolveStatus::Unbounded;
            break;
        }
        if iter == opts.max_iters {
            break;
        }

        // Nesterov-Todd scaling at the current point
        let sc = Scaling::compute(&dims, &st.s, &st.z);
        let lambda = sc.lambda.clone();

        assemble_kkt(&mut kkt, &eq, &sc, &dims, n, p, m, 0.0);
        let lu = match factor_with_ladder(&mut kkt, &eq, &sc, &dims, n, p, m) {
            Some(lu) => lu,
            None => break, // numerical failure: report best iterate
        };

        // constant right-hand side (coefficient of Δτ)
        let mut rhs1 = vec![0.0; ntot];
        for (r, c) in rhs1.iter_mut().zip(eq.c.iter()) {
            *r = -c;
        }
        rhs1[n..n + p].copy_from_slice(&eq.b);
        rhs1[n + p..].copy_from_slice(&eq.h);
        let v1 = lu.solve_refined(&kkt, &rhs1);

        let solve_direction = |lu: &Lu,
                               sigma: f64,
                               ds_rhs: &[f64],
                               dk_rhs: f64|
         -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
            let one_minus = 1.0 - sigma;
            let u = dims.arrow_solve(&lambda, ds_rhs);
            let wu = sc.apply(&u);
            let mut rhs0 = vec![0.0; ntot];
            for j in 0..n {
                rhs0[j] = -one_minus * resx[j];
            }
            for i in 0..p {
                rhs0[n + i] = -one_minus * resy[i];
            }
            for i in 0..m {
                rhs0[n + p + i] = -one_minus * resz[i] - wu[i];
            }
            let v0 = lu.solve_refined(&kkt, &rhs0);

            let cdot = |v: &[f64]| -> f64 {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += eq.c[j] * v[j];
                }
                for i in 0..p {
                    acc += eq.b[i] * v[n + i];
                }
                for i in 0..m {
                    acc += eq.h[i] * v[n + p + i];
                }
                acc
            };
            let dot0 = cdot(&v0);
            let dot1 = cdot(&v1);
            let denom = dot1 - st.kappa / st.tau;
            let numer = -one_minus * rest - dk_rhs / st.tau - dot0;
            let dtau = if denom.abs() > 1e-14 { numer / denom } else { 0.0 };

            let mut dx = vec![0.0; n];
            let mut dy = vec![0.0; p];
            let mut dz = vec![0.0; m];
            for j in 0..n {
                dx[j] = v0[j] + dtau * v1[j];
            }
            for i in 0..p {
                dy[i] = v0[n + i] + dtau * v1[n + i];
            }
            for i in 0..m {
                dz[i] = v0[n + p + i] + dtau * v1[n + p + i];
            }
            // Δs = W(u − WΔz)
            let wdz = sc.apply(&dz);
            let mut inner = u.clone();
            for (v, w) in inner.iter_mut().zip(wdz.iter()) {
                *v -= w;
            }
            let ds = sc.apply(&inner);
            let dkappa = (dk_rhs - st.kappa * dtau) / st.tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };

        // predictor (affine) direction: σ = 0, rhs = −λ∘λ, −τκ
        let mut ds_aff_rhs = dims.product(&lambda, &lambda);
        for v in ds_aff_rhs.iter_mut() {
            *v = -*v;
        }
        let dk_aff_rhs = -st.tau * st.kappa;
        let (_adx, _ady, adz, ads, adtau, adkappa) =
            solve_direction(&lu, 0.0, &ds_aff_rhs, dk_aff_rhs);

        let alpha_aff = step_length(&dims, &st, &ads, &adz, adtau, adkappa, 1.0);
        let gap_aff = {
            let mut s_try = st.s.clone();
            axpy(&mut s_try, alpha_aff, &ads);
            let mut z_try = st.z.clone();
            axpy(&mut z_try, alpha_aff, &adz);
            dot(&s_try, &z_try)
                + (st.tau + alpha_aff * adtau) * (st.kappa + alpha_aff * adkappa)
        };
        let sigma = ((gap_aff / gap_total).max(0.0).powi(3)).min(1.0);

        // corrector: σμe − λ∘λ − (W⁻ᵀΔs_aff)∘(WΔz_aff)
        let winv_ds = sc.apply_inv(&ads);
        let w_dz = sc.apply(&adz);
        let corr = dims.product(&winv_ds, &w_dz);
        let mut ds_rhs = ds_aff_rhs;
        for i in 0..m {
            ds_rhs[i] += sigma * mu * e[i] - corr[i];
        }
        let dk_rhs = sigma * mu - st.tau * st.kappa - adtau * adkappa;
        let (dx, dy, dz, ds, dtau, dkappa) = solve_direction(&lu, sigma, &ds_rhs, dk_rhs);

        let alpha = step_length(&dims, &st, &ds, &dz, dtau, dkappa, 0.99).min(1.0);

        trace.push(IterStat {
            step: alpha,
            ..iter_stat
        });

        axpy(&mut st.x, alpha, &dx);
        axpy(&mut st.y, alpha, &dy);
        axpy(&mut st.z, alpha, &dz);
        axpy(&mut st.s, alpha, &ds);
        st.tau += alpha * dtau;
        st.kappa += alpha * dkappa;

        if alpha < 1e-7 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                break; // stalled: report best iterate
            }
        } else {
            tiny_steps = 0;
        }
    }

    let (cand, _) = best.expect("at least one iterate evaluated");
    RawSolution {
        status,
        residuals: Residuals {
            primal: cand.pres,
            dual: cand.dres,
            gap: cand.rel_gap,
        },
        x: cand.x,
        y: cand.y,
        z: cand.z,
        s: cand.s,
        iterations,
        trace,
    }
}

fn step_length(
    dims: &ConeDims,
    st: &State,
    ds: &[f64],
    dz: &[f64],
    dtau: f64,
    dkappa: f64,
    damp: f64,
) -> f64 {
    let mut alpha = dims.max_step(&st.s, ds).min(dims.max_step(&st.z, dz));
    if dtau < 0.0 {
        alpha = alpha.min(-st.tau / dtau);
    }
    if dkappa < 0.0 {
        alpha = alpha.min(-st.kappa / dkappa);
    }
    (damp * alpha).min(1.0)
}

#[allow(clippy::too_many_arguments)]
fn assemble_kkt(
    kkt: &mut Mat,
    eq: &Equilibration,
    sc: &Scaling,
    dims: &ConeDims,
    n: usize,
    p: usize,
    m: usize,
    delta: f64,
) {
    for v in kkt.data.iter_mut() {
        *v = 0.0;
    }
    for j in 0..n {
        kkt.set(j, j, delta);
    }
    for i in 0..p {
        kkt.set(n + i, n + i, -delta);
        for j in 0..n {
            let v = eq.a.get(i, j);
            if v != 0.0 {
                kkt.set(j, n + i, v);
                kkt.set(n + i, j, v);
            }
        }
    }
    for i in 0..m {
        for j in 0..n {
            let v = eq.g.get(i, j);
            if v != 0.0 {
                kkt.set(j, n + p + i, v);
                kkt.set(n + p + i, j, v);
            }
        }
    }
    // −W² block: orthant diagonal, then dense q×q per second-order cone
    for i in 0..dims.nonneg {
        let d = sc.orth[i];
        kkt.set(n + p + i, n + p + i, -d * d - delta);
    }
    let mut off = dims.nonneg;
    for (k, &q) in dims.soc.iter().enumerate() {
        let s = &sc.socs[k];
        // columns of W² restricted to the block
        let mut unit = vec![0.0; q];
        for j in 0..q {
            for u in unit.iter_mut() {
                *u = 0.0;
            }
            unit[j] = 1.0;
            let w1 = soc_apply(s.beta, &s.v, &unit);
            let w2 = soc_apply(s.beta, &s.v, &w1);
            for i in 0..q {
                let mut v = -w2[i];
                if i == j {
                    v -= delta;
                }
                kkt.set(n + p + off + i, n + p + off + j, v);
            }
        }
        off += q;
    }
}

fn soc_apply(beta: f64, v: &[f64], x: &[f64]) -> Vec<f64> {
    let vtx: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let mut y = vec![0.0; x.len()];
    y[0] = beta * (2.0 * v[0] * vtx - x[0]);
    for i in 1..x.len() {
        y[i] = beta * (2.0 * v[i] * vtx + x[i]);
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn factor_with_ladder(
    kkt: &mut Mat,
    eq: &Equilibration,
    sc: &Scaling,
    dims: &ConeDims,
    n: usize,
    p: usize,
    m: usize,
) -> Option<Lu> {
    if let Ok(lu) = Lu::factor(kkt) {
        return Some(lu);
    }
    for delta in [1e-10, 1e-8, 1e-6] {
        assemble_kkt(kkt, eq, sc, dims, n, p, m, delta);
        if let Ok(lu) = Lu::factor(kkt) {
            return Some(lu);
        }
    }
    None
}
