//! Robust counterpart and worst-case demand programs built from one
//! linearization plus an uncertainty model, and the successive-averages loop
//! that alternates simulation, RC solve, share averaging, and WD solve.

use detour_conic::{ConicProgram, ConicSolution, LinExpr, Sense, SolveOptions, SolveStatus};

use crate::error::{Error, Result};
use crate::gradient::{expected_linearization, linearize, LinearizationResult};
use crate::model::{
    flows_from_shares, DemandMatrix, Incident, PathShares, RecommendationIndex, Scenario, Seconds,
};
use crate::simulator::{apply_incident, materialize_passengers, run_prepared, SimConfig};
use crate::uncertainty::UncertaintyModel;

/// The |F| × |H×K| sensitivity matrix: A[(h,k,r), (h',k')] = β_{hkr} when
/// (h,k) = (h',k'), zero elsewhere. Stored as one entry per F row.
#[derive(Clone, Debug)]
pub struct MatrixA {
    pub n_rows: usize,
    pub n_cols: usize,
    /// (row in F, cell column, β value)
    pub entries: Vec<(usize, usize, f64)>,
}

impl MatrixA {
    /// (A·d)_f = β_f · d_{cell(f)}
    pub fn apply_cells(&self, cells: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for &(f, c, b) in &self.entries {
            out[f] = b * cells[c];
        }
        out
    }

    /// (Aᵀ·v)_c = Σ_{f in cell c} β_f · v_f
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cols];
        for &(f, c, b) in &self.entries {
            out[c] += b * v[f];
        }
        out
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_rows * self.n_cols];
        for &(f, c, b) in &self.entries {
            m[f * self.n_cols + c] = b;
        }
        m
    }
}

pub fn build_matrix_a(lin: &LinearizationResult, index: &RecommendationIndex) -> MatrixA {
    let entries = index
        .triples
        .iter()
        .enumerate()
        .map(|(f, &(h, k, _r))| (f, index.cell(h, k), lin.beta[f]))
        .collect();
    MatrixA {
        n_rows: index.f_len(),
        n_cols: index.n_cells(),
        entries,
    }
}

/// Column layout of the RC decision vector.
#[derive(Clone, Debug)]
pub struct RcLayout {
    pub n_f: usize,
    pub n_cells: usize,
    pub n_times: usize,
    pub p: usize,
    pub y: [usize; 6],
    pub u1: usize,
    pub u2: usize,
    pub v1: usize,
    pub v2: usize,
    pub u3: usize,
    /// epigraph variable for ρ‖y₁‖₂; absent when ρ = 0
    pub t_soc: Option<usize>,
    pub n_vars: usize,
}

impl RcLayout {
    fn new(index: &RecommendationIndex, rho: f64) -> RcLayout {
        let n_f = index.f_len();
        let n = index.n_cells();
        let t = index.n_times();
        let p = 0;
        let y = [
            n_f,
            n_f + n,
            n_f + 2 * n,
            n_f + 3 * n,
            n_f + 4 * n,
            n_f + 5 * n,
        ];
        let u1 = n_f + 6 * n;
        let u2 = u1 + n;
        let v1 = u2 + n;
        let v2 = v1 + t;
        let u3 = v2 + t;
        let (t_soc, n_vars) = if rho > 0.0 {
            (Some(u3 + 1), u3 + 2)
        } else {
            (None, u3 + 1)
        };
        RcLayout {
            n_f,
            n_cells: n,
            n_times: t,
            p,
            y,
            u1,
            u2,
            v1,
            v2,
            u3,
            t_soc,
            n_vars,
        }
    }
}

/// Build RC(f̃): minimize the dualized worst-case linearized system travel
/// time over shares on the simplex. The bilinear demand·share term is
/// evaluated at the nominal demand; uncertainty enters through the support
/// function terms ρ‖y₁‖₂ and the bound-weighted duals u, v.
pub fn build_rc(
    lin: &LinearizationResult,
    model: &UncertaintyModel,
    index: &RecommendationIndex,
) -> Result<(ConicProgram, RcLayout)> {
    let n = index.n_cells();
    let t = index.n_times();
    if model.dim() != n || model.n_times != t {
        return Err(Error::InvalidUncertainty(
            "uncertainty model does not match the index".into(),
        ));
    }
    let layout = RcLayout::new(index, model.rho);
    let mut prog = ConicProgram::new(layout.n_vars, Sense::Minimize);

    // objective: Σ β d̄ p − βᵀf̃ + Z̃ + ρ t + (dᵁ−d̄)ᵀu₁ + (d̄−dᴸ)ᵀu₂
    //            + (dᴴᵁ−Sd̄)ᵀv₁ + (Sd̄−dᴴᴸ)ᵀv₂ + (Γ−1)(1ᵀd̄)u₃
    for (f, &(h, k, _r)) in index.triples.iter().enumerate() {
        let cell = index.cell(h, k);
        prog.set_objective_term(layout.p + f, lin.beta[f] * model.d_bar[cell]);
    }
    let beta_dot_ref: f64 = lin
        .beta
        .iter()
        .zip(lin.reference_flows.as_slice())
        .map(|(b, f)| b * f)
        .sum();
    prog.add_objective_constant(lin.z_tilde - beta_dot_ref);
    if let Some(t_col) = layout.t_soc {
        prog.set_objective_term(t_col, model.rho);
    }
    let s_bar = model.interval_sums(&model.d_bar);
    for c in 0..n {
        prog.set_objective_term(layout.u1 + c, model.d_upper[c] - model.d_bar[c]);
        prog.set_objective_term(layout.u2 + c, model.d_bar[c] - model.d_lower[c]);
    }
    for h in 0..t {
        prog.set_objective_term(layout.v1 + h, model.interval_upper[h] - s_bar[h]);
        prog.set_objective_term(layout.v2 + h, s_bar[h] - model.interval_lower[h]);
    }
    let total_bar: f64 = model.d_bar.iter().sum();
    prog.set_objective_term(layout.u3, (model.gamma - 1.0) * total_bar);

    // Dᵀu₁ = y₂, −Dᵀu₂ = y₃  (D lower-triangular: column i has rows j ≥ i)
    for i in 0..n {
        let mut row_u1 = vec![(layout.y[1] + i, -1.0)];
        let mut row_u2 = vec![(layout.y[2] + i, -1.0)];
        for j in i..n {
            let d = model.factor_entry(j, i);
            if d != 0.0 {
                row_u1.push((layout.u1 + j, d));
                row_u2.push((layout.u2 + j, -d));
            }
        }
        prog.add_eq(row_u1, 0.0);
        prog.add_eq(row_u2, 0.0);
    }
    // (SD)ᵀv₁ = y₄, −(SD)ᵀv₂ = y₅ where (SD)[h, i] = Σ_{cells c in interval h} D[c, i]
    let n_ods = n / t;
    for i in 0..n {
        let mut row_v1 = vec![(layout.y[3] + i, -1.0)];
        let mut row_v2 = vec![(layout.y[4] + i, -1.0)];
        for h in 0..t {
            let mut sd = 0.0;
            for c in h * n_ods..(h + 1) * n_ods {
                sd += model.factor_entry(c, i);
            }
            if sd != 0.0 {
                row_v1.push((layout.v1 + h, sd));
                row_v2.push((layout.v2 + h, -sd));
            }
        }
        prog.add_eq(row_v1, 0.0);
        prog.add_eq(row_v2, 0.0);
    }
    // (1ᵀD)ᵀu₃ = y₆
    for i in 0..n {
        let mut colsum = 0.0;
        for c in i..n {
            colsum += model.factor_entry(c, i);
        }
        prog.add_eq(vec![(layout.y[5] + i, -1.0), (layout.u3, colsum)], 0.0);
    }
    // Σᵢ yᵢ = (AD)ᵀp: row i couples every y block with the p columns via
    // (AD)ᵀ[i, f] = β_f · D[cell(f), i]
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = layout.y.iter().map(|&y0| (y0 + i, 1.0)).collect();
        for (f, &(h, k, _r)) in index.triples.iter().enumerate() {
            let coef = lin.beta[f] * model.factor_entry(index.cell(h, k), i);
            if coef != 0.0 {
                row.push((layout.p + f, -coef));
            }
        }
        prog.add_eq(row, 0.0);
    }
    // simplex rows and share bounds
    for h in 0..index.n_times() {
        for k in 0..index.n_ods() {
            let row: Vec<(usize, f64)> =
                index.row_range(h, k).map(|f| (layout.p + f, 1.0)).collect();
            prog.add_eq(row, 1.0);
        }
    }
    for f in 0..layout.n_f {
        prog.set_lower(layout.p + f, 0.0);
        prog.set_upper(layout.p + f, 1.0);
    }
    for c in 0..n {
        prog.set_lower(layout.u1 + c, 0.0);
        prog.set_lower(layout.u2 + c, 0.0);
    }
    for h in 0..t {
        prog.set_lower(layout.v1 + h, 0.0);
        prog.set_lower(layout.v2 + h, 0.0);
    }
    prog.set_lower(layout.u3, 0.0);
    if let Some(t_col) = layout.t_soc {
        prog.add_soc(
            LinExpr::var(t_col),
            (0..n).map(|i| LinExpr::var(layout.y[0] + i)).collect(),
        );
    }
    Ok((prog, layout))
}

/// Pull the share block out of an RC solution, clamping solver noise and
/// renormalizing each row exactly onto the simplex.
pub fn extract_shares(
    sol: &ConicSolution,
    layout: &RcLayout,
    index: &RecommendationIndex,
) -> PathShares {
    let mut values = vec![0.0; layout.n_f];
    for (f, v) in values.iter_mut().enumerate() {
        *v = sol.x[layout.p + f].clamp(0.0, 1.0);
    }
    for h in 0..index.n_times() {
        for k in 0..index.n_ods() {
            let range = index.row_range(h, k);
            let sum: f64 = values[range.clone()].iter().sum();
            if sum > 0.0 {
                for f in range {
                    values[f] /= sum;
                }
            } else {
                let n = range.len() as f64;
                for f in range {
                    values[f] = 1.0 / n;
                }
            }
        }
    }
    PathShares::from_raw(values)
}

/// Build WD(p*): maximize (ADz)ᵀp* over the intersection of the ellipsoid
/// and the three polyhedra.
pub fn build_wd(
    p_star: &PathShares,
    lin: &LinearizationResult,
    model: &UncertaintyModel,
    index: &RecommendationIndex,
) -> Result<ConicProgram> {
    let n = index.n_cells();
    if model.dim() != n {
        return Err(Error::InvalidUncertainty(
            "uncertainty model does not match the index".into(),
        ));
    }
    p_star.validate(index)?;
    let a = build_matrix_a(lin, index);
    // objective c_j = Σ_c D[c, j] · (Aᵀp*)_c
    let q = a.transpose_apply(p_star.as_slice());
    let mut prog = ConicProgram::new(n, Sense::Maximize);
    for j in 0..n {
        let mut coef = 0.0;
        for c in j..n {
            coef += model.factor_entry(c, j) * q[c];
        }
        prog.set_objective_term(j, coef);
    }
    // ‖z‖ ≤ ρ
    prog.add_soc(
        LinExpr::constant(model.rho),
        (0..n).map(LinExpr::var).collect(),
    );
    // dᴸ − d̄ ≤ Dz ≤ dᵁ − d̄
    for c in 0..n {
        let row: Vec<(usize, f64)> = (0..=c)
            .filter_map(|j| {
                let d = model.factor_entry(c, j);
                (d != 0.0).then_some((j, d))
            })
            .collect();
        let neg: Vec<(usize, f64)> = row.iter().map(|&(j, v)| (j, -v)).collect();
        prog.add_ineq(row, model.d_upper[c] - model.d_bar[c]);
        prog.add_ineq(neg, model.d_bar[c] - (model.d_lower[c]));
    }
    // per-interval totals
    let s_bar = model.interval_sums(&model.d_bar);
    let n_ods = n / model.n_times;
    for h in 0..model.n_times {
        let mut row = vec![0.0; n];
        for c in h * n_ods..(h + 1) * n_ods {
            for j in 0..=c {
                row[j] += model.factor_entry(c, j);
            }
        }
        let terms: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .collect();
        let neg: Vec<(usize, f64)> = terms.iter().map(|&(j, v)| (j, -v)).collect();
        prog.add_ineq(terms, model.interval_upper[h] - s_bar[h]);
        prog.add_ineq(neg, s_bar[h] - model.interval_lower[h]);
    }
    // total demand cap
    let mut row = vec![0.0; n];
    for c in 0..n {
        for j in 0..=c {
            row[j] += model.factor_entry(c, j);
        }
    }
    let terms: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| (j, *v))
        .collect();
    let total_bar: f64 = model.d_bar.iter().sum();
    prog.add_ineq(terms, (model.gamma - 1.0) * total_bar);
    Ok(prog)
}

#[derive(Clone, Debug)]
pub struct WdSolution {
    pub z: Vec<f64>,
    /// max (ADz)ᵀp*
    pub objective: f64,
    pub demand: DemandMatrix,
    pub clamped: Vec<(usize, usize, f64)>,
}

/// Solve WD(p*); ρ = 0 short-circuits to the nominal demand.
pub fn solve_wd(
    p_star: &PathShares,
    lin: &LinearizationResult,
    model: &UncertaintyModel,
    index: &RecommendationIndex,
    options: &SolveOptions,
) -> Result<WdSolution> {
    if model.rho <= 0.0 {
        let realized = model.realize(&vec![0.0; model.dim()], index)?;
        return Ok(WdSolution {
            z: vec![0.0; model.dim()],
            objective: 0.0,
            demand: realized.demand,
            clamped: realized.clamped,
        });
    }
    let prog = build_wd(p_star, lin, model, index)?;
    let sol = prog
        .solve(&options.clone())
        .map_err(|e| Error::Solver(e.to_string()))?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::MaxIters if sol.residuals.max() <= 1e-6 => {}
        other => {
            return Err(Error::Solver(format!(
                "worst-case demand solve ended with {other:?} (residuals {:?})",
                sol.residuals
            )))
        }
    }
    let realized = model.realize(&sol.x, index)?;
    Ok(WdSolution {
        z: sol.x.clone(),
        objective: sol.objective,
        demand: realized.demand,
        clamped: realized.clamped,
    })
}

#[derive(Clone, Debug)]
pub struct MsaConfig {
    /// averaging window of the convergence test
    pub t_cvg: usize,
    /// convergence threshold in passenger-seconds; None = 1% of Z at iteration 0
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub seed: u64,
    /// simulation horizon; None = T_s + (H+2)·τ
    pub horizon_end: Option<Seconds>,
    pub initial_shares: Option<PathShares>,
    pub initial_demand: Option<DemandMatrix>,
    pub solver: SolveOptions,
}

impl Default for MsaConfig {
    fn default() -> Self {
        MsaConfig {
            t_cvg: 5,
            epsilon: None,
            max_iters: 100,
            seed: 0,
            horizon_end: None,
            initial_shares: None,
            initial_demand: None,
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MsaIteration {
    pub t: usize,
    pub z: f64,
    pub rc_objective: Option<f64>,
    pub wd_objective: Option<f64>,
    pub max_share_change: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MsaResult {
    pub shares: PathShares,
    /// iteration whose shares were returned (argmin of Z over the last window)
    pub chosen_iteration: usize,
    pub converged: bool,
    pub epsilon: f64,
    pub trace: Vec<MsaIteration>,
    /// linearization at the last simulated iterate
    pub final_linearization: LinearizationResult,
}

pub fn uniform_shares_for(index: &RecommendationIndex) -> PathShares {
    crate::benchmarks::uniform_shares(index)
}

/// Algorithm: loop Sim-FOA → RC → 1/(t+1) share averaging → WD until the
/// windowed Z criterion holds, then return the best shares of the last
/// T_cvg + 1 iterations.
pub fn msa_run(
    scenario: &Scenario,
    incidents: &[(Incident, f64)],
    model: &UncertaintyModel,
    index: &RecommendationIndex,
    config: &MsaConfig,
) -> Result<MsaResult> {
    if incidents.is_empty() {
        return Err(Error::InvalidIncident("no incident scenarios".into()));
    }
    let total_p: f64 = incidents.iter().map(|(_, p)| p).sum();
    if (total_p - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidIncident(format!(
            "incident scenario probabilities sum to {total_p}, not 1"
        )));
    }
    let prepared: Vec<_> = incidents
        .iter()
        .map(|(inc, p)| apply_incident(scenario, Some(inc)).map(|prep| (prep, *p)))
        .collect::<Result<Vec<_>>>()?;
    let horizon = config.horizon_end.unwrap_or_else(|| {
        index.t_start + (index.h_count as Seconds + 2) * index.tau
    });
    let sim_config = SimConfig {
        horizon_end: Some(horizon),
    };

    let mut shares = match &config.initial_shares {
        Some(p) => {
            p.validate(index)?;
            p.clone()
        }
        None => uniform_shares_for(index),
    };
    let mut demand = match &config.initial_demand {
        Some(d) => d.clone(),
        None => model.realize(&vec![0.0; model.dim()], index)?.demand,
    };

    let mut trace: Vec<MsaIteration> = Vec::new();
    let mut history: Vec<(f64, PathShares)> = Vec::new();
    let mut epsilon = config.epsilon.unwrap_or(f64::NAN);
    let mut converged = false;
    let mut last_lin: Option<LinearizationResult> = None;

    for t in 0..=config.max_iters {
        // Sim-FOA at (d_t, p_t); incident-duration scenarios run concurrently
        // on the shared immutable inputs
        let flows = flows_from_shares(&demand, &shares, index)?;
        let parts: Vec<(LinearizationResult, f64)> = std::thread::scope(|scope| {
            let handles: Vec<_> = prepared
                .iter()
                .enumerate()
                .map(|(xi, (prep, prob))| {
                    let demand = &demand;
                    let shares = &shares;
                    let flows = &flows;
                    let sim_config = &sim_config;
                    scope.spawn(move || {
                        let seed = config
                            .seed
                            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(xi as u64 + 1));
                        let passengers = materialize_passengers(demand, shares, index, seed)?;
                        let record = run_prepared(prep, scenario, index, &passengers, sim_config)?;
                        Ok((linearize(&record, scenario, index, flows), *prob))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("simulation thread"))
                .collect::<Result<Vec<_>>>()
        })?;
        let lin = expected_linearization(&parts)?;
        let z_t = lin.z_tilde;
        if t == 0 && !epsilon.is_finite() {
            epsilon = 0.01 * z_t;
        }
        history.push((z_t, shares.clone()));
        last_lin = Some(lin);

        // windowed convergence criterion on the Z history
        if history.len() > config.t_cvg {
            let window = &history[history.len() - 1 - config.t_cvg..history.len() - 1];
            let mean: f64 = window.iter().map(|(z, _)| z).sum::<f64>() / config.t_cvg as f64;
            if (z_t - mean).abs() <= epsilon {
                converged = true;
                trace.push(MsaIteration {
                    t,
                    z: z_t,
                    rc_objective: None,
                    wd_objective: None,
                    max_share_change: None,
                });
                break;
            }
        }
        if t == config.max_iters {
            trace.push(MsaIteration {
                t,
                z: z_t,
                rc_objective: None,
                wd_objective: None,
                max_share_change: None,
            });
            break;
        }

        let lin = last_lin.as_ref().unwrap();
        let (prog, layout) = build_rc(lin, model, index)?;
        let sol = prog
            .solve(&config.solver)
            .map_err(|e| Error::Solver(e.to_string()))?;
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::MaxIters if sol.residuals.max() <= 1e-6 => {}
            SolveStatus::Infeasible => {
                return Err(Error::InvalidUncertainty(
                    "robust counterpart infeasible: empty uncertainty intersection".into(),
                ))
            }
            other => {
                return Err(Error::Solver(format!(
                    "RC solve ended with {other:?} (residuals {:?})",
                    sol.residuals
                )))
            }
        }
        let p_hat = extract_shares(&sol, &layout, index);

        // MSA averaging keeps the iterate on the simplex exactly
        let weight = 1.0 / (t as f64 + 1.0);
        let mut next = vec![0.0; index.f_len()];
        let mut max_change = 0.0f64;
        for f in 0..index.f_len() {
            next[f] = weight * p_hat.as_slice()[f] + (1.0 - weight) * shares.as_slice()[f];
            max_change = max_change.max((next[f] - shares.as_slice()[f]).abs());
        }
        let next_shares = PathShares::from_raw(next);

        let wd = solve_wd(&next_shares, lin, model, index, &config.solver)?;
        trace.push(MsaIteration {
            t,
            z: z_t,
            rc_objective: Some(sol.objective),
            wd_objective: Some(wd.objective),
            max_share_change: Some(max_change),
        });
        shares = next_shares;
        demand = wd.demand;
    }

    // best shares over the last T_cvg + 1 iterates
    let window = config.t_cvg + 1;
    let start = history.len().saturating_sub(window);
    let (chosen, _) = history
        .iter()
        .enumerate()
        .skip(start)
        .min_by(|(_, (za, _)), (_, (zb, _))| za.partial_cmp(zb).unwrap())
        .expect("at least one iteration ran");
    Ok(MsaResult {
        shares: history[chosen].1.clone(),
        chosen_iteration: chosen,
        converged,
        epsilon,
        trace,
        final_linearization: last_lin.expect("at least one iteration ran"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradient::GradientTerms;
    use crate::model::PathFlows;
    use crate::testutil::toy_index;
    use crate::uncertainty::fit;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn lin_for(index: &RecommendationIndex, beta: Vec<f64>, z: f64, f_ref: Vec<f64>) -> LinearizationResult {
        let terms = beta
            .iter()
            .map(|b| GradientTerms {
                t_a: *b,
                t_q: 0.0,
                t_o: 0.0,
            })
            .collect();
        LinearizationResult {
            z_tilde: z,
            beta,
            terms,
            reference_flows: PathFlows::from_values(f_ref, index).unwrap(),
        }
    }

    fn one_cell_model(rho: f64) -> UncertaintyModel {
        UncertaintyModel {
            n_times: 1,
            n_ods: 1,
            d_bar: vec![100.0],
            cholesky_row_major: vec![8.0],
            d_lower: vec![85.0],
            d_upper: vec![115.0],
            interval_lower: vec![85.0],
            interval_upper: vec![115.0],
            gamma: 1.2,
            rho,
        }
    }

    #[test]
    fn matrix_a_shape_and_oracle() {
        let index = toy_index(0, &[2]);
        let lin = lin_for(&index, vec![10.0, 20.0], 0.0, vec![0.0, 0.0]);
        let a = build_matrix_a(&lin, &index);
        assert_eq!(a.dense(), vec![10.0, 20.0]); // 2×1 column
        let zero = build_matrix_a(&lin_for(&index, vec![0.0, 0.0], 0.0, vec![0.0, 0.0]), &index);
        assert!(zero.dense().iter().all(|v| *v == 0.0));

        // random small F: (A·d̄)ᵀp equals the direct summation
        let index = toy_index(2, &[2, 3]);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let beta: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(0.0..900.0)).collect();
        let lin = lin_for(&index, beta.clone(), 0.0, vec![0.0; index.f_len()]);
        let a = build_matrix_a(&lin, &index);
        let d_bar: Vec<f64> = (0..index.n_cells()).map(|_| rng.random_range(5.0..50.0)).collect();
        let p: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let ad = a.apply_cells(&d_bar);
        let lhs: f64 = ad.iter().zip(p.iter()).map(|(x, y)| x * y).sum();
        let mut rhs = 0.0;
        for (f, &(h, k, _r)) in index.triples.iter().enumerate() {
            rhs += beta[f] * d_bar[index.cell(h, k)] * p[f];
        }
        assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
    }

    #[test]
    fn rc_with_uncertainty_off_reduces_to_nominal_lp() {
        let index = toy_index(1, &[2, 2]);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let beta: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(100.0..900.0)).collect();
        let f_ref: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(0.0..30.0)).collect();
        let z_tilde = 50_000.0;
        let lin = lin_for(&index, beta.clone(), z_tilde, f_ref.clone());

        let d_bar: Vec<f64> = (0..index.n_cells()).map(|_| rng.random_range(10.0..60.0)).collect();
        let dim = index.n_cells();
        let model = UncertaintyModel {
            n_times: index.n_times(),
            n_ods: index.n_ods(),
            d_bar: d_bar.clone(),
            cholesky_row_major: {
                let mut d = vec![0.0; dim * dim];
                for i in 0..dim {
                    d[i * dim + i] = 1e-3;
                }
                d
            },
            d_lower: d_bar.iter().map(|v| v - 1.0).collect(),
            d_upper: d_bar.iter().map(|v| v + 1.0).collect(),
            interval_lower: (0..index.n_times())
                .map(|h| d_bar[h * 2..(h + 1) * 2].iter().sum::<f64>() - 1.0)
                .collect(),
            interval_upper: (0..index.n_times())
                .map(|h| d_bar[h * 2..(h + 1) * 2].iter().sum::<f64>() + 1.0)
                .collect(),
            gamma: 1e6,
            rho: 0.0,
        };
        let (prog, _layout) = build_rc(&lin, &model, &index).unwrap();
        let sol = prog.solve(&Default::default()).unwrap();

        // nominal LP optimum: put all mass on each cell's cheapest path
        let mut expect = z_tilde;
        for (f, b) in beta.iter().zip(f_ref.iter()) {
            expect -= f * b;
        }
        for h in 0..index.n_times() {
            for k in 0..index.n_ods() {
                let best = index
                    .row_range(h, k)
                    .map(|f| beta[f])
                    .fold(f64::INFINITY, f64::min);
                expect += best * d_bar[index.cell(h, k)];
            }
        }
        assert!(
            (sol.objective - expect).abs() <= 1e-6 * expect.abs().max(1.0),
            "rc {} vs nominal lp {}",
            sol.objective,
            expect
        );
    }

    #[test]
    fn rc_matches_min_max_grid_on_one_cell_toy() {
        let index = toy_index(0, &[2]);
        let beta = vec![300.0, 500.0];
        let f_ref = vec![50.0, 50.0];
        let z_tilde = 40_000.0;
        let lin = lin_for(&index, beta.clone(), z_tilde, f_ref.clone());
        let model = one_cell_model(0.84);

        let (prog, _) = build_rc(&lin, &model, &index).unwrap();
        let sol = prog.solve(&Default::default()).unwrap();

        // grid over p and the scalar perturbation
        let d = model.cholesky_row_major[0];
        let zmax = model
            .rho
            .min((model.d_upper[0] - model.d_bar[0]) / d)
            .min((model.gamma - 1.0) * model.d_bar[0] / d);
        let zmin = (-model.rho).max((model.d_lower[0] - model.d_bar[0]) / d);
        let steps = 2000;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            let p1 = i as f64 / steps as f64;
            let q = beta[0] * p1 + beta[1] * (1.0 - p1);
            // inner max is linear in z: optimum at an endpoint
            let inner = (q * d * zmin).max(q * d * zmax);
            let value =
                q * model.d_bar[0] + inner + z_tilde - beta[0] * f_ref[0] - beta[1] * f_ref[1];
            best = best.min(value);
        }
        assert!(
            (sol.objective - best).abs() <= 1e-3 * best.abs().max(1.0),
            "rc {} vs grid {}",
            sol.objective,
            best
        );
        // with uncertainty, the worst case can only be at least the nominal
        let nominal = beta[0].min(beta[1]) * model.d_bar[0] + z_tilde
            - beta[0] * f_ref[0]
            - beta[1] * f_ref[1];
        assert!(sol.objective >= nominal - 1e-6 * nominal.abs());
    }

    #[test]
    fn wd_degenerate_and_scaling_invariance() {
        let index = toy_index(0, &[2]);
        let lin = lin_for(&index, vec![300.0, 500.0], 0.0, vec![0.0, 0.0]);
        let shares = PathShares::new(vec![0.7, 0.3], &index).unwrap();

        let zero = one_cell_model(0.0);
        let wd0 = solve_wd(&shares, &lin, &zero, &index, &Default::default()).unwrap();
        assert_eq!(wd0.z, vec![0.0]);
        assert_eq!(wd0.demand.as_slice(), &[100.0]);

        let model = one_cell_model(0.84);
        let wd1 = solve_wd(&shares, &lin, &model, &index, &Default::default()).unwrap();
        let doubled = lin_for(&index, vec![600.0, 1000.0], 0.0, vec![0.0, 0.0]);
        let wd2 = solve_wd(&shares, &doubled, &model, &index, &Default::default()).unwrap();
        assert!((wd1.z[0] - wd2.z[0]).abs() < 1e-5);
        assert!((wd2.objective - 2.0 * wd1.objective).abs() < 1e-5 * wd1.objective.abs().max(1.0));
        // plugging z* back into the linearized objective reproduces the value
        let a = build_matrix_a(&lin, &index);
        let adz = a.apply_cells(&model.apply_factor(&wd1.z));
        let direct: f64 = adz.iter().zip(shares.as_slice()).map(|(x, y)| x * y).sum();
        assert!((direct - wd1.objective).abs() <= 1e-6 * wd1.objective.abs().max(1.0));
    }

    #[test]
    fn wd_dominates_sampled_feasible_points() {
        let index = toy_index(1, &[2]);
        let dim = index.n_cells();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let samples: Vec<crate::model::DemandMatrix> = (0..10)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(30.0..80.0)).collect();
                crate::model::DemandMatrix::new(v, &index).unwrap()
            })
            .collect();
        let model = fit(&samples, 0.84, 1.1, &index).unwrap();
        let beta: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(100.0..900.0)).collect();
        let lin = lin_for(&index, beta, 0.0, vec![0.0; index.f_len()]);
        for _ in 0..5 {
            let raw: Vec<f64> = (0..index.f_len()).map(|_| rng.random_range(0.01..1.0)).collect();
            let mut values = raw;
            for h in 0..index.n_times() {
                for k in 0..index.n_ods() {
                    let range = index.row_range(h, k);
                    let s: f64 = values[range.clone()].iter().sum();
                    for f in range {
                        values[f] /= s;
                    }
                }
            }
            let shares = PathShares::new(values, &index).unwrap();
            let wd = solve_wd(&shares, &lin, &model, &index, &Default::default()).unwrap();
            let a = build_matrix_a(&lin, &index);
            for _ in 0..2000 {
                let mut z: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in z.iter_mut() {
                    *v *= model.rho / norm.max(1e-9) * rng.random_range(0.0..1.0f64).sqrt();
                }
                if !model.membership(&z).in_all() {
                    continue;
                }
                let adz = a.apply_cells(&model.apply_factor(&z));
                let val: f64 = adz.iter().zip(shares.as_slice()).map(|(x, y)| x * y).sum();
                assert!(
                    val <= wd.objective + 1e-6 * wd.objective.abs().max(1.0),
                    "sampled {val} beats wd {}",
                    wd.objective
                );
            }
        }
    }

    #[test]
    fn msa_concentrates_on_dominant_path() {
        // fast uncongested line against a slow one: everything should move to
        // the fast path almost immediately
        let (scenario, incident, index, _demand) = crate::synth::random_small_scenario(1).unwrap();
        let _ = incident; // run without disruption: fast stays dominant
        let mut demand = crate::model::DemandMatrix::zeros(&index);
        for h in 0..index.n_times() {
            for k in 0..index.n_ods() {
                demand.set(&index, h, k, 8.0);
            }
        }
        let samples: Vec<crate::model::DemandMatrix> = (0..4)
            .map(|i| {
                let v: Vec<f64> = demand
                    .as_slice()
                    .iter()
                    .map(|x| x * (0.9 + 0.05 * i as f64))
                    .collect();
                crate::model::DemandMatrix::new(v, &index).unwrap()
            })
            .collect();
        let mut model = fit(&samples, 0.0, 1.1, &index).unwrap();
        model.rho = 0.0;
        let no_incident = crate::model::Incident {
            start: index.t_start,
            end: index.t_start + 600,
            supply_changes: vec![],
        };
        let config = MsaConfig {
            max_iters: 10,
            t_cvg: 3,
            seed: 5,
            ..Default::default()
        };
        let result = msa_run(&scenario, &[(no_incident, 1.0)], &model, &index, &config).unwrap();
        // the fast direct path is r = 0 for every od in the fuzz scenario
        for h in 0..index.n_times() {
            for k in 0..index.n_ods() {
                let p_fast = result.shares.get(&index, h, k, 0);
                assert!(
                    p_fast >= 0.95,
                    "h={h} k={k}: fast share {p_fast}, trace: {:?}",
                    result
                        .trace
                        .iter()
                        .map(|it| it.z)
                        .collect::<Vec<_>>()
                );
            }
        }
        // nominal loop should not worsen the objective beyond noise
        let first = result.trace.first().unwrap().z;
        let last = result.trace.last().unwrap().z;
        assert!(last <= first * 1.02, "Z went from {first} to {last}");
    }
}
