//! Imaginary- and real-time evolution of anyonic MPS by Suzuki-Trotter
//! even/odd two-site gates.
//!
//! The two-site update follows the published contraction sequence: absorb the
//! neighbouring Schmidt weights, fuse the two physical legs with a fusion
//! tensor (the F-move and loop factors enter here), apply the gate block by
//! block, recouple back to the bond basis with the inverse F-move, close the
//! right pair with an arrow reversal and a loop removal, run the weighted
//! blockwise SVD, split off the fusion maps, and restore the canonical form
//! with pseudo-inverses of the outer weights. All quantum-dimension factors
//! below are those of the explicit (isotopy) normalization scheme.

use crate::ham::TwoSiteOperator;
use crate::linalg::{self, CMat};
use crate::model::{AnyonModel, Charge};
use crate::mps::{temporal_deviation, AnyonicMps, Gamma, Lambda, MpsError};
use crate::tensor::{fuse_index, ChargeIndex, FusionMap, TruncationPolicy};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum TebdError {
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Ham(#[from] crate::ham::HamError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("gate block {0} is not Hermitian (residual {1:.3e})")]
    NotHermitian(String, f64),
    #[error("truncation removed every Schmidt value on bond {0}")]
    EmptyBond(usize),
    #[error("two-site updates need a unit cell of at least 2 sites")]
    CellTooSmall,
}

pub type Result<T> = std::result::Result<T, TebdError>;

/// One stage of an imaginary-time schedule.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Stage {
    pub dt: f64,
    pub max_sweeps: usize,
    pub xi_tol: f64,
}

/// Strictly decreasing sequence of time steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrotterSchedule {
    pub stages: Vec<Stage>,
}

impl TrotterSchedule {
    pub fn new(stages: Vec<Stage>) -> Self {
        for w in stages.windows(2) {
            assert!(w[1].dt < w[0].dt, "stage time steps must decrease");
        }
        TrotterSchedule { stages }
    }

    /// Geometric refinement dt = 0.1 ... 1e-4, each stage until xi < 1e-7 or
    /// 5000 sweeps.
    pub fn default_ground_state() -> Self {
        TrotterSchedule::new(
            [0.1, 0.01, 0.001, 1e-4]
                .into_iter()
                .map(|dt| Stage { dt, max_sweeps: 5000, xi_tol: 1e-7 })
                .collect(),
        )
    }

    pub fn quick(dt: f64, max_sweeps: usize, xi_tol: f64) -> Self {
        TrotterSchedule::new(vec![Stage { dt, max_sweeps, xi_tol }])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvolutionMode {
    Imaginary,
    Real,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// A two-site gate: the exponential of a two-site operator, block-diagonal in
/// the pair's total charge exactly like the operator itself.
#[derive(Clone, Debug)]
pub struct Gate {
    pub model: Arc<AnyonModel>,
    pub left: ChargeIndex,
    pub right: ChargeIndex,
    pub map: FusionMap,
    pub blocks: BTreeMap<Charge, CMat>,
    pub parity: Parity,
}

/// Exponentiate a Hermitian two-site operator: e^{-dt h} per charge block
/// (imaginary mode, positive-definite blocks) or e^{-i dt h} (real mode,
/// unitary blocks).
pub fn exponentiate_gate(
    h: &TwoSiteOperator,
    dt: f64,
    mode: EvolutionMode,
    parity: Parity,
) -> Result<Gate> {
    let mut blocks = BTreeMap::new();
    for (&c, b) in &h.blocks {
        let mut herm = 0.0f64;
        for i in 0..b.rows {
            for j in 0..b.cols {
                herm = herm.max((b.at(i, j) - b.at(j, i).conj()).norm());
            }
        }
        if herm > 1e-10 {
            return Err(TebdError::NotHermitian(h.model.label(c).to_string(), herm));
        }
        let (vals, vecs) = linalg::eigh(b);
        let n = b.rows;
        let mut exp = CMat::zeros(n, n);
        for (k, &e) in vals.iter().enumerate() {
            let w = match mode {
                EvolutionMode::Imaginary => C64::new((-dt * e).exp(), 0.0),
                EvolutionMode::Real => C64::from_polar(1.0, -dt * e),
            };
            for i in 0..n {
                for j in 0..n {
                    exp[(i, j)] += vecs.at(i, k) * w * vecs.at(j, k).conj();
                }
            }
        }
        blocks.insert(c, exp);
    }
    Ok(Gate {
        model: h.model.clone(),
        left: h.left.clone(),
        right: h.right.clone(),
        map: h.map.clone(),
        blocks,
        parity,
    })
}

/// Pair-fused amplitudes of the two-site window around a bond: for every
/// (pair charge f, left bond charge u, right bond charge w) an array over
/// (nu_u, pair slots of f, nu_w). These are the state's coefficients after
/// the physical legs are fused; the gate acts on the middle axis.
pub(crate) struct WindowAmplitudes {
    pub map: FusionMap,
    /// key (f, u, w) -> (shape [nu_u, D_f, nu_w], data)
    pub blocks: BTreeMap<(Charge, Charge, Charge), ([usize; 3], Vec<C64>)>,
}

pub(crate) fn window_amplitudes(mps: &AnyonicMps, bond: usize) -> Result<WindowAmplitudes> {
    let model = &mps.model;
    let (s1, s2) = mps.bond_sites(bond);
    let g1 = mps.gamma(s1);
    let g2 = mps.gamma(s2);
    let ll = mps.lambda_left(s1).clone();
    let lc = mps.bond_lambda(bond).clone();
    let lr = mps.lambda_right(s2).clone();
    let (_, pair_map) = fuse_index(model, &g1.phys, &g2.phys)?;

    let mut blocks: BTreeMap<(Charge, Charge, Charge), ([usize; 3], Vec<C64>)> = BTreeMap::new();
    for (k1, b1) in &g1.blocks {
        let (u, s, m) = (k1[0], k1[1], k1[2]);
        let lvals = ll.values(u);
        let cvals = lc.values(m);
        if lvals.is_empty() || cvals.is_empty() {
            continue;
        }
        let (nu, ns, nm) = (b1.shape[0], b1.shape[1], b1.shape[2]);
        // theta1 = lambda_left * Gamma1 * lambda_center, flattened (u s, m)
        let mut th1 = vec![C64::new(0.0, 0.0); nu * ns * nm];
        for iu in 0..nu {
            for is in 0..ns {
                for im in 0..nm {
                    th1[(iu * ns + is) * nm + im] =
                        b1.at(iu, is, im) * lvals[iu] * cvals[im];
                }
            }
        }
        for (k2, b2) in &g2.blocks {
            if k2[0] != m {
                continue;
            }
            let (t, w) = (k2[1], k2[2]);
            let rvals = lr.values(w);
            if rvals.is_empty() {
                continue;
            }
            let (nt, nw) = (b2.shape[1], b2.shape[2]);
            let mut th2 = vec![C64::new(0.0, 0.0); nm * nt * nw];
            for im in 0..nm {
                for it in 0..nt {
                    for iw in 0..nw {
                        th2[(im * nt + it) * nw + iw] = b2.at(im, it, iw) * rvals[iw];
                    }
                }
            }
            // theta12[(u s), (t w)] = sum_m theta1 theta2
            let mut th12 = vec![C64::new(0.0, 0.0); nu * ns * nt * nw];
            linalg::zgemm_acc(nu * ns, nm, nt * nw, C64::new(1.0, 0.0), &th1, &th2, &mut th12);
            // scatter into pair sectors f with the fusion weight
            for &f in model.fuse(s, t)? {
                let fsym = model.f_symbol(u, s, t, w, m, f);
                if fsym == C64::new(0.0, 0.0) {
                    continue;
                }
                let ds = model.qdim(s);
                let dt_ = model.qdim(t);
                let df = model.qdim(f);
                let fac = fsym * (ds * dt_ / df).powf(0.25);
                let dfdim = pair_map.target.deg(f);
                let base = pair_map.block_start(s, t, f).unwrap();
                let entry = blocks
                    .entry((f, u, w))
                    .or_insert_with(|| ([nu, dfdim, nw], vec![C64::new(0.0, 0.0); nu * dfdim * nw]));
                for iu in 0..nu {
                    for is in 0..ns {
                        for it in 0..nt {
                            let slot = base + is * nt + it;
                            for iw in 0..nw {
                                entry.1[(iu * dfdim + slot) * nw + iw] +=
                                    fac * th12[((iu * ns + is) * nt + it) * nw + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(WindowAmplitudes { map: pair_map, blocks })
}

/// Apply a gate to the middle (pair) axis of window amplitudes in place.
pub(crate) fn apply_gate_to_window(win: &mut WindowAmplitudes, gate: &Gate) {
    for ((f, _, _), (shape, data)) in win.blocks.iter_mut() {
        let Some(g) = gate.blocks.get(f) else { continue };
        let (nu, df, nw) = (shape[0], shape[1], shape[2]);
        // new[iu, s', iw] = sum_s g[s', s] old[iu, s, iw]
        let mut out = vec![C64::new(0.0, 0.0); nu * df * nw];
        for iu in 0..nu {
            for sp in 0..df {
                for s in 0..df {
                    let gv = g.at(sp, s);
                    if gv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let src = (iu * df + s) * nw;
                    let dst = (iu * df + sp) * nw;
                    for iw in 0..nw {
                        out[dst + iw] += gv * data[src + iw];
                    }
                }
            }
        }
        *data = out;
    }
}

pub struct UpdateReport {
    /// sum of d_a lambda^2 over discarded values, relative to the total.
    pub discarded_weight: f64,
    pub bond_dim: usize,
}

/// The anyonic two-site update on one bond.
pub fn two_site_update(
    mps: &mut AnyonicMps,
    bond: usize,
    gate: Option<&Gate>,
    policy: &TruncationPolicy,
) -> Result<UpdateReport> {
    if mps.is_infinite() && mps.len() < 2 {
        return Err(TebdError::CellTooSmall);
    }
    let model = mps.model.clone();
    let (s1, s2) = mps.bond_sites(bond);
    let p1 = mps.gamma(s1).phys.clone();
    let p2 = mps.gamma(s2).phys.clone();
    let ll = mps.lambda_left(s1).clone();
    let lr = mps.lambda_right(s2).clone();

    let mut win = window_amplitudes(mps, bond)?;
    if let Some(g) = gate {
        apply_gate_to_window(&mut win, g);
    }

    // Recouple to the new-bond basis: rows fuse (left bond, site 1), columns
    // fuse (conjugated site 2, right bond) after the arrow reversal.
    let left_ix = ll.index();
    let right_ix = lr.index();
    let (_, row_map) = fuse_index(&model, &left_ix, &p1)?;
    let p2_conj = p2.conjugate(&model);
    let (_, col_map) = fuse_index(&model, &p2_conj, &right_ix)?;

    // T[m'] over (row, col), one matrix per new bond charge.
    let mut tmats: BTreeMap<Charge, CMat> = BTreeMap::new();
    let row_dim = |m: Charge| row_map.target.deg(m);
    let col_dim = |m: Charge| col_map.target.deg(m);
    for ((f, u, w), (shape, data)) in &win.blocks {
        let (nu, dfdim, nw) = (shape[0], shape[1], shape[2]);
        let df = model.qdim(*f);
        let du = model.qdim(*u);
        let dw = model.qdim(*w);
        for (sp, tp, _) in win.map.pairs_into(*f) {
            let base = win.map.block_start(sp, tp, *f).unwrap();
            let (nsp, ntp) = (p1.deg(sp), p2.deg(tp));
            for &mprime in model.fuse(*u, sp)? {
                if !model.is_fusion_vertex(mprime, tp, *w)? {
                    continue;
                }
                let fsym = model.f_symbol(*u, sp, tp, *w, mprime, *f).conj();
                if fsym == C64::new(0.0, 0.0) {
                    continue;
                }
                let dm = model.qdim(mprime);
                let fac = fsym * (du * df * dw).powf(0.25) / dm.sqrt();
                let rbase = row_map.block_start(*u, sp, mprime).unwrap();
                let cbase = col_map.block_start(model.dual(tp), *w, mprime).unwrap();
                let (rd, cd) = (row_dim(mprime), col_dim(mprime));
                let t = tmats.entry(mprime).or_insert_with(|| CMat::zeros(rd, cd));
                for iu in 0..nu {
                    for isp in 0..nsp {
                        let row = rbase + iu * nsp + isp;
                        for itp in 0..ntp {
                            let slot = base + isp * ntp + itp;
                            for iw in 0..nw {
                                let col = cbase + itp * nw + iw;
                                t[(row, col)] += fac * data[(iu * dfdim + slot) * nw + iw];
                            }
                        }
                    }
                }
            }
        }
    }

    // Weighted blockwise SVD with global ranking by sqrt(d) * s.
    struct Sec {
        charge: Charge,
        svd: linalg::Svd,
    }
    let mut secs: Vec<Sec> = Vec::new();
    for (&c, t) in &tmats {
        secs.push(Sec { charge: c, svd: linalg::svd(t) });
    }
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    let mut total_weight = 0.0f64;
    for (si, sec) in secs.iter().enumerate() {
        let d = model.qdim(sec.charge);
        for (vi, &s) in sec.svd.s.iter().enumerate() {
            ranked.push((d.sqrt() * s, si, vi));
            total_weight += d * s * s;
        }
    }
    ranked.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(secs[x.1].charge.cmp(&secs[y.1].charge))
            .then(x.2.cmp(&y.2))
    });
    let mut keep: BTreeMap<Charge, usize> = BTreeMap::new();
    let mut kept_total = 0usize;
    let mut kept_weight = 0.0f64;
    for &(wgt, si, vi) in &ranked {
        let c = secs[si].charge;
        let s = secs[si].svd.s[vi];
        if kept_total < policy.chi_max && wgt > policy.precision && s > 0.0 {
            *keep.entry(c).or_insert(0) += 1;
            kept_total += 1;
            kept_weight += model.qdim(c) * s * s;
        }
    }
    if kept_total == 0 {
        return Err(TebdError::EmptyBond(bond));
    }
    let discarded = (total_weight - kept_weight).max(0.0) / total_weight;

    // New center weights, normalized to sum d lambda^2 = 1.
    let mut lam_new = Lambda { sectors: BTreeMap::new() };
    for sec in &secs {
        let Some(&k) = keep.get(&sec.charge) else { continue };
        lam_new.sectors.insert(sec.charge, sec.svd.s[..k].to_vec());
    }
    let nrm = lam_new.weighted_norm_sq(&model).sqrt();
    lam_new.rescale(nrm.recip());
    let kept_ix = lam_new.index();

    // Pseudo-inverses of the outer weights (zero below threshold).
    let pinv = |lam: &Lambda, c: Charge, i: usize| -> f64 {
        let vals = lam.values(c);
        let wmax = lam
            .sectors
            .iter()
            .flat_map(|(&q, v)| {
                let d = model.qdim(q).sqrt();
                v.iter().map(move |&x| d * x)
            })
            .fold(0.0f64, f64::max);
        let thresh = 1e-12f64.max(1e-12 * wmax);
        let x = vals[i];
        if model.qdim(c).sqrt() * x > thresh {
            x.recip()
        } else {
            0.0
        }
    };

    // Rebuild the site tensors from the isometries: split the row fusion map
    // off U and the column map off V, scaling by the fusion-tensor vertex
    // factors, then divide out the untouched outer weights.
    let mut g1_new = Gamma::zeros(&model, &left_ix, &p1, &kept_ix)?;
    g1_new.blocks.retain(|k, _| {
        keep.contains_key(&k[2]) && {
            let t = tmats.contains_key(&k[2]);
            t
        }
    });
    for (key, blockb) in g1_new.blocks.iter_mut() {
        let (u, sp, mprime) = (key[0], key[1], key[2]);
        let si = secs.iter().position(|s| s.charge == mprime).unwrap();
        let k = keep[&mprime];
        let rbase = row_map.block_start(u, sp, mprime).unwrap();
        let (nu, nsp) = (left_ix.deg(u), p1.deg(sp));
        let fac = (model.qdim(mprime) / (model.qdim(u) * model.qdim(sp))).powf(0.25);
        for iu in 0..nu {
            let li = pinv(&ll, u, iu);
            for isp in 0..nsp {
                let row = rbase + iu * nsp + isp;
                for mu in 0..k {
                    *blockb.at_mut(iu, isp, mu) =
                        secs[si].svd.u.at(row, mu) * fac * li;
                }
            }
        }
    }
    let mut g2_new = Gamma::zeros(&model, &kept_ix, &p2, &right_ix)?;
    g2_new.blocks.retain(|k, _| keep.contains_key(&k[0]));
    for (key, blockb) in g2_new.blocks.iter_mut() {
        let (mprime, tp, w) = (key[0], key[1], key[2]);
        let si = secs.iter().position(|s| s.charge == mprime).unwrap();
        let k = keep[&mprime];
        let cbase = col_map.block_start(model.dual(tp), w, mprime).unwrap();
        let (ntp, nw) = (p2.deg(tp), right_ix.deg(w));
        let fac = (model.qdim(mprime) / (model.qdim(tp) * model.qdim(w))).powf(0.25);
        for mu in 0..k {
            for itp in 0..ntp {
                for iw in 0..nw {
                    let col = cbase + itp * nw + iw;
                    *blockb.at_mut(mu, itp, iw) =
                        secs[si].svd.vt.at(mu, col) * fac * pinv(&lr, w, iw);
                }
            }
        }
    }

    // Install.
    let n = mps.len();
    mps.gammas[s1 % n] = g1_new;
    mps.gammas[s2 % n] = g2_new;
    match mps.boundary {
        crate::mps::Boundary::Finite { .. } => mps.lambdas[bond + 1] = lam_new,
        crate::mps::Boundary::Infinite => mps.lambdas[bond] = lam_new,
    }
    Ok(UpdateReport { discarded_weight: discarded, bond_dim: kept_total })
}

/// Convergence data for one sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub step: usize,
    pub dt: f64,
    pub xi: f64,
    pub energy: f64,
    pub max_bond_dim: usize,
    pub truncation: f64,
}

/// Machine-parseable progress line.
pub fn format_progress(r: &ConvergenceReport) -> String {
    format!(
        "step={} dt={:.6e} xi={:.6e} energy={:.12e} max_chi={} truncation={:.3e}",
        r.step, r.dt, r.xi, r.energy, r.max_bond_dim, r.truncation
    )
}

pub struct GroundStateOutcome {
    pub mps: AnyonicMps,
    pub history: Vec<ConvergenceReport>,
    pub converged: bool,
}

fn sweep_once(
    mps: &mut AnyonicMps,
    gate: &Gate,
    policy: &TruncationPolicy,
) -> Result<f64> {
    let bonds = mps.update_bonds();
    let mut worst = 0.0f64;
    // even layer, then odd layer; fixed order within each
    for parity in [0usize, 1] {
        let mut b = parity;
        while b < bonds {
            let r = two_site_update(mps, b, Some(gate), policy)?;
            worst = worst.max(r.discarded_weight);
            b += 2;
        }
    }
    Ok(worst)
}

/// Imaginary-time projection onto the ground state with a staged schedule.
/// After each sweep the temporal deviation xi is measured across all bonds;
/// a stage ends when xi < xi_tol or its sweep budget runs out.
pub fn ground_state(
    mps0: &AnyonicMps,
    hamiltonian: &TwoSiteOperator,
    schedule: &TrotterSchedule,
    policy: &TruncationPolicy,
    mut on_sweep: impl FnMut(&ConvergenceReport),
) -> Result<GroundStateOutcome> {
    let mut mps = mps0.clone();
    let mut history = Vec::new();
    let mut converged = true;
    let mut step = 0usize;
    for stage in &schedule.stages {
        let gate = exponentiate_gate(hamiltonian, stage.dt, EvolutionMode::Imaginary, Parity::Even)?;
        let mut stage_converged = false;
        let mut prev: Vec<Lambda> =
            (0..mps.update_bonds()).map(|b| mps.bond_lambda(b).clone()).collect();
        for _ in 0..stage.max_sweeps {
            let trunc = sweep_once(&mut mps, &gate, policy)?;
            step += 1;
            let mut xi = 0.0f64;
            for b in 0..mps.update_bonds() {
                xi = xi.max(temporal_deviation(&mps.model, &prev[b], mps.bond_lambda(b)));
            }
            prev = (0..mps.update_bonds()).map(|b| mps.bond_lambda(b).clone()).collect();
            let energy = crate::obs::bond_expectation(&mps, central_bond(&mps), hamiltonian)
                .map(|e| e.re)
                .unwrap_or(f64::NAN);
            let report = ConvergenceReport {
                step,
                dt: stage.dt,
                xi,
                energy,
                max_bond_dim: mps.max_bond_dim(),
                truncation: trunc,
            };
            on_sweep(&report);
            history.push(report);
            if xi < stage.xi_tol {
                stage_converged = true;
                break;
            }
        }
        converged &= stage_converged;
    }
    Ok(GroundStateOutcome { mps, history, converged })
}

fn central_bond(mps: &AnyonicMps) -> usize {
    match mps.boundary {
        crate::mps::Boundary::Finite { .. } => (mps.len() - 1) / 2,
        crate::mps::Boundary::Infinite => 0,
    }
}

/// Real-time evolution; returns the state after every step.
pub fn evolve_real_time(
    mps0: &AnyonicMps,
    hamiltonian: &TwoSiteOperator,
    dt: f64,
    steps: usize,
    policy: &TruncationPolicy,
) -> Result<Vec<AnyonicMps>> {
    let gate = exponentiate_gate(hamiltonian, dt, EvolutionMode::Real, Parity::Even)?;
    let mut mps = mps0.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        sweep_once(&mut mps, &gate, policy)?;
        out.push(mps.clone());
    }
    Ok(out)
}

/// Restore the canonical form by sweeping identity updates, without
/// truncation beyond the policy.
pub fn canonicalize(mps: &mut AnyonicMps, policy: &TruncationPolicy, passes: usize) -> Result<()> {
    for _ in 0..passes {
        for b in 0..mps.update_bonds() {
            two_site_update(mps, b, None, policy)?;
        }
        for b in (0..mps.update_bonds()).rev() {
            two_site_update(mps, b, None, policy)?;
        }
    }
    Ok(())
}
