//! Exact diagonalization over explicitly enumerated fusion-tree bases for
//! small finite chains and coarse-grained ladders; the ground-truth engine
//! behind the TEBD cross checks.
//!
//! Basis states carry one (charge, slot) pair per site plus the running
//! fusion outcomes down the standard left-to-right tree. Local two-site
//! operators act after an F-rotation that brings the pair onto a common
//! vertex; everything is assembled as dense matrices in the orthonormal
//! basis.

use crate::ham::TwoSiteOperator;
use crate::linalg::{self, CMat};
use crate::model::{AnyonModel, Charge};
use crate::mps::AnyonicMps;
use crate::tensor::ChargeIndex;
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum EdError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("basis dimension {0} exceeds the dense solver cap {1}")]
    TooLarge(usize, usize),
    #[error("operator does not match the basis sites")]
    SiteMismatch,
}

pub type Result<T> = std::result::Result<T, EdError>;

pub const DENSE_CAP: usize = 20_000;

/// One fusion-tree basis state: per-site (charge, slot) and the running
/// outcomes; bonds[k] is the fusion of sites 0..=k, ending at the total.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeState {
    pub occ: Vec<(Charge, u16)>,
    pub bonds: Vec<Charge>,
}

pub struct FusionTreeBasis {
    pub model: Arc<AnyonModel>,
    pub sites: Vec<ChargeIndex>,
    pub total: Charge,
    pub states: Vec<TreeState>,
    index: HashMap<TreeState, usize>,
}

impl FusionTreeBasis {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn position(&self, s: &TreeState) -> Option<usize> {
        self.index.get(s).copied()
    }
}

/// Enumerate every labelled fusion tree over the given per-site charge sets
/// with the fixed total charge, in lexicographic order (site charges in
/// index order, slots ascending, bond outcomes in charge order).
pub fn enumerate_trees(
    model: &Arc<AnyonModel>,
    sites: &[ChargeIndex],
    total: Charge,
) -> Result<FusionTreeBasis> {
    assert!(sites.len() >= 2, "need at least two sites");
    let mut states = Vec::new();
    let mut occ: Vec<(Charge, u16)> = Vec::new();
    let mut bonds: Vec<Charge> = Vec::new();
    fn dfs(
        model: &AnyonModel,
        sites: &[ChargeIndex],
        total: Charge,
        k: usize,
        current: Charge,
        occ: &mut Vec<(Charge, u16)>,
        bonds: &mut Vec<Charge>,
        out: &mut Vec<TreeState>,
    ) {
        if k == sites.len() {
            if current == total {
                out.push(TreeState { occ: occ.clone(), bonds: bonds.clone() });
            }
            return;
        }
        for &(a, nu) in sites[k].entries() {
            for mu in 0..nu {
                for &c in model.fuse(current, a).unwrap() {
                    occ.push((a, mu as u16));
                    bonds.push(c);
                    dfs(model, sites, total, k + 1, c, occ, bonds, out);
                    occ.pop();
                    bonds.pop();
                }
            }
        }
    }
    dfs(model, sites, total, 0, model.vacuum(), &mut occ, &mut bonds, &mut states);
    if states.len() > DENSE_CAP {
        return Err(EdError::TooLarge(states.len(), DENSE_CAP));
    }
    let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    Ok(FusionTreeBasis { model: model.clone(), sites: sites.to_vec(), total, states, index })
}

/// Dense matrix of a two-site operator acting on sites (i, i+1). The
/// standard tree is rotated so the pair shares a vertex (one F-move), the
/// operator block acts, and the rotation is undone.
pub fn apply_local(basis: &FusionTreeBasis, i: usize, op: &TwoSiteOperator) -> Result<CMat> {
    let model = &basis.model;
    let n = basis.dim();
    let mut h = CMat::zeros(n, n);
    for (col, st) in basis.states.iter().enumerate() {
        let u = if i == 0 { model.vacuum() } else { st.bonds[i - 1] };
        let m = st.bonds[i];
        let w = st.bonds[i + 1];
        let (s, mu_s) = st.occ[i];
        let (t, mu_t) = st.occ[i + 1];
        for &f in model.fuse(s, t)? {
            let c1 = model.f_symbol(u, s, t, w, m, f);
            if c1 == C64::new(0.0, 0.0) {
                continue;
            }
            let Some(block) = op.blocks.get(&f) else { continue };
            let ket_slot = op.map.slot(s, mu_s as usize, t, mu_t as usize, f);
            for (sp, tp, _) in op.map.pairs_into(f) {
                for mu_sp in 0..op.left.deg(sp) {
                    for mu_tp in 0..op.right.deg(tp) {
                        let bra_slot = op.map.slot(sp, mu_sp, tp, mu_tp, f);
                        let g = block.at(bra_slot, ket_slot);
                        if g == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for &m2 in model.fuse(u, sp)? {
                            if !model.is_fusion_vertex(m2, tp, w)? {
                                continue;
                            }
                            let c2 = model.f_symbol(u, sp, tp, w, m2, f).conj();
                            if c2 == C64::new(0.0, 0.0) {
                                continue;
                            }
                            let mut ns = st.clone();
                            ns.occ[i] = (sp, mu_sp as u16);
                            ns.occ[i + 1] = (tp, mu_tp as u16);
                            ns.bonds[i] = m2;
                            if let Some(row) = basis.position(&ns) {
                                h[(row, col)] += c1 * g * c2;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(h)
}

/// Assemble sum_i h^{(i, i+1)} over the listed bond placements.
pub fn assemble(basis: &FusionTreeBasis, terms: &[(usize, &TwoSiteOperator)]) -> Result<CMat> {
    let n = basis.dim();
    let mut h = CMat::zeros(n, n);
    for &(i, op) in terms {
        let hi = apply_local(basis, i, op)?;
        for (x, y) in h.data.iter_mut().zip(&hi.data) {
            *x += *y;
        }
    }
    Ok(h)
}

pub struct ExactGroundState {
    pub energy: f64,
    pub degeneracy: usize,
    pub vector: Vec<C64>,
    pub spectrum: Vec<f64>,
}

/// Lowest eigenpair of an assembled Hamiltonian.
pub fn ground_state_exact(h: &CMat) -> ExactGroundState {
    let (vals, vecs) = linalg::eigh(h);
    let e0 = vals[0];
    let degeneracy = vals.iter().take_while(|&&e| e - e0 < 1e-9).count();
    let vector = (0..h.rows).map(|i| vecs.at(i, 0)).collect();
    ExactGroundState { energy: e0, degeneracy, vector, spectrum: vals }
}

/// Anyonic entanglement entropy of the bipartition at bond j (sites 0..=j
/// against the rest): sectors by the bond charge, probabilities lambda^2/d.
pub fn entropy_exact(basis: &FusionTreeBasis, psi: &[C64], bond: usize) -> f64 {
    let model = &basis.model;
    // group states by (bond charge; left part; right part)
    let mut sector_maps: BTreeMap<Charge, (HashMap<Vec<u32>, usize>, HashMap<Vec<u32>, usize>, Vec<(usize, usize, C64)>)> =
        BTreeMap::new();
    for (idx, st) in basis.states.iter().enumerate() {
        let m = st.bonds[bond];
        let mut left_key = Vec::new();
        for k in 0..=bond {
            left_key.push(st.occ[k].0 .0);
            left_key.push(st.occ[k].1 as u32);
            left_key.push(st.bonds[k].0);
        }
        let mut right_key = Vec::new();
        for k in bond + 1..basis.sites.len() {
            right_key.push(st.occ[k].0 .0);
            right_key.push(st.occ[k].1 as u32);
            right_key.push(st.bonds[k].0);
        }
        let entry = sector_maps.entry(m).or_default();
        let next_l = entry.0.len();
        let li = *entry.0.entry(left_key).or_insert(next_l);
        let next_r = entry.1.len();
        let ri = *entry.1.entry(right_key).or_insert(next_r);
        entry.2.push((li, ri, psi[idx]));
    }
    let mut s = 0.0;
    for (m, (lmap, rmap, entries)) in sector_maps {
        let mut mat = CMat::zeros(lmap.len(), rmap.len());
        for (li, ri, v) in entries {
            mat[(li, ri)] = v;
        }
        let svd = linalg::svd(&mat);
        let d = model.qdim(m);
        for &sv in &svd.s {
            let p = sv * sv / d;
            if p > 1e-300 {
                s -= d * p * p.ln();
            }
        }
    }
    s
}

/// Dense pair propagator between rungs i and i+r: annihilate the channel
/// pair at rung i, thread its line past the intermediate sites (the same
/// recoupling convention as the MPS path), recreate at rung i+r.
pub fn correlator_exact(
    basis: &FusionTreeBasis,
    psi: &[C64],
    chi: Charge,
    empty: Charge,
    i: usize,
    r: usize,
) -> f64 {
    let model = &basis.model;
    let line = model.fuse(chi, model.dual(empty)).unwrap()[0];
    let mut val = C64::new(0.0, 0.0);
    for (col, st) in basis.states.iter().enumerate() {
        if psi[col] == C64::new(0.0, 0.0) || st.occ[i].0 != chi || st.occ[i + r].0 != empty {
            continue;
        }
        // enumerate bra bond paths b'_k for k in i..i+r-1 with
        // ket bond b_k in b'_k x line
        fn walk(
            model: &AnyonModel,
            st: &TreeState,
            line: Charge,
            chi: Charge,
            empty: Charge,
            i: usize,
            r: usize,
            k: usize,
            wprev: Charge,
            amp: C64,
            ns: &mut TreeState,
            out: &mut Vec<(TreeState, C64)>,
        ) {
            if k == i + r {
                // final site: bra gets chi; bond beyond matches the ket
                let x = st.bonds[k];
                if model.is_fusion_vertex(wprev, chi, x).unwrap_or(false) {
                    let mut done = ns.clone();
                    done.occ[k] = (chi, 0);
                    out.push((done, amp));
                }
                return;
            }
            let s = st.occ[k].0;
            let v = st.bonds[k];
            let v_before = if k == 0 { model.vacuum() } else { st.bonds[k - 1] };
            for &wp in model.fuse(wprev, s).unwrap() {
                // line factor moving past site k
                let mut bfac = C64::new(0.0, 0.0);
                for &theta in model.fuse(line, s).unwrap() {
                    let f1 = model.f_symbol(wprev, line, s, v, v_before, theta);
                    let rr = model.r_symbol(line, s, theta);
                    let f2 = model.f_symbol(wprev, s, line, v, wp, theta).conj();
                    bfac += f1 * rr * f2;
                }
                if bfac == C64::new(0.0, 0.0) {
                    continue;
                }
                ns.bonds[k] = wp;
                walk(model, st, line, chi, empty, i, r, k + 1, wp, amp * bfac, ns, out);
                ns.bonds[k] = st.bonds[k];
            }
        }
        // initial step: bra at site i is empty
        let wstart = if i == 0 { model.vacuum() } else { st.bonds[i - 1] };
        for &w_i in model.fuse(wstart, empty).unwrap() {
            let mut ns = st.clone();
            ns.occ[i] = (empty, 0);
            ns.bonds[i] = w_i;
            let mut outs = Vec::new();
            walk(model, st, line, chi, empty, i, r, i + 1, w_i, C64::new(1.0, 0.0), &mut ns, &mut outs);
            for (bra, amp) in outs {
                if let Some(row) = basis.position(&bra) {
                    val += psi[row].conj() * amp * psi[col];
                }
            }
        }
    }
    val.re
}

/// Orthonormal amplitudes of a finite MPS in this tree basis (the bridge for
/// cross-validation tests). Every bond weight enters once, converted to the
/// plain gauge by sqrt(d); site tensors pick up the inverse vertex factor.
pub fn mps_to_vector(mps: &AnyonicMps, basis: &FusionTreeBasis) -> Vec<C64> {
    let model = &mps.model;
    let mut out = Vec::with_capacity(basis.dim());
    for st in &basis.states {
        let mut vec: Vec<C64> = vec![C64::new(1.0, 0.0)];
        let mut prev = model.vacuum();
        for k in 0..mps.len() {
            let (s, mu) = st.occ[k];
            let b = st.bonds[k];
            let lvals = mps.lambda_right(k).values(b);
            let mut nxt = vec![C64::new(0.0, 0.0); lvals.len()];
            if let Some(bl) = mps.gamma(k).blocks.get(&[prev, s, b]) {
                let conv = (model.qdim(s) / (model.qdim(prev) * model.qdim(b))).powf(0.25);
                let lam_a = model.qdim(b).sqrt();
                for i in 0..vec.len().min(bl.shape[0]) {
                    for (j, x) in nxt.iter_mut().enumerate().take(bl.shape[2]) {
                        *x += vec[i] * bl.at(i, mu as usize, j) * conv * lam_a * lvals[j];
                    }
                }
            }
            vec = nxt;
            prev = b;
        }
        out.push(vec.into_iter().sum());
    }
    out
}
