//! Observables on anyonic MPS: local expectation values via pairwise
//! transfer contraction, particle density, anyonic pair correlators with a
//! threaded channel line, block entropy scans, and the fitting utilities for
//! central charges, Luttinger exponents and correlation lengths.

use crate::ham::{SiteSpec, TwoSiteOperator};
use crate::linalg::{self, CMat};
use crate::model::{AnyonModel, Charge};
use crate::mps::AnyonicMps;
use crate::tebd::{window_amplitudes, TebdError};
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;

pub type Result<T> = std::result::Result<T, TebdError>;

/// Charge-diagonal single-site operator: one matrix per physical charge.
pub type SiteOperator = BTreeMap<Charge, CMat>;

/// The particle-number operator of a site (diagonal, slot occupations).
pub fn number_operator(site: &SiteSpec) -> SiteOperator {
    let mut op = SiteOperator::new();
    for &(c, nu) in site.index.entries() {
        let mut m = CMat::zeros(nu, nu);
        for mu in 0..nu {
            m[(mu, mu)] = C64::new(site.occupation(c, mu) as f64, 0.0);
        }
        op.insert(c, m);
    }
    op
}

/// Expectation value of a two-site operator on the bond between sites k and
/// k+1. The closed diagram weighs each (left charge u, pair charge f, right
/// charge w) sector by sqrt(d_u d_f d_w); the result is normalized by the
/// same contraction with the identity.
pub fn bond_expectation(mps: &AnyonicMps, bond: usize, op: &TwoSiteOperator) -> Result<C64> {
    let model = &mps.model;
    let win = window_amplitudes(mps, bond)?;
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0f64;
    for ((f, u, w), (shape, data)) in &win.blocks {
        let wgt = (model.qdim(*u) * model.qdim(*f) * model.qdim(*w)).sqrt();
        let (nu, df, nw) = (shape[0], shape[1], shape[2]);
        den += wgt * data.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let Some(g) = op.blocks.get(f) else { continue };
        for iu in 0..nu {
            for sp in 0..df {
                for s in 0..df {
                    let gv = g.at(sp, s);
                    if gv == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for iw in 0..nw {
                        num += wgt
                            * data[(iu * df + sp) * nw + iw].conj()
                            * gv
                            * data[(iu * df + s) * nw + iw];
                    }
                }
            }
        }
    }
    Ok(num / den)
}

/// Expectation value of a charge-diagonal single-site operator at `site`.
pub fn site_expectation(mps: &AnyonicMps, site: usize, op: &SiteOperator) -> C64 {
    let model = &mps.model;
    let g = mps.gamma(site);
    let ll = mps.lambda_left(site);
    let lr = mps.lambda_right(site);
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0f64;
    for (key, b) in &g.blocks {
        let (u, s, m) = (key[0], key[1], key[2]);
        let lvals = ll.values(u);
        let rvals = lr.values(m);
        if lvals.is_empty() || rvals.is_empty() {
            continue;
        }
        let wgt = (model.qdim(u) * model.qdim(s) * model.qdim(m)).sqrt();
        let (nu, ns, nm) = (b.shape[0], b.shape[1], b.shape[2]);
        for iu in 0..nu {
            let lw = lvals[iu] * lvals[iu];
            for im in 0..nm {
                let rw = rvals[im] * rvals[im];
                for is in 0..ns {
                    den += wgt * lw * rw * b.at(iu, is, im).norm_sqr();
                }
                if let Some(o) = op.get(&s) {
                    for isp in 0..ns {
                        for is in 0..ns {
                            let ov = o.at(isp, is);
                            if ov == C64::new(0.0, 0.0) {
                                continue;
                            }
                            num +=
                                wgt * lw * rw * b.at(iu, isp, im).conj() * ov * b.at(iu, is, im);
                        }
                    }
                }
            }
        }
    }
    num / den
}

/// Mean energy per chain site: the sum of bond expectations divided by the
/// number of sites (for coarse-grained ladders this is the energy per rung).
pub fn energy_per_site(mps: &AnyonicMps, h: &TwoSiteOperator) -> Result<f64> {
    let bonds = mps.update_bonds();
    let mut total = 0.0;
    for b in 0..bonds {
        total += bond_expectation(mps, b, h)?.re;
    }
    Ok(total / mps.len() as f64)
}

/// Mean particle number per chain site, averaged over the unit cell. Slot
/// occupations already refer to unshifted particle counts, so no further
/// relabeling is needed.
pub fn filling_fraction(mps: &AnyonicMps, sites: &[SiteSpec]) -> f64 {
    let mut total = 0.0;
    for (k, spec) in sites.iter().enumerate().take(mps.len()) {
        let op = number_operator(spec);
        total += site_expectation(mps, k, &op).re;
    }
    total / mps.len() as f64
}

/// Left-orthonormal site tensor in the plain (bra-ket) gauge:
/// A[v; s; v'] = lambda_left(v) Gamma (d_v d_s / d_v')^(1/4) blockwise, with
/// the extra sqrt(d_v) that converts the stored Schmidt weights.
fn orth_a_tensor(mps: &AnyonicMps, site: usize) -> BTreeMap<[Charge; 3], crate::tensor::Block> {
    let model = &mps.model;
    let g = mps.gamma(site);
    let ll = mps.lambda_left(site);
    let mut out = BTreeMap::new();
    for (key, b) in &g.blocks {
        let (v, s, vp) = (key[0], key[1], key[2]);
        let lvals = ll.values(v);
        if lvals.is_empty() {
            continue;
        }
        let fac = (model.qdim(v) * model.qdim(s) / model.qdim(vp)).powf(0.25);
        let mut nb = b.clone();
        let (nv, ns, nvp) = (b.shape[0], b.shape[1], b.shape[2]);
        for iv in 0..nv {
            for is in 0..ns {
                for ivp in 0..nvp {
                    *nb.at_mut(iv, is, ivp) = b.at(iv, is, ivp) * lvals[iv] * fac;
                }
            }
        }
        out.insert(*key, nb);
    }
    out
}

/// Orthonormal-gauge Schmidt weights on the bond right of `site`.
fn orth_lambda_sq(mps: &AnyonicMps, site: usize, c: Charge) -> Vec<f64> {
    let d = mps.model.qdim(c);
    mps.lambda_right(site).values(c).iter().map(|&x| d * x * x).collect()
}

/// Correlation channel of the pair propagator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairChannel {
    Vacuum,
    Nonvacuum,
}

#[derive(Clone, Debug)]
pub struct CorrelatorSeries {
    pub separations: Vec<usize>,
    pub values: Vec<f64>,
}

/// The doubly occupied rung sector matching the channel.
pub fn channel_charge(model: &AnyonModel, rung: &SiteSpec, channel: PairChannel) -> Option<Charge> {
    let base_vac = match model.composite_parts(model.vacuum()) {
        Some(p) => p.anyon,
        None => model.vacuum(),
    };
    rung.index.charges().find(|&c| {
        let occ2 = rung.occ.get(&c).map(|v| v.iter().all(|&n| n == 2)).unwrap_or(false);
        if !occ2 {
            return false;
        }
        let is_vac = match model.composite_parts(c) {
            Some(p) => p.anyon == base_vac,
            None => c == model.vacuum(),
        };
        match channel {
            PairChannel::Vacuum => is_vac,
            PairChannel::Nonvacuum => !is_vac,
        }
    })
}

/// The empty rung sector.
pub fn empty_charge(rung: &SiteSpec) -> Option<Charge> {
    rung.index
        .charges()
        .find(|&c| rung.occ.get(&c).map(|v| v.iter().all(|&n| n == 0)).unwrap_or(false))
}

/// Anyonic pair propagator: annihilate a doubly occupied rung in the chosen
/// channel at rung 0, thread the channel line behind the chain, and recreate
/// the pair at rung r, for r = 1..r_max. Crossing one site costs the
/// recoupling F (1 x R) F^-1 of the line past that site's charge.
pub fn pair_correlation(
    mps: &AnyonicMps,
    rung: &SiteSpec,
    channel: PairChannel,
    r_max: usize,
) -> Result<CorrelatorSeries> {
    let model = mps.model.clone();
    let chi = channel_charge(&model, rung, channel)
        .ok_or(TebdError::Mps(crate::mps::MpsError::NoValidTree))?;
    let empty = empty_charge(rung).ok_or(TebdError::Mps(crate::mps::MpsError::NoValidTree))?;
    // charge carried by the line: chi relative to an emptied rung
    let line_set = model.fuse(chi, model.dual(empty))?;
    assert_eq!(line_set.len(), 1, "channel line must be a definite charge");
    let line = line_set[0];

    // L[(ket bond v, bra bond w)] with v in w x line.
    let a0 = orth_a_tensor(mps, 0);
    let mut l: BTreeMap<(Charge, Charge), CMat> = BTreeMap::new();
    for (key, bk) in &a0 {
        let (v0, s, v1) = (key[0], key[1], key[2]);
        if s != chi {
            continue;
        }
        for (kb, bb) in &a0 {
            if kb[0] != v0 || kb[1] != empty {
                continue;
            }
            let w1 = kb[2];
            let (nv0, _, nv1) = (bk.shape[0], bk.shape[1], bk.shape[2]);
            let nw1 = bb.shape[2];
            let ent = l.entry((v1, w1)).or_insert_with(|| CMat::zeros(nv1, nw1));
            for i0 in 0..nv0 {
                for i1 in 0..nv1 {
                    for j1 in 0..nw1 {
                        ent[(i1, j1)] += bk.at(i0, 0, i1) * bb.at(i0, 0, j1).conj();
                    }
                }
            }
        }
    }

    let mut seps = Vec::new();
    let mut vals = Vec::new();
    for r in 1..=r_max {
        let site = r;
        let a = orth_a_tensor(mps, site);
        // close: ket site empty (bond v -> x), bra site chi (bond w -> x)
        let mut c_val = C64::new(0.0, 0.0);
        for ((v, w), lm) in &l {
            for (kk, bk) in &a {
                if kk[0] != *v || kk[1] != empty {
                    continue;
                }
                let x = kk[2];
                for (kb, bb) in &a {
                    if kb[0] != *w || kb[1] != chi || kb[2] != x {
                        continue;
                    }
                    let lsq = orth_lambda_sq(mps, site, x);
                    for i in 0..lm.rows {
                        for j in 0..lm.cols {
                            for (ix, &lam) in lsq.iter().enumerate().take(bk.shape[2]) {
                                c_val +=
                                    lm.at(i, j) * bk.at(i, 0, ix) * bb.at(j, 0, ix).conj() * lam;
                            }
                        }
                    }
                }
            }
        }
        seps.push(r);
        vals.push(c_val.re);
        if r == r_max {
            break;
        }
        // propagate the line past this site
        let mut nl: BTreeMap<(Charge, Charge), CMat> = BTreeMap::new();
        for ((v, w), lm) in &l {
            for (kk, bk) in &a {
                if kk[0] != *v {
                    continue;
                }
                let (s, vp) = (kk[1], kk[2]);
                for (kb, bb) in &a {
                    if kb[0] != *w || kb[1] != s {
                        continue;
                    }
                    let wp = kb[2];
                    let mut bfac = C64::new(0.0, 0.0);
                    for &theta in model.fuse(line, s)? {
                        let f1 = model.f_symbol(*w, line, s, vp, *v, theta);
                        let rr = model.r_symbol(line, s, theta);
                        let f2 = model.f_symbol(*w, s, line, vp, wp, theta).conj();
                        bfac += f1 * rr * f2;
                    }
                    if bfac == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let (nv, ns, nvp) = (bk.shape[0], bk.shape[1], bk.shape[2]);
                    let nw = lm.cols;
                    let nwp = bb.shape[2];
                    let ent = nl.entry((vp, wp)).or_insert_with(|| CMat::zeros(nvp, nwp));
                    for ivp in 0..nvp {
                        for jwp in 0..nwp {
                            let mut acc = C64::new(0.0, 0.0);
                            for iv in 0..nv {
                                for jw in 0..nw {
                                    for is in 0..ns {
                                        acc += lm.at(iv, jw)
                                            * bk.at(iv, is, ivp)
                                            * bb.at(jw, is, jwp).conj();
                                    }
                                }
                            }
                            ent[(ivp, jwp)] += bfac * acc;
                        }
                    }
                }
            }
        }
        l = nl;
    }
    Ok(CorrelatorSeries { separations: seps, values: vals })
}

/// Block entropies S(r), r = 1..r_max, for contiguous blocks in the bulk of
/// the state.
#[derive(Clone, Debug)]
pub struct EntropyScan {
    pub sizes: Vec<usize>,
    pub entropies: Vec<f64>,
}

/// Block-charge-resolved window: for total block charge g, blocks keyed by
/// (left boundary charge u, right boundary charge v) with arrays over
/// (nu_u, kappa, nu_v). kappa indexes an orthogonal basis of the block's
/// internal states and is compressed after every growth step.
struct WindowSector {
    kappa: usize,
    blocks: BTreeMap<(Charge, Charge), Vec<C64>>,
}

/// Entanglement entropy of r contiguous bulk sites for r = 1..r_max. The
/// window grows one site at a time (one F-recoupling per step), its internal
/// basis compressed to at most `rank_cap` states per block-charge sector.
pub fn entropy_scan(mps: &AnyonicMps, r_max: usize, rank_cap: usize) -> Result<EntropyScan> {
    let model = mps.model.clone();
    let left_dims: BTreeMap<Charge, usize> = mps
        .lambda_left(0)
        .sectors
        .iter()
        .map(|(&c, v)| (c, v.len()))
        .collect();
    let nu_of = |u: Charge| left_dims.get(&u).copied().unwrap_or(0);

    let mut sectors: BTreeMap<Charge, WindowSector> = BTreeMap::new();
    let a0 = orth_a_tensor(mps, 0);
    for (key, b) in &a0 {
        let (u, s, v) = (key[0], key[1], key[2]);
        let (nu, ns, nv) = (b.shape[0], b.shape[1], b.shape[2]);
        let sec = sectors
            .entry(s)
            .or_insert_with(|| WindowSector { kappa: ns, blocks: BTreeMap::new() });
        let ent = sec
            .blocks
            .entry((u, v))
            .or_insert_with(|| vec![C64::new(0.0, 0.0); nu * ns * nv]);
        for iu in 0..nu {
            for is in 0..ns {
                for iv in 0..nv {
                    ent[(iu * ns + is) * nv + iv] = b.at(iu, is, iv);
                }
            }
        }
    }

    let mut sizes = Vec::new();
    let mut entropies = Vec::new();
    for r in 1..=r_max {
        // spectra of the boundary-weighted window via the kappa x kappa Gram
        // matrix (its eigenvalues are the squared Schmidt values)
        let mut s_total = 0.0f64;
        for (g, sec) in &sectors {
            let mut gram = CMat::zeros(sec.kappa, sec.kappa);
            let mut any = false;
            for (&(u, v), block) in &sec.blocks {
                let nu = nu_of(u);
                let lamr: Vec<f64> =
                    orth_lambda_sq(mps, r - 1, v).iter().map(|x| x.sqrt()).collect();
                let nv = lamr.len();
                if nu == 0 || nv == 0 {
                    continue;
                }
                any = true;
                // weighted rows: w[(iu, iv), k] = block * lam_r[iv]
                let mut w = vec![C64::new(0.0, 0.0); nu * nv * sec.kappa];
                for iu in 0..nu {
                    for iv in 0..nv {
                        for k in 0..sec.kappa {
                            w[(iu * nv + iv) * sec.kappa + k] =
                                block[(iu * sec.kappa + k) * nv + iv] * lamr[iv];
                        }
                    }
                }
                let wdag: Vec<C64> = {
                    let mut d = vec![C64::new(0.0, 0.0); sec.kappa * nu * nv];
                    for row in 0..nu * nv {
                        for k in 0..sec.kappa {
                            d[k * nu * nv + row] = w[row * sec.kappa + k].conj();
                        }
                    }
                    d
                };
                linalg::zgemm_acc(
                    sec.kappa,
                    nu * nv,
                    sec.kappa,
                    C64::new(1.0, 0.0),
                    &wdag,
                    &w,
                    &mut gram.data,
                );
            }
            if !any {
                continue;
            }
            let (eigs, _) = linalg::eigh(&gram);
            let dg = model.qdim(*g);
            for &e in &eigs {
                let p = e.max(0.0) / dg;
                if p > 1e-300 {
                    s_total -= dg * p * p.ln();
                }
            }
        }
        sizes.push(r);
        entropies.push(s_total);
        if r == r_max {
            break;
        }

        // grow the window by one site
        let a = orth_a_tensor(mps, r);
        // column layout of the new internal index per target charge g':
        // ordered runs of (old g, old kappa) x (site charge s, nu_s)
        let mut phys: Vec<(Charge, usize)> = Vec::new();
        for (key, b) in &a {
            if phys.iter().all(|&(s, _)| s != key[1]) {
                phys.push((key[1], b.shape[1]));
            }
        }
        phys.sort();
        let mut col_layout: BTreeMap<Charge, Vec<(Charge, usize, Charge, usize)>> = BTreeMap::new();
        for (g, sec) in &sectors {
            for &(s, ns) in &phys {
                for &gp in model.fuse(*g, s)? {
                    col_layout.entry(gp).or_default().push((*g, sec.kappa, s, ns));
                }
            }
        }
        let mut next: BTreeMap<Charge, WindowSector> = BTreeMap::new();
        for (gp, cols) in &col_layout {
            let kappa: usize = cols.iter().map(|&(_, k, _, ns)| k * ns).sum();
            next.insert(*gp, WindowSector { kappa, blocks: BTreeMap::new() });
        }
        for (g, sec) in &sectors {
            for (&(u, v), block) in &sec.blocks {
                let nu = nu_of(u);
                if nu == 0 {
                    continue;
                }
                for (key, b) in &a {
                    if key[0] != v {
                        continue;
                    }
                    let (s, vp) = (key[1], key[2]);
                    for &gp in model.fuse(*g, s)? {
                        let f = model.f_symbol(u, *g, s, vp, v, gp);
                        if f == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let cols = &col_layout[&gp];
                        let mut cbase = 0usize;
                        let mut run = None;
                        for &(cg, ck, cs, cns) in cols {
                            if cg == *g && cs == s {
                                run = Some((cbase, ck, cns));
                                break;
                            }
                            cbase += ck * cns;
                        }
                        let Some((cbase, ck, cns)) = run else { continue };
                        let nsec = next.get_mut(&gp).unwrap();
                        let kn = nsec.kappa;
                        let (nv, ns, nvp) = (b.shape[0], b.shape[1], b.shape[2]);
                        let ent = nsec
                            .blocks
                            .entry((u, vp))
                            .or_insert_with(|| vec![C64::new(0.0, 0.0); nu * kn * nvp]);
                        for iu in 0..nu {
                            for k in 0..ck {
                                for is in 0..ns.min(cns) {
                                    let kcol = cbase + k * cns + is;
                                    for ivp in 0..nvp {
                                        let mut acc = C64::new(0.0, 0.0);
                                        for iv in 0..nv {
                                            acc += block[(iu * sec.kappa + k) * nv + iv]
                                                * b.at(iv, is, ivp);
                                        }
                                        ent[(iu * kn + kcol) * nvp + ivp] += f * acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        // compress: rotate the kappa basis onto the dominant eigenvectors of
        // the (unweighted) Gram matrix, cap the rank
        for sec in next.values_mut() {
            let mut rows = 0usize;
            for block in sec.blocks.values() {
                rows += block.len() / sec.kappa;
            }
            let target = rank_cap.min(rows);
            if rows == 0 || sec.kappa <= target {
                continue;
            }
            let mut gram = CMat::zeros(sec.kappa, sec.kappa);
            for (&(u, _v), block) in &sec.blocks {
                let nu = nu_of(u).max(1);
                let nv = block.len() / (nu * sec.kappa);
                // each iu slab is a (kappa, nv) matrix S; accumulate
                // G[k, k'] += sum_iv conj(S[k, iv]) S[k', iv]
                for iu in 0..nu {
                    let off = iu * sec.kappa * nv;
                    let slab = &block[off..off + sec.kappa * nv];
                    let a: Vec<C64> = slab.iter().map(|z| z.conj()).collect();
                    let mut b = vec![C64::new(0.0, 0.0); nv * sec.kappa];
                    for k in 0..sec.kappa {
                        for iv in 0..nv {
                            b[iv * sec.kappa + k] = slab[k * nv + iv];
                        }
                    }
                    linalg::zgemm_acc(
                        sec.kappa,
                        nv,
                        sec.kappa,
                        C64::new(1.0, 0.0),
                        &a,
                        &b,
                        &mut gram.data,
                    );
                }
            }
            let (eigs, vecs) = linalg::eigh(&gram);
            // eigenvalues ascend: keep the top `target` above threshold
            let emax = eigs.last().copied().unwrap_or(0.0).max(1e-300);
            let mut keep_idx: Vec<usize> = (0..sec.kappa)
                .rev()
                .take(target)
                .filter(|&i| eigs[i] > 1e-28 * emax)
                .collect();
            keep_idx.sort();
            keep_idx.reverse(); // descending eigenvalue order
            let keep = keep_idx.len().max(1);
            let mut rot = CMat::zeros(sec.kappa, keep);
            for (col, &i) in keep_idx.iter().enumerate() {
                for rr in 0..sec.kappa {
                    rot[(rr, col)] = vecs.at(rr, i);
                }
            }
            let kappa_old = sec.kappa;
            let mut newk = BTreeMap::new();
            for (&(u, v), block) in &sec.blocks {
                let nuv = block.len() / kappa_old;
                let nu = nu_of(u).max(1);
                let nv = nuv / nu;
                let mut data = vec![C64::new(0.0, 0.0); nu * keep * nv];
                for iu in 0..nu {
                    for iv in 0..nv {
                        for (col, _) in keep_idx.iter().enumerate() {
                            let mut acc = C64::new(0.0, 0.0);
                            for k in 0..kappa_old {
                                acc += block[(iu * kappa_old + k) * nv + iv] * rot.at(k, col);
                            }
                            data[(iu * keep + col) * nv + iv] = acc;
                        }
                    }
                }
                newk.insert((u, v), data);
            }
            sec.kappa = keep;
            sec.blocks = newk;
        }
        sectors = next;
    }
    Ok(EntropyScan { sizes, entropies })
}

pub struct FitResult {
    pub value: f64,
    pub window: (usize, usize),
    pub residual: f64,
}

/// Central charge from S(r) = (c/3) ln r over a window of block sizes.
pub fn central_charge(scan: &EntropyScan, window: (usize, usize)) -> FitResult {
    let pts: Vec<(f64, f64)> = scan
        .sizes
        .iter()
        .zip(&scan.entropies)
        .filter(|(r, _)| **r >= window.0 && **r <= window.1)
        .map(|(r, s)| ((*r as f64).ln(), *s))
        .collect();
    assert!(pts.len() >= 3, "central-charge window needs at least 3 points");
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, slope, resid) = linalg::linear_fit(&xs, &ys);
    FitResult { value: 3.0 * slope, window, residual: resid }
}

/// Power-law fit C(r) ~ r^(-1/(2K)): log-log least squares, K from
/// slope = -1/(2K).
pub fn fit_power_law(series: &CorrelatorSeries, window: (usize, usize)) -> FitResult {
    let pts: Vec<(f64, f64)> = series
        .separations
        .iter()
        .zip(&series.values)
        .filter(|(r, v)| **r >= window.0 && **r <= window.1 && **v > 0.0)
        .map(|(r, v)| ((*r as f64).ln(), v.ln()))
        .collect();
    assert!(pts.len() >= 2, "power-law window needs positive values");
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, slope, resid) = linalg::linear_fit(&xs, &ys);
    FitResult { value: -1.0 / (2.0 * slope), window, residual: resid }
}

/// Exponential fit C(r) ~ e^(-r/xi).
pub fn fit_exponential(series: &CorrelatorSeries, window: (usize, usize)) -> FitResult {
    let pts: Vec<(f64, f64)> = series
        .separations
        .iter()
        .zip(&series.values)
        .filter(|(r, v)| **r >= window.0 && **r <= window.1 && **v > 0.0)
        .map(|(r, v)| (*r as f64, v.ln()))
        .collect();
    assert!(pts.len() >= 2, "exponential window needs positive values");
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (_, slope, resid) = linalg::linear_fit(&xs, &ys);
    FitResult { value: -1.0 / slope, window, residual: resid }
}

/// First block size where the local slope dS/d(ln r) falls below half of its
/// early value (the finite-chi plateau).
pub fn plateau_onset(scan: &EntropyScan) -> usize {
    let n = scan.sizes.len();
    if n < 4 {
        return scan.sizes.last().copied().unwrap_or(1);
    }
    let slope = |i: usize| -> f64 {
        (scan.entropies[i + 1] - scan.entropies[i])
            / ((scan.sizes[i + 1] as f64).ln() - (scan.sizes[i] as f64).ln())
    };
    let early = slope(1).max(1e-12);
    for i in 2..n - 1 {
        if slope(i) < 0.5 * early {
            return scan.sizes[i];
        }
    }
    scan.sizes[n - 1]
}

/// Central charge from finite-chi data: fit the largest-chi scan on its
/// pre-plateau window [min_r, onset - 2]; also report per-chi fits and
/// plateau onsets for trend inspection.
pub fn finite_chi_extrapolate(
    scans: &[(usize, EntropyScan)],
    min_r: usize,
) -> (FitResult, Vec<(usize, FitResult, usize)>) {
    assert!(scans.len() >= 2, "need at least two bond dimensions");
    let mut per_chi = Vec::new();
    for (chi, scan) in scans {
        let onset = plateau_onset(scan);
        let hi = onset.saturating_sub(2).max(min_r + 2);
        let fit = central_charge(scan, (min_r, hi));
        per_chi.push((*chi, fit, onset));
    }
    let best = scans.iter().max_by_key(|(chi, _)| *chi).unwrap();
    let onset = plateau_onset(&best.1);
    let hi = onset.saturating_sub(2).max(min_r + 2);
    let fit = central_charge(&best.1, (min_r, hi));
    (fit, per_chi)
}

pub fn entropy_scan_csv(scan: &EntropyScan) -> String {
    let mut out = String::from("r,S\n");
    for (r, s) in scan.sizes.iter().zip(&scan.entropies) {
        out.push_str(&format!("{},{:.12e}\n", r, s));
    }
    out
}

pub fn correlator_csv(series: &CorrelatorSeries) -> String {
    let mut out = String::from("r,C\n");
    for (r, v) in series.separations.iter().zip(&series.values) {
        out.push_str(&format!("{},{:.12e}\n", r, v));
    }
    out
}

pub fn fit_csv(name: &str, fit: &FitResult) -> String {
    format!(
        "parameter,value,window_lo,window_hi,residual\n{},{:.8e},{},{},{:.3e}\n",
        name, fit.value, fit.window.0, fit.window.1, fit.residual
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_recover_synthetic_laws() {
        let sizes: Vec<usize> = (1..=32).collect();
        let scan = EntropyScan {
            entropies: sizes.iter().map(|&r| 0.7 / 3.0 * (r as f64).ln()).collect(),
            sizes: sizes.clone(),
        };
        let fit = central_charge(&scan, (4, 24));
        assert!((fit.value - 0.7).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        let flat = EntropyScan { entropies: vec![1.3; 32], sizes: sizes.clone() };
        let fit = central_charge(&flat, (4, 24));
        assert!(fit.value.abs() < 1e-12);
        let series = CorrelatorSeries {
            separations: sizes.clone(),
            values: sizes.iter().map(|&r| (r as f64).powf(-0.5)).collect(),
        };
        let fit = fit_power_law(&series, (2, 30));
        assert!((fit.value - 1.0).abs() < 1e-12);
        let series = CorrelatorSeries {
            separations: sizes.clone(),
            values: sizes.iter().map(|&r| (-(r as f64) / 3.0).exp()).collect(),
        };
        let fit = fit_exponential(&series, (1, 30));
        assert!((fit.value - 3.0).abs() < 1e-12);
        let series = CorrelatorSeries {
            separations: sizes.clone(),
            values: sizes.iter().map(|&r| 1.0 + (r as f64 * 0.7).sin().abs()).collect(),
        };
        let fit = fit_exponential(&series, (1, 30));
        assert!(fit.residual > 1e-2);
    }

    #[test]
    fn plateau_detection_on_synthetic_scans() {
        let sizes: Vec<usize> = (1..=30).collect();
        let entropies: Vec<f64> = sizes
            .iter()
            .map(|&r| if r < 12 { (r as f64).ln() } else { (12f64).ln() })
            .collect();
        let scan = EntropyScan { sizes, entropies };
        let onset = plateau_onset(&scan);
        assert!((11..=14).contains(&onset), "onset {onset}");
        let scans = vec![(16usize, scan.clone()), (32, scan.clone())];
        let (fit, per_chi) = finite_chi_extrapolate(&scans, 2);
        let hi = onset.saturating_sub(2).max(4);
        let direct = central_charge(&scan, (2, hi));
        assert!((fit.value - direct.value).abs() < 1e-12);
        assert_eq!(per_chi.len(), 2);
        // scans plateauing earlier for smaller chi: window shrinks, c stable
        let mk = |cut: usize| EntropyScan {
            sizes: (1..=30).collect(),
            entropies: (1..=30)
                .map(|r| if r < cut { 0.5 * (r as f64).ln() } else { 0.5 * (cut as f64).ln() })
                .collect(),
        };
        let scans = vec![(8usize, mk(8)), (16, mk(12)), (32, mk(20))];
        let (fit, per_chi) = finite_chi_extrapolate(&scans, 2);
        assert!((fit.value - 1.5).abs() < 1e-9);
        let onsets: Vec<usize> = per_chi.iter().map(|x| x.2).collect();
        assert!(onsets[0] < onsets[2], "plateau extends with chi: {onsets:?}");
    }
}
