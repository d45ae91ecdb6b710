//! Anyonic matrix product states in Vidal form: per-site order-3 splitting
//! tensors and per-bond Schmidt weight vectors, for finite open chains and
//! infinite unit cells, over plain anyonic or Anyon x U(1) graded models.
//!
//! Storage follows the explicit normalization scheme: Schmidt vectors absorb
//! a factor 1/sqrt(d_a) per sector, so a normalized state satisfies
//! sum_a d_a sum_mu lambda_{a,mu}^2 = 1. Site tensors are kept such that the
//! mixed-canonical conditions hold blockwise with the diagrammatic loop
//! weights.

use crate::model::{AnyonModel, Charge, ModelError};
use crate::tensor::{Block, BlockTensor, ChargeIndex, VertexRole, NO_CHARGE};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum MpsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("filling must satisfy 0 <= p <= q with gcd(p, q) = 1, got {0}/{1}")]
    BadFilling(u64, u64),
    #[error("shifted charge ({0}, {1}) is outside the model's retained window")]
    ShiftOverflow(String, i64),
    #[error("no fusion tree matches the requested charge assignment")]
    NoValidTree,
    #[error("bond {0} out of range")]
    BadBond(usize),
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T> = std::result::Result<T, MpsError>;

/// Target particle density nu = p / q.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillingSpec {
    pub p: u64,
    pub q: u64,
}

impl FillingSpec {
    pub fn new(p: u64, q: u64) -> Result<Self> {
        fn gcd(a: u64, b: u64) -> u64 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let ok = q >= 1 && p <= q && (p == 0 || gcd(p, q) == 1);
        if !ok {
            return Err(MpsError::BadFilling(p, q));
        }
        Ok(FillingSpec { p, q })
    }

    /// Relabel one U(1) charge: n -> q n - p. Net charge zero per q sites
    /// then corresponds to density p/q.
    pub fn shift(&self, n: i64) -> i64 {
        self.q as i64 * n - self.p as i64
    }

    /// Invert the relabeling on a mean occupation.
    pub fn unshift(&self, n_shifted: f64) -> f64 {
        (n_shifted + self.p as f64) / self.q as f64
    }
}

/// Relabel the U(1) part of every charge in a site index by n -> q n - p.
/// Amplitudes are untouched; this is a pure index relabeling.
pub fn shift_u1(
    model: &Arc<AnyonModel>,
    index: &ChargeIndex,
    filling: FillingSpec,
) -> Result<ChargeIndex> {
    let mut entries = Vec::new();
    for &(c, nu) in index.entries() {
        let parts = model
            .composite_parts(c)
            .expect("shift_u1 requires a U(1)-graded model");
        let shifted = filling.shift(parts.number);
        let nc = model
            .composite(parts.anyon, shifted)
            .ok_or_else(|| MpsError::ShiftOverflow(model.label(c).to_string(), shifted))?;
        entries.push((nc, nu));
    }
    Ok(ChargeIndex::new(entries))
}

/// Schmidt weights on one bond: nonnegative values per charge sector, kept in
/// descending order within each sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lambda {
    pub sectors: BTreeMap<Charge, Vec<f64>>,
}

impl Lambda {
    /// Single unit Schmidt value on `charge`, normalized to d * lambda^2 = 1.
    pub fn unit(charge: Charge, model: &AnyonModel) -> Lambda {
        let mut sectors = BTreeMap::new();
        sectors.insert(charge, vec![model.qdim(charge).sqrt().recip()]);
        Lambda { sectors }
    }

    pub fn index(&self) -> ChargeIndex {
        ChargeIndex::new(self.sectors.iter().map(|(&c, v)| (c, v.len())).collect())
    }

    pub fn weighted_norm_sq(&self, model: &AnyonModel) -> f64 {
        self.sectors
            .iter()
            .map(|(&c, v)| model.qdim(c) * v.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn rescale(&mut self, f: f64) {
        for v in self.sectors.values_mut() {
            for x in v.iter_mut() {
                *x *= f;
            }
        }
    }

    pub fn values(&self, c: Charge) -> &[f64] {
        self.sectors.get(&c).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn total_dim(&self) -> usize {
        self.sectors.values().map(|v| v.len()).sum()
    }

    pub fn as_block_tensor(&self, model: &Arc<AnyonModel>) -> BlockTensor {
        let ix = self.index();
        let mut t = crate::tensor::make_matrix(model, &ix, &ix, crate::tensor::Fill::Zeros, true)
            .expect("diagonal weight tensor");
        for (&c, vals) in &self.sectors {
            let b = t.block_mut([c, c, NO_CHARGE]).unwrap();
            for (i, &x) in vals.iter().enumerate() {
                *b.at_mut(i, i, 0) = C64::new(x, 0.0);
            }
        }
        t
    }
}

/// Site tensor with legs [left bond, physical, right bond]; blocks exist on
/// (l, p, r) with r an outcome of l x p, shaped (nu_l, nu_p, nu_r).
#[derive(Clone, Debug)]
pub struct Gamma {
    pub left: ChargeIndex,
    pub phys: ChargeIndex,
    pub right: ChargeIndex,
    pub blocks: BTreeMap<[Charge; 3], Block>,
}

impl Gamma {
    pub fn zeros(
        model: &AnyonModel,
        left: &ChargeIndex,
        phys: &ChargeIndex,
        right: &ChargeIndex,
    ) -> Result<Gamma> {
        let mut blocks = BTreeMap::new();
        for l in left.charges() {
            for p in phys.charges() {
                for &r in model.fuse(l, p)? {
                    if right.deg(r) == 0 {
                        continue;
                    }
                    blocks
                        .insert([l, p, r], Block::zeros([left.deg(l), phys.deg(p), right.deg(r)]));
                }
            }
        }
        Ok(Gamma { left: left.clone(), phys: phys.clone(), right: right.clone(), blocks })
    }

    /// View as an order-3 splitting tensor with the right bond as the trunk:
    /// legs [right (In), left (Out), physical (Out)].
    pub fn as_block_tensor(&self, model: &Arc<AnyonModel>) -> BlockTensor {
        let mut t = crate::tensor::make_order3(
            model,
            VertexRole::Splitting,
            &self.right,
            &self.left,
            &self.phys,
            crate::tensor::Fill::Zeros,
            true,
        )
        .expect("gamma skeleton");
        for (k, b) in &self.blocks {
            let nb = b.permute([2, 0, 1]); // (l, p, r) -> (r, l, p)
            let _ = t.insert_block([k[2], k[0], k[1]], nb);
        }
        t
    }

    pub fn max_abs_diff(&self, other: &Gamma) -> f64 {
        let mut d: f64 = 0.0;
        for (k, b) in &self.blocks {
            match other.blocks.get(k) {
                None => d = d.max(b.data.iter().map(|z| z.norm()).fold(0.0, f64::max)),
                Some(ob) => {
                    for (x, y) in b.data.iter().zip(&ob.data) {
                        d = d.max((x - y).norm());
                    }
                }
            }
        }
        for (k, ob) in &other.blocks {
            if !self.blocks.contains_key(k) {
                d = d.max(ob.data.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// Open chain; the left edge carries the vacuum, the right edge the
    /// state's total charge.
    Finite { total: Charge },
    /// Translation-invariant unit cell.
    Infinite,
}

/// Vidal-form anyonic MPS.
///
/// A finite chain of n sites has n + 1 stored bonds (0 and n are boundary
/// bonds); an infinite cell of length L stores bond k to the right of site k
/// and closes cyclically.
#[derive(Clone, Debug)]
pub struct AnyonicMps {
    pub model: Arc<AnyonModel>,
    pub gammas: Vec<Gamma>,
    pub lambdas: Vec<Lambda>,
    pub boundary: Boundary,
}

impl AnyonicMps {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.boundary, Boundary::Infinite)
    }

    /// Number of bonds a two-site update may act on: n - 1 interior bonds for
    /// a finite chain, L cyclic bonds for an infinite cell.
    pub fn update_bonds(&self) -> usize {
        match self.boundary {
            Boundary::Finite { .. } => self.len() - 1,
            Boundary::Infinite => self.len(),
        }
    }

    pub fn lambda_right(&self, site: usize) -> &Lambda {
        match self.boundary {
            Boundary::Finite { .. } => &self.lambdas[site + 1],
            Boundary::Infinite => &self.lambdas[site % self.len()],
        }
    }

    pub fn lambda_left(&self, site: usize) -> &Lambda {
        match self.boundary {
            Boundary::Finite { .. } => &self.lambdas[site],
            Boundary::Infinite => &self.lambdas[(site + self.len() - 1) % self.len()],
        }
    }

    pub fn gamma(&self, site: usize) -> &Gamma {
        &self.gammas[site % self.len()]
    }

    /// Sites coupled by interior bond k.
    pub fn bond_sites(&self, bond: usize) -> (usize, usize) {
        match self.boundary {
            Boundary::Finite { .. } => (bond, bond + 1),
            Boundary::Infinite => (bond, (bond + 1) % self.len()),
        }
    }

    /// Schmidt weights on interior bond k (between sites k and k+1).
    pub fn bond_lambda(&self, bond: usize) -> &Lambda {
        match self.boundary {
            Boundary::Finite { .. } => &self.lambdas[bond + 1],
            Boundary::Infinite => &self.lambdas[bond],
        }
    }

    pub fn norm_sq(&self, bond: usize) -> f64 {
        self.bond_lambda(bond).weighted_norm_sq(&self.model)
    }

    pub fn schmidt_spectrum(&self, bond: usize) -> Vec<(Charge, Vec<f64>)> {
        self.bond_lambda(bond).sectors.iter().map(|(&c, v)| (c, v.clone())).collect()
    }

    /// Entanglement entropy across an interior bond in the adopted anyonic
    /// convention: S = -sum_a d_a sum_mu p ln p with p = lambda^2.
    pub fn entanglement_entropy(&self, bond: usize) -> f64 {
        entropy_of_lambda(&self.model, self.bond_lambda(bond))
    }

    pub fn max_bond_dim(&self) -> usize {
        self.lambdas.iter().map(|l| l.total_dim()).max().unwrap_or(0)
    }

    /// Largest deviation from the left-canonical condition over all sites:
    /// contracting lambda^2-weighted Gamma against its conjugate with the
    /// diagrammatic loop weights must give the identity on the right bond.
    pub fn canonical_residual(&self) -> f64 {
        let model = &self.model;
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            let g = &self.gammas[k];
            let ll = self.lambda_left(k);
            let mut acc: BTreeMap<Charge, crate::linalg::CMat> = BTreeMap::new();
            for (key, b) in &g.blocks {
                let (l, p, r) = (key[0], key[1], key[2]);
                let w = (model.qdim(l) * model.qdim(p) / model.qdim(r)).sqrt();
                let lvals = ll.values(l);
                if lvals.is_empty() {
                    continue;
                }
                let (nl, np, nr) = (b.shape[0], b.shape[1], b.shape[2]);
                let m = acc.entry(r).or_insert_with(|| crate::linalg::CMat::zeros(nr, nr));
                for i in 0..nr {
                    for j in 0..nr {
                        let mut s = C64::new(0.0, 0.0);
                        for a in 0..nl.min(lvals.len()) {
                            let lw = lvals[a] * lvals[a];
                            for q in 0..np {
                                s += b.at(a, q, i).conj() * b.at(a, q, j) * lw;
                            }
                        }
                        m[(i, j)] += s * w;
                    }
                }
            }
            for (_, m) in acc {
                let n = m.rows;
                for i in 0..n {
                    for j in 0..n {
                        let expect = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((m.at(i, j) - C64::new(expect, 0.0)).norm());
                    }
                }
            }
        }
        worst
    }
}

pub fn entropy_of_lambda(model: &AnyonModel, lam: &Lambda) -> f64 {
    let mut s = 0.0;
    for (&c, vals) in &lam.sectors {
        let d = model.qdim(c);
        for &x in vals {
            let p = x * x;
            if p > 1e-300 {
                s -= d * p * p.ln();
            }
        }
    }
    s
}

/// Temporal deviation of two Schmidt spectra:
/// xi^2 = sum_a d_a sum_mu (lambda_mu - lambda'_mu)^2, sectors matched by
/// charge and padded with zeros.
pub fn temporal_deviation(model: &AnyonModel, prev: &Lambda, next: &Lambda) -> f64 {
    let mut charges: Vec<Charge> =
        prev.sectors.keys().chain(next.sectors.keys()).copied().collect();
    charges.sort();
    charges.dedup();
    let mut xi2 = 0.0;
    for c in charges {
        let a = prev.values(c);
        let b = next.values(c);
        let n = a.len().max(b.len());
        let d = model.qdim(c);
        for i in 0..n {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            xi2 += d * (x - y) * (x - y);
        }
    }
    xi2.sqrt()
}

/// Depth-first search for the lexicographically smallest bond-charge path
/// compatible with the site charges and boundary.
fn find_bond_path(model: &AnyonModel, sites: &[Charge], boundary: &Boundary) -> Option<Vec<Charge>> {
    fn dfs(
        model: &AnyonModel,
        sites: &[Charge],
        k: usize,
        current: Charge,
        stop: Charge,
        path: &mut Vec<Charge>,
    ) -> bool {
        if k == sites.len() {
            return current == stop;
        }
        let outs: Vec<Charge> = model.fuse(current, sites[k]).unwrap().to_vec();
        for c in outs {
            path.push(c);
            if dfs(model, sites, k + 1, c, stop, path) {
                return true;
            }
            path.pop();
        }
        false
    }
    match boundary {
        Boundary::Finite { total } => {
            let mut path = Vec::new();
            dfs(model, sites, 0, model.vacuum(), *total, &mut path).then_some(path)
        }
        Boundary::Infinite => {
            for start in model.charges() {
                let mut path = Vec::new();
                if dfs(model, sites, 0, start, start, &mut path) {
                    return Some(path);
                }
            }
            None
        }
    }
}

/// Bond-dimension-one product state over the given per-site charges. The
/// fusion path is the lexicographically smallest valid one; an impossible
/// assignment is an error.
pub fn init_product(
    model: &Arc<AnyonModel>,
    phys: &[ChargeIndex],
    assignment: &[Charge],
    boundary: Boundary,
) -> Result<AnyonicMps> {
    assert_eq!(phys.len(), assignment.len());
    let path = find_bond_path(model, assignment, &boundary).ok_or(MpsError::NoValidTree)?;
    let n = phys.len();
    let bond_charge = |k: isize| -> Charge {
        // charge on the bond left of site k
        match &boundary {
            Boundary::Finite { .. } => {
                if k <= 0 {
                    model.vacuum()
                } else {
                    path[(k - 1) as usize]
                }
            }
            Boundary::Infinite => path[(k - 1).rem_euclid(n as isize) as usize],
        }
    };
    let mut gammas = Vec::new();
    for k in 0..n {
        let l = bond_charge(k as isize);
        let r = bond_charge(k as isize + 1);
        let p = assignment[k];
        let left = ChargeIndex::single(l);
        let right = ChargeIndex::single(r);
        let mut g = Gamma::zeros(model, &left, &phys[k], &right)?;
        // Canonical-form amplitude for a path state in explicit normalization.
        let amp = (model.qdim(l) * model.qdim(r) / model.qdim(p)).powf(0.25);
        let b = g.blocks.get_mut(&[l, p, r]).ok_or(MpsError::NoValidTree)?;
        *b.at_mut(0, 0, 0) = C64::new(amp, 0.0);
        gammas.push(g);
    }
    let lambdas = match &boundary {
        Boundary::Finite { .. } => {
            let mut v = vec![Lambda::unit(model.vacuum(), model)];
            for k in 0..n {
                v.push(Lambda::unit(bond_charge(k as isize + 1), model));
            }
            v
        }
        Boundary::Infinite => {
            (0..n).map(|k| Lambda::unit(bond_charge(k as isize + 1), model)).collect()
        }
    };
    Ok(AnyonicMps { model: model.clone(), gammas, lambdas, boundary })
}

/// Random state with per-sector bond dimension <= chi0, bit-reproducible for
/// a fixed seed. Imaginary-time sweeps restore the canonical form on the fly;
/// `tebd::canonicalize` does it eagerly.
pub fn init_random(
    model: &Arc<AnyonModel>,
    phys: &[ChargeIndex],
    boundary: Boundary,
    chi0: usize,
    seed: u64,
) -> Result<AnyonicMps> {
    let n = phys.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut bonds: Vec<ChargeIndex> = Vec::with_capacity(n + 1);
    let start = match &boundary {
        Boundary::Finite { .. } => ChargeIndex::single(model.vacuum()),
        Boundary::Infinite => {
            // seed the cell boundary with everything reachable in one cell
            let mut ix = ChargeIndex::single(model.vacuum());
            for p in phys {
                let (next, _) = crate::tensor::fuse_index(model, &ix, p)?;
                ix = next;
            }
            ChargeIndex::new(ix.entries().iter().map(|&(c, nu)| (c, nu.min(chi0))).collect())
        }
    };
    bonds.push(start.clone());
    for k in 0..n {
        let (next, _) = crate::tensor::fuse_index(model, &bonds[k], &phys[k])?;
        let capped =
            ChargeIndex::new(next.entries().iter().map(|&(c, nu)| (c, nu.min(chi0))).collect());
        bonds.push(capped);
    }
    match &boundary {
        Boundary::Finite { total } => {
            if bonds[n].deg(*total) == 0 {
                return Err(MpsError::NoValidTree);
            }
            bonds[n] = ChargeIndex::single(*total);
        }
        Boundary::Infinite => bonds[n] = bonds[0].clone(),
    }
    let mut gammas = Vec::new();
    for k in 0..n {
        let (l, r) = (bonds[k].clone(), bonds[k + 1].clone());
        let mut g = Gamma::zeros(model, &l, &phys[k], &r)?;
        for b in g.blocks.values_mut() {
            for z in &mut b.data {
                *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        gammas.push(g);
    }
    let mk_lambda = |ix: &ChargeIndex, rng: &mut ChaCha12Rng| -> Lambda {
        let mut sectors = BTreeMap::new();
        for &(c, nu) in ix.entries() {
            let mut v: Vec<f64> = (0..nu).map(|_| rng.gen_range(0.1..1.0)).collect();
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            sectors.insert(c, v);
        }
        let mut lam = Lambda { sectors };
        let norm = lam.weighted_norm_sq(model).sqrt();
        lam.rescale(norm.recip());
        lam
    };
    let lambdas = match &boundary {
        Boundary::Finite { total } => {
            let mut v = vec![Lambda::unit(model.vacuum(), model)];
            for k in 1..n {
                v.push(mk_lambda(&bonds[k], &mut rng));
            }
            v.push(Lambda::unit(*total, model));
            v
        }
        Boundary::Infinite => (1..=n).map(|k| mk_lambda(&bonds[k], &mut rng)).collect(),
    };
    Ok(AnyonicMps { model: model.clone(), gammas, lambdas, boundary })
}

/// On-disk snapshot of a state with resume metadata; the JSON round trip is
/// bit-exact.
#[derive(Serialize, Deserialize)]
pub struct MpsCheckpoint {
    pub model: String,
    pub boundary: Boundary,
    pub filling: Option<FillingSpec>,
    pub phys: Vec<Vec<(u32, usize)>>,
    pub gammas: Vec<Vec<(Vec<u32>, [usize; 3], Vec<(f64, f64)>)>>,
    pub lambdas: Vec<Vec<(u32, Vec<f64>)>>,
    /// (sweep, dt, energy, xi) history rows.
    pub history: Vec<(usize, f64, f64, f64)>,
}

pub fn checkpoint(
    mps: &AnyonicMps,
    filling: Option<FillingSpec>,
    history: &[(usize, f64, f64, f64)],
) -> MpsCheckpoint {
    MpsCheckpoint {
        model: mps.model.name().to_string(),
        boundary: mps.boundary.clone(),
        filling,
        phys: mps
            .gammas
            .iter()
            .map(|g| g.phys.entries().iter().map(|&(c, nu)| (c.0, nu)).collect())
            .collect(),
        gammas: mps
            .gammas
            .iter()
            .map(|g| {
                g.blocks
                    .iter()
                    .map(|(k, b)| {
                        (
                            k.iter().map(|c| c.0).collect(),
                            b.shape,
                            b.data.iter().map(|z| (z.re, z.im)).collect(),
                        )
                    })
                    .collect()
            })
            .collect(),
        lambdas: mps
            .lambdas
            .iter()
            .map(|l| l.sectors.iter().map(|(&c, v)| (c.0, v.clone())).collect())
            .collect(),
        history: history.to_vec(),
    }
}

pub fn restore(model: &Arc<AnyonModel>, ck: &MpsCheckpoint) -> Result<AnyonicMps> {
    if ck.model != model.name() {
        return Err(MpsError::BadCheckpoint(format!(
            "checkpoint is for model `{}`, not `{}`",
            ck.model,
            model.name()
        )));
    }
    let lambdas: Vec<Lambda> = ck
        .lambdas
        .iter()
        .map(|sec| Lambda {
            sectors: sec.iter().map(|&(c, ref v)| (Charge(c), v.clone())).collect(),
        })
        .collect();
    let n = ck.gammas.len();
    let mut gammas = Vec::new();
    for k in 0..n {
        let phys = ChargeIndex::new(ck.phys[k].iter().map(|&(c, nu)| (Charge(c), nu)).collect());
        let mut blocks = BTreeMap::new();
        let mut lset: BTreeMap<Charge, usize> = BTreeMap::new();
        let mut rset: BTreeMap<Charge, usize> = BTreeMap::new();
        for (key, shape, data) in &ck.gammas[k] {
            let kk = [Charge(key[0]), Charge(key[1]), Charge(key[2])];
            lset.insert(kk[0], shape[0]);
            rset.insert(kk[2], shape[2]);
            blocks.insert(
                kk,
                Block {
                    shape: *shape,
                    data: data.iter().map(|&(re, im)| C64::new(re, im)).collect(),
                },
            );
        }
        gammas.push(Gamma {
            left: ChargeIndex::new(lset.into_iter().collect()),
            phys,
            right: ChargeIndex::new(rset.into_iter().collect()),
            blocks,
        });
    }
    Ok(AnyonicMps { model: model.clone(), gammas, lambdas, boundary: ck.boundary.clone() })
}
