//! Charge-block sparse tensors of order <= 3 with oriented legs, and the
//! diagrammatic manipulations used by the MPS machinery: contraction, loop
//! removal, the star-bubble move, vertical bends, braids, fusion/splitting
//! maps, and singular value decomposition with anyon-weighted truncation.
//!
//! Tensors follow the explicit (isotopy) normalization scheme: stored blocks
//! are coefficients against bare fusion diagrams, creation routines multiply
//! in the vertex factor (d_c / (d_a d_b))^(1/4) when `isotopy` is requested,
//! and the contraction routines supply the loop and F-move factors quoted in
//! the operation docs. Mixing normalization schemes in one contraction is an
//! error.

use crate::linalg::{self, CMat};
use crate::model::{AnyonModel, BendVariant, Charge, ModelError};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tensors belong to different models")]
    ModelMismatch,
    #[error("shared legs carry different charge indices")]
    IndexMismatch,
    #[error("shared legs must have opposite orientations")]
    DirectionMismatch,
    #[error("contraction would produce a tensor of order {0} > 3")]
    ShapeError(usize),
    #[error("block {0:?} is invalid for this tensor's legs or vertex")]
    InvalidBlock(Vec<String>),
    #[error("operation requires a {0} vertex")]
    RoleError(&'static str),
    #[error("operands mix isotopy-normalized and plain tensors")]
    NormalizationMixed,
    #[error("truncation removed every Schmidt value")]
    EmptyBond,
    #[error("tensor dump: {0}")]
    BadDump(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Orientation of the charge arrow on a leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::In => Direction::Out,
            Direction::Out => Direction::In,
        }
    }
}

/// A degeneracy-graded index: charges with positive multiplicities, kept
/// sorted by charge. Zero-multiplicity sectors are dropped.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeIndex {
    entries: Vec<(Charge, usize)>,
}

impl ChargeIndex {
    pub fn new(mut entries: Vec<(Charge, usize)>) -> Self {
        entries.retain(|&(_, nu)| nu > 0);
        entries.sort_by_key(|&(c, _)| c);
        for w in entries.windows(2) {
            assert!(w[0].0 != w[1].0, "duplicate charge in index");
        }
        ChargeIndex { entries }
    }

    pub fn single(charge: Charge) -> Self {
        ChargeIndex { entries: vec![(charge, 1)] }
    }

    pub fn entries(&self) -> &[(Charge, usize)] {
        &self.entries
    }

    pub fn charges(&self) -> impl Iterator<Item = Charge> + '_ {
        self.entries.iter().map(|&(c, _)| c)
    }

    pub fn deg(&self, c: Charge) -> usize {
        self.entries
            .binary_search_by_key(&c, |&(q, _)| q)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn total_dim(&self) -> usize {
        self.entries.iter().map(|&(_, nu)| nu).sum()
    }

    /// Offset of a charge's degeneracy range in the dense embedding.
    pub fn dense_offset(&self, c: Charge) -> usize {
        let mut off = 0;
        for &(q, nu) in &self.entries {
            if q == c {
                return off;
            }
            off += nu;
        }
        panic!("charge not in index");
    }

    pub fn conjugate(&self, model: &AnyonModel) -> ChargeIndex {
        ChargeIndex::new(self.entries.iter().map(|&(c, nu)| (model.dual(c), nu)).collect())
    }
}

/// Bijection from pairs (a, mu_a, b, mu_b) with outcome c onto the degeneracy
/// range of c in the fused index. Enumeration is deterministic: outcome
/// charge outermost, then left charge, then right charge, degeneracies
/// row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionMap {
    pub left: ChargeIndex,
    pub right: ChargeIndex,
    pub target: ChargeIndex,
    offsets: BTreeMap<(Charge, Charge, Charge), usize>,
}

impl FusionMap {
    /// Slot of (a, mu_a; b, mu_b) within outcome sector c.
    pub fn slot(&self, a: Charge, mu_a: usize, b: Charge, mu_b: usize, c: Charge) -> usize {
        let base = self.offsets[&(a, b, c)];
        base + mu_a * self.right.deg(b) + mu_b
    }

    pub fn block_start(&self, a: Charge, b: Charge, c: Charge) -> Option<usize> {
        self.offsets.get(&(a, b, c)).copied()
    }

    /// All (a, b) pairs feeding outcome c, with their slot ranges.
    pub fn pairs_into(&self, c: Charge) -> Vec<(Charge, Charge, usize)> {
        let mut v: Vec<(Charge, Charge, usize)> = self
            .offsets
            .iter()
            .filter(|((_, _, cc), _)| *cc == c)
            .map(|(&(a, b, _), &off)| (a, b, off))
            .collect();
        v.sort_by_key(|&(_, _, off)| off);
        v
    }
}

/// Fuse two indices: nu_c = sum_{a,b} nu_a nu_b N_ab^c, together with the
/// enumeration bijection.
pub fn fuse_index(
    model: &AnyonModel,
    alpha: &ChargeIndex,
    beta: &ChargeIndex,
) -> Result<(ChargeIndex, FusionMap)> {
    let mut outcome: BTreeMap<Charge, usize> = BTreeMap::new();
    for a in alpha.charges() {
        for b in beta.charges() {
            for &c in model.fuse(a, b)? {
                *outcome.entry(c).or_insert(0) += alpha.deg(a) * beta.deg(b);
            }
        }
    }
    let target = ChargeIndex::new(outcome.iter().map(|(&c, &nu)| (c, nu)).collect());
    let mut offsets = BTreeMap::new();
    for c in target.charges() {
        let mut running = 0usize;
        for a in alpha.charges() {
            for b in beta.charges() {
                if model.is_fusion_vertex(a, b, c)? {
                    offsets.insert((a, b, c), running);
                    running += alpha.deg(a) * beta.deg(b);
                }
            }
        }
    }
    Ok((
        target.clone(),
        FusionMap { left: alpha.clone(), right: beta.clone(), target, offsets },
    ))
}

/// Vertex structure of an order-3 tensor; legs are stored as
/// [trunk, left branch, right branch].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexRole {
    /// trunk In, branches Out: trunk charge splits into the branches.
    Splitting,
    /// branches In, trunk Out: branches fuse into the trunk charge.
    Fusion,
}

pub const NO_CHARGE: Charge = Charge(u32::MAX);

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub shape: [usize; 3],
    pub data: Vec<C64>,
}

impl Block {
    pub fn zeros(shape: [usize; 3]) -> Self {
        Block { shape, data: vec![C64::new(0.0, 0.0); shape[0] * shape[1] * shape[2]] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut C64 {
        &mut self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    /// Reorder axes: new axis k is old axis perm[k].
    pub fn permute(&self, perm: [usize; 3]) -> Block {
        let ns = [self.shape[perm[0]], self.shape[perm[1]], self.shape[perm[2]]];
        let mut out = Block::zeros(ns);
        let mut idx = [0usize; 3];
        for i0 in 0..ns[0] {
            for i1 in 0..ns[1] {
                for i2 in 0..ns[2] {
                    let ni = [i0, i1, i2];
                    idx[perm[0]] = ni[0];
                    idx[perm[1]] = ni[1];
                    idx[perm[2]] = ni[2];
                    *out.at_mut(i0, i1, i2) = self.at(idx[0], idx[1], idx[2]);
                }
            }
        }
        out
    }

    pub fn scale(&mut self, f: C64) {
        for z in &mut self.data {
            *z *= f;
        }
    }
}

/// A charge-block sparse tensor of order 1, 2 or 3.
///
/// Order-2 tensors conserve charge (blocks only on equal leg charges);
/// order-3 tensors carry a trivalent vertex whose blocks exist exactly on
/// allowed charge triples.
#[derive(Clone, Debug)]
pub struct BlockTensor {
    model: Arc<AnyonModel>,
    legs: Vec<(ChargeIndex, Direction)>,
    vertex: Option<VertexRole>,
    blocks: BTreeMap<[Charge; 3], Block>,
    isotopy: bool,
}

/// Fill rule for tensor creation.
#[derive(Clone, Debug)]
pub enum Fill {
    Zeros,
    Identity,
    Random(u64),
}

impl BlockTensor {
    pub fn model(&self) -> &Arc<AnyonModel> {
        &self.model
    }

    pub fn order(&self) -> usize {
        self.legs.len()
    }

    pub fn legs(&self) -> &[(ChargeIndex, Direction)] {
        &self.legs
    }

    pub fn vertex(&self) -> Option<VertexRole> {
        self.vertex
    }

    pub fn is_isotopy(&self) -> bool {
        self.isotopy
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&[Charge; 3], &Block)> {
        self.blocks.iter()
    }

    pub fn block(&self, key: [Charge; 3]) -> Option<&Block> {
        self.blocks.get(&key)
    }

    pub fn block_mut(&mut self, key: [Charge; 3]) -> Option<&mut Block> {
        self.blocks.get_mut(&key)
    }

    fn key_labels(&self, key: &[Charge; 3]) -> Vec<String> {
        key.iter()
            .take(self.order())
            .map(|&c| self.model.label(c).to_string())
            .collect()
    }

    /// Insert a block after validating charges and shape.
    pub fn insert_block(&mut self, key: [Charge; 3], block: Block) -> Result<()> {
        let expect = self.expected_shape(&key)?;
        if block.shape != expect {
            return Err(TensorError::InvalidBlock(self.key_labels(&key)));
        }
        self.blocks.insert(key, block);
        Ok(())
    }

    fn expected_shape(&self, key: &[Charge; 3]) -> Result<[usize; 3]> {
        let order = self.order();
        let mut shape = [1usize; 3];
        for (i, leg) in self.legs.iter().enumerate() {
            let nu = leg.0.deg(key[i]);
            if nu == 0 {
                return Err(TensorError::InvalidBlock(self.key_labels(key)));
            }
            shape[i] = nu;
        }
        match order {
            2 => {
                if key[0] != key[1] {
                    return Err(TensorError::InvalidBlock(self.key_labels(key)));
                }
            }
            3 => {
                let ok = match self.vertex {
                    Some(_) => self.model.is_fusion_vertex(key[1], key[2], key[0])?,
                    None => true,
                };
                if !ok {
                    return Err(TensorError::InvalidBlock(self.key_labels(key)));
                }
            }
            _ => {}
        }
        Ok(shape)
    }

    /// Frobenius norm; in the isotopy scheme order-1/2 sectors are weighted
    /// by the quantum dimension of their conserved charge.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for (key, block) in &self.blocks {
            let w = if self.isotopy && self.order() <= 2 { self.model.qdim(key[0]) } else { 1.0 };
            acc += w * block.data.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        acc.sqrt()
    }

    /// Entrywise conjugate with all leg orientations flipped (the Hermitian
    /// mirror of the diagram). Fusion and splitting roles exchange.
    pub fn dagger(&self) -> BlockTensor {
        let legs = self.legs.iter().map(|(ix, d)| (ix.clone(), d.flip())).collect();
        let vertex = self.vertex.map(|v| match v {
            VertexRole::Splitting => VertexRole::Fusion,
            VertexRole::Fusion => VertexRole::Splitting,
        });
        let blocks = self
            .blocks
            .iter()
            .map(|(k, b)| {
                (*k, Block { shape: b.shape, data: b.data.iter().map(|z| z.conj()).collect() })
            })
            .collect();
        BlockTensor { model: self.model.clone(), legs, vertex, blocks, isotopy: self.isotopy }
    }

    /// Flip one leg's orientation, replacing its charge labels by duals.
    /// Blocks are unchanged.
    pub fn reverse_arrow(&self, leg: usize) -> BlockTensor {
        let model = &self.model;
        let mut legs = self.legs.clone();
        legs[leg] = (legs[leg].0.conjugate(model), legs[leg].1.flip());
        let mut blocks = BTreeMap::new();
        for (key, block) in &self.blocks {
            let mut nk = *key;
            nk[leg] = model.dual(nk[leg]);
            blocks.insert(nk, block.clone());
        }
        BlockTensor {
            model: self.model.clone(),
            legs,
            vertex: None,
            blocks,
            isotopy: self.isotopy,
        }
    }

    /// Scale every block in place.
    pub fn scale(&mut self, f: C64) {
        for b in self.blocks.values_mut() {
            b.scale(f);
        }
    }

    /// Dense embedding: one array indexed by the concatenated degeneracy
    /// ranges of each leg (sorted charge order). No diagrammatic weights.
    pub fn to_dense(&self) -> (Vec<usize>, Vec<C64>) {
        let dims: Vec<usize> = self.legs.iter().map(|(ix, _)| ix.total_dim()).collect();
        let total: usize = dims.iter().product();
        let mut out = vec![C64::new(0.0, 0.0); total];
        let strides: Vec<usize> = {
            let mut s = vec![1usize; dims.len()];
            for i in (0..dims.len().saturating_sub(1)).rev() {
                s[i] = s[i + 1] * dims[i + 1];
            }
            s
        };
        for (key, block) in &self.blocks {
            let offs: Vec<usize> =
                (0..self.order()).map(|l| self.legs[l].0.dense_offset(key[l])).collect();
            let sh = block.shape;
            for i in 0..sh[0] {
                for j in 0..sh[1] {
                    for k in 0..sh[2] {
                        let mut pos = 0;
                        let idx = [i, j, k];
                        for l in 0..self.order() {
                            pos += (offs[l] + idx[l]) * strides[l];
                        }
                        out[pos] = block.at(i, j, k);
                    }
                }
            }
        }
        (dims, out)
    }
}

/// Create a charge-conserving order-2 tensor (legs: row Out, column In).
pub fn make_matrix(
    model: &Arc<AnyonModel>,
    alpha: &ChargeIndex,
    beta: &ChargeIndex,
    fill: Fill,
    isotopy: bool,
) -> Result<BlockTensor> {
    let mut t = BlockTensor {
        model: model.clone(),
        legs: vec![(alpha.clone(), Direction::Out), (beta.clone(), Direction::In)],
        vertex: None,
        blocks: BTreeMap::new(),
        isotopy,
    };
    let mut rng = match fill {
        Fill::Random(seed) => Some(ChaCha12Rng::seed_from_u64(seed)),
        _ => None,
    };
    for a in alpha.charges() {
        if beta.deg(a) == 0 {
            continue;
        }
        let (ra, ca) = (alpha.deg(a), beta.deg(a));
        let mut block = Block::zeros([ra, ca, 1]);
        match fill {
            Fill::Zeros => {}
            Fill::Identity => {
                for i in 0..ra.min(ca) {
                    *block.at_mut(i, i, 0) = C64::new(1.0, 0.0);
                }
            }
            Fill::Random(_) => {
                let rng = rng.as_mut().unwrap();
                for z in &mut block.data {
                    *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        t.blocks.insert([a, a, NO_CHARGE], block);
    }
    Ok(t)
}

/// Create an order-3 tensor with legs [trunk, left, right]. Blocks exist on
/// every allowed vertex; with `isotopy` each block carries the vertex factor
/// (d_trunk / (d_left d_right))^(1/4).
pub fn make_order3(
    model: &Arc<AnyonModel>,
    role: VertexRole,
    gamma: &ChargeIndex,
    alpha: &ChargeIndex,
    beta: &ChargeIndex,
    fill: Fill,
    isotopy: bool,
) -> Result<BlockTensor> {
    let legs = match role {
        VertexRole::Splitting => vec![
            (gamma.clone(), Direction::In),
            (alpha.clone(), Direction::Out),
            (beta.clone(), Direction::Out),
        ],
        VertexRole::Fusion => vec![
            (gamma.clone(), Direction::Out),
            (alpha.clone(), Direction::In),
            (beta.clone(), Direction::In),
        ],
    };
    let mut t = BlockTensor {
        model: model.clone(),
        legs,
        vertex: Some(role),
        blocks: BTreeMap::new(),
        isotopy,
    };
    let mut rng = match fill {
        Fill::Random(seed) => Some(ChaCha12Rng::seed_from_u64(seed)),
        _ => None,
    };
    for c in gamma.charges() {
        for a in alpha.charges() {
            for b in beta.charges() {
                if !model.is_fusion_vertex(a, b, c)? {
                    continue;
                }
                let shape = [gamma.deg(c), alpha.deg(a), beta.deg(b)];
                let mut block = Block::zeros(shape);
                match fill {
                    Fill::Zeros => {}
                    Fill::Identity => {
                        for i in 0..shape[0].min(shape[1] * shape[2]) {
                            block.data[i * shape[1] * shape[2] + i] = C64::new(1.0, 0.0);
                        }
                    }
                    Fill::Random(_) => {
                        let rng = rng.as_mut().unwrap();
                        for z in &mut block.data {
                            *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        }
                    }
                }
                if isotopy {
                    let f = (model.qdim(c) / (model.qdim(a) * model.qdim(b))).powf(0.25);
                    block.scale(C64::new(f, 0.0));
                }
                t.blocks.insert([c, a, b], block);
            }
        }
    }
    Ok(t)
}

/// The fusion tensor X mapping alpha (x) beta onto the fused index, its
/// conjugate splitting tensor, and the enumeration bijection. Entries are the
/// vertex factor on valid maps (1 when not isotopy-normalized); contracting
/// the conjugate against X collapses to the identity on the fused index.
pub struct FusionTensors {
    pub fuse: BlockTensor,
    pub split: BlockTensor,
    pub map: FusionMap,
}

pub fn fusion_tensor(
    model: &Arc<AnyonModel>,
    alpha: &ChargeIndex,
    beta: &ChargeIndex,
    isotopy: bool,
) -> Result<FusionTensors> {
    let (target, map) = fuse_index(model, alpha, beta)?;
    let mut fuse = BlockTensor {
        model: model.clone(),
        legs: vec![
            (target.clone(), Direction::Out),
            (alpha.clone(), Direction::In),
            (beta.clone(), Direction::In),
        ],
        vertex: Some(VertexRole::Fusion),
        blocks: BTreeMap::new(),
        isotopy,
    };
    for c in target.charges() {
        for a in alpha.charges() {
            for b in beta.charges() {
                let Some(base) = map.block_start(a, b, c) else { continue };
                let (na, nb, nc) = (alpha.deg(a), beta.deg(b), target.deg(c));
                let mut block = Block::zeros([nc, na, nb]);
                let f = if isotopy {
                    (model.qdim(c) / (model.qdim(a) * model.qdim(b))).powf(0.25)
                } else {
                    1.0
                };
                for mu_a in 0..na {
                    for mu_b in 0..nb {
                        let slot = base + mu_a * nb + mu_b;
                        *block.at_mut(slot, mu_a, mu_b) = C64::new(f, 0.0);
                    }
                }
                fuse.blocks.insert([c, a, b], block);
            }
        }
    }
    let split = fuse.dagger();
    Ok(FusionTensors { fuse, split, map })
}

fn check_compat(t1: &BlockTensor, t2: &BlockTensor) -> Result<()> {
    if !t1.model.same_model(&t2.model) {
        return Err(TensorError::ModelMismatch);
    }
    if t1.isotopy != t2.isotopy {
        return Err(TensorError::NormalizationMixed);
    }
    Ok(())
}

fn check_shared_leg(t1: &BlockTensor, leg1: usize, t2: &BlockTensor, leg2: usize) -> Result<()> {
    if t1.legs[leg1].0 != t2.legs[leg2].0 {
        return Err(TensorError::IndexMismatch);
    }
    if t1.legs[leg1].1 == t2.legs[leg2].1 {
        return Err(TensorError::DirectionMismatch);
    }
    Ok(())
}

/// Contract two tensors along one shared leg. The shared leg must carry the
/// same index with opposite orientations; the result keeps t1's remaining
/// legs (in order) followed by t2's. Contractions whose result would exceed
/// order 3 are rejected; no diagrammatic factor is involved because no loop
/// is closed.
pub fn contract(t1: &BlockTensor, leg1: usize, t2: &BlockTensor, leg2: usize) -> Result<BlockTensor> {
    check_compat(t1, t2)?;
    check_shared_leg(t1, leg1, t2, leg2)?;
    let new_order = t1.order() + t2.order() - 2;
    if new_order > 3 {
        return Err(TensorError::ShapeError(new_order));
    }
    let keep1: Vec<usize> = (0..t1.order()).filter(|&l| l != leg1).collect();
    let keep2: Vec<usize> = (0..t2.order()).filter(|&l| l != leg2).collect();
    let mut legs: Vec<(ChargeIndex, Direction)> = Vec::new();
    for &l in &keep1 {
        legs.push(t1.legs[l].clone());
    }
    for &l in &keep2 {
        legs.push(t2.legs[l].clone());
    }
    let vertex = if new_order == 3 {
        if t1.order() == 3 {
            t1.vertex
        } else {
            t2.vertex
        }
    } else {
        None
    };
    let mut out = BlockTensor {
        model: t1.model.clone(),
        legs,
        vertex,
        blocks: BTreeMap::new(),
        isotopy: t1.isotopy,
    };
    for (k1, b1) in &t1.blocks {
        let shared = k1[leg1];
        // Move the contracted axis last on t1's side.
        let free1: Vec<usize> = keep1.clone();
        let rows: usize = free1.iter().map(|&l| b1.shape[l]).product();
        let kdim = b1.shape[leg1];
        let mut perm1 = [0usize; 3];
        for (i, &l) in free1.iter().enumerate() {
            perm1[i] = l;
        }
        perm1[free1.len()] = leg1;
        for i in (free1.len() + 1)..3 {
            perm1[i] = i; // padded unit axes
        }
        let m1 = b1.permute(perm1);
        for (k2, b2) in &t2.blocks {
            if k2[leg2] != shared {
                continue;
            }
            let free2: Vec<usize> = keep2.clone();
            let cols: usize = free2.iter().map(|&l| b2.shape[l]).product();
            let mut perm2 = [0usize; 3];
            perm2[0] = leg2;
            for (i, &l) in free2.iter().enumerate() {
                perm2[i + 1] = l;
            }
            for i in (free2.len() + 1)..3 {
                perm2[i] = i;
            }
            let m2 = b2.permute(perm2);

            let mut key = [NO_CHARGE; 3];
            let mut shape = [1usize; 3];
            let mut pos = 0;
            for &l in &free1 {
                key[pos] = k1[l];
                shape[pos] = b1.shape[l];
                pos += 1;
            }
            for &l in &free2 {
                key[pos] = k2[l];
                shape[pos] = b2.shape[l];
                pos += 1;
            }
            let entry = out
                .blocks
                .entry(key)
                .or_insert_with(|| Block::zeros(shape));
            linalg::zgemm_acc(rows, kdim, cols, C64::new(1.0, 0.0), &m1.data, &m2.data, &mut entry.data);
        }
    }
    Ok(out)
}

/// Contract a splitting tensor t1 = [c; a, b] against a fusion tensor
/// t2 = [c'; a, b] over both branch legs. The closed loop contributes
/// sqrt(d_a d_b / d_c) per charge sector in the isotopy scheme. Result is the
/// order-2 tensor with legs [t1 trunk, t2 trunk].
pub fn remove_loop(t1: &BlockTensor, t2: &BlockTensor) -> Result<BlockTensor> {
    check_compat(t1, t2)?;
    if t1.vertex != Some(VertexRole::Splitting) || t2.vertex != Some(VertexRole::Fusion) {
        return Err(TensorError::RoleError("splitting against fusion"));
    }
    check_shared_leg(t1, 1, t2, 1)?;
    check_shared_leg(t1, 2, t2, 2)?;
    let model = &t1.model;
    let mut out = BlockTensor {
        model: model.clone(),
        legs: vec![(t1.legs[0].0.clone(), t1.legs[0].1), (t2.legs[0].0.clone(), t2.legs[0].1)],
        vertex: None,
        blocks: BTreeMap::new(),
        isotopy: t1.isotopy,
    };
    for (k1, b1) in &t1.blocks {
        let (c, a, b) = (k1[0], k1[1], k1[2]);
        let Some(b2) = t2.blocks.get(&[c, a, b]) else { continue };
        let factor = if t1.isotopy {
            (model.qdim(a) * model.qdim(b) / model.qdim(c)).sqrt()
        } else {
            1.0
        };
        let (nc1, na, nb) = (b1.shape[0], b1.shape[1], b1.shape[2]);
        let nc2 = b2.shape[0];
        let entry = out
            .blocks
            .entry([c, c, NO_CHARGE])
            .or_insert_with(|| Block::zeros([nc1, nc2, 1]));
        // rows = trunk of t1, contract over (a,b) jointly, cols = trunk of t2.
        let m2 = b2.permute([1, 2, 0]); // (na, nb, nc2)
        linalg::zgemm_acc(
            nc1,
            na * nb,
            nc2,
            C64::new(factor, 0.0),
            &b1.data,
            &m2.data,
            &mut entry.data,
        );
    }
    Ok(out)
}

/// Star-bubble contraction of three order-3 tensors sharing three legs that
/// form a triangle:
///
/// - s1: splitting e -> (a, p), legs [e, a, p]
/// - s2: splitting c -> (e, d), legs [c, e, d]
/// - s3: fusion (p, d) -> b, legs [b, p, d]
///
/// The shared legs are e (s1/s2), p (s1/s3) and d (s2/s3); the result is the
/// splitting tensor c -> (a, b). Each compatible charge assignment is
/// weighted by (F_c^{apd})_e^b, times sqrt(d_p d_d / d_b) in the isotopy
/// scheme.
pub fn star_bubble(s1: &BlockTensor, s2: &BlockTensor, s3: &BlockTensor) -> Result<BlockTensor> {
    check_compat(s1, s2)?;
    check_compat(s2, s3)?;
    if s1.vertex != Some(VertexRole::Splitting)
        || s2.vertex != Some(VertexRole::Splitting)
        || s3.vertex != Some(VertexRole::Fusion)
    {
        return Err(TensorError::RoleError("splitting, splitting, fusion triangle"));
    }
    check_shared_leg(s2, 1, s1, 0)?; // e
    check_shared_leg(s1, 2, s3, 1)?; // p
    check_shared_leg(s2, 2, s3, 2)?; // d
    let model = s1.model.clone();
    let mut out = BlockTensor {
        model: model.clone(),
        legs: vec![
            (s2.legs[0].0.clone(), Direction::In),
            (s1.legs[1].0.clone(), Direction::Out),
            (s3.legs[0].0.clone(), Direction::Out),
        ],
        vertex: Some(VertexRole::Splitting),
        blocks: BTreeMap::new(),
        isotopy: s1.isotopy,
    };
    // Loop the two internal triangles: for each s2 block (c; e, d) and each
    // s1 block (e; a, p), every s3 block (b; p, d) contributes.
    for (k2, b2) in &s2.blocks {
        let (c, e, d) = (k2[0], k2[1], k2[2]);
        for (k1, b1) in &s1.blocks {
            if k1[0] != e {
                continue;
            }
            let (a, p) = (k1[1], k1[2]);
            for (k3, b3) in &s3.blocks {
                if k3[1] != p || k3[2] != d {
                    continue;
                }
                let b = k3[0];
                if !model.is_fusion_vertex(a, b, c)? {
                    continue;
                }
                let mut factor = model.f_symbol(a, p, d, c, e, b);
                if factor == C64::new(0.0, 0.0) {
                    continue;
                }
                if s1.isotopy {
                    factor *= (model.qdim(p) * model.qdim(d) / model.qdim(b)).sqrt();
                }
                let (nc, ne, nd) = (b2.shape[0], b2.shape[1], b2.shape[2]);
                let (na, np) = (b1.shape[1], b1.shape[2]);
                let nb = b3.shape[0];
                // tmp[(c), (a p d)] = sum_e s2[c,e,d] s1[e,a,p]
                // out[(c),(a),(b)] += factor * sum_{p,d} tmp * s3[b,p,d]
                let m2 = b2.permute([0, 2, 1]); // (nc, nd, ne)
                let mut tmp = vec![C64::new(0.0, 0.0); nc * nd * na * np];
                linalg::zgemm_acc(
                    nc * nd,
                    ne,
                    na * np,
                    C64::new(1.0, 0.0),
                    &m2.data,
                    &b1.data,
                    &mut tmp,
                );
                // tmp layout: (c, d, a, p) -> want (c, a, p, d)
                let mut tmp2 = vec![C64::new(0.0, 0.0); nc * na * np * nd];
                for ic in 0..nc {
                    for id in 0..nd {
                        for ia in 0..na {
                            for ip in 0..np {
                                tmp2[((ic * na + ia) * np + ip) * nd + id] =
                                    tmp[((ic * nd + id) * na + ia) * np + ip];
                            }
                        }
                    }
                }
                let m3 = b3.permute([1, 2, 0]); // (p, d, b)
                let entry = out
                    .blocks
                    .entry([c, a, b])
                    .or_insert_with(|| Block::zeros([nc, na, nb]));
                // (c a, p d) x (p d, b)
                let mut res = vec![C64::new(0.0, 0.0); nc * na * nb];
                linalg::zgemm_acc(
                    nc * na,
                    np * nd,
                    nb,
                    factor,
                    &tmp2,
                    &m3.data,
                    &mut res,
                );
                for (dst, src) in entry.data.iter_mut().zip(res) {
                    *dst += src;
                }
            }
        }
    }
    Ok(out)
}

/// Which leg of a trivalent vertex is bent, and in which direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BendWhich {
    LeftDown,
    RightDown,
    LeftUp,
    RightUp,
}

/// Bend one branch of an order-3 tensor vertically. Down-bends act on
/// splitting tensors [c; a, b] and produce fusion tensors with the bent leg's
/// charge conjugated; up-bends are their inverses on fusion tensors. Every
/// block is scaled by the matching bend factor.
pub fn bend_leg(t: &BlockTensor, which: BendWhich) -> Result<BlockTensor> {
    let model = t.model.clone();
    if !t.isotopy {
        return Err(TensorError::RoleError("isotopy-normalized tensor"));
    }
    match which {
        BendWhich::LeftDown | BendWhich::RightDown => {
            if t.vertex != Some(VertexRole::Splitting) {
                return Err(TensorError::RoleError("splitting"));
            }
        }
        BendWhich::LeftUp | BendWhich::RightUp => {
            if t.vertex != Some(VertexRole::Fusion) {
                return Err(TensorError::RoleError("fusion"));
            }
        }
    }
    let (trunk, left, right) = (t.legs[0].0.clone(), t.legs[1].0.clone(), t.legs[2].0.clone());
    let mut out = match which {
        // splitting c -> (a, b), bend a down: fusion (abar, c) -> b
        BendWhich::LeftDown => BlockTensor {
            model: model.clone(),
            legs: vec![
                (right.clone(), Direction::Out),
                (left.conjugate(&model), Direction::In),
                (trunk.clone(), Direction::In),
            ],
            vertex: Some(VertexRole::Fusion),
            blocks: BTreeMap::new(),
            isotopy: true,
        },
        // splitting c -> (a, b), bend b down: fusion (c, bbar) -> a
        BendWhich::RightDown => BlockTensor {
            model: model.clone(),
            legs: vec![
                (left.clone(), Direction::Out),
                (trunk.clone(), Direction::In),
                (right.conjugate(&model), Direction::In),
            ],
            vertex: Some(VertexRole::Fusion),
            blocks: BTreeMap::new(),
            isotopy: true,
        },
        // fusion (abar, c) -> b, straighten abar up: splitting c -> (a, b)
        BendWhich::LeftUp => BlockTensor {
            model: model.clone(),
            legs: vec![
                (right.clone(), Direction::In),
                (left.conjugate(&model), Direction::Out),
                (trunk.clone(), Direction::Out),
            ],
            vertex: Some(VertexRole::Splitting),
            blocks: BTreeMap::new(),
            isotopy: true,
        },
        // fusion (c, bbar) -> a, straighten bbar up: splitting c -> (a, b)
        BendWhich::RightUp => BlockTensor {
            model: model.clone(),
            legs: vec![
                (left.clone(), Direction::In),
                (trunk.clone(), Direction::Out),
                (right.conjugate(&model), Direction::Out),
            ],
            vertex: Some(VertexRole::Splitting),
            blocks: BTreeMap::new(),
            isotopy: true,
        },
    };
    for (key, block) in &t.blocks {
        let (nk, factor, perm) = match which {
            BendWhich::LeftDown => {
                let (c, a, b) = (key[0], key[1], key[2]);
                ([b, model.dual(a), c], model.bend_factor(BendVariant::I, a, b, c), [2, 1, 0])
            }
            BendWhich::RightDown => {
                let (c, a, b) = (key[0], key[1], key[2]);
                ([a, c, model.dual(b)], model.bend_factor(BendVariant::II, a, b, c), [1, 0, 2])
            }
            BendWhich::LeftUp => {
                // key = (b, abar, c) from a previous LeftDown
                let (bb, abar, c) = (key[0], key[1], key[2]);
                let a = model.dual(abar);
                ([c, a, bb], model.bend_factor(BendVariant::III, a, bb, c), [2, 1, 0])
            }
            BendWhich::RightUp => {
                // key = (a, c, bbar) from a previous RightDown
                let (a, c, bbar) = (key[0], key[1], key[2]);
                let b = model.dual(bbar);
                ([c, a, b], model.bend_factor(BendVariant::IV, a, b, c), [1, 0, 2])
            }
        };
        if factor == C64::new(0.0, 0.0) {
            continue;
        }
        let mut nb = block.permute(perm);
        nb.scale(factor);
        out.blocks.insert(nk, nb);
    }
    Ok(out)
}

/// Braid direction for exchanging the two outgoing legs of a splitting
/// tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BraidDirection {
    Over,
    Under,
}

/// Swap the outgoing legs of a splitting tensor, multiplying each block by
/// R_c^{ab} (over-crossing) or conj(R_c^{ba}) (under-crossing, the inverse).
pub fn braid_legs(t: &BlockTensor, dir: BraidDirection) -> Result<BlockTensor> {
    if t.vertex != Some(VertexRole::Splitting) {
        return Err(TensorError::RoleError("splitting"));
    }
    let model = t.model.clone();
    let mut out = BlockTensor {
        model: model.clone(),
        legs: vec![t.legs[0].clone(), t.legs[2].clone(), t.legs[1].clone()],
        vertex: Some(VertexRole::Splitting),
        blocks: BTreeMap::new(),
        isotopy: t.isotopy,
    };
    for (key, block) in &t.blocks {
        let (c, a, b) = (key[0], key[1], key[2]);
        let r = match dir {
            BraidDirection::Over => model.r_symbol(a, b, c),
            BraidDirection::Under => model.r_symbol(b, a, c).conj(),
        };
        let mut nb = block.permute([0, 2, 1]);
        nb.scale(r);
        out.blocks.insert([c, b, a], nb);
    }
    Ok(out)
}

/// Controls Schmidt-value truncation: keep at most `chi_max` values whose
/// anyon-weighted magnitude sqrt(d_a) * lambda exceeds `precision`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub chi_max: usize,
    pub precision: f64,
}

impl TruncationPolicy {
    pub fn exact(chi_max: usize) -> Self {
        TruncationPolicy { chi_max, precision: 0.0 }
    }
}

pub struct SvdOutcome {
    pub u: BlockTensor,
    pub lambda: BlockTensor,
    pub vt: BlockTensor,
    /// Kept index (charges and multiplicities after truncation).
    pub kept: ChargeIndex,
    /// Sum of d_a * lambda^2 over the discarded values.
    pub discarded_weight: f64,
}

/// Blockwise SVD of a charge-conserving order-2 tensor with anyon-weighted
/// global truncation. Values are ranked by sqrt(d_a) * lambda, descending;
/// ties keep the earlier charge, then the lower degeneracy slot.
pub fn svd_truncate(m: &BlockTensor, policy: &TruncationPolicy) -> Result<SvdOutcome> {
    if m.order() != 2 {
        return Err(TensorError::RoleError("order-2 tensor"));
    }
    let model = m.model.clone();
    struct SectorSvd {
        charge: Charge,
        svd: linalg::Svd,
    }
    let mut sectors = Vec::new();
    for (key, block) in &m.blocks {
        let c = key[0];
        let mat = CMat::from_rows(block.shape[0], block.shape[1], block.data.clone());
        sectors.push(SectorSvd { charge: c, svd: linalg::svd(&mat) });
    }
    // Global ranking.
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new(); // (weight, sector pos, value idx)
    for (si, sec) in sectors.iter().enumerate() {
        let w = model.qdim(sec.charge).sqrt();
        for (vi, &s) in sec.svd.s.iter().enumerate() {
            ranked.push((w * s, si, vi));
        }
    }
    ranked.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(sectors[x.1].charge.cmp(&sectors[y.1].charge))
            .then(x.2.cmp(&y.2))
    });
    let mut keep_count: BTreeMap<Charge, usize> = BTreeMap::new();
    let mut kept_total = 0usize;
    let mut discarded = 0.0f64;
    for &(w, si, vi) in &ranked {
        let c = sectors[si].charge;
        let s = sectors[si].svd.s[vi];
        if kept_total < policy.chi_max && w > policy.precision && s > 0.0 {
            // Sector SVDs are descending, so values keep within-sector order.
            *keep_count.entry(c).or_insert(0) += 1;
            kept_total += 1;
        } else {
            discarded += model.qdim(c) * s * s;
        }
    }
    if kept_total == 0 {
        return Err(TensorError::EmptyBond);
    }
    let kept = ChargeIndex::new(keep_count.iter().map(|(&c, &n)| (c, n)).collect());

    let mut u = BlockTensor {
        model: model.clone(),
        legs: vec![m.legs[0].clone(), (kept.clone(), m.legs[1].1)],
        vertex: None,
        blocks: BTreeMap::new(),
        isotopy: m.isotopy,
    };
    let mut lambda = BlockTensor {
        model: model.clone(),
        legs: vec![(kept.clone(), Direction::Out), (kept.clone(), Direction::In)],
        vertex: None,
        blocks: BTreeMap::new(),
        isotopy: m.isotopy,
    };
    let mut vt = BlockTensor {
        model: model.clone(),
        legs: vec![(kept.clone(), m.legs[0].1), m.legs[1].clone()],
        vertex: None,
        blocks: BTreeMap::new(),
        isotopy: m.isotopy,
    };
    for sec in &sectors {
        let c = sec.charge;
        let Some(&k) = keep_count.get(&c) else { continue };
        let rows = sec.svd.u.rows;
        let cols = sec.svd.vt.cols;
        let mut ub = Block::zeros([rows, k, 1]);
        for i in 0..rows {
            for j in 0..k {
                *ub.at_mut(i, j, 0) = sec.svd.u.at(i, j);
            }
        }
        u.blocks.insert([c, c, NO_CHARGE], ub);
        let mut lb = Block::zeros([k, k, 1]);
        for i in 0..k {
            *lb.at_mut(i, i, 0) = C64::new(sec.svd.s[i], 0.0);
        }
        lambda.blocks.insert([c, c, NO_CHARGE], lb);
        let mut vb = Block::zeros([k, cols, 1]);
        for i in 0..k {
            for j in 0..cols {
                *vb.at_mut(i, j, 0) = sec.svd.vt.at(i, j);
            }
        }
        vt.blocks.insert([c, c, NO_CHARGE], vb);
    }
    Ok(SvdOutcome { u, lambda, vt, kept, discarded_weight: discarded })
}

/// Self-describing dump of a tensor; the JSON round trip is bit-exact.
#[derive(Serialize, Deserialize)]
pub struct TensorDump {
    pub model: String,
    pub legs: Vec<(Vec<(u32, usize)>, Direction)>,
    pub vertex: Option<VertexRole>,
    pub isotopy: bool,
    pub blocks: Vec<(Vec<u32>, [usize; 3], Vec<(f64, f64)>)>,
}

pub fn dump_tensor(t: &BlockTensor) -> TensorDump {
    TensorDump {
        model: t.model.name().to_string(),
        legs: t
            .legs
            .iter()
            .map(|(ix, d)| (ix.entries().iter().map(|&(c, nu)| (c.0, nu)).collect(), *d))
            .collect(),
        vertex: t.vertex,
        isotopy: t.isotopy,
        blocks: t
            .blocks
            .iter()
            .map(|(k, b)| {
                (
                    k.iter().take(t.order()).map(|c| c.0).collect(),
                    b.shape,
                    b.data.iter().map(|z| (z.re, z.im)).collect(),
                )
            })
            .collect(),
    }
}

pub fn restore_tensor(model: &Arc<AnyonModel>, dump: &TensorDump) -> Result<BlockTensor> {
    if dump.model != model.name() {
        return Err(TensorError::BadDump(format!(
            "dump is for model `{}`, not `{}`",
            dump.model,
            model.name()
        )));
    }
    let legs: Vec<(ChargeIndex, Direction)> = dump
        .legs
        .iter()
        .map(|(entries, d)| {
            (ChargeIndex::new(entries.iter().map(|&(c, nu)| (Charge(c), nu)).collect()), *d)
        })
        .collect();
    let mut blocks = BTreeMap::new();
    for (key, shape, data) in &dump.blocks {
        let mut k = [NO_CHARGE; 3];
        for (i, &c) in key.iter().enumerate() {
            k[i] = Charge(c);
        }
        blocks.insert(
            k,
            Block { shape: *shape, data: data.iter().map(|&(re, im)| C64::new(re, im)).collect() },
        );
    }
    Ok(BlockTensor { model: model.clone(), legs, vertex: dump.vertex, blocks, isotopy: dump.isotopy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;

    const PHI: f64 = 1.618033988749894848204586834365638118;

    fn fib() -> Arc<AnyonModel> {
        builtin("fibonacci").unwrap()
    }

    fn tau(m: &AnyonModel) -> Charge {
        m.find_label("tau").unwrap()
    }

    #[test]
    fn fuse_index_examples() {
        let m = fib();
        let t = tau(&m);
        let vac = m.vacuum();
        let alpha = ChargeIndex::new(vec![(vac, 2), (t, 3)]);
        let beta = ChargeIndex::new(vec![(vac, 1), (t, 1)]);
        let (gamma, map) = fuse_index(&m, &alpha, &beta).unwrap();
        assert_eq!(gamma.deg(vac), 5); // 2*1 + 3*1
        assert_eq!(gamma.deg(t), 8); // 2*1 + 3*1 + 3*1
        // vacuum on the right leaves the index unchanged
        let (same, _) = fuse_index(&m, &alpha, &ChargeIndex::single(vac)).unwrap();
        assert_eq!(same, alpha);
        // Ising sigma x sigma
        let mi = builtin("ising").unwrap();
        let sg = mi.find_label("sigma").unwrap();
        let psi = mi.find_label("psi").unwrap();
        let (g, _) = fuse_index(&mi, &ChargeIndex::single(sg), &ChargeIndex::single(sg)).unwrap();
        assert_eq!(g.entries(), &[(mi.vacuum(), 1), (psi, 1)]);
        // Bijectivity of the slot map.
        let mut seen = vec![false; gamma.deg(t)];
        for (a, b, _) in map.pairs_into(t) {
            for mu_a in 0..alpha.deg(a) {
                for mu_b in 0..beta.deg(b) {
                    let s = map.slot(a, mu_a, b, mu_b, t);
                    assert!(!seen[s]);
                    seen[s] = true;
                }
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn make_matrix_fills() {
        let m = fib();
        let t = tau(&m);
        let alpha = ChargeIndex::new(vec![(m.vacuum(), 2), (t, 3)]);
        let ident = make_matrix(&m, &alpha, &alpha, Fill::Identity, true).unwrap();
        let b = ident.block([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap();
        assert_eq!(b.at(0, 0, 0), C64::new(1.0, 0.0));
        assert_eq!(b.at(0, 1, 0), C64::new(0.0, 0.0));
        assert_eq!(ident.block([t, t, NO_CHARGE]).unwrap().shape, [3, 3, 1]);
        let zeros = make_matrix(&m, &alpha, &alpha, Fill::Zeros, true).unwrap();
        assert_eq!(zeros.norm(), 0.0);
        let r1 = make_matrix(&m, &alpha, &alpha, Fill::Random(7), true).unwrap();
        let r2 = make_matrix(&m, &alpha, &alpha, Fill::Random(7), true).unwrap();
        for (k, b) in r1.blocks() {
            assert_eq!(b.data, r2.block(*k).unwrap().data);
        }
    }

    #[test]
    fn invalid_block_rejected() {
        let m = fib();
        let t = tau(&m);
        let alpha = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 1)]);
        let mut mat = make_matrix(&m, &alpha, &alpha, Fill::Zeros, true).unwrap();
        let err = mat.insert_block([m.vacuum(), t, NO_CHARGE], Block::zeros([1, 1, 1]));
        assert!(matches!(err, Err(TensorError::InvalidBlock(_))));
    }

    #[test]
    fn make_order3_vertex_factors() {
        let m = fib();
        let t = tau(&m);
        let single = ChargeIndex::single(t);
        let t3 = make_order3(&m, VertexRole::Splitting, &single, &single, &single, Fill::Identity, true)
            .unwrap();
        let b = t3.block([t, t, t]).unwrap();
        let expect = (m.qdim(t) / (m.qdim(t) * m.qdim(t))).powf(0.25);
        assert!((b.at(0, 0, 0) - C64::new(expect, 0.0)).norm() < 1e-15);
        assert!((expect - PHI.powf(-0.25)).abs() < 1e-15);
        // all-vacuum: single 1x1x1 block with factor 1
        let v = ChargeIndex::single(m.vacuum());
        let tv = make_order3(&m, VertexRole::Splitting, &v, &v, &v, Fill::Identity, true).unwrap();
        assert_eq!(tv.block([m.vacuum(), m.vacuum(), m.vacuum()]).unwrap().at(0, 0, 0), C64::new(1.0, 0.0));
        // Ising: sigma -> (sigma, sigma) is not a valid vertex
        let mi = builtin("ising").unwrap();
        let sg = mi.find_label("sigma").unwrap();
        let s = ChargeIndex::single(sg);
        let bad = make_order3(&mi, VertexRole::Splitting, &s, &s, &s, Fill::Identity, true).unwrap();
        assert_eq!(bad.blocks().count(), 0);
    }

    #[test]
    fn fusion_tensor_z2_table() {
        // Z2 fermions with one state per charge: four valid maps, fused
        // degeneracies nu_0 = 2 and nu_1 = 2.
        let m = builtin("fermion_z2").unwrap();
        let one = m.find_label("1").unwrap();
        let zero = m.vacuum();
        let site = ChargeIndex::new(vec![(zero, 1), (one, 1)]);
        let ft = fusion_tensor(&m, &site, &site, true).unwrap();
        assert_eq!(ft.map.target.deg(zero), 2);
        assert_eq!(ft.map.target.deg(one), 2);
        assert_eq!(ft.map.slot(zero, 0, zero, 0, zero), 0);
        assert_eq!(ft.map.slot(one, 0, one, 0, zero), 1);
        assert_eq!(ft.map.slot(zero, 0, one, 0, one), 0);
        assert_eq!(ft.map.slot(one, 0, zero, 0, one), 1);
        // X^dagger X = identity on the fused index
        let prod = remove_loop(&ft.split, &ft.fuse).unwrap();
        for c in [zero, one] {
            let b = prod.block([c, c, NO_CHARGE]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((b.at(i, j, 0) - C64::new(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fusion_tensor_fibonacci_entry() {
        let m = fib();
        let t = tau(&m);
        let site = ChargeIndex::single(t);
        let ft = fusion_tensor(&m, &site, &site, true).unwrap();
        // the (I <- tau, tau) entry is (1/phi^2)^(1/4) = phi^(-1/2)
        let b = ft.fuse.block([m.vacuum(), t, t]).unwrap();
        assert!((b.at(0, 0, 0) - C64::new(PHI.powf(-0.5), 0.0)).norm() < 1e-14);
        // identity property for a composite model too
        let p = crate::model::product_with_u1(&m, crate::model::U1Window::symmetric(4)).unwrap();
        let t1 = p.composite(t, 1).unwrap();
        let i0 = p.vacuum();
        let idx = ChargeIndex::new(vec![(i0, 1), (t1, 1)]);
        let ftp = fusion_tensor(&p, &idx, &idx, true).unwrap();
        let prod = remove_loop(&ftp.split, &ftp.fuse).unwrap();
        for (key, b) in prod.blocks() {
            let n = b.shape[0];
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (b.at(i, j, 0) - C64::new(expect, 0.0)).norm() < 1e-12,
                        "sector {:?}",
                        key
                    );
                }
            }
        }
    }

    #[test]
    fn contract_identity_and_dense_oracle() {
        let m = fib();
        let t = tau(&m);
        let alpha = ChargeIndex::new(vec![(m.vacuum(), 2), (t, 2)]);
        let gamma = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 2)]);
        let t3 = make_order3(&m, VertexRole::Splitting, &gamma, &alpha, &alpha, Fill::Random(3), true)
            .unwrap();
        // identity fed into the trunk leaves the tensor unchanged; the
        // matrix's Out leg (row) meets the trunk's In.
        let ident = make_matrix(&m, &gamma, &gamma, Fill::Identity, true).unwrap();
        let same = contract(&ident, 0, &t3, 0).unwrap();
        for (k, b) in t3.blocks() {
            let got = same.block(*k).unwrap();
            for (x, y) in b.data.iter().zip(&got.data) {
                assert!((x - y).norm() < 1e-13);
            }
        }
        // single-shared-leg contraction against the dense embedding:
        // result[j, a, b] = sum_q mat[q, j] t3[q, a, b]
        let mat = make_matrix(&m, &gamma, &gamma, Fill::Random(11), true).unwrap();
        let prod = contract(&mat, 0, &t3, 0).unwrap();
        let (dm, dmat) = mat.to_dense();
        let (dt, dten) = t3.to_dense();
        let (dp, dprod) = prod.to_dense();
        assert_eq!(dp, vec![dm[1], dt[1], dt[2]]);
        let (n0, n1, n2) = (dm[1], dt[1], dt[2]);
        let kdim = dm[0];
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let mut acc = C64::new(0.0, 0.0);
                    for q in 0..kdim {
                        acc += dmat[q * n0 + i] * dten[(q * n1 + j) * n2 + k];
                    }
                    let got = dprod[(i * n1 + j) * n2 + k];
                    assert!((acc - got).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn matrix_matrix_is_per_charge_product() {
        let m = builtin("ising").unwrap();
        let sg = m.find_label("sigma").unwrap();
        let alpha = ChargeIndex::new(vec![(m.vacuum(), 2), (sg, 3)]);
        let a = make_matrix(&m, &alpha, &alpha, Fill::Random(1), true).unwrap();
        let b = make_matrix(&m, &alpha, &alpha, Fill::Random(2), true).unwrap();
        let ab = contract(&a, 1, &b, 0).unwrap();
        for (key, blk) in a.blocks() {
            let c = key[0];
            let bb = b.block(*key).unwrap();
            let got = ab.block(*key).unwrap();
            let n = alpha.deg(c);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for q in 0..n {
                        acc += blk.at(i, q, 0) * bb.at(q, j, 0);
                    }
                    assert!((acc - got.at(i, j, 0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn order4_contraction_rejected() {
        let m = fib();
        let t = tau(&m);
        let s = ChargeIndex::single(t);
        let g = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 1)]);
        let a = make_order3(&m, VertexRole::Splitting, &g, &s, &s, Fill::Random(1), true).unwrap();
        let b = make_order3(&m, VertexRole::Fusion, &g, &s, &s, Fill::Random(2), true).unwrap();
        assert!(matches!(contract(&a, 1, &b, 1), Err(TensorError::ShapeError(4))));
    }

    #[test]
    fn remove_loop_factors() {
        // all-vacuum loop: factor 1
        let m = fib();
        let v = ChargeIndex::single(m.vacuum());
        let s1 = make_order3(&m, VertexRole::Splitting, &v, &v, &v, Fill::Identity, true).unwrap();
        let s2 = make_order3(&m, VertexRole::Fusion, &v, &v, &v, Fill::Identity, true).unwrap();
        let r = remove_loop(&s1, &s2).unwrap();
        assert!((r.block([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap().at(0, 0, 0)
            - C64::new(1.0, 0.0))
        .norm()
            < 1e-14);
        // Fibonacci a = b = tau, c = I: the bare loop gives phi; with both
        // vertex factors phi^(-1/2) it collapses to the identity, so strip
        // isotopy to see the raw factor.
        let t = tau(&m);
        let ti = ChargeIndex::single(t);
        let s1 = make_order3(&m, VertexRole::Splitting, &v, &ti, &ti, Fill::Identity, false).unwrap();
        let s2 = make_order3(&m, VertexRole::Fusion, &v, &ti, &ti, Fill::Identity, false).unwrap();
        // plain contraction has no factor
        let plain = remove_loop(&s1, &s2).unwrap();
        assert!((plain.block([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap().at(0, 0, 0)
            - C64::new(1.0, 0.0))
        .norm()
            < 1e-14);
        // isotopy contraction multiplies by sqrt(d_tau^2 / 1) = phi
        let mut s1i = s1.clone();
        let mut s2i = s2.clone();
        s1i.isotopy = true;
        s2i.isotopy = true;
        let iso = remove_loop(&s1i, &s2i).unwrap();
        assert!((iso.block([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap().at(0, 0, 0)
            - C64::new(PHI, 0.0))
        .norm()
            < 1e-12);
        // Ising a = b = sigma, c = I: factor sqrt(2)
        let mi = builtin("ising").unwrap();
        let sg = mi.find_label("sigma").unwrap();
        let vi = ChargeIndex::single(mi.vacuum());
        let si = ChargeIndex::single(sg);
        let mut a = make_order3(&mi, VertexRole::Splitting, &vi, &si, &si, Fill::Identity, false).unwrap();
        let mut borig = make_order3(&mi, VertexRole::Fusion, &vi, &si, &si, Fill::Identity, false).unwrap();
        a.isotopy = true;
        borig.isotopy = true;
        let r = remove_loop(&a, &borig).unwrap();
        assert!((r.block([mi.vacuum(), mi.vacuum(), NO_CHARGE]).unwrap().at(0, 0, 0)
            - C64::new(2.0f64.sqrt(), 0.0))
        .norm()
            < 1e-12);
    }

    /// Independent brute-force evaluation of the star-bubble move: explicit
    /// loops over every charge assignment and degeneracy slot, with the
    /// F-move and loop factors applied scalar by scalar.
    fn star_bubble_bruteforce(
        s1: &BlockTensor,
        s2: &BlockTensor,
        s3: &BlockTensor,
    ) -> BTreeMap<[Charge; 3], Block> {
        let m = s1.model();
        let mut out: BTreeMap<[Charge; 3], Block> = BTreeMap::new();
        for (k2, b2) in s2.blocks() {
            let (c, e, d) = (k2[0], k2[1], k2[2]);
            for (k1, b1) in s1.blocks() {
                if k1[0] != e {
                    continue;
                }
                let (a, p) = (k1[1], k1[2]);
                for (k3, b3) in s3.blocks() {
                    if k3[1] != p || k3[2] != d {
                        continue;
                    }
                    let b = k3[0];
                    let f = m.f_symbol(a, p, d, c, e, b);
                    if f == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let w = if s1.is_isotopy() {
                        (m.qdim(p) * m.qdim(d) / m.qdim(b)).sqrt()
                    } else {
                        1.0
                    };
                    let factor = f * w;
                    let (nc, ne, nd) = (b2.shape[0], b2.shape[1], b2.shape[2]);
                    let (na, np) = (b1.shape[1], b1.shape[2]);
                    let nb = b3.shape[0];
                    let entry = out.entry([c, a, b]).or_insert_with(|| Block::zeros([nc, na, nb]));
                    for ic in 0..nc {
                        for ia in 0..na {
                            for ib in 0..nb {
                                let mut acc = C64::new(0.0, 0.0);
                                for ie in 0..ne {
                                    for ip in 0..np {
                                        for id in 0..nd {
                                            acc += b2.at(ic, ie, id)
                                                * b1.at(ie, ia, ip)
                                                * b3.at(ib, ip, id);
                                        }
                                    }
                                }
                                *entry.at_mut(ic, ia, ib) += factor * acc;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn star_bubble_matches_bruteforce_on_random_ising() {
        let m = builtin("ising").unwrap();
        let sg = m.find_label("sigma").unwrap();
        let psi = m.find_label("psi").unwrap();
        let e_ix = ChargeIndex::new(vec![(m.vacuum(), 2), (sg, 1), (psi, 2)]);
        let a_ix = ChargeIndex::new(vec![(m.vacuum(), 1), (sg, 2)]);
        let p_ix = ChargeIndex::new(vec![(m.vacuum(), 1), (sg, 1), (psi, 1)]);
        let c_ix = ChargeIndex::new(vec![(m.vacuum(), 2), (sg, 2), (psi, 1)]);
        let d_ix = ChargeIndex::new(vec![(m.vacuum(), 1), (sg, 1)]);
        let (b_ix, _) = fuse_index(&m, &p_ix, &d_ix).unwrap();
        let s1 = make_order3(&m, VertexRole::Splitting, &e_ix, &a_ix, &p_ix, Fill::Random(5), true).unwrap();
        let s2 = make_order3(&m, VertexRole::Splitting, &c_ix, &e_ix, &d_ix, Fill::Random(6), true).unwrap();
        let s3 = make_order3(&m, VertexRole::Fusion, &b_ix, &p_ix, &d_ix, Fill::Random(7), true).unwrap();
        let got = star_bubble(&s1, &s2, &s3).unwrap();
        let want = star_bubble_bruteforce(&s1, &s2, &s3);
        assert_eq!(got.blocks().count(), want.len());
        for (k, b) in want {
            let gb = got.block(k).unwrap();
            for (x, y) in b.data.iter().zip(&gb.data) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn star_bubble_vacuum_and_trivial_f() {
        // all-vacuum charges: factor 1, plain scalar products
        let m = fib();
        let v = ChargeIndex::single(m.vacuum());
        let s1 = make_order3(&m, VertexRole::Splitting, &v, &v, &v, Fill::Random(1), true).unwrap();
        let s2 = make_order3(&m, VertexRole::Splitting, &v, &v, &v, Fill::Random(2), true).unwrap();
        let s3 = make_order3(&m, VertexRole::Fusion, &v, &v, &v, Fill::Random(3), true).unwrap();
        let r = star_bubble(&s1, &s2, &s3).unwrap();
        let key = [m.vacuum(), m.vacuum(), m.vacuum()];
        let expect = s1.block(key).unwrap().at(0, 0, 0)
            * s2.block(key).unwrap().at(0, 0, 0)
            * s3.block(key).unwrap().at(0, 0, 0);
        assert!((r.block(key).unwrap().at(0, 0, 0) - expect).norm() < 1e-14);
        // a vacuum among (a, p, d) makes the F factor trivial: the weight
        // reduces to sqrt(d_p d_d / d_b), checked against brute force.
        let t = tau(&m);
        let ti = ChargeIndex::single(t);
        let s1 = make_order3(&m, VertexRole::Splitting, &ti, &v, &ti, Fill::Random(4), true).unwrap();
        let s2 = make_order3(&m, VertexRole::Splitting, &ti, &ti, &ti, Fill::Random(5), true).unwrap();
        let (b_ix, _) = fuse_index(&m, &ti, &ti).unwrap();
        let s3 = make_order3(&m, VertexRole::Fusion, &b_ix, &ti, &ti, Fill::Random(6), true).unwrap();
        let got = star_bubble(&s1, &s2, &s3).unwrap();
        let want = star_bubble_bruteforce(&s1, &s2, &s3);
        for (k, b) in want {
            let gb = got.block(k).unwrap();
            for (x, y) in b.data.iter().zip(&gb.data) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_embedding_oracle_trivial_statistics() {
        // On the hardcore-boson model every diagrammatic weight is 1, so the
        // star-bubble must coincide with the plain dense contraction of the
        // embedded arrays.
        let m = builtin("hardcore_boson(4)").unwrap();
        let c0 = m.composite(Charge(0), 0).unwrap();
        let c1 = m.composite(Charge(0), 1).unwrap();
        let c2 = m.composite(Charge(0), 2).unwrap();
        let e_ix = ChargeIndex::new(vec![(c0, 2), (c1, 2)]);
        let a_ix = ChargeIndex::new(vec![(c0, 1), (c1, 2)]);
        let p_ix = ChargeIndex::new(vec![(c0, 2), (c1, 1)]);
        let c_ix = ChargeIndex::new(vec![(c0, 1), (c1, 2), (c2, 2)]);
        let d_ix = ChargeIndex::new(vec![(c0, 1), (c1, 1)]);
        let (b_ix, _) = fuse_index(&m, &p_ix, &d_ix).unwrap();
        let s1 = make_order3(&m, VertexRole::Splitting, &e_ix, &a_ix, &p_ix, Fill::Random(8), true).unwrap();
        let s2 = make_order3(&m, VertexRole::Splitting, &c_ix, &e_ix, &d_ix, Fill::Random(9), true).unwrap();
        let s3 = make_order3(&m, VertexRole::Fusion, &b_ix, &p_ix, &d_ix, Fill::Random(10), true).unwrap();
        let got = star_bubble(&s1, &s2, &s3).unwrap();
        // dense arrays: s1[e,a,p], s2[c,e,d], s3[b,p,d] -> out[c,a,b]
        let (d1, x1) = s1.to_dense();
        let (d2, x2) = s2.to_dense();
        let (d3, x3) = s3.to_dense();
        let (dg, xg) = got.to_dense();
        assert_eq!(dg, vec![d2[0], d1[1], d3[0]]);
        let (ne, na, np) = (d1[0], d1[1], d1[2]);
        let (nc, nd) = (d2[0], d2[2]);
        let nb = d3[0];
        for ic in 0..nc {
            for ia in 0..na {
                for ib in 0..nb {
                    let mut acc = C64::new(0.0, 0.0);
                    for ie in 0..ne {
                        for ip in 0..np {
                            for id in 0..nd {
                                acc += x2[(ic * ne + ie) * nd + id]
                                    * x1[(ie * na + ia) * np + ip]
                                    * x3[(ib * np + ip) * nd + id];
                            }
                        }
                    }
                    let gotv = xg[(ic * na + ia) * nb + ib];
                    assert!((acc - gotv).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bend_round_trip_restores_tensor() {
        let m = fib();
        let t = tau(&m);
        let g = ChargeIndex::new(vec![(m.vacuum(), 2), (t, 2)]);
        let a = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 2)]);
        let b = ChargeIndex::new(vec![(m.vacuum(), 2), (t, 1)]);
        let t3 = make_order3(&m, VertexRole::Splitting, &g, &a, &b, Fill::Random(13), true).unwrap();
        for (down, up) in [(BendWhich::RightDown, BendWhich::RightUp), (BendWhich::LeftDown, BendWhich::LeftUp)] {
            let bent = bend_leg(&t3, down).unwrap();
            let back = bend_leg(&bent, up).unwrap();
            assert_eq!(back.blocks().count(), t3.blocks().count());
            for (k, blk) in t3.blocks() {
                let gb = back.block(*k).unwrap();
                for (x, y) in blk.data.iter().zip(&gb.data) {
                    assert!((x - y).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bend_pure_u1_only_relabels() {
        let m = builtin("hardcore_boson(4)").unwrap();
        let c0 = m.composite(Charge(0), 0).unwrap();
        let c1 = m.composite(Charge(0), 1).unwrap();
        let c2 = m.composite(Charge(0), 2).unwrap();
        let g = ChargeIndex::new(vec![(c1, 2), (c2, 1)]);
        let a = ChargeIndex::new(vec![(c0, 1), (c1, 2)]);
        let b = ChargeIndex::new(vec![(c0, 2), (c1, 1)]);
        let t3 = make_order3(&m, VertexRole::Splitting, &g, &a, &b, Fill::Random(17), true).unwrap();
        let bent = bend_leg(&t3, BendWhich::RightDown).unwrap();
        for (k, blk) in t3.blocks() {
            let nk = [k[1], k[0], m.dual(k[2])];
            let gb = bent.block(nk).unwrap();
            let pb = blk.permute([1, 0, 2]);
            for (x, y) in pb.data.iter().zip(&gb.data) {
                assert!((x - y).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn bend_single_fib_block_factor_is_one() {
        let m = fib();
        let t = tau(&m);
        let ti = ChargeIndex::single(t);
        let t3 = make_order3(&m, VertexRole::Splitting, &ti, &ti, &ti, Fill::Identity, true).unwrap();
        let bent = bend_leg(&t3, BendWhich::RightDown).unwrap();
        let orig = t3.block([t, t, t]).unwrap().at(0, 0, 0);
        let got = bent.block([t, t, t]).unwrap().at(0, 0, 0);
        assert!((got - orig).norm() < 1e-13);
    }

    #[test]
    fn braid_round_trip_and_phases() {
        let m = fib();
        let t = tau(&m);
        let g = ChargeIndex::new(vec![(m.vacuum(), 2), (t, 3)]);
        let s = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 2)]);
        let t3 = make_order3(&m, VertexRole::Splitting, &g, &s, &s, Fill::Random(23), true).unwrap();
        let over = braid_legs(&t3, BraidDirection::Over).unwrap();
        // unitarity: norms preserved
        assert!((over.norm() - t3.norm()).abs() < 1e-12);
        let back = braid_legs(&over, BraidDirection::Under).unwrap();
        for (k, blk) in t3.blocks() {
            let gb = back.block(*k).unwrap();
            for (x, y) in blk.data.iter().zip(&gb.data) {
                assert!((x - y).norm() < 1e-12);
            }
        }
        // the (tau -> tau, tau) block gains R_tau^{tau tau} = e^{3 pi i / 5}
        let ti = ChargeIndex::single(t);
        let one = make_order3(&m, VertexRole::Splitting, &ti, &ti, &ti, Fill::Identity, true).unwrap();
        let braided = braid_legs(&one, BraidDirection::Over).unwrap();
        let phase = braided.block([t, t, t]).unwrap().at(0, 0, 0)
            / one.block([t, t, t]).unwrap().at(0, 0, 0);
        let expect = C64::from_polar(1.0, 3.0 * std::f64::consts::PI / 5.0);
        assert!((phase - expect).norm() < 1e-12);
        // hardcore bosons: braiding is a pure permutation
        let hb = builtin("hardcore_boson(3)").unwrap();
        let h0 = hb.composite(Charge(0), 0).unwrap();
        let h1 = hb.composite(Charge(0), 1).unwrap();
        let hix = ChargeIndex::new(vec![(h0, 2), (h1, 1)]);
        let (hg, _) = fuse_index(&hb, &hix, &hix).unwrap();
        let ht = make_order3(&hb, VertexRole::Splitting, &hg, &hix, &hix, Fill::Random(29), true).unwrap();
        let hbr = braid_legs(&ht, BraidDirection::Over).unwrap();
        for (k, blk) in ht.blocks() {
            let nk = [k[0], k[2], k[1]];
            let gb = hbr.block(nk).unwrap();
            let pb = blk.permute([0, 2, 1]);
            for (x, y) in pb.data.iter().zip(&gb.data) {
                assert!((x - y).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn reverse_arrow_involution_and_duals() {
        let m = builtin("hardcore_boson(4)").unwrap();
        let c1 = m.composite(Charge(0), 1).unwrap();
        let c2 = m.composite(Charge(0), 2).unwrap();
        let g = ChargeIndex::new(vec![(c1, 2), (c2, 1)]);
        let s = ChargeIndex::new(vec![(m.vacuum(), 1), (c1, 2)]);
        let t3 = make_order3(&m, VertexRole::Splitting, &g, &s, &s, Fill::Random(31), true).unwrap();
        let rev = t3.reverse_arrow(0);
        // composite (a, n) -> (abar, -n)
        assert!(rev.blocks().all(|(k, _)| m.u1_label(k[0]) < 0));
        let back = rev.reverse_arrow(0);
        for (k, blk) in t3.blocks() {
            let gb = back.block(*k).unwrap();
            assert_eq!(&blk.data, &gb.data);
        }
        // Fibonacci is self-dual: labels unchanged
        let mf = fib();
        let t = tau(&mf);
        let gi = ChargeIndex::new(vec![(mf.vacuum(), 1), (t, 1)]);
        let tf = make_order3(&mf, VertexRole::Splitting, &gi, &gi, &gi, Fill::Random(5), true).unwrap();
        let rf = tf.reverse_arrow(1);
        for (k, _) in tf.blocks() {
            assert!(rf.block(*k).is_some());
        }
    }

    #[test]
    fn svd_truncate_reconstruction_and_ranking() {
        let m = fib();
        let t = tau(&m);
        let alpha = ChargeIndex::new(vec![(m.vacuum(), 3), (t, 4)]);
        let mat = make_matrix(&m, &alpha, &alpha, Fill::Random(37), true).unwrap();
        let out = svd_truncate(&mat, &TruncationPolicy::exact(100)).unwrap();
        // exact factorization
        let ul = contract(&out.u, 1, &out.lambda, 0).unwrap();
        let rec = contract(&ul, 1, &out.vt, 0).unwrap();
        let mut diff = 0.0f64;
        for (k, b) in mat.blocks() {
            let rb = rec.block(*k).unwrap();
            for (x, y) in b.data.iter().zip(&rb.data) {
                diff = diff.max((x - y).norm());
            }
        }
        assert!(diff / mat.norm() < 1e-12);
        assert!(out.discarded_weight < 1e-24);

        // weighted ranking: lambda sectors {I: [0.9], tau: [0.5]} keep I at chi=1
        let single = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 1)]);
        let mut lam = make_matrix(&m, &single, &single, Fill::Zeros, true).unwrap();
        *lam.block_mut([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap().at_mut(0, 0, 0) = C64::new(0.9, 0.0);
        *lam.block_mut([t, t, NO_CHARGE]).unwrap().at_mut(0, 0, 0) = C64::new(0.5, 0.0);
        let cut = svd_truncate(&lam, &TruncationPolicy::exact(1)).unwrap();
        assert_eq!(cut.kept.entries(), &[(m.vacuum(), 1)]);
        // {I: [0.5], tau: [0.5]} keeps tau (sqrt(phi) * 0.5 > 0.5)
        *lam.block_mut([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap().at_mut(0, 0, 0) = C64::new(0.5, 0.0);
        let cut = svd_truncate(&lam, &TruncationPolicy::exact(1)).unwrap();
        assert_eq!(cut.kept.entries(), &[(t, 1)]);
        // discarded weight identity: norm^2(m) - norm^2(kept)
        let w = cut.discarded_weight;
        assert!((w - 1.0 * 0.25).abs() < 1e-12);
        // ties with equal quantum dimension keep the earlier charge
        let mz = builtin("fermion_z2").unwrap();
        let one = mz.find_label("1").unwrap();
        let sz = ChargeIndex::new(vec![(mz.vacuum(), 1), (one, 1)]);
        let mut lam2 = make_matrix(&mz, &sz, &sz, Fill::Zeros, true).unwrap();
        *lam2.block_mut([mz.vacuum(), mz.vacuum(), NO_CHARGE]).unwrap().at_mut(0, 0, 0) = C64::new(0.5, 0.0);
        *lam2.block_mut([one, one, NO_CHARGE]).unwrap().at_mut(0, 0, 0) = C64::new(0.5, 0.0);
        let cut2 = svd_truncate(&lam2, &TruncationPolicy::exact(1)).unwrap();
        assert_eq!(cut2.kept.entries(), &[(mz.vacuum(), 1)]);
    }

    #[test]
    fn svd_discarded_weight_identity_random() {
        let m = builtin("ising").unwrap();
        let sg = m.find_label("sigma").unwrap();
        let psi = m.find_label("psi").unwrap();
        let alpha = ChargeIndex::new(vec![(m.vacuum(), 4), (sg, 3), (psi, 2)]);
        let mat = make_matrix(&m, &alpha, &alpha, Fill::Random(41), true).unwrap();
        let full = svd_truncate(&mat, &TruncationPolicy::exact(usize::MAX)).unwrap();
        let total: f64 = full
            .lambda
            .blocks()
            .map(|(k, b)| {
                let n = b.shape[0];
                m.qdim(k[0]) * (0..n).map(|i| b.at(i, i, 0).norm_sqr()).sum::<f64>()
            })
            .sum();
        let cut = svd_truncate(&mat, &TruncationPolicy::exact(4)).unwrap();
        let keptsum: f64 = cut
            .lambda
            .blocks()
            .map(|(k, b)| {
                let n = b.shape[0];
                m.qdim(k[0]) * (0..n).map(|i| b.at(i, i, 0).norm_sqr()).sum::<f64>()
            })
            .sum();
        assert!((cut.discarded_weight - (total - keptsum)).abs() < 1e-10);
        // norm identity: norm^2(m) = sum d_a s^2
        assert!((mat.norm().powi(2) - total).abs() < 1e-10);
    }

    #[test]
    fn empty_bond_error() {
        let m = fib();
        let alpha = ChargeIndex::single(m.vacuum());
        let mat = make_matrix(&m, &alpha, &alpha, Fill::Zeros, true).unwrap();
        assert!(matches!(
            svd_truncate(&mat, &TruncationPolicy { chi_max: 4, precision: 1e-12 }),
            Err(TensorError::EmptyBond)
        ));
    }

    #[test]
    fn norm_examples() {
        let m = fib();
        let t = tau(&m);
        let v = ChargeIndex::single(m.vacuum());
        let zero = make_matrix(&m, &v, &v, Fill::Zeros, true).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let ident = make_matrix(&m, &v, &v, Fill::Identity, true).unwrap();
        assert!((ident.norm() - 1.0).abs() < 1e-15);
        // lambda = {I: [1/sqrt(2)], tau: [1/sqrt(2 phi)]} has unit norm
        let both = ChargeIndex::new(vec![(m.vacuum(), 1), (t, 1)]);
        let mut lam = make_matrix(&m, &both, &both, Fill::Zeros, true).unwrap();
        *lam.block_mut([m.vacuum(), m.vacuum(), NO_CHARGE]).unwrap().at_mut(0, 0, 0) =
            C64::new(0.5f64.sqrt(), 0.0);
        *lam.block_mut([t, t, NO_CHARGE]).unwrap().at_mut(0, 0, 0) =
            C64::new((2.0 * PHI).sqrt().recip(), 0.0);
        assert!((lam.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixing_normalization_is_an_error() {
        let m = fib();
        let v = ChargeIndex::single(m.vacuum());
        let a = make_matrix(&m, &v, &v, Fill::Identity, true).unwrap();
        let b = make_matrix(&m, &v, &v, Fill::Identity, false).unwrap();
        assert!(matches!(contract(&a, 1, &b, 0), Err(TensorError::NormalizationMixed)));
    }

    #[test]
    fn dump_restore_bit_exact() {
        let m = builtin("ising").unwrap();
        let sg = m.find_label("sigma").unwrap();
        let g = ChargeIndex::new(vec![(m.vacuum(), 2), (sg, 3)]);
        let s = ChargeIndex::new(vec![(m.vacuum(), 1), (sg, 2)]);
        let t3 = make_order3(&m, VertexRole::Splitting, &g, &s, &s, Fill::Random(43), true).unwrap();
        let text = serde_json::to_string(&dump_tensor(&t3)).unwrap();
        let dump: TensorDump = serde_json::from_str(&text).unwrap();
        let back = restore_tensor(&m, &dump).unwrap();
        assert_eq!(t3.blocks().count(), back.blocks().count());
        for (k, b) in t3.blocks() {
            let rb = back.block(*k).unwrap();
            assert_eq!(b.data, rb.data, "bit-exact restore");
        }
    }
}
