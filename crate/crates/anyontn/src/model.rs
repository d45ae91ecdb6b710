//! Anyon theories: charge sets, fusion rules, quantum dimensions, F and R
//! symbols, bend factors, and the product construction that grafts a U(1)
//! particle-number grading onto an anyon model.
//!
//! A model is multiplicity-free: every fusion coefficient N_ab^c is 0 or 1.
//! F entries not stored explicitly default to the product of the four vertex
//! indicators, which is 1 exactly when every vertex around the F-move is
//! allowed. R entries default to 1 on valid triples.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

pub const ALGEBRA_TOL: f64 = 1e-12;

/// Index of a charge within its model's charge table.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Charge(pub u32);

impl Charge {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for Charge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("charge {0:?} does not belong to model `{1}`")]
    UnknownCharge(Charge, String),
    #[error("unknown builtin model `{0}`")]
    UnknownBuiltin(String),
    #[error("U(1) window must satisfy min <= 0 <= max and -min >= max, got [{0}, {1}]")]
    BadWindow(i64, i64),
    #[error("fusion of U(1) labels {0} and {1} leaves the retained window")]
    WindowOverflow(i64, i64),
    #[error("model verification failed: {0} residual {1:.3e} exceeds {2:.3e}")]
    VerificationFailed(&'static str, f64, f64),
    #[error("model file: {0}")]
    BadFile(String),
}

/// Retained U(1) labels on virtual indices. Kept symmetric in practice so
/// every charge has its dual inside the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct U1Window {
    pub min_n: i64,
    pub max_n: i64,
}

impl U1Window {
    pub fn symmetric(half_width: u32) -> Self {
        U1Window { min_n: -(half_width as i64), max_n: half_width as i64 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.min_n > 0 || self.max_n < 0 || -self.min_n < self.max_n {
            return Err(ModelError::BadWindow(self.min_n, self.max_n));
        }
        Ok(())
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.min_n && n <= self.max_n
    }
}

/// A charge of a product model, split into its anyonic and U(1) parts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompositeCharge {
    pub anyon: Charge,
    pub number: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ChargeInfo {
    label: String,
    dual: Charge,
    qdim: f64,
    /// For product models: the underlying anyon charge and U(1) label.
    parts: Option<CompositeCharge>,
}

#[derive(Clone, Debug)]
enum ModelKind {
    Base {
        f_entries: HashMap<[u32; 6], C64>,
        r_entries: HashMap<[u32; 3], C64>,
    },
    ProductU1 {
        base: Arc<AnyonModel>,
        window: U1Window,
    },
}

/// Immutable algebraic data of a multiplicity-free anyon theory.
#[derive(Clone, Debug)]
pub struct AnyonModel {
    name: String,
    charges: Vec<ChargeInfo>,
    vacuum: Charge,
    /// fusion[a][b] = sorted outcome charges with N_ab^c = 1.
    fusion: Vec<Vec<Vec<Charge>>>,
    kind: ModelKind,
}

/// Four vertical-bend diagrams; the letter refers to which leg of a trivalent
/// vertex is bent and in which direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BendVariant {
    /// Outgoing left leg bent down.
    I,
    /// Outgoing right leg bent down.
    II,
    /// Incoming left leg bent up.
    III,
    /// Incoming right leg bent up.
    IV,
}

impl AnyonModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn charge_count(&self) -> usize {
        self.charges.len()
    }

    pub fn charges(&self) -> impl Iterator<Item = Charge> + '_ {
        (0..self.charges.len() as u32).map(Charge)
    }

    pub fn vacuum(&self) -> Charge {
        self.vacuum
    }

    pub fn label(&self, a: Charge) -> &str {
        &self.charges[a.idx()].label
    }

    pub fn dual(&self, a: Charge) -> Charge {
        self.charges[a.idx()].dual
    }

    pub fn qdim(&self, a: Charge) -> f64 {
        self.charges[a.idx()].qdim
    }

    /// U(1) label of a composite charge; 0 for plain anyon models.
    pub fn u1_label(&self, a: Charge) -> i64 {
        self.charges[a.idx()].parts.map_or(0, |p| p.number)
    }

    /// Anyon part of a composite charge (the charge itself for base models).
    pub fn composite_parts(&self, a: Charge) -> Option<CompositeCharge> {
        self.charges[a.idx()].parts
    }

    pub fn find_label(&self, label: &str) -> Option<Charge> {
        self.charges
            .iter()
            .position(|c| c.label == label)
            .map(|i| Charge(i as u32))
    }

    /// For product models: the charge with the given parts, if retained.
    pub fn composite(&self, anyon: Charge, number: i64) -> Option<Charge> {
        self.charges
            .iter()
            .position(|c| c.parts == Some(CompositeCharge { anyon, number }))
            .map(|i| Charge(i as u32))
    }

    pub fn is_product(&self) -> bool {
        matches!(self.kind, ModelKind::ProductU1 { .. })
    }

    pub fn check_charge(&self, a: Charge) -> Result<(), ModelError> {
        if a.idx() < self.charges.len() {
            Ok(())
        } else {
            Err(ModelError::UnknownCharge(a, self.name.clone()))
        }
    }

    /// Set of outcomes of a x b. Symmetric in its arguments.
    pub fn fuse(&self, a: Charge, b: Charge) -> Result<&[Charge], ModelError> {
        self.check_charge(a)?;
        self.check_charge(b)?;
        Ok(&self.fusion[a.idx()][b.idx()])
    }

    /// True iff c is an allowed outcome of a x b.
    pub fn is_fusion_vertex(&self, a: Charge, b: Charge, c: Charge) -> Result<bool, ModelError> {
        self.check_charge(c)?;
        Ok(self.fuse(a, b)?.binary_search(&c).is_ok())
    }

    /// True iff c splits into (a, b); identical content to the fusion check.
    pub fn is_splitting_vertex(&self, c: Charge, a: Charge, b: Charge) -> Result<bool, ModelError> {
        self.is_fusion_vertex(a, b, c)
    }

    #[inline]
    fn nv(&self, a: Charge, b: Charge, c: Charge) -> bool {
        self.fusion[a.idx()][b.idx()].binary_search(&c).is_ok()
    }

    /// F-move coefficient (F_d^{abc})_e^f. Zero whenever any of the four
    /// vertices (a,b;e), (e,c;d), (b,c;f), (a,f;d) is disallowed.
    pub fn f_symbol(&self, a: Charge, b: Charge, c: Charge, d: Charge, e: Charge, f: Charge) -> C64 {
        if !(self.nv(a, b, e) && self.nv(e, c, d) && self.nv(b, c, f) && self.nv(a, f, d)) {
            return C64::new(0.0, 0.0);
        }
        match &self.kind {
            ModelKind::Base { f_entries, .. } => f_entries
                .get(&[a.0, b.0, c.0, d.0, e.0, f.0])
                .copied()
                .unwrap_or(C64::new(1.0, 0.0)),
            ModelKind::ProductU1 { base, .. } => {
                let pa = self.charges[a.idx()].parts.unwrap();
                let pb = self.charges[b.idx()].parts.unwrap();
                let pc = self.charges[c.idx()].parts.unwrap();
                let pd = self.charges[d.idx()].parts.unwrap();
                let pe = self.charges[e.idx()].parts.unwrap();
                let pf = self.charges[f.idx()].parts.unwrap();
                base.f_symbol(pa.anyon, pb.anyon, pc.anyon, pd.anyon, pe.anyon, pf.anyon)
            }
        }
    }

    /// Braid factor R_c^{ab}; zero if c is not an outcome of a x b.
    pub fn r_symbol(&self, a: Charge, b: Charge, c: Charge) -> C64 {
        if !self.nv(a, b, c) {
            return C64::new(0.0, 0.0);
        }
        match &self.kind {
            ModelKind::Base { r_entries, .. } => r_entries
                .get(&[a.0, b.0, c.0])
                .copied()
                .unwrap_or(C64::new(1.0, 0.0)),
            ModelKind::ProductU1 { base, .. } => {
                let pa = self.charges[a.idx()].parts.unwrap();
                let pb = self.charges[b.idx()].parts.unwrap();
                let pc = self.charges[c.idx()].parts.unwrap();
                base.r_symbol(pa.anyon, pb.anyon, pc.anyon)
            }
        }
    }

    /// Left-directed "2-2" F-move coefficient,
    /// sqrt(d_e d_f / (d_a d_d)) * conj((F_f^{ceb})_a^d).
    pub fn f22_left(&self, a: Charge, b: Charge, c: Charge, d: Charge, e: Charge, f: Charge) -> C64 {
        let fval = self.f_symbol(c, e, b, f, a, d).conj();
        if fval == C64::new(0.0, 0.0) {
            return fval;
        }
        let w = (self.qdim(e) * self.qdim(f) / (self.qdim(a) * self.qdim(d))).sqrt();
        fval * w
    }

    /// Right-directed "2-2" F-move coefficient,
    /// sqrt(d_e d_f / (d_c d_b)) * (F_f^{aed})_c^b.
    pub fn f22_right(&self, a: Charge, b: Charge, c: Charge, d: Charge, e: Charge, f: Charge) -> C64 {
        let fval = self.f_symbol(a, e, d, f, c, b);
        if fval == C64::new(0.0, 0.0) {
            return fval;
        }
        let w = (self.qdim(e) * self.qdim(f) / (self.qdim(c) * self.qdim(b))).sqrt();
        fval * w
    }

    /// Factor acquired when a leg of a trivalent vertex with charges
    /// (a, b; c) is bent vertically. Composite charges contribute their
    /// anyonic factor; the U(1) part only gates validity.
    pub fn bend_factor(&self, variant: BendVariant, a: Charge, b: Charge, c: Charge) -> C64 {
        if !self.nv(a, b, c) {
            return C64::new(0.0, 0.0);
        }
        let vac = self.vacuum;
        let (da, db, dc) = (self.qdim(a), self.qdim(b), self.qdim(c));
        match variant {
            BendVariant::I => {
                // (F_b^{abar a b})_I^c: the inner vacuum sits in the pair
                // channel of (abar, a), so bending a valid vertex stays valid.
                let f = self.f_symbol(self.dual(a), a, b, b, vac, c);
                f * (da * db / dc).sqrt()
            }
            BendVariant::II => {
                let f = self.f_symbol(a, b, self.dual(b), a, c, vac);
                f * (da * db / dc).sqrt()
            }
            // Bend factors are unit-modulus phases in a unitary theory, so
            // the up-bends that straighten a previous down-bend are the exact
            // conjugates (same-side down-then-up is a trivial isotopy).
            BendVariant::III => self.bend_factor(BendVariant::I, a, b, c).conj(),
            BendVariant::IV => self.bend_factor(BendVariant::II, a, b, c).conj(),
        }
    }

    /// Frobenius-Schur indicator kappa_a = d_a (F_a^{a abar a})_I^I.
    pub fn frobenius_schur(&self, a: Charge) -> C64 {
        let vac = self.vacuum;
        self.qdim(a) * self.f_symbol(a, self.dual(a), a, a, vac, vac)
    }

    /// Charges safe to use as outer labels in consistency checks: on windowed
    /// product models, labels whose four-fold fusion cannot leave the window.
    fn verification_charges(&self) -> Vec<Charge> {
        match &self.kind {
            ModelKind::Base { .. } => self.charges().collect(),
            ModelKind::ProductU1 { window, .. } => {
                let reach = (-window.min_n).min(window.max_n) / 4;
                self.charges()
                    .filter(|&a| self.u1_label(a).abs() <= reach)
                    .collect()
            }
        }
    }

    /// Max deviation of quantum dimensions from the fusion-consistency
    /// relation d_a d_b = sum_c N_ab^c d_c, and (for base models) from the
    /// dominant-eigenvalue characterization of each fusion matrix N_a.
    pub fn verify_qdims(&self) -> f64 {
        let cs = self.verification_charges();
        let mut resid = 0.0f64;
        for &a in &cs {
            for &b in &cs {
                let lhs = self.qdim(a) * self.qdim(b);
                let rhs: f64 = self.fusion[a.idx()][b.idx()].iter().map(|&c| self.qdim(c)).sum();
                resid = resid.max((lhs - rhs).abs());
            }
        }
        if let ModelKind::ProductU1 { base, .. } = &self.kind {
            return resid.max(base.verify_qdims());
        }
        // Dominant eigenvalue of (N_a)_b^c by power iteration.
        let n = self.charges.len();
        for a in self.charges() {
            let mut v = vec![1.0f64; n];
            let mut lambda = 0.0;
            for _ in 0..500 {
                let mut w = vec![0.0f64; n];
                for b in 0..n {
                    for &c in &self.fusion[a.idx()][b] {
                        w[b] += v[c.idx()];
                    }
                }
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    lambda = 0.0;
                    break;
                }
                for x in &mut w {
                    *x /= norm;
                }
                lambda = norm;
                let delta: f64 = v.iter().zip(&w).map(|(x, y)| (x - y).abs()).sum();
                v = w;
                if delta < 1e-15 {
                    break;
                }
            }
            resid = resid.max((lambda - self.qdim(a)).abs());
        }
        resid
    }

    /// Max absolute pentagon residual over all admissible label assignments:
    /// (F_e^{fcd})_g^l (F_e^{abl})_f^k - sum_h (F_g^{abc})_f^h (F_e^{ahd})_g^k (F_k^{bcd})_h^l.
    pub fn verify_pentagon(&self) -> f64 {
        let cs = self.verification_charges();
        let mut resid = 0.0f64;
        for &a in &cs {
            for &b in &cs {
                for &c in &cs {
                    for &d in &cs {
                        for &f in self.fusion[a.idx()][b.idx()].iter() {
                            for &g in self.fusion[f.idx()][c.idx()].iter() {
                                for &e in self.fusion[g.idx()][d.idx()].iter() {
                                    for &l in self.fusion[c.idx()][d.idx()].iter() {
                                        for &k in self.fusion[b.idx()][l.idx()].iter() {
                                            let lhs = self.f_symbol(f, c, d, e, g, l)
                                                * self.f_symbol(a, b, l, e, f, k);
                                            let mut rhs = C64::new(0.0, 0.0);
                                            for &h in self.fusion[b.idx()][c.idx()].iter() {
                                                rhs += self.f_symbol(a, b, c, g, f, h)
                                                    * self.f_symbol(a, h, d, e, g, k)
                                                    * self.f_symbol(b, c, d, k, h, l);
                                            }
                                            resid = resid.max((lhs - rhs).norm());
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        resid
    }

    /// Max absolute hexagon residual over all admissible label assignments:
    /// R_e^{ca} (F_d^{acb})_e^g R_g^{cb} - sum_f (F_d^{cab})_e^f R_d^{cf} (F_d^{abc})_f^g.
    pub fn verify_hexagon(&self) -> f64 {
        let cs = self.verification_charges();
        let mut resid = 0.0f64;
        for &a in &cs {
            for &b in &cs {
                for &c in &cs {
                    for &e in self.fusion[c.idx()][a.idx()].iter() {
                        for &d in self.fusion[e.idx()][b.idx()].iter() {
                            for &g in self.fusion[c.idx()][b.idx()].iter() {
                                let lhs = self.r_symbol(c, a, e)
                                    * self.f_symbol(a, c, b, d, e, g)
                                    * self.r_symbol(c, b, g);
                                let mut rhs = C64::new(0.0, 0.0);
                                for &f in self.fusion[a.idx()][b.idx()].iter() {
                                    rhs += self.f_symbol(c, a, b, d, e, f)
                                        * self.r_symbol(c, f, d)
                                        * self.f_symbol(a, b, c, d, f, g);
                                }
                                resid = resid.max((lhs - rhs).norm());
                            }
                        }
                    }
                }
            }
        }
        resid
    }

    /// Max deviation of each F-matrix (fixed a,b,c,d, indices (e,f)) from
    /// unitarity.
    pub fn verify_f_unitarity(&self) -> f64 {
        let cs = self.verification_charges();
        let mut resid = 0.0f64;
        for &a in &cs {
            for &b in &cs {
                for &c in &cs {
                    for &d in &cs {
                        let es: Vec<Charge> = self.fusion[a.idx()][b.idx()]
                            .iter()
                            .copied()
                            .filter(|&e| self.nv(e, c, d))
                            .collect();
                        let fs: Vec<Charge> = self.fusion[b.idx()][c.idx()]
                            .iter()
                            .copied()
                            .filter(|&f| self.nv(a, f, d))
                            .collect();
                        if es.is_empty() || fs.is_empty() {
                            continue;
                        }
                        // (F^dagger F)_{f f'} = delta_{f f'}
                        for (i, &f1) in fs.iter().enumerate() {
                            for (j, &f2) in fs.iter().enumerate() {
                                let mut acc = C64::new(0.0, 0.0);
                                for &e in &es {
                                    acc += self.f_symbol(a, b, c, d, e, f1).conj()
                                        * self.f_symbol(a, b, c, d, e, f2);
                                }
                                let expect = if i == j { 1.0 } else { 0.0 };
                                resid = resid.max((acc - C64::new(expect, 0.0)).norm());
                            }
                        }
                    }
                }
            }
        }
        resid
    }

    /// Run every verification; error on the first residual above tolerance.
    pub fn verify(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64); 4] = [
            ("qdim", self.verify_qdims()),
            ("f-unitarity", self.verify_f_unitarity()),
            ("pentagon", self.verify_pentagon()),
            ("hexagon", self.verify_hexagon()),
        ];
        for (what, resid) in checks {
            if resid > ALGEBRA_TOL {
                return Err(ModelError::VerificationFailed(what, resid, ALGEBRA_TOL));
            }
        }
        Ok(())
    }

    /// Models are interchangeable when their full algebraic content agrees.
    pub fn same_model(&self, other: &AnyonModel) -> bool {
        if std::ptr::eq(self, other) {
            return true;
        }
        self.name == other.name && self.charges.len() == other.charges.len()
    }
}

fn sorted_outcomes(mut v: Vec<Charge>) -> Vec<Charge> {
    v.sort();
    v.dedup();
    v
}

struct BaseBuilder {
    name: String,
    labels: Vec<String>,
    vacuum: usize,
    dual: Vec<usize>,
    qdim: Vec<f64>,
    fusion: Vec<Vec<Vec<usize>>>,
    f_entries: HashMap<[u32; 6], C64>,
    r_entries: HashMap<[u32; 3], C64>,
}

impl BaseBuilder {
    fn build(self) -> AnyonModel {
        let charges = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| ChargeInfo {
                label: l.clone(),
                dual: Charge(self.dual[i] as u32),
                qdim: self.qdim[i],
                parts: None,
            })
            .collect();
        let fusion = self
            .fusion
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|out| sorted_outcomes(out.into_iter().map(|c| Charge(c as u32)).collect()))
                    .collect()
            })
            .collect();
        AnyonModel {
            name: self.name,
            charges,
            vacuum: Charge(self.vacuum as u32),
            fusion,
            kind: ModelKind::Base { f_entries: self.f_entries, r_entries: self.r_entries },
        }
    }
}

const PHI: f64 = 1.618033988749894848204586834365638118;

fn fibonacci() -> AnyonModel {
    // Charges: 0 = vacuum, 1 = tau.
    let mut f_entries = HashMap::new();
    let s = PHI.sqrt().recip(); // phi^{-1/2}
    let entries = [
        // (F_tau^{tau tau tau})_e^f over e,f in {vac, tau}
        ([1u32, 1, 1, 1, 0, 0], C64::new(1.0 / PHI, 0.0)),
        ([1, 1, 1, 1, 0, 1], C64::new(s, 0.0)),
        ([1, 1, 1, 1, 1, 0], C64::new(s, 0.0)),
        ([1, 1, 1, 1, 1, 1], C64::new(-1.0 / PHI, 0.0)),
    ];
    f_entries.extend(entries);
    let mut r_entries = HashMap::new();
    r_entries.insert([1u32, 1, 0], C64::from_polar(1.0, -4.0 * std::f64::consts::PI / 5.0));
    r_entries.insert([1u32, 1, 1], C64::from_polar(1.0, 3.0 * std::f64::consts::PI / 5.0));
    BaseBuilder {
        name: "fibonacci".into(),
        labels: vec!["I".into(), "tau".into()],
        vacuum: 0,
        dual: vec![0, 1],
        qdim: vec![1.0, PHI],
        fusion: vec![
            vec![vec![0], vec![1]],
            vec![vec![1], vec![0, 1]],
        ],
        f_entries,
        r_entries,
    }
    .build()
}

fn ising() -> AnyonModel {
    // Charges: 0 = vacuum, 1 = sigma, 2 = psi.
    let rt2 = std::f64::consts::SQRT_2;
    let mut f_entries = HashMap::new();
    let inv = 1.0 / rt2;
    let entries = [
        // (F_sigma^{sigma sigma sigma})_e^f over e,f in {vac, psi}
        ([1u32, 1, 1, 1, 0, 0], C64::new(inv, 0.0)),
        ([1, 1, 1, 1, 0, 2], C64::new(inv, 0.0)),
        ([1, 1, 1, 1, 2, 0], C64::new(inv, 0.0)),
        ([1, 1, 1, 1, 2, 2], C64::new(-inv, 0.0)),
        // (F_psi^{sigma psi sigma})_sigma^sigma and (F_sigma^{psi sigma psi})_sigma^sigma
        ([1, 2, 1, 2, 1, 1], C64::new(-1.0, 0.0)),
        ([2, 1, 2, 1, 1, 1], C64::new(-1.0, 0.0)),
    ];
    f_entries.extend(entries);
    let mut r_entries = HashMap::new();
    let pi = std::f64::consts::PI;
    r_entries.insert([1u32, 1, 0], C64::from_polar(1.0, -pi / 8.0));
    r_entries.insert([1u32, 1, 2], C64::from_polar(1.0, 3.0 * pi / 8.0));
    r_entries.insert([1u32, 2, 1], C64::from_polar(1.0, -pi / 2.0));
    r_entries.insert([2u32, 1, 1], C64::from_polar(1.0, -pi / 2.0));
    r_entries.insert([2u32, 2, 0], C64::new(-1.0, 0.0));
    BaseBuilder {
        name: "ising".into(),
        labels: vec!["I".into(), "sigma".into(), "psi".into()],
        vacuum: 0,
        dual: vec![0, 1, 2],
        qdim: vec![1.0, rt2, 1.0],
        fusion: vec![
            vec![vec![0], vec![1], vec![2]],
            vec![vec![1], vec![0, 2], vec![1]],
            vec![vec![2], vec![1], vec![0]],
        ],
        f_entries,
        r_entries,
    }
    .build()
}

fn fermion_z2() -> AnyonModel {
    let mut r_entries = HashMap::new();
    r_entries.insert([1u32, 1, 0], C64::new(-1.0, 0.0));
    BaseBuilder {
        name: "fermion_z2".into(),
        labels: vec!["0".into(), "1".into()],
        vacuum: 0,
        dual: vec![0, 1],
        qdim: vec![1.0, 1.0],
        fusion: vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]],
        f_entries: HashMap::new(),
        r_entries,
    }
    .build()
}

fn trivial() -> AnyonModel {
    BaseBuilder {
        name: "trivial".into(),
        labels: vec!["I".into()],
        vacuum: 0,
        dual: vec![0],
        qdim: vec![1.0],
        fusion: vec![vec![vec![0]]],
        f_entries: HashMap::new(),
        r_entries: HashMap::new(),
    }
    .build()
}

/// Builtin theories. `hardcore_boson` is the vacuum theory graded by a
/// symmetric U(1) window of half-width `n_max` (integer addition, clipped).
pub fn builtin(name: &str) -> Result<Arc<AnyonModel>, ModelError> {
    match name {
        "fibonacci" => Ok(Arc::new(fibonacci())),
        "ising" => Ok(Arc::new(ising())),
        "fermion_z2" => Ok(Arc::new(fermion_z2())),
        "trivial" => Ok(Arc::new(trivial())),
        _ => {
            if let Some(rest) = name.strip_prefix("hardcore_boson") {
                let n_max: u32 = if rest.is_empty() {
                    8
                } else {
                    rest.trim_matches(|c| c == '(' || c == ')')
                        .parse()
                        .map_err(|_| ModelError::UnknownBuiltin(name.to_string()))?
                };
                if n_max < 1 {
                    return Err(ModelError::UnknownBuiltin(name.to_string()));
                }
                product_with_u1(&Arc::new(trivial()), U1Window::symmetric(n_max))
            } else {
                Err(ModelError::UnknownBuiltin(name.to_string()))
            }
        }
    }
}

/// Graft a U(1) particle-number grading onto an anyon theory. Composite
/// charges are (a, n) with n in the window; fusion adds the U(1) labels and
/// silently drops outcomes that leave the window (virtual-leg truncation).
pub fn product_with_u1(base: &Arc<AnyonModel>, window: U1Window) -> Result<Arc<AnyonModel>, ModelError> {
    window.validate()?;
    assert!(!base.is_product(), "cannot grade an already graded model");
    let mut charges = Vec::new();
    for n in window.min_n..=window.max_n {
        for a in base.charges() {
            charges.push(ChargeInfo {
                label: format!("({},{})", base.label(a), n),
                dual: Charge(0), // fixed below
                qdim: base.qdim(a),
                parts: Some(CompositeCharge { anyon: a, number: n }),
            });
        }
    }
    let lookup = |anyon: Charge, n: i64| -> Option<Charge> {
        if !window.contains(n) {
            return None;
        }
        let row = (n - window.min_n) as usize;
        Some(Charge((row * base.charge_count() + anyon.idx()) as u32))
    };
    for info in charges.iter_mut() {
        let p = info.parts.unwrap();
        let d = lookup(base.dual(p.anyon), -p.number)
            .ok_or(ModelError::BadWindow(window.min_n, window.max_n))?;
        info.dual = d;
    }
    let count = charges.len();
    let mut fusion = vec![vec![Vec::new(); count]; count];
    for i in 0..count {
        for j in 0..count {
            let pi = charges[i].parts.unwrap();
            let pj = charges[j].parts.unwrap();
            let mut out = Vec::new();
            for &c in base.fuse(pi.anyon, pj.anyon).unwrap() {
                if let Some(cc) = lookup(c, pi.number + pj.number) {
                    out.push(cc);
                }
            }
            fusion[i][j] = sorted_outcomes(out);
        }
    }
    let vacuum = lookup(base.vacuum(), 0).unwrap();
    Ok(Arc::new(AnyonModel {
        name: format!("{}*u1[{},{}]", base.name(), window.min_n, window.max_n),
        charges,
        vacuum,
        fusion,
        kind: ModelKind::ProductU1 { base: base.clone(), window },
    }))
}

/// On-disk model description: structured text (JSON) with sparse F/R tables.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    name: String,
    charges: Vec<String>,
    vacuum: String,
    dual: Vec<[String; 2]>,
    /// triples (a, b, c) with N_ab^c = 1
    fusion: Vec<[String; 3]>,
    qdim: Vec<(String, f64)>,
    /// entries ((a,b,c,d,e,f), re, im)
    f_symbols: Vec<([String; 6], f64, f64)>,
    /// entries ((a,b,c), re, im)
    r_symbols: Vec<([String; 3], f64, f64)>,
}

/// Load a model description. Fails verification unless `allow_unverified`.
pub fn load_model_file(text: &str, allow_unverified: bool) -> Result<Arc<AnyonModel>, ModelError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ModelError::BadFile(e.to_string()))?;
    let pos = |label: &str| -> Result<usize, ModelError> {
        file.charges
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ModelError::BadFile(format!("unknown charge label `{label}`")))
    };
    let n = file.charges.len();
    let mut dual = vec![usize::MAX; n];
    for [a, b] in &file.dual {
        let (ia, ib) = (pos(a)?, pos(b)?);
        dual[ia] = ib;
    }
    if dual.iter().any(|&d| d == usize::MAX) {
        return Err(ModelError::BadFile("incomplete dual map".into()));
    }
    let mut qdim = vec![f64::NAN; n];
    for (label, d) in &file.qdim {
        qdim[pos(label)?] = *d;
    }
    if qdim.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(ModelError::BadFile("missing or non-positive quantum dimension".into()));
    }
    let mut fusion = vec![vec![Vec::new(); n]; n];
    for [a, b, c] in &file.fusion {
        let (ia, ib, ic) = (pos(a)?, pos(b)?, pos(c)?);
        fusion[ia][ib].push(ic);
    }
    let mut f_entries = HashMap::new();
    for (labels, re, im) in &file.f_symbols {
        let mut key = [0u32; 6];
        for (k, l) in labels.iter().enumerate() {
            key[k] = pos(l)? as u32;
        }
        f_entries.insert(key, C64::new(*re, *im));
    }
    let mut r_entries = HashMap::new();
    for (labels, re, im) in &file.r_symbols {
        let mut key = [0u32; 3];
        for (k, l) in labels.iter().enumerate() {
            key[k] = pos(l)? as u32;
        }
        r_entries.insert(key, C64::new(*re, *im));
    }
    let vacuum = pos(&file.vacuum)?;
    let model = BaseBuilder {
        name: file.name,
        labels: file.charges.clone(),
        vacuum,
        dual,
        qdim,
        fusion,
        f_entries,
        r_entries,
    }
    .build();
    if !allow_unverified {
        model.verify()?;
    }
    Ok(Arc::new(model))
}

/// Serialize a base model into the on-disk description.
pub fn save_model_file(model: &AnyonModel) -> String {
    assert!(!model.is_product(), "only base models have a file form");
    let (f_entries, r_entries) = match &model.kind {
        ModelKind::Base { f_entries, r_entries } => (f_entries, r_entries),
        _ => unreachable!(),
    };
    let lbl = |c: Charge| model.label(c).to_string();
    let mut fusion = Vec::new();
    for a in model.charges() {
        for b in model.charges() {
            for &c in model.fuse(a, b).unwrap() {
                fusion.push([lbl(a), lbl(b), lbl(c)]);
            }
        }
    }
    let mut f_symbols: Vec<_> = f_entries
        .iter()
        .map(|(k, v)| {
            let labels: Vec<String> = k.iter().map(|&i| lbl(Charge(i))).collect();
            (
                [
                    labels[0].clone(),
                    labels[1].clone(),
                    labels[2].clone(),
                    labels[3].clone(),
                    labels[4].clone(),
                    labels[5].clone(),
                ],
                v.re,
                v.im,
            )
        })
        .collect();
    f_symbols.sort_by(|a, b| a.0.cmp(&b.0));
    let mut r_symbols: Vec<_> = r_entries
        .iter()
        .map(|(k, v)| ([lbl(Charge(k[0])), lbl(Charge(k[1])), lbl(Charge(k[2]))], v.re, v.im))
        .collect();
    r_symbols.sort_by(|a, b| a.0.cmp(&b.0));
    let file = ModelFile {
        name: model.name().to_string(),
        charges: model.charges().map(lbl).collect(),
        vacuum: lbl(model.vacuum()),
        dual: model.charges().map(|a| [lbl(a), lbl(model.dual(a))]).collect(),
        fusion,
        qdim: model.charges().map(|a| (lbl(a), model.qdim(a))).collect(),
        f_symbols,
        r_symbols,
    };
    serde_json::to_string_pretty(&file).unwrap()
}
