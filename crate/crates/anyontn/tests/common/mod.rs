//! Shared experiment builders for the integration suites: graded chain and
//! ladder setups at fixed filling, interacting chains at unit filling, and a
//! bounded ground-state driver.

#![allow(dead_code)]

use anyontn::ham::{self, HubbardLadderParams, LadderTJParams, SiteSpec, TwoSiteOperator};
use anyontn::model::{builtin, product_with_u1, AnyonModel, Charge, U1Window};
use anyontn::mps::{self, AnyonicMps, Boundary, FillingSpec};
use anyontn::obs;
use anyontn::tebd::{self, Stage, TrotterSchedule};
use anyontn::tensor::{ChargeIndex, TruncationPolicy};
use std::collections::BTreeMap;
use std::sync::Arc;

pub fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

pub fn graded(name: &str, window: u32) -> Arc<AnyonModel> {
    let base = builtin(name).unwrap();
    if base.is_product() {
        base
    } else {
        product_with_u1(&base, U1Window::symmetric(window)).unwrap()
    }
}

/// The single-particle charge with the nontrivial anyon part when available.
pub fn occupied_charge(model: &Arc<AnyonModel>) -> Charge {
    model
        .charges()
        .filter(|&c| model.composite_parts(c).map(|p| p.number == 1) == Some(true))
        .max_by_key(|&c| model.composite_parts(c).unwrap().anyon)
        .unwrap()
}

pub fn shifted_site(model: &Arc<AnyonModel>, filling: FillingSpec) -> SiteSpec {
    let occupied = occupied_charge(model);
    let parts = model.composite_parts(occupied).unwrap();
    let vac = model.composite_parts(model.vacuum()).unwrap();
    ham::chain_site(
        model,
        model.composite(vac.anyon, filling.shift(0)).unwrap(),
        model.composite(parts.anyon, filling.shift(1)).unwrap(),
    )
}

fn bresenham(p: u64, q: u64) -> Vec<bool> {
    (0..q).map(|i| (i + 1) * p / q > i * p / q).collect()
}

pub struct Setup {
    pub model: Arc<AnyonModel>,
    pub site: SiteSpec,
    pub hamiltonian: TwoSiteOperator,
    pub mps0: AnyonicMps,
    pub sites: Vec<SiteSpec>,
}

/// Infinite graded chain at filling p/q with hopping t and channel couplings.
pub fn chain_setup(name: &str, p: u64, q: u64, t: f64, j_vac: f64, j_other: f64) -> Setup {
    let model = graded(name, 10);
    let filling = FillingSpec::new(p, q).unwrap();
    let site = shifted_site(&model, filling);
    let hamiltonian = ham::chain_tj(&model, &site, t, j_vac, j_other).unwrap();
    let cell = lcm(q.max(1), 2) as usize;
    let occ = site.nontrivial_charge().unwrap();
    let emp = site.empty_charge().unwrap();
    let assignment: Vec<Charge> = bresenham(p * cell as u64 / q, cell as u64)
        .into_iter()
        .map(|o| if o { occ } else { emp })
        .collect();
    let phys = vec![site.index.clone(); cell];
    let mps0 = mps::init_product(&model, &phys, &assignment, Boundary::Infinite).unwrap();
    Setup { sites: vec![site.clone(); cell], model, site, hamiltonian, mps0 }
}

/// Infinite coarse-grained ladder at per-site filling p/q.
pub fn ladder_setup(name: &str, p: u64, q: u64, params: LadderTJParams) -> Setup {
    let model = graded(name, 12);
    let filling = FillingSpec::new(p, q).unwrap();
    let site = shifted_site(&model, filling);
    let (rung, _) = ham::rung_coarse_grain(&model, &site).unwrap();
    let hamiltonian = ham::ladder_tj_plaquette(&model, &site, params).unwrap();
    let cells = lcm(q, 2);
    // per-rung occupations with mean 2 p / q
    let total = 2 * p * cells / q;
    let mut pattern = vec![0u8; cells as usize];
    let mut remaining = total;
    let mut level = 0;
    while remaining > 0 && level < 2 {
        let put = remaining.min(cells);
        for (k, slot) in bresenham(put, cells).into_iter().enumerate() {
            if slot && pattern[k] == level {
                pattern[k] += 1;
            }
        }
        remaining -= put;
        level += 1;
    }
    let occ1 = site.nontrivial_charge().unwrap();
    let emp1 = site.empty_charge().unwrap();
    let assignment: Vec<Charge> = pattern
        .iter()
        .map(|&n| match n {
            0 => model.fuse(emp1, emp1).unwrap()[0],
            1 => model.fuse(emp1, occ1).unwrap()[0],
            _ => model.fuse(occ1, occ1).unwrap()[0],
        })
        .collect();
    let phys = vec![rung.index.clone(); cells as usize];
    let mps0 = mps::init_product(&model, &phys, &assignment, Boundary::Infinite).unwrap();
    Setup { sites: vec![rung.clone(); cells as usize], model, site: rung, hamiltonian, mps0 }
}

/// Hubbard ladder at fixed per-site filling.
pub fn hubbard_setup(name: &str, p: u64, q: u64, params: HubbardLadderParams) -> Setup {
    let model = graded(name, 12);
    let filling = FillingSpec::new(p, q).unwrap();
    let site = shifted_site(&model, filling);
    let (rung, _) = ham::rung_coarse_grain(&model, &site).unwrap();
    let hamiltonian = ham::hubbard_ladder_plaquette(&model, &site, params).unwrap();
    let cells = lcm(q, 2) as usize;
    let occ1 = site.nontrivial_charge().unwrap();
    let emp1 = site.empty_charge().unwrap();
    let per_rung = 2 * p / q; // integer fillings handled below
    let assignment: Vec<Charge> = if 2 * p % q == 0 {
        let c = match per_rung {
            0 => model.fuse(emp1, emp1).unwrap()[0],
            1 => model.fuse(emp1, occ1).unwrap()[0],
            _ => model.fuse(occ1, occ1).unwrap()[0],
        };
        vec![c; cells]
    } else {
        let mut v = Vec::new();
        for half in bresenham(2 * p * cells as u64 / q - per_rung * cells as u64, cells as u64) {
            let n = per_rung + half as u64;
            v.push(match n {
                0 => model.fuse(emp1, emp1).unwrap()[0],
                1 => model.fuse(emp1, occ1).unwrap()[0],
                _ => model.fuse(occ1, occ1).unwrap()[0],
            });
        }
        v
    };
    let phys = vec![rung.index.clone(); cells];
    let mps0 = mps::init_product(&model, &phys, &assignment, Boundary::Infinite).unwrap();
    Setup { sites: vec![rung.clone(); cells], model, site: rung, hamiltonian, mps0 }
}

/// Unit-filled interacting chain on a plain anyon model.
pub fn golden_setup(name: &str, j_vac: f64, j_other: f64) -> Setup {
    let model = builtin(name).unwrap();
    let a0 = model
        .charges()
        .filter(|&c| c != model.vacuum())
        .max_by(|&a, &b| model.qdim(a).partial_cmp(&model.qdim(b)).unwrap())
        .unwrap();
    let mut occ = BTreeMap::new();
    occ.insert(a0, vec![1]);
    let site = SiteSpec::new(ChargeIndex::single(a0), occ);
    let hamiltonian = ham::golden_chain(&model, &site, j_vac, j_other).unwrap();
    let phys = vec![site.index.clone(); 2];
    let mps0 = mps::init_product(&model, &phys, &[a0, a0], Boundary::Infinite).unwrap();
    Setup { sites: vec![site.clone(); 2], model, site, hamiltonian, mps0 }
}

pub fn stages(list: &[(f64, usize, f64)]) -> TrotterSchedule {
    TrotterSchedule::new(
        list.iter().map(|&(dt, max_sweeps, xi_tol)| Stage { dt, max_sweeps, xi_tol }).collect(),
    )
}

/// Run imaginary-time evolution and return the state with its mean energy
/// per chain site.
pub fn ground(setup: &Setup, schedule: &TrotterSchedule, chi: usize) -> (AnyonicMps, f64) {
    let policy = TruncationPolicy { chi_max: chi, precision: 1e-10 };
    let out = tebd::ground_state(&setup.mps0, &setup.hamiltonian, schedule, &policy, |_| {})
        .unwrap();
    let e = obs::energy_per_site(&out.mps, &setup.hamiltonian).unwrap();
    (out.mps, e)
}
