//! Analytic potential on defected simple-cubic lattices, used to label
//! synthetic datasets with exact forces and energies.
//!
//! Pair energy between atoms `i` and `j` at distance `d`:
//!
//! ```text
//! phi(d) = eps_ij [(1 - exp(-alpha (d - r0_ij)))^2 - 1] s(d) + c (q_i + q_j) / d
//! ```
//!
//! `s` is a quintic switch from 1 at `r_on_ij` to 0 at `cutoff_ij`; because
//! `r_on >= r0` the pair minimum sits exactly at `r0_ij` when `c = 0`.
//! Species enter through a size factor (scaling every length), a strength
//! factor (geometric mean on the well depth) and a long-range charge `q`.
//!
//! A bond-angle term `lambda g(a) g(b) (cos t (1 + cos t))^2` over every
//! pair of bonds `a`, `b` meeting at an atom, with `g` the same switch,
//! holds the cubic lattice in shape: pair forces alone would let it shear
//! and collapse. With the default cutoff only nearest neighbours are bonded,
//! so the perfect lattice at `lattice_constant = r0` is force-free.
//! Boundaries are open.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::{Atom, Structure, Vec3};

/// Distances below this are treated as overlapping atoms.
pub const MIN_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairParams {
    /// Equilibrium distance between two host atoms, Å.
    pub r0: f64,
    /// Well depth, eV.
    pub depth: f64,
    /// Well stiffness, 1/Å.
    pub alpha: f64,
    /// Start of the switching region, Å.
    pub r_on: f64,
    /// Interaction vanishes beyond this distance, Å.
    pub cutoff: f64,
}

impl Default for PairParams {
    fn default() -> Self {
        PairParams {
            r0: 2.35,
            depth: 0.5,
            alpha: 1.5,
            r_on: 2.75,
            cutoff: 3.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesParams {
    pub symbol: String,
    pub size: f64,
    pub strength: f64,
    /// Weight of the species in the long-range term.
    pub charge: f64,
}

impl SpeciesParams {
    pub fn new(symbol: &str, size: f64, strength: f64, charge: f64) -> Self {
        SpeciesParams {
            symbol: symbol.to_string(),
            size,
            strength,
            charge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// A dopant replaces an interior lattice atom.
    Substitutional,
    /// A dopant sits at the centre of a lattice cube.
    Interstitial,
    /// A substitutional dopant plus an interstitial dopant in a cube that
    /// has the substituted site as a corner.
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectSpec {
    /// Each structure draws one kind uniformly from this list; empty means
    /// a defect-free lattice.
    pub kinds: Vec<DefectKind>,
    /// Dopant species, drawn uniformly.
    pub dopants: Vec<String>,
}

impl Default for DefectSpec {
    fn default() -> Self {
        DefectSpec {
            kinds: vec![DefectKind::Substitutional, DefectKind::Interstitial, DefectKind::Complex],
            dopants: ["Ge", "C", "B", "P"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyOracleConfig {
    pub host: String,
    /// Lattice sites per edge of the cubic cell.
    pub repeats: usize,
    /// Simple-cubic lattice constant, Å.
    pub lattice_constant: f64,
    pub pair: PairParams,
    pub species: Vec<SpeciesParams>,
    pub defects: DefectSpec,
    /// Strength `c` of the `1/d` term, eV·Å. Zero disables it.
    pub long_range_coefficient: f64,
    /// Bond-angle stiffness `lambda`, eV, scaled by the central atom's
    /// strength. Zero disables the angular term.
    pub angular_strength: f64,
}

impl Default for ToyOracleConfig {
    fn default() -> Self {
        ToyOracleConfig {
            host: "Si".into(),
            repeats: 4,
            lattice_constant: 2.35,
            pair: PairParams::default(),
            species: vec![
                SpeciesParams::new("Si", 1.0, 1.0, 0.0),
                SpeciesParams::new("Ge", 1.04, 0.9, 1.0),
                SpeciesParams::new("C", 0.84, 1.4, 1.0),
                SpeciesParams::new("B", 0.9, 1.2, 1.0),
                SpeciesParams::new("P", 0.98, 1.1, 1.0),
            ],
            defects: DefectSpec::default(),
            long_range_coefficient: 0.0,
            angular_strength: 1.0,
        }
    }
}

impl ToyOracleConfig {
    /// Default lattice and species with the long-range term switched on.
    pub fn long_range() -> Self {
        ToyOracleConfig {
            long_range_coefficient: 2.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let p = &self.pair;
        if !(self.lattice_constant > 0.0) || self.repeats < 2 {
            return bad(format!(
                "lattice needs a positive constant and at least 2 repeats, got {} and {}",
                self.lattice_constant, self.repeats
            ));
        }
        if !(p.r0 > 0.0 && p.depth > 0.0 && p.alpha > 0.0 && p.r0 <= p.r_on && p.r_on < p.cutoff) {
            return bad(format!("pair parameters need 0 < r0 <= r_on < cutoff, got {p:?}"));
        }
        if !(self.angular_strength >= 0.0 && self.angular_strength.is_finite()) {
            return bad(format!("angular strength must be non-negative, got {}", self.angular_strength));
        }
        for s in &self.species {
            if !(s.size > 0.0 && s.strength > 0.0 && s.charge.is_finite()) {
                return bad(format!("species {} needs positive size and strength", s.symbol));
            }
        }
        self.species(&self.host)?;
        for d in &self.defects.dopants {
            self.species(d)?;
        }
        if !self.defects.kinds.is_empty() && self.defects.dopants.is_empty() {
            return bad("defect kinds given without dopants".into());
        }
        Ok(())
    }

    fn species(&self, symbol: &str) -> Result<&SpeciesParams> {
        self.species
            .iter()
            .find(|s| s.symbol == symbol)
            .ok_or_else(|| Error::UnknownElement(symbol.to_string()))
    }

    /// Equilibrium separation of an isolated pair of species `a` and `b`
    /// when the long-range term is off.
    pub fn equilibrium_distance(&self, a: &str, b: &str) -> Result<f64> {
        let (sa, sb) = (self.species(a)?, self.species(b)?);
        Ok(self.pair.r0 * 0.5 * (sa.size + sb.size))
    }

    /// Every host site of the defect-free lattice.
    pub fn lattice_sites(&self) -> Vec<Vec3> {
        let a = self.lattice_constant;
        let r = self.repeats;
        let mut sites = Vec::with_capacity(r * r * r);
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    sites.push([i as f64 * a, j as f64 * a, k as f64 * a]);
                }
            }
        }
        sites
    }

    pub fn perfect_lattice(&self) -> Structure {
        let atoms = self
            .lattice_sites()
            .into_iter()
            .map(|p| Atom::new(self.host.clone(), p))
            .collect();
        Structure::new("lattice", atoms)
    }
}

struct Pair {
    r0: f64,
    depth: f64,
    alpha: f64,
    r_on: f64,
    cutoff: f64,
    lr: f64,
}

/// Quintic switch from 1 at `r_on` to 0 at `cutoff`, and its derivative.
fn switch(d: f64, r_on: f64, cutoff: f64) -> (f64, f64) {
    if d <= r_on {
        (1.0, 0.0)
    } else if d >= cutoff {
        (0.0, 0.0)
    } else {
        let w = cutoff - r_on;
        let t = (d - r_on) / w;
        let t2 = t * t;
        (
            1.0 - t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
            -30.0 * t2 * (1.0 - t) * (1.0 - t) / w,
        )
    }
}

impl Pair {
    /// `(phi(d), phi'(d))`.
    fn eval(&self, d: f64) -> (f64, f64) {
        let (mut e, mut de) = (0.0, 0.0);
        if d < self.cutoff {
            let x = Float::exp(-self.alpha * (d - self.r0));
            let morse = self.depth * ((1.0 - x) * (1.0 - x) - 1.0);
            let dmorse = 2.0 * self.depth * self.alpha * (1.0 - x) * x;
            let (s, ds) = switch(d, self.r_on, self.cutoff);
            e += morse * s;
            de += dmorse * s + morse * ds;
        }
        if self.lr != 0.0 {
            e += self.lr / d;
            de -= self.lr / (d * d);
        }
        (e, de)
    }
}

struct Bond {
    j: usize,
    v: Vec3,
    d: f64,
    g: f64,
    dg: f64,
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Exact forces (eV/Å, `-dE/dr`) and energy (eV) of `s`.
pub fn toy_forces_energy(s: &Structure, cfg: &ToyOracleConfig) -> Result<(Vec<Vec3>, f64)> {
    let n = s.len();
    let species = s
        .atoms
        .iter()
        .map(|a| cfg.species(&a.symbol))
        .collect::<Result<Vec<_>>>()?;
    let mut forces = vec![[0.0; 3]; n];
    let mut energy = 0.0;
    let p = &cfg.pair;
    // Bonds within the switched cutoff, seen from each end.
    let mut bonds: Vec<Vec<Bond>> = (0..n).map(|_| Vec::new()).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (ri, rj) = (s.atoms[i].position, s.atoms[j].position);
            let v = [ri[0] - rj[0], ri[1] - rj[1], ri[2] - rj[2]];
            let d = Float::sqrt(dot(&v, &v));
            if !(d >= MIN_DISTANCE) {
                return Err(Error::OverlappingAtoms { i, j, distance: d });
            }
            let scale = 0.5 * (species[i].size + species[j].size);
            let pair = Pair {
                r0: p.r0 * scale,
                depth: p.depth * Float::sqrt(species[i].strength * species[j].strength),
                alpha: p.alpha / scale,
                r_on: p.r_on * scale,
                cutoff: p.cutoff * scale,
                lr: cfg.long_range_coefficient * (species[i].charge + species[j].charge),
            };
            let (e, de) = pair.eval(d);
            energy += e;
            for c in 0..3 {
                let f = -de * v[c] / d;
                forces[i][c] += f;
                forces[j][c] -= f;
            }
            if cfg.angular_strength != 0.0 && d < pair.cutoff {
                let (g, dg) = switch(d, pair.r_on, pair.cutoff);
                bonds[i].push(Bond { j, v: v.map(|x| -x), d, g, dg });
                bonds[j].push(Bond { j: i, v, d, g, dg });
            }
        }
    }
    // Bond-angle term: lambda_i g(a) g(b) h(cos theta), h(c) = (c (1 + c))^2,
    // which vanishes at 90 and 180 degrees.
    for (i, list) in bonds.iter().enumerate() {
        let lambda = cfg.angular_strength * species[i].strength;
        for (x, a) in list.iter().enumerate() {
            for b in &list[x + 1..] {
                let c = dot(&a.v, &b.v) / (a.d * b.d);
                let u = c * (1.0 + c);
                let h = u * u;
                let dh = 2.0 * u * (1.0 + 2.0 * c);
                energy += lambda * a.g * b.g * h;
                // dE/dx_j and dE/dx_k; dE/dx_i balances them.
                let ka = lambda * a.dg * b.g * h / a.d;
                let kb = lambda * a.g * b.dg * h / b.d;
                let kc = lambda * a.g * b.g * dh;
                for t in 0..3 {
                    let dc_a = b.v[t] / (a.d * b.d) - c * a.v[t] / (a.d * a.d);
                    let dc_b = a.v[t] / (a.d * b.d) - c * b.v[t] / (b.d * b.d);
                    let ga = ka * a.v[t] + kc * dc_a;
                    let gb = kb * b.v[t] + kc * dc_b;
                    forces[a.j][t] -= ga;
                    forces[b.j][t] -= gb;
                    forces[i][t] += ga + gb;
                }
            }
        }
    }
    Ok((forces, energy))
}

/// Fills the force and energy labels of `s`.
pub fn label(s: &mut Structure, cfg: &ToyOracleConfig) -> Result<()> {
    let (f, e) = toy_forces_energy(s, cfg)?;
    s.forces = Some(f);
    s.energy = Some(e);
    Ok(())
}

/// Perfect lattice with one defect; the placement is recorded in
/// `defect_sites`.
fn place_defect(cfg: &ToyOracleConfig, kind: DefectKind, dopant: &str, rng: &mut ChaCha8Rng) -> Structure {
    let r = cfg.repeats;
    let a = cfg.lattice_constant;
    let mut s = cfg.perfect_lattice();
    // Interior indices where possible so the defect is surrounded.
    let interior = |rng: &mut ChaCha8Rng| -> usize {
        if r > 2 {
            rng.random_range(1..r - 1)
        } else {
            rng.random_range(0..r)
        }
    };
    let substitute = |s: &mut Structure, rng: &mut ChaCha8Rng| -> [usize; 3] {
        let idx = [interior(rng), interior(rng), interior(rng)];
        let site = (idx[0] * r + idx[1]) * r + idx[2];
        s.atoms[site].symbol = dopant.to_string();
        s.defect_sites.push(s.atoms[site].position);
        idx
    };
    let insert = |s: &mut Structure, cell: [usize; 3]| {
        let p = cell.map(|c| (c as f64 + 0.5) * a);
        s.atoms.push(Atom::new(dopant, p));
        s.defect_sites.push(p);
    };
    match kind {
        DefectKind::Substitutional => {
            substitute(&mut s, rng);
        }
        DefectKind::Interstitial => {
            let cell = [0; 3].map(|_| rng.random_range(0..r - 1));
            insert(&mut s, cell);
        }
        DefectKind::Complex => {
            let idx = substitute(&mut s, rng);
            // A cube with the substituted site as one of its corners.
            let cell = idx.map(|i| {
                let lo = i.saturating_sub(1);
                let hi = i.min(r - 2);
                rng.random_range(lo..=hi)
            });
            insert(&mut s, cell);
        }
    }
    s
}

/// `count` labelled structures: a defect drawn from `cfg.defects`, every
/// coordinate jittered by `U(-jitter, jitter)` Å. Ids are
/// `toy-<seed>-<index>`.
pub fn generate_dataset(cfg: &ToyOracleConfig, count: usize, jitter: f64, seed: u64) -> Result<Vec<Structure>> {
    cfg.validate()?;
    if !(jitter >= 0.0) {
        return Err(Error::InvalidConfig(format!("jitter must be non-negative, got {jitter}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let mut s = if cfg.defects.kinds.is_empty() {
            cfg.perfect_lattice()
        } else {
            let kind = cfg.defects.kinds[rng.random_range(0..cfg.defects.kinds.len())];
            let dopant = cfg.defects.dopants[rng.random_range(0..cfg.defects.dopants.len())].clone();
            place_defect(cfg, kind, &dopant, &mut rng)
        };
        if jitter > 0.0 {
            for atom in &mut s.atoms {
                for c in &mut atom.position {
                    *c += rng.random_range(-jitter..=jitter);
                }
            }
        }
        s.id = format!("toy-{seed}-{index:05}");
        label(&mut s, cfg)?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(d: f64) -> Structure {
        Structure::new("pair", vec![Atom::new("Si", [0.0; 3]), Atom::new("Si", [d, 0.0, 0.0])])
    }

    #[test]
    fn pair_at_equilibrium_is_force_free() {
        let cfg = ToyOracleConfig::default();
        let (f, e) = toy_forces_energy(&pair(cfg.pair.r0), &cfg).unwrap();
        for row in f {
            for v in row {
                assert!(v.abs() < 1e-10);
            }
        }
        assert!((e + cfg.pair.depth).abs() < 1e-12);
    }

    #[test]
    fn overlapping_atoms_rejected() {
        let cfg = ToyOracleConfig::default();
        assert!(matches!(
            toy_forces_energy(&pair(0.0), &cfg),
            Err(Error::OverlappingAtoms { i: 0, j: 1, .. })
        ));
    }

    #[test]
    fn beyond_cutoff_nothing_acts() {
        let cfg = ToyOracleConfig::default();
        let (f, e) = toy_forces_energy(&pair(cfg.pair.cutoff + 0.01), &cfg).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(f, vec![[0.0; 3]; 2]);
    }

    #[test]
    fn unknown_species_rejected() {
        let cfg = ToyOracleConfig::default();
        let s = Structure::new("x", vec![Atom::new("Au", [0.0; 3]), Atom::new("Si", [2.0, 0.0, 0.0])]);
        assert!(matches!(toy_forces_energy(&s, &cfg), Err(Error::UnknownElement(_))));
    }

    #[test]
    fn dataset_is_deterministic_and_sized() {
        let cfg = ToyOracleConfig::default();
        let a = generate_dataset(&cfg, 6, 0.1, 3).unwrap();
        let b = generate_dataset(&cfg, 6, 0.1, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        for s in &a {
            assert!(s.len() == 64 || s.len() == 65);
            assert!(!s.defect_sites.is_empty());
            assert_eq!(s.forces.as_ref().unwrap().len(), s.len());
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ToyOracleConfig::default();
        cfg.pair.cutoff = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ToyOracleConfig::default();
        cfg.defects.dopants.push("Xe".into());
        assert!(cfg.validate().is_err());
        assert!(ToyOracleConfig::long_range().validate().is_ok());
    }
}
