use adapt_core::oracle::{generate_dataset, toy_forces_energy, ToyOracleConfig};
use adapt_core::relax::{relax, ForceField, RelaxConfig, ToyOracle, ZeroForces};
use adapt_core::{Atom, Result, Structure, Vec3};

fn energy(s: &Structure, cfg: &ToyOracleConfig) -> f64 {
    toy_forces_energy(s, cfg).unwrap().1
}

/// Largest gap between the analytic forces and central differences of the
/// energy.
fn finite_difference_gap(s: &Structure, cfg: &ToyOracleConfig) -> (f64, f64) {
    let (forces, _) = toy_forces_energy(s, cfg).unwrap();
    let h = 1e-5;
    let mut gap: f64 = 0.0;
    let mut largest: f64 = 0.0;
    for i in 0..s.len() {
        for c in 0..3 {
            let mut plus = s.clone();
            plus.atoms[i].position[c] += h;
            let mut minus = s.clone();
            minus.atoms[i].position[c] -= h;
            let numeric = -(energy(&plus, cfg) - energy(&minus, cfg)) / (2.0 * h);
            gap = gap.max((numeric - forces[i][c]).abs());
            largest = largest.max(forces[i][c].abs());
        }
    }
    (gap, largest)
}

fn configs() -> Vec<ToyOracleConfig> {
    let mut strong = ToyOracleConfig::long_range();
    strong.angular_strength = 3.0;
    vec![ToyOracleConfig::default(), ToyOracleConfig::long_range(), strong]
}

#[test]
fn forces_are_energy_gradients() {
    for cfg in configs() {
        for s in generate_dataset(&cfg, 4, 0.25, 7).unwrap() {
            let (gap, largest) = finite_difference_gap(&s, &cfg);
            assert!(largest > 0.1);
            assert!(gap < 1e-6 * (1.0 + largest), "{}: gap {gap}", s.id);
        }
    }
}

#[test]
fn forces_inside_the_switching_shell_are_gradients() {
    // Bonds stretched into the switched region exercise the switch
    // derivative in both the pair and the angle terms.
    let cfg = ToyOracleConfig::default();
    let d = 0.5 * (cfg.pair.r_on + cfg.pair.cutoff);
    let s = Structure::new(
        "tri",
        vec![
            Atom::new("Si", [0.0, 0.0, 0.0]),
            Atom::new("Ge", [d, 0.1, 0.0]),
            Atom::new("C", [0.3, 2.2, 0.2]),
            Atom::new("Si", [-0.2, -0.3, 2.6]),
        ],
    );
    let (gap, largest) = finite_difference_gap(&s, &cfg);
    assert!(largest > 0.01);
    assert!(gap < 1e-6, "gap {gap}");
}

#[test]
fn forces_sum_to_zero() {
    for cfg in configs() {
        for s in generate_dataset(&cfg, 3, 0.2, 2).unwrap() {
            let (f, _) = toy_forces_energy(&s, &cfg).unwrap();
            for c in 0..3 {
                let net: f64 = f.iter().map(|v| v[c]).sum();
                assert!(net.abs() < 1e-9, "{}: net {net}", s.id);
            }
        }
    }
}

#[test]
fn energy_is_rigid_motion_invariant() {
    let cfg = ToyOracleConfig::long_range();
    let s = generate_dataset(&cfg, 1, 0.2, 5).unwrap().remove(0);
    let e = energy(&s, &cfg);
    let (sin, cos) = 0.7f64.sin_cos();
    let mut moved = s.clone();
    for a in &mut moved.atoms {
        let [x, y, z] = a.position;
        a.position = [cos * x - sin * y + 3.0, sin * x + cos * y - 1.0, z + 0.5];
    }
    assert!((energy(&moved, &cfg) - e).abs() < 1e-9 * e.abs().max(1.0));
}

#[test]
fn perfect_lattice_is_force_free() {
    let cfg = ToyOracleConfig::default();
    let (f, _) = toy_forces_energy(&cfg.perfect_lattice(), &cfg).unwrap();
    assert!(f.iter().flatten().all(|v| v.abs() < 1e-12));
}

#[test]
fn defects_strain_their_neighbourhood() {
    let cfg = ToyOracleConfig::default();
    for s in generate_dataset(&cfg, 10, 0.0, 3).unwrap() {
        let f = s.forces.as_ref().unwrap();
        let near = |p: &Vec3| {
            s.defect_sites
                .iter()
                .any(|d| (0..3).map(|c| (p[c] - d[c]).powi(2)).sum::<f64>() < 25.0)
        };
        let largest = f.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max);
        assert!(largest > 0.0);
        for (a, v) in s.atoms.iter().zip(f) {
            let m = v.iter().map(|x| x * x).sum::<f64>();
            if !near(&a.position) {
                assert!(m < 1e-24, "{}: force far from the defect", s.id);
            }
        }
    }
}

#[test]
fn two_atoms_relax_to_the_equilibrium_separation() {
    let cfg = ToyOracleConfig::default();
    // The well curvature is 2.25 eV/Å^2, so a 0.01 eV/Å stop leaves up to
    // 4e-3 Å of error; 1e-4 eV/Å bounds it by 5e-5 Å.
    let rc = RelaxConfig {
        f_tol: 1e-4,
        ..Default::default()
    };
    for (a, b, start) in [("Si", "Si", 2.0), ("Si", "Si", 2.7), ("Ge", "C", 2.5), ("P", "B", 1.9)] {
        let s = Structure::new("pair", vec![Atom::new(a, [0.0; 3]), Atom::new(b, [start, 0.0, 0.0])]);
        let traj = relax(&s, &ToyOracle(cfg.clone()), &rc).unwrap();
        assert!(traj.converged && traj.steps() <= 500, "{a}-{b}: {} steps", traj.steps());
        let end = &traj.last().structure;
        let d = (0..3)
            .map(|c| (end.atoms[1].position[c] - end.atoms[0].position[c]).powi(2))
            .sum::<f64>()
            .sqrt();
        let want = cfg.equilibrium_distance(a, b).unwrap();
        assert!((d - want).abs() < 1e-3, "{a}-{b}: {d} vs {want}");
    }
}

#[test]
fn relaxation_lowers_the_oracle_energy() {
    let cfg = ToyOracleConfig::default();
    for s in generate_dataset(&cfg, 3, 0.1, 9).unwrap() {
        let traj = relax(&s, &ToyOracle(cfg.clone()), &RelaxConfig::default()).unwrap();
        assert!(traj.converged);
        assert!(traj.last().max_force < 0.01);
        assert!(traj.last().energy.unwrap() < traj.frames[0].energy.unwrap());
    }
}

struct Push(f64);

impl ForceField for Push {
    fn forces(&self, s: &Structure) -> Result<Vec<Vec3>> {
        Ok(vec![[self.0, 0.0, 0.0]; s.len()])
    }
}

#[test]
fn steps_are_clipped() {
    let s = Structure::new("one", vec![Atom::new("Si", [0.0; 3])]);
    let cfg = RelaxConfig {
        max_steps: 3,
        ..Default::default()
    };
    let traj = relax(&s, &Push(100.0), &cfg).unwrap();
    assert!(!traj.converged);
    assert_eq!(traj.frames.len(), 4);
    for (k, frame) in traj.frames.iter().enumerate() {
        assert!((frame.structure.atoms[0].position[0] - 0.2 * k as f64).abs() < 1e-12);
    }
    // Below the clip the step is proportional to the force.
    let traj = relax(&s, &Push(1.0), &cfg).unwrap();
    assert!((traj.last().structure.atoms[0].position[0] - 0.15).abs() < 1e-12);
}

#[test]
fn zero_field_converges_immediately() {
    let s = Structure::new("one", vec![Atom::new("Si", [1.0; 3])]);
    let traj = relax(&s, &ZeroForces, &RelaxConfig::default()).unwrap();
    assert!(traj.converged && traj.trivially_converged());
    assert_eq!(traj.steps(), 0);
}
