use adapt_core::energy::{EnergyArch, EnergyModel, EnergyModelConfig};
use adapt_core::force::{ForceModel, ForceModelConfig};
use adapt_core::mask::MaskSpec;
use adapt_core::nn::EncoderConfig;
use adapt_core::norm::NormStats;
use adapt_core::{Atom, PeriodicTable, Structure};
use proptest::prelude::*;

const SYMBOLS: [&str; 4] = ["Si", "Ge", "C", "P"];

fn structure() -> impl Strategy<Value = Structure> {
    prop::collection::vec((0..SYMBOLS.len(), [-6.0..6.0f64, -6.0..6.0f64, -6.0..6.0f64]), 1..12).prop_map(|atoms| {
        Structure::new(
            "p",
            atoms.into_iter().map(|(s, p)| Atom::new(SYMBOLS[s], p)).collect(),
        )
    })
}

fn with_permutation() -> impl Strategy<Value = (Structure, Vec<usize>)> {
    structure().prop_flat_map(|s| {
        let order = Just((0..s.len()).collect::<Vec<_>>()).prop_shuffle();
        (Just(s), order)
    })
}

fn encoder() -> EncoderConfig {
    EncoderConfig {
        d_model: 16,
        d_ff: 32,
        n_layers: 2,
        n_heads: 4,
        dropout_rate: 0.1,
        embed_hidden: vec![16],
        eps_ln: 1e-5,
    }
}

fn force_model(mask: MaskSpec) -> ForceModel<f32> {
    let cfg = ForceModelConfig {
        encoder: encoder(),
        mask,
        normalize: false,
    };
    ForceModel::new(cfg, NormStats::identity(), 4).unwrap()
}

fn max_abs_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| (0..3).map(move |c| (x[c] - y[c]).abs()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forces_follow_atom_permutations((s, order) in with_permutation(), radius in prop::bool::ANY) {
        let table = PeriodicTable::builtin();
        let mask = if radius { MaskSpec::Radius { allowed_percent: 30.0 } } else { MaskSpec::Full };
        let model = force_model(mask);
        let f = model.predict_forces(&s, &table).unwrap();
        let fp = model.predict_forces(&s.permuted(&order), &table).unwrap();
        let expected: Vec<_> = order.iter().map(|&i| f[i]).collect();
        prop_assert!(max_abs_diff(&fp, &expected) <= 1e-5);
    }

    #[test]
    fn padding_leaves_real_atoms_alone(s in structure(), extra in 1usize..=32, radius in prop::bool::ANY) {
        let table = PeriodicTable::builtin();
        let mask = if radius { MaskSpec::Radius { allowed_percent: 50.0 } } else { MaskSpec::Full };
        let model = force_model(mask);
        let f = model.predict_forces(&s, &table).unwrap();
        let fp = model.predict_forces_padded(&s, &table, s.len() + extra).unwrap();
        prop_assert_eq!(fp.len(), s.len());
        prop_assert!(max_abs_diff(&f, &fp) <= 1e-6);
    }

    #[test]
    fn energies_ignore_atom_order((s, order) in with_permutation()) {
        let table = PeriodicTable::builtin();
        for arch in EnergyArch::ALL {
            let cfg = EnergyModelConfig {
                arch,
                max_atoms: 12,
                hidden: vec![16, 16],
                decoder: encoder(),
                normalize: false,
                ..Default::default()
            };
            let model = EnergyModel::<f32>::new(cfg, NormStats::identity(), 8).unwrap();
            let e = model.predict_energy(&s, &table).unwrap();
            let ep = model.predict_energy(&s.permuted(&order), &table).unwrap();
            prop_assert!((e - ep).abs() <= 1e-5, "{:?}: {} vs {}", arch, e, ep);
        }
    }
}

#[test]
fn too_few_padding_slots_is_an_error() {
    let table = PeriodicTable::builtin();
    let s = Structure::new("s", vec![Atom::new("Si", [0.0; 3]), Atom::new("Si", [2.0, 0.0, 0.0])]);
    assert!(force_model(MaskSpec::Full).predict_forces_padded(&s, &table, 1).is_err());
}
