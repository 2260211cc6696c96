use adapt::checkpoint::{save_energy, save_force, Checkpoint};
use adapt::core::energy::{EnergyArch, EnergyModel, EnergyModelConfig};
use adapt::core::force::{ForceModel, ForceModelConfig};
use adapt::core::nn::EncoderConfig;
use adapt::core::norm::NormStats;
use adapt::core::oracle::{generate_dataset, ToyOracleConfig};
use adapt::core::{Atom, PeriodicTable, Structure};
use adapt::formats::{
    parse_json_structure, parse_structure, parse_xyz, read_manifest, write_dataset, write_json_structure,
    write_xyz, write_xyz_frames, Format,
};
use adapt::Error;
use proptest::prelude::*;

fn labelled() -> Vec<Structure> {
    generate_dataset(&ToyOracleConfig::default(), 3, 0.1, 11).unwrap()
}

#[test]
fn xyz_round_trip_is_exact() {
    for s in labelled() {
        let back = parse_structure(&write_xyz(&s), Format::Xyz, "mem").unwrap();
        assert_eq!(back, s);
    }
}

#[test]
fn json_round_trip_is_exact() {
    for s in labelled() {
        assert_eq!(parse_json_structure(&write_json_structure(&s), "mem").unwrap(), s);
    }
}

#[test]
fn multi_frame_xyz() {
    let data = labelled();
    let text = write_xyz_frames(&data);
    assert_eq!(parse_xyz(&text, "mem").unwrap(), data);
    assert!(parse_structure(&text, Format::Xyz, "mem").is_err());
}

#[test]
fn hand_written_xyz() {
    let text = "2\nProperties=species:S:1:pos:R:3:forces:R:3 id=\"pair a\" energy=-0.5 defects=\"1,0,0\"\n\
                Si 0 0 0 0.1 0 0\nGe 2.4 0 0 -0.1 0 0\n";
    let s = parse_structure(text, Format::Xyz, "mem").unwrap();
    assert_eq!(s.id, "pair a");
    assert_eq!(s.energy, Some(-0.5));
    assert_eq!(s.defect_sites, vec![[1.0, 0.0, 0.0]]);
    assert_eq!(s.atoms[1], Atom::new("Ge", [2.4, 0.0, 0.0]));
    assert_eq!(s.forces.unwrap()[1], [-0.1, 0.0, 0.0]);

    let bare = parse_structure("1\n\nC 1 2 3\n", Format::Xyz, "mem").unwrap();
    assert!(bare.forces.is_none() && bare.energy.is_none());
}

#[test]
fn malformed_xyz_names_the_line() {
    let cases = [
        ("x\n\n", 1),
        ("2\n\nSi 0 0 0\n", 4),
        ("1\n\nSi 0 zero 0\n", 3),
        ("1\n\nSi 0 0 0 1 2\n", 3),
        ("1\nenergy=abc\nSi 0 0 0\n", 2),
        ("1\n\nSi 0 0 inf\n", 3),
    ];
    for (text, want) in cases {
        match parse_xyz(text, "bad.xyz") {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "bad.xyz");
                assert_eq!(line, want, "{text:?}");
            }
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = labelled();
    for format in [Format::Xyz, Format::Json] {
        let sub = dir.path().join(format.extension());
        let manifest = write_dataset(&sub, &data, format).unwrap();
        assert_eq!(read_manifest(&manifest).unwrap(), data);
    }
    assert!(read_manifest(&dir.path().join("missing.txt")).is_err());
}

fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        d_model: 8,
        d_ff: 16,
        n_layers: 1,
        n_heads: 2,
        dropout_rate: 0.0,
        embed_hidden: vec![8],
        eps_ln: 1e-5,
    }
}

#[test]
fn force_checkpoint_round_trip() {
    let table = PeriodicTable::builtin();
    let data = labelled();
    let stats = NormStats::fit(&data, &table).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ForceModelConfig {
        encoder: tiny_encoder(),
        ..Default::default()
    };
    let f64_model = ForceModel::<f64>::new(cfg.clone(), stats.clone(), 3).unwrap();
    let path = dir.path().join("f64.ckpt");
    save_force(&path, &f64_model).unwrap();
    let back = Checkpoint::read(&path).unwrap().force_model::<f64>().unwrap();
    assert_eq!(back.params, f64_model.params);
    assert_eq!(back.stats, f64_model.stats);
    assert_eq!(
        back.predict_forces(&data[0], &table).unwrap(),
        f64_model.predict_forces(&data[0], &table).unwrap()
    );

    let f32_model = ForceModel::<f32>::new(cfg, stats, 3).unwrap();
    let path = dir.path().join("f32.ckpt");
    save_force(&path, &f32_model).unwrap();
    let back = Checkpoint::read(&path).unwrap().force_model::<f32>().unwrap();
    assert_eq!(back.params, f32_model.params);
    assert!(Checkpoint::read(&path).unwrap().energy_model::<f32>().is_err());
}

#[test]
fn energy_checkpoint_round_trip() {
    let table = PeriodicTable::builtin();
    let data = labelled();
    let dir = tempfile::tempdir().unwrap();
    for arch in EnergyArch::ALL {
        let cfg = EnergyModelConfig {
            arch,
            max_atoms: 70,
            hidden: vec![8, 8],
            decoder: tiny_encoder(),
            ..Default::default()
        };
        let model = EnergyModel::<f64>::new(cfg, NormStats::fit(&data, &table).unwrap(), 5).unwrap();
        let path = dir.path().join("e.ckpt");
        save_energy(&path, &model).unwrap();
        let ckpt = Checkpoint::read(&path).unwrap();
        assert_eq!(ckpt.header.arch, Some(arch));
        let back = ckpt.energy_model::<f64>().unwrap();
        assert_eq!(back.predict_energy(&data[1], &table).unwrap(), model.predict_energy(&data[1], &table).unwrap());
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let model = ForceModel::<f32>::new(
        ForceModelConfig {
            encoder: tiny_encoder(),
            ..Default::default()
        },
        NormStats::identity(),
        1,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_force(&path, &model).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert!(Checkpoint::decode(&bytes).is_ok());
    assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
    assert!(Checkpoint::decode(&[bytes.as_slice(), &[0]].concat()).is_err());
    assert!(Checkpoint::decode(b"not a checkpoint at all").is_err());
    let mut wrong_version = bytes.clone();
    wrong_version[8] = 99;
    assert!(Checkpoint::decode(&wrong_version).is_err());
}

fn arbitrary_structure() -> impl Strategy<Value = Structure> {
    let atom = (prop::sample::select(vec!["Si", "Ge", "C", "B", "P"]), [any::<f64>(), any::<f64>(), any::<f64>()]);
    (
        "[a-z0-9_-]{1,12}",
        prop::collection::vec(atom, 1..8),
        prop::option::of(any::<f64>()),
        prop::collection::vec([any::<f64>(), any::<f64>(), any::<f64>()], 0..3),
        any::<bool>(),
    )
        .prop_filter("finite values", |(_, atoms, e, d, _)| {
            atoms.iter().all(|(_, p)| p.iter().all(|v| v.is_finite()))
                && e.is_none_or(f64::is_finite)
                && d.iter().flatten().all(|v| v.is_finite())
        })
        .prop_map(|(id, atoms, energy, defects, with_forces)| {
            let n = atoms.len();
            let mut s = Structure::new(id, atoms.into_iter().map(|(sym, p)| Atom::new(sym, p)).collect());
            s.energy = energy;
            s.defect_sites = defects;
            if with_forces {
                s.forces = Some((0..n).map(|i| [i as f64 * 0.1, -1e-300, 7e12]).collect());
            }
            s
        })
}

proptest! {
    #[test]
    fn any_structure_survives_both_formats(s in arbitrary_structure()) {
        prop_assert_eq!(&parse_structure(&write_xyz(&s), Format::Xyz, "mem").unwrap(), &s);
        prop_assert_eq!(&parse_json_structure(&write_json_structure(&s), "mem").unwrap(), &s);
    }
}
