use adapt_core::autodiff::check::{check_gradients, GradCheck};
use adapt_core::force::{ForceModel, ForceModelConfig};
use adapt_core::loss::{ImportanceParams, LossKind};
use adapt_core::mask::{AttentionMask, MaskSpec};
use adapt_core::nn::{EncoderConfig, Mode};
use adapt_core::norm::NormStats;
use adapt_core::oracle::{label, ToyOracleConfig};
use adapt_core::{Atom, Matrix, ParamStore, PeriodicTable, Result, Structure, Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const PRIMITIVE_TOL: f64 = 1e-4;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Reduces `out` to a scalar through a fixed random weighting so every
/// output entry carries a distinct gradient.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let w = random(r, c, &mut ChaCha8Rng::seed_from_u64(seed));
    let y = tape.mul_const(out, w)?;
    tape.sum(y)
}

fn check<F>(shapes: &[(usize, usize)], seed: u64, f: F) -> GradCheck
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let ids: Vec<_> = shapes
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| store.add(format!("x{i}"), random(r, c, &mut rng)))
        .collect();
    check_gradients(
        &mut store,
        |tape, store| {
            let vars = ids.iter().map(|&id| tape.param(store, id)).collect::<Result<Vec<_>>>()?;
            let out = f(tape, &vars)?;
            if tape.shape(out) == (1, 1) {
                Ok(out)
            } else {
                project(tape, out, seed + 1000)
            }
        },
        H,
        None,
    )
    .unwrap()
}

fn assert_close(name: &str, r: GradCheck) {
    assert!(r.checked > 0, "{name}: nothing checked");
    assert!(
        r.max_relative_error < PRIMITIVE_TOL,
        "{name}: max relative error {:.3e} at {:?}",
        r.max_relative_error,
        r.worst
    );
}

#[test]
fn matmul() {
    assert_close("matmul", check(&[(3, 4), (4, 5)], 1, |t, v| t.matmul(v[0], v[1])));
    assert_close("matmul 1x1", check(&[(1, 1), (1, 1)], 2, |t, v| t.matmul(v[0], v[1])));
    assert_close("matmul_bt", check(&[(3, 4), (5, 4)], 3, |t, v| t.matmul_bt(v[0], v[1])));
}

#[test]
fn elementwise() {
    assert_close("add", check(&[(3, 4), (3, 4)], 4, |t, v| t.add(v[0], v[1])));
    assert_close("add_row", check(&[(3, 4), (1, 4)], 5, |t, v| t.add_row(v[0], v[1])));
    assert_close("scale", check(&[(2, 3)], 6, |t, v| t.scale(v[0], -1.7)));
    let m = random(2, 3, &mut ChaCha8Rng::seed_from_u64(7));
    assert_close("mul_const", check(&[(2, 3)], 8, move |t, v| t.mul_const(v[0], m.clone())));
}

#[test]
fn relu() {
    // Random inputs in (-1, 1) sit far from the kink relative to the step.
    let r = check(&[(4, 5)], 9, |t, v| {
        let y = t.relu(v[0])?;
        t.matmul_bt(y, y)
    });
    assert_close("relu", r);
}

#[test]
fn softmax_and_masked_softmax() {
    assert_close("softmax", check(&[(3, 5)], 10, |t, v| t.softmax_rows(v[0])));
    let mut mask = AttentionMask::padding(3, 5);
    let radius = AttentionMask::radius(
        &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [4.0, 0.0, 0.0]],
        40.0,
    )
    .unwrap();
    mask = mask.and(&radius).unwrap();
    let m = mask.clone();
    assert_close("masked_softmax", check(&[(5, 5)], 11, move |t, v| t.masked_softmax(v[0], &m)));
}

#[test]
fn layer_norm() {
    assert_close(
        "layer_norm",
        check(&[(3, 6), (1, 6), (1, 6)], 12, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
    );
    assert_close(
        "layer_norm width 1",
        check(&[(2, 2), (1, 2), (1, 2)], 13, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
    );
}

#[test]
fn reshaping() {
    assert_close("slice_cols", check(&[(3, 6)], 14, |t, v| t.slice_cols(v[0], 2, 3)));
    assert_close("concat_cols", check(&[(3, 2), (3, 4)], 15, |t, v| t.concat_cols(&[v[0], v[1]])));
    assert_close("flatten", check(&[(3, 4)], 16, |t, v| t.flatten(v[0])));
    assert_close("sum", check(&[(3, 4)], 17, |t, v| t.sum(v[0])));
}

#[test]
fn weighted_sse() {
    let target = random(4, 3, &mut ChaCha8Rng::seed_from_u64(18));
    let r = check(&[(4, 3)], 19, move |t, v| t.weighted_sse(v[0], &target, &[1.0, 2.5, 1.2, 3.0]));
    assert_close("weighted_sse", r);
}

#[test]
fn composite_mlp_depth_three() {
    let r = check(&[(5, 4), (4, 6), (1, 6), (6, 6), (1, 6), (6, 2), (1, 2)], 20, |t, v| {
        let mut x = v[0];
        for (w, b) in [(v[1], v[2]), (v[3], v[4])] {
            x = t.matmul(x, w)?;
            x = t.add_row(x, b)?;
            x = t.relu(x)?;
        }
        let x = t.matmul(x, v[5])?;
        t.add_row(x, v[6])
    });
    assert_close("mlp", r);
}

fn four_atoms() -> Structure {
    let mut s = Structure::new(
        "quad",
        vec![
            Atom::new("Si", [0.0, 0.0, 0.0]),
            Atom::new("Si", [2.3, 0.1, 0.0]),
            Atom::new("Ge", [0.1, 2.4, -0.1]),
            Atom::new("Si", [2.2, 2.3, 0.2]),
        ],
    );
    s.defect_sites = vec![[0.1, 2.4, -0.1]];
    label(&mut s, &ToyOracleConfig::default()).unwrap();
    s
}

fn end_to_end(encoder: EncoderConfig, mask: MaskSpec, per_param: Option<usize>) -> GradCheck {
    let table = PeriodicTable::builtin();
    let s = four_atoms();
    let stats = NormStats::fit(std::slice::from_ref(&s), &table).unwrap();
    let cfg = ForceModelConfig {
        encoder,
        mask,
        normalize: true,
    };
    let mut model = ForceModel::<f64>::new(cfg, stats, 5).unwrap();
    let sample = model
        .prepare_sample(&s, &table, LossKind::WeightedMse, &ImportanceParams::default())
        .unwrap();
    let mut store = model.params.clone();
    check_gradients(
        &mut store,
        |tape, store| {
            model.params.copy_values_from(store);
            model.sample_loss(tape, &sample, &mut Mode::Eval)
        },
        H,
        per_param,
    )
    .unwrap()
}

#[test]
fn tiny_force_model_loss_every_parameter() {
    let enc = EncoderConfig {
        d_model: 8,
        d_ff: 12,
        n_layers: 2,
        n_heads: 2,
        dropout_rate: 0.0,
        embed_hidden: vec![8],
        eps_ln: 1e-5,
    };
    let r = end_to_end(enc.clone(), MaskSpec::Full, None);
    assert!(r.max_relative_error < 1e-3, "{r:?}");
    let r = end_to_end(enc, MaskSpec::Radius { allowed_percent: 60.0 }, None);
    assert!(r.max_relative_error < 1e-3, "{r:?}");
}
