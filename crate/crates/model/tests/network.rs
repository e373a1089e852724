mod common;

use ddot_core::numtok::{TokenGrid, PAD};
use ddot_model::{Decoder, Example, Model, ModelConfig};

fn permute_steps(grid: &TokenGrid, order: &[usize]) -> TokenGrid {
    let row = grid.width * 3;
    let mut tokens = Vec::with_capacity(grid.tokens.len());
    for &s in order {
        tokens.extend_from_slice(&grid.tokens[s * row..(s + 1) * row]);
    }
    TokenGrid {
        tokens,
        mask: order.iter().map(|&s| grid.mask[s]).collect(),
        ..grid.clone()
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn logits_have_expected_shapes() {
    let cfg = common::tiny_config();
    let model = Model::<f64>::new(cfg.clone(), 1).unwrap();
    let ex = &common::examples(&cfg, 1, 8, 4, 10)[0];
    let (ode, der) = model.forward(ex).unwrap();
    assert_eq!(ode.len(), (ex.ode.len() - 1) * model.vocab_len());
    assert_eq!(der.len(), (ex.der.len() - 1) * model.vocab_len());
    let (enc, _) = model.encode(&ex.grid).unwrap();
    assert_eq!(enc.steps, 8);
    assert_eq!(enc.states.len(), 8 * cfg.width);
}

#[test]
fn decoder_is_causal() {
    let cfg = common::tiny_config();
    let model = Model::<f64>::new(cfg.clone(), 2).unwrap();
    let ex = &common::examples(&cfg, 1, 8, 4, 20)[0];
    let (enc, _) = model.encode(&ex.grid).unwrap();
    let v = model.vocab_len();
    let input = &ex.ode[..ex.ode.len() - 1];
    let (base, _) = model.decode_logits(Decoder::Ode, &enc, input).unwrap();
    for j in 1..input.len() {
        let mut changed = input.to_vec();
        changed[j] = if changed[j] == 7 { 8 } else { 7 };
        let (other, _) = model.decode_logits(Decoder::Ode, &enc, &changed).unwrap();
        assert_eq!(&base[..j * v], &other[..j * v], "position {j} leaked backwards");
        assert_ne!(&base[j * v..], &other[j * v..]);
    }
}

#[test]
fn positions_break_permutation_symmetry() {
    let ex = &common::examples(&common::tiny_config(), 1, 8, 4, 30)[0];
    let order = [3, 1, 7, 0, 5, 2, 6, 4];
    let permuted = permute_steps(&ex.grid, &order);
    let logits = |model: &Model<f64>, grid: &TokenGrid| {
        let (enc, _) = model.encode(grid).unwrap();
        model.decode_logits(Decoder::Ode, &enc, &ex.ode[..ex.ode.len() - 1]).unwrap().0
    };
    let plain = Model::<f64>::new(
        ModelConfig {
            positional_encoding: false,
            ..common::tiny_config()
        },
        4,
    )
    .unwrap();
    assert!(max_abs_diff(&logits(&plain, &ex.grid), &logits(&plain, &permuted)) < 1e-10);
    let with_pe = Model::<f64>::new(common::tiny_config(), 4).unwrap();
    assert!(max_abs_diff(&logits(&with_pe, &ex.grid), &logits(&with_pe, &permuted)) > 1e-6);
}

#[test]
fn zeroed_output_layer_gives_uniform_loss() {
    let cfg = common::tiny_config();
    let mut model = Model::<f64>::new(cfg.clone(), 5).unwrap();
    for name in ["ode.out.w", "ode.out.b", "der.out.w", "der.out.b"] {
        model.params.get_mut(name).unwrap().iter_mut().for_each(|v| *v = 0.0);
    }
    let batch = common::examples(&cfg, 3, 8, 4, 40);
    let loss = model.batch_loss(&batch, 1.0, 1.0).unwrap();
    let ln_v = (model.vocab_len() as f64).ln();
    assert!((loss.rec.unwrap().mean_loss() - ln_v).abs() < 1e-12);
    assert!((loss.der.unwrap().mean_loss() - ln_v).abs() < 1e-12);
    assert!((loss.total - 2.0 * ln_v).abs() < 1e-12);
}

#[test]
fn zero_derivative_weight_reduces_to_reconstruction_loss() {
    let cfg = common::tiny_config();
    let model = Model::<f64>::new(cfg.clone(), 6).unwrap();
    let batch = common::examples(&cfg, 3, 8, 4, 50);
    let both = model.batch_loss(&batch, 1.0, 1.0).unwrap();
    let rec_only = model.batch_loss(&batch, 1.0, 0.0).unwrap();
    assert!(rec_only.der.is_none());
    assert_eq!(rec_only.total, both.rec.unwrap().mean_loss());
    let (_, g) = model.batch_gradients(&batch, 1.0, 0.0).unwrap();
    for (spec, t) in g.tensors() {
        if spec.name.starts_with("der.") {
            assert!(t.iter().all(|&v| v == 0.0), "{}", spec.name);
        }
    }
}

#[test]
fn padding_targets_do_not_change_the_loss() {
    let cfg = common::tiny_config();
    let model = Model::<f64>::new(cfg.clone(), 8).unwrap();
    let batch = common::examples(&cfg, 2, 8, 4, 60);
    let padded: Vec<Example> = batch
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.ode.extend([PAD; 5]);
            e.der.extend([PAD; 3]);
            e
        })
        .collect();
    let a = model.batch_loss(&batch, 1.0, 1.0).unwrap();
    let b = model.batch_loss(&padded, 1.0, 1.0).unwrap();
    assert_eq!(a.rec.unwrap().count, b.rec.unwrap().count);
    assert!((a.total - b.total).abs() < 1e-12);
}

#[test]
fn rejects_inputs_outside_limits() {
    let cfg = common::tiny_config();
    let model = Model::<f64>::new(cfg.clone(), 9).unwrap();
    let ex = &common::examples(&cfg, 1, 8, 4, 70)[0];
    let (enc, _) = model.encode(&ex.grid).unwrap();
    let long = vec![1; cfg.max_ode_len + 1];
    assert!(model.decode_logits(Decoder::Ode, &enc, &long).is_err());
    assert!(model.decode_logits(Decoder::Ode, &enc, &[u32::MAX]).is_err());
}

#[test]
fn f32_model_tracks_f64() {
    let cfg = common::tiny_config();
    let m64 = Model::<f64>::new(cfg.clone(), 11).unwrap();
    let m32: Model<f32> = m64.cast();
    let batch = common::examples(&cfg, 2, 8, 4, 80);
    let a = m64.batch_loss(&batch, 1.0, 1.0).unwrap().total;
    let b = m32.batch_loss(&batch, 1.0, 1.0).unwrap().total;
    assert!((a - b).abs() < 1e-4 * a.abs(), "{a} vs {b}");
}
