use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ltl::{parse, Alphabet};
use crate::tensor::Matrix;

fn tiny() -> EncoderConfig {
    EncoderConfig {
        layers: 1,
        heads: 2,
        d_model: 8,
        d_ff: 16,
        d_out: 4,
    }
}

fn alphabet() -> Alphabet {
    Alphabet::new(["a", "b", "c", "d"]).unwrap()
}

fn formula_encoder(config: EncoderConfig, seed: u64) -> FormulaEncoder {
    let vocab = TokenVocab::new(&alphabet());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EncoderParams::for_tokens(config, vocab.len(), &mut rng).unwrap();
    FormulaEncoder { vocab, params }
}

fn ids(enc: &FormulaEncoder, text: &str) -> Vec<usize> {
    enc.vocab.encode(&parse(text, &alphabet()).unwrap()).unwrap()
}

#[test]
fn positional_embedding_values() {
    let pe = positional_embedding(8, 16);
    assert_eq!(pe.row(0).iter().step_by(2).copied().collect::<Vec<_>>(), vec![0.0; 8]);
    assert_eq!(pe.row(0).iter().skip(1).step_by(2).copied().collect::<Vec<_>>(), vec![1.0; 8]);
    assert!(pe.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    // position 3, pair i = 2: angle 3 / 10000^(4/16) = 0.3
    assert!((pe.get(3, 4) - 0.3f64.sin()).abs() < 1e-15);
    assert!((pe.get(3, 5) - 0.3f64.cos()).abs() < 1e-15);
}

#[test]
fn attention_examples() {
    let one = Matrix::from_vec(1, 2, vec![0.3, -0.2]);
    let v = Matrix::from_vec(1, 2, vec![4.0, 5.0]);
    let (out, w) = attention(&one, &one, &v, &[false]).unwrap();
    assert_eq!(w.data, vec![1.0]);
    assert_eq!(out.data, vec![4.0, 5.0]);

    let q = Matrix::from_vec(1, 1, vec![1.0]);
    let k = Matrix::from_vec(2, 1, vec![2.0, 2.0]);
    let v = Matrix::from_vec(2, 1, vec![1.0, 3.0]);
    let (out, w) = attention(&q, &k, &v, &[false, false]).unwrap();
    assert_eq!(w.data, vec![0.5, 0.5]);
    assert_eq!(out.data, vec![2.0]);

    let q = Matrix::from_vec(2, 1, vec![1.0, 0.0]);
    let k = Matrix::from_vec(2, 1, vec![1.0, -1.0]);
    let v = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
    let (_, w) = attention(&q, &k, &v, &[false, false]).unwrap();
    // softmax([1, -1]) = [1 / (1 + e^-2), e^-2 / (1 + e^-2)]
    assert!((w.get(0, 0) - 0.880_797_077_977_882_4).abs() < 1e-12);
    assert!((w.get(0, 1) - 0.119_202_922_022_117_6).abs() < 1e-12);
    assert_eq!(w.row(1), [0.5, 0.5]);

    assert!(matches!(
        attention(&q, &Matrix::zeros(2, 3), &v, &[false, false]),
        Err(EncoderError::ShapeMismatch(_))
    ));
}

#[test]
fn output_shapes_and_masking() {
    let enc = formula_encoder(EncoderConfig::default(), 1);
    let seqs = vec![ids(&enc, "!c U (a & (!d U b))"), ids(&enc, "F a")];
    let out = enc.encode_batch(&seqs).unwrap();
    assert_eq!(out.len(), 2);
    for e in &out {
        assert_eq!(e.output.shape(), (10, 32));
        assert_eq!(e.pooled.len(), 16);
    }
    let short = &out[1];
    for heads in &short.attention.layers {
        for m in heads {
            for q in 0..m.rows {
                let row = m.row(q);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&w| w >= 0.0));
                assert!(row[3..].iter().all(|&w| w == 0.0), "pad keys must get exactly 0");
            }
        }
    }
}

#[test]
fn distinct_formulas_pool_differently() {
    let enc = formula_encoder(EncoderConfig::default(), 2);
    let a = enc.params.forward_tokens(&ids(&enc, "F a")).unwrap();
    let b = enc.params.forward_tokens(&ids(&enc, "G a")).unwrap();
    assert_ne!(a.pooled, b.pooled);
}

#[test]
fn padding_does_not_change_the_encoding() {
    let enc = formula_encoder(EncoderConfig::default(), 3);
    let plain = enc.params.forward_tokens(&ids(&enc, "F a")).unwrap();
    let mut padded_ids = ids(&enc, "F a");
    padded_ids.extend([PAD, PAD]);
    let padded = enc.params.forward_tokens(&padded_ids).unwrap();
    for (x, y) in plain.pooled.iter().zip(&padded.pooled) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn forward_is_deterministic() {
    let a = formula_encoder(EncoderConfig::default(), 9);
    let b = formula_encoder(EncoderConfig::default(), 9);
    let x = a.params.forward_tokens(&ids(&a, "a U b")).unwrap();
    let y = b.params.forward_tokens(&ids(&b, "a U b")).unwrap();
    assert_eq!(x.pooled, y.pooled);
    assert_eq!(x.output, y.output);
}

#[test]
fn zeroed_blocks_reduce_to_layer_norm_of_input() {
    let mut enc = formula_encoder(EncoderConfig::default(), 4);
    for layer in &mut enc.params.layers {
        for m in [&mut layer.wq, &mut layer.wk, &mut layer.wv, &mut layer.wo, &mut layer.w1, &mut layer.w2] {
            m.fill(0.0);
        }
    }
    let seq = ids(&enc, "F (a & F b)");
    let out = enc.params.forward_tokens(&seq).unwrap();
    let table = match &enc.params.input {
        InputLayer::Embedding(e) => e,
        _ => unreachable!(),
    };
    let pe = positional_embedding(seq.len(), 32);
    for (t, &id) in seq.iter().enumerate() {
        let x: Vec<f64> = table.row(id).iter().zip(pe.row(t)).map(|(a, b)| a + b).collect();
        let mean = x.iter().sum::<f64>() / 32.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
        for (j, v) in x.iter().enumerate() {
            let expected = (v - mean) / (var + LN_EPS).sqrt();
            assert!((out.output.get(t, j) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let enc = formula_encoder(tiny(), 5);
    let e = enc.params.forward_tokens(&ids(&enc, "a U b")).unwrap();
    let mut g = enc.params.zeros_like();
    enc.params.backward(&e, &[0.0; 4], &mut g).unwrap();
    assert!(g.named_tensors().iter().all(|(_, t)| t.max_abs() == 0.0));
}

#[test]
fn unused_vocabulary_rows_get_no_gradient() {
    let enc = formula_encoder(tiny(), 6);
    let seq = ids(&enc, "a U b");
    let e = enc.params.forward_tokens(&seq).unwrap();
    let mut g = enc.params.zeros_like();
    enc.params.backward(&e, &[1.0, -0.5, 0.25, 2.0], &mut g).unwrap();
    let InputLayer::Embedding(table) = &g.input else { unreachable!() };
    let d = enc.vocab.id("d").unwrap();
    assert!(table.row(d).iter().all(|&v| v == 0.0));
    assert!(table.row(enc.vocab.id("a").unwrap()).iter().any(|&v| v != 0.0));
}

#[test]
fn missing_cache_is_reported() {
    let enc = formula_encoder(tiny(), 7);
    let mut e = enc.params.forward_tokens(&ids(&enc, "F a")).unwrap();
    e.discard_cache();
    let mut g = enc.params.zeros_like();
    assert!(matches!(enc.params.backward(&e, &[1.0; 4], &mut g), Err(EncoderError::MissingCache)));
}

#[test]
fn token_gradients_match_finite_differences() {
    let enc = formula_encoder(tiny(), 11);
    let mut seq = ids(&enc, "!c U (a & (!d U b))");
    seq.push(PAD);
    let checks = gradient_check(&enc.params, CheckInput::Tokens(&seq), &[0.7, -1.3, 0.4, 1.1], 1e-4).unwrap();
    assert_eq!(checks.len(), 1 + 12 + 3);
    for c in &checks {
        assert!(c.max_relative_error <= 1e-3, "{}: {}", c.name, c.max_relative_error);
    }
}

#[test]
fn record_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = EncoderParams::for_records(tiny(), 5, &mut rng).unwrap();
    let records = Matrix::uniform(3, 5, 1.0, &mut rng);
    let checks = gradient_check(&params, CheckInput::Records(&records), &[1.0, 0.5, -0.3, 0.9], 1e-4).unwrap();
    for c in &checks {
        assert!(c.max_relative_error <= 1e-3, "{}: {}", c.name, c.max_relative_error);
    }
}

#[test]
fn context_window_behaviour() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let config = EncoderConfig { d_out: 16, ..EncoderConfig::default() };
    let mut w = ContextWindow::new(8, 3, 4);
    assert_eq!(w.to_matrix().shape(), (8, 8));
    let params = EncoderParams::for_records(config, w.record_len(), &mut rng).unwrap();
    let z0 = params.forward_records(&w.to_matrix()).unwrap().pooled;
    assert_eq!(z0, params.forward_records(&w.to_matrix()).unwrap().pooled);
    assert_eq!(z0.len(), 16);

    w.push(&[0.1, 0.2, 0.3], 2, 1.0);
    let nonzero = w.records().filter(|r| r.iter().any(|&v| v != 0.0)).count();
    assert_eq!(nonzero, 1);
    assert_eq!(w.width(), 8);
    w.push(&[0.5, 0.0, 0.9], 0, 0.0);
    let z = params.forward_records(&w.to_matrix()).unwrap().pooled;

    let mut swapped = w.to_matrix();
    let (a, b) = (swapped.row(6).to_vec(), swapped.row(7).to_vec());
    swapped.row_mut(6).copy_from_slice(&b);
    swapped.row_mut(7).copy_from_slice(&a);
    let zs = params.forward_records(&swapped).unwrap().pooled;
    assert_ne!(z, zs);

    w.clear();
    assert_eq!(params.forward_records(&w.to_matrix()).unwrap().pooled, z0);

    let single = ContextWindow::new(1, 3, 4);
    let e = params.forward_records(&single.to_matrix()).unwrap();
    assert_eq!(e.output.rows, 1);
    assert_eq!(e.attention.layers[0][0].data, vec![1.0]);
}

#[test]
fn dump_round_trip_and_row_sums() {
    let enc = formula_encoder(EncoderConfig::default(), 14);
    let seq = ids(&enc, "!c U (a & (!d U b))");
    let e = enc.params.forward_tokens(&seq).unwrap();
    let tokens: Vec<String> = enc.vocab.render(&seq).into_iter().map(String::from).collect();
    let mut buf = Vec::new();
    write_attention_dump(&mut buf, &e.attention, &tokens).unwrap();
    let records = read_attention_dump(&buf[..]).unwrap();
    assert_eq!(records.len(), 2 * 4 * seq.len() * seq.len());
    assert!(dump_row_sum_error(&records) < 1e-6);
    assert!(records.iter().all(|r| enc.vocab.id(&r.key_token).is_some()));
}

#[test]
fn fresh_weights_attend_nearly_uniformly() {
    let enc = formula_encoder(EncoderConfig::default(), 15);
    let seq = ids(&enc, "!c U (a & (!d U b))");
    let e = enc.params.forward_tokens(&seq).unwrap();
    let totals = key_attention_totals(&e.attention, 0, &vec![false; seq.len()]);
    let max = totals.iter().cloned().fold(f64::MIN, f64::max);
    let min = totals.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max / min < 2.0, "ratio {}", max / min);
}
