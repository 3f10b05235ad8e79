//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrfe_core::autograd::{Graph, Var};
use mrfe_core::data::{is_negated_construction, make_synthetic_corpus};
use mrfe_core::eece::{
    attention_pool, bilstm_forward, emotion_compatibility, emotion_project, fuse_residual, init_eece,
    negation_modulate, EeceConfig, EmotionLexicon, Modulation,
};
use mrfe_core::experiment::{ablation_table, profile, run_ablation, run_experiment, Ablation};
use mrfe_core::gradcheck::{check_model, finite_difference_check, micro_config, micro_model, GradCheckReport};
use mrfe_core::layers::linear;
use mrfe_core::metrics::{welch_ttest, Confusion};
use mrfe_core::model::{fuse_streams, loss, matmul_flops, predict_head, Fusion, Input, LocalEncoder};
use mrfe_core::sade::{
    depthwise_bias, depthwise_weight, init_sade, pointwise_bias, pointwise_weight, sade_flops, sade_forward, SadeConfig,
};
use mrfe_core::text::{build_vocab, tokenize};
use mrfe_core::train::{self, TrainConfig};
use mrfe_core::{Model, ModelConfig, ParameterStore, Tensor};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---- 1. gradient fidelity -----------------------------------------------------

fn weighted_sum(g: &mut Graph<'_, f64>, y: Var, seed: u64) -> mrfe_core::Result<Var> {
    let shape = g.shape(y).to_vec();
    let r = Tensor::<f64>::uniform(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let c = g.constant(r);
    let p = g.mul(y, c)?;
    Ok(g.sum(p))
}

fn store(seed: u64, shapes: &[(&str, &[usize])]) -> ParameterStore<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParameterStore::new(seed);
    for (name, shape) in shapes {
        p.insert(name, Tensor::uniform(shape, 1.0, &mut rng)).unwrap();
    }
    p
}

fn eece_store(seed: u64, extra: &[(&str, &[usize])]) -> (ParameterStore<f64>, EeceConfig) {
    let cfg = EeceConfig {
        input: 5,
        d: 4,
        h: 3,
        d_a: 2,
        emotions: 3,
        gate_on: true,
    };
    let mut p = store(seed, extra);
    init_eece(&mut p, &cfg).unwrap();
    // non-zero emotion logits so the softmax gradient is exercised
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    *p.get_mut("eece.emotion.logits").unwrap() = Tensor::uniform(&[3], 1.0, &mut rng);
    (p, cfg)
}

fn layer_checks() -> mrfe_core::Result<Vec<(String, GradCheckReport)>> {
    let eps = 1e-6;
    let mut out = Vec::new();

    let p = store(1, &[("x", &[5, 4]), ("w", &[3, 4]), ("b", &[3])]);
    out.push((
        "linear".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let y = linear(g, b.get("x")?, b.get("w")?, b.get("b")?)?;
            weighted_sum(g, y, 11)
        })?,
    ));

    for k in [1, 3, 5, 7] {
        let p = store(2 + k as u64, &[("x", &[6, 4]), ("w", &[4, k]), ("b", &[4])]);
        out.push((
            format!("depthwise k={k}"),
            finite_difference_check(&p, eps, |g, b| {
                let y = g.conv1d_depthwise(b.get("x")?, b.get("w")?, b.get("b")?, k)?;
                weighted_sum(g, y, 12)
            })?,
        ));
    }

    let p = store(3, &[("x", &[6, 4]), ("w", &[4, 3]), ("b", &[3])]);
    out.push((
        "pointwise".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let y = g.conv1d_pointwise(b.get("x")?, b.get("w")?, b.get("b")?)?;
            weighted_sum(g, y, 13)
        })?,
    ));

    let scfg = SadeConfig::new(&[1, 3, 5, 7], 4, 3)?;
    let mut p = store(4, &[("x", &[6, 4])]);
    init_sade(&mut p, "sade", &scfg)?;
    out.push((
        "SADE block".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let s = sade_forward(g, b, "sade", &scfg, b.get("x")?)?;
            weighted_sum(g, s.v, 14)
        })?,
    ));

    let p = store(5, &[("x", &[6, 4]), ("w", &[3, 4, 3]), ("b", &[3])]);
    out.push((
        "standard conv k=3".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let y = g.conv1d(b.get("x")?, b.get("w")?, b.get("b")?, 3)?;
            weighted_sum(g, y, 15)
        })?,
    ));

    let (p, cfg) = eece_store(6, &[("x", &[6, 5])]);
    out.push((
        "BiLSTM".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let h = bilstm_forward(g, b, cfg.h, b.get("x")?)?;
            weighted_sum(g, h, 16)
        })?,
    ));

    let (p, _) = eece_store(7, &[("hmat", &[6, 6])]);
    out.push((
        "attention pool".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let a = attention_pool(g, b, b.get("hmat")?)?;
            let s1 = weighted_sum(g, a.context, 17)?;
            let s2 = weighted_sum(g, a.alpha, 18)?;
            g.add(s1, s2)
        })?,
    ));

    let (p, _) = eece_store(8, &[("hmat", &[6, 6])]);
    out.push((
        "emotion projection".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let e = emotion_project(g, b, b.get("hmat")?)?;
            weighted_sum(g, e, 19)
        })?,
    ));

    let (p, _) = eece_store(9, &[("tok", &[6, 4])]);
    out.push((
        "emotion compatibility".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let y = emotion_compatibility(g, b, b.get("tok")?)?;
            weighted_sum(g, y, 20)
        })?,
    ));

    use Modulation::*;
    let pattern = [Keep, Reverse, Reverse, Attenuate, Keep, Keep];
    let (p, _) = eece_store(10, &[("hmat", &[6, 6]), ("y", &[6, 3]), ("scores", &[1, 6])]);
    out.push((
        "modulation + residual fusion".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let y = negation_modulate(g, b.get("y")?, &pattern, 0.5)?;
            let alpha = g.softmax_rows(b.get("scores")?)?;
            let f = fuse_residual(g, b, b.get("hmat")?, y, alpha, true)?;
            let s1 = weighted_sum(g, f.h_tilde, 21)?;
            let s2 = weighted_sum(g, f.c_tilde, 22)?;
            g.add(s1, s2)
        })?,
    ));

    for mode in [Fusion::AttentionStack, Fusion::Summation] {
        let p = store(
            23,
            &[
                ("v", &[1, 6]),
                ("h", &[1, 8]),
                ("fusion.proj_v.weight", &[5, 6]),
                ("fusion.proj_v.bias", &[5]),
                ("fusion.proj_h.weight", &[5, 8]),
                ("fusion.proj_h.bias", &[5]),
                ("fusion.score", &[5]),
            ],
        );
        out.push((
            format!("stream fusion {mode}"),
            finite_difference_check(&p, eps, |g, b| {
                let f = fuse_streams(g, b, b.get("v")?, b.get("h")?, mode)?;
                weighted_sum(g, f.out, 24)
            })?,
        ));
    }

    let p = store(25, &[("f", &[1, 5]), ("w", &[2, 5]), ("b", &[2])]);
    out.push((
        "prediction head + loss".to_string(),
        finite_difference_check(&p, eps, |g, b| {
            let (_, probs) = predict_head(g, b.get("f")?, b.get("w")?, b.get("b")?)?;
            loss(g, probs, 1)
        })?,
    ));
    Ok(out)
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let layers = layer_checks().map_err(e2s)?;
    let worst_layer = layers
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .unwrap();
    for (name, r) in &layers {
        ensure(r.passes(1e-3), || format!("layer {name}: max rel error {:.3e}", r.max_rel_error))?;
    }

    let cfg = micro_config();
    let model = micro_model::<f64>(cfg.clone(), 3).map_err(e2s)?;
    let ids = model.encode(mrfe_core::gradcheck::MICRO_REVIEW).map_err(e2s)?;
    ensure(ids.len() == 6, || format!("micro input has {} tokens", ids.len()))?;
    let full = check_model(&model, Input::Ids(&ids), 1, 1e-6).map_err(e2s)?;
    ensure(full.passes(1e-3), || format!("full micro model: max rel error {:.3e}", full.max_rel_error))?;
    ensure(model.cfg.emotions == 3 && model.cfg.classes == 2, || "micro config drifted".into())?;

    let mut extra = 0.0f64;
    for (fusion, local) in [
        (Fusion::AttentionStack, LocalEncoder::Depthwise),
        (Fusion::Summation, LocalEncoder::Depthwise),
        (Fusion::Sequential, LocalEncoder::StandardConv),
    ] {
        let m = micro_model::<f64>(
            ModelConfig {
                fusion,
                local_encoder: local,
                ..cfg.clone()
            },
            4,
        )
        .map_err(e2s)?;
        let r = check_model(&m, Input::Ids(&ids), 0, 1e-6).map_err(e2s)?;
        ensure(r.passes(1e-3), || format!("micro {fusion}/{local}: max rel error {:.3e}", r.max_rel_error))?;
        extra = extra.max(r.max_rel_error);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} layer checks (worst {} {:.2e}); full micro model {:.2e} over {} coords; fusion/conv variants {:.2e}; {:.1} s",
        layers.len(),
        worst_layer.0,
        worst_layer.1.max_rel_error,
        full.max_rel_error,
        full.coordinates,
        extra,
        secs
    ))
}

// ---- 2. convolution oracle ----------------------------------------------------

fn criterion_2() -> Check {
    let mut cases = 0;
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in 1..=16 {
            for d in 1..=8 {
                for k in [1, 3, 5, 7] {
                    let x = Tensor::<f32>::uniform(&[n, d], 1.0, &mut rng);
                    let w = Tensor::<f32>::uniform(&[d, k], 1.0, &mut rng);
                    let bias = Tensor::<f32>::uniform(&[d], 1.0, &mut rng);
                    let mut g = Graph::new();
                    let (xv, wv, bv) = (g.param(&x), g.param(&w), g.param(&bias));
                    let y = g.conv1d_depthwise(xv, wv, bv, k).map_err(e2s)?;
                    let got = g.value(y).data().to_vec();
                    let half = (k / 2) as isize;
                    for t in 0..n {
                        for j in 0..d {
                            let mut want = bias.data()[j] as f64;
                            for off in -half..=half {
                                let src = t as isize + off;
                                if src >= 0 && (src as usize) < n {
                                    let wi = (off + half) as usize;
                                    want += w.data()[j * k + wi] as f64 * x.data()[src as usize * d + j] as f64;
                                }
                            }
                            worst = worst.max((got[t * d + j] as f64 - want).abs());
                        }
                    }
                    cases += 1;
                }
            }
        }
    }
    ensure(worst <= 1e-5, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("{cases} cases (50 seeds, n ≤ 16, d ≤ 8, k ∈ {{1,3,5,7}}), max deviation {worst:.2e}"))
}

// ---- 3. simplex invariants ----------------------------------------------------

fn rows_on_simplex(t: &Tensor<f32>, what: &str) -> Result<(), String> {
    let (r, c) = t.dims2().map_err(e2s)?;
    for i in 0..r {
        let row = &t.data()[i * c..(i + 1) * c];
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        ensure((s - 1.0).abs() <= 1e-5 && row.iter().all(|&v| v >= 0.0), || {
            format!("{what} row {i} sums to {s}")
        })?;
    }
    Ok(())
}

fn criterion_3() -> Check {
    let base = micro_config();
    let mut checked = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let rows = rng.gen_range(1..6);
        let cols = rng.gen_range(1..12);
        let scale = rng.gen_range(0.1..50.0);
        let z = Tensor::<f32>::uniform(&[rows, cols], scale, &mut rng);
        let mut g = Graph::new();
        let zv = g.param(&z);
        let s = g.softmax_rows(zv).map_err(e2s)?;
        rows_on_simplex(g.value(s), "softmax")?;

        for fusion in [Fusion::Sequential, Fusion::AttentionStack] {
            let m = micro_model::<f32>(ModelConfig { fusion, ..base.clone() }, trial).map_err(e2s)?;
            let v = m.vocab.as_ref().unwrap().len() as u32;
            let n = rng.gen_range(1..=m.cfg.max_len);
            let ids: Vec<u32> = (0..n).map(|_| rng.gen_range(0..v)).collect();
            let mut g = Graph::new();
            let b = g.bind(&m.params);
            let f = m.forward(&mut g, &b, Input::Ids(&ids), None).map_err(e2s)?;
            rows_on_simplex(g.value(f.probs), "prediction")?;
            let e = f.eece.ok_or("missing emotion branch")?;
            rows_on_simplex(g.value(e.attention.alpha), "attention α")?;
            rows_on_simplex(g.value(e.e_t), "emotion e_t")?;
            rows_on_simplex(g.value(e.fused.alpha_e), "emotion weights")?;
            if fusion == Fusion::AttentionStack {
                let w = f.fusion.and_then(|x| x.weights).ok_or("missing fusion weights")?;
                rows_on_simplex(g.value(w), "fusion weights")?;
            }
            checked += 1;
        }
    }
    Ok(format!(
        "100 trials: random softmax rows plus {checked} forward passes (prediction, attention, e_t, emotion and fusion weights)"
    ))
}

// ---- 4. negation and hedge semantics --------------------------------------------

fn y_rows(m: &Model<f64>, ids: &[u32]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), String> {
    let mut g = Graph::new();
    let b = g.bind(&m.params);
    let f = m.forward(&mut g, &b, Input::Ids(ids), None).map_err(e2s)?;
    let e = f.eece.ok_or("missing emotion branch")?;
    let rows = |v: Var| {
        let t = g.value(v);
        let c = t.shape()[1];
        t.data().chunks(c).map(<[f64]>::to_vec).collect::<Vec<_>>()
    };
    Ok((rows(e.y), rows(e.y_mod)))
}

fn bits(r: &[f64]) -> Vec<u64> {
    r.iter().map(|x| x.to_bits()).collect()
}

fn criterion_4() -> Check {
    let m = micro_model::<f64>(micro_config(), 5).map_err(e2s)?;
    let vocab = m.vocab.as_ref().unwrap();
    let w = m.rules.window;
    let lambda = m.rules.lambda;
    let words = ["good", "great", "fun", "bad", "sad", "dull", "awful", "rude", "hate", "acting", "and", "but"];
    let content: Vec<u32> = words.iter().filter_map(|t| vocab.id(t)).collect();
    ensure(content.len() == words.len(), || "micro vocabulary lacks test words".into())?;
    let cues: [(&str, Vec<u32>, bool); 3] = [
        ("never", vec![vocab.id("never").unwrap()], true),
        ("slightly", vec![vocab.id("slightly").unwrap()], false),
        ("a bit", vec![vocab.id("a").unwrap(), vocab.id("bit").unwrap()], false),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut positions = 0;
    for _ in 0..100 {
        let n = rng.gen_range(3..=9);
        let s: Vec<u32> = (0..n).map(|_| content[rng.gen_range(0..content.len())]).collect();
        let (y, y_mod) = y_rows(&m, &s)?;
        ensure(bits_eq(&y, &y_mod), || "modulation fired without a cue".into())?;
        for (name, cue, negate) in &cues {
            let i = rng.gen_range(0..=n);
            let mut s2 = s.clone();
            s2.splice(i..i, cue.iter().copied());
            let l = cue.len();
            let (_, y2) = y_rows(&m, &s2)?;
            for j in 0..n {
                let at = if j < i { j } else { j + l };
                let inside = j >= i && at - (i + l) < w.saturating_sub(l - 1);
                let want: Vec<f64> = y[j]
                    .iter()
                    .map(|&v| match (inside, negate) {
                        (false, _) => v,
                        (true, true) => -v,
                        (true, false) => v * lambda,
                    })
                    .collect();
                ensure(bits(&y2[at]) == bits(&want), || {
                    format!("cue `{name}` at {i}: position {at} (word {j}) not exact")
                })?;
                positions += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(45);
    for _ in 0..20 {
        let t = Tensor::<f64>::uniform(&[7, 3], 2.0, &mut rng);
        let mut g = Graph::new();
        let v = g.param(&t);
        let all = [Modulation::Reverse; 7];
        let once = negation_modulate(&mut g, v, &all, lambda).map_err(e2s)?;
        let twice = negation_modulate(&mut g, once, &all, lambda).map_err(e2s)?;
        ensure(g.value(twice).bit_eq(&t), || "double reversal changed bits".into())?;
    }
    Ok(format!(
        "{positions} positions exact over 100 sequences × 3 cues (window {w}, λ = {lambda}); double reversal bit-exact"
    ))
}

fn bits_eq(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| bits(x) == bits(y))
}

// ---- 5. residual identity and single kernel --------------------------------------

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut identities = 0;
    for gate_on in [true, false] {
        let mut m = micro_model::<f64>(ModelConfig { gate_on, ..micro_config() }, 7).map_err(e2s)?;
        let protos = m.params.get_mut("eece.emotion.prototypes").map_err(e2s)?;
        *protos = Tensor::zeros(protos.shape());
        let v = m.vocab.as_ref().unwrap().len() as u32;
        for _ in 0..25 {
            let n = rng.gen_range(1..=m.cfg.max_len);
            let ids: Vec<u32> = (0..n).map(|_| rng.gen_range(0..v)).collect();
            let mut g = Graph::new();
            let b = g.bind(&m.params);
            let f = m.forward(&mut g, &b, Input::Ids(&ids), None).map_err(e2s)?;
            let e = f.eece.ok_or("missing emotion branch")?;
            ensure(g.value(e.fused.h_tilde).bit_eq(g.value(e.h)), || {
                format!("H̃ differs from H with zero emotion signal (gate {gate_on})")
            })?;
            identities += 1;
        }
    }

    let mut singles = 0;
    for k in [1, 3, 5, 7] {
        for seed in 0..25u64 {
            let cfg = SadeConfig::new(&[k], 6, 4).map_err(e2s)?;
            let mut p = ParameterStore::<f32>::new(seed);
            init_sade(&mut p, "s", &cfg).map_err(e2s)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f32>::uniform(&[rng.gen_range(1..=16), 6], 1.0, &mut rng);
            let mut g = Graph::new();
            let b = g.bind(&p);
            let xv = g.param(&x);
            let sade = sade_forward(&mut g, &b, "s", &cfg, xv).map_err(e2s)?;
            let (w, bias) = (b.get(&depthwise_weight("s", k)).map_err(e2s)?, b.get(&depthwise_bias("s", k)).map_err(e2s)?);
            let y = g.conv1d_depthwise(xv, w, bias, k).map_err(e2s)?;
            let r = g.relu(y);
            let (pw, pb) = (b.get(&pointwise_weight("s")).map_err(e2s)?, b.get(&pointwise_bias("s")).map_err(e2s)?);
            let v = g.conv1d_pointwise(r, pw, pb).map_err(e2s)?;
            ensure(g.value(sade.v).bit_eq(g.value(v)), || format!("|K|=1 (k={k}) differs from the branch"))?;
            singles += 1;
        }
    }
    let single = Ablation::SingleKernel.apply(&micro_config());
    ensure(single.kernels == [3], || format!("single-kernel row uses {:?}", single.kernels))?;
    micro_model::<f32>(single, 0).map_err(e2s)?;
    Ok(format!("{identities} zero-signal passes H̃ == H; {singles} single-kernel blocks equal their branch"))
}

// ---- 6. desk-scale learning and the ablation grid --------------------------------

fn criterion_6() -> Check {
    let corpus = make_synthetic_corpus(1000, 2, 42).map_err(e2s)?;
    let negated = corpus.samples.iter().filter(|s| is_negated_construction(&s.text)).count();
    ensure(corpus.len() == 2000 && negated == 200, || format!("{} samples, {negated} negated", corpus.len()))?;
    let tcfg = TrainConfig::default();
    ensure(tcfg.epochs == 20 && tcfg.lr == 1e-3, || "training defaults drifted".into())?;
    let base = ModelConfig::default();
    let lex = EmotionLexicon::default();

    let start = Instant::now();
    let full = run_experiment::<f32>(&base, &tcfg, &corpus, &lex, None).map_err(e2s)?;
    let full_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let rows = run_ablation::<f32>(&base, &tcfg, &corpus, &lex, None, None).map_err(e2s)?;
    let ablation_secs = start.elapsed().as_secs_f64();
    println!("{}", ablation_table(&rows));

    let labels: Vec<&str> = rows.iter().map(|r| r.ablation.label()).collect();
    let want: Vec<&str> = Ablation::ALL.iter().map(|a| a.label()).collect();
    ensure(labels == want, || format!("ablation rows {labels:?}"))?;
    let row = &rows[0];
    let reproducible = row.history == full.outcome.history && row.report.same_scores(&full.report);
    let acc = full.report.accuracy;
    let threads = rayon::current_num_threads();
    let summary = format!(
        "full variant test accuracy {:.2}% (best epoch {}, {full_secs:.0} s); rerun identical: {reproducible}; \
         7 ablation rows in {ablation_secs:.0} s on {threads} worker thread(s)",
        100.0 * acc,
        full.outcome.best_epoch
    );
    ensure(acc >= 0.95, || format!("{summary}; accuracy below 95%"))?;
    ensure(reproducible, || format!("{summary}; seeded rerun diverged"))?;
    ensure(ablation_secs < 600.0, || format!("{summary}; ablation exceeded 10 min"))?;
    Ok(summary)
}

// ---- 7. metrics oracle -------------------------------------------------------

fn criterion_7() -> Check {
    let spot = Confusion::from_pairs(2, &[0, 1, 1, 0], &[0, 1, 0, 0]).map_err(e2s)?;
    ensure(spot.accuracy() == 0.75, || format!("spot accuracy {}", spot.accuracy()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let c = rng.gen_range(2..=6);
        let n = rng.gen_range(1..300);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let m = Confusion::from_pairs(c, &truth, &pred).map_err(e2s)?;

        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        let acc = correct as f64 / n as f64;
        let mut f1_sum = 0.0f64;
        for k in 0..c {
            let tp = truth.iter().zip(&pred).filter(|&(&t, &p)| t == k && p == k).count() as f64;
            let fp = truth.iter().zip(&pred).filter(|&(&t, &p)| t != k && p == k).count() as f64;
            let fn_ = truth.iter().zip(&pred).filter(|&(&t, &p)| t == k && p != k).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            f1_sum += if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        }
        let macro_f1 = f1_sum / c as f64;
        ensure(m.accuracy() == acc && m.macro_f1() == macro_f1, || {
            format!("mismatch on a {c}-class matrix: {} vs {acc}, {} vs {macro_f1}", m.accuracy(), m.macro_f1())
        })?;
    }
    Ok("200 random matrices match the brute-force oracle exactly; spot case 3/4 = 0.75".into())
}

// ---- 8. profiler exactness ------------------------------------------------------

fn criterion_8() -> Check {
    let tiny = SadeConfig::new(&[3], 1, 1).map_err(e2s)?;
    let mut p = ParameterStore::<f32>::new(0);
    init_sade(&mut p, "s", &tiny).map_err(e2s)?;
    ensure(tiny.param_count() == 6 && p.num_params() == 6, || {
        format!("d=1, K={{3}}, c=1 gives {} / {}", tiny.param_count(), p.num_params())
    })?;

    let m = micro_model::<f32>(micro_config(), 0).map_err(e2s)?;
    let v = m.vocab.as_ref().unwrap().len();
    // d=8, c=6, h=4, d_a=3, |E|=3, C=2, K={1,3,5,7}, EECE reads V (width c)
    let embedding = v * 8;
    let sade = 8 * (1 + 1) + 8 * (3 + 1) + 8 * (5 + 1) + 8 * (7 + 1) + 8 * 6 + 6;
    let lstm = 2 * (16 * 6 + 16 * 4 + 16);
    let attention = 3 * 8 + 3 + 3;
    let emotion = 3 * 8 + 3 + 3 * 8 + 3;
    let gate = 8 + 1;
    let head = 2 * 8 + 2;
    let hand = embedding + sade + lstm + attention + emotion + gate + head;
    ensure(m.num_params() == hand, || format!("micro model {} vs hand {hand}", m.num_params()))?;

    ensure(matmul_flops(2, 2, 2) == 16, || "lone 2×2 matmul".into())?;
    let scfg = SadeConfig::new(&[1, 3, 5, 7], 32, 32).map_err(e2s)?;
    let desk = Model::<f32>::new(ModelConfig::default(), Some(build_vocab(["a b c"], 50).map_err(e2s)?), EmotionLexicon::default(), 0)
        .map_err(e2s)?;
    for n in [1, 4, 16, 100] {
        ensure(sade_flops(&scfg, 2 * n) == 2 * sade_flops(&scfg, n), || format!("depthwise FLOPs not linear at n={n}"))?;
        let f = |k| desk.flops(k).unwrap();
        ensure(f(3 * n) - f(2 * n) == f(2 * n) - f(n), || format!("model FLOPs not affine at n={n}"))?;
    }

    let corpus = make_synthetic_corpus(60, 2, 8).map_err(e2s)?;
    let vocab = build_vocab(corpus.samples.iter().map(|s| s.text.as_str()), 5000).map_err(e2s)?;
    let model = Model::<f32>::new(ModelConfig::default(), Some(vocab.clone()), EmotionLexicon::default(), 1).map_err(e2s)?;
    let ids: Vec<Vec<u32>> = corpus
        .samples
        .iter()
        .map(|s| tokenize(&model.condition(&s.text).unwrap(), &vocab, 64))
        .collect::<mrfe_core::Result<_>>()
        .map_err(e2s)?;
    let inputs: Vec<Input<'_, f32>> = ids.iter().map(|x| Input::Ids(x.as_slice())).collect();
    let rep = profile(&model, &inputs, 120).map_err(e2s)?;
    ensure(rep.runs >= 100 && rep.params == model.num_params(), || format!("{rep:?}"))?;
    let ecfg = EeceConfig {
        input: 32,
        d: 32,
        h: 16,
        d_a: 8,
        emotions: 6,
        gate_on: true,
    };
    for n in [1, 4, 16, 100] {
        ensure(ecfg.flops(2 * n) == 2 * ecfg.flops(n), || format!("recurrent FLOPs not linear at n={n}"))?;
    }
    Ok(format!(
        "6-param SADE and micro model ({hand}) exact; FLOPs linear; desk latency {:.3} ± {:.3} ms over {} runs",
        rep.mean_ms, rep.std_ms, rep.runs
    ))
}

// ---- 9. determinism and persistence ------------------------------------------

fn criterion_9() -> Check {
    let corpus = make_synthetic_corpus(100, 2, 9).map_err(e2s)?;
    let tcfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let cfg = ModelConfig::default();
    let lex = EmotionLexicon::default();
    let (tr, dev, test) = train::split(&corpus, tcfg.ratios, tcfg.seed).map_err(e2s)?;
    let a = train::train::<f32>(&cfg, &tcfg, &tr, &dev, &lex, None).map_err(e2s)?;
    let b = train::train::<f32>(&cfg, &tcfg, &tr, &dev, &lex, None).map_err(e2s)?;
    let h = |o: &train::TrainOutcome<f32>| -> Vec<(u64, Option<u64>)> {
        o.history.iter().map(|r| (r.loss.to_bits(), r.dev_accuracy.map(f64::to_bits))).collect()
    };
    ensure(h(&a) == h(&b) && a.history.len() == 3, || "histories differ".into())?;
    for ((n, x), (_, y)) in a.model.params.iter().zip(b.model.params.iter()) {
        ensure(x.bit_eq(y), || format!("parameter {n} differs"))?;
    }

    let dir = tempfile::tempdir().map_err(e2s)?;
    a.model.save_dir(dir.path()).map_err(e2s)?;
    let back = Model::<f32>::load_dir(dir.path()).map_err(e2s)?;
    for s in &test.samples {
        let p = a.model.predict_text(&s.text).map_err(e2s)?;
        let q = back.predict_text(&s.text).map_err(e2s)?;
        ensure(bits(&p.probs) == bits(&q.probs), || format!("prediction differs after reload: {}", s.text))?;
    }
    Ok(format!(
        "two seeded runs give bit-identical history and parameters; {} test predictions bit-identical after save/load",
        test.len()
    ))
}

// ---- 10. Welch t-test ----------------------------------------------------------

/// Two-sided p from the Student-t density by composite Simpson integration.
fn t_two_sided(t: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let steps = 200_000;
    let h = t.abs() / steps as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..steps {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

fn criterion_10() -> Check {
    let fixtures: [(&[f64], &[f64]); 3] = [
        (&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0, 5.0]),
        (
            &[27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4],
            &[27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4],
        ),
        (&[0.912, 0.918, 0.915, 0.921, 0.909], &[0.897, 0.902, 0.889, 0.905, 0.899, 0.893]),
    ];
    let mut worst = 0.0f64;
    for (a, b) in fixtures {
        let stats = |x: &[f64]| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0), n)
        };
        let ((ma, va, na), (mb, vb, nb)) = (stats(a), stats(b));
        let t = (ma - mb) / (va / na + vb / nb).sqrt();
        let df = (va / na + vb / nb).powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
        let p = t_two_sided(t, df);
        let r = welch_ttest(a, b).map_err(e2s)?;
        for (got, want, what) in [(r.t, t, "t"), (r.df, df, "df"), (r.p, p, "p")] {
            let err = (got - want).abs();
            worst = worst.max(err);
            ensure(err <= 1e-9, || format!("{what}: {got} vs {want}"))?;
        }
    }
    let same = welch_ttest(&[0.5, 0.7, 0.9], &[0.5, 0.7, 0.9]).map_err(e2s)?;
    ensure(same.t == 0.0 && same.p == 1.0, || format!("identical samples: {same:?}"))?;
    Ok(format!("3 fixtures within {worst:.1e} of the oracle; identical samples give t=0, p=1"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient fidelity", criterion_1),
        ("convolution oracle", criterion_2),
        ("simplex invariants", criterion_3),
        ("negation and hedge semantics", criterion_4),
        ("residual identity and single kernel", criterion_5),
        ("desk-scale learning and ablation grid", criterion_6),
        ("metrics oracle", criterion_7),
        ("profiler exactness", criterion_8),
        ("determinism and persistence", criterion_9),
        ("Welch t-test", criterion_10),
    ];
    let filter: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
