//! Acceptance suite: one PASS/FAIL line per criterion. Runs with its own `main` so the lines
//! are always printed; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use scrc::datastore::{Checkpoint, FeatureStore};
use scrc::evalmetrics::{eval_gt_scenario, eval_proposal_scenario, RankedResult};
use scrc::geometry::{encode_spatial, iou, is_hit, BoundingBox, ImageSize, SpatialFeature};
use scrc::gradcheck::tiny_fixture;
use scrc::model::{ScoreRequest, ScrcConfig, ScrcModel, VisualInput};
use scrc::nncore::{init_uniform, GateParams, LstmParams, LstmState, Rng};
use scrc::textproc::{TokenSequence, Vocabulary, BOS_ID, EOS_ID};
use scrc::train::transfer_weights;
use scrc::ScrcError;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_check),
        ("lstm step oracle", lstm_oracle),
        ("caption-mode equivalence", caption_equivalence),
        ("transfer invariant", transfer_invariant),
        ("synthetic overfit and spatial ablation", synthetic_overfit),
        ("beam search vs exhaustive", beam_oracle),
        ("metric fixtures", metric_fixtures),
        ("iou and spatial exactness", geometry_exactness),
        ("persistence", persistence),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_biases(model: &mut ScrcModel<f64>, rng: &mut Rng, radius: f64) {
    for (name, t) in model.params.named_tensors_mut() {
        if name.ends_with(".b") || name == "bias" {
            let (r, c) = t.value.shape();
            t.value = init_uniform(rng, r, c, radius);
        }
    }
}

fn random_visual(rng: &mut Rng, feat: usize) -> VisualInput<f64> {
    let x0 = rng.uniform(-1.0, 0.0);
    let y0 = rng.uniform(-1.0, 0.0);
    let x1 = rng.uniform(0.05, 1.0);
    let y1 = rng.uniform(0.05, 1.0);
    VisualInput {
        x_box: (0..feat).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        x_context: (0..feat).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        x_spatial: SpatialFeature([x0, y0, x1, y1, (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0]),
    }
}

fn random_query(rng: &mut Rng, vocab: usize, max_len: usize) -> TokenSequence {
    let len = 1 + rng.below(max_len);
    TokenSequence::new((0..len).map(|_| rng.below(vocab) as u32).collect())
}

// Criterion 1 -----------------------------------------------------------------------------

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let (model, requests) = tiny_fixture(0, None);
    let loss = |m: &ScrcModel<f64>| -> f64 { requests.iter().map(|r| -m.sequence_log_prob(r).unwrap()).sum() };

    let mut analytic = model.clone();
    analytic.params.zero_grads();
    for r in &requests {
        analytic.loss_and_backward(r, 1.0).unwrap();
    }
    let grads: Vec<Vec<f64>> = analytic
        .params
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.grad.data().to_vec())
        .collect();

    let h = 1e-5;
    let mut probe = model.clone();
    let (mut max_rel, mut max_abs, mut max_tensor_rel, mut checked) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for (ti, grad) in grads.iter().enumerate() {
        let (mut d2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for (e, &a) in grad.iter().enumerate() {
            let original = probe.params.named_tensors()[ti].1.value.data()[e];
            probe.params.named_tensors_mut()[ti].1.value.data_mut()[e] = original + h;
            let plus = loss(&probe);
            probe.params.named_tensors_mut()[ti].1.value.data_mut()[e] = original - h;
            let minus = loss(&probe);
            probe.params.named_tensors_mut()[ti].1.value.data_mut()[e] = original;
            let n = (plus - minus) / (2.0 * h);
            max_rel = max_rel.max((a - n).abs() / a.abs().max(n.abs()).max(1e-8));
            max_abs = max_abs.max((a - n).abs());
            d2 += (a - n) * (a - n);
            a2 += a * a;
            n2 += n * n;
            checked += 1;
        }
        if a2.max(n2) > 0.0 {
            max_tensor_rel = max_tensor_rel.max((d2 / a2.max(n2)).sqrt());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let floor = f64::EPSILON * loss(&model).abs() / h;
    verdict(
        max_rel < 1e-5 && secs < 60.0,
        format!(
            "{checked} elements (limit 60s), max per-element relative error {max_rel:.2e} (limit 1e-5); \
             max absolute error {max_abs:.2e} vs roundoff floor {floor:.2e}; \
             max per-tensor relative error {max_tensor_rel:.2e}"
        ),
    )
}

// Criterion 2 -----------------------------------------------------------------------------

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn gate_preactivation(g: &GateParams<f64>, i: usize, x: &[f64], h: &[f64]) -> f64 {
    let mut s = g.bias.value.get(i, 0);
    for (j, xj) in x.iter().enumerate() {
        s += g.input_weights.value.get(i, j) * xj;
    }
    for (k, hk) in h.iter().enumerate() {
        s += g.recurrent_weights.value.get(i, k) * hk;
    }
    s
}

fn lstm_oracle() -> Verdict {
    let mut rng = Rng::new(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let hidden = 1 + rng.below(7);
        let input = 1 + rng.below(7);
        let radius = rng.uniform(0.1, 2.0);
        let mut p = LstmParams::<f64>::random(&mut rng, hidden, input, radius);
        for g in p.gates_mut() {
            g.bias.value = init_uniform(&mut rng, hidden, 1, radius);
        }
        let x: Vec<f64> = (0..input).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let prev = LstmState {
            h: (0..hidden).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            c: (0..hidden).map(|_| rng.uniform(-2.0, 2.0)).collect(),
        };
        let (next, _) = p.step(&x, &prev).unwrap();
        for i in 0..hidden {
            let ig = sigmoid(gate_preactivation(&p.input_gate, i, &x, &prev.h));
            let fg = sigmoid(gate_preactivation(&p.forget_gate, i, &x, &prev.h));
            let og = sigmoid(gate_preactivation(&p.output_gate, i, &x, &prev.h));
            let gg = gate_preactivation(&p.cell_gate, i, &x, &prev.h).tanh();
            let c = fg * prev.c[i] + ig * gg;
            let h = og * c.tanh();
            worst = worst.max((c - next.c[i]).abs()).max((h - next.h[i]).abs());
        }
    }
    verdict(
        worst <= 1e-12,
        format!("100 instances, max |difference| {worst:.2e} (limit 1e-12)"),
    )
}

// Criterion 3 -----------------------------------------------------------------------------

fn caption_equivalence() -> Verdict {
    let mut rng = Rng::new(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let cfg = ScrcConfig::new(4 + rng.below(10), 1 + rng.below(6), 1 + rng.below(8), 1 + rng.below(6));
        let mut full = ScrcModel::<f64>::random(cfg, &mut rng, 0.5).unwrap();
        random_biases(&mut full, &mut rng, 0.5);
        full.params.w_local.value.fill(0.0);
        let caption = ScrcModel::new(cfg.caption(), full.params.clone()).unwrap();
        let req = ScoreRequest {
            query: random_query(&mut rng, cfg.vocab_size, 6),
            visual: random_visual(&mut rng, cfg.feat_dim),
        };
        let a = full.sequence_log_prob(&req).unwrap();
        let b = caption.sequence_log_prob(&req).unwrap();
        worst = worst.max((a - b).abs());
    }
    verdict(
        worst <= 1e-10,
        format!("100 triples, max |Δ log p| {worst:.2e} (limit 1e-10)"),
    )
}

// Criterion 4 -----------------------------------------------------------------------------

fn transfer_invariant() -> Verdict {
    let mut rng = Rng::new(4);
    let (mut worst_h, mut score_mismatches) = (0.0f64, 0usize);
    for _ in 0..50 {
        let full_cfg = ScrcConfig::new(4 + rng.below(10), 1 + rng.below(6), 1 + rng.below(8), 1 + rng.below(6));
        let cap_cfg = full_cfg.caption();
        let mut pre = ScrcModel::<f64>::random(cap_cfg, &mut rng, 0.5).unwrap();
        random_biases(&mut pre, &mut rng, 0.5);
        let mut post_params = pre.params.clone();
        transfer_weights(&mut post_params, &full_cfg).unwrap();
        let post_full = ScrcModel::new(full_cfg, post_params.clone()).unwrap();
        let post_caption = ScrcModel::new(cap_cfg, post_params).unwrap();

        let mut visual = random_visual(&mut rng, full_cfg.feat_dim);
        visual.x_box = visual.x_context.clone();
        let query = random_query(&mut rng, full_cfg.vocab_size, 6);
        let trace = post_full.forward(&query, &visual).unwrap();
        for step in &trace.steps {
            let (l, g) = (step.h_local.as_ref().unwrap(), step.h_global.as_ref().unwrap());
            for (a, b) in l.iter().zip(g) {
                worst_h = worst_h.max((a - b).abs());
            }
        }
        let req = ScoreRequest {
            query,
            visual: random_visual(&mut rng, full_cfg.feat_dim),
        };
        let before = pre.sequence_log_prob(&req).unwrap();
        let after = post_caption.sequence_log_prob(&req).unwrap();
        if before.to_bits() != after.to_bits() {
            score_mismatches += 1;
        }
    }
    verdict(
        worst_h <= 1e-6 && score_mismatches == 0,
        format!("50 models, max |h_local − h_global| {worst_h:.2e} (limit 1e-6); caption scores differing in bits: {score_mismatches}"),
    )
}

// Criterion 5 -----------------------------------------------------------------------------

fn scrc(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_scrc"))
        .args(args)
        .output()
        .expect("run scrc");
    assert!(
        out.status.success(),
        "scrc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("JSON output")
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

/// synth → pretrain → finetune (transferred init) → eval on annotated boxes.
fn synth_run(dir: &Path, seed: &str, extra_finetune: &[&str]) -> f64 {
    let (ann, reg, ctx, cfg, pre, ft) = (
        p(dir, "annotations.jsonl"),
        p(dir, "region_features.bin"),
        p(dir, "context_features.bin"),
        p(dir, "config.json"),
        p(dir, "pre.ckpt"),
        p(dir, "ft.ckpt"),
    );
    scrc(&["synth", "--out-dir", dir.to_str().unwrap(), "--seed", seed]);
    scrc(&[
        "pretrain",
        "--captions",
        &p(dir, "captions.jsonl"),
        "--context-features",
        &ctx,
        "--annotations",
        &ann,
        "--config",
        &cfg,
        "--seed",
        seed,
        "--out",
        &pre,
    ]);
    let mut args = vec![
        "finetune",
        "--annotations",
        &ann,
        "--region-features",
        &reg,
        "--context-features",
        &ctx,
        "--config",
        &cfg,
        "--in",
        &pre,
        "--out",
        &ft,
        "--seed",
        seed,
        "--steps",
        "2000",
    ];
    args.extend_from_slice(extra_finetune);
    scrc(&args);
    let report = json(&scrc(&[
        "eval",
        "--model",
        &ft,
        "--scenario",
        "gt",
        "--annotations",
        &ann,
        "--region-features",
        &reg,
        "--context-features",
        &ctx,
    ]));
    report["p_at_1"].as_f64().unwrap()
}

fn synthetic_overfit() -> Verdict {
    let start = Instant::now();
    let full_dir = tempfile::tempdir().unwrap();
    let masked_dir = tempfile::tempdir().unwrap();
    let full = synth_run(full_dir.path(), "0", &[]);
    let masked = synth_run(masked_dir.path(), "0", &["--mask-spatial"]);

    // Every query must be position-dependent: its color names two regions of its image.
    let records = scrc::datastore::load_annotations(full_dir.path().join("annotations.jsonl")).unwrap();
    let position_dependent = records.iter().all(|r| {
        let color = r.descriptions[0].split(' ').next().unwrap();
        records
            .iter()
            .filter(|o| o.image_id == r.image_id && o.descriptions[0].starts_with(&format!("{color} ")))
            .count()
            == 2
    });
    let secs = start.elapsed().as_secs_f64();
    verdict(
        full == 1.0 && masked <= 0.60 && position_dependent && records.len() == 64 && secs < 600.0,
        format!(
            "{} queries (all position-dependent: {position_dependent}); full P@1 {full:.2} (need 1.00), \
             mask-spatial P@1 {masked:.2} (need ≤ 0.60); limit 600s",
            records.len()
        ),
    )
}

// Criterion 6 -----------------------------------------------------------------------------

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Log-probability of `tokens` followed by `<eos>`, stepping the decoder directly.
fn path_log_prob(model: &ScrcModel<f64>, visual: &VisualInput<f64>, tokens: &[u32]) -> f64 {
    let mut state = model.initial_state();
    let mut prev = BOS_ID;
    let mut total = 0.0;
    for &t in tokens.iter().chain(std::iter::once(&EOS_ID)) {
        let out = model.step_logits(prev, visual, &state).unwrap();
        total += log_softmax(&out.logits)[t as usize];
        state = out.state;
        prev = t;
    }
    total
}

fn beam_oracle() -> Verdict {
    // Vocabulary of 5: <unk>, <bos>, <eos> and two words; generation never emits <unk>/<bos>.
    let words = [3u32, 4];
    let mut rng = Rng::new(6);
    let mut agree = 0;
    for _ in 0..50 {
        let cfg = ScrcConfig::new(5, 1 + rng.below(4), 1 + rng.below(5), 1 + rng.below(4));
        let mut model = ScrcModel::<f64>::random(cfg, &mut rng, 1.5).unwrap();
        random_biases(&mut model, &mut rng, 1.5);
        let visual = random_visual(&mut rng, cfg.feat_dim);

        let mut candidates: Vec<Vec<u32>> = vec![vec![]];
        for len in 1..=3 {
            let mut level: Vec<Vec<u32>> = vec![vec![]];
            for _ in 0..len {
                level = level
                    .into_iter()
                    .flat_map(|p| words.iter().map(move |&w| [p.clone(), vec![w]].concat()))
                    .collect();
            }
            candidates.extend(level);
        }
        let mut best: Option<(f64, Vec<u32>)> = None;
        for c in candidates {
            let s = path_log_prob(&model, &visual, &c);
            let better = match &best {
                None => true,
                Some((bs, bc)) => s > *bs || (s == *bs && c < *bc),
            };
            if better {
                best = Some((s, c));
            }
        }
        let (best_score, best_tokens) = best.unwrap();
        let got = model.generate_description(&visual, 125, 3).unwrap();
        if got.tokens.ids == best_tokens && (got.log_prob - best_score).abs() <= 1e-9 {
            agree += 1;
        }
    }
    verdict(agree == 50, format!("{agree}/50 draws match the exhaustive argmax"))
}

// Criterion 7 -----------------------------------------------------------------------------

fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

fn metric_fixtures() -> Verdict {
    let boxes = [
        bx(0.0, 0.0, 10.0, 10.0),
        bx(20.0, 0.0, 30.0, 10.0),
        bx(0.0, 20.0, 10.0, 30.0),
    ];
    let gt_results = vec![
        RankedResult::new("a", "i", &boxes, &[0.9, 0.1, 0.0], boxes[0], Some(0)).unwrap(),
        RankedResult::new("b", "i", &boxes, &[0.2, 0.7, 0.1], boxes[1], Some(1)).unwrap(),
        RankedResult::new("c", "i", &boxes, &[0.6, 0.3, 0.5], boxes[2], Some(2)).unwrap(),
    ];
    let p1 = eval_gt_scenario(&gt_results).unwrap().p_at_1.unwrap();

    // Twelve proposals; the only hit (the gt box itself) ranks 1st, 5th and 11th.
    let gt = bx(0.0, 0.0, 10.0, 10.0);
    let mut proposals = vec![gt];
    proposals.extend((1..12).map(|k| bx(20.0 * k as f64, 50.0, 20.0 * k as f64 + 10.0, 60.0)));
    let scores_with_hit_at = |rank: usize| -> Vec<f64> {
        let mut s: Vec<f64> = (1..12).map(|k| 100.0 - k as f64).collect();
        let hit_score = if rank == 1 { 1000.0 } else { s[rank - 2] - 0.5 };
        s.insert(0, hit_score);
        s
    };
    let prop_results: Vec<RankedResult> = [1, 5, 11]
        .iter()
        .map(|&r| RankedResult::new("q", "i", &proposals, &scores_with_hit_at(r), gt, None).unwrap())
        .collect();
    let m = eval_proposal_scenario(&prop_results).unwrap();
    let exact = p1 == 2.0 / 3.0 && m.r_at_1 == Some(1.0 / 3.0) && m.r_at_10 == Some(2.0 / 3.0) && m.oracle == Some(1.0);

    let mut rng = Rng::new(7);
    let mut monotone = 0;
    for _ in 0..1000 {
        let queries = 1 + rng.below(6);
        let results: Vec<RankedResult> = (0..queries)
            .map(|_| {
                let n = 1 + rng.below(40);
                let rand_box = |rng: &mut Rng| {
                    let x = rng.uniform(0.0, 80.0);
                    let y = rng.uniform(0.0, 80.0);
                    bx(x, y, x + rng.uniform(1.0, 20.0), y + rng.uniform(1.0, 20.0))
                };
                let cands: Vec<BoundingBox> = (0..n).map(|_| rand_box(&mut rng)).collect();
                let scores: Vec<f64> = (0..n).map(|_| rng.uniform(-5.0, 5.0)).collect();
                let gt = if rng.below(2) == 0 {
                    cands[rng.below(n)]
                } else {
                    rand_box(&mut rng)
                };
                RankedResult::new("q", "i", &cands, &scores, gt, None).unwrap()
            })
            .collect();
        let m = eval_proposal_scenario(&results).unwrap();
        let (r1, r10, o) = (m.r_at_1.unwrap(), m.r_at_10.unwrap(), m.oracle.unwrap());
        if 0.0 <= r1 && r1 <= r10 && r10 <= o && o <= 1.0 {
            monotone += 1;
        }
    }
    verdict(
        exact && monotone == 1000,
        format!(
            "P@1 {p1:.4}, R@1 {:.4}, R@10 {:.4}, Oracle {:.4} (exact: {exact}); R@1 ≤ R@10 ≤ Oracle on {monotone}/1000",
            m.r_at_1.unwrap(),
            m.r_at_10.unwrap(),
            m.oracle.unwrap()
        ),
    )
}

// Criterion 8 -----------------------------------------------------------------------------

fn geometry_exactness() -> Verdict {
    let img = ImageSize::new(200.0, 100.0).unwrap();
    let cases: [(BoundingBox, [f64; 8]); 3] = [
        (bx(0.0, 0.0, 200.0, 100.0), [-1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 2.0, 2.0]),
        (bx(100.0, 0.0, 200.0, 100.0), [0.0, -1.0, 1.0, 1.0, 0.5, 0.0, 1.0, 2.0]),
        (bx(50.0, 25.0, 150.0, 75.0), [-0.5, -0.5, 0.5, 0.5, 0.0, 0.0, 1.0, 1.0]),
    ];
    let mut worst = 0.0f64;
    for (b, expected) in cases {
        let got = encode_spatial(&b, img).unwrap();
        for (g, e) in got.0.iter().zip(expected) {
            worst = worst.max((g - e).abs());
        }
    }
    let a = bx(0.0, 0.0, 2.0, 2.0);
    let ious = [
        (iou(&a, &a), 1.0),
        (iou(&a, &bx(5.0, 5.0, 6.0, 6.0)), 0.0),
        (iou(&a, &bx(1.0, 1.0, 3.0, 3.0)), 1.0 / 7.0),
        (iou(&bx(0.0, 0.0, 1.0, 2.0), &a), 0.5),
    ];
    for (g, e) in ious {
        worst = worst.max((g - e).abs());
    }
    let inclusive = is_hit(&bx(0.0, 0.0, 1.0, 2.0), &a) && is_hit(&a, &a) && !is_hit(&bx(5.0, 5.0, 6.0, 6.0), &a);
    verdict(
        worst <= 1e-9 && inclusive,
        format!("max deviation {worst:.2e} (limit 1e-9); hit at IoU exactly 0.5: {inclusive}"),
    )
}

// Criterion 9 -----------------------------------------------------------------------------

fn is_named_format_error(e: &ScrcError) -> bool {
    matches!(e, ScrcError::Format { .. } | ScrcError::UnsupportedVersion { .. }) && !e.to_string().is_empty()
}

fn persistence() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(9);
    let mut notes = Vec::new();
    let mut ok = true;

    let mut store = FeatureStore::new(4);
    store
        .insert("edge", vec![-0.0, f32::MIN_POSITIVE, 1e-45, f32::MAX])
        .unwrap();
    for i in 0..20 {
        store
            .insert(
                format!("k{i}"),
                (0..4).map(|_| rng.uniform(-10.0, 10.0) as f32).collect(),
            )
            .unwrap();
    }
    let fpath = dir.path().join("f.bin");
    scrc::datastore::save_feature_store(&store, &fpath).unwrap();
    let loaded = scrc::datastore::load_feature_store(&fpath).unwrap();
    let feat_exact = loaded.keys().eq(store.keys())
        && store.keys().all(|k| {
            store
                .get(k)
                .unwrap()
                .iter()
                .map(|v| v.to_bits())
                .eq(loaded.get(k).unwrap().iter().map(|v| v.to_bits()))
        });
    ok &= feat_exact;
    notes.push(format!("feature round trip bit-exact: {feat_exact}"));

    let vocab = Vocabulary::build(&["the red ball on the left", "blue cube"], 1).unwrap();
    let cfg = ScrcConfig::new(vocab.len(), 5, 6, 4).with_masks(true, false);
    let model = ScrcModel::<f32>::random(cfg, &mut rng, 0.3).unwrap();
    let cpath = dir.path().join("m.ckpt");
    scrc::datastore::save_checkpoint(&model, &vocab, &cpath).unwrap();
    let back = scrc::datastore::load_checkpoint(&cpath).unwrap();
    let ckpt_exact = back.model.config == cfg
        && back.vocabulary == vocab
        && model
            .params
            .named_tensors()
            .iter()
            .zip(back.model.params.named_tensors())
            .all(|((na, a), (nb, b))| {
                na == &nb
                    && a.value
                        .data()
                        .iter()
                        .map(|v| v.to_bits())
                        .eq(b.value.data().iter().map(|v| v.to_bits()))
            });
    ok &= ckpt_exact;
    notes.push(format!("checkpoint round trip bit-exact: {ckpt_exact}"));

    let feat_bytes = store.to_bytes();
    let ckpt_bytes = Checkpoint::new(&model, &vocab).unwrap().to_bytes();
    let mut truncations_rejected = true;
    for cut in 0..feat_bytes.len() {
        truncations_rejected &= FeatureStore::from_bytes(&feat_bytes[..cut]).is_err_and(|e| is_named_format_error(&e));
    }
    for cut in 0..ckpt_bytes.len() {
        truncations_rejected &= Checkpoint::from_bytes(&ckpt_bytes[..cut]).is_err_and(|e| is_named_format_error(&e));
    }
    ok &= truncations_rejected;
    notes.push(format!(
        "every truncation rejected with a format error: {truncations_rejected}"
    ));

    let mut bad_magic = ckpt_bytes.clone();
    bad_magic[0] ^= 0xff;
    let mut bad_version = feat_bytes.clone();
    bad_version[8] = 9;
    let headers = matches!(
        Checkpoint::from_bytes(&bad_magic),
        Err(ScrcError::Format { offset: 0, .. })
    ) && matches!(
        FeatureStore::from_bytes(&bad_version),
        Err(ScrcError::UnsupportedVersion { found: 9, .. })
    );
    ok &= headers;
    notes.push(format!("bad magic/version named: {headers}"));

    // Random byte corruption must never panic.
    let mut panics = 0;
    for _ in 0..2000 {
        for bytes in [&feat_bytes, &ckpt_bytes] {
            let mut b = bytes.clone();
            for _ in 0..1 + rng.below(4) {
                let i = rng.below(b.len());
                b[i] = rng.below(256) as u8;
            }
            let r = catch_unwind(|| {
                let _ = FeatureStore::from_bytes(&b);
                let _ = Checkpoint::from_bytes(&b);
            });
            panics += usize::from(r.is_err());
        }
    }
    ok &= panics == 0;
    notes.push(format!("panics under 4000 random corruptions: {panics}"));
    verdict(ok, notes.join("; "))
}

// Criterion 10 ----------------------------------------------------------------------------

fn pipeline_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let d = |n: &str| p(dir, n);
    scrc(&["synth", "--out-dir", dir.to_str().unwrap(), "--seed", "11"]);
    scrc(&[
        "pretrain",
        "--captions",
        &d("captions.jsonl"),
        "--context-features",
        &d("context_features.bin"),
        "--annotations",
        &d("annotations.jsonl"),
        "--config",
        &d("config.json"),
        "--seed",
        "11",
        "--steps",
        "200",
        "--out",
        &d("pre.ckpt"),
    ]);
    scrc(&["transfer", "--in", &d("pre.ckpt"), "--out", &d("tr.ckpt")]);
    scrc(&[
        "finetune",
        "--annotations",
        &d("annotations.jsonl"),
        "--region-features",
        &d("region_features.bin"),
        "--context-features",
        &d("context_features.bin"),
        "--config",
        &d("config.json"),
        "--in",
        &d("tr.ckpt"),
        "--seed",
        "11",
        "--steps",
        "300",
        "--out",
        &d("ft.ckpt"),
    ]);
    let gt = scrc(&[
        "eval",
        "--model",
        &d("ft.ckpt"),
        "--scenario",
        "gt",
        "--annotations",
        &d("annotations.jsonl"),
        "--region-features",
        &d("region_features.bin"),
        "--context-features",
        &d("context_features.bin"),
    ]);
    let props = scrc(&[
        "eval",
        "--model",
        &d("ft.ckpt"),
        "--scenario",
        "proposals",
        "--annotations",
        &d("annotations.jsonl"),
        "--proposals",
        &d("proposals.jsonl"),
        "--region-features",
        &d("region_features.bin"),
        "--context-features",
        &d("context_features.bin"),
    ]);
    let mut out: Vec<(String, Vec<u8>)> = [
        "annotations.jsonl",
        "captions.jsonl",
        "proposals.jsonl",
        "region_features.bin",
        "context_features.bin",
        "pre.ckpt",
        "tr.ckpt",
        "ft.ckpt",
    ]
    .iter()
    .map(|n| (n.to_string(), std::fs::read(dir.join(n)).unwrap()))
    .collect();
    out.push(("eval gt".into(), gt));
    out.push(("eval proposals".into(), props));
    out
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline_outputs(a.path());
    let second = pipeline_outputs(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        differing.is_empty(),
        format!(
            "{} artifacts compared across two runs; differing: {differing:?}",
            first.len()
        ),
    )
}
