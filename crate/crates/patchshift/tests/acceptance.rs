//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use patchshift::config::RunConfig;
use patchshift::run::{dataset_for, train_model};
use patchshift_core::attention::{
    patch_shift_attention, AttentionParams, RelPosBias3D, WindowLayout,
};
use patchshift_core::gradcheck::grad_check_many;
use patchshift_core::init::uniform;
use patchshift_core::model::{Model, ModelConfig, ModelParams, Variant};
use patchshift_core::oracle::{
    complexity_estimate, measure_macs, oracle_attention, ComplexityKind,
};
use patchshift_core::patterns::{
    build_pattern, pattern_by_name, pattern_metrics, tile_offsets, PatternKind,
};
use patchshift_core::shift::{
    channel_shift, generic_shift, patch_shift, patch_shift_index, ShiftDirection, ShiftSelection,
    TokenTensor,
};
use patchshift_core::tape::{count_macs, Tape};
use patchshift_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn random_tokens(rng: &mut ChaCha8Rng, extents: [usize; 4]) -> TokenTensor {
    TokenTensor::new(uniform(rng, &extents, -1.0, 1.0)).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn invertibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..100 {
        let frames = [2, 3, 4, 8][rng.random_range(0..4)];
        let extents = [
            frames,
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(1..=16),
        ];
        let z = random_tokens(&mut rng, extents);
        for kind in &PatternKind::BUILTIN {
            let grid = tile_offsets(&build_pattern(kind).unwrap(), extents[1], extents[2]);
            let fwd = patch_shift(&z, &grid, ShiftDirection::Forward).unwrap();
            if patch_shift(&fwd, &grid, ShiftDirection::Inverse).unwrap() != z {
                return Outcome::new(
                    false,
                    format!("{} on {extents:?} is not restored", kind.name()),
                );
            }
            checked += 1;
        }
    }
    Outcome::new(
        true,
        format!("{checked} tensor/pattern pairs restored bit-exactly"),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let names = [
        "bayerA",
        "B4",
        "C9",
        "D16",
        "none",
        "center_one",
        "uneven_half",
        "even2",
    ];
    let mut worst = 0.0f64;
    let mut control = f64::INFINITY;
    let configs = 64;
    for i in 0..configs {
        let pattern = pattern_by_name(names[i % names.len()]).unwrap();
        let frames = rng.random_range(2..=4);
        let (grid, win) = [(4, 2), (6, 2), (6, 3)][rng.random_range(0..3)];
        let heads = rng.random_range(1..=2);
        let dim = heads * rng.random_range(1..=3);
        let bias = RelPosBias3D {
            heads,
            max_frames: frames,
            win_h: win,
            win_w: win,
        };
        let mut params = AttentionParams::init(dim, bias, &mut rng, 0.5).unwrap();
        params.bias_table = uniform(&mut rng, &bias.table_shape(), -1.0, 1.0);
        params.bq = uniform(&mut rng, &[dim], -0.5, 0.5);
        params.bo = uniform(&mut rng, &[dim], -0.5, 0.5);
        let z = random_tokens(&mut rng, [frames, grid, grid, dim]);
        let layout = WindowLayout::new(grid, grid, win, win).unwrap();
        let fast = patch_shift_attention(&z, &pattern, layout, &params).unwrap();
        let slow = oracle_attention(&z, &pattern, layout, &params).unwrap();
        worst = worst.max(fast.tensor().max_abs_diff(slow.tensor()));
        // Negative control: the oracle under another pattern must disagree.
        if !pattern.is_identity() {
            let other =
                oracle_attention(&z, &pattern_by_name("none").unwrap(), layout, &params).unwrap();
            control = control.min(fast.tensor().max_abs_diff(other.tensor()));
        }
    }
    Outcome::new(
        worst < 1e-9 && control > 1e-6,
        format!(
            "{configs} configs, max |diff| {worst:.2e}, min diff vs unshifted oracle {control:.2e}"
        ),
    )
}

fn gradients() -> Outcome {
    let config = ModelConfig {
        frames: 6,
        height: 4,
        width: 4,
        tubelet_frames: 2,
        patch: 2,
        depth: 2,
        dim: 4,
        heads: 2,
        window: [2, 2],
        pattern: "bayerA".into(),
        channel_ratio: 0.5,
        classes: 3,
        variant: Variant::Combined,
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = ModelParams::zeros(&config)
        .unwrap()
        .map(&mut |t| uniform(&mut rng, t.shape(), -0.5, 0.5));
    let model = Model::from_params(config.clone(), params.clone()).unwrap();
    let count = model.param_count();
    let mut inputs = Vec::new();
    params.visit(&mut |_, t| inputs.push(t.clone()));
    let video = uniform(&mut rng, &[6, 4, 4, 3], 0.0, 1.0);
    let model_err = grad_check_many(
        |tape, vars| {
            let mut it = vars.iter();
            let p = params.map(&mut |_| *it.next().unwrap());
            let v = tape.leaf(video.clone());
            let logits = model.forward_tape(tape, &p, v)?;
            tape.cross_entropy(logits, &[1])
        },
        &inputs,
        1e-5,
    )
    .unwrap();

    // A shift is a permutation, so its adjoint is the shift-back: <S x, y> = <x, S^-1 y>,
    // and the tape's gather backward must produce exactly S^-1 y.
    let mut adjoint_err = 0.0f64;
    for kind in &PatternKind::BUILTIN {
        let extents = [4, 6, 6, 3];
        let grid = tile_offsets(&build_pattern(kind).unwrap(), 6, 6);
        let x = random_tokens(&mut rng, extents);
        let y = random_tokens(&mut rng, extents);
        let sx = patch_shift(&x, &grid, ShiftDirection::Forward).unwrap();
        let sinv_y = patch_shift(&y, &grid, ShiftDirection::Inverse).unwrap();
        adjoint_err = adjoint_err
            .max((dot(sx.tensor(), y.tensor()) - dot(x.tensor(), sinv_y.tensor())).abs());

        let index: Arc<[usize]> = patch_shift_index(extents, &grid, ShiftDirection::Forward)
            .unwrap()
            .into();
        let n = x.tensor().len();
        let mut tape = Tape::new();
        let xv = tape.leaf(x.tensor().clone());
        let shifted = tape.gather(xv, index, &[n]).unwrap();
        let row = tape.reshape(shifted, &[1, n]).unwrap();
        let w = tape.leaf(y.tensor().clone().reshape([1, n]).unwrap());
        let b = tape.leaf(Tensor::zeros([1]));
        let s = tape.affine(row, w, b).unwrap();
        let grads = tape.backward(s).unwrap();
        let gx = grads.wrt(xv, x.tensor());
        adjoint_err = adjoint_err.max(gx.max_abs_diff(sinv_y.tensor()));
    }
    Outcome::new(
        count <= 5000 && model_err < 1e-5 && adjoint_err < 1e-9,
        format!("{count} params, rel err {model_err:.2e}, adjoint err {adjoint_err:.2e}"),
    )
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        (a + x.ln() / n, b + y.ln() / n)
    });
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), (x, y)| {
        let dx = x.ln() - mx;
        (num + dx * (y.ln() - my), den + dx * dx)
    });
    num / den
}

fn scaling() -> Outcome {
    let (tokens, dim, heads, window) = (16, 8, 2, 4);
    let mut detail = Vec::new();
    let mut pass = true;
    for (kind, target) in [
        (ComplexityKind::PatchShift, 1.0),
        (ComplexityKind::Joint, 2.0),
    ] {
        let mut points = Vec::new();
        for frames in [2usize, 4, 8, 16] {
            let measured = measure_macs(kind, tokens, frames, dim, heads, window).unwrap();
            let est = complexity_estimate(kind, tokens, frames, dim, heads, window).unwrap();
            if measured.attention != est.attention_macs()
                || measured.projection != est.projection_macs
            {
                pass = false;
                detail.push(format!(
                    "{} T={frames}: measured {measured:?} != estimate",
                    kind.name()
                ));
            }
            points.push((frames as f64, measured.attention as f64));
        }
        let s = slope(&points);
        pass &= (s - target).abs() <= 0.01;
        detail.push(format!("{} slope {s:.4}", kind.name()));
    }
    Outcome::new(pass, detail.join(", "))
}

fn parity() -> Outcome {
    let tally = |model: &Model, video: &Tensor| {
        count_macs(|tape| {
            let p = model.params().bind(tape);
            let x = tape.leaf(video.clone());
            model.forward_tape(tape, &p, x).map(|_| ())
        })
        .unwrap()
    };
    let base_cfg = RunConfig::default().model;
    let video = uniform(
        &mut ChaCha8Rng::seed_from_u64(5),
        &[base_cfg.frames, base_cfg.height, base_cfg.width, 3],
        0.0,
        1.0,
    );
    let avg = Model::new(
        ModelConfig {
            variant: Variant::Avgpool,
            ..base_cfg.clone()
        },
        0,
    )
    .unwrap();
    let patch = Model::new(
        ModelConfig {
            variant: Variant::PatchOnly,
            ..base_cfg
        },
        0,
    )
    .unwrap();
    let (ta, tp) = (tally(&avg, &video), tally(&patch, &video));
    let params_equal = avg.param_count() == patch.param_count();
    let macs_equal = ta == tp;

    let mut ratio_ok = true;
    for frames in [2usize, 3, 4, 8, 16] {
        let joint = complexity_estimate(ComplexityKind::Joint, 16, frames, 8, 2, 16).unwrap();
        let ps = complexity_estimate(ComplexityKind::PatchShift, 16, frames, 8, 2, 16).unwrap();
        ratio_ok &= joint.buffer_elements == frames as u64 * ps.buffer_elements;
    }
    Outcome::new(
        params_equal && macs_equal && ratio_ok,
        format!(
            "params {} vs {}, SA MACs {} vs {}, joint/patch-shift buffer ratio == T: {ratio_ok}",
            avg.param_count(),
            patch.param_count(),
            ta.attention,
            tp.attention
        ),
    )
}

fn separation() -> Outcome {
    let start = Instant::now();
    let base = RunConfig::default();
    let data = dataset_for(&base).unwrap();
    let top1 = |variant: Variant| {
        let mut cfg = base.clone();
        cfg.model.variant = variant;
        let (_, records) = train_model(&cfg, &data, |_| Ok(())).unwrap();
        records.last().unwrap().val_top1
    };
    let avg = top1(Variant::Avgpool);
    let patch = top1(Variant::PatchOnly);
    let channel = top1(Variant::ChannelOnly);
    let combined = top1(Variant::Combined);
    let secs = start.elapsed().as_secs_f64();
    let pass = (0.45..=0.60).contains(&avg)
        && patch >= 0.90
        && patch - avg >= 0.30
        && combined >= channel - 0.02
        && secs <= 300.0;
    Outcome::new(
        pass,
        format!(
            "avgpool {avg:.3}, patch-only {patch:.3}, channel-only {channel:.3}, combined {combined:.3}, {secs:.0} s"
        ),
    )
}

fn metrics() -> Outcome {
    let m = |name: &str| pattern_metrics(&pattern_by_name(name).unwrap());
    let (bayer, c9, centre) = (m("bayerA"), m("C9"), m("center_one"));
    let (even, uneven) = (m("even2").evenness, m("uneven_half").evenness);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    let pass = bayer.receptive_field == 3
        && close(bayer.shift_pct, 0.5)
        && c9.receptive_field == 9
        && close(c9.shift_pct, 8.0 / 9.0)
        && centre.receptive_field == 2
        && close(centre.shift_pct, 1.0 / 9.0)
        && even < uneven;
    Outcome::new(
        pass,
        format!(
            "bayerA ({}, {:.3}), C9 ({}, {:.3}), center_one ({}, {:.3}), evenness even2 {even:.3} < uneven_half {uneven:.3}",
            bayer.receptive_field,
            bayer.shift_pct,
            c9.receptive_field,
            c9.shift_pct,
            centre.receptive_field,
            centre.shift_pct
        ),
    )
}

fn specialization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let dim = 2 * rng.random_range(1..=8);
        let extents = [
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            dim,
        ];
        let z = random_tokens(&mut rng, extents);
        let kind = &PatternKind::BUILTIN[i % PatternKind::BUILTIN.len()];
        let grid = tile_offsets(&build_pattern(kind).unwrap(), extents[1], extents[2]);
        let sel = ShiftSelection::from_patch_grid(&grid, dim);
        if generic_shift(&z, &sel).unwrap()
            != patch_shift(&z, &grid, ShiftDirection::Forward).unwrap()
        {
            return Outcome::new(
                false,
                format!("patch selection {} differs on {extents:?}", kind.name()),
            );
        }
        let ratio = (2 * rng.random_range(0..=dim / 2)) as f64 / dim as f64;
        let sel = ShiftSelection::from_channel_ratio(extents[1] * extents[2], dim, ratio).unwrap();
        if generic_shift(&z, &sel).unwrap()
            != channel_shift(&z, ratio, ShiftDirection::Forward).unwrap()
        {
            return Outcome::new(
                false,
                format!("channel selection ratio {ratio} differs on {extents:?}"),
            );
        }
    }
    Outcome::new(true, "100 inputs, patch and channel selections bit-equal")
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, f64); 8] = [
        ("shift-back restores input", invertibility, 10.0),
        ("fast attention matches oracle", oracle_equivalence, 60.0),
        ("gradients and adjoint", gradients, 120.0),
        ("attention MAC scaling", scaling, f64::INFINITY),
        ("zero-overhead parity", parity, f64::INFINITY),
        ("temporal separation on reversal2", separation, 300.0),
        ("pattern metrics", metrics, f64::INFINITY),
        (
            "generic shift specialization",
            specialization,
            f64::INFINITY,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let pass = outcome.pass && secs <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {}: {} {name}: {} ({secs:.1} s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
