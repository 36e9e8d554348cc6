use patchshift_core::attention::{
    joint_attention, patch_shift_attention, relpos_index, window_mhsa, windowed_attention,
    AttentionParams, AttentionPlan, RelPosBias3D, WindowLayout,
};
use patchshift_core::init::uniform;
use patchshift_core::oracle::{complexity_estimate, oracle_attention, ComplexityKind};
use patchshift_core::patterns::{pattern_by_name, tile_offsets};
use patchshift_core::shift::TokenTensor;
use patchshift_core::tape::Tape;
use patchshift_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bias(heads: usize, frames: usize, win: usize) -> RelPosBias3D {
    RelPosBias3D {
        heads,
        max_frames: frames,
        win_h: win,
        win_w: win,
    }
}

fn random_params(seed: u64, dim: usize, geometry: RelPosBias3D) -> AttentionParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = AttentionParams::init(dim, geometry, &mut rng, 0.4).unwrap();
    p.bias_table = uniform(&mut rng, &geometry.table_shape(), -1.0, 1.0);
    p.bv = uniform(&mut rng, &[dim], -0.3, 0.3);
    p
}

fn random_tokens(seed: u64, extents: [usize; 4]) -> TokenTensor {
    TokenTensor::new(uniform(
        &mut ChaCha8Rng::seed_from_u64(seed),
        &extents,
        -1.0,
        1.0,
    ))
    .unwrap()
}

#[test]
fn relpos_without_shift_is_planar() {
    let g = bias(1, 3, 2);
    let layout = WindowLayout::new(2, 2, 2, 2).unwrap();
    let idx = relpos_index(&g, &layout, &[1, 1, 1, 1]).unwrap();
    for (e, &i) in idx.iter().enumerate() {
        let (q, k) = (e / 4, e % 4);
        let expect = g
            .index(
                0,
                (k / 2) as i64 - (q / 2) as i64,
                (k % 2) as i64 - (q % 2) as i64,
            )
            .unwrap();
        assert_eq!(i, expect);
    }
}

#[test]
fn relpos_frame_pair_is_antisymmetric() {
    let g = RelPosBias3D {
        heads: 1,
        max_frames: 2,
        win_h: 1,
        win_w: 2,
    };
    let layout = WindowLayout::new(1, 2, 1, 2).unwrap();
    let idx = relpos_index(&g, &layout, &[0, 1]).unwrap();
    assert_eq!(idx[1], g.index(1, 0, 1).unwrap());
    assert_eq!(idx[2], g.index(-1, 0, -1).unwrap());
    // The flat index is affine in the displacement, so mirrored pairs straddle the centre.
    assert_eq!(idx[1] + idx[2], 2 * g.index(0, 0, 0).unwrap());
    assert_eq!(
        (idx[0], idx[3]),
        (g.index(0, 0, 0).unwrap(), g.index(0, 0, 0).unwrap())
    );
}

#[test]
fn relpos_bayer_window_hand_enumerated() {
    // Host frame 1 of 3; the 2x2 Bayer cell reads frames 1, 0, 2, 1.
    let g = bias(1, 3, 2);
    let layout = WindowLayout::new(2, 2, 2, 2).unwrap();
    let idx = relpos_index(&g, &layout, &[1, 0, 2, 1]).unwrap();
    assert_eq!(
        idx,
        [22, 14, 34, 26, 30, 22, 42, 34, 10, 2, 22, 14, 18, 10, 30, 22]
    );
}

#[test]
fn relpos_out_of_table_is_contract_error() {
    let g = bias(1, 2, 2);
    let layout = WindowLayout::new(2, 2, 2, 2).unwrap();
    assert!(relpos_index(&g, &layout, &[0, 0, 0, 3]).is_err());
}

#[test]
fn single_token_window_is_projected_value() {
    let g = bias(2, 1, 1);
    let p = random_params(3, 4, g);
    let x = Tensor::new([1, 4], vec![0.3, -0.2, 0.9, 0.1]).unwrap();
    let out = window_mhsa(&x, &p, &[0]).unwrap();
    let v = patchshift_core::ops::affine(&x, &p.wv, &p.bv).unwrap();
    let expect = patchshift_core::ops::affine(&v, &p.wo, &p.bo).unwrap();
    assert!(out.max_abs_diff(&expect) < 1e-15);
}

#[test]
fn identical_tokens_give_identical_outputs() {
    let g = bias(2, 1, 2);
    let mut p = random_params(4, 4, g);
    p.bias_table = Tensor::zeros(g.table_shape());
    let x = Tensor::new([4, 4], [0.5, -0.1, 0.2, 0.7].repeat(4)).unwrap();
    let layout = WindowLayout::new(2, 2, 2, 2).unwrap();
    let idx = relpos_index(&g, &layout, &[0; 4]).unwrap();
    let out = window_mhsa(&x, &p, &idx).unwrap();
    for i in 1..4 {
        for d in 0..4 {
            assert!((out.get(&[i, d]) - out.get(&[0, d])).abs() < 1e-15);
        }
    }
}

/// Direct double loop over heads, queries and keys.
fn naive_window(x: &Tensor, p: &AttentionParams, idx: &[usize]) -> Tensor {
    let (n, dim) = (x.shape()[0], x.shape()[1]);
    let heads = p.heads();
    let hd = dim / heads;
    let lin = |w: &Tensor, b: &Tensor, i: usize, o: usize| -> f64 {
        b.data()[o]
            + (0..dim)
                .map(|j| w.get(&[o, j]) * x.get(&[i, j]))
                .sum::<f64>()
    };
    let mut cat = vec![vec![0.0; dim]; n];
    for h in 0..heads {
        for i in 0..n {
            let mut s: Vec<f64> = (0..n)
                .map(|j| {
                    let dot: f64 = (h * hd..(h + 1) * hd)
                        .map(|e| lin(&p.wq, &p.bq, i, e) * lin(&p.wk, &p.bk, j, e))
                        .sum();
                    dot / (hd as f64).sqrt() + p.bias_table.get(&[h, idx[i * n + j]])
                })
                .collect();
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = s
                .iter_mut()
                .map(|v| {
                    *v = (*v - m).exp();
                    *v
                })
                .sum();
            for j in 0..n {
                for e in h * hd..(h + 1) * hd {
                    cat[i][e] += s[j] / z * lin(&p.wv, &p.bv, j, e);
                }
            }
        }
    }
    let mut out = Tensor::zeros([n, dim]);
    for i in 0..n {
        for o in 0..dim {
            let v = p.bo.data()[o] + (0..dim).map(|j| p.wo.get(&[o, j]) * cat[i][j]).sum::<f64>();
            out.set(&[i, o], v);
        }
    }
    out
}

#[test]
fn window_mhsa_matches_double_loop() {
    let g = bias(2, 2, 2);
    let p = random_params(5, 6, g);
    let x = uniform(&mut ChaCha8Rng::seed_from_u64(6), &[4, 6], -1.0, 1.0);
    let layout = WindowLayout::new(2, 2, 2, 2).unwrap();
    let idx = relpos_index(&g, &layout, &[0, 1, 1, 0]).unwrap();
    let fast = window_mhsa(&x, &p, &idx).unwrap();
    assert!(fast.max_abs_diff(&naive_window(&x, &p, &idx)) < 1e-12);
}

#[test]
fn no_pattern_is_spatial_windowed_attention() {
    let p = random_params(7, 4, bias(2, 3, 2));
    let z = random_tokens(8, [3, 4, 4, 4]);
    let layout = WindowLayout::new(4, 4, 2, 2).unwrap();
    let a = patch_shift_attention(&z, &pattern_by_name("none").unwrap(), layout, &p).unwrap();
    let b = windowed_attention(&z, layout, &p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bayer_matches_oracle_and_preserves_shape() {
    let p = random_params(9, 8, bias(2, 4, 2));
    let z = random_tokens(10, [4, 4, 4, 8]);
    let layout = WindowLayout::new(4, 4, 2, 2).unwrap();
    let pat = pattern_by_name("bayerA").unwrap();
    let fast = patch_shift_attention(&z, &pat, layout, &p).unwrap();
    let slow = oracle_attention(&z, &pat, layout, &p).unwrap();
    assert_eq!(fast.extents(), z.extents());
    assert!(fast.tensor().max_abs_diff(slow.tensor()) < 1e-9);
}

#[test]
fn attention_rows_are_stochastic() {
    let g = bias(2, 3, 2);
    let p = random_params(11, 4, g);
    let z = random_tokens(12, [3, 4, 4, 4]);
    let layout = WindowLayout::new(4, 4, 2, 2).unwrap();
    let grid = tile_offsets(&pattern_by_name("bayerA").unwrap(), 4, 4);
    let plan = AttentionPlan::patch_shift(z.extents(), layout, &g, &grid, true).unwrap();
    let mut tape = Tape::new();
    let pv = p.bind(&mut tape);
    let x = tape.leaf(z.tensor().clone());
    let (_, probs) = plan.forward_with_probs(&mut tape, x, &pv).unwrap();
    for row in tape.value(probs).data().chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn shifted_bias_indices_change_the_output() {
    let g = bias(1, 4, 2);
    let p = random_params(13, 4, g);
    let z = random_tokens(14, [4, 4, 4, 4]);
    let layout = WindowLayout::new(4, 4, 2, 2).unwrap();
    let grid = tile_offsets(&pattern_by_name("bayerA").unwrap(), 4, 4);
    let with = AttentionPlan::patch_shift(z.extents(), layout, &g, &grid, true)
        .unwrap()
        .apply(&z, &p)
        .unwrap();
    let without = AttentionPlan::patch_shift(z.extents(), layout, &g, &grid, false)
        .unwrap()
        .apply(&z, &p)
        .unwrap();
    assert!(with.tensor().max_abs_diff(without.tensor()) > 1e-6);
    // A constant table cannot tell the two apart.
    let mut flat = p.clone();
    flat.bias_table = Tensor::full(g.table_shape(), 0.3);
    let a = AttentionPlan::patch_shift(z.extents(), layout, &g, &grid, true)
        .unwrap()
        .apply(&z, &flat)
        .unwrap();
    let b = AttentionPlan::patch_shift(z.extents(), layout, &g, &grid, false)
        .unwrap()
        .apply(&z, &flat)
        .unwrap();
    assert!(a.tensor().max_abs_diff(b.tensor()) < 1e-12);
}

#[test]
fn joint_attention_preserves_shape() {
    let p = random_params(15, 4, bias(2, 2, 1));
    let z = random_tokens(16, [2, 2, 3, 4]);
    let out = joint_attention(&z, &p).unwrap();
    assert_eq!(out.extents(), z.extents());
    assert!(out.tensor().is_finite());
}

#[test]
fn buffer_sizes_for_sixteen_tokens_four_frames() {
    let ps = complexity_estimate(ComplexityKind::PatchShift, 16, 4, 8, 1, 4).unwrap();
    assert_eq!(ps.buffer_elements, (16 / 4) * 4 * 4 * 4);
    let full = complexity_estimate(ComplexityKind::PatchShift, 16, 4, 8, 1, 16).unwrap();
    let joint = complexity_estimate(ComplexityKind::Joint, 16, 4, 8, 1, 16).unwrap();
    assert_eq!((full.buffer_elements, joint.buffer_elements), (1024, 4096));
}

#[test]
fn layout_rejects_non_dividing_window() {
    assert!(WindowLayout::new(4, 4, 3, 3).is_err());
    let p = random_params(17, 4, bias(1, 2, 2));
    let z = random_tokens(18, [2, 4, 4, 4]);
    let wrong = WindowLayout::new(2, 2, 2, 2).unwrap();
    assert!(windowed_attention(&z, wrong, &p).is_err());
}
