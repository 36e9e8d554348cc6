use patchshift_core::attention::{
    patch_shift_attention, AttentionParams, RelPosBias3D, WindowLayout,
};
use patchshift_core::init::uniform;
use patchshift_core::ops::softmax;
use patchshift_core::oracle::oracle_attention;
use patchshift_core::patterns::{build_pattern, tile_offsets, PatternKind};
use patchshift_core::shift::{
    channel_shift, generic_shift, patch_shift, ShiftDirection, ShiftSelection, TokenTensor,
};
use patchshift_core::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tokens(seed: u64, extents: [usize; 4]) -> TokenTensor {
    TokenTensor::new(uniform(
        &mut ChaCha8Rng::seed_from_u64(seed),
        &extents,
        -1.0,
        1.0,
    ))
    .unwrap()
}

fn builtin() -> impl Strategy<Value = PatternKind> {
    (0..PatternKind::BUILTIN.len()).prop_map(|i| PatternKind::BUILTIN[i].clone())
}

fn sorted_bits(t: &Tensor) -> Vec<u64> {
    let mut v: Vec<u64> = t.data().iter().map(|x| x.to_bits()).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn patch_shift_round_trips(kind in builtin(), frames in 1usize..6, h in 1usize..7, w in 1usize..7,
                               dim in 1usize..5, seed: u64) {
        let z = tokens(seed, [frames, h, w, dim]);
        let grid = tile_offsets(&build_pattern(&kind).unwrap(), h, w);
        let fwd = patch_shift(&z, &grid, ShiftDirection::Forward).unwrap();
        prop_assert_eq!(sorted_bits(fwd.tensor()), sorted_bits(z.tensor()));
        let back = patch_shift(&fwd, &grid, ShiftDirection::Inverse).unwrap();
        prop_assert_eq!(back, z);
    }

    #[test]
    fn channel_shift_round_trips(frames in 1usize..6, h in 1usize..4, w in 1usize..4,
                                 half in 1usize..5, fold in 0usize..3, seed: u64) {
        let dim = 2 * half;
        let fold = fold.min(half);
        let ratio = (2 * fold) as f64 / dim as f64;
        let z = tokens(seed, [frames, h, w, dim]);
        let fwd = channel_shift(&z, ratio, ShiftDirection::Forward).unwrap();
        prop_assert_eq!(sorted_bits(fwd.tensor()), sorted_bits(z.tensor()));
        prop_assert_eq!(channel_shift(&fwd, ratio, ShiftDirection::Inverse).unwrap(), z);
    }

    #[test]
    fn generic_shift_specializes(kind in builtin(), frames in 1usize..5, h in 1usize..6, w in 1usize..6,
                                 half in 1usize..4, seed: u64) {
        let dim = 2 * half;
        let z = tokens(seed, [frames, h, w, dim]);
        let grid = tile_offsets(&build_pattern(&kind).unwrap(), h, w);
        let sel = ShiftSelection::from_patch_grid(&grid, dim);
        prop_assert!(sel.is_patch_mode());
        prop_assert_eq!(generic_shift(&z, &sel).unwrap(), patch_shift(&z, &grid, ShiftDirection::Forward).unwrap());
        let ratio = 2.0 / dim as f64;
        let sel = ShiftSelection::from_channel_ratio(h * w, dim, ratio).unwrap();
        prop_assert!(sel.is_channel_mode());
        prop_assert_eq!(generic_shift(&z, &sel).unwrap(), channel_shift(&z, ratio, ShiftDirection::Forward).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..9, seed: u64, scale in 0.1f64..50.0) {
        let x = uniform(&mut ChaCha8Rng::seed_from_u64(seed), &[rows, cols], -scale, scale);
        let y = softmax(&x, 1).unwrap();
        for row in y.data().chunks(cols) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fast_path_matches_oracle(kind in builtin(), frames in 2usize..5, big in any::<bool>(),
                                heads in 1usize..3, seed: u64) {
        let (grid, win) = if big { (6, 3) } else { (4, 2) };
        let dim = 2 * heads;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias = RelPosBias3D { heads, max_frames: frames, win_h: win, win_w: win };
        let mut params = AttentionParams::init(dim, bias, &mut rng, 0.5).unwrap();
        params.bias_table = uniform(&mut rng, &bias.table_shape(), -1.0, 1.0);
        let z = TokenTensor::new(uniform(&mut rng, &[frames, grid, grid, dim], -1.0, 1.0)).unwrap();
        let layout = WindowLayout::new(grid, grid, win, win).unwrap();
        let pattern = build_pattern(&kind).unwrap();
        let fast = patch_shift_attention(&z, &pattern, layout, &params).unwrap();
        let slow = oracle_attention(&z, &pattern, layout, &params).unwrap();
        prop_assert!(fast.tensor().max_abs_diff(slow.tensor()) < 1e-9);
    }
}
