use rand::Rng;

use hga::head::{score, HeadConfig, HeadParams, PositionMode, TypeProjection};
use hga::numerics::Tensor;
use hga::rng::rng_for;

fn t2(rows: &[&[f64]]) -> Tensor<f64> {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn random_params(rng: &mut impl Rng, types: usize, h: usize, d: usize) -> HeadParams<f64> {
    let mut m = |r, c| Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    HeadParams {
        types: (0..types)
            .map(|_| TypeProjection {
                wq: m(h, d),
                bq: m(1, d).reshape(vec![d]).unwrap(),
                wk: m(h, d),
                bk: m(1, d).reshape(vec![d]).unwrap(),
            })
            .collect(),
    }
}

#[test]
fn scores_match_hand_computation() {
    // L=3, H=2, d=2, span positions [0, 0, 1].
    let h = t2(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
    let params = HeadParams {
        types: vec![TypeProjection {
            wq: t2(&[&[1.0, 2.0], &[0.0, 1.0]]),
            bq: Tensor::vector(vec![0.5, 0.0]),
            wk: t2(&[&[0.0, 1.0], &[1.0, 0.0]]),
            bk: Tensor::vector(vec![0.0, -1.0]),
        }],
    };
    let cfg = HeadConfig {
        head_hidden: 2,
        ..HeadConfig::new(1)
    };
    let pos = [0i64, 0, 1];
    let s = score(&h, Some(&pos), &params, &cfg, &[true; 3]).unwrap();

    let q = [[1.5, 2.0], [0.5, 1.0], [1.5, 3.0]];
    let k = [[0.0, 0.0], [1.0, -1.0], [1.0, 0.0]];
    let rot = |v: [f64; 2], p: i64| {
        let (sn, c) = (p as f64).sin_cos();
        [v[0] * c - v[1] * sn, v[0] * sn + v[1] * c]
    };
    for i in 0..3 {
        for j in i..3 {
            let a = rot(q[i], pos[i]);
            let b = rot(k[j], pos[j]);
            let want = a[0] * b[0] + a[1] * b[1];
            assert!((s.get(0, i, j) - want).abs() < 1e-12, "({i},{j}) {} vs {want}", s.get(0, i, j));
        }
    }
    assert!(s.get(0, 2, 0) <= -1e12);
}

#[test]
fn span_scores_are_invariant_to_position_shift() {
    let mut rng = rng_for(11, &[]);
    let (len, hid, d) = (7, 6, 8);
    let h = Tensor::new(vec![len, hid], (0..len * hid).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let params = random_params(&mut rng, 2, hid, d);
    let cfg = HeadConfig {
        head_hidden: d,
        position_mode: PositionMode::Span,
        ..HeadConfig::new(2)
    };
    let pos: Vec<i64> = vec![0, 0, 1, 2, 2, 2, 3];
    let shifted: Vec<i64> = pos.iter().map(|p| p + 37).collect();
    let keep = vec![true; len];
    let a = score(&h, Some(&pos), &params, &cfg, &keep).unwrap();
    let b = score(&h, Some(&shifted), &params, &cfg, &keep).unwrap();
    let none = score(&h, None, &params, &cfg, &keep).unwrap();
    for t in 0..2 {
        for i in 0..len {
            for j in i..len {
                assert!((a.get(t, i, j) - b.get(t, i, j)).abs() < 1e-9);
                if pos[i] == pos[j] {
                    assert!((a.get(t, i, j) - none.get(t, i, j)).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn each_type_score_ignores_other_types() {
    let mut rng = rng_for(12, &[]);
    let (len, hid, d) = (5, 4, 4);
    let h = Tensor::new(vec![len, hid], (0..len * hid).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let big = random_params(&mut rng, 4, hid, d);
    let small = HeadParams {
        types: big.types[..2].to_vec(),
    };
    let pos: Vec<i64> = (0..len as i64).collect();
    let keep = vec![true; len];
    let cfg = |n| HeadConfig {
        head_hidden: d,
        ..HeadConfig::new(n)
    };
    let a = score(&h, Some(&pos), &big, &cfg(4), &keep).unwrap();
    let b = score(&h, Some(&pos), &small, &cfg(2), &keep).unwrap();
    assert_eq!(&a.data()[..b.data().len()], b.data());
}

#[test]
fn padding_rows_and_columns_are_masked() {
    let mut rng = rng_for(13, &[]);
    let (len, hid, d) = (4, 4, 2);
    let h = Tensor::new(vec![len, hid], (0..len * hid).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let params = random_params(&mut rng, 1, hid, d);
    let cfg = HeadConfig {
        head_hidden: d,
        ..HeadConfig::new(1)
    };
    let s = score(&h, None, &params, &cfg, &[true, true, true, false]).unwrap();
    for i in 0..len {
        assert!(s.get(0, i, 3) <= -1e12);
        assert!(s.get(0, 3, i) <= -1e12);
    }
    assert!(s.get(0, 0, 2) > -1e6);
}
