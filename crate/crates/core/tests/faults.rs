use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reram_ft::xbar::{inject_saf, stream_id, FaultModel, Polarity, DEFAULT_SA1_SHARE};
use reram_ft::BitMatrix;

/// Cells whose stuck value differs from what was programmed.
fn errors(stored: &BitMatrix, faults: &reram_ft::xbar::FaultMap) -> usize {
    faults
        .iter()
        .filter(|&(r, c, v)| stored.get(r, c) != v)
        .count()
}

#[test]
fn flipping_a_sparse_msb_plane_reduces_faulty_reads() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let model = FaultModel::with_rate(0.01, 77).unwrap();
    let arrays = 1000;
    let mut diffs = Vec::with_capacity(arrays);
    for a in 0..arrays {
        // More than 99% zeros, as in the MSB plane of a trained layer.
        let mut logical = BitMatrix::zeros(32, 32);
        for r in 0..32 {
            for c in 0..32 {
                if rng.random_bool(0.005) {
                    logical.set(r, c, 1);
                }
            }
        }
        let faults = inject_saf(32, 32, &model, stream_id(a as u32, 0, 0, Polarity::Pos));
        let plain = errors(&logical, &faults) as f64;
        let flipped = errors(&logical.complement(), &faults) as f64;
        diffs.push(plain - flipped);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = mean / (var / n).sqrt();
    // One-sided test at roughly the 1e-6 level.
    assert!(z > 4.75, "mean {mean}, z {z}");
}

#[test]
fn fault_streams_are_independent() {
    let model = FaultModel::with_rate(0.1, 5).unwrap();
    let (rows, cols) = (100, 100);
    let pairs = [
        (
            stream_id(0, 0, 0, Polarity::Pos),
            stream_id(0, 0, 0, Polarity::Neg),
        ),
        (
            stream_id(0, 0, 0, Polarity::Pos),
            stream_id(1, 0, 0, Polarity::Pos),
        ),
        (
            stream_id(0, 0, 0, Polarity::Pos),
            stream_id(0, 1, 0, Polarity::Pos),
        ),
        (
            stream_id(0, 0, 3, Polarity::Pos),
            stream_id(0, 0, 4, Polarity::Pos),
        ),
    ];
    for (a, b) in pairs {
        let fa = inject_saf(rows, cols, &model, a);
        let fb = inject_saf(rows, cols, &model, b);
        let mut table = [[0.0f64; 2]; 2];
        for r in 0..rows {
            for c in 0..cols {
                let i = usize::from(fa.get(r, c).is_some());
                let j = usize::from(fb.get(r, c).is_some());
                table[i][j] += 1.0;
            }
        }
        let n = (rows * cols) as f64;
        let row_tot = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let col_tot = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let mut chi2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = row_tot[i] * col_tot[j] / n;
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
        // Critical value of chi-square with one degree of freedom at p = 0.001.
        assert!(chi2 < 10.83, "streams {a:#x}/{b:#x}: chi2 {chi2}");
    }
}

#[test]
fn fault_positions_are_uniform_over_rows() {
    let model = FaultModel::with_rate(0.2, 6).unwrap();
    let (rows, cols) = (20, 500);
    let f = inject_saf(rows, cols, &model, stream_id(3, 2, 1, Polarity::Neg));
    let mut per_row = vec![0.0f64; rows];
    for (r, _, _) in f.iter() {
        per_row[r] += 1.0;
    }
    let e = f.len() as f64 / rows as f64;
    let chi2: f64 = per_row.iter().map(|o| (o - e).powi(2) / e).sum();
    // 19 degrees of freedom, p = 0.001.
    assert!(chi2 < 43.82, "chi2 {chi2}");
}

#[test]
fn faults_nest_across_rates() {
    let lo = FaultModel::with_rate(0.001, 12).unwrap();
    let hi = FaultModel::with_rate(0.004, 12).unwrap();
    let id = stream_id(7, 1, 2, Polarity::Pos);
    let a = inject_saf(64, 64, &lo, id);
    let b = inject_saf(64, 64, &hi, id);
    assert!(a.len() <= b.len());
    for (r, c, v) in a.iter() {
        assert_eq!(b.get(r, c), Some(v));
    }
}

#[test]
fn sa1_share_holds_across_many_arrays() {
    let model = FaultModel::with_rate(0.05, 13).unwrap();
    let (mut total, mut sa1) = (0usize, 0usize);
    for t in 0..200 {
        let f = inject_saf(50, 50, &model, stream_id(t, 0, 0, Polarity::Pos));
        total += f.len();
        sa1 += f.sa1_count();
    }
    let p = DEFAULT_SA1_SHARE;
    let n = total as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    assert!((sa1 as f64 - n * p).abs() < 3.0 * sd, "{sa1} of {total}");
    let expected = 200.0 * 2500.0 * 0.05;
    assert!((n - expected).abs() < 3.0 * (expected * 0.95).sqrt());
}
