//! Independent oracles shared by integration tests.
#![allow(dead_code)]

use earlystop::data_model::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Small separable instance: random labels when `n <= d`, otherwise labels of a
/// random hyperplane through the origin.
pub fn small_separable(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let n = r.random_range(1..=6usize);
    let d = r.random_range(1..=4usize);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut r, d)).collect();
    let labels: Vec<f64> = if n <= d {
        (0..n).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect()
    } else {
        let v = gaussian_vec(&mut r, d);
        rows.iter()
            .map(|x| if x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() >= 0.0 { 1.0 } else { -1.0 })
            .collect()
    };
    Dataset::from_rows(&rows, &labels).unwrap()
}

fn signed_rows(data: &Dataset) -> Vec<Vec<f64>> {
    let x = data.features();
    (0..data.n())
        .map(|i| x.row(i).iter().map(|v| v * data.labels()[i]).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            for c in col..m {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Hard-margin QP by active-set enumeration: for every candidate support `S`
/// solve `Q_SS a = 1`, keep the feasible candidates (`a >= 0`, `Q a >= 1`) and
/// return the maximum margin `1 / sqrt(1^T a)` among them.
pub fn qp_oracle_margin(data: &Dataset) -> Option<f64> {
    let z = signed_rows(data);
    let n = z.len();
    let mut best: Option<f64> = None;
    for mask in 1u32..(1 << n) {
        let s: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if s.len() > data.d() {
            continue;
        }
        let q: Vec<Vec<f64>> = s.iter().map(|&i| s.iter().map(|&j| dot(&z[i], &z[j])).collect()).collect();
        let Some(a) = solve_dense(q, vec![1.0; s.len()]) else { continue };
        if a.iter().any(|v| *v < 0.0) {
            continue;
        }
        let w: Vec<f64> = (0..data.d()).map(|c| s.iter().zip(&a).map(|(&i, ai)| ai * z[i][c]).sum()).collect();
        if z.iter().all(|zi| dot(zi, &w) >= 1.0 - 1e-10) {
            let gamma = 1.0 / a.iter().sum::<f64>().sqrt();
            best = Some(best.map_or(gamma, |b: f64| b.max(gamma)));
        }
    }
    best
}

/// `max_{||v|| = 1} min_i y_i x_i^T v` by a hyperspherical grid followed by a
/// shrinking random-direction zoom from the best grid points. Always a lower bound.
pub fn sphere_grid_margin(data: &Dataset) -> f64 {
    let z = signed_rows(data);
    let d = data.d();
    let f = |v: &[f64]| z.iter().map(|zi| dot(zi, v)).fold(f64::INFINITY, f64::min);
    if d == 1 {
        return f(&[1.0]).max(f(&[-1.0]));
    }
    let steps = match d {
        2 => 7200,
        3 => 240,
        _ => 96,
    };
    // angles (phi_1..phi_{d-2} in [0, pi], phi_{d-1} in [0, 2pi))
    const STARTS: usize = 8;
    let mut best = f64::NEG_INFINITY;
    // best grid points as (value, direction), sorted by decreasing value
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; d - 1];
    let last_steps = if d == 2 { steps } else { 2 * steps };
    'grid: loop {
        let mut v = vec![0.0; d];
        let mut sin_prod = 1.0;
        for k in 0..d - 1 {
            let ang = if k == d - 2 {
                2.0 * std::f64::consts::PI * idx[k] as f64 / last_steps as f64
            } else {
                std::f64::consts::PI * idx[k] as f64 / steps as f64
            };
            v[k] = sin_prod * ang.cos();
            sin_prod *= ang.sin();
        }
        v[d - 1] = sin_prod;
        let val = f(&v);
        best = best.max(val);
        if starts.len() < STARTS || val > starts[STARTS - 1].0 {
            let at = starts.partition_point(|s| s.0 >= val);
            starts.insert(at, (val, v));
            starts.truncate(STARTS);
        }
        for k in (0..d - 1).rev() {
            idx[k] += 1;
            let lim = if k == d - 2 { last_steps } else { steps + 1 };
            if idx[k] < lim {
                continue 'grid;
            }
            idx[k] = 0;
        }
        break;
    }
    // zoom from each of the best grid cells; a ridge where several
    // constraints are active needs many tries per radius to climb
    let mut r = rng(0x5eed);
    for (start_val, start_v) in starts {
        let (mut val, mut v) = (start_val, start_v);
        let mut radius = 4.0 * std::f64::consts::PI / steps as f64;
        let mut misses = 0;
        while radius > 1e-10 {
            let mut improved = false;
            for _ in 0..256 * d {
                let step = gaussian_vec(&mut r, d);
                let cand: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + radius * b).collect();
                let norm = dot(&cand, &cand).sqrt();
                let cand: Vec<f64> = cand.iter().map(|c| c / norm).collect();
                let cv = f(&cand);
                if cv > val {
                    val = cv;
                    v = cand;
                    improved = true;
                }
            }
            if improved {
                misses = 0;
            } else {
                misses += 1;
                if misses >= 2 {
                    radius *= 0.5;
                    misses = 0;
                }
            }
        }
        best = best.max(val);
    }
    best
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn dmat(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}
