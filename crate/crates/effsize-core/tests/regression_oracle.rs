//! The QR fit against a brute-force normal-equations oracle, plus the R^2
//! invariance and nested-monotonicity properties.

use effsize_core::dataio::Design;
use effsize_core::linalg::Matrix;
use effsize_core::regression::fit_ols;
use effsize_core::rng;

/// Test-local Gaussian elimination with partial pivoting; the deliberately
/// naive route the implementation must agree with.
fn solve_normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let n = x.n_rows();
    let p = x.n_cols();
    let mut a = vec![vec![0.0f64; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            let mut sum = 0.0;
            for r in 0..n {
                sum += x.get(r, i) * x.get(r, j);
            }
            a[i][j] = sum;
        }
        let mut sum = 0.0;
        for r in 0..n {
            sum += x.get(r, i) * y[r];
        }
        a[i][p] = sum;
    }
    // Forward elimination with partial pivoting.
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        for row in (col + 1)..p {
            let factor = a[row][col] / a[col][col];
            for k in col..=p {
                a[row][k] -= factor * a[col][k];
            }
        }
    }
    let mut beta = vec![0.0; p];
    for row in (0..p).rev() {
        let mut sum = a[row][p];
        for k in (row + 1)..p {
            sum -= a[row][k] * beta[k];
        }
        beta[row] = sum / a[row][row];
    }
    beta
}

fn random_design(n: usize, predictors: usize, seed: u64) -> (Design, Vec<f64>) {
    let mut stream = rng::stream(seed, 0);
    let mut columns = vec![vec![1.0; n]];
    let mut names = vec!["intercept".to_string()];
    for j in 0..predictors {
        let mut col = vec![0.0; n];
        rng::fill_standard_normal(&mut stream, &mut col);
        columns.push(col);
        names.push(format!("x{}", j + 1));
    }
    let mut y = vec![0.0; n];
    for (i, v) in y.iter_mut().enumerate() {
        let mut signal = 0.5;
        for (j, col) in columns.iter().enumerate().skip(1) {
            signal += (j as f64 * 0.3 - 0.2) * col[i];
        }
        *v = signal + rng::standard_normal(&mut stream);
    }
    (
        Design {
            names,
            matrix: Matrix::from_columns(&columns),
        },
        y,
    )
}

#[test]
fn qr_matches_normal_equations_on_200_random_problems() {
    for seed in 0..200u64 {
        let (design, y) = random_design(20, 3, seed);
        let fit = fit_ols(&design, &y).unwrap();
        let oracle = solve_normal_equations(&design.matrix, &y);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!(
                (a - b).abs() <= 1e-8 * b.abs().max(1.0),
                "seed {seed}: qr {a} vs normal equations {b}"
            );
        }
    }
}

#[test]
fn r2_invariant_under_affine_response_transform() {
    for seed in 300..330u64 {
        let (design, y) = random_design(40, 3, seed);
        let base = fit_ols(&design, &y).unwrap();
        let mut stream = rng::stream(seed, 1);
        let a = 0.25 + 3.0 * rng::standard_normal(&mut stream).abs();
        let b = rng::standard_normal(&mut stream) * 10.0;
        let transformed: Vec<f64> = y.iter().map(|&v| a * v + b).collect();
        let fit = fit_ols(&design, &transformed).unwrap();
        assert!(
            (fit.r2 - base.r2).abs() < 1e-10,
            "seed {seed}: {} vs {}",
            fit.r2,
            base.r2
        );
    }
}

#[test]
fn r2_invariant_under_invertible_column_recombination() {
    for seed in 400..420u64 {
        let (design, y) = random_design(35, 2, seed);
        let base = fit_ols(&design, &y).unwrap();
        // Replace (x1, x2) with (2 x1, x1 + 0.5 x2): invertible mix of the
        // non-intercept columns.
        let x1 = design.matrix.column(1);
        let x2 = design.matrix.column(2);
        let mixed1: Vec<f64> = x1.iter().map(|v| 2.0 * v).collect();
        let mixed2: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + 0.5 * b).collect();
        let mixed = Design {
            names: design.names.clone(),
            matrix: Matrix::from_columns(&[vec![1.0; 35], mixed1, mixed2]),
        };
        let fit = fit_ols(&mixed, &y).unwrap();
        assert!(
            (fit.r2 - base.r2).abs() < 1e-10,
            "seed {seed}: {} vs {}",
            fit.r2,
            base.r2
        );
    }
}

#[test]
fn adding_a_column_never_decreases_r2() {
    for seed in 500..560u64 {
        let (design, y) = random_design(30, 3, seed);
        let reduced = Design {
            names: design.names[..3].to_vec(),
            matrix: Matrix::from_columns(&[
                design.matrix.column(0),
                design.matrix.column(1),
                design.matrix.column(2),
            ]),
        };
        let small = fit_ols(&reduced, &y).unwrap();
        let big = fit_ols(&design, &y).unwrap();
        assert!(
            big.r2 >= small.r2 - 1e-12,
            "seed {seed}: r2 fell from {} to {}",
            small.r2,
            big.r2
        );
    }
}

#[test]
fn condition_estimate_grows_with_near_collinearity() {
    let (design, y) = random_design(30, 2, 9001);
    let well = fit_ols(&design, &y).unwrap();
    let x1 = design.matrix.column(1);
    let near: Vec<f64> = x1.iter().enumerate().map(|(i, v)| v + 1e-6 * ((i % 3) as f64)).collect();
    let bad = Design {
        names: design.names.clone(),
        matrix: Matrix::from_columns(&[vec![1.0; 30], x1, near]),
    };
    let ill = fit_ols(&bad, &y).unwrap();
    assert!(ill.condition_estimate > 1e3 * well.condition_estimate);
}
