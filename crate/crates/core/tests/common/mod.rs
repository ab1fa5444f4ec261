//! One-dimensional reference solvers for laminates.

#![allow(dead_code, clippy::needless_range_loop)]

/// Solves the periodic P1 system `(1/h) tridiag(-a_{i-1}, a_{i-1} + a_i, -a_i) u = load`
/// with `a` constant per cell, by dense elimination. The result has zero
/// nodal mean.
pub fn periodic_p1(a: &[f64], load: &[f64]) -> Vec<f64> {
    let n = a.len();
    let h = 1.0 / n as f64;
    let mut m = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        let left = a[(i + n - 1) % n];
        let right = a[i];
        m[i][(i + n - 1) % n] -= left / h;
        m[i][i] += (left + right) / h;
        m[i][(i + 1) % n] -= right / h;
        m[i][n] = load[i];
    }
    // Pin node 0; the other rows still carry the full equation.
    m[0] = vec![0.0; n + 1];
    m[0][0] = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .unwrap();
        m.swap(c, p);
        for r in 0..n {
            if r != c && m[r][c] != 0.0 {
                let f = m[r][c] / m[c][c];
                for k in c..=n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
    }
    let mut u: Vec<f64> = (0..n).map(|i| m[i][n] / m[i][i]).collect();
    let mean = u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|v| *v -= mean);
    u
}

/// First corrector of a laminate: `int a N' phi' = -int a phi'`.
pub fn first_corrector(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    let load: Vec<f64> = (0..n).map(|i| a[i] - a[(i + n - 1) % n]).collect();
    periodic_p1(a, &load)
}

/// Slope of a nodal P1 function on every cell.
pub fn slopes(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n).map(|i| (u[(i + 1) % n] - u[i]) * n as f64).collect()
}

/// Second corrector along the layering direction:
/// `int a M' phi' = int g phi - int a n phi'` with `g` constant per cell
/// and `n` nodal P1.
pub fn second_corrector(a: &[f64], g: &[f64], n_nodal: &[f64]) -> Vec<f64> {
    let n = a.len();
    let h = 1.0 / n as f64;
    let cell_avg = |c: usize| 0.5 * (n_nodal[c] + n_nodal[(c + 1) % n]);
    let load: Vec<f64> = (0..n)
        .map(|i| {
            let l = (i + n - 1) % n;
            let mass = 0.5 * h * (g[l] + g[i]);
            // phi_i' is +1/h on the left cell and -1/h on the right one.
            let transport = -(a[l] * cell_avg(l) - a[i] * cell_avg(i));
            mass + transport
        })
        .collect();
    periodic_p1(a, &load)
}
