/// Unnormalised `(n + 3)` system solved by Gaussian elimination with
/// partial pivoting.
pub fn dense_tps(points: &[[f64; 3]], at: &[(f64, f64)]) -> Vec<f64> {
    let n = points.len();
    let m = n + 3;
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..n {
        for j in 0..n {
            let r2 = (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
            a[i][j] = if r2 > 0.0 { r2 * r2.ln() } else { 0.0 };
        }
        for (k, v) in [1.0, points[i][0], points[i][1]].into_iter().enumerate() {
            a[i][n + k] = v;
            a[n + k][i] = v;
        }
        a[i][m] = points[i][2];
    }
    for c in 0..m {
        let p = (c..m)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        a.swap(c, p);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let sol: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i]).collect();
    at.iter()
        .map(|&(x, y)| {
            let mut z = sol[n] + sol[n + 1] * x + sol[n + 2] * y;
            for (p, w) in points.iter().zip(&sol) {
                let r2 = (x - p[0]).powi(2) + (y - p[1]).powi(2);
                if r2 > 0.0 {
                    z += w * r2 * r2.ln();
                }
            }
            z
        })
        .collect()
}
