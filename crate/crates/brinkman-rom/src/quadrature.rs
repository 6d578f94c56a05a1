//! Gauss-Legendre quadrature on intervals.

/// Nodes and weights of the `p`-point Gauss-Legendre rule on [-1, 1].
///
/// Newton iteration on the Legendre polynomial with the Chebyshev-based
/// initial guess; the middle node of an odd rule is pinned to exactly 0 so
/// that affinely mapped rules hit interval midpoints bit-exactly.
pub fn gauss_legendre_reference(p: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(p >= 1, "quadrature rule needs at least one node");
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    let n = p as f64;
    for i in 0..p.div_ceil(2) {
        // Initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (v, d) = legendre_with_derivative(p, x);
            dp = d;
            let dx = v / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (v2, d2) = legendre_with_derivative(p, x);
                x -= v2 / d2;
                dp = d2;
                break;
            }
        }
        if p % 2 == 1 && i == p / 2 {
            x = 0.0;
            let (_, d) = legendre_with_derivative(p, 0.0);
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        weights[i] = w;
        nodes[p - 1 - i] = -x;
        weights[p - 1 - i] = w;
    }
    // Ascending order is the convention used everywhere downstream.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Legendre polynomial value and derivative at `x` via the three-term
/// recurrence.
fn legendre_with_derivative(p: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0; // P_0
    let mut p_curr = x; // P_1
    if p == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=p {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p_curr - (kf - 1.0) * p_prev) / kf;
        p_prev = p_curr;
        p_curr = p_next;
    }
    let derivative = p as f64 * (x * p_curr - p_prev) / (x * x - 1.0);
    (p_curr, derivative)
}

/// `p`-point Gauss-Legendre rule affinely mapped to [a, b]; weights sum to
/// b - a.
pub fn gauss_legendre(p: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre_reference(p);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let nodes = xs
        .iter()
        .map(|&x| if x == 0.0 { mid } else { mid + half * x })
        .collect();
    let weights = ws.iter().map(|&w| half * w).collect();
    (nodes, weights)
}
