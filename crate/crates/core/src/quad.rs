//! Gauss quadrature rules, composite panel rules, and prefix integration.
//!
//! All axes in this crate are built from Legendre panels: plain Gauss nodes
//! for pure integration axes and Lobatto nodes where grid values must include
//! interval endpoints (shared panel boundaries, `L = 0`, `w = 0`).

/// Nodes and weights of a quadrature rule on a fixed interval.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` with this rule.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial value and derivative at `x`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    // derivative from the standard recurrence
    let dp = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Gauss-Legendre rule with `n` nodes on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-flavored initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // weights are symmetric, so sorting nodes alone is safe only if we rebuild
    // weights; recompute them in node order instead.
    for i in 0..n {
        let x = nodes[i];
        let (_, dp) = legendre_pair(n, x);
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    Rule { nodes, weights }
}

/// Gauss-Lobatto-Legendre rule with `n >= 2` nodes on [-1, 1], endpoints included.
pub fn gauss_lobatto(n: usize) -> Rule {
    assert!(n >= 2, "Lobatto rule needs at least two nodes");
    let m = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    // interior nodes are the roots of P'_m
    for i in 1..m {
        let mut x = (std::f64::consts::PI * i as f64 / m as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_pair(m, x);
            // second derivative from the Legendre equation
            let ddp = (2.0 * x * dp - (m as f64) * (m as f64 + 1.0) * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[m - i] = x;
    }
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut weights = vec![0.0; n];
    let c = 2.0 / (m as f64 * (m as f64 + 1.0));
    for i in 0..n {
        let (p, _) = legendre_pair(m, nodes[i]);
        weights[i] = c / (p * p);
    }
    Rule { nodes, weights }
}

fn map_rule(base: &Rule, a: f64, b: f64, nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for (&x, &w) in base.nodes.iter().zip(&base.weights) {
        nodes.push(mid + half * x);
        weights.push(half * w);
    }
}

/// Composite Gauss rule over explicit panel breakpoints.
pub fn composite_gauss(breaks: &[f64], order: usize) -> Rule {
    let base = gauss_legendre(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for win in breaks.windows(2) {
        map_rule(&base, win[0], win[1], &mut nodes, &mut weights);
    }
    Rule { nodes, weights }
}

/// Composite Lobatto rule over explicit panel breakpoints. Shared panel
/// boundaries appear once, with their weights merged.
pub fn composite_lobatto(breaks: &[f64], order: usize) -> Rule {
    let base = gauss_lobatto(order);
    let mut nodes = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (p, win) in breaks.windows(2).enumerate() {
        let mut local_nodes = Vec::new();
        let mut local_weights = Vec::new();
        map_rule(&base, win[0], win[1], &mut local_nodes, &mut local_weights);
        let skip = if p == 0 { 0 } else { 1 };
        if p > 0 {
            *weights.last_mut().unwrap() += local_weights[0];
        }
        nodes.extend_from_slice(&local_nodes[skip..]);
        weights.extend_from_slice(&local_weights[skip..]);
    }
    Rule { nodes, weights }
}

/// Uniform breakpoints on [a, b].
pub fn breaks_uniform(a: f64, b: f64, n_panels: usize) -> Vec<f64> {
    let n = n_panels.max(1);
    (0..=n)
        .map(|i| a + (b - a) * i as f64 / n as f64)
        .collect()
}

/// Breakpoints on [a, b] with geometric refinement toward `b`.
///
/// `n_uniform` coarse panels cover most of the interval; `n_graded` panels
/// shrink by `ratio` toward the right endpoint. Used near energy-cutoff
/// surfaces where integrands vanish like a fractional power.
pub fn breaks_graded_right(a: f64, b: f64, n_uniform: usize, n_graded: usize, ratio: f64) -> Vec<f64> {
    assert!(b > a && ratio > 0.0 && ratio < 1.0);
    let mut rel = Vec::with_capacity(n_uniform + n_graded + 1);
    // boundary layer occupies the last `layer` fraction of the interval
    let layer: f64 = 0.5;
    for i in 0..=n_uniform {
        rel.push((1.0 - layer) * i as f64 / n_uniform.max(1) as f64);
    }
    let mut width = layer;
    for _ in 0..n_graded.saturating_sub(1) {
        width *= ratio;
        rel.push(1.0 - width);
    }
    rel.push(1.0);
    rel.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    rel.iter().map(|t| a + (b - a) * t).collect()
}

/// Mirror of [`breaks_graded_right`], refining toward `a`.
pub fn breaks_graded_left(a: f64, b: f64, n_uniform: usize, n_graded: usize, ratio: f64) -> Vec<f64> {
    let right = breaks_graded_right(0.0, 1.0, n_uniform, n_graded, ratio);
    let mut out: Vec<f64> = right.iter().rev().map(|t| a + (b - a) * (1.0 - t)).collect();
    out.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    out
}

/// Value of the Lagrange basis polynomial `i` over `nodes` at `x`.
pub fn lagrange_basis(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut v = 1.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j != i {
            v *= (x - xj) / (nodes[i] - xj);
        }
    }
    v
}

/// Finite-difference weights for the `m`-th derivative at `x0` over an
/// arbitrary stencil (Fornberg's recurrence).
pub fn fd_weights(x0: f64, stencil: &[f64], m: usize) -> Vec<f64> {
    let n = stencil.len();
    assert!(m < n);
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = stencil[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = stencil[i] - x0;
        for j in 0..i {
            let c3 = stencil[i] - stencil[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * ((k as f64) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - (k as f64) * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Paneled axis with prefix-integration support.
///
/// Carries strictly increasing nodes, positive quadrature weights, and the
/// panel structure needed to integrate the per-panel polynomial interpolant
/// from the axis origin to any node.
#[derive(Debug, Clone)]
pub struct PaneledAxis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// node index of the first node of each panel; last entry = nodes.len()-1
    panel_bounds: Vec<usize>,
}

impl PaneledAxis {
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>, panel_bounds: Vec<usize>) -> Self {
        PaneledAxis {
            nodes,
            weights,
            panel_bounds,
        }
    }

    pub fn panel_bounds(&self) -> &[usize] {
        &self.panel_bounds
    }

    /// Lobatto panels over the given breakpoints.
    pub fn lobatto(breaks: &[f64], order: usize) -> Self {
        let rule = composite_lobatto(breaks, order);
        let per_panel = order - 1;
        let n_panels = breaks.len() - 1;
        let panel_bounds = (0..=n_panels).map(|p| p * per_panel).collect();
        PaneledAxis {
            nodes: rule.nodes,
            weights: rule.weights,
            panel_bounds,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.nodes[0]
    }

    pub fn last(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Cumulative integral of the sampled function from the axis origin to
    /// every node. Exact for the per-panel interpolating polynomial.
    pub fn prefix_integral(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nodes.len());
        let mut out = vec![0.0; values.len()];
        let gl = gauss_legendre(8);
        let mut acc = 0.0;
        for p in 0..self.panel_bounds.len() - 1 {
            let lo = self.panel_bounds[p];
            let hi = self.panel_bounds[p + 1];
            let nodes = &self.nodes[lo..=hi];
            let vals = &values[lo..=hi];
            out[lo] = acc;
            for j in lo + 1..=hi {
                let a = self.nodes[j - 1];
                let b = self.nodes[j];
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                let mut seg = 0.0;
                for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
                    let xx = mid + half * x;
                    let mut v = 0.0;
                    for (i, &fi) in vals.iter().enumerate() {
                        v += fi * lagrange_basis(nodes, i, xx);
                    }
                    seg += half * w * v;
                }
                acc += seg;
                out[j] = acc;
            }
        }
        out
    }

    /// Integral of the sampled function over the whole axis.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }
}

/// Locate the interpolation cell for `x` in strictly increasing `nodes`,
/// returning the start index of a `width`-point stencil clamped to the range.
pub fn stencil_start(nodes: &[f64], x: f64, width: usize) -> usize {
    let n = nodes.len();
    if n <= width {
        return 0;
    }
    let j = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(j) => j,
        Err(j) => j.saturating_sub(1),
    };
    let half = (width - 1) / 2;
    j.saturating_sub(half).min(n - width)
}

/// Local Lagrange interpolation of sampled values at `x` with a
/// `width`-point stencil (4 = cubic).
pub fn lagrange_interp(nodes: &[f64], values: &[f64], x: f64, width: usize) -> f64 {
    let s = stencil_start(nodes, x, width);
    let w = width.min(nodes.len());
    let mut v = 0.0;
    for i in 0..w {
        v += values[s + i] * lagrange_basis(&nodes[s..s + w], i, x);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(6);
        // degree 11 is exact for 6 nodes
        let exact = 2.0 / 11.0; // integral of x^10 over [-1,1]
        assert_abs_diff_eq!(rule.integrate(|x| x.powi(10)), exact, epsilon = 1e-14);
        assert_abs_diff_eq!(rule.integrate(|x| x.powi(11)), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn lobatto_includes_endpoints_and_integrates() {
        let rule = gauss_lobatto(7);
        assert_abs_diff_eq!(rule.nodes[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.nodes[6], 1.0, epsilon = 1e-15);
        // 7-node Lobatto exact through degree 11
        assert_abs_diff_eq!(rule.integrate(|x| x.powi(10)), 2.0 / 11.0, epsilon = 1e-13);
        let w_sum: f64 = rule.weights.iter().sum();
        assert_abs_diff_eq!(w_sum, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn composite_rules_handle_smooth_integrands() {
        let breaks = breaks_uniform(0.0, 3.0, 8);
        let rule = composite_gauss(&breaks, 10);
        let got = rule.integrate(|x| (-x).exp());
        assert_abs_diff_eq!(got, 1.0 - (-3.0f64).exp(), epsilon = 1e-13);

        let lob = composite_lobatto(&breaks, 8);
        let got = lob.integrate(|x| (x).sin());
        assert_abs_diff_eq!(got, 1.0 - (3.0f64).cos(), epsilon = 1e-12);
    }

    #[test]
    fn graded_panels_resolve_endpoint_powers() {
        // integrand (1 - x)^{0.5}: fractional power at the right endpoint
        let breaks = breaks_graded_right(0.0, 1.0, 4, 30, 0.5);
        let rule = composite_gauss(&breaks, 12);
        let got = rule.integrate(|x| (1.0 - x).sqrt());
        assert_abs_diff_eq!(got, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn fornberg_weights_reproduce_central_difference() {
        let stencil = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fd_weights(0.0, &stencil, 1);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn prefix_integral_matches_closed_form() {
        let axis = PaneledAxis::lobatto(&breaks_uniform(0.0, 2.0, 6), 7);
        let vals: Vec<f64> = axis.nodes.iter().map(|&x| x * x).collect();
        let prefix = axis.prefix_integral(&vals);
        for (i, &x) in axis.nodes.iter().enumerate() {
            assert_abs_diff_eq!(prefix[i], x * x * x / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn lagrange_interpolation_is_cubic_exact() {
        let nodes: Vec<f64> = (0..20).map(|i| (i as f64).sqrt()).collect();
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x * x * x;
        let vals: Vec<f64> = nodes.iter().map(|&x| f(x)).collect();
        for &x in &[0.3, 1.7, 2.9, 4.0] {
            assert_abs_diff_eq!(lagrange_interp(&nodes, &vals, x, 4), f(x), epsilon = 1e-11);
        }
    }
}
