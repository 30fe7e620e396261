//! Phase-space coordinates, grids, quadrature, and bracket algebra.
//!
//! Spherically symmetric phase-space functions live on `(r, w, L)`: areal
//! radius, radial momentum, and squared angular momentum. The momentum
//! measure reduces to `dv = (pi / r^2) dw dL`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::quad::{self, fd_weights, PaneledAxis};

/// A point of the reduced phase space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    /// areal radius, `r >= 0`
    pub r: f64,
    /// radial momentum
    pub w: f64,
    /// squared angular momentum, `L >= 0`
    pub l: f64,
}

impl PhasePoint {
    pub fn new(r: f64, w: f64, l: f64) -> Result<Self> {
        if r < 0.0 || l < 0.0 || !r.is_finite() || !w.is_finite() || !l.is_finite() {
            return Err(CoreError::Parameter(format!(
                "phase point needs r >= 0 and L >= 0, got r={r}, w={w}, L={l}"
            )));
        }
        Ok(PhasePoint { r, w, l })
    }

    /// `<v> = sqrt(1 + gamma (w^2 + L/r^2))`.
    pub fn vbar(&self, gamma: f64) -> f64 {
        (1.0 + gamma * (self.w * self.w + self.l / (self.r * self.r))).sqrt()
    }
}

/// One grid axis: paneled nodes, positive quadrature weights, and
/// finite-difference stencils for first derivatives.
#[derive(Debug, Clone)]
pub struct Axis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// node index of each panel boundary; single panel for custom axes
    panel_bounds: Vec<usize>,
    /// per node: stencil start index and derivative weights
    d1: Vec<(usize, Vec<f64>)>,
}

impl Axis {
    pub fn from_lobatto_panels(breaks: &[f64], order: usize) -> Result<Self> {
        let axis = PaneledAxis::lobatto(breaks, order);
        let bounds = axis.panel_bounds().to_vec();
        Axis::with_panels(axis.nodes, axis.weights, bounds)
    }

    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let bounds = vec![0, nodes.len().saturating_sub(1)];
        Axis::with_panels(nodes, weights, bounds)
    }

    fn with_panels(nodes: Vec<f64>, weights: Vec<f64>, panel_bounds: Vec<usize>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.len() < 2 {
            return Err(CoreError::Parameter("axis needs >= 2 nodes".into()));
        }
        if nodes.windows(2).any(|p| p[1] <= p[0]) {
            return Err(CoreError::Parameter("axis nodes must increase strictly".into()));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(CoreError::Parameter("axis weights must be positive".into()));
        }
        let width = 5.min(nodes.len());
        let d1 = (0..nodes.len())
            .map(|i| {
                let half = (width - 1) / 2;
                let s = i.saturating_sub(half).min(nodes.len() - width);
                let w = fd_weights(nodes[i], &nodes[s..s + width], 1);
                (s, w)
            })
            .collect();
        Ok(Axis {
            nodes,
            weights,
            panel_bounds,
            d1,
        })
    }

    /// View with the panel structure needed for prefix integrals.
    pub fn as_paneled(&self) -> PaneledAxis {
        PaneledAxis::from_parts(
            self.nodes.clone(),
            self.weights.clone(),
            self.panel_bounds.clone(),
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    /// First derivative of sampled values, stencil order 4 in the interior.
    pub fn derivative(&self, values: &[f64], out: &mut [f64]) {
        for (i, (s, w)) in self.d1.iter().enumerate() {
            out[i] = w.iter().zip(&values[*s..]).map(|(c, v)| c * v).sum();
        }
    }

    fn is_symmetric(&self) -> bool {
        let n = self.nodes.len();
        let scale = self.nodes[n - 1].abs().max(1e-300);
        (0..n).all(|i| (self.nodes[i] + self.nodes[n - 1 - i]).abs() <= 1e-12 * scale)
    }

    /// Index of the node mirroring node `i` under sign reflection.
    pub fn mirror_index(&self, i: usize) -> usize {
        self.nodes.len() - 1 - i
    }
}

/// Interpolation order used when a field is evaluated off its nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpOrder {
    Linear,
    Cubic,
}

impl InterpOrder {
    fn width(self) -> usize {
        match self {
            InterpOrder::Linear => 2,
            InterpOrder::Cubic => 4,
        }
    }
}

/// Tensor grid over `(r, w, L)`.
///
/// Invariants: each axis strictly increasing with positive weights, the `w`
/// axis symmetric about zero, the `L` axis starting at zero, and `r > 0`.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub r: Axis,
    pub w: Axis,
    pub l: Axis,
}

impl PhaseGrid {
    pub fn new(r: Axis, w: Axis, l: Axis) -> Result<Arc<Self>> {
        if r.nodes[0] <= 0.0 {
            return Err(CoreError::Parameter(
                "radial axis must start strictly above zero".into(),
            ));
        }
        if !w.is_symmetric() {
            return Err(CoreError::Parameter("w axis must be symmetric about 0".into()));
        }
        if l.nodes[0] != 0.0 {
            return Err(CoreError::Parameter("L axis must include L = 0".into()));
        }
        Ok(Arc::new(PhaseGrid { r, w, l }))
    }

    /// Standard construction: Lobatto panels per axis.
    pub fn build(
        r_span: (f64, f64),
        nr_panels: usize,
        w_max: f64,
        nw_panels: usize,
        l_max: f64,
        nl_panels: usize,
        order: usize,
    ) -> Result<Arc<Self>> {
        let r_axis = Axis::from_lobatto_panels(&quad::breaks_uniform(r_span.0, r_span.1, nr_panels), order)?;
        // mirrored panels keep the w axis exactly symmetric
        let half: Vec<f64> = quad::breaks_uniform(0.0, w_max, nw_panels.div_ceil(2));
        let mut w_breaks: Vec<f64> = half.iter().rev().map(|&x| -x).collect();
        w_breaks.extend(half.iter().skip(1));
        let w_axis = Axis::from_lobatto_panels(&w_breaks, order)?;
        let l_axis = Axis::from_lobatto_panels(&quad::breaks_uniform(0.0, l_max, nl_panels), order)?;
        PhaseGrid::new(r_axis, w_axis, l_axis)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.r.len(), self.w.len(), self.l.len())
    }

    fn same_nodes(&self, other: &PhaseGrid) -> bool {
        self.r.nodes == other.r.nodes && self.w.nodes == other.w.nodes && self.l.nodes == other.l.nodes
    }
}

/// Momentum weights understood by [`momentum_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentWeight {
    /// `<v>`
    VBar,
    /// `w^2 / <v>`
    WSqOverVBar,
    /// `w`
    W,
    /// `(L / r^2) / <v>`
    CentrifugalOverVBar,
    /// `1`
    One,
}

impl MomentWeight {
    pub fn eval(self, r: f64, w: f64, l: f64, gamma: f64) -> f64 {
        match self {
            MomentWeight::W => w,
            MomentWeight::One => 1.0,
            _ => {
                let vbar = (1.0 + gamma * (w * w + l / (r * r))).sqrt();
                match self {
                    MomentWeight::VBar => vbar,
                    MomentWeight::WSqOverVBar => w * w / vbar,
                    MomentWeight::CentrifugalOverVBar => (l / (r * r)) / vbar,
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Radial moment profiles of a phase-space density.
#[derive(Debug, Clone)]
pub struct MomentProfiles {
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub j: Vec<f64>,
    pub q: Vec<f64>,
}

/// A function sampled on a [`PhaseGrid`]. Evaluation outside the grid box
/// returns zero (compact-support convention).
#[derive(Debug, Clone)]
pub struct KineticField {
    grid: Arc<PhaseGrid>,
    values: Vec<f64>,
    pub interp: InterpOrder,
}

impl KineticField {
    pub fn zeros(grid: Arc<PhaseGrid>, interp: InterpOrder) -> Self {
        let n = grid.r.len() * grid.w.len() * grid.l.len();
        KineticField {
            grid,
            values: vec![0.0; n],
            interp,
        }
    }

    pub fn from_fn(
        grid: Arc<PhaseGrid>,
        interp: InterpOrder,
        f: impl Fn(f64, f64, f64) -> f64 + Sync,
    ) -> Self {
        let (nr, nw, nl) = grid.shape();
        let mut values = vec![0.0; nr * nw * nl];
        values
            .par_chunks_mut(nw * nl)
            .enumerate()
            .for_each(|(ir, chunk)| {
                let r = grid.r.nodes[ir];
                for iw in 0..nw {
                    let w = grid.w.nodes[iw];
                    for il in 0..nl {
                        chunk[iw * nl + il] = f(r, w, grid.l.nodes[il]);
                    }
                }
            });
        KineticField {
            grid,
            values,
            interp,
        }
    }

    pub fn grid(&self) -> &Arc<PhaseGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, ir: usize, iw: usize, il: usize) -> usize {
        (ir * self.grid.w.len() + iw) * self.grid.l.len() + il
    }

    #[inline]
    pub fn at(&self, ir: usize, iw: usize, il: usize) -> f64 {
        self.values[self.idx(ir, iw, il)]
    }

    /// Interpolated evaluation; zero outside the grid box.
    pub fn eval(&self, r: f64, w: f64, l: f64) -> f64 {
        let g = &self.grid;
        let (r0, r1) = g.r.span();
        let (w0, w1) = g.w.span();
        let (l0, l1) = g.l.span();
        if r < r0 || r > r1 || w < w0 || w > w1 || l < l0 || l > l1 {
            return 0.0;
        }
        let width = self.interp.width();
        let sr = quad::stencil_start(&g.r.nodes, r, width);
        let sw = quad::stencil_start(&g.w.nodes, w, width);
        let sl = quad::stencil_start(&g.l.nodes, l, width);
        let wr: Vec<f64> = (0..width.min(g.r.len()))
            .map(|i| quad::lagrange_basis(&g.r.nodes[sr..sr + width.min(g.r.len())], i, r))
            .collect();
        let ww: Vec<f64> = (0..width.min(g.w.len()))
            .map(|i| quad::lagrange_basis(&g.w.nodes[sw..sw + width.min(g.w.len())], i, w))
            .collect();
        let wl: Vec<f64> = (0..width.min(g.l.len()))
            .map(|i| quad::lagrange_basis(&g.l.nodes[sl..sl + width.min(g.l.len())], i, l))
            .collect();
        let mut acc = 0.0;
        for (a, cr) in wr.iter().enumerate() {
            for (b, cw) in ww.iter().enumerate() {
                let base = self.idx(sr + a, sw + b, sl);
                let mut inner = 0.0;
                for (c, cl) in wl.iter().enumerate() {
                    inner += cl * self.values[base + c];
                }
                acc += cr * cw * inner;
            }
        }
        acc
    }

    /// Node-wise linear combination `a * self + b * other`.
    pub fn linear_comb(&self, a: f64, other: &KineticField, b: f64) -> Result<KineticField> {
        if !self.grid.same_nodes(&other.grid) {
            return Err(CoreError::GridMismatch("linear combination".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(KineticField {
            grid: self.grid.clone(),
            values,
            interp: self.interp,
        })
    }

    /// Partial derivative in `r` at fixed `(w, L)`.
    pub fn derivative_r(&self) -> KineticField {
        let (nr, nw, nl) = self.grid.shape();
        let mut out = KineticField::zeros(self.grid.clone(), self.interp);
        let mut col = vec![0.0; nr];
        let mut dcol = vec![0.0; nr];
        for iw in 0..nw {
            for il in 0..nl {
                for ir in 0..nr {
                    col[ir] = self.at(ir, iw, il);
                }
                self.grid.r.derivative(&col, &mut dcol);
                for ir in 0..nr {
                    let k = out.idx(ir, iw, il);
                    out.values[k] = dcol[ir];
                }
            }
        }
        out
    }

    /// Partial derivative in `w` at fixed `(r, L)`.
    pub fn derivative_w(&self) -> KineticField {
        let (nr, nw, nl) = self.grid.shape();
        let mut out = KineticField::zeros(self.grid.clone(), self.interp);
        let mut col = vec![0.0; nw];
        let mut dcol = vec![0.0; nw];
        for ir in 0..nr {
            for il in 0..nl {
                for iw in 0..nw {
                    col[iw] = self.at(ir, iw, il);
                }
                self.grid.w.derivative(&col, &mut dcol);
                for iw in 0..nw {
                    let k = out.idx(ir, iw, il);
                    out.values[k] = dcol[iw];
                }
            }
        }
        out
    }

    /// Split into even and odd parts in `w`; exact on the symmetric grid.
    pub fn even_odd_split(&self) -> (KineticField, KineticField) {
        let (nr, nw, nl) = self.grid.shape();
        let mut even = KineticField::zeros(self.grid.clone(), self.interp);
        let mut odd = KineticField::zeros(self.grid.clone(), self.interp);
        for ir in 0..nr {
            for iw in 0..nw {
                let im = self.grid.w.mirror_index(iw);
                for il in 0..nl {
                    let a = self.at(ir, iw, il);
                    let b = self.at(ir, im, il);
                    let k = even.idx(ir, iw, il);
                    even.values[k] = 0.5 * (a + b);
                    odd.values[k] = 0.5 * (a - b);
                }
            }
        }
        (even, odd)
    }

    /// Maximum absolute value over nodes.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `(pi / r^2) * integral of weight * field dw dL` at radius `r`.
///
/// `r` may be any radius inside the grid's radial span; off-node radii use
/// the field's interpolation order.
pub fn momentum_integral(
    field: &KineticField,
    weight: MomentWeight,
    r: f64,
    gamma: f64,
) -> Result<f64> {
    if r <= 0.0 {
        return Err(CoreError::SingularRadius);
    }
    let g = field.grid();
    let ir_exact = g
        .r
        .nodes
        .iter()
        .position(|&x| (x - r).abs() <= 1e-14 * r.abs().max(1.0));
    let nw = g.w.len();
    let nl = g.l.len();
    let mut acc = 0.0;
    for iw in 0..nw {
        let w = g.w.nodes[iw];
        let cw = g.w.weights[iw];
        for il in 0..nl {
            let l = g.l.nodes[il];
            let cl = g.l.weights[il];
            let v = match ir_exact {
                Some(ir) => field.at(ir, iw, il),
                None => field.eval(r, w, l),
            };
            if v != 0.0 {
                acc += cw * cl * v * weight.eval(r, w, l, gamma);
            }
        }
    }
    Ok(std::f64::consts::PI / (r * r) * acc)
}

/// All four spatial density profiles of a field, at the grid's radial nodes.
pub fn moments(field: &KineticField, gamma: f64) -> Result<MomentProfiles> {
    let g = field.grid();
    let rs = g.r.nodes.clone();
    let rows: Vec<(f64, f64, f64, f64)> = rs
        .par_iter()
        .map(|&r| {
            let rho = momentum_integral(field, MomentWeight::VBar, r, gamma).unwrap();
            let p = momentum_integral(field, MomentWeight::WSqOverVBar, r, gamma).unwrap();
            let j = momentum_integral(field, MomentWeight::W, r, gamma).unwrap();
            let q = momentum_integral(field, MomentWeight::CentrifugalOverVBar, r, gamma).unwrap();
            (rho, p, j, q)
        })
        .collect();
    Ok(MomentProfiles {
        r: rs,
        rho: rows.iter().map(|t| t.0).collect(),
        p: rows.iter().map(|t| t.1).collect(),
        j: rows.iter().map(|t| t.2).collect(),
        q: rows.iter().map(|t| t.3).collect(),
    })
}

/// Poisson bracket `{f, g} = df/dr dg/dw - df/dw dg/dr` on a common grid.
pub fn poisson_bracket(f: &KineticField, g: &KineticField) -> Result<KineticField> {
    if !f.grid().same_nodes(g.grid()) {
        return Err(CoreError::GridMismatch("poisson bracket".into()));
    }
    let fr = f.derivative_r();
    let fw = f.derivative_w();
    let gr = g.derivative_r();
    let gw = g.derivative_w();
    let mut out = KineticField::zeros(f.grid().clone(), f.interp);
    for i in 0..out.values.len() {
        out.values[i] = fr.values[i] * gw.values[i] - fw.values[i] * gr.values[i];
    }
    Ok(out)
}

/// `integral f dv dx = 4 pi^2 * triple sum` of a gridded integrand.
pub fn phase_integral(field: &KineticField, integrand: impl Fn(f64, f64, f64, f64) -> f64) -> f64 {
    let g = field.grid();
    let (nr, nw, nl) = g.shape();
    let mut acc = 0.0;
    for ir in 0..nr {
        let r = g.r.nodes[ir];
        let cr = g.r.weights[ir];
        for iw in 0..nw {
            let w = g.w.nodes[iw];
            let cw = g.w.weights[iw];
            for il in 0..nl {
                let v = field.at(ir, iw, il);
                if v != 0.0 {
                    acc += cr * cw * g.l.weights[il] * integrand(r, w, g.l.nodes[il], v);
                }
            }
        }
    }
    4.0 * std::f64::consts::PI * std::f64::consts::PI * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn test_grid() -> Arc<PhaseGrid> {
        PhaseGrid::build((0.05, 4.0), 6, 5.5, 8, 9.0, 6, 7).unwrap()
    }

    #[test]
    fn grid_invariants_hold() {
        let g = test_grid();
        assert!(g.w.is_symmetric());
        assert_eq!(g.l.nodes[0], 0.0);
        assert!(g.r.nodes[0] > 0.0);
        assert!(g.r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn zero_field_integrates_to_zero() {
        let g = test_grid();
        let f = KineticField::zeros(g, InterpOrder::Cubic);
        for wgt in [
            MomentWeight::VBar,
            MomentWeight::WSqOverVBar,
            MomentWeight::W,
            MomentWeight::CentrifugalOverVBar,
            MomentWeight::One,
        ] {
            assert_eq!(momentum_integral(&f, wgt, 2.0, 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn odd_integrand_vanishes_exactly() {
        let g = test_grid();
        // even in w, weight w makes the integrand odd
        let f = KineticField::from_fn(g, InterpOrder::Cubic, |r, w, l| {
            (-0.3 * r - w * w - 0.5 * l).exp()
        });
        let v = momentum_integral(&f, MomentWeight::W, 1.7, 0.1).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-16);
    }

    #[test]
    fn singular_radius_is_an_error() {
        let g = test_grid();
        let f = KineticField::zeros(g, InterpOrder::Cubic);
        assert!(matches!(
            momentum_integral(&f, MomentWeight::VBar, 0.0, 0.1),
            Err(CoreError::SingularRadius)
        ));
    }

    #[test]
    fn gaussian_moment_matches_closed_form() {
        // field exp(-w^2 - L), weight 1, gamma = 0:
        // (pi/r^2) * int exp(-w^2) dw * int_0^inf exp(-L) dL = pi^{3/2} / r^2
        let g = PhaseGrid::build((0.5, 4.0), 4, 7.0, 10, 24.0, 12, 10).unwrap();
        let f = KineticField::from_fn(g, InterpOrder::Cubic, |_, w, l| (-w * w - l).exp());
        let r = 2.0;
        let got = momentum_integral(&f, MomentWeight::One, r, 0.0).unwrap();
        let expect = std::f64::consts::PI.powf(1.5) / (r * r);
        assert_abs_diff_eq!(got / expect, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn bracket_of_canonical_pair_is_one() {
        let g = test_grid();
        let f = KineticField::from_fn(g.clone(), InterpOrder::Cubic, |r, _, _| r);
        let h = KineticField::from_fn(g, InterpOrder::Cubic, |_, w, _| w);
        let b = poisson_bracket(&f, &h).unwrap();
        for &v in b.values() {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-9);
        }
        let bb = poisson_bracket(&f, &f).unwrap();
        assert_eq!(bb.max_abs(), 0.0);
    }

    #[test]
    fn bracket_antisymmetry_is_nodewise_exact() {
        let g = test_grid();
        let f = KineticField::from_fn(g.clone(), InterpOrder::Cubic, |r, w, l| {
            (r * w + 0.3 * l).sin()
        });
        let h = KineticField::from_fn(g, InterpOrder::Cubic, |r, w, l| (0.2 * r - w + l).cos());
        let fg = poisson_bracket(&f, &h).unwrap();
        let gf = poisson_bracket(&h, &f).unwrap();
        for (a, b) in fg.values().iter().zip(gf.values()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn parity_split_is_exact_and_reconstructs() {
        let g = test_grid();
        let f = KineticField::from_fn(g, InterpOrder::Cubic, |r, w, l| {
            w + w * w + 0.1 * r * l
        });
        let (even, odd) = f.even_odd_split();
        for i in 0..f.values().len() {
            assert_abs_diff_eq!(
                even.values()[i] + odd.values()[i],
                f.values()[i],
                epsilon = 1e-12 * f.values()[i].abs().max(1.0)
            );
        }
        // odd part contains exactly the w term
        let (nr, nw, nl) = f.grid().shape();
        for ir in 0..nr {
            for iw in 0..nw {
                for il in 0..nl {
                    let w = f.grid().w.nodes[iw];
                    assert_abs_diff_eq!(odd.at(ir, iw, il), w, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn eval_outside_grid_is_zero() {
        let g = test_grid();
        let f = KineticField::from_fn(g, InterpOrder::Cubic, |_, _, _| 1.0);
        assert_eq!(f.eval(100.0, 0.0, 0.0), 0.0);
        assert_eq!(f.eval(1.0, 100.0, 0.0), 0.0);
        assert_eq!(f.eval(1.0, 0.0, 100.0), 0.0);
        assert_abs_diff_eq!(f.eval(1.0, 0.2, 1.0), 1.0, epsilon = 1e-12);
    }
}
