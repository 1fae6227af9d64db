//! Vertex derivatives through side cells: approximant sequences with
//! geometric extrapolation, exact evaluation for piecewise-harmonic
//! functions, gradients with junction compatibility, weak tangents, and
//! local harmonic approximants.

use std::collections::BTreeMap;

use crate::calculus::{GridFunction, PiecewiseHarmonic};
use crate::linalg::dot;
use crate::scalar::Scalar;
use crate::structure::Context;
use crate::topology::{Side, VertexId, Word};
use crate::{Error, Result};

/// Junction compatibility threshold on the summed normal derivatives.
pub const COMPAT_TOL: f64 = 1e-8;

/// Documented orientation of the derivative functionals.
pub const SIGN_NOTE: &str =
    "mode 2 is the conductance normal-derivative row; modes k >= 3 are scaled to first nonzero entry 1";

/// Pointwise access to a function at whatever vertex depth it supports.
pub trait VertexFn<S: Scalar> {
    fn sample(&self, ctx: &Context<S>, v: &VertexId) -> Result<S>;
}

impl<S: Scalar> VertexFn<S> for PiecewiseHarmonic<S> {
    fn sample(&self, ctx: &Context<S>, v: &VertexId) -> Result<S> {
        Ok(self.value(ctx, v))
    }
}

impl<S: Scalar> VertexFn<S> for GridFunction<S> {
    fn sample(&self, _ctx: &Context<S>, v: &VertexId) -> Result<S> {
        self.value(v)
    }
}

impl<S: Scalar, F> VertexFn<S> for F
where
    F: Fn(&Context<S>, &VertexId) -> Result<S>,
{
    fn sample(&self, ctx: &Context<S>, v: &VertexId) -> Result<S> {
        self(ctx, v)
    }
}

fn cell_trace<S: Scalar>(
    ctx: &Context<S>,
    f: &dyn VertexFn<S>,
    w: &Word,
) -> Result<Vec<S>> {
    (0..ctx.n0() as u8)
        .map(|t| f.sample(ctx, &ctx.spec.canonical_vertex(&w.0, t)?))
        .collect()
}

fn check_mode<S: Scalar>(ctx: &Context<S>, k: usize) -> Result<()> {
    if k < 2 || k > ctx.n0() {
        return Err(Error::Precondition(format!(
            "derivative mode must lie in 2..={}, got {}",
            ctx.n0(),
            k
        )));
    }
    Ok(())
}

/// One derivative at one side of a vertex: the approximant sequence
/// `A_m = r_u^{-1} λ^{-m} β · f|_{F_u F_c^m V_0}` with a geometric-tail
/// extrapolation over the last four entries.
#[derive(Debug, Clone)]
pub struct DerivativeEstimate<S> {
    pub side: Side,
    pub k: usize,
    /// `approximants[m]` is `A_m`.
    pub approximants: Vec<S>,
    pub limit: S,
    /// Fitted tail ratio; zero for a constant sequence.
    pub ratio: f64,
    pub converged: bool,
    pub note: &'static str,
}

fn extrapolate<S: Scalar>(seq: &[S]) -> (S, f64, bool) {
    let n = seq.len();
    let last = seq[n - 1].clone();
    let scale = seq.iter().map(|x| x.mag()).fold(1.0_f64, f64::max);
    let settled = |x: &S| {
        if S::EXACT {
            x.is_zero()
        } else {
            x.mag() <= 1e-8 * scale
        }
    };
    let mut flat = 0usize;
    for i in (1..n).rev() {
        if settled(&(seq[i].clone() - seq[i - 1].clone())) {
            flat += 1;
        } else {
            break;
        }
    }
    if flat >= 2 || (n >= 2 && flat == n - 1) {
        return (last, 0.0, true);
    }
    if n < 4 {
        return (last, 0.0, false);
    }
    let v: Vec<f64> = seq[n - 4..].iter().map(|x| x.to_f64()).collect();
    let (d1, d2, d3) = (v[1] - v[0], v[2] - v[1], v[3] - v[2]);
    if d1.abs() <= f64::MIN_POSITIVE || d2.abs() <= f64::MIN_POSITIVE {
        return (last, 0.0, false);
    }
    let (r1, r2) = (d2 / d1, d3 / d2);
    let rho = (r1 + r2) / 2.0;
    let converged = rho.abs() < 0.95 && (r1 - r2).abs() <= 0.25;
    if !converged {
        return (last, rho, false);
    }
    if rho.abs() <= 1e-14 {
        return (last, rho, true);
    }
    let limit = v[3] + d3 * rho / (1.0 - rho);
    (S::from_f64(limit), rho, true)
}

/// Approximant sequence of `d_{ck} f` at `x = F_u v_c` through the side
/// `(u, c)`, for `m = 0..=m_max`, with extrapolated limit.
pub fn derivative_sequence<S: Scalar>(
    ctx: &Context<S>,
    f: &dyn VertexFn<S>,
    side: &Side,
    k: usize,
    m_max: usize,
) -> Result<DerivativeEstimate<S>> {
    let eig = ctx.eig()?;
    check_mode(ctx, k)?;
    let mode = eig.mode(side.corner as usize, k);
    let rinv = ctx.hs.r_word(&side.cell).recip();
    let mut lam_pow = S::one();
    let mut approximants = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let w = side.cell.extend_repeated(side.corner, m);
        let vals = cell_trace(ctx, f, &w)?;
        approximants.push(rinv.clone() * lam_pow.clone().recip() * dot(&mode.beta, &vals));
        lam_pow *= mode.lambda.clone();
    }
    let (limit, ratio, converged) = extrapolate(&approximants);
    Ok(DerivativeEstimate {
        side: side.clone(),
        k,
        approximants,
        limit,
        ratio,
        converged,
        note: SIGN_NOTE,
    })
}

/// Exact derivative of a piecewise-harmonic function: a single evaluation
/// at the first depth where the side cell is harmonic.
pub fn exact_harmonic_derivative<S: Scalar>(
    ctx: &Context<S>,
    h: &PiecewiseHarmonic<S>,
    side: &Side,
    k: usize,
) -> Result<S> {
    let eig = ctx.eig()?;
    check_mode(ctx, k)?;
    let mode = eig.mode(side.corner as usize, k);
    let m = h.level.saturating_sub(side.cell.len());
    let w = side.cell.extend_repeated(side.corner, m);
    let vals = h.cell_values(ctx, &w);
    Ok(ctx.hs.r_word(&side.cell).recip() * mode.lambda.powi(m).recip() * dot(&mode.beta, &vals))
}

/// All derivatives of `f` at a vertex, with the junction compatibility
/// residual (the sum of the normal derivatives over all sides).
#[derive(Debug, Clone)]
pub struct Gradient<S> {
    pub x: VertexId,
    /// Side-major, then `k = 2..=n0`.
    pub entries: Vec<DerivativeEstimate<S>>,
    /// Present at junctions only.
    pub compatibility: Option<S>,
    pub differentiable: bool,
}

impl<S: Scalar> Gradient<S> {
    pub fn limit(&self, side: &Side, k: usize) -> Option<&S> {
        self.entries
            .iter()
            .find(|e| e.side == *side && e.k == k)
            .map(|e| &e.limit)
    }
}

pub fn gradient<S: Scalar>(
    ctx: &Context<S>,
    f: &dyn VertexFn<S>,
    x: &VertexId,
    m_max: usize,
) -> Result<Gradient<S>> {
    ctx.eig()?;
    let sides = ctx.spec.sides(x);
    let mut entries = Vec::new();
    for side in &sides {
        for k in 2..=ctx.n0() {
            entries.push(derivative_sequence(ctx, f, side, k, m_max)?);
        }
    }
    let compatibility = (sides.len() > 1).then(|| {
        let mut acc = S::zero();
        for e in entries.iter().filter(|e| e.k == 2) {
            acc += e.limit.clone();
        }
        acc
    });
    let differentiable = entries.iter().all(|e| e.converged)
        && compatibility.as_ref().map_or(true, |r| r.mag() < COMPAT_TOL);
    Ok(Gradient {
        x: x.clone(),
        entries,
        compatibility,
        differentiable,
    })
}

/// A harmonic function on the level-`|u|` neighborhood `U_0(x)`: one
/// harmonic piece per side cell, continuous at `x`.
#[derive(Debug, Clone)]
pub struct LocalHarmonic<S> {
    pub x: VertexId,
    /// Side cell word -> corner values of the harmonic piece on that cell.
    pub cells: BTreeMap<Word, Vec<S>>,
}

impl<S: Scalar> LocalHarmonic<S> {
    pub fn value(&self, ctx: &Context<S>, v: &VertexId) -> Result<S> {
        for (w, vals) in &self.cells {
            if let Some((rw, rc)) = ctx.spec.descend(v, w) {
                let folded = ctx.fold_cell(vals, &rw.0);
                return Ok(folded[rc as usize].clone());
            }
        }
        Err(Error::InvalidVertex(format!(
            "{v} lies outside the neighborhood of {}",
            self.x
        )))
    }

    /// Exact derivative of the patch through one of its own sides.
    pub fn derivative(&self, ctx: &Context<S>, side: &Side, k: usize) -> Result<S> {
        let eig = ctx.eig()?;
        check_mode(ctx, k)?;
        let vals = self.cells.get(&side.cell).ok_or_else(|| {
            Error::InvalidVertex(format!("{} is not a side cell of the patch", side.cell))
        })?;
        let mode = eig.mode(side.corner as usize, k);
        Ok(ctx.hs.r_word(&side.cell).recip() * dot(&mode.beta, vals))
    }
}

impl<S: Scalar> VertexFn<S> for LocalHarmonic<S> {
    fn sample(&self, ctx: &Context<S>, v: &VertexId) -> Result<S> {
        self.value(ctx, v)
    }
}

/// The weak tangent at `x`: the harmonic function on `U_0(x)` with the
/// same value and the same derivatives as `f`.
#[derive(Debug, Clone)]
pub struct WeakTangent<S> {
    pub value: S,
    pub tangent: LocalHarmonic<S>,
    pub gradient: Gradient<S>,
}

pub fn weak_tangent<S: Scalar>(
    ctx: &Context<S>,
    f: &dyn VertexFn<S>,
    x: &VertexId,
    m_max: usize,
) -> Result<WeakTangent<S>> {
    let grad = gradient(ctx, f, x, m_max)?;
    if !grad.differentiable {
        return Err(Error::NotDifferentiable(format!(
            "gradient of the input does not converge compatibly at {x}"
        )));
    }
    let eig = ctx.eig()?;
    let fx = f.sample(ctx, x)?;
    let mut cells = BTreeMap::new();
    for side in ctx.spec.sides(x) {
        let c = side.corner as usize;
        let r_u = ctx.hs.r_word(&side.cell);
        let mut vals: Vec<S> = eig
            .mode(c, 1)
            .alpha
            .iter()
            .map(|a| fx.clone() * a.clone())
            .collect();
        for k in 2..=ctx.n0() {
            let d = grad
                .limit(&side, k)
                .expect("gradient holds every side and mode")
                .clone();
            let weight = r_u.clone() * d;
            for (v, a) in vals.iter_mut().zip(&eig.mode(c, k).alpha) {
                *v += weight.clone() * a.clone();
            }
        }
        cells.insert(side.cell.clone(), vals);
    }
    Ok(WeakTangent {
        value: fx,
        tangent: LocalHarmonic { x: x.clone(), cells },
        gradient: grad,
    })
}

/// The harmonic function on `U_0(x)` matching `f` at the boundary of the
/// depth-`m` neighborhood `U_m(x)`: harmonic across `x` (mean-value
/// equation at the junction), then pulled outward cell by cell.
pub fn hm_approximant<S: Scalar>(
    ctx: &Context<S>,
    f: &dyn VertexFn<S>,
    x: &VertexId,
    m: usize,
) -> Result<LocalHarmonic<S>> {
    ctx.eig()?;
    let sides = ctx.spec.sides(x);
    let n0 = ctx.n0();
    let mut traces = Vec::with_capacity(sides.len());
    let mut num = S::zero();
    let mut den = S::zero();
    for side in &sides {
        let c = side.corner as usize;
        let w = side.cell.extend_repeated(side.corner, m);
        let mut vals = vec![S::zero(); n0];
        let cond = ctx.hs.r_word(&w).recip();
        for t in 0..n0 {
            if t == c {
                continue;
            }
            vals[t] = f.sample(ctx, &ctx.spec.canonical_vertex(&w.0, t as u8)?)?;
            let edge = cond.clone() * ctx.hs.c[(t, c)].clone();
            num += edge.clone() * vals[t].clone();
            den += edge;
        }
        traces.push(vals);
    }
    let y = if x.is_boundary() {
        f.sample(ctx, x)?
    } else {
        num * den.recip()
    };
    let mut cells = BTreeMap::new();
    for (side, mut vals) in sides.iter().zip(traces) {
        vals[side.corner as usize] = y.clone();
        let outward = ctx.m_mat(side.corner).pow(m).inverse()?;
        cells.insert(side.cell.clone(), outward.mat_vec(&vals));
    }
    Ok(LocalHarmonic { x: x.clone(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{solve_poisson, SolveMethod};
    use crate::scalar::Rational;

    fn q(num: i64, den: i64) -> Rational {
        Rational::from_ratio(num, den)
    }

    fn sg() -> Context<Rational> {
        Context::preset("sg").unwrap()
    }

    fn corner_side(j: u8) -> Side {
        Side {
            cell: Word::empty(),
            corner: j,
        }
    }

    #[test]
    fn constant_sequences_for_harmonic_functions() {
        let ctx = sg();
        let h = PiecewiseHarmonic::harmonic(&[q(0, 1), q(1, 1), q(1, 1)]);
        let d = derivative_sequence(&ctx, &h, &corner_side(0), 2, 4).unwrap();
        assert!(d.converged);
        assert_eq!(d.limit, q(-2, 1));
        assert!(d.approximants.iter().all(|a| *a == q(-2, 1)));
        assert_eq!(d.ratio, 0.0);
        let d3 = derivative_sequence(&ctx, &h, &corner_side(0), 3, 4).unwrap();
        assert!(d3.converged && d3.limit.is_zero());
        // d_13 h(F_1^m v_2) = 1/3, seen from the sibling cell F_1^{m-1} F_2.
        for m in 1..5usize {
            let mut word = vec![0u8; m - 1];
            word.push(1);
            let side = Side { cell: Word(word), corner: 0 };
            let d = derivative_sequence(&ctx, &h, &side, 3, 3).unwrap();
            assert!(d.converged);
            assert_eq!(d.limit, q(1, 3), "ladder at m = {m}");
        }
        // d_32 h(F_1^m F_2 v_3) = 0 through the cell-2 view.
        for m in 0..5usize {
            let mut word = vec![0u8; m];
            word.push(1);
            let side = Side { cell: Word(word), corner: 2 };
            let d = exact_harmonic_derivative(&ctx, &h, &side, 2).unwrap();
            assert!(d.is_zero(), "normal derivative at m = {m}");
        }
    }

    #[test]
    fn delta_duality_at_corners() {
        let ctx = sg();
        let eig = ctx.eig().unwrap();
        for j in 0..3usize {
            for l in 2..=3usize {
                let h = PiecewiseHarmonic::harmonic(&eig.mode(j, l).alpha.clone());
                for k in 2..=3usize {
                    let d = exact_harmonic_derivative(&ctx, &h, &corner_side(j as u8), k).unwrap();
                    let expect = if k == l { q(1, 1) } else { q(0, 1) };
                    assert_eq!(d, expect, "corner {j}, k = {k}, l = {l}");
                }
            }
        }
        let ctx3 = Context::<f64>::preset("sg3").unwrap();
        let eig3 = ctx3.eig().unwrap();
        for l in 2..=3usize {
            let h = PiecewiseHarmonic::harmonic(&eig3.mode(1, l).alpha.clone());
            for k in 2..=3usize {
                let d = exact_harmonic_derivative(&ctx3, &h, &corner_side(1), k).unwrap();
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_derivatives_scale_under_composition() {
        let ctx = sg();
        let g = PiecewiseHarmonic::tent(&ctx, &ctx.spec.parse_vertex("1:2").unwrap(), 1).unwrap();
        let u = Word(vec![1, 0]);
        let restricted = g.restrict_map(&ctx, &u);
        let r_u = ctx.hs.r_word(&u);
        for k in 2..=3usize {
            let small = exact_harmonic_derivative(&ctx, &restricted, &corner_side(2), k).unwrap();
            let big_side = Side { cell: u.clone(), corner: 2 };
            let big = exact_harmonic_derivative(&ctx, &g, &big_side, k).unwrap();
            assert_eq!(big, r_u.clone().recip() * small, "k = {k}");
        }
        // Composing with the corner map rescales by the mode eigenvalue.
        let eig = ctx.eig().unwrap();
        for k in 2..=3usize {
            let h = PiecewiseHarmonic::harmonic(&eig.mode(0, k).alpha.clone());
            for m in 0..4usize {
                let pulled = h.restrict_map(&ctx, &Word(vec![0; m]));
                let d = exact_harmonic_derivative(&ctx, &pulled, &corner_side(0), k).unwrap();
                assert_eq!(d, eig.lambda(0, k).powi(m), "k = {k}, m = {m}");
            }
        }
    }

    #[test]
    fn gradients_at_junctions_and_boundary() {
        let ctx = sg();
        let h = PiecewiseHarmonic::harmonic(&[q(0, 1), q(1, 1), q(1, 1)]);
        let x = ctx.spec.parse_vertex("1:2").unwrap();
        let grad = gradient(&ctx, &h, &x, 3).unwrap();
        assert_eq!(grad.entries.len(), 4);
        assert!(grad.differentiable);
        assert!(grad.compatibility.as_ref().unwrap().is_zero());
        let side1 = Side { cell: Word(vec![0]), corner: 1 };
        let side2 = Side { cell: Word(vec![1]), corner: 0 };
        assert_eq!(grad.limit(&side1, 2), Some(&q(1, 1)));
        assert_eq!(grad.limit(&side2, 2), Some(&q(-1, 1)));
        let at_corner = gradient(&ctx, &h, &ctx.spec.parse_vertex(":1").unwrap(), 3).unwrap();
        assert!(at_corner.compatibility.is_none());
        assert!(at_corner.differentiable);
        assert_eq!(at_corner.limit(&corner_side(0), 2), Some(&q(-2, 1)));
    }

    #[test]
    fn gradient_of_a_poisson_solution() {
        let ctx = Context::<f64>::preset("sg").unwrap();
        let one = PiecewiseHarmonic::constant(&ctx, &1.0);
        let u = solve_poisson(&ctx, 6, &[0.0; 3], &one, SolveMethod::Auto).unwrap();
        let x = ctx.spec.parse_vertex("1:2").unwrap();
        let grad = gradient(&ctx, &u, &x, 5).unwrap();
        assert!(grad.differentiable);
        assert!(grad.compatibility.unwrap().abs() < 1e-6);
        for e in grad.entries.iter().filter(|e| e.k == 2) {
            assert!((e.ratio - 1.0 / 3.0).abs() < 1e-2, "ratio {}", e.ratio);
        }
    }

    #[test]
    fn weak_tangent_reproduces_the_gradient() {
        let ctx = sg();
        let h = PiecewiseHarmonic::harmonic(&[q(0, 1), q(1, 1), q(1, 1)]);
        let x = ctx.spec.parse_vertex("1:2").unwrap();
        let t = weak_tangent(&ctx, &h, &x, 3).unwrap();
        assert_eq!(t.value, q(3, 5));
        for (w, vals) in &t.tangent.cells {
            assert_eq!(*vals, h.cell_values(&ctx, w), "tangent cell {w}");
        }
        for e in &t.gradient.entries {
            let d = t.tangent.derivative(&ctx, &e.side, e.k).unwrap();
            assert_eq!(d, e.limit);
        }

        let ctxf = Context::<f64>::preset("sg").unwrap();
        let one = PiecewiseHarmonic::constant(&ctxf, &1.0);
        let u = solve_poisson(&ctxf, 6, &[0.0; 3], &one, SolveMethod::Auto).unwrap();
        let xf = ctxf.spec.parse_vertex("1:2").unwrap();
        let t = weak_tangent(&ctxf, &u, &xf, 5).unwrap();
        let again = gradient(&ctxf, &t.tangent, &xf, 3).unwrap();
        for e in &t.gradient.entries {
            let replayed = again.limit(&e.side, e.k).unwrap();
            assert!((replayed - e.limit).abs() < 1e-10, "side {} k {}", e.side.cell, e.k);
        }
        // Adding a constant shifts the tangent's value, not its gradient.
        let shifted = |_ctx: &Context<f64>, v: &VertexId| -> Result<f64> {
            Ok(u.value(v)? + 1.0)
        };
        let ts = weak_tangent(&ctxf, &shifted, &xf, 5).unwrap();
        assert!((ts.value - (t.value + 1.0)).abs() < 1e-12);
        for e in &t.gradient.entries {
            let d = ts.gradient.limit(&e.side, e.k).unwrap();
            assert!((d - e.limit).abs() < 1e-11);
        }
    }

    #[test]
    fn hm_approximants_fix_harmonics_and_converge() {
        let ctx = sg();
        let h = PiecewiseHarmonic::harmonic(&[q(0, 1), q(1, 1), q(1, 1)]);
        let x = ctx.spec.parse_vertex("1:2").unwrap();
        for m in 0..4usize {
            let hm = hm_approximant(&ctx, &h, &x, m).unwrap();
            for (w, vals) in &hm.cells {
                assert_eq!(*vals, h.cell_values(&ctx, w), "m = {m}, cell {w}");
            }
        }
        let at_corner = hm_approximant(&ctx, &h, &ctx.spec.parse_vertex(":1").unwrap(), 2).unwrap();
        assert_eq!(at_corner.cells[&Word::empty()], h.cell_values(&ctx, &Word::empty()));

        // Poisson data on the gasket: the approximants close in on the
        // weak tangent as the matching depth grows.
        let ctxf = Context::<f64>::preset("sg").unwrap();
        let one = PiecewiseHarmonic::constant(&ctxf, &1.0);
        let u = solve_poisson(&ctxf, 6, &[0.0; 3], &one, SolveMethod::Auto).unwrap();
        let xf = ctxf.spec.parse_vertex("1:2").unwrap();
        let tangent = weak_tangent(&ctxf, &u, &xf, 5).unwrap().tangent;
        let sample_points: Vec<VertexId> = ctxf
            .spec
            .vertex_set(3)
            .into_iter()
            .filter(|v| tangent.value(&ctxf, v).is_ok())
            .collect();
        let mut sups = Vec::new();
        for m in 2..6usize {
            let hm = hm_approximant(&ctxf, &u, &xf, m).unwrap();
            let sup = sample_points
                .iter()
                .map(|v| {
                    (hm.value(&ctxf, v).unwrap() - tangent.value(&ctxf, v).unwrap()).abs()
                })
                .fold(0.0_f64, f64::max);
            sups.push(sup);
        }
        for pair in sups.windows(2) {
            assert!(pair[1] < pair[0], "sup norms {:?}", sups);
        }
    }

    #[test]
    fn degenerate_structures_are_refused() {
        let ctx = Context::<f64>::preset("vicsek").unwrap();
        assert!(ctx.is_degenerate());
        let f = PiecewiseHarmonic::constant(&ctx, &1.0);
        let side = Side { cell: Word(vec![0]), corner: 1 };
        let err = derivative_sequence(&ctx, &f, &side, 2, 3).unwrap_err();
        assert!(matches!(err, Error::DegenerateStructure(_)));
        let x = ctx.spec.canonical_vertex(&[0], 1).unwrap();
        assert!(matches!(
            gradient(&ctx, &f, &x, 3),
            Err(Error::DegenerateStructure(_))
        ));
        assert!(matches!(
            hm_approximant(&ctx, &f, &x, 2),
            Err(Error::DegenerateStructure(_))
        ));
        assert!(matches!(
            weak_tangent(&ctx, &f, &x, 3),
            Err(Error::DegenerateStructure(_))
        ));
    }
}
