//! The Green kernel for the Dirichlet Laplacian, its vertex series, spline
//! potentials, and the series route to transverse vertex derivatives of
//! functions with known Laplacian.

use std::collections::BTreeMap;

use crate::calculus::PiecewiseHarmonic;
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::structure::Context;
use crate::topology::{Side, VertexId, Word};
use crate::{Error, Result};

/// Interior data of the level-1 graph: the list of interior vertices and
/// the inverse `Ψ` of the interior block of the level-1 Laplacian, which is
/// the Green kernel restricted to `V_1 × V_1`.
#[derive(Debug, Clone)]
pub struct Level1<S> {
    pub interior: Vec<VertexId>,
    pub index: BTreeMap<VertexId, usize>,
    pub psi: Mat<S>,
    /// `slot[i][t]` is the interior index of `F_i v_t`, `None` on `V_0`.
    slot: Vec<Vec<Option<usize>>>,
}

pub fn level1<S: Scalar>(ctx: &Context<S>) -> Result<Level1<S>> {
    let sys = super::level_system(ctx, 1)?;
    let interior: Vec<VertexId> = sys
        .verts
        .iter()
        .filter(|v| !v.is_boundary())
        .cloned()
        .collect();
    let index: BTreeMap<VertexId, usize> = interior
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let n = interior.len();
    let mut lii = Mat::<S>::zeros(n, n);
    for (&(i, j), val) in &sys.entries {
        let (vi, vj) = (&sys.verts[i], &sys.verts[j]);
        if let (Some(&p), Some(&q)) = (index.get(vi), index.get(vj)) {
            lii[(p, q)] = val.clone();
        }
    }
    let psi = lii.inverse()?;
    let mut slot = Vec::with_capacity(ctx.spec.n_maps);
    for i in 0..ctx.spec.n_maps as u8 {
        let mut row = Vec::with_capacity(ctx.n0());
        for t in 0..ctx.n0() as u8 {
            let v = ctx.spec.canonical_vertex(&[i], t)?;
            row.push(index.get(&v).copied());
        }
        slot.push(row);
    }
    Ok(Level1 {
        interior,
        index,
        psi,
        slot,
    })
}

impl<S: Scalar> Level1<S> {
    pub fn slot_index(&self, i: u8, t: u8) -> Option<usize> {
        self.slot[i as usize][t as usize]
    }

    /// Values of every interior level-1 tent at the point `F_word v_corner`.
    pub fn psi_vec(&self, ctx: &Context<S>, word: &[u8], corner: u8) -> Vec<S> {
        let mut out = vec![S::zero(); self.interior.len()];
        if word.is_empty() {
            return out;
        }
        let i = word[0];
        // Column t of the fold matrix holds the values of the corner-t
        // harmonic basis of the first-level cell along the rest of the word.
        let mut fold = Mat::<S>::identity(ctx.n0());
        for &l in &word[1..] {
            fold = ctx.m_mat(l).mat_mul(&fold);
        }
        for t in 0..ctx.n0() {
            if let Some(q) = self.slot[i as usize][t] {
                out[q] = fold[(corner as usize, t)].clone();
            }
        }
        out
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += x.clone() * y.clone();
    }
    acc
}

/// The nested cells whose interior contains `p`: every prefix `w` of the
/// canonical word with `F_w^{-1} p` not a boundary corner, paired with the
/// relative address of `p` in that cell.
fn chain<S: Scalar>(ctx: &Context<S>, p: &VertexId) -> Result<Vec<(Word, Word)>> {
    let mut out = Vec::new();
    for k in 0..=p.word.len() {
        let suffix = Word(p.word.0[k..].to_vec());
        if ctx.spec.canonicalize(&suffix, p.corner)?.is_boundary() {
            continue;
        }
        out.push((Word(p.word.0[..k].to_vec()), suffix));
    }
    Ok(out)
}

/// The Green kernel evaluated at two vertices.
pub fn green_value<S: Scalar>(
    ctx: &Context<S>,
    l1: &Level1<S>,
    p: &VertexId,
    z: &VertexId,
) -> Result<S> {
    let mut acc = S::zero();
    for (w, suffix) in chain(ctx, p)? {
        let Some((zw, zc)) = ctx.spec.descend(z, &w) else {
            continue;
        };
        let vp = l1.psi_vec(ctx, &suffix.0, p.corner);
        let vz = l1.psi_vec(ctx, &zw.0, zc);
        acc += ctx.hs.r_word(&w) * dot(&vp, &l1.psi.mat_vec(&vz));
    }
    Ok(acc)
}

/// A load the Green machinery can integrate cell by cell.
pub trait GreenLoad<S: Scalar> {
    /// The moment vector `(∫ (load ∘ F_w) H_t dμ)_t`.
    fn moments(&self, ctx: &Context<S>, w: &Word) -> Vec<S>;
    /// Corner values of `load ∘ F_w` when that restriction is harmonic.
    fn harmonic_restriction(&self, ctx: &Context<S>, w: &Word) -> Option<Vec<S>>;
}

impl<S: Scalar> GreenLoad<S> for PiecewiseHarmonic<S> {
    fn moments(&self, ctx: &Context<S>, w: &Word) -> Vec<S> {
        PiecewiseHarmonic::moments(self, ctx, w)
    }

    fn harmonic_restriction(&self, ctx: &Context<S>, w: &Word) -> Option<Vec<S>> {
        (w.len() >= self.level).then(|| self.cell_values(ctx, w))
    }
}

/// Loads of the interior level-1 tents of the cell `F_w K`:
/// `(∫ (load ∘ F_w) ψ_q dμ)_q` over the interior vertices of `V_1`.
pub fn tent_loads1<S: Scalar>(
    ctx: &Context<S>,
    l1: &Level1<S>,
    load: &dyn GreenLoad<S>,
    w: &Word,
) -> Vec<S> {
    let mut out = vec![S::zero(); l1.interior.len()];
    for i in 0..ctx.spec.n_maps as u8 {
        let q = load.moments(ctx, &w.child(i));
        for t in 0..ctx.n0() {
            if let Some(p) = l1.slot[i as usize][t] {
                out[p] += ctx.hs.mu[i as usize].clone() * q[t].clone();
            }
        }
    }
    out
}

/// `∫ G(p, z) load(z) dμ(z)` through the vertex series of the kernel. The
/// zero-boundary solution of `Δu = load` has `u(p) = -` this value.
pub fn green_integral_at<S: Scalar>(
    ctx: &Context<S>,
    l1: &Level1<S>,
    load: &dyn GreenLoad<S>,
    p: &VertexId,
) -> Result<S> {
    let mut acc = S::zero();
    for (w, suffix) in chain(ctx, p)? {
        let vp = l1.psi_vec(ctx, &suffix.0, p.corner);
        let tl = tent_loads1(ctx, l1, load, &w);
        let term = dot(&vp, &l1.psi.mat_vec(&tl));
        acc += ctx.hs.r_word(&w) * ctx.hs.mu_word(&w) * term;
    }
    Ok(acc)
}

/// The spline potential of corner `j`, mode `k`: the piecewise-harmonic
/// level-1 function `λ_jk^{-1} Σ_t (β_jk)_t G(F_j v_t, ·)`, zero on `V_0`.
pub fn a_spline<S: Scalar>(
    ctx: &Context<S>,
    l1: &Level1<S>,
    j: usize,
    k: usize,
) -> Result<PiecewiseHarmonic<S>> {
    let eig = ctx.eig()?;
    if k < 2 || k > ctx.n0() {
        return Err(Error::Precondition(format!(
            "spline mode must lie in 2..={}, got {}",
            ctx.n0(),
            k
        )));
    }
    let mode = eig.mode(j, k);
    let mut lifted = vec![S::zero(); l1.interior.len()];
    for t in 0..ctx.n0() {
        if t == j {
            continue;
        }
        if let Some(q) = l1.slot[j][t] {
            lifted[q] += mode.beta[t].clone();
        }
    }
    let coeffs: Vec<S> = l1
        .psi
        .mat_vec(&lifted)
        .into_iter()
        .map(|x| mode.lambda.clone().recip() * x)
        .collect();
    let mut grid = super::GridFunction::zeros(ctx, 1);
    for (q, v) in l1.interior.iter().enumerate() {
        *grid.values.get_mut(v).unwrap() = coeffs[q].clone();
    }
    PiecewiseHarmonic::from_grid(ctx, &grid)
}

/// The truncated axis chain `Σ_{n=0}^{count} a ∘ F_axis^{-n}` of a spline
/// `a`, each pullback extended by zero outside `F_axis^n K`.
#[derive(Debug, Clone)]
pub struct ChainLoad<S> {
    pub axis: u8,
    pub count: usize,
    pub spline: PiecewiseHarmonic<S>,
    /// Root moments of the spline.
    q_a: Vec<S>,
    /// Spline values on the cell `F_axis V_0`.
    v1: Vec<S>,
}

impl<S: Scalar> ChainLoad<S> {
    pub fn new(
        ctx: &Context<S>,
        l1: &Level1<S>,
        j: usize,
        k: usize,
        count: usize,
    ) -> Result<ChainLoad<S>> {
        let spline = a_spline(ctx, l1, j, k)?;
        let q_a = spline.moments(ctx, &Word::empty());
        let v1 = spline.cell_values(ctx, &Word(vec![j as u8]));
        Ok(ChainLoad {
            axis: j as u8,
            count,
            spline,
            q_a,
            v1,
        })
    }

    fn split<'a>(&self, w: &'a Word) -> (usize, &'a [u8]) {
        let e = w.0.iter().take_while(|&&l| l == self.axis).count();
        (e, &w.0[e..])
    }

    /// Pointwise value at a vertex (any address).
    pub fn value(&self, ctx: &Context<S>, v: &VertexId) -> S {
        let mut acc = S::zero();
        for n in 0..=self.count {
            let cell = Word(vec![self.axis; n]);
            match ctx.spec.descend(v, &cell) {
                Some((rw, rc)) => {
                    acc += self.spline.value(
                        ctx,
                        &VertexId {
                            word: rw,
                            corner: rc,
                        },
                    );
                }
                None => break,
            }
        }
        acc
    }

    /// The chain as an explicit piecewise-harmonic function of level
    /// `count + 1`.
    pub fn to_piecewise(&self, ctx: &Context<S>) -> Result<PiecewiseHarmonic<S>> {
        let grid = super::GridFunction::from_fn(ctx, self.count + 1, |v| self.value(ctx, v));
        PiecewiseHarmonic::from_grid(ctx, &grid)
    }
}

/// Sup of entry magnitudes, for float negligibility cutoffs.
fn sup_mag<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|x| x.mag()).fold(0.0, f64::max)
}

/// Relative floor below which a shifted trace stops contributing (float
/// mode only; the trace shrinks monotonically once it is this small).
const SHIFT_FLOOR: f64 = 1e-30;

impl<S: Scalar> GreenLoad<S> for ChainLoad<S> {
    fn moments(&self, ctx: &Context<S>, w: &Word) -> Vec<S> {
        let (e, rest) = self.split(w);
        let n0 = ctx.n0();
        let mut out = vec![S::zero(); n0];
        if e <= self.count {
            for (o, x) in out
                .iter_mut()
                .zip(self.spline.moments(ctx, &Word(rest.to_vec())))
            {
                *o += x;
            }
        }
        if e >= 1 {
            // Shallower chain members, pulled back s times through the
            // axis cell: corner trace M^{s-1} v1, walked incrementally.
            let s_min = e.saturating_sub(self.count).max(1);
            let floor = sup_mag(&self.v1) * SHIFT_FLOOR;
            let mut trace = self.v1.clone();
            for s in 1..=e {
                if s >= s_min {
                    let vals = if rest.is_empty() {
                        trace.clone()
                    } else {
                        ctx.fold_cell(&trace, rest)
                    };
                    for (o, x) in out.iter_mut().zip(ctx.gram.mat_vec(&vals)) {
                        *o += x;
                    }
                }
                if s == e || (!S::EXACT && sup_mag(&trace) <= floor) {
                    break;
                }
                trace = ctx.m_mat(self.axis).mat_vec(&trace);
            }
        }
        if rest.is_empty() && e < self.count {
            // Pullbacks deeper than the word: Σ_s (μ M^T)^s q_a.
            let mt = ctx.m_mat(self.axis).transpose();
            let mu = ctx.hs.mu[self.axis as usize].clone();
            let floor = sup_mag(&self.q_a) * SHIFT_FLOOR;
            let mut vec = self.q_a.clone();
            for _ in 0..self.count - e {
                vec = mt.mat_vec(&vec);
                for v in vec.iter_mut() {
                    *v *= mu.clone();
                }
                if vec.iter().all(|v| v.is_zero()) || (!S::EXACT && sup_mag(&vec) <= floor) {
                    break;
                }
                for (o, x) in out.iter_mut().zip(&vec) {
                    *o += x.clone();
                }
            }
        }
        out
    }

    fn harmonic_restriction(&self, ctx: &Context<S>, w: &Word) -> Option<Vec<S>> {
        let (e, rest) = self.split(w);
        if rest.is_empty() && e <= self.count {
            return None;
        }
        let mut vals = vec![S::zero(); ctx.n0()];
        if e <= self.count {
            for (o, x) in vals
                .iter_mut()
                .zip(self.spline.cell_values(ctx, &Word(rest.to_vec())))
            {
                *o += x;
            }
        }
        if e >= 1 {
            let s_min = e.saturating_sub(self.count).max(1);
            let floor = sup_mag(&self.v1) * SHIFT_FLOOR;
            let mut trace = self.v1.clone();
            for s in 1..=e {
                if s >= s_min {
                    let term = if rest.is_empty() {
                        trace.clone()
                    } else {
                        ctx.fold_cell(&trace, rest)
                    };
                    for (o, x) in vals.iter_mut().zip(term) {
                        *o += x;
                    }
                }
                if s == e || (!S::EXACT && sup_mag(&trace) <= floor) {
                    break;
                }
                trace = ctx.m_mat(self.axis).mat_vec(&trace);
            }
        }
        Some(vals)
    }
}

/// Knobs for the series tail of [`derivative_via_green`].
#[derive(Debug, Clone)]
pub struct TailOptions {
    /// Explicit terms allowed before the load must restrict harmonically.
    pub max_explicit: usize,
    /// Relative size below which a tail component is treated as absent.
    pub coeff_tol: f64,
    /// Strict upper bound on an accepted geometric ratio.
    pub ratio_margin: f64,
}

impl Default for TailOptions {
    fn default() -> TailOptions {
        TailOptions {
            max_explicit: 64,
            coeff_tol: 1e-11,
            ratio_margin: 1.0 - 1e-9,
        }
    }
}

/// Transverse vertex derivative `d_{ck} f` at `x = F_u v_c`, approached
/// through the side cell `u`, for a function with corner values `f_cell`
/// on `F_u V_0` and Laplacian `load`. The harmonic part contributes
/// `r_u^{-1} β_ck f_cell`; the load contributes a series over the shrinking
/// cells `F_u F_c^n K` that is summed explicitly until the restricted load
/// is harmonic and geometrically afterwards, mode by mode. A mode whose
/// geometric ratio reaches 1 with a nonvanishing coefficient makes the
/// derivative diverge.
pub fn derivative_via_green<S: Scalar>(
    ctx: &Context<S>,
    l1: &Level1<S>,
    side: &Side,
    k: usize,
    f_cell: &[S],
    load: &dyn GreenLoad<S>,
    opts: &TailOptions,
) -> Result<S> {
    let eig = ctx.eig()?;
    let j = side.corner as usize;
    if k < 2 || k > ctx.n0() {
        return Err(Error::Precondition(format!(
            "derivative mode must lie in 2..={}, got {}",
            ctx.n0(),
            k
        )));
    }
    let mode = eig.mode(j, k);
    let lambda = mode.lambda.clone();
    let a = a_spline(ctx, l1, j, k)?;
    let acoef: Vec<S> = l1.interior.iter().map(|v| a.value(ctx, v)).collect();
    let q_a = a.moments(ctx, &Word::empty());
    let mu_c = ctx.hs.mu[j].clone();

    let harm = ctx.hs.r_word(&side.cell).recip() * dot(&mode.beta, f_cell);

    let mu_u = ctx.hs.mu_word(&side.cell);
    let step = ctx.hs.r[j].clone() * mu_c.clone() * lambda.clone().recip();
    let mut factor = mu_u;
    let mut series = S::zero();
    let mut n = 0usize;
    let tail_values = loop {
        let w = side.cell.extend_repeated(side.corner, n);
        if let Some(b) = load.harmonic_restriction(ctx, &w) {
            break b;
        }
        if n >= opts.max_explicit {
            return Err(Error::Precondition(format!(
                "load never restricts harmonically along side {}:{}",
                side.cell,
                side.corner + 1
            )));
        }
        let tl = tent_loads1(ctx, l1, load, &w);
        series += factor.clone() * dot(&acoef, &tl);
        factor *= step.clone();
        n += 1;
    };

    // Geometric tail: Σ_{m>=0} (r_c μ_c / λ)^m q_a^T M_c^m b, mode by mode.
    for t in 1..=ctx.n0() {
        let mt = eig.mode(j, t);
        let coeff = dot(&mt.beta, &tail_values) * dot(&q_a, &mt.alpha);
        let scale = mt.beta.iter().map(|x| x.mag()).sum::<f64>()
            * tail_values.iter().map(|x| x.mag()).sum::<f64>()
            * q_a.iter().map(|x| x.mag()).sum::<f64>()
            * mt.alpha.iter().map(|x| x.mag()).sum::<f64>();
        let negligible = if S::EXACT {
            coeff.is_zero()
        } else {
            coeff.mag() <= opts.coeff_tol * scale.max(f64::MIN_POSITIVE)
        };
        if negligible {
            continue;
        }
        let theta = step.clone() * mt.lambda.clone();
        if theta.mag() >= opts.ratio_margin {
            return Err(Error::DivergentTail(format!(
                "mode {} of corner {} carries ratio {:.6} with coefficient {:.3e} at side {}:{}",
                t,
                j + 1,
                theta.mag(),
                coeff.mag(),
                side.cell,
                side.corner + 1
            )));
        }
        series += factor.clone() * coeff * (S::one() - theta).recip();
    }

    Ok(harm - series)
}
