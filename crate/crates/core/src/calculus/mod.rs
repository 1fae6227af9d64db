//! Functions on the fractal and the discrete calculus on its vertex graphs:
//! grid functions, piecewise-harmonic functions, energy, measure-exact
//! integration, and the level-`m` Dirichlet and Poisson solvers.

use std::collections::BTreeMap;
use std::io::BufRead;

use crate::linalg::{conjugate_gradient, Csr, Mat};
use crate::scalar::{parse_scalar, Scalar};
use crate::structure::Context;
use crate::topology::{VertexId, Word};
use crate::{Error, Result};

pub mod green;

/// Values on the canonical vertices of `V_m`.
#[derive(Debug, Clone)]
pub struct GridFunction<S> {
    pub level: usize,
    pub values: BTreeMap<VertexId, S>,
}

impl<S: Scalar> GridFunction<S> {
    pub fn from_fn<F: FnMut(&VertexId) -> S>(
        ctx: &Context<S>,
        level: usize,
        mut f: F,
    ) -> GridFunction<S> {
        let values = ctx
            .spec
            .vertex_set(level)
            .into_iter()
            .map(|v| {
                let y = f(&v);
                (v, y)
            })
            .collect();
        GridFunction { level, values }
    }

    pub fn zeros(ctx: &Context<S>, level: usize) -> GridFunction<S> {
        Self::from_fn(ctx, level, |_| S::zero())
    }

    pub fn value(&self, v: &VertexId) -> Result<S> {
        self.values
            .get(v)
            .cloned()
            .ok_or_else(|| Error::InvalidVertex(format!("{} is not a vertex of the grid", v)))
    }
}

/// A function harmonic inside every level-`L` cell, stored as its values on
/// the corners `F_w V_0` of each cell word `w` of length `L`. The cell data
/// must agree across shared vertices; every constructor guarantees that.
#[derive(Debug, Clone)]
pub struct PiecewiseHarmonic<S> {
    pub level: usize,
    pub cells: BTreeMap<Word, Vec<S>>,
}

impl<S: Scalar> PiecewiseHarmonic<S> {
    /// The harmonic function with the given boundary values.
    pub fn harmonic(boundary: &[S]) -> PiecewiseHarmonic<S> {
        let mut cells = BTreeMap::new();
        cells.insert(Word::empty(), boundary.to_vec());
        PiecewiseHarmonic { level: 0, cells }
    }

    pub fn constant(ctx: &Context<S>, value: &S) -> PiecewiseHarmonic<S> {
        PiecewiseHarmonic::harmonic(&vec![value.clone(); ctx.n0()])
    }

    /// The interpolant that matches a grid on `V_m` and is cellwise harmonic
    /// below it.
    pub fn from_grid(ctx: &Context<S>, grid: &GridFunction<S>) -> Result<PiecewiseHarmonic<S>> {
        let mut cells = BTreeMap::new();
        for w in ctx.spec.words(grid.level) {
            let mut vals = Vec::with_capacity(ctx.n0());
            for t in 0..ctx.n0() as u8 {
                let v = ctx.spec.canonical_vertex(&w.0, t)?;
                vals.push(grid.value(&v)?);
            }
            cells.insert(w, vals);
        }
        Ok(PiecewiseHarmonic {
            level: grid.level,
            cells,
        })
    }

    /// The level-`m` tent function: 1 at `q`, 0 at every other vertex of
    /// `V_m`, harmonic in each level-`m` cell.
    pub fn tent(ctx: &Context<S>, q: &VertexId, m: usize) -> Result<PiecewiseHarmonic<S>> {
        if m < q.level() {
            return Err(Error::LevelMismatch(format!(
                "tent at {} needs level >= {}, got {}",
                q,
                q.level(),
                m
            )));
        }
        let mut grid = GridFunction::zeros(ctx, m);
        match grid.values.get_mut(q) {
            Some(slot) => *slot = S::one(),
            None => {
                return Err(Error::InvalidVertex(format!(
                    "{} is not a canonical vertex of V_{}",
                    q, m
                )))
            }
        }
        PiecewiseHarmonic::from_grid(ctx, &grid)
    }

    /// Value at an arbitrary vertex address (canonical or not).
    pub fn value(&self, ctx: &Context<S>, v: &VertexId) -> S {
        if v.word.len() >= self.level {
            let (head, tail) = v.word.0.split_at(self.level);
            let base = &self.cells[&Word(head.to_vec())];
            if tail.is_empty() {
                base[v.corner as usize].clone()
            } else {
                ctx.fold_cell(base, tail)[v.corner as usize].clone()
            }
        } else {
            let cell = v.word.extend_repeated(v.corner, self.level - v.word.len());
            self.cells[&cell][v.corner as usize].clone()
        }
    }

    /// Corner values on the cell `F_w V_0`, for any word length.
    pub fn cell_values(&self, ctx: &Context<S>, w: &Word) -> Vec<S> {
        if w.len() >= self.level {
            let (head, tail) = w.0.split_at(self.level);
            ctx.fold_cell(&self.cells[&Word(head.to_vec())], tail)
        } else {
            (0..ctx.n0() as u8)
                .map(|t| {
                    self.value(
                        ctx,
                        &VertexId {
                            word: w.clone(),
                            corner: t,
                        },
                    )
                })
                .collect()
        }
    }

    /// Re-express on the finer cell structure of the given level.
    pub fn refine(&self, ctx: &Context<S>, to: usize) -> PiecewiseHarmonic<S> {
        if to <= self.level {
            return self.clone();
        }
        let mut cells = self.cells.clone();
        for _ in self.level..to {
            let mut next = BTreeMap::new();
            for (w, vals) in &cells {
                for i in 0..ctx.spec.n_maps as u8 {
                    next.insert(w.child(i), ctx.m_mat(i).mat_vec(vals));
                }
            }
            cells = next;
        }
        PiecewiseHarmonic { level: to, cells }
    }

    /// The composition with `F_w`, a piecewise-harmonic function on the
    /// whole set of level `max(0, L - |w|)`.
    pub fn restrict_map(&self, ctx: &Context<S>, w: &Word) -> PiecewiseHarmonic<S> {
        if w.len() >= self.level {
            PiecewiseHarmonic::harmonic(&self.cell_values(ctx, w))
        } else {
            let level = self.level - w.len();
            let cells = self
                .cells
                .iter()
                .filter(|(cw, _)| w.is_prefix_of(cw))
                .map(|(cw, vals)| (Word(cw.0[w.len()..].to_vec()), vals.clone()))
                .collect();
            PiecewiseHarmonic { level, cells }
        }
    }

    pub fn to_grid(&self, ctx: &Context<S>, level: usize) -> GridFunction<S> {
        GridFunction::from_fn(ctx, level, |v| self.value(ctx, v))
    }

    pub fn scale(&self, coef: &S) -> PiecewiseHarmonic<S> {
        let cells = self
            .cells
            .iter()
            .map(|(w, vals)| {
                (
                    w.clone(),
                    vals.iter().map(|x| x.clone() * coef.clone()).collect(),
                )
            })
            .collect();
        PiecewiseHarmonic {
            level: self.level,
            cells,
        }
    }

    /// `self + coef * other`, refined to the coarsest common level.
    pub fn add_scaled(
        &self,
        ctx: &Context<S>,
        coef: &S,
        other: &PiecewiseHarmonic<S>,
    ) -> PiecewiseHarmonic<S> {
        let level = self.level.max(other.level);
        let a = self.refine(ctx, level);
        let b = other.refine(ctx, level);
        let cells = a
            .cells
            .iter()
            .map(|(w, av)| {
                let bv = &b.cells[w];
                let vals = av
                    .iter()
                    .zip(bv)
                    .map(|(x, y)| x.clone() + coef.clone() * y.clone())
                    .collect();
                (w.clone(), vals)
            })
            .collect();
        PiecewiseHarmonic { level, cells }
    }

    /// Dirichlet energy, the same number the graph energy gives at every
    /// level at or beyond the cell level.
    pub fn energy(&self, ctx: &Context<S>) -> S {
        let mut acc = S::zero();
        for (w, vals) in &self.cells {
            acc += ctx.hs.r_word(w).recip() * ctx.hs.e0(vals, vals);
        }
        acc
    }

    /// Exact integral against the self-similar measure.
    pub fn integral(&self, ctx: &Context<S>) -> S {
        let mut acc = S::zero();
        for (w, vals) in &self.cells {
            let mut cell = S::zero();
            for (t, v) in vals.iter().enumerate() {
                cell += ctx.gamma[t].clone() * v.clone();
            }
            acc += ctx.hs.mu_word(w) * cell;
        }
        acc
    }

    /// Exact integral of the product of two piecewise-harmonic functions.
    pub fn inner(&self, ctx: &Context<S>, other: &PiecewiseHarmonic<S>) -> S {
        let level = self.level.max(other.level);
        let a = self.refine(ctx, level);
        let b = other.refine(ctx, level);
        let mut acc = S::zero();
        for (w, av) in &a.cells {
            let pv = ctx.gram.mat_vec(&b.cells[w]);
            let mut cell = S::zero();
            for (x, y) in av.iter().zip(&pv) {
                cell += x.clone() * y.clone();
            }
            acc += ctx.hs.mu_word(w) * cell;
        }
        acc
    }

    /// The moment vector `(∫ (f ∘ F_w) H_t dμ)_t`.
    pub fn moments(&self, ctx: &Context<S>, w: &Word) -> Vec<S> {
        if w.len() >= self.level {
            return ctx.gram.mat_vec(&self.cell_values(ctx, w));
        }
        let n0 = ctx.n0();
        let mut out = vec![S::zero(); n0];
        for i in 0..ctx.spec.n_maps as u8 {
            let q = self.moments(ctx, &w.child(i));
            let m = ctx.m_mat(i);
            for t in 0..n0 {
                let mut acc = S::zero();
                for s in 0..n0 {
                    acc += m[(s, t)].clone() * q[s].clone();
                }
                out[t] += ctx.hs.mu[i as usize].clone() * acc;
            }
        }
        out
    }
}

/// `∫ ψ_x^{(m)} dμ` for the level-`m` tent at a canonical vertex.
pub fn tent_integral<S: Scalar>(ctx: &Context<S>, x: &VertexId, m: usize) -> Result<S> {
    if m < x.level() {
        return Err(Error::LevelMismatch(format!(
            "tent at {} needs level >= {}, got {}",
            x,
            x.level(),
            m
        )));
    }
    let mut acc = S::zero();
    for side in ctx.spec.sides(x) {
        let c = side.corner as usize;
        acc += ctx.hs.mu_word(&side.cell)
            * ctx.hs.mu[c].powi(m - side.cell.len())
            * ctx.gamma[c].clone();
    }
    Ok(acc)
}

/// `∫ f ψ_x^{(m)} dμ` for a piecewise-harmonic `f`; exact at any level.
pub fn tent_load<S: Scalar>(
    ctx: &Context<S>,
    load: &PiecewiseHarmonic<S>,
    x: &VertexId,
    m: usize,
) -> Result<S> {
    if m < x.level() {
        return Err(Error::LevelMismatch(format!(
            "tent at {} needs level >= {}, got {}",
            x,
            x.level(),
            m
        )));
    }
    let mut acc = S::zero();
    for side in ctx.spec.sides(x) {
        let cell = side.cell.extend_repeated(side.corner, m - side.cell.len());
        let q = load.moments(ctx, &cell);
        acc += ctx.hs.mu_word(&cell) * q[side.corner as usize].clone();
    }
    Ok(acc)
}

/// Integral of the piecewise-harmonic interpolant of a grid.
pub fn integrate_grid<S: Scalar>(ctx: &Context<S>, grid: &GridFunction<S>) -> Result<S> {
    let mut acc = S::zero();
    for (v, y) in &grid.values {
        acc += y.clone() * tent_integral(ctx, v, grid.level)?;
    }
    Ok(acc)
}

/// The level-`m` graph energy `Σ_w r_w^{-1} Σ_{a<b} c_ab (u_a - u_b)^2`.
pub fn graph_energy<S: Scalar>(ctx: &Context<S>, grid: &GridFunction<S>) -> Result<S> {
    let n0 = ctx.n0();
    let mut acc = S::zero();
    for w in ctx.spec.words(grid.level) {
        let rinv = ctx.hs.r_word(&w).recip();
        let mut vals = Vec::with_capacity(n0);
        for t in 0..n0 as u8 {
            vals.push(grid.value(&ctx.spec.canonical_vertex(&w.0, t)?)?);
        }
        acc += rinv * ctx.hs.e0(&vals, &vals);
    }
    Ok(acc)
}

/// Renormalized pointwise graph Laplacian at a vertex of the grid's level:
/// the net conductance flux into `x` divided by the tent mass `∫ ψ_x dμ`.
/// At interior vertices this approximates `Δu(x)`.
pub fn discrete_laplacian<S: Scalar>(
    ctx: &Context<S>,
    grid: &GridFunction<S>,
    x: &VertexId,
) -> Result<S> {
    let m = grid.level;
    let ux = grid.value(x)?;
    let mut flux = S::zero();
    for side in ctx.spec.sides(x) {
        let cell = side.cell.extend_repeated(side.corner, m - side.cell.len());
        let rinv = ctx.hs.r_word(&cell).recip();
        let c = side.corner as usize;
        for b in 0..ctx.n0() {
            if b == c || ctx.hs.c[(c, b)].is_zero() {
                continue;
            }
            let y = grid.value(&ctx.spec.canonical_vertex(&cell.0, b as u8)?)?;
            flux += rinv.clone() * ctx.hs.c[(c, b)].clone() * (y - ux.clone());
        }
    }
    Ok(flux * tent_integral(ctx, x, m)?.recip())
}

/// How a level-`m` linear system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Dense exact/LU for small systems or exact scalars, CG otherwise.
    Auto,
    Dense,
    /// Jacobi-preconditioned conjugate gradients (float scalars only).
    Iterative,
}

struct LevelSystem<S> {
    verts: Vec<VertexId>,
    index: BTreeMap<VertexId, usize>,
    /// Entries of the graph Laplacian `L = D - A` at the given level.
    entries: BTreeMap<(usize, usize), S>,
}

fn level_system<S: Scalar>(ctx: &Context<S>, m: usize) -> Result<LevelSystem<S>> {
    let verts = ctx.spec.vertex_set(m);
    let index: BTreeMap<VertexId, usize> = verts
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let n0 = ctx.n0();
    let mut entries: BTreeMap<(usize, usize), S> = BTreeMap::new();
    let mut add = |i: usize, j: usize, v: S| {
        *entries.entry((i, j)).or_insert_with(S::zero) += v;
    };
    for w in ctx.spec.words(m) {
        let rinv = ctx.hs.r_word(&w).recip();
        for a in 0..n0 {
            for b in a + 1..n0 {
                if ctx.hs.c[(a, b)].is_zero() {
                    continue;
                }
                let cw = rinv.clone() * ctx.hs.c[(a, b)].clone();
                let pa = index[&ctx.spec.canonical_vertex(&w.0, a as u8)?];
                let pb = index[&ctx.spec.canonical_vertex(&w.0, b as u8)?];
                add(pa, pa, cw.clone());
                add(pb, pb, cw.clone());
                add(pa, pb, -cw.clone());
                add(pb, pa, -cw);
            }
        }
    }
    Ok(LevelSystem {
        verts,
        index,
        entries,
    })
}

/// Solve the constrained level-`m` Laplace system: prescribed values at the
/// constraint vertices, zero net flux (given the loads) everywhere else.
fn solve_constrained<S: Scalar>(
    ctx: &Context<S>,
    level: usize,
    constraints: &BTreeMap<VertexId, S>,
    loads: &BTreeMap<VertexId, S>,
    method: SolveMethod,
) -> Result<GridFunction<S>> {
    if constraints.is_empty() {
        return Err(Error::Precondition(
            "a Dirichlet solve needs at least one constrained vertex".into(),
        ));
    }
    let sys = level_system(ctx, level)?;
    for v in constraints.keys().chain(loads.keys()) {
        if !sys.index.contains_key(v) {
            return Err(Error::InvalidVertex(format!(
                "{} is not a canonical vertex of V_{}",
                v, level
            )));
        }
    }
    let free: Vec<usize> = (0..sys.verts.len())
        .filter(|&i| !constraints.contains_key(&sys.verts[i]))
        .collect();
    let free_pos: BTreeMap<usize, usize> = free.iter().cloned().zip(0..).collect();
    let nf = free.len();

    // rhs = -load - L_fc u_c on the free vertices.
    let mut rhs = vec![S::zero(); nf];
    for (v, b) in loads {
        if let Some(&p) = free_pos.get(&sys.index[v]) {
            rhs[p] -= b.clone();
        }
    }
    for (&(i, j), val) in &sys.entries {
        if let Some(&p) = free_pos.get(&i) {
            if let Some(bv) = constraints.get(&sys.verts[j]) {
                rhs[p] -= val.clone() * bv.clone();
            }
        }
    }

    let dense = match method {
        SolveMethod::Dense => true,
        SolveMethod::Iterative => {
            if S::EXACT {
                return Err(Error::RationalUnsupported(
                    "iterative solves are float-only".into(),
                ));
            }
            false
        }
        SolveMethod::Auto => S::EXACT || nf <= 512,
    };

    let solution = if dense {
        let mut lff = Mat::<S>::zeros(nf, nf);
        for (&(i, j), val) in &sys.entries {
            if let (Some(&p), Some(&q)) = (free_pos.get(&i), free_pos.get(&j)) {
                lff[(p, q)] = val.clone();
            }
        }
        lff.solve(&rhs)?
    } else {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for (&(i, j), val) in &sys.entries {
            if let (Some(&p), Some(&q)) = (free_pos.get(&i), free_pos.get(&j)) {
                triplets.push((p, q, val.to_f64()));
            }
        }
        let a = Csr::from_triplets(nf, &mut triplets);
        let b: Vec<f64> = rhs.iter().map(|x| x.to_f64()).collect();
        let (x, _, _) = conjugate_gradient(&a, &b, 1e-14, 40 * nf + 2000)?;
        x.into_iter().map(S::from_f64).collect()
    };

    let mut values = BTreeMap::new();
    for (p, &i) in free.iter().enumerate() {
        values.insert(sys.verts[i].clone(), solution[p].clone());
    }
    for (v, b) in constraints {
        values.insert(v.clone(), b.clone());
    }
    Ok(GridFunction { level, values })
}

/// Discrete harmonic extension: match the constraints, be graph-harmonic at
/// every other vertex of `V_m`.
pub fn solve_laplace<S: Scalar>(
    ctx: &Context<S>,
    level: usize,
    constraints: &BTreeMap<VertexId, S>,
    method: SolveMethod,
) -> Result<GridFunction<S>> {
    solve_constrained(ctx, level, constraints, &BTreeMap::new(), method)
}

/// Discrete Poisson solve `Δu = load` with prescribed `V_0` values, using
/// measure-exact tent loads. When the load is piecewise harmonic at a level
/// the grid resolves, the result agrees with the continuous solution at
/// every grid vertex.
pub fn solve_poisson<S: Scalar>(
    ctx: &Context<S>,
    level: usize,
    boundary: &[S],
    load: &PiecewiseHarmonic<S>,
    method: SolveMethod,
) -> Result<GridFunction<S>> {
    if boundary.len() != ctx.n0() {
        return Err(Error::InvalidSpec(format!(
            "expected {} boundary values, got {}",
            ctx.n0(),
            boundary.len()
        )));
    }
    let mut constraints = BTreeMap::new();
    for (t, b) in boundary.iter().enumerate() {
        constraints.insert(
            VertexId {
                word: Word::empty(),
                corner: t as u8,
            },
            b.clone(),
        );
    }
    let mut loads = BTreeMap::new();
    for v in ctx.spec.vertex_set(level) {
        if v.is_boundary() {
            continue;
        }
        let b = tent_load(ctx, load, &v, level)?;
        loads.insert(v, b);
    }
    solve_constrained(ctx, level, &constraints, &loads, method)
}

/// The global harmonic function with the given boundary values, sampled on
/// `V_m`.
pub fn harmonic_extend<S: Scalar>(
    ctx: &Context<S>,
    boundary: &[S],
    level: usize,
) -> GridFunction<S> {
    PiecewiseHarmonic::harmonic(boundary).to_grid(ctx, level)
}

/// Write a grid as CSV with columns `word,corner,level,value`.
pub fn write_grid_csv<S: Scalar, W: std::io::Write>(
    grid: &GridFunction<S>,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "word,corner,level,value")?;
    for (v, y) in &grid.values {
        writeln!(out, "{},{},{},{}", v.word, v.corner + 1, grid.level, y)?;
    }
    Ok(())
}

/// Read a grid written by [`write_grid_csv`].
pub fn read_grid_csv<S: Scalar, R: BufRead>(
    ctx: &Context<S>,
    input: &mut R,
) -> Result<GridFunction<S>> {
    let mut values = BTreeMap::new();
    let mut level: Option<usize> = None;
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("word,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let word = ctx.spec.parse_word(fields[0])?;
        let corner: u8 = fields[1]
            .parse::<u8>()
            .ok()
            .and_then(|c| c.checked_sub(1))
            .ok_or_else(|| Error::Parse(format!("line {}: bad corner", lineno + 1)))?;
        let lv: usize = fields[2]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad level", lineno + 1)))?;
        match level {
            None => level = Some(lv),
            Some(prev) if prev == lv => {}
            Some(prev) => {
                return Err(Error::Parse(format!(
                    "line {}: level {} conflicts with {}",
                    lineno + 1,
                    lv,
                    prev
                )))
            }
        }
        let value: S = parse_scalar(fields[3])?;
        let v = ctx.spec.canonicalize(&word, corner)?;
        values.insert(v, value);
    }
    let level = level.ok_or_else(|| Error::Parse("empty grid file".into()))?;
    Ok(GridFunction { level, values })
}
