//! Harmonic structures: level-0 conductances with renormalization weights
//! and a self-similar probability measure, the induced harmonic extension
//! matrices `M_j`, their spectral data at the boundary corners, and derived
//! invariants (basis integrals, the Gram matrix of the harmonic basis).

use crate::linalg::{durand_kerner, poly_deflate, quadratic_roots_exact, quadratic_roots_f64, Mat};
use crate::scalar::{parse_scalar, Scalar};
use crate::topology::{FractalSpec, SpecDoc, VertexId, Word};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Residual tolerance for floating-point structural identities.
pub const STRUCT_TOL: f64 = 1e-10;

/// A regular harmonic structure on a fractal with `n0` boundary corners.
#[derive(Debug, Clone)]
pub struct HarmonicStructure<S> {
    /// Symmetric level-0 conductance matrix, zero diagonal.
    pub c: Mat<S>,
    /// Renormalization weight per map, each in (0, 1).
    pub r: Vec<S>,
    /// Self-similar measure weight per map, positive, summing to one.
    pub mu: Vec<S>,
}

impl<S: Scalar> HarmonicStructure<S> {
    pub fn new(c: Mat<S>, r: Vec<S>, mu: Vec<S>) -> Result<HarmonicStructure<S>> {
        let n0 = c.rows;
        if c.cols != n0 {
            return Err(Error::InvalidSpec("conductance matrix must be square".into()));
        }
        if r.len() != mu.len() {
            return Err(Error::InvalidSpec(
                "renormalization and measure weight counts differ".into(),
            ));
        }
        for a in 0..n0 {
            if !c[(a, a)].is_zero() {
                return Err(Error::InvalidSpec("conductance diagonal must be zero".into()));
            }
            for b in 0..n0 {
                if c[(a, b)] != c[(b, a)] {
                    return Err(Error::InvalidSpec("conductances must be symmetric".into()));
                }
                if a != b && c[(a, b)].to_f64() < 0.0 {
                    return Err(Error::InvalidSpec("conductances must be nonnegative".into()));
                }
            }
        }
        // conductance graph on the boundary must be connected
        let mut seen = vec![false; n0];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..n0 {
                if !seen[b] && !c[(a, b)].is_zero() {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidSpec("conductance graph is disconnected".into()));
        }
        for x in &r {
            let v = x.to_f64();
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidSpec(format!(
                    "renormalization weight {v} outside (0, 1)"
                )));
            }
        }
        let mut total = S::zero();
        for x in &mu {
            if x.to_f64() <= 0.0 {
                return Err(Error::InvalidSpec("measure weights must be positive".into()));
            }
            total += x.clone();
        }
        if (total.to_f64() - 1.0).abs() > STRUCT_TOL {
            return Err(Error::InvalidSpec("measure weights must sum to one".into()));
        }
        Ok(HarmonicStructure { c, r, mu })
    }

    pub fn n0(&self) -> usize {
        self.c.rows
    }

    pub fn n_maps(&self) -> usize {
        self.r.len()
    }

    /// Level-0 energy form `sum c_ab (u_a - u_b)(v_a - v_b)` over `a < b`.
    pub fn e0(&self, u: &[S], v: &[S]) -> S {
        let n0 = self.n0();
        let mut acc = S::zero();
        for a in 0..n0 {
            for b in a + 1..n0 {
                if self.c[(a, b)].is_zero() {
                    continue;
                }
                let du = u[a].clone() - u[b].clone();
                let dv = v[a].clone() - v[b].clone();
                acc += self.c[(a, b)].clone() * du * dv;
            }
        }
        acc
    }

    /// Measure of the cell `F_w K`.
    pub fn mu_word(&self, w: &Word) -> S {
        let mut acc = S::one();
        for &l in &w.0 {
            acc *= self.mu[l as usize].clone();
        }
        acc
    }

    /// Resistance scale of the cell `F_w K`.
    pub fn r_word(&self, w: &Word) -> S {
        let mut acc = S::one();
        for &l in &w.0 {
            acc *= self.r[l as usize].clone();
        }
        acc
    }
}

/// Harmonic extension data on the level-1 graph.
#[derive(Debug, Clone)]
pub struct ExtensionData<S> {
    /// Canonical level-1 vertices in sorted order.
    pub v1: Vec<VertexId>,
    pub index: BTreeMap<VertexId, usize>,
    /// `|V_1| x n0` extension matrix: boundary values to level-1 values.
    pub e_matrix: Mat<S>,
    /// Per-map `n0 x n0` matrices: `(M_j b)_t = h(F_j v_t)` for the
    /// harmonic function `h` with boundary values `b`.
    pub m_mats: Vec<Mat<S>>,
}

/// Solve the level-1 interior harmonic extension problem.
pub fn extension_map<S: Scalar>(
    spec: &FractalSpec,
    hs: &HarmonicStructure<S>,
) -> Result<ExtensionData<S>> {
    let n0 = spec.n0;
    if hs.n0() != n0 || hs.n_maps() != spec.n_maps {
        return Err(Error::InvalidSpec(
            "harmonic structure dimensions do not match the fractal".into(),
        ));
    }
    let v1 = spec.vertex_set(1);
    let index: BTreeMap<VertexId, usize> =
        v1.iter().cloned().enumerate().map(|(i, v)| (v, i)).collect();
    let n = v1.len();

    // Weighted level-1 graph Laplacian.
    let mut lap = Mat::<S>::zeros(n, n);
    for j in 0..spec.n_maps {
        let rinv = hs.r[j].clone().recip();
        for a in 0..n0 {
            for b in a + 1..n0 {
                if hs.c[(a, b)].is_zero() {
                    continue;
                }
                let w = rinv.clone() * hs.c[(a, b)].clone();
                let pa = index[&spec.canonical_vertex(&[j as u8], a as u8)?];
                let pb = index[&spec.canonical_vertex(&[j as u8], b as u8)?];
                lap[(pa, pa)] += w.clone();
                lap[(pb, pb)] += w.clone();
                lap[(pa, pb)] -= w.clone();
                lap[(pb, pa)] -= w;
            }
        }
    }

    let boundary: Vec<usize> = (0..n0)
        .map(|t| index[&VertexId { word: Word::empty(), corner: t as u8 }])
        .collect();
    let interior: Vec<usize> = (0..n).filter(|i| !boundary.contains(i)).collect();

    // Solve L_II X = -L_IB for the interior values of the n0 basis functions.
    let ni = interior.len();
    let mut lii = Mat::<S>::zeros(ni, ni);
    let mut rhs = Mat::<S>::zeros(ni, n0);
    for (ii, &gi) in interior.iter().enumerate() {
        for (jj, &gj) in interior.iter().enumerate() {
            lii[(ii, jj)] = lap[(gi, gj)].clone();
        }
        for (tt, &gb) in boundary.iter().enumerate() {
            rhs[(ii, tt)] = -lap[(gi, gb)].clone();
        }
    }
    let x = if ni > 0 { lii.solve_multi(&rhs)? } else { rhs };

    let mut e_matrix = Mat::<S>::zeros(n, n0);
    for (tt, &gb) in boundary.iter().enumerate() {
        e_matrix[(gb, tt)] = S::one();
    }
    for (ii, &gi) in interior.iter().enumerate() {
        for tt in 0..n0 {
            e_matrix[(gi, tt)] = x[(ii, tt)].clone();
        }
    }

    let mut m_mats = Vec::with_capacity(spec.n_maps);
    for j in 0..spec.n_maps {
        let mut m = Mat::<S>::zeros(n0, n0);
        for t in 0..n0 {
            let row = index[&spec.canonical_vertex(&[j as u8], t as u8)?];
            for s in 0..n0 {
                m[(t, s)] = e_matrix[(row, s)].clone();
            }
        }
        m_mats.push(m);
    }

    Ok(ExtensionData { v1, index, e_matrix, m_mats })
}

/// One eigentriple of a corner extension matrix: `beta M = lambda beta`,
/// `M alpha = lambda alpha`, with `beta_k . alpha_l = delta_kl`.
#[derive(Debug, Clone)]
pub struct EigenMode<S> {
    pub lambda: S,
    pub beta: Vec<S>,
    pub alpha: Vec<S>,
}

/// Spectral data of the extension matrix at each boundary corner, modes
/// sorted by decreasing eigenvalue modulus: mode 1 has eigenvalue 1, mode 2
/// has eigenvalue `r_j`, later modes are strictly smaller in modulus.
#[derive(Debug, Clone)]
pub struct EigenSystem<S> {
    pub per_corner: Vec<Vec<EigenMode<S>>>,
}

impl<S: Scalar> EigenSystem<S> {
    /// Mode `k` (1-based) at corner `j` (0-based).
    pub fn mode(&self, j: usize, k: usize) -> &EigenMode<S> {
        &self.per_corner[j][k - 1]
    }

    pub fn lambda(&self, j: usize, k: usize) -> &S {
        &self.mode(j, k).lambda
    }
}

fn rational_cast<S: Scalar>(x: f64) -> S {
    S::from_rational(&x.to_rational())
}

/// Eigenvalues of a corner extension matrix, exploiting the two known
/// roots 1 and `r_j` of the characteristic polynomial.
fn eigenvalues_of<S: Scalar>(m: &Mat<S>, r_j: &S, label: &str) -> Result<Vec<S>> {
    let n0 = m.rows;
    let charpoly = m.charpoly();
    let scale = charpoly.iter().map(|c| c.mag()).fold(1.0, f64::max);
    let (q1, rem1) = poly_deflate(&charpoly, &S::one());
    if rem1.mag() > STRUCT_TOL * scale {
        return Err(Error::Precondition(format!(
            "{label}: 1 is not an extension eigenvalue (residual {:.2e})",
            rem1.mag()
        )));
    }
    let (q2, rem2) = poly_deflate(&q1, r_j);
    if rem2.mag() > STRUCT_TOL * scale {
        return Err(Error::Precondition(format!(
            "{label}: the renormalization weight is not an extension eigenvalue (residual {:.2e})",
            rem2.mag()
        )));
    }
    let mut rest: Vec<S> = Vec::new();
    match q2.len() {
        1 => {}
        2 => rest.push(-(q2[0].clone() / q2[1].clone())),
        3 => {
            let b = q2[1].clone() / q2[2].clone();
            let c = q2[0].clone() / q2[2].clone();
            if S::EXACT {
                let roots = quadratic_roots_exact(&b.to_rational(), &c.to_rational())?;
                rest.push(S::from_rational(&roots[0]));
                rest.push(S::from_rational(&roots[1]));
            } else {
                let roots = quadratic_roots_f64(b.to_f64(), c.to_f64())?;
                rest.push(rational_cast(roots[0]));
                rest.push(rational_cast(roots[1]));
            }
        }
        _ => {
            if S::EXACT {
                return Err(Error::RationalUnsupported(format!(
                    "{label}: exact eigenvalues are limited to quartic boundaries; use float mode"
                )));
            }
            let coeffs: Vec<f64> = q2.iter().map(|c| c.to_f64()).collect();
            let lead = *coeffs.last().unwrap();
            let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
            for (re, im) in durand_kerner(&monic) {
                if im.abs() > 1e-8 * (1.0 + re.abs()) {
                    return Err(Error::ComplexSpectrum(format!(
                        "{label}: eigenvalue {re:.6} + {im:.6}i"
                    )));
                }
                rest.push(rational_cast(re));
            }
        }
    }
    rest.sort_by(|a, b| b.mag().partial_cmp(&a.mag()).unwrap_or(std::cmp::Ordering::Equal));
    let mut eigs = vec![S::one(), r_j.clone()];
    eigs.extend(rest);
    if eigs.len() != n0 {
        return Err(Error::DegenerateStructure(format!(
            "{label}: expected {n0} eigenvalues, found {}",
            eigs.len()
        )));
    }
    Ok(eigs)
}

fn close<S: Scalar>(a: &S, b: &S) -> bool {
    if S::EXACT {
        a == b
    } else {
        (a.to_f64() - b.to_f64()).abs() < 1e-9
    }
}

fn left_residual<S: Scalar>(m: &Mat<S>, beta: &[S], lam: &S) -> f64 {
    let mv = m.transpose().mat_vec(beta);
    mv.iter()
        .zip(beta)
        .map(|(x, b)| (x.clone() - lam.clone() * b.clone()).mag())
        .fold(0.0, f64::max)
}

fn normalize_first_nonzero<S: Scalar>(mut v: Vec<S>) -> Vec<S> {
    let lead = v
        .iter()
        .find(|x| if S::EXACT { !x.is_zero() } else { x.mag() > 1e-9 })
        .cloned();
    if let Some(lead) = lead {
        let inv = lead.recip();
        for x in &mut v {
            *x *= inv.clone();
        }
    }
    v
}

/// Full spectral data at every boundary corner, with the exact second-mode
/// row vector and biorthogonal normalization.
pub fn spectral_data<S: Scalar>(
    hs: &HarmonicStructure<S>,
    ext: &ExtensionData<S>,
) -> Result<EigenSystem<S>> {
    let n0 = hs.n0();
    let mut per_corner = Vec::with_capacity(n0);
    for j in 0..n0 {
        let m = &ext.m_mats[j];
        let label = format!("corner {}", j + 1);
        let eigs = eigenvalues_of(m, &hs.r[j], &label)?;
        let scale = m.max_abs().max(1.0);
        for (k, lam) in eigs.iter().enumerate() {
            if lam.mag() < STRUCT_TOL {
                return Err(Error::DegenerateStructure(format!(
                    "{label}: extension eigenvalue {} is zero",
                    k + 1
                )));
            }
        }
        for lam in eigs.iter().skip(2) {
            if lam.mag() >= hs.r[j].to_f64() - STRUCT_TOL {
                return Err(Error::DegenerateStructure(format!(
                    "{label}: higher eigenvalue {:.6} is not below r = {:.6}",
                    lam.mag(),
                    hs.r[j].to_f64()
                )));
            }
        }

        let mut betas: Vec<Vec<S>> = Vec::with_capacity(n0);

        // mode 1: row j of M_j is the j-th unit vector
        let mut beta1 = vec![S::zero(); n0];
        beta1[j] = S::one();
        betas.push(beta1);

        // mode 2: the normal-derivative row, exact from the conductances
        let mut beta2 = vec![S::zero(); n0];
        let mut diag = S::zero();
        for l in 0..n0 {
            if l != j {
                diag += hs.c[(l, j)].clone();
                beta2[l] = -hs.c[(l, j)].clone();
            }
        }
        beta2[j] = diag;
        let resid = left_residual(m, &beta2, &hs.r[j]);
        if resid > STRUCT_TOL * scale {
            return Err(Error::Precondition(format!(
                "{label}: normal-derivative row is not a left eigenvector (residual {resid:.2e})"
            )));
        }
        betas.push(beta2);

        // higher modes: left nullspaces, grouped by eigenvalue
        let mut k = 2;
        while k < n0 {
            let lam = eigs[k].clone();
            let mut mult = 1;
            while k + mult < n0 && close(&eigs[k + mult], &lam) {
                mult += 1;
            }
            let mut shifted = m.transpose();
            for i in 0..n0 {
                shifted[(i, i)] -= lam.clone();
            }
            let mut null = shifted.nullspace(1e-9);
            if null.len() < mult {
                return Err(Error::DegenerateStructure(format!(
                    "{label}: eigenvalue {:.6} has multiplicity {mult} but only {} eigenvectors",
                    lam.to_f64(),
                    null.len()
                )));
            }
            null.truncate(mult);
            for v in null {
                betas.push(normalize_first_nonzero(v));
            }
            k += mult;
        }

        // alphas: columns of B^{-1} are right eigenvectors biorthogonal to
        // the rows of B
        let b = Mat::from_rows(betas.clone());
        let a = b.inverse().map_err(|_| {
            Error::DegenerateStructure(format!("{label}: eigenvector system is incomplete"))
        })?;
        let mut modes = Vec::with_capacity(n0);
        for (idx, beta) in betas.into_iter().enumerate() {
            modes.push(EigenMode { lambda: eigs[idx].clone(), beta, alpha: a.col(idx) });
        }
        for t in 0..n0 {
            if (modes[0].alpha[t].to_f64() - 1.0).abs() > 1e-8 {
                return Err(Error::DegenerateStructure(format!(
                    "{label}: the constant mode does not have a constant eigenvector"
                )));
            }
        }
        per_corner.push(modes);
    }
    Ok(EigenSystem { per_corner })
}

/// Status of the three equivalent symmetry conditions at a corner `j`:
/// (a) higher-mode rows vanish at `j`, (b) the second-mode column vector is
/// constant off `j`, (c) column `j` of `M_j` takes only the two values
/// `1` and `1 - lambda_2`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Prop23Status {
    pub corner: usize,
    pub rows_vanish: bool,
    pub alpha_constant: bool,
    pub column_pattern: bool,
    pub residuals: [f64; 3],
}

pub fn prop23_status<S: Scalar>(
    ext: &ExtensionData<S>,
    eig: &EigenSystem<S>,
    j: usize,
) -> Result<Prop23Status> {
    let n0 = eig.per_corner.len();
    if j >= n0 {
        return Err(Error::Precondition(format!("corner {} is not a boundary corner", j + 1)));
    }
    let scale = ext.m_mats[j].max_abs().max(1.0);
    let mut res_a: f64 = 0.0;
    for k in 3..=n0 {
        res_a = res_a.max(eig.mode(j, k).beta[j].mag());
    }
    let alpha2 = &eig.mode(j, 2).alpha;
    let mut res_b: f64 = alpha2[j].mag();
    let off: Vec<f64> = (0..n0).filter(|&l| l != j).map(|l| alpha2[l].to_f64()).collect();
    for w in off.windows(2) {
        res_b = res_b.max((w[0] - w[1]).abs());
    }
    let lam2 = eig.lambda(j, 2).to_f64();
    let mut res_c: f64 = 0.0;
    for l in 0..n0 {
        let expect = if l == j { 1.0 } else { 1.0 - lam2 };
        res_c = res_c.max((ext.m_mats[j][(l, j)].to_f64() - expect).abs());
    }
    let tol = STRUCT_TOL * scale;
    let status = Prop23Status {
        corner: j,
        rows_vanish: res_a <= tol,
        alpha_constant: res_b <= tol,
        column_pattern: res_c <= tol,
        residuals: [res_a, res_b, res_c],
    };
    let agree =
        status.rows_vanish == status.alpha_constant && status.alpha_constant == status.column_pattern;
    if !agree {
        // the three conditions are provably equivalent, so disagreement
        // means the input data is inconsistent
        return Err(Error::EquivalenceViolation(format!(
            "corner {}: residuals {:.2e} {:.2e} {:.2e}",
            j + 1,
            res_a,
            res_b,
            res_c
        )));
    }
    Ok(status)
}

/// Invariant basis integrals: the left fixed vector of `sum_j mu_j M_j`,
/// normalized to sum to one. Entry `i` is the integral of the `i`-th
/// harmonic basis function over the whole fractal.
pub fn measure_gamma<S: Scalar>(
    hs: &HarmonicStructure<S>,
    ext: &ExtensionData<S>,
) -> Result<Vec<S>> {
    let n0 = hs.n0();
    let mut a = Mat::<S>::zeros(n0, n0);
    for j in 0..hs.n_maps() {
        a = a.add(&ext.m_mats[j].scale(&hs.mu[j]));
    }
    let mut shifted = a.transpose();
    for i in 0..n0 {
        shifted[(i, i)] -= S::one();
    }
    let null = shifted.nullspace(1e-9);
    if null.len() != 1 {
        return Err(Error::NonUniqueFixedVector(format!(
            "averaging operator has a {}-dimensional fixed space",
            null.len()
        )));
    }
    let v = null.into_iter().next().unwrap();
    let mut total = S::zero();
    for x in &v {
        total += x.clone();
    }
    if total.mag() < 1e-12 {
        return Err(Error::NonUniqueFixedVector("fixed vector has zero mass".into()));
    }
    let inv = total.recip();
    let gamma: Vec<S> = v.into_iter().map(|x| x * inv.clone()).collect();
    for g in &gamma {
        if g.to_f64() <= 0.0 {
            return Err(Error::NonUniqueFixedVector(
                "fixed vector is not strictly positive".into(),
            ));
        }
    }
    Ok(gamma)
}

/// Gram matrix `P_il` of pairwise integrals of the harmonic basis: the
/// fixed point of `P -> sum_j mu_j M_j^T P M_j` with total mass one.
pub fn gram_matrix<S: Scalar>(
    hs: &HarmonicStructure<S>,
    ext: &ExtensionData<S>,
    gamma: &[S],
) -> Result<Mat<S>> {
    let n0 = hs.n0();
    let dim = n0 * n0;
    let mut sys = Mat::<S>::zeros(dim, dim);
    for i in 0..n0 {
        for l in 0..n0 {
            let row = i * n0 + l;
            sys[(row, row)] += S::one();
            for j in 0..hs.n_maps() {
                let m = &ext.m_mats[j];
                for s in 0..n0 {
                    for t in 0..n0 {
                        let col = s * n0 + t;
                        let v = hs.mu[j].clone() * m[(s, i)].clone() * m[(t, l)].clone();
                        sys[(row, col)] -= v;
                    }
                }
            }
        }
    }
    let null = sys.nullspace(1e-9);
    if null.len() != 1 {
        return Err(Error::NonUniqueFixedVector(format!(
            "Gram fixed-point system has a {}-dimensional nullspace",
            null.len()
        )));
    }
    let sol = null.into_iter().next().unwrap();
    let mut total = S::zero();
    for x in &sol {
        total += x.clone();
    }
    if total.mag() < 1e-12 {
        return Err(Error::NonUniqueFixedVector("Gram fixed vector has zero mass".into()));
    }
    let inv = total.recip();
    let mut p = Mat::<S>::zeros(n0, n0);
    for i in 0..n0 {
        for l in 0..n0 {
            p[(i, l)] = sol[i * n0 + l].clone() * inv.clone();
        }
    }
    // verify symmetry and row sums against the basis integrals
    for i in 0..n0 {
        let mut row_sum = S::zero();
        for l in 0..n0 {
            if (p[(i, l)].to_f64() - p[(l, i)].to_f64()).abs() > 1e-9 {
                return Err(Error::NonUniqueFixedVector("Gram matrix is not symmetric".into()));
            }
            row_sum += p[(i, l)].clone();
        }
        if (row_sum.to_f64() - gamma[i].to_f64()).abs() > 1e-9 {
            return Err(Error::NonUniqueFixedVector(format!(
                "Gram row sum {:.9} differs from basis integral {:.9}",
                row_sum.to_f64(),
                gamma[i].to_f64()
            )));
        }
    }
    Ok(p)
}

/// Everything derived from one fractal plus harmonic structure.
#[derive(Debug, Clone)]
pub struct Context<S> {
    pub spec: FractalSpec,
    pub hs: HarmonicStructure<S>,
    pub ext: ExtensionData<S>,
    /// Spectral data, or the degeneracy message that prevents it.
    eig: std::result::Result<EigenSystem<S>, String>,
    pub gamma: Vec<S>,
    pub gram: Mat<S>,
}

impl<S: Scalar> Context<S> {
    pub fn new(spec: FractalSpec, hs: HarmonicStructure<S>) -> Result<Context<S>> {
        let ext = extension_map(&spec, &hs)?;
        let eig = match spectral_data(&hs, &ext) {
            Ok(e) => Ok(e),
            Err(Error::DegenerateStructure(msg)) | Err(Error::ComplexSpectrum(msg)) => Err(msg),
            Err(e) => return Err(e),
        };
        let gamma = measure_gamma(&hs, &ext)?;
        let gram = gram_matrix(&hs, &ext, &gamma)?;
        Ok(Context { spec, hs, ext, eig, gamma, gram })
    }

    /// Build from a parsed document in the chosen scalar mode.
    pub fn from_doc(doc: &SpecDoc) -> Result<Context<S>> {
        let hs = structure_from_doc::<S>(doc)?;
        Context::new(doc.spec.clone(), hs)
    }

    pub fn preset(name: &str) -> Result<Context<S>> {
        Context::from_doc(&SpecDoc::preset(name)?)
    }

    /// Spectral data, or the degeneracy error that blocks derivative work.
    pub fn eig(&self) -> Result<&EigenSystem<S>> {
        self.eig.as_ref().map_err(|msg| Error::DegenerateStructure(msg.clone()))
    }

    pub fn is_degenerate(&self) -> bool {
        self.eig.is_err()
    }

    pub fn n0(&self) -> usize {
        self.spec.n0
    }

    pub fn m_mat(&self, letter: u8) -> &Mat<S> {
        &self.ext.m_mats[letter as usize]
    }

    /// Transport boundary values on a cell to a subcell: apply the
    /// extension matrices along the suffix word.
    pub fn fold_cell(&self, values: &[S], suffix: &[u8]) -> Vec<S> {
        let mut v = values.to_vec();
        for &l in suffix {
            v = self.m_mat(l).mat_vec(&v);
        }
        v
    }
}

/// Parse the harmonic structure fields of a document in scalar mode `S`.
pub fn structure_from_doc<S: Scalar>(doc: &SpecDoc) -> Result<HarmonicStructure<S>> {
    if let Some(c) = doc.bilateral_c {
        if S::EXACT {
            return Err(Error::RationalUnsupported(
                "the asymmetric gasket family has irrational weights; use float mode".into(),
            ));
        }
        let fam = bilateral_family(c)?;
        let mut hs = fam.structure;
        if !doc.mu.is_empty() {
            let mu: Result<Vec<f64>> = doc.mu.iter().map(|s| parse_scalar::<f64>(s)).collect();
            hs.mu = mu?;
        }
        let c_s = Mat {
            rows: hs.c.rows,
            cols: hs.c.cols,
            data: hs.c.data.iter().map(|x| rational_cast::<S>(*x)).collect(),
        };
        return HarmonicStructure::new(
            c_s,
            hs.r.iter().map(|x| rational_cast::<S>(*x)).collect(),
            hs.mu.iter().map(|x| rational_cast::<S>(*x)).collect(),
        );
    }
    let n0 = doc.spec.n0;
    let mut c = Mat::<S>::zeros(n0, n0);
    for (a, b, text) in &doc.conductances {
        let v: S = parse_scalar(text)?;
        c[(*a as usize, *b as usize)] = v.clone();
        c[(*b as usize, *a as usize)] = v;
    }
    let r: Result<Vec<S>> = doc.r.iter().map(|s| parse_scalar(s)).collect();
    let mu: Result<Vec<S>> = doc.mu.iter().map(|s| parse_scalar(s)).collect();
    HarmonicStructure::new(c, r?, mu?)
}

/// The asymmetric one-parameter harmonic structure on the gasket topology:
/// conductances `(1, 1, c)` on the boundary triangle, cell weights
/// `(s, 1, 1)` with `s` fixed by a quadratic renormalization identity.
#[derive(Debug, Clone)]
pub struct BilateralFamily {
    pub c: f64,
    /// Ratio `r_2 / r_1` of the symmetric weight to the distinguished one.
    pub s: f64,
    pub structure: HarmonicStructure<f64>,
}

pub fn bilateral_family(c: f64) -> Result<BilateralFamily> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::NoPositiveRoot(format!(
            "asymmetry parameter c = {c} must be positive"
        )));
    }
    // s solves (3c^2 + 2c) s^2 - 2c^2 s - (2c + 1) = 0; the root product is
    // negative, so exactly one root is positive.
    let a2 = 3.0 * c * c + 2.0 * c;
    let a1 = -2.0 * c * c;
    let a0 = -(2.0 * c + 1.0);
    let disc = a1 * a1 - 4.0 * a2 * a0;
    let s = (-a1 + disc.sqrt()) / (2.0 * a2);
    if !(s > 0.0) {
        return Err(Error::NoPositiveRoot(format!("no positive weight ratio for c = {c}")));
    }

    // Level-1 gasket graph with cell weights (s, 1, 1): its trace on the
    // boundary must be proportional to the level-0 conductances, and the
    // common ratio is r_2. Vertices 0, 1, 2 are the boundary; 3 = F1v2,
    // 4 = F1v3, 5 = F2v3.
    let base = [(0usize, 1usize, 1.0), (0, 2, 1.0), (1, 2, c)];
    let cells: [(f64, [usize; 3]); 3] = [(s, [0, 3, 4]), (1.0, [3, 1, 5]), (1.0, [4, 5, 2])];
    let mut lap = Mat::<f64>::zeros(6, 6);
    for (w, verts) in cells {
        for &(a, b, cab) in &base {
            let (pa, pb) = (verts[a], verts[b]);
            let g = w * cab;
            lap[(pa, pa)] += g;
            lap[(pb, pb)] += g;
            lap[(pa, pb)] -= g;
            lap[(pb, pa)] -= g;
        }
    }
    let mut lii = Mat::<f64>::zeros(3, 3);
    let mut lib = Mat::<f64>::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            lii[(i, j)] = lap[(3 + i, 3 + j)];
            lib[(i, j)] = lap[(3 + i, j)];
        }
    }
    let x = lii.solve_multi(&lib)?;
    // Schur complement onto the boundary
    let mut schur = Mat::<f64>::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = lap[(i, j)];
            for k in 0..3 {
                acc -= lap[(i, 3 + k)] * x[(k, j)];
            }
            schur[(i, j)] = acc;
        }
    }
    let traced = [-schur[(0, 1)], -schur[(0, 2)], -schur[(1, 2)]];
    let mut r2 = 0.0;
    let mut ratio_min = f64::INFINITY;
    let mut ratio_max: f64 = 0.0;
    for ((_, _, c0), c1) in base.iter().zip(&traced) {
        let ratio = c1 / c0;
        ratio_min = ratio_min.min(ratio);
        ratio_max = ratio_max.max(ratio);
        r2 += ratio / 3.0;
    }
    if (ratio_max - ratio_min).abs() > 1e-9 * ratio_max.abs() {
        return Err(Error::ProportionalityFailure(format!(
            "traced conductance ratios spread over [{ratio_min:.9}, {ratio_max:.9}] for c = {c}"
        )));
    }
    let r1 = r2 / s;
    let cmat = Mat::from_rows(vec![
        vec![0.0, 1.0, 1.0],
        vec![1.0, 0.0, c],
        vec![1.0, c, 0.0],
    ]);
    let structure = HarmonicStructure::new(cmat, vec![r1, r2, r2], vec![1.0 / 3.0; 3])?;
    Ok(BilateralFamily { c, s, structure })
}

/// One named validation check with its worst residual.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub note: String,
}

fn check(name: &str, residual: f64, tol: f64, note: &str) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: residual.is_finite() && residual <= tol,
        residual,
        note: note.to_string(),
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ValidationReport {
    pub fractal: String,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Validate a fractal plus structure pair: renormalization fixed point,
/// extension matrix structure, spectral regularity, invariant vectors.
pub fn validate<S: Scalar>(ctx: &Context<S>) -> ValidationReport {
    let mut checks = Vec::new();
    let n0 = ctx.n0();
    let n_maps = ctx.hs.n_maps();

    // Renormalized level-1 energy of harmonically extended boundary data
    // must reproduce the level-0 energy.
    let mut res: f64 = 0.0;
    for sidx in 0..n0 {
        for tidx in 0..n0 {
            let es: Vec<S> =
                (0..n0).map(|i| if i == sidx { S::one() } else { S::zero() }).collect();
            let et: Vec<S> =
                (0..n0).map(|i| if i == tidx { S::one() } else { S::zero() }).collect();
            let mut e1 = S::zero();
            for j in 0..n_maps {
                let hs_j = ctx.m_mat(j as u8).mat_vec(&es);
                let ht_j = ctx.m_mat(j as u8).mat_vec(&et);
                e1 += ctx.hs.r[j].clone().recip() * ctx.hs.e0(&hs_j, &ht_j);
            }
            res = res.max((e1.to_f64() - ctx.hs.e0(&es, &et).to_f64()).abs());
        }
    }
    checks.push(check(
        "renormalization-fixed-point",
        res,
        1e-9,
        "level-1 energy of harmonic extensions reproduces level-0 energy",
    ));

    // Extension matrices preserve constants; corner rows are unit vectors.
    let mut res: f64 = 0.0;
    for j in 0..n_maps {
        let m = ctx.m_mat(j as u8);
        for t in 0..n0 {
            let row_sum: f64 = (0..n0).map(|sx| m[(t, sx)].to_f64()).sum();
            res = res.max((row_sum - 1.0).abs());
        }
        if j < n0 {
            for sx in 0..n0 {
                let expect = if sx == j { 1.0 } else { 0.0 };
                res = res.max((m[(j, sx)].to_f64() - expect).abs());
            }
        }
    }
    checks.push(check(
        "extension-row-structure",
        res,
        1e-9,
        "row sums are one and fixed corners are preserved",
    ));

    match ctx.eig() {
        Ok(eig) => {
            let mut bio: f64 = 0.0;
            let mut eres: f64 = 0.0;
            for j in 0..n0 {
                let m = ctx.m_mat(j as u8);
                for k in 1..=n0 {
                    let mode = eig.mode(j, k);
                    eres = eres.max(left_residual(m, &mode.beta, &mode.lambda));
                    for l in 1..=n0 {
                        let d = crate::linalg::dot(&mode.beta, &eig.mode(j, l).alpha).to_f64();
                        let expect = if k == l { 1.0 } else { 0.0 };
                        bio = bio.max((d - expect).abs());
                    }
                }
            }
            checks.push(check("eigen-residuals", eres, 1e-8, "rows are left eigenvectors"));
            checks.push(check(
                "biorthogonality",
                bio,
                1e-8,
                "row and column modes pair to the identity",
            ));
            let mut ordered = true;
            for j in 0..n0 {
                if (eig.lambda(j, 2).to_f64() - ctx.hs.r[j].to_f64()).abs() > 1e-9 {
                    ordered = false;
                }
                for k in 3..=n0 {
                    if eig.lambda(j, k).mag() >= eig.lambda(j, 2).to_f64() {
                        ordered = false;
                    }
                }
            }
            checks.push(check(
                "spectral-ordering",
                if ordered { 0.0 } else { 1.0 },
                0.5,
                "1 > r > higher mode moduli",
            ));
        }
        Err(e) => {
            checks.push(CheckResult {
                name: "spectral-data".into(),
                passed: false,
                residual: f64::NAN,
                note: format!("{e}"),
            });
        }
    }

    // gamma is the invariant mass vector of the measure-weighted average
    let mut a = Mat::<S>::zeros(n0, n0);
    for j in 0..n_maps {
        a = a.add(&ctx.ext.m_mats[j].scale(&ctx.hs.mu[j]));
    }
    let g = a.transpose().mat_vec(&ctx.gamma);
    let res = g
        .iter()
        .zip(&ctx.gamma)
        .map(|(x, y)| (x.to_f64() - y.to_f64()).abs())
        .fold(0.0, f64::max);
    checks.push(check("invariant-weights", res, 1e-9, "basis integrals are invariant"));

    // Gram fixed point and row sums
    let mut t_p = Mat::<S>::zeros(n0, n0);
    for j in 0..n_maps {
        let m = &ctx.ext.m_mats[j];
        t_p = t_p.add(&m.transpose().mat_mul(&ctx.gram).mat_mul(m).scale(&ctx.hs.mu[j]));
    }
    checks.push(check(
        "gram-fixed-point",
        t_p.sub(&ctx.gram).max_abs(),
        1e-9,
        "Gram matrix solves the self-similarity identity",
    ));
    let mut res: f64 = 0.0;
    for i in 0..n0 {
        let mut sum = S::zero();
        for l in 0..n0 {
            sum += ctx.gram[(i, l)].clone();
        }
        res = res.max((sum.to_f64() - ctx.gamma[i].to_f64()).abs());
    }
    checks.push(check("gram-row-sums", res, 1e-9, "Gram rows sum to the basis integrals"));

    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { fractal: ctx.spec.name.clone(), checks, passed }
}
