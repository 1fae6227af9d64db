//! The `--fn` mini-language: boundary data, eigenmode functions, and
//! constant Poisson loads.

use fractal_calc::calculus::green::{self, Level1};
use fractal_calc::calculus::PiecewiseHarmonic;
use fractal_calc::derivatives::VertexFn;
use fractal_calc::scalar::parse_scalar;
use fractal_calc::structure::Context;
use fractal_calc::topology::VertexId;
use fractal_calc::{Result as CoreResult, Scalar};

/// A parsed `--fn` argument.
pub enum FnSpec<S> {
    Zero,
    /// Boundary values, one per corner.
    Harmonic(Vec<S>),
    /// Eigenmode function h_jk: corner `j`, mode `k`, both 1-based.
    Mode { j: usize, k: usize },
    /// Constant load for the Poisson problem.
    Poisson(S),
}

pub fn parse_fn<S: Scalar>(text: &str, n0: usize) -> Result<FnSpec<S>, String> {
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) => (h, Some(r)),
        None => (text, None),
    };
    match head {
        "zero" => match rest {
            None | Some("") => Ok(FnSpec::Zero),
            Some(r) => Err(format!("zero takes no arguments, got {r:?}")),
        },
        "harmonic" => {
            let body = rest.ok_or("harmonic needs boundary values: harmonic:a,b,...")?;
            let vals = body
                .split(',')
                .map(|t| parse_scalar::<S>(t.trim()).map_err(|e| e.to_string()))
                .collect::<Result<Vec<S>, String>>()?;
            if vals.len() != n0 {
                return Err(format!(
                    "harmonic expects {} boundary values, got {}",
                    n0,
                    vals.len()
                ));
            }
            Ok(FnSpec::Harmonic(vals))
        }
        "hjk" => {
            let body = rest.ok_or("hjk needs indices: hjk:j,k")?;
            let (j, k) = body
                .split_once(',')
                .ok_or("hjk needs two indices: hjk:j,k")?;
            let j: usize = j.trim().parse().map_err(|_| format!("bad corner index {j:?}"))?;
            let k: usize = k.trim().parse().map_err(|_| format!("bad mode index {k:?}"))?;
            if j < 1 || j > n0 {
                return Err(format!("corner j must lie in 1..={n0}, got {j}"));
            }
            if k < 1 || k > n0 {
                return Err(format!("mode k must lie in 1..={n0}, got {k}"));
            }
            Ok(FnSpec::Mode { j, k })
        }
        "poisson" => {
            let body = rest.ok_or("poisson needs a load: poisson:const=<value>")?;
            let val = body
                .strip_prefix("const=")
                .ok_or("poisson:const=<value> is the only supported load form")?;
            let c = parse_scalar::<S>(val.trim()).map_err(|e| e.to_string())?;
            Ok(FnSpec::Poisson(c))
        }
        other => Err(format!(
            "unknown function {other:?}; expected zero, harmonic:a,b,..., hjk:j,k, or poisson:const=c"
        )),
    }
}

impl<S: Scalar> FnSpec<S> {
    pub fn is_load(&self) -> bool {
        matches!(self, FnSpec::Poisson(_))
    }

    /// Boundary values of the harmonic-class functions; `None` for loads.
    pub fn boundary(&self, ctx: &Context<S>) -> CoreResult<Option<Vec<S>>> {
        match self {
            FnSpec::Zero => Ok(Some(vec![S::zero(); ctx.n0()])),
            FnSpec::Harmonic(vals) => Ok(Some(vals.clone())),
            FnSpec::Mode { j, k } => Ok(Some(ctx.eig()?.mode(j - 1, *k).alpha.clone())),
            FnSpec::Poisson(_) => Ok(None),
        }
    }

    /// Pointwise evaluator: harmonic functions directly, Poisson loads
    /// through the Green series with zero boundary data.
    pub fn sampler(&self, ctx: &Context<S>) -> CoreResult<Sampler<S>> {
        match self {
            FnSpec::Poisson(c) => Ok(Sampler::Green {
                l1: green::level1(ctx)?,
                load: PiecewiseHarmonic::constant(ctx, c),
            }),
            other => {
                let b = other.boundary(ctx)?.expect("harmonic class has boundary data");
                Ok(Sampler::Pw(PiecewiseHarmonic::harmonic(&b)))
            }
        }
    }
}

pub enum Sampler<S> {
    Pw(PiecewiseHarmonic<S>),
    Green { l1: Level1<S>, load: PiecewiseHarmonic<S> },
}

impl<S: Scalar> VertexFn<S> for Sampler<S> {
    fn sample(&self, ctx: &Context<S>, v: &VertexId) -> CoreResult<S> {
        match self {
            Sampler::Pw(h) => Ok(h.value(ctx, v)),
            Sampler::Green { l1, load } => {
                Ok(-green::green_integral_at(ctx, l1, load, v)?)
            }
        }
    }
}
