//! Randomized invariants. Exact statements run on rationals so equality
//! is literal; no tolerance tuning hides a broken identity.

use std::collections::BTreeSet;

use fractal_calc::calculus::{
    harmonic_extend, read_grid_csv, solve_poisson, write_grid_csv, PiecewiseHarmonic,
    SolveMethod,
};
use fractal_calc::derivatives::exact_harmonic_derivative;
use fractal_calc::structure::Context;
use fractal_calc::topology::{Side, SpecDoc, VertexId, Word};
use fractal_calc::scalar::parse_scalar;
use fractal_calc::{Rational, Scalar};
use proptest::prelude::*;

const PRESETS: [&str; 5] = ["sg", "sg3", "hexagasket", "vicsek", "bilateral-sg"];
const RATIONAL_PRESETS: [&str; 3] = ["sg", "sg3", "vicsek"];

fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

fn ratios() -> impl Strategy<Value = Rational> {
    (-9i64..=9, 1i64..=9).prop_map(|(n, d)| Rational::from_ratio(n, d))
}

fn boundary(n0: usize) -> impl Strategy<Value = Vec<Rational>> {
    proptest::collection::vec(ratios(), n0)
}

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg(256))]

    #[test]
    fn canonical_form_is_a_fixed_point_of_every_side(
        preset in 0usize..PRESETS.len(),
        raw in proptest::collection::vec(0u8..8, 0..=5),
        corner in 0u8..8,
    ) {
        let spec = SpecDoc::preset(PRESETS[preset]).unwrap().spec;
        let letters: Vec<u8> = raw.iter().map(|l| l % spec.n_maps as u8).collect();
        let v = spec.canonical_vertex(&letters, corner % spec.n0 as u8).unwrap();
        prop_assert_eq!(spec.canonical_vertex(&v.word.0, v.corner).unwrap(), v.clone());
        for side in spec.sides(&v) {
            prop_assert_eq!(spec.canonical_vertex(&side.cell.0, side.corner).unwrap(), v.clone());
        }
    }

    #[test]
    fn addresses_round_trip_through_display(
        preset in 0usize..PRESETS.len(),
        raw in proptest::collection::vec(0u8..8, 0..=5),
        corner in 0u8..8,
    ) {
        let spec = SpecDoc::preset(PRESETS[preset]).unwrap().spec;
        let letters: Vec<u8> = raw.iter().map(|l| l % spec.n_maps as u8).collect();
        let v = spec.canonical_vertex(&letters, corner % spec.n0 as u8).unwrap();
        prop_assert_eq!(spec.parse_vertex(&v.to_string()).unwrap(), v);
    }

    #[test]
    fn rational_literals_round_trip(n in -999i64..=999, d in 1i64..=999) {
        let x = q(n, d);
        prop_assert_eq!(parse_scalar::<Rational>(&x.to_string()).unwrap(), x);
    }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn vertex_sets_enumerate_the_canonical_orbits(
        preset in 0usize..PRESETS.len(),
        m in 0usize..=3,
    ) {
        let spec = SpecDoc::preset(PRESETS[preset]).unwrap().spec;
        let listed: BTreeSet<VertexId> = spec.vertex_set(m).into_iter().collect();
        let mut rebuilt = BTreeSet::new();
        for w in spec.words(m) {
            for corner in 0..spec.n0 as u8 {
                rebuilt.insert(spec.canonical_vertex(&w.0, corner).unwrap());
            }
        }
        prop_assert_eq!(listed.len(), spec.vertex_set(m).len());
        prop_assert_eq!(listed, rebuilt);
    }
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn harmonic_extension_obeys_the_maximum_principle(
        preset in 0usize..RATIONAL_PRESETS.len(),
        vals in boundary(6),
        level in 1usize..=2,
    ) {
        let ctx = Context::<Rational>::preset(RATIONAL_PRESETS[preset]).unwrap();
        let a = &vals[..ctx.n0()];
        let lo = a.iter().min().unwrap().clone();
        let hi = a.iter().max().unwrap().clone();
        let grid = harmonic_extend(&ctx, a, level);
        let h = PiecewiseHarmonic::harmonic(a);
        for v in ctx.spec.vertex_set(level) {
            let x = grid.value(&v).unwrap();
            prop_assert!(lo <= x && x <= hi);
            prop_assert_eq!(h.value(&ctx, &v), x);
        }
    }

    #[test]
    fn refinement_preserves_energy(
        preset in 0usize..RATIONAL_PRESETS.len(),
        vals in boundary(6),
    ) {
        let ctx = Context::<Rational>::preset(RATIONAL_PRESETS[preset]).unwrap();
        let n0 = ctx.n0();
        let a = &vals[..n0];
        let energy = |values: &dyn Fn(u8) -> Rational| {
            let mut e = Rational::zero();
            for i in 0..n0 {
                for j in i + 1..n0 {
                    let d = values(i as u8) - values(j as u8);
                    e += ctx.hs.c[(i, j)].clone() * d.clone() * d;
                }
            }
            e
        };
        let top = energy(&|i| a[i as usize].clone());
        let grid = harmonic_extend(&ctx, a, 1);
        let mut refined = Rational::zero();
        for w in 0..ctx.spec.n_maps {
            let at = |i: u8| {
                grid.value(&ctx.spec.canonical_vertex(&[w as u8], i).unwrap()).unwrap()
            };
            refined += ctx.hs.r[w].recip() * energy(&at);
        }
        prop_assert_eq!(refined, top);
    }

    #[test]
    fn poisson_solves_are_linear_with_harmonic_kernel(
        a in boundary(3),
        b in boundary(3),
        scale in ratios(),
    ) {
        let ctx = Context::<Rational>::preset("sg").unwrap();
        let zero = [Rational::zero(), Rational::zero(), Rational::zero()];
        let mixed: Vec<Rational> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| scale.clone() * x.clone() + y.clone())
            .collect();
        let solve = |vals: &[Rational]| {
            let load = PiecewiseHarmonic::harmonic(vals);
            solve_poisson(&ctx, 2, &zero, &load, SolveMethod::Auto).unwrap()
        };
        let (ua, ub, um) = (solve(&a), solve(&b), solve(&mixed));
        for v in ctx.spec.vertex_set(2) {
            let want = scale.clone() * ua.value(&v).unwrap() + ub.value(&v).unwrap();
            prop_assert_eq!(um.value(&v).unwrap(), want);
        }
        let hom = solve_poisson(
            &ctx,
            2,
            &a,
            &PiecewiseHarmonic::constant(&ctx, &Rational::zero()),
            SolveMethod::Auto,
        )
        .unwrap();
        let ext = harmonic_extend(&ctx, &a, 2);
        for v in ctx.spec.vertex_set(2) {
            prop_assert_eq!(hom.value(&v).unwrap(), ext.value(&v).unwrap());
        }
    }

    #[test]
    fn exact_derivatives_are_linear_in_the_data(
        a in boundary(3),
        b in boundary(3),
        scale in ratios(),
        raw in proptest::collection::vec(0u8..3, 0..=2),
        corner in 0u8..3,
        k in 2usize..=3,
    ) {
        let ctx = Context::<Rational>::preset("sg").unwrap();
        let side = Side {
            cell: Word(raw),
            corner,
        };
        let mixed: Vec<Rational> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| scale.clone() * x.clone() + y.clone())
            .collect();
        let d = |vals: &[Rational]| {
            exact_harmonic_derivative(&ctx, &PiecewiseHarmonic::harmonic(vals), &side, k).unwrap()
        };
        prop_assert_eq!(d(&mixed), scale * d(&a) + d(&b));
    }

    #[test]
    fn grid_csv_round_trips_exactly(
        preset in 0usize..RATIONAL_PRESETS.len(),
        vals in boundary(6),
        level in 0usize..=2,
    ) {
        let ctx = Context::<Rational>::preset(RATIONAL_PRESETS[preset]).unwrap();
        let grid = harmonic_extend(&ctx, &vals[..ctx.n0()], level);
        let mut bytes = Vec::new();
        write_grid_csv(&grid, &mut bytes).unwrap();
        let back = read_grid_csv(&ctx, &mut &bytes[..]).unwrap();
        for v in ctx.spec.vertex_set(level) {
            prop_assert_eq!(back.value(&v).unwrap(), grid.value(&v).unwrap());
        }
        let mut again = Vec::new();
        write_grid_csv(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

#[test]
fn gasket_vertex_counts_follow_the_closed_form() {
    let spec = SpecDoc::preset("sg").unwrap().spec;
    for m in 0..=5usize {
        let want = 3 * (3usize.pow(m as u32) + 1) / 2;
        assert_eq!(spec.vertex_set(m).len(), want);
    }
}
