use std::f64::consts::TAU;
use std::sync::Arc;

use proptest::prelude::*;

use locpert_core::calculus::integrate;
use locpert_core::diffeo::{Convention, DiffeoIncrement};
use locpert_core::field::{Grid, ScalarField};
use locpert_core::io::{read_field, write_field};
use locpert_core::noise::{
    build_fourier_basis, ito_drift_correction, BrownianIncrements, BrownianPath, Drift, ModeSpec, NoiseBasis,
    NoiseStream, Polarization,
};
use locpert_core::perturb::{perturb_0form, perturb_nform, NFormMode};

const N: usize = 16;

fn grid() -> Grid {
    Grid::periodic_box(2, N).unwrap()
}

fn mode() -> impl Strategy<Value = ModeSpec> {
    (-2i32..=2, -2i32..=2, -0.3f64..0.3, -0.3f64..0.3, any::<bool>()).prop_map(|(k1, k2, a1, a2, sol)| {
        let pol = if sol {
            Polarization::Solenoidal
        } else {
            Polarization::Free
        };
        ModeSpec::new(&[k1 as f64, k2 as f64], &[a1, a2], pol)
    })
}

fn basis(specs: &[ModeSpec]) -> NoiseBasis {
    build_fourier_basis(&grid(), specs).unwrap()
}

/// Trigonometric polynomial with the given coefficients on wavenumbers 0..3.
fn field(coef: &[f64]) -> ScalarField {
    ScalarField::from_fn(&grid(), |x| {
        coef.iter()
            .enumerate()
            .map(|(j, c)| {
                let (k1, k2) = ((j % 3) as f64, (j / 3) as f64);
                c * (k1 * x[0] + k2 * x[1] + 0.3 * j as f64).sin()
            })
            .sum::<f64>()
    })
}

fn increment(b: NoiseBasis, eta: Vec<f64>, convention: Convention) -> DiffeoIncrement {
    let m = b.len();
    let eta: Vec<f64> = eta.into_iter().take(m).collect();
    DiffeoIncrement::with_safety(
        Arc::new(b),
        BrownianIncrements::fixed(1e-3, eta).unwrap(),
        convention,
        f64::INFINITY,
    )
    .unwrap()
}

fn close(a: &ScalarField, b: &ScalarField, tol: f64) -> bool {
    let scale = a.max_abs().max(b.max_abs()).max(1.0);
    (a - b).max_abs() <= tol * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_form_perturbation_is_linear(
        specs in prop::collection::vec(mode(), 1..4),
        f in prop::collection::vec(-1.0f64..1.0, 9),
        g in prop::collection::vec(-1.0f64..1.0, 9),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        eta in prop::collection::vec(-0.05f64..0.05, 4),
    ) {
        let d = increment(basis(&specs).with_drift(Drift::Lu).unwrap(), eta, Convention::Lu);
        let (f, g) = (field(&f), field(&g));
        let mut comb = f.scaled(a);
        comb.axpy(b, &g);
        let lhs = perturb_0form(&comb, &d).unwrap().realized;
        let mut rhs = perturb_0form(&f, &d).unwrap().realized.scaled(a);
        rhs.axpy(b, &perturb_0form(&g, &d).unwrap().realized);
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn constants_have_no_zero_form_increment(
        specs in prop::collection::vec(mode(), 1..4),
        c in -5.0f64..5.0,
        eta in prop::collection::vec(-0.05f64..0.05, 4),
    ) {
        let d = increment(basis(&specs).with_drift(Drift::Salt).unwrap(), eta, Convention::Salt);
        let r = perturb_0form(&ScalarField::constant(&grid(), c), &d).unwrap();
        prop_assert_eq!(r.realized.max_abs(), 0.0);
    }

    #[test]
    fn ito_correction_scales_quadratically(
        specs in prop::collection::vec(mode(), 1..4),
        lambda in -3.0f64..3.0,
    ) {
        let b = basis(&specs);
        let scaled = ito_drift_correction(&b.scaled(lambda).unwrap(), 1.0);
        let expected = ito_drift_correction(&b, 1.0).scaled(lambda * lambda);
        let gap = (&scaled - &expected).max_abs();
        prop_assert!(gap <= 1e-12 * expected.max_abs().max(1.0), "gap {}", gap);
    }

    #[test]
    fn salt_drift_is_half_the_lu_drift(specs in prop::collection::vec(mode(), 1..4)) {
        let lu = basis(&specs).with_drift(Drift::Lu).unwrap();
        let salt = basis(&specs).with_drift(Drift::Salt).unwrap();
        prop_assert_eq!(salt.drift(), &lu.drift().scaled(0.5));
    }

    #[test]
    fn flux_form_conserves_the_integral(
        specs in prop::collection::vec(mode(), 1..4),
        f in prop::collection::vec(-0.3f64..0.3, 9),
        eta in prop::collection::vec(-0.05f64..0.05, 4),
    ) {
        let d = increment(basis(&specs).with_drift(Drift::Lu).unwrap(), eta, Convention::Lu);
        let mut f = field(&f);
        f.axpy(1.0, &ScalarField::constant(&grid(), 1.0));
        let r = perturb_nform(&f, &d, NFormMode::Flux).unwrap().realized;
        prop_assert!(integrate(&r).abs() <= 1e-13 * integrate(&f.map(f64::abs)));
    }

    #[test]
    fn solenoidal_modes_are_divergence_free(specs in prop::collection::vec(mode(), 1..4)) {
        let specs: Vec<ModeSpec> = specs
            .into_iter()
            .map(|s| ModeSpec { polarization: Polarization::Solenoidal, ..s })
            .collect();
        prop_assert!(basis(&specs).divergence_free());
    }

    #[test]
    fn coarse_increments_are_sums_of_fine_ones(seed in any::<u64>(), factor in 1usize..5, blocks in 1usize..4) {
        let mut rng = NoiseStream::new(seed, 0);
        let fine = BrownianPath::sample(2, 1e-3, factor * blocks, &mut rng).unwrap();
        let coarse = fine.coarsen(factor);
        prop_assert_eq!(coarse.len(), blocks);
        for b in 0..blocks {
            for i in 0..2 {
                let sum: f64 = (0..factor).map(|s| fine.increments(b * factor + s).eta[i]).sum();
                prop_assert_eq!(coarse.increments(b).eta[i], sum);
            }
        }
    }

    #[test]
    fn snapshots_round_trip_bit_exactly(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 12),
        lx in 0.5f64..10.0,
    ) {
        let g = Grid::new(&[3, 4], &[lx, TAU]).unwrap();
        let f = ScalarField::from_values(&g, values).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back, f);
    }
}

#[test]
fn empty_basis_leaves_zero_forms_unchanged() {
    let d = increment(NoiseBasis::empty(&grid()), vec![], Convention::Raw);
    let f = field(&[0.3, -0.2, 0.1, 0.5, 0.0, 0.7, -0.4, 0.2, 0.1]);
    assert_eq!(perturb_0form(&f, &d).unwrap().realized.max_abs(), 0.0);
}
