use micropump_core::materials::{
    default_stack, effective_e31, isotropic_equivalents, laminate_reduce, laminate_reduce_from, ElasticTensor, Layer,
    PiezoTensor,
};
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Classical lamination theory evaluated from scratch.
fn clt(stack: &[(f64, f64, f64, f64)]) -> (f64, f64, f64) {
    // (thickness, E, nu, density)
    let mut z = 0.0;
    let (mut num, mut den, mut mass) = (0.0, 0.0, 0.0);
    let mut bounds = Vec::new();
    for &(t, e, nu, rho) in stack {
        let ep = e / (1.0 - nu * nu);
        num += ep * t * (z + 0.5 * t);
        den += ep * t;
        mass += rho * t;
        bounds.push((z, z + t, ep));
        z += t;
    }
    let zbar = num / den;
    let d = bounds
        .iter()
        .map(|&(lo, hi, ep)| ep * ((hi - zbar).powi(3) - (lo - zbar).powi(3)) / 3.0)
        .sum();
    (zbar, d, mass)
}

#[test]
fn isotropic_equivalents_from_closed_form() {
    let glass = Layer::default_glass();
    let (e, nu) = isotropic_equivalents(&glass.elastic).unwrap();
    let (c11, c12) = (1.65e11, 0.63e11);
    assert!(rel(e, (c11 - c12) * (c11 + 2.0 * c12) / (c11 + c12)) < 1e-12);
    assert!(rel(nu, c12 / (c11 + c12)) < 1e-12);
    assert!(rel(e, 1.3018e11) < 1e-4);
    assert!(rel(nu, 0.27632) < 1e-4);

    let (e, nu) = isotropic_equivalents(&Layer::default_pzt().elastic).unwrap();
    assert!(rel(e, 6.3106e10) < 1e-4);
    assert!(rel(nu, 0.38391) < 1e-4);
}

#[test]
fn condensed_e31_examples() {
    let pzt = Layer::default_pzt();
    let e = effective_e31(&pzt).unwrap();
    assert!(rel(e, -5.4 - 15.8 * 7.52e10 / 1.11e11) < 1e-12);
    assert!(rel(e, -16.105) < 1e-4);

    let mut table = *pzt.piezo.as_ref().unwrap().as_array();
    table[2][2] = 0.0;
    let mut layer = pzt.clone();
    layer.piezo = Some(PiezoTensor::new(table).unwrap());
    assert_eq!(effective_e31(&layer).unwrap(), -5.4);
    table[2][0] = 0.0;
    table[2][1] = 0.0;
    layer.piezo = Some(PiezoTensor::new(table).unwrap());
    assert_eq!(effective_e31(&layer).unwrap(), 0.0);
}

#[test]
fn unimorph_matches_independent_lamination() {
    let stack = default_stack();
    let c = laminate_reduce(&stack, 1).unwrap();
    let props: Vec<_> = stack
        .iter()
        .map(|l| {
            let (e, nu) = isotropic_equivalents(&l.elastic).unwrap();
            (l.thickness, e, nu, l.density)
        })
        .collect();
    let (zbar, d, mass) = clt(&props);
    assert!(rel(c.neutral_axis_z, zbar) < 1e-12);
    assert!(rel(c.bending_stiffness, d) < 1e-12);
    assert!(rel(c.areal_mass, mass) < 1e-12);
    // uniform field V/t in the drive layer, moment arm to its mid-plane
    let mid = stack[0].thickness + 0.5 * stack[1].thickness;
    let moment = effective_e31(&stack[1]).unwrap() * (mid - zbar);
    assert!(rel(c.piezo_moment_per_volt, moment) < 1e-12);

    assert!(rel(c.neutral_axis_z, 310.8e-6) < 1e-3);
    assert!(rel(c.bending_stiffness, 3.02) < 5e-3);
    assert!(rel(c.areal_mass, 1.631) < 1e-9);
    assert!(rel(c.piezo_moment_per_volt, -4.66e-3) < 5e-3);
}

fn glass_alone() -> (f64, f64, f64) {
    let g = Layer::default_glass();
    let (e, nu) = isotropic_equivalents(&g.elastic).unwrap();
    clt(&[(g.thickness, e, nu, g.density)])
}

#[test]
fn single_glass_layer_constants() {
    let (zbar, d, mass) = glass_alone();
    let (e, nu) = (1.3018e11, 0.27632);
    assert!(rel(d, e * 500e-6f64.powi(3) / (12.0 * (1.0 - nu * nu))) < 1e-4);
    let mut g = Layer::default_glass();
    g.piezo = Layer::default_pzt().piezo;
    let c = laminate_reduce(&[g], 0).unwrap();
    assert!(rel(c.neutral_axis_z, zbar) < 1e-12);
    assert!(rel(c.bending_stiffness, d) < 1e-12);
    assert!(rel(c.areal_mass, mass) < 1e-12);
    assert!(rel(c.bending_stiffness, 1.468) < 1e-3);
    assert!(rel(c.areal_mass, 1.165) < 1e-9);
}

#[test]
fn thin_drive_layer_limit() {
    let (_, glass_d, _) = glass_alone();
    let mut last = f64::INFINITY;
    for t in [20e-6, 2e-6, 2e-7, 2e-8] {
        let mut stack = default_stack();
        stack[1].thickness = t;
        let c = laminate_reduce(&stack, 1).unwrap();
        let gap = rel(c.bending_stiffness, glass_d);
        assert!(gap < last);
        last = gap;
    }
    // the gap closes linearly in the drive layer thickness
    assert!(last < 1e-4, "{last}");
}

fn scaled_stack(tg: f64, tp: f64) -> Vec<Layer> {
    let mut s = default_stack();
    s[0].thickness = tg;
    s[1].thickness = tp;
    s
}

proptest! {
    #[test]
    fn shifting_the_origin_moves_only_the_neutral_axis(
        tg in 50e-6..1e-3f64,
        tp in 10e-6..500e-6f64,
        z0 in -1e-2..1e-2f64,
    ) {
        let s = scaled_stack(tg, tp);
        let a = laminate_reduce(&s, 1).unwrap();
        let b = laminate_reduce_from(&s, 1, z0).unwrap();
        prop_assert!((b.neutral_axis_z - a.neutral_axis_z - z0).abs() < 1e-12);
        prop_assert!(rel(b.bending_stiffness, a.bending_stiffness) < 1e-9);
        prop_assert_eq!(b.areal_mass, a.areal_mass);
        prop_assert!(rel(b.piezo_moment_per_volt, a.piezo_moment_per_volt) < 1e-9);
    }

    #[test]
    fn doubling_thickness_scales_stiffness_and_mass(
        tg in 50e-6..1e-3f64,
        tp in 10e-6..500e-6f64,
    ) {
        let a = laminate_reduce(&scaled_stack(tg, tp), 1).unwrap();
        let b = laminate_reduce(&scaled_stack(2.0 * tg, 2.0 * tp), 1).unwrap();
        prop_assert!(rel(b.bending_stiffness, 8.0 * a.bending_stiffness) < 1e-12);
        prop_assert!(rel(b.areal_mass, 2.0 * a.areal_mass) < 1e-12);
        prop_assert!(rel(b.neutral_axis_z, 2.0 * a.neutral_axis_z) < 1e-12);
    }

    #[test]
    fn piezo_moment_is_linear(v in -200.0..200.0f64) {
        let c = laminate_reduce(&default_stack(), 1).unwrap();
        prop_assert!((c.piezo_moment(2.0 * v) - 2.0 * c.piezo_moment(v)).abs() <= 1e-15 * c.piezo_moment(v).abs());
    }

    #[test]
    fn indefinite_tensors_are_rejected(c12 in 1.1e11..3.0e11f64) {
        // C11 - C12 <= 0 is not positive definite for C11 = 1e11
        let mut c = [[0.0; 6]; 6];
        for i in 0..6 {
            c[i][i] = 1e11;
        }
        c[0][1] = c12;
        c[1][0] = c12;
        prop_assert!(ElasticTensor::new(c).is_err());
    }
}
