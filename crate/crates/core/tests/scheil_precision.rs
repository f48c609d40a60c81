use astro_float::{BigFloat, Consts, RoundingMode};
use castopt::material::fs_of_t;
use castopt::MaterialProperties;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// `1 - ((T - T_f)/(T_liq - T_f))^(1/(k_p - 1))` in 256-bit arithmetic.
fn scheil_big(t: f64, m: &MaterialProperties, cc: &mut Consts) -> BigFloat {
    let big = |x: f64| BigFloat::from_f64(x, PREC);
    let one = big(1.0);
    let base = big(t)
        .sub(&big(m.t_freeze), PREC, RM)
        .div(&big(m.t_liquidus).sub(&big(m.t_freeze), PREC, RM), PREC, RM);
    let expo = one.div(&big(m.partition_coeff).sub(&one, PREC, RM), PREC, RM);
    one.sub(&base.pow(&expo, PREC, RM, cc), PREC, RM)
}

fn relative_error(ours: f64, exact: &BigFloat) -> BigFloat {
    let diff = BigFloat::from_f64(ours, PREC).sub(exact, PREC, RM).abs();
    diff.div(&exact.abs(), PREC, RM)
}

#[test]
fn mushy_scan_matches_extended_precision() {
    let m = MaterialProperties::default();
    let mut cc = Consts::new().unwrap();
    let tol = BigFloat::from_f64(1e-12, PREC);
    let n = 10_000;
    let mut worst = 0usize;
    let mut worst_err = BigFloat::from_f64(0.0, PREC);
    for i in 0..n {
        // strictly inside, so the exact value is non-zero
        let t = m.t_solidus + (m.t_liquidus - m.t_solidus) * (i as f64 + 0.5) / n as f64;
        let err = relative_error(fs_of_t(t, &m), &scheil_big(t, &m, &mut cc));
        if err.cmp(&worst_err).is_some_and(|c| c > 0) {
            worst_err = err;
            worst = i;
        }
    }
    assert!(
        worst_err.cmp(&tol).is_some_and(|c| c < 0),
        "worst relative error {worst_err} at sample {worst}"
    );
}

#[test]
fn just_below_liquidus_keeps_relative_precision() {
    let m = MaterialProperties::default();
    let mut cc = Consts::new().unwrap();
    let tol = BigFloat::from_f64(1e-12, PREC);
    for k in 1..=40 {
        let t = m.t_liquidus - 2f64.powi(-k);
        let err = relative_error(fs_of_t(t, &m), &scheil_big(t, &m, &mut cc));
        assert!(err.cmp(&tol).is_some_and(|c| c < 0), "T = T_liq - 2^-{k}: {err}");
    }
}

#[test]
fn limits_are_exact() {
    let m = MaterialProperties::default();
    for i in 0..10_000 {
        let d = 1e-9 + i as f64 * 0.05;
        assert_eq!(fs_of_t(m.t_liquidus + d, &m), 0.0);
        assert_eq!(fs_of_t(m.t_solidus - d, &m), 1.0);
    }
    assert_eq!(fs_of_t(m.t_liquidus, &m), 0.0);
}
