use nonexp::odeint::{flow, IntegratorConfig};
use nonexp::parse_field;

#[test]
fn halving_tolerances_moves_the_answer_by_less_than_ten_tolerances() {
    let cases: [(&str, usize, &[f64], f64); 3] = [
        ("y; -x", 2, &[1.0, 0.0], 20.0),
        ("-x; -(x^2 + 1) * y", 2, &[1.0, 1.0], 5.0),
        ("y; -sin(x) - 0.1 * y", 2, &[2.0, 0.0], 15.0),
    ];
    for (src, dim, x0, t) in cases {
        let f = parse_field(src, dim).unwrap();
        for (rtol, atol) in [(1e-6, 1e-8), (1e-8, 1e-10), (1e-10, 1e-12)] {
            let a = flow(&f, x0, t, &IntegratorConfig::default().with_tolerances(rtol, atol)).unwrap();
            let b = flow(&f, x0, t, &IntegratorConfig::default().with_tolerances(rtol / 2.0, atol / 2.0)).unwrap();
            let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let diff = a.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(diff < 10.0 * rtol * scale, "{src} rtol={rtol}: {diff}");
        }
    }
}

#[test]
fn harmonic_flow_against_closed_form() {
    let f = parse_field("y; -x", 2).unwrap();
    for t in [0.5, 3.0, 50.0] {
        let x = flow(&f, &[1.0, 0.0], t, &IntegratorConfig::default()).unwrap();
        assert!((x[0] - t.cos()).abs() < 1e-7 && (x[1] + t.sin()).abs() < 1e-7, "t={t}: {x:?}");
    }
}
