use super::{BinaryOp, Expr, UnaryOp};

pub(super) fn differentiate(e: &Expr, var: usize) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let da = differentiate(a, var);
            if da.is_zero() {
                return Expr::Const(0.0);
            }
            let a = (**a).clone();
            match op {
                UnaryOp::Neg => Expr::neg(da),
                UnaryOp::Sin => Expr::mul(Expr::unary(UnaryOp::Cos, a), da),
                UnaryOp::Cos => Expr::mul(Expr::neg(Expr::unary(UnaryOp::Sin, a)), da),
                UnaryOp::Exp => Expr::mul(Expr::unary(UnaryOp::Exp, a), da),
                UnaryOp::Ramp => Expr::mul(Expr::unary(UnaryOp::Step, a), da),
                UnaryOp::Step => Expr::Const(0.0),
            }
        }
        Expr::Binary(op, a, b) => {
            let da = differentiate(a, var);
            let db = differentiate(b, var);
            match op {
                BinaryOp::Add => Expr::add(da, db),
                BinaryOp::Sub => Expr::sub(da, db),
                BinaryOp::Mul => Expr::add(
                    Expr::mul(da, (**b).clone()),
                    Expr::mul((**a).clone(), db),
                ),
                BinaryOp::Div => {
                    // (a'b - ab') / b^2
                    let num = Expr::sub(
                        Expr::mul(da, (**b).clone()),
                        Expr::mul((**a).clone(), db),
                    );
                    Expr::div(num, Expr::pow((**b).clone(), 2))
                }
            }
        }
        Expr::Pow(a, n) => {
            let da = differentiate(a, var);
            if *n == 0 || da.is_zero() {
                return Expr::Const(0.0);
            }
            let outer = Expr::mul(Expr::Const(*n as f64), Expr::pow((**a).clone(), n - 1));
            Expr::mul(outer, da)
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse_expr, Expr};

    fn d(src: &str, var: usize) -> Expr {
        parse_expr(src, 2).unwrap().differentiate(var)
    }

    #[test]
    fn power_rule() {
        let got = d("x^2*y", 0);
        assert_eq!(got.to_string(), "2 * x1 * x2");
        assert_eq!(got.eval(&[3.0, 5.0]).unwrap(), 30.0);
    }

    #[test]
    fn hurwitz_entry() {
        let got = d("-(x^2+1)*y", 1);
        assert_eq!(got, parse_expr("-(x^2+1)", 2).unwrap());
    }

    #[test]
    fn trig_and_exp() {
        assert_eq!(d("sin(x)", 0), parse_expr("cos(x)", 2).unwrap());
        assert_eq!(d("cos(y)", 1), parse_expr("-sin(y)", 2).unwrap());
        assert_eq!(d("exp(2*x)", 0).eval(&[0.5, 0.0]).unwrap(), 2.0 * 1f64.exp());
        assert!(d("sin(x)", 1).is_zero());
    }

    #[test]
    fn quotient_rule() {
        let q = d("x/(y^2+1)", 1);
        let v = q.eval(&[2.0, 1.0]).unwrap();
        assert!((v - (-2.0 * 2.0 * 1.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_folding_identities() {
        assert!(d("3*y + 7", 0).is_zero());
        assert_eq!(d("1*x", 0), Expr::Const(1.0));
        assert_eq!(d("x^0", 0), Expr::Const(0.0));
        assert_eq!(d("x^1", 0), Expr::Const(1.0));
    }
}
