//! Vector-field expressions.
//!
//! A field is a list of scalar expressions over the state variables
//! `x1..xn`. The node set is closed under differentiation, so Jacobians
//! are computed exactly from the AST. `ramp(u) = max(0, u)` and its
//! derivative `step(u)` (0 at u <= 0, 1 otherwise) allow piecewise fields
//! such as squared hinges; fields using them are not analytic.
//!
//! Grammar (whitespace-insensitive, components separated by `;` or newline):
//!
//! ```text
//! field   := expr ( sep expr )*
//! expr    := term ( ('+' | '-') term )*
//! term    := unary ( ('*' | '/') unary )*
//! unary   := ('-' | '+') unary | power
//! power   := primary ( '^' INTEGER )?
//! primary := NUMBER | VARIABLE | 'pi' | FUNC '(' expr ')' | '(' expr ')'
//! FUNC    := 'sin' | 'cos' | 'exp' | 'ramp' | 'step'
//! VARIABLE:= 'x' DIGITS | 'x' | 'y' | 'z'      (aliases only for n <= 3)
//! ```

mod diff;
mod parse;

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use parse::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ramp,
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Expression tree. Exponents are non-negative integer literals.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn var(index: usize) -> Expr {
        Expr::Var(index)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    // Folding constructors. Only constant folding and the 0/1 identities are
    // applied; nothing is reordered.

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            a => Expr::Unary(UnaryOp::Neg, Box::new(a)),
        }
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Expr {
        match (op, &a) {
            (UnaryOp::Neg, _) => Expr::neg(a),
            (UnaryOp::Sin, Expr::Const(c)) => Expr::Const(c.sin()),
            (UnaryOp::Cos, Expr::Const(c)) => Expr::Const(c.cos()),
            (UnaryOp::Exp, Expr::Const(c)) => Expr::Const(c.exp()),
            (UnaryOp::Ramp, Expr::Const(c)) => Expr::Const(c.max(0.0)),
            (UnaryOp::Step, Expr::Const(c)) => Expr::Const(if *c > 0.0 { 1.0 } else { 0.0 }),
            _ => Expr::Unary(op, Box::new(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), None) if x == 0.0 => b,
            (None, Some(y)) if y == 0.0 => a,
            _ => Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), None) if x == 0.0 => Expr::neg(b),
            (None, Some(y)) if y == 0.0 => a,
            _ => Expr::Binary(BinaryOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 0.0 => Expr::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Binary(BinaryOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        match op {
            BinaryOp::Add => Expr::add(a, b),
            BinaryOp::Sub => Expr::sub(a, b),
            BinaryOp::Mul => Expr::mul(a, b),
            BinaryOp::Div => Expr::div(a, b),
        }
    }

    pub fn pow(a: Expr, n: u32) -> Expr {
        match (n, &a) {
            (0, _) => Expr::Const(1.0),
            (1, _) => a,
            (_, Expr::Const(c)) => Expr::Const(c.powi(n as i32)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// False when the tree contains `ramp` or `step`.
    pub fn is_analytic(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => true,
            Expr::Unary(UnaryOp::Ramp | UnaryOp::Step, _) => false,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.is_analytic(),
            Expr::Binary(_, a, b) => a.is_analytic() && b.is_analytic(),
        }
    }

    /// Evaluates at `x`. Fails on division by zero or a non-finite result.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = self.eval_raw(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite)
        }
    }

    fn eval_raw(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Unary(op, a) => {
                let a = a.eval_raw(x)?;
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Ramp => a.max(0.0),
                    UnaryOp::Step => {
                        if a > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let a = a.eval_raw(x)?;
                let b = b.eval_raw(x)?;
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(Error::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(a, n) => a.eval_raw(x)?.powi(*n as i32),
        })
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn differentiate(&self, var: usize) -> Expr {
        diff::differentiate(self, var)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::Const(_) | Expr::Var(_) => 5,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Unary(..) => 5,
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Pow(..) => 4,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(c) => write!(f, "{c}")?,
            Expr::Var(i) => write!(f, "x{}", i + 1)?,
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                // a bare literal after '-' would be read back as a negative constant
                if matches!(**a, Expr::Const(_)) {
                    write!(f, "({a})")?;
                } else {
                    a.write_prec(f, 3)?;
                }
            }
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Sin => "sin",
                    UnaryOp::Cos => "cos",
                    UnaryOp::Exp => "exp",
                    UnaryOp::Ramp => "ramp",
                    UnaryOp::Step => "step",
                    UnaryOp::Neg => unreachable!(),
                };
                write!(f, "{name}(")?;
                a.write_prec(f, 0)?;
                f.write_str(")")?;
            }
            Expr::Binary(op, a, b) => {
                let (sym, lhs, rhs) = match op {
                    BinaryOp::Add => (" + ", 1, 2),
                    BinaryOp::Sub => (" - ", 1, 2),
                    BinaryOp::Mul => (" * ", 2, 3),
                    BinaryOp::Div => (" / ", 2, 3),
                };
                a.write_prec(f, lhs)?;
                f.write_str(sym)?;
                b.write_prec(f, rhs)?;
            }
            Expr::Pow(a, n) => {
                a.write_prec(f, 5)?;
                write!(f, "^{n}")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Prints in the input grammar; `parse_expr(&e.to_string(), n)` reproduces `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

/// An n-dimensional autonomous field `dx/dt = f(x)` with its symbolic Jacobian.
#[derive(Debug, Clone)]
pub struct VectorFieldDef {
    dimension: usize,
    components: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
    analytic: bool,
}

impl VectorFieldDef {
    pub fn new(dimension: usize, components: Vec<Expr>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if components.len() != dimension {
            return Err(Error::Arity {
                expected: dimension,
                found: components.len(),
            });
        }
        for c in &components {
            if let Some(i) = c.max_var() {
                if i >= dimension {
                    return Err(Error::InvalidArgument(format!(
                        "variable x{} out of range for dimension {dimension}",
                        i + 1
                    )));
                }
            }
        }
        let jacobian = components
            .iter()
            .map(|c| (0..dimension).map(|j| c.differentiate(j)).collect())
            .collect();
        let analytic = components.iter().all(Expr::is_analytic);
        Ok(VectorFieldDef {
            dimension,
            components,
            jacobian,
            analytic,
        })
    }

    /// Linear field `dx/dt = A x`.
    pub fn linear(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let components = (0..n)
            .map(|i| {
                (0..n).fold(Expr::Const(0.0), |acc, j| {
                    let c = a[(i, j)];
                    let term = Expr::mul(Expr::Const(c.abs()), Expr::Var(j));
                    if c < 0.0 {
                        Expr::sub(acc, term)
                    } else {
                        Expr::add(acc, term)
                    }
                })
            })
            .collect();
        VectorFieldDef::new(n, components)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_analytic(&self) -> bool {
        self.analytic
    }

    /// Symbolic partial derivative df_i/dx_j.
    pub fn partial(&self, i: usize, j: usize) -> &Expr {
        &self.jacobian[i][j]
    }

    /// True when every Jacobian entry is a constant.
    pub fn is_linear(&self) -> bool {
        self.jacobian
            .iter()
            .flatten()
            .all(|e| matches!(e, Expr::Const(_)))
    }

    /// Constant Jacobian of an affine field, if it is one.
    pub fn linear_part(&self) -> Option<DMatrix<f64>> {
        if !self.is_linear() {
            return None;
        }
        let n = self.dimension;
        Some(DMatrix::from_fn(n, n, |i, j| {
            self.jacobian[i][j].as_const().unwrap_or(0.0)
        }))
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dimension];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(x)?;
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x)?;
        }
        Ok(())
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(x)?;
        let n = self.dimension;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.jacobian[i][j].eval(x)?;
            }
        }
        Ok(m)
    }

    /// Components rendered in the input grammar, one per entry.
    pub fn to_strings(&self) -> Vec<String> {
        self.components.iter().map(|c| c.to_string()).collect()
    }
}

/// Parses a `;`/newline separated list of `dimension` expressions.
pub fn parse_field(source: &str, dimension: usize) -> Result<VectorFieldDef> {
    let components = parse::parse_components(source, dimension)?;
    VectorFieldDef::new(dimension, components)
}

/// Parses one component expression.
pub fn parse_expr(source: &str, dimension: usize) -> Result<Expr> {
    let mut comps = parse::parse_list(source, dimension)?;
    if comps.len() != 1 {
        return Err(Error::Arity {
            expected: 1,
            found: comps.len(),
        });
    }
    Ok(comps.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_field_values() {
        let f = parse_field("-x; -(x^2+1)*y", 2).unwrap();
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), vec![-1.0, -2.0]);
        let j = f.jacobian(&[0.5, 2.0]).unwrap();
        assert_eq!(j[(0, 0)], -1.0);
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(j[(1, 0)], -2.0 * 0.5 * 2.0);
        assert_eq!(j[(1, 1)], -(0.25 + 1.0));
    }

    #[test]
    fn zero_and_rotation_fields() {
        let z = parse_field("0; 0", 2).unwrap();
        assert_eq!(z.eval(&[3.0, -7.0]).unwrap(), vec![0.0, 0.0]);
        assert!(z.is_linear());

        let h = parse_field("y; -x", 2).unwrap();
        assert_eq!(h.eval(&[0.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        let j = h.jacobian(&[4.0, -1.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));

        let d = parse_field("-x; -y", 2).unwrap();
        assert_eq!(d.jacobian(&[1.0, 2.0]).unwrap(), -DMatrix::identity(2, 2));
    }

    #[test]
    fn eval_errors() {
        let f = parse_field("1/x", 1).unwrap();
        assert!(matches!(f.eval(&[0.0]), Err(Error::DivisionByZero)));
        let g = parse_field("exp(x)", 1).unwrap();
        assert!(matches!(g.eval(&[1e4]), Err(Error::NonFinite)));
        assert!(matches!(
            g.eval(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_constructor_matches_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, -4.0, 8.0, -4.0]);
        let f = VectorFieldDef::linear(&a).unwrap();
        assert_eq!(f.linear_part().unwrap(), a);
        assert_eq!(f.eval(&[1.0, 1.0]).unwrap(), vec![-5.0, 4.0]);
        assert!(f.is_analytic());
    }

    #[test]
    fn display_round_trips_awkward_constants() {
        for src in ["-2^2", "(-2)^2", "-(2)", "x - -3", "-(-2)", "--x", "x/(y*z)", "x-(y-z)"] {
            let e = parse_expr(src, 3).unwrap();
            let back = parse_expr(&e.to_string(), 3).unwrap();
            assert_eq!(e, back, "{src} -> {e}");
        }
        assert_eq!(parse_expr("-2^2", 1).unwrap().eval(&[0.0]).unwrap(), -4.0);
    }

    #[test]
    fn hinge_field() {
        let f = parse_field(
            "2*y - ramp(x^2 + y^2 - 1)^2 * x; -2*x - ramp(x^2 + y^2 - 1)^2 * y",
            2,
        )
        .unwrap();
        assert!(!f.is_analytic());
        assert!(!f.is_linear());
        // linear inside the unit disk
        assert_eq!(f.eval(&[0.5, 0.0]).unwrap(), vec![0.0, -1.0]);
        assert_eq!(f.jacobian(&[0.5, 0.0]).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]));
        // at (2, 0): g = 9, g' = 6, so J = S - (g I + 2 g' x x')
        let j = f.jacobian(&[2.0, 0.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[-57.0, 2.0, -2.0, -9.0]));
        assert_eq!(parse_expr("step(-1) + step(0) + step(3)", 1).unwrap().eval(&[0.0]).unwrap(), 1.0);
    }
}
