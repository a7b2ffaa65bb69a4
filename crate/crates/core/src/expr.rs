//! Arithmetic expression trees over a declared variable set.
//!
//! Expressions are parsed from strings with the usual precedence
//! (`^` > unary `-` > `*` `/` > `+` `-`, all binary operators
//! left-associative), evaluated in IEEE double precision, and
//! differentiated symbolically. Power nodes carry a constant exponent;
//! an exponent expression must fold to a constant at parse time.
//!
//! Expressions are immutable after construction and safe to share across
//! threads.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Ordered set of variable names an expression may reference.
///
/// Evaluation environments are slices indexed in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarSet {
    names: Vec<String>,
}

impl VarSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Arc<Self> {
        Arc::new(VarSet {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Ln,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    /// Power with a constant exponent.
    Pow(Box<Node>, f64),
}

/// An immutable expression tree bound to a [`VarSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    node: Node,
    vars: Arc<VarSet>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },
    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },
    #[error("domain error in {op}")]
    Domain { op: &'static str },
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns the next token and its starting byte position.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
                {
                    end += 1;
                }
                // optional exponent part
                if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        end = e;
                        while end < self.src.len() && self.src[end].is_ascii_digit() {
                            end += 1;
                        }
                    }
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    expected: "a number".to_string(),
                })?;
                self.pos = end;
                Tok::Num(value)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                self.pos = end;
                Tok::Ident(text.to_string())
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: start,
                    expected: "an operand or operator".to_string(),
                })
            }
        };
        Ok((tok, start))
    }
}

// ---------------------------------------------------------------------------
// Parser (recursive descent)
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    look: (Tok, usize),
    vars: &'a Arc<VarSet>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, vars: &'a Arc<VarSet>) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let look = lexer.next()?;
        Ok(Parser { lexer, look, vars })
    }

    fn bump(&mut self) -> Result<(Tok, usize), ParseError> {
        let next = self.lexer.next()?;
        Ok(std::mem::replace(&mut self.look, next))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.look.0 == tok {
            self.bump()?;
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.look.1,
                expected: what.to_string(),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.look.0 {
                Tok::Plus => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Node::Binary(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump()?;
                    let rhs = self.term()?;
                    lhs = Node::Binary(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.look.0 {
                Tok::Star => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Node::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump()?;
                    let rhs = self.unary()?;
                    lhs = Node::Binary(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.look.0 == Tok::Minus {
            self.bump()?;
            let inner = self.unary()?;
            Ok(Node::Unary(UnaryOp::Neg, Box::new(inner)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let mut base = self.atom()?;
        while self.look.0 == Tok::Caret {
            self.bump()?;
            let pos = self.look.1;
            // Exponent: optional sign, then an atom that folds to a constant.
            let mut neg = false;
            while self.look.0 == Tok::Minus {
                self.bump()?;
                neg = !neg;
            }
            let exp_node = self.atom()?;
            let folded = const_fold(&exp_node).ok_or_else(|| ParseError::Syntax {
                pos,
                expected: "a constant exponent".to_string(),
            })?;
            let exponent = if neg { -folded } else { folded };
            if !exponent.is_finite() {
                return Err(ParseError::Syntax {
                    pos,
                    expected: "a finite exponent".to_string(),
                });
            }
            base = Node::Pow(Box::new(base), exponent);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let (tok, pos) = self.bump()?;
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if self.look.0 == Tok::LParen {
                    let op = match name.as_str() {
                        "sqrt" => UnaryOp::Sqrt,
                        "sin" => UnaryOp::Sin,
                        "cos" => UnaryOp::Cos,
                        "exp" => UnaryOp::Exp,
                        "ln" => UnaryOp::Ln,
                        _ => return Err(ParseError::UnknownIdentifier { name, pos }),
                    };
                    self.bump()?; // consume `(`
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Node::Unary(op, Box::new(arg)))
                } else {
                    match self.vars.index(&name) {
                        Some(i) => Ok(Node::Var(i)),
                        None => Err(ParseError::UnknownIdentifier { name, pos }),
                    }
                }
            }
            _ => Err(ParseError::Syntax {
                pos,
                expected: "an operand".to_string(),
            }),
        }
    }
}

fn const_fold(node: &Node) -> Option<f64> {
    match node {
        Node::Const(v) => Some(*v),
        Node::Var(_) => None,
        Node::Unary(UnaryOp::Neg, e) => const_fold(e).map(|v| -v),
        Node::Unary(..) => None,
        Node::Binary(op, a, b) => {
            let (a, b) = (const_fold(a)?, const_fold(b)?);
            Some(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
            })
        }
        Node::Pow(..) => None,
    }
}

// ---------------------------------------------------------------------------
// Simplifying constructors, used by differentiation only. The rule set is
// fixed: 0*e -> 0, 1*e -> e, e+0 -> e, e-0 -> e.
// ---------------------------------------------------------------------------

fn is_const(node: &Node, v: f64) -> bool {
    matches!(node, Node::Const(c) if *c == v)
}

fn add_s(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) {
        return b;
    }
    if is_const(&b, 0.0) {
        return a;
    }
    Node::Binary(BinOp::Add, Box::new(a), Box::new(b))
}

fn sub_s(a: Node, b: Node) -> Node {
    if is_const(&b, 0.0) {
        return a;
    }
    Node::Binary(BinOp::Sub, Box::new(a), Box::new(b))
}

fn mul_s(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) || is_const(&b, 0.0) {
        return Node::Const(0.0);
    }
    if is_const(&a, 1.0) {
        return b;
    }
    if is_const(&b, 1.0) {
        return a;
    }
    Node::Binary(BinOp::Mul, Box::new(a), Box::new(b))
}

fn div_s(a: Node, b: Node) -> Node {
    if is_const(&a, 0.0) {
        return Node::Const(0.0);
    }
    Node::Binary(BinOp::Div, Box::new(a), Box::new(b))
}

fn diff_node(node: &Node, var: usize) -> Node {
    match node {
        Node::Const(_) => Node::Const(0.0),
        Node::Var(i) => Node::Const(if *i == var { 1.0 } else { 0.0 }),
        Node::Unary(op, e) => {
            let de = diff_node(e, var);
            match op {
                UnaryOp::Neg => match de {
                    Node::Const(c) if c == 0.0 => Node::Const(0.0),
                    de => Node::Unary(UnaryOp::Neg, Box::new(de)),
                },
                UnaryOp::Sqrt => div_s(
                    de,
                    mul_s(Node::Const(2.0), Node::Unary(UnaryOp::Sqrt, e.clone())),
                ),
                UnaryOp::Sin => mul_s(Node::Unary(UnaryOp::Cos, e.clone()), de),
                UnaryOp::Cos => match mul_s(Node::Unary(UnaryOp::Sin, e.clone()), de) {
                    Node::Const(c) if c == 0.0 => Node::Const(0.0),
                    prod => Node::Unary(UnaryOp::Neg, Box::new(prod)),
                },
                UnaryOp::Exp => mul_s(Node::Unary(UnaryOp::Exp, e.clone()), de),
                UnaryOp::Ln => div_s(de, (**e).clone()),
            }
        }
        Node::Binary(op, a, b) => {
            let (da, db) = (diff_node(a, var), diff_node(b, var));
            match op {
                BinOp::Add => add_s(da, db),
                BinOp::Sub => sub_s(da, db),
                BinOp::Mul => add_s(mul_s(da, (**b).clone()), mul_s((**a).clone(), db)),
                BinOp::Div => div_s(
                    sub_s(mul_s(da, (**b).clone()), mul_s((**a).clone(), db)),
                    Node::Pow(b.clone(), 2.0),
                ),
            }
        }
        Node::Pow(e, c) => {
            if *c == 0.0 {
                return Node::Const(0.0);
            }
            let de = diff_node(e, var);
            mul_s(mul_s(Node::Const(*c), Node::Pow(e.clone(), c - 1.0)), de)
        }
    }
}

fn eval_node(node: &Node, env: &[f64], vars: &VarSet) -> Result<f64, EvalError> {
    match node {
        Node::Const(v) => Ok(*v),
        Node::Var(i) => env.get(*i).copied().ok_or_else(|| EvalError::UnboundVariable {
            name: vars.name(*i).to_string(),
        }),
        Node::Unary(op, e) => {
            let v = eval_node(e, env, vars)?;
            match op {
                UnaryOp::Neg => Ok(-v),
                UnaryOp::Sqrt => {
                    if v < 0.0 {
                        Err(EvalError::Domain { op: "sqrt" })
                    } else {
                        Ok(v.sqrt())
                    }
                }
                UnaryOp::Sin => Ok(v.sin()),
                UnaryOp::Cos => Ok(v.cos()),
                UnaryOp::Exp => Ok(v.exp()),
                UnaryOp::Ln => {
                    if v <= 0.0 {
                        Err(EvalError::Domain { op: "ln" })
                    } else {
                        Ok(v.ln())
                    }
                }
            }
        }
        Node::Binary(op, a, b) => {
            let x = eval_node(a, env, vars)?;
            let y = eval_node(b, env, vars)?;
            match op {
                BinOp::Add => Ok(x + y),
                BinOp::Sub => Ok(x - y),
                BinOp::Mul => Ok(x * y),
                BinOp::Div => {
                    if y == 0.0 {
                        Err(EvalError::Domain { op: "div" })
                    } else {
                        Ok(x / y)
                    }
                }
            }
        }
        Node::Pow(e, c) => {
            let v = eval_node(e, env, vars)?;
            let c = *c;
            if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
                if v == 0.0 && c < 0.0 {
                    return Err(EvalError::Domain { op: "pow" });
                }
                Ok(v.powi(c as i32))
            } else if v > 0.0 {
                Ok(v.powf(c))
            } else if v == 0.0 && c > 0.0 {
                Ok(0.0)
            } else {
                // non-integer exponent needs a positive base
                Err(EvalError::Domain { op: "pow" })
            }
        }
    }
}

impl Expression {
    /// Parses `text` against the declared variables.
    pub fn parse(text: &str, vars: &Arc<VarSet>) -> Result<Self, ParseError> {
        let mut parser = Parser::new(text, vars)?;
        let node = parser.expr()?;
        if parser.look.0 != Tok::End {
            return Err(ParseError::Syntax {
                pos: parser.look.1,
                expected: "end of input".to_string(),
            });
        }
        Ok(Expression {
            node,
            vars: Arc::clone(vars),
        })
    }

    pub fn constant(v: f64, vars: &Arc<VarSet>) -> Self {
        Expression {
            node: Node::Const(v),
            vars: Arc::clone(vars),
        }
    }

    pub fn vars(&self) -> &Arc<VarSet> {
        &self.vars
    }

    /// Evaluates with `env[i]` bound to variable `i` in declaration order.
    pub fn eval(&self, env: &[f64]) -> Result<f64, EvalError> {
        eval_node(&self.node, env, &self.vars)
    }

    /// Evaluates against named bindings; every variable occurring in the
    /// expression must be bound.
    pub fn eval_named(&self, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        let mut env = vec![f64::NAN; self.vars.len()];
        let mut bound = vec![false; self.vars.len()];
        for (name, value) in bindings {
            if let Some(i) = self.vars.index(name) {
                env[i] = *value;
                bound[i] = true;
            }
        }
        for i in 0..self.vars.len() {
            if !bound[i] && self.references(i) {
                return Err(EvalError::UnboundVariable {
                    name: self.vars.name(i).to_string(),
                });
            }
        }
        self.eval(&env)
    }

    /// Symbolic partial derivative with respect to variable index `var`.
    pub fn diff(&self, var: usize) -> Expression {
        Expression {
            node: diff_node(&self.node, var),
            vars: Arc::clone(&self.vars),
        }
    }

    /// Symbolic sum, applying the fixed simplification rules.
    pub fn plus(&self, other: &Expression) -> Expression {
        Expression {
            node: add_s(self.node.clone(), other.node.clone()),
            vars: Arc::clone(&self.vars),
        }
    }

    /// Symbolic difference, applying the fixed simplification rules.
    pub fn minus(&self, other: &Expression) -> Expression {
        Expression {
            node: sub_s(self.node.clone(), other.node.clone()),
            vars: Arc::clone(&self.vars),
        }
    }

    /// Symbolic product, applying the fixed simplification rules.
    pub fn times(&self, other: &Expression) -> Expression {
        Expression {
            node: mul_s(self.node.clone(), other.node.clone()),
            vars: Arc::clone(&self.vars),
        }
    }

    /// Symbolic partial derivative by variable name.
    pub fn diff_named(&self, name: &str) -> Option<Expression> {
        self.vars.index(name).map(|i| self.diff(i))
    }

    /// True if variable index `var` occurs in the tree.
    pub fn references(&self, var: usize) -> bool {
        fn walk(node: &Node, var: usize) -> bool {
            match node {
                Node::Const(_) => false,
                Node::Var(i) => *i == var,
                Node::Unary(_, e) => walk(e, var),
                Node::Binary(_, a, b) => walk(a, var) || walk(b, var),
                Node::Pow(e, _) => walk(e, var),
            }
        }
        walk(&self.node, var)
    }

    /// True if the tree is the literal constant zero.
    pub fn is_zero(&self) -> bool {
        is_const(&self.node, 0.0)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var_index(&self) -> Option<usize> {
        fn walk(node: &Node) -> Option<usize> {
            match node {
                Node::Const(_) => None,
                Node::Var(i) => Some(*i),
                Node::Unary(_, e) | Node::Pow(e, _) => walk(e),
                Node::Binary(_, a, b) => match (walk(a), walk(b)) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                },
            }
        }
        walk(&self.node)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn prec(node: &Node) -> u8 {
            match node {
                Node::Const(v) if *v < 0.0 => 1,
                Node::Const(_) | Node::Var(_) => 4,
                Node::Unary(UnaryOp::Neg, _) => 2,
                Node::Unary(..) => 4,
                Node::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
                Node::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
                Node::Pow(..) => 3,
            }
        }
        fn write_node(
            node: &Node,
            vars: &VarSet,
            f: &mut fmt::Formatter<'_>,
            parent: u8,
        ) -> fmt::Result {
            let p = prec(node);
            let parens = p < parent;
            if parens {
                write!(f, "(")?;
            }
            match node {
                Node::Const(v) => write!(f, "{}", v)?,
                Node::Var(i) => write!(f, "{}", vars.name(*i))?,
                Node::Unary(UnaryOp::Neg, e) => {
                    write!(f, "-")?;
                    write_node(e, vars, f, 3)?;
                }
                Node::Unary(op, e) => {
                    let name = match op {
                        UnaryOp::Sqrt => "sqrt",
                        UnaryOp::Sin => "sin",
                        UnaryOp::Cos => "cos",
                        UnaryOp::Exp => "exp",
                        UnaryOp::Ln => "ln",
                        UnaryOp::Neg => unreachable!(),
                    };
                    write!(f, "{}(", name)?;
                    write_node(e, vars, f, 0)?;
                    write!(f, ")")?;
                }
                Node::Binary(op, a, b) => {
                    let (sym, lp, rp) = match op {
                        BinOp::Add => ("+", 1, 1),
                        BinOp::Sub => ("-", 1, 2),
                        BinOp::Mul => ("*", 2, 2),
                        BinOp::Div => ("/", 2, 3),
                    };
                    write_node(a, vars, f, lp)?;
                    write!(f, "{}", sym)?;
                    write_node(b, vars, f, rp)?;
                }
                Node::Pow(e, c) => {
                    write_node(e, vars, f, 4)?;
                    if *c < 0.0 {
                        write!(f, "^({})", c)?;
                    } else {
                        write!(f, "^{}", c)?;
                    }
                }
            }
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        write_node(&self.node, &self.vars, f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn vars_xy_alpha() -> Arc<VarSet> {
        VarSet::new(&["x", "y", "alpha"])
    }

    fn p(text: &str) -> Expression {
        Expression::parse(text, &vars_xy_alpha()).unwrap()
    }

    #[test]
    fn parses_with_precedence() {
        // -x + 2*y + x^2 at (x,y) = (1,0): -1 + 0 + 1 = 0
        let e = p("-x+2*y+x^2");
        assert_eq!(e.eval(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        // unary minus binds looser than pow: -x^2 = -(x^2)
        let e = p("-x^2");
        assert_eq!(e.eval(&[2.0, 0.0, 0.0]).unwrap(), -4.0);
        // left associativity: 8/4/2 = 1, 2^3^2 = (2^3)^2 = 64
        let e = p("8/4/2");
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        let e = p("2^3^2");
        assert_eq!(e.eval(&[0.0, 0.0, 0.0]).unwrap(), 64.0);
    }

    #[test]
    fn sandstede_second_component() {
        let e = p("(2-alpha)*x - y - 3*x^2 + (3/2)*x*y");
        // alpha=0, (x,y)=(1,0): 2 - 0 - 3 + 0 = -1
        assert_eq!(e.eval(&[1.0, 0.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn syntax_error_position() {
        let err = Expression::parse("x +* y", &vars_xy_alpha()).unwrap_err();
        assert_eq!(
            err,
            ParseError::Syntax {
                pos: 3,
                expected: "an operand".to_string()
            }
        );
    }

    #[test]
    fn unknown_identifier() {
        let err = Expression::parse("x + q", &vars_xy_alpha()).unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdentifier { ref name, pos: 4 } if name == "q"));
        let err = Expression::parse("foo(x)", &vars_xy_alpha()).unwrap_err();
        assert!(matches!(err, ParseError::UnknownIdentifier { ref name, .. } if name == "foo"));
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(Expression::parse("x y", &vars_xy_alpha()).is_err());
        assert!(Expression::parse("(x", &vars_xy_alpha()).is_err());
        assert!(Expression::parse("", &vars_xy_alpha()).is_err());
    }

    #[test]
    fn homoclinic_curve_values() {
        let e = p("x^2*(1-x)-y^2");
        assert_eq!(e.eval(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let y = 0.5 * 0.5f64.sqrt();
        assert!(e.eval(&[0.5, y, 0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(
            p("sqrt(x)").eval(&[-1.0, 0.0, 0.0]),
            Err(EvalError::Domain { op: "sqrt" })
        );
        assert_eq!(
            p("ln(x)").eval(&[0.0, 0.0, 0.0]),
            Err(EvalError::Domain { op: "ln" })
        );
        assert_eq!(
            p("1/x").eval(&[0.0, 0.0, 0.0]),
            Err(EvalError::Domain { op: "div" })
        );
        // non-integer exponent with negative base
        assert_eq!(
            p("x^1.5").eval(&[-1.0, 0.0, 0.0]),
            Err(EvalError::Domain { op: "pow" })
        );
        // integer exponents are fine for negative bases
        assert_eq!(p("x^3").eval(&[-2.0, 0.0, 0.0]).unwrap(), -8.0);
        assert_eq!(
            p("x^-1").eval(&[0.0, 0.0, 0.0]),
            Err(EvalError::Domain { op: "pow" })
        );
    }

    #[test]
    fn constant_exponents_only() {
        assert!(Expression::parse("x^(3/2)", &vars_xy_alpha()).is_ok());
        assert!(Expression::parse("x^-2", &vars_xy_alpha()).is_ok());
        let err = Expression::parse("x^y", &vars_xy_alpha()).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn diff_basics() {
        let e = p("x^2");
        let d = e.diff(0);
        assert_eq!(d.eval(&[3.0, 0.0, 0.0]).unwrap(), 6.0);

        let e = p("(2-alpha)*x");
        let d = e.diff_named("alpha").unwrap();
        for x in [0.0, 1.0, -2.5] {
            assert_eq!(d.eval(&[x, 0.0, 7.0]).unwrap(), -x);
        }
    }

    #[test]
    fn unbound_variable() {
        let e = p("x + alpha");
        assert!(matches!(
            e.eval(&[1.0]),
            Err(EvalError::UnboundVariable { .. })
        ));
        assert!(e.eval_named(&[("x", 1.0)]).is_err());
        assert_eq!(
            e.eval_named(&[("x", 1.0), ("alpha", 2.0)]).unwrap(),
            3.0
        );
    }

    /// The fixed 20-expression corpus: parse + eval must match direct
    /// arithmetic, and the symbolic derivative must match central finite
    /// differences.
    fn corpus() -> Vec<(&'static str, fn(f64, f64, f64) -> f64)> {
        vec![
            ("x", |x, _, _| x),
            ("y", |_, y, _| y),
            ("alpha", |_, _, a| a),
            ("-x+2*y+x^2", |x, y, _| -x + 2.0 * y + x * x),
            ("(2-alpha)*x - y - 3*x^2 + (3/2)*x*y", |x, y, a| {
                (2.0 - a) * x - y - 3.0 * x * x + 1.5 * x * y
            }),
            ("x^2*(1-x)-y^2", |x, y, _| x * x * (1.0 - x) - y * y),
            ("x*y*alpha", |x, y, a| x * y * a),
            ("x/(2+y^2)", |x, y, _| x / (2.0 + y * y)),
            ("sin(x)*cos(y)", |x, y, _| x.sin() * y.cos()),
            ("exp(x*y)", |x, y, _| (x * y).exp()),
            ("ln(3+x^2)", |x, _, _| (3.0 + x * x).ln()),
            ("sqrt(4+x^2+y^2)", |x, y, _| {
                (4.0 + x * x + y * y).sqrt()
            }),
            ("x^3 - 2*x^2 + x - 7", |x, _, _| {
                x.powi(3) - 2.0 * x * x + x - 7.0
            }),
            ("(x+y)^2", |x, y, _| (x + y) * (x + y)),
            ("1/(1+exp(-x))", |x, _, _| 1.0 / (1.0 + (-x).exp())),
            ("sin(x+alpha)-cos(x-alpha)", |x, _, a| {
                (x + a).sin() - (x - a).cos()
            }),
            ("x^2/(1+y^2)", |x, y, _| x * x / (1.0 + y * y)),
            ("-(x - y)", |x, y, _| -(x - y)),
            ("2^2 + x*1e-1", |x, _, _| 4.0 + x * 0.1),
            ("(x^2+1)^0.5", |x, _, _| (x * x + 1.0).sqrt()),
        ]
    }

    #[test]
    fn corpus_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for (text, direct) in corpus() {
            let e = p(text);
            for _ in 0..25 {
                let x = rng.gen_range(-2.0..2.0);
                let y = rng.gen_range(-2.0..2.0);
                let a = rng.gen_range(-2.0..2.0);
                let got = e.eval(&[x, y, a]).unwrap();
                let want = direct(x, y, a);
                assert!(
                    (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "{} at ({},{},{}): {} vs {}",
                    text,
                    x,
                    y,
                    a,
                    got,
                    want
                );
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let h = 1e-6;
        for (text, _) in corpus() {
            let e = p(text);
            for var in 0..3 {
                let d = e.diff(var);
                let mut checked = 0;
                while checked < 100 {
                    let mut env = [
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ];
                    let sym = match d.eval(&env) {
                        Ok(v) => v,
                        Err(_) => continue, // domain-error point, skip
                    };
                    let mut lo = env;
                    let mut hi = env;
                    lo[var] -= h;
                    hi[var] += h;
                    let (flo, fhi) = match (e.eval(&lo), e.eval(&hi)) {
                        (Ok(a), Ok(b)) => (a, b),
                        _ => continue,
                    };
                    let fd = (fhi - flo) / (2.0 * h);
                    let scale = 1.0f64.max(sym.abs()).max(fd.abs());
                    assert!(
                        (sym - fd).abs() / scale < 1e-6,
                        "{} d/d{}: sym {} vs fd {} at {:?}",
                        text,
                        var,
                        sym,
                        fd,
                        env
                    );
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn display_reparses_equivalently() {
        let vars = vars_xy_alpha();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (text, _) in corpus() {
            let e = Expression::parse(text, &vars).unwrap();
            let shown = e.to_string();
            let back = Expression::parse(&shown, &vars).unwrap();
            for _ in 0..10 {
                let env = [
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                ];
                match (e.eval(&env), back.eval(&env)) {
                    (Ok(a), Ok(b)) => assert!(
                        (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                        "{} vs {} ({} -> {})",
                        a,
                        b,
                        text,
                        shown
                    ),
                    (Err(_), Err(_)) => {}
                    (a, b) => panic!("eval disagreement for {}: {:?} vs {:?}", text, a, b),
                }
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Parsing arbitrary input never panics or loops; it either
            /// yields an expression or a positioned error.
            #[test]
            fn parser_total(input in ".{0,64}") {
                let vars = vars_xy_alpha();
                let _ = Expression::parse(&input, &vars);
            }

            /// Differentiation always yields a tree that can be evaluated
            /// or fails with a domain error, never panics.
            #[test]
            fn diff_closed(
                xs in prop::collection::vec(-2.0f64..2.0, 3),
                idx in 0usize..3
            ) {
                let vars = vars_xy_alpha();
                let e = Expression::parse("x^2*(1-x)-y^2+sin(alpha*x)", &vars).unwrap();
                let d = e.diff(idx);
                let _ = d.eval(&xs);
            }
        }
    }
}
