//! Abstract syntax of `.vob` machines.

use std::fmt;

/// Declared type of a variable, constant or event parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeExpr {
    Bool,
    Range(i64, i64),
    Enum(String),
    SetOf(String),
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Bool => f.write_str("BOOL"),
            TypeExpr::Range(lo, hi) => write!(f, "{lo}..{hi}"),
            TypeExpr::Enum(s) => f.write_str(s),
            TypeExpr::SetOf(s) => write!(f, "set of {s}"),
        }
    }
}

/// Literal values as they appear in constant declarations and bindings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Member(String),
    Set(Vec<String>),
}

impl Literal {
    pub fn to_expr(&self) -> Expr {
        match self {
            Literal::Bool(b) => Expr::Bool(*b),
            Literal::Int(n) if *n < 0 => Expr::Unary(UnOp::Neg, Box::new(Expr::Int(-n))),
            Literal::Int(n) => Expr::Int(*n),
            Literal::Member(m) => Expr::Ident(m.clone()),
            Literal::Set(ms) => Expr::SetLit(ms.iter().cloned().map(Expr::Ident).collect()),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Int(n) => write!(f, "{n}"),
            Literal::Member(m) => f.write_str(m),
            Literal::Set(ms) => write!(f, "{{{}}}", ms.join(", ")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
    Union,
    Inter,
    Diff,
    In,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "div",
            BinOp::Mod => "mod",
            BinOp::Eq => "=",
            BinOp::Ne => "/=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Implies => "=>",
            BinOp::Union => "\\/",
            BinOp::Inter => "/\\",
            BinOp::Diff => "\\",
            BinOp::In => ":",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Bool(bool),
    Int(i64),
    Ident(String),
    SetLit(Vec<Expr>),
    Card(Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Visits every identifier occurring in the expression.
    pub fn for_each_ident<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Bool(_) | Expr::Int(_) => {}
            Expr::Ident(n) => f(n),
            Expr::SetLit(items) => items.iter().for_each(|e| e.for_each_ident(f)),
            Expr::Card(e) | Expr::Unary(_, e) => e.for_each_ident(f),
            Expr::Binary(_, l, r) => {
                l.for_each_ident(f);
                r.for_each_ident(f);
            }
        }
    }

    /// Replaces identifiers for which `subst` returns a replacement.
    pub fn substitute(&self, subst: &impl Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Bool(_) | Expr::Int(_) => self.clone(),
            Expr::Ident(n) => subst(n).unwrap_or_else(|| self.clone()),
            Expr::SetLit(items) => {
                Expr::SetLit(items.iter().map(|e| e.substitute(subst)).collect())
            }
            Expr::Card(e) => Expr::Card(Box::new(e.substitute(subst))),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.substitute(subst))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.substitute(subst)),
                Box::new(r.substitute(subst)),
            ),
        }
    }
}

/// Refinement intent recorded in a machine header.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Header {
    None,
    Refines(String),
    Views(String),
    Instantiates {
        generic: String,
        bindings: Vec<(String, Literal)>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetDecl {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub value: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub init: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub name: String,
    pub params: Vec<Param>,
    /// Top-level guard conjuncts; empty means `true`.
    pub guard: Vec<Expr>,
    pub actions: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Machine {
    pub name: String,
    pub header: Header,
    pub sets: Vec<SetDecl>,
    pub constants: Vec<ConstDecl>,
    pub variables: Vec<VarDecl>,
    pub invariants: Vec<Expr>,
    pub events: Vec<Event>,
}

impl Machine {
    pub fn set(&self, name: &str) -> Option<&SetDecl> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn event(&self, name: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VarDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<&ConstDecl> {
        self.constants.iter().find(|c| c.name == name)
    }

    /// Constants declared without a value; such machines can only be explored
    /// through an instantiation.
    pub fn unbound_constants(&self) -> Vec<&str> {
        self.constants
            .iter()
            .filter(|c| c.value.is_none())
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn is_generic(&self) -> bool {
        self.constants.iter().any(|c| c.value.is_none())
    }

    /// Set declaring `member`, if any.
    pub fn set_of_member(&self, member: &str) -> Option<&SetDecl> {
        self.sets
            .iter()
            .find(|s| s.members.iter().any(|m| m == member))
    }
}
