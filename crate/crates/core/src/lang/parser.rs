use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

pub const KEYWORDS: &[&str] = &[
    "machine",
    "refines",
    "views",
    "instantiates",
    "with",
    "set",
    "const",
    "var",
    "init",
    "invariant",
    "event",
    "when",
    "then",
    "end",
    "BOOL",
    "of",
    "true",
    "false",
    "not",
    "and",
    "or",
    "div",
    "mod",
    "card",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Token cursor shared by the machine, trace and LTL front ends.
pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    pub fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(src)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, msg: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError::new(t.line, t.col, msg)
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Int(n) => format!("'{n}'"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}', found {}", self.describe())))
        }
    }

    pub fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{sym}', found {}", self.describe())))
        }
    }

    pub fn expect_eof(&mut self) -> Result<(), ParseError> {
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.error(format!("unexpected {} after end", self.describe())))
        }
    }

    pub fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(format!("expected identifier, found {}", self.describe()))),
        }
    }

    fn signed_int(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat_sym("-");
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(if neg { -n } else { n })
            }
            _ => Err(self.error(format!("expected integer, found {}", self.describe()))),
        }
    }

    pub fn type_expr(&mut self) -> Result<TypeExpr, ParseError> {
        if self.eat_kw("BOOL") {
            return Ok(TypeExpr::Bool);
        }
        if self.eat_kw("set") {
            self.expect_kw("of")?;
            return Ok(TypeExpr::SetOf(self.ident()?));
        }
        if matches!(self.peek(), Tok::Int(_)) || self.is_sym("-") {
            let lo = self.signed_int()?;
            self.expect_sym("..")?;
            let hi = self.signed_int()?;
            return Ok(TypeExpr::Range(lo, hi));
        }
        if matches!(self.peek(), Tok::Ident(s) if !is_keyword(s)) {
            return Ok(TypeExpr::Enum(self.ident()?));
        }
        Err(self.error(format!("expected type, found {}", self.describe())))
    }

    pub fn literal(&mut self) -> Result<Literal, ParseError> {
        if self.eat_kw("true") {
            return Ok(Literal::Bool(true));
        }
        if self.eat_kw("false") {
            return Ok(Literal::Bool(false));
        }
        if self.eat_sym("{") {
            let mut members = Vec::new();
            if !self.eat_sym("}") {
                loop {
                    members.push(self.ident()?);
                    if self.eat_sym("}") {
                        break;
                    }
                    self.expect_sym(",")?;
                }
            }
            return Ok(Literal::Set(members));
        }
        if matches!(self.peek(), Tok::Int(_)) || self.is_sym("-") {
            return Ok(Literal::Int(self.signed_int()?));
        }
        if matches!(self.peek(), Tok::Ident(s) if !is_keyword(s)) {
            return Ok(Literal::Member(self.ident()?));
        }
        Err(self.error(format!("expected literal, found {}", self.describe())))
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.or_expr()?;
        if self.eat_sym("=>") {
            let rhs = self.expr()?;
            return Ok(Expr::binary(BinOp::Implies, lhs, rhs));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("not") {
            let e = self.not_expr()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(e)));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Sym("=") => BinOp::Eq,
            Tok::Sym("/=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym(":") => BinOp::In,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                Tok::Sym("\\/") => BinOp::Union,
                Tok::Sym("\\") => BinOp::Diff,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/\\") => BinOp::Inter,
                Tok::Ident(s) if s == "div" => BinOp::Div,
                Tok::Ident(s) if s == "mod" => BinOp::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("-") {
            let e = self.unary_expr()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("{") => {
                self.bump();
                let mut items = Vec::new();
                if !self.eat_sym("}") {
                    loop {
                        items.push(self.expr()?);
                        if self.eat_sym("}") {
                            break;
                        }
                        self.expect_sym(",")?;
                    }
                }
                Ok(Expr::SetLit(items))
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(s) if s == "card" => {
                self.bump();
                self.expect_sym("(")?;
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(Expr::Card(Box::new(e)))
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(Expr::Ident(s))
            }
            _ => Err(self.error(format!("expected expression, found {}", self.describe()))),
        }
    }

    pub fn machine(&mut self) -> Result<Machine, ParseError> {
        self.expect_kw("machine")?;
        let name = self.ident()?;
        let header = if self.eat_kw("refines") {
            Header::Refines(self.ident()?)
        } else if self.eat_kw("views") {
            Header::Views(self.ident()?)
        } else if self.eat_kw("instantiates") {
            let generic = self.ident()?;
            self.expect_kw("with")?;
            let mut bindings = Vec::new();
            loop {
                let c = self.ident()?;
                self.expect_sym("=")?;
                bindings.push((c, self.literal()?));
                if !self.eat_sym(",") {
                    break;
                }
            }
            Header::Instantiates { generic, bindings }
        } else {
            Header::None
        };

        let mut m = Machine {
            name,
            header,
            sets: Vec::new(),
            constants: Vec::new(),
            variables: Vec::new(),
            invariants: Vec::new(),
            events: Vec::new(),
        };
        while self.eat_kw("set") {
            let name = self.ident()?;
            self.expect_sym("=")?;
            self.expect_sym("{")?;
            let mut members = vec![self.ident()?];
            while self.eat_sym(",") {
                members.push(self.ident()?);
            }
            self.expect_sym("}")?;
            m.sets.push(SetDecl { name, members });
        }
        while self.eat_kw("const") {
            let name = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.type_expr()?;
            let value = if self.eat_sym("=") {
                Some(self.literal()?)
            } else {
                None
            };
            m.constants.push(ConstDecl { name, ty, value });
        }
        while self.eat_kw("var") {
            let name = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.type_expr()?;
            self.expect_kw("init")?;
            let init = self.expr()?;
            m.variables.push(VarDecl { name, ty, init });
        }
        if self.eat_kw("invariant") {
            m.invariants.push(self.expr()?);
            while self.eat_sym(";") {
                m.invariants.push(self.expr()?);
            }
        }
        while self.eat_kw("event") {
            m.events.push(self.event()?);
        }
        self.expect_kw("end")?;
        self.expect_eof()?;
        Ok(m)
    }

    fn event(&mut self) -> Result<Event, ParseError> {
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat_sym("(") {
            loop {
                let pname = self.ident()?;
                self.expect_sym(":")?;
                params.push(Param {
                    name: pname,
                    ty: self.type_expr()?,
                });
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        let mut guard = Vec::new();
        if self.eat_kw("when") {
            guard.push(self.expr()?);
            while self.eat_sym("&") {
                guard.push(self.expr()?);
            }
        }
        self.expect_kw("then")?;
        let mut actions = Vec::new();
        loop {
            let var = self.ident()?;
            self.expect_sym(":=")?;
            actions.push((var, self.expr()?));
            if !self.eat_sym(";") {
                break;
            }
        }
        self.expect_kw("end")?;
        Ok(Event {
            name,
            params,
            guard,
            actions,
        })
    }
}

/// Parses a `.vob` machine. Duplicate declarations are accepted here and
/// reported by [`super::well_formed`].
pub fn parse_machine(text: &str) -> Result<Machine, ParseError> {
    Parser::new(text)?.machine()
}

/// Parses a standalone expression, e.g. a glue expression or an assertion.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

pub fn parse_literal(text: &str) -> Result<Literal, ParseError> {
    let mut p = Parser::new(text)?;
    let l = p.literal()?;
    p.expect_eof()?;
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWITCH: &str = "machine Switch var on : BOOL init false \
        event turn_on when on = false then on := true end \
        event turn_off when on = true then on := false end end";

    #[test]
    fn parses_switch() {
        let m = parse_machine(SWITCH).unwrap();
        assert_eq!(m.name, "Switch");
        assert_eq!(m.variables.len(), 1);
        assert_eq!(m.events.len(), 2);
        assert_eq!(
            m.events[0].guard,
            vec![Expr::binary(
                BinOp::Eq,
                Expr::Ident("on".into()),
                Expr::Bool(false)
            )]
        );
    }

    #[test]
    fn truncated_input_reports_position() {
        let err = parse_machine("machine X var v :").unwrap_err();
        assert_eq!((err.line, err.column), (1, 18));
        assert!(err.message.contains("expected type"), "{}", err.message);
    }

    #[test]
    fn duplicates_are_left_to_well_formed() {
        let m =
            parse_machine("machine D var a : BOOL init false var a : BOOL init true end").unwrap();
        assert_eq!(m.variables.len(), 2);
    }

    #[test]
    fn precedence() {
        let e = parse_expr("a + b * c = d or not e and f => g").unwrap();
        let id = |s: &str| Expr::Ident(s.into());
        let sum = Expr::binary(
            BinOp::Add,
            id("a"),
            Expr::binary(BinOp::Mul, id("b"), id("c")),
        );
        let cmp = Expr::binary(BinOp::Eq, sum, id("d"));
        let conj = Expr::binary(
            BinOp::And,
            Expr::Unary(UnOp::Not, Box::new(id("e"))),
            id("f"),
        );
        let expected = Expr::binary(BinOp::Implies, Expr::binary(BinOp::Or, cmp, conj), id("g"));
        assert_eq!(e, expected);
    }

    #[test]
    fn header_and_params() {
        let m = parse_machine(
            "machine C instantiates G with MAX = 3, S = {a, b}\n\
             set S = {a, b}\n\
             const K : -2..2 = -1\n\
             var x : set of S init {}\n\
             event e(n : 1..3, s : S) when n > 0 & s : x then x := x \\/ {s} end end",
        )
        .unwrap();
        match &m.header {
            Header::Instantiates { generic, bindings } => {
                assert_eq!(generic, "G");
                assert_eq!(bindings[1].1, Literal::Set(vec!["a".into(), "b".into()]));
            }
            other => panic!("unexpected header {other:?}"),
        }
        assert_eq!(m.constants[0].ty, TypeExpr::Range(-2, 2));
        assert_eq!(m.constants[0].value, Some(Literal::Int(-1)));
        assert_eq!(m.events[0].params.len(), 2);
        assert_eq!(m.events[0].guard.len(), 2);
    }

    #[test]
    fn keywords_are_not_identifiers() {
        assert!(parse_machine("machine end end").is_err());
        assert!(parse_expr("x := 1").is_err());
    }
}
