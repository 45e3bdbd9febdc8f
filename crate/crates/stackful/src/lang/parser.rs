//! Recursive-descent parser for the parenthesized surface syntax.
//!
//! `(begin e1 .. en)` is parser sugar: it desugars into nested `let`s with
//! fresh ignored binders, so the tree contains no sequencing node.

use std::sync::Arc;

use thiserror::Error;

use super::ast::{AtomicExpr, BinOp, Expr, Lambda, Name, Program, Role, SourceSpan};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("{span}: unexpected token: expected {expected}, found {found}")]
    UnexpectedToken { expected: String, found: String, span: SourceSpan },
    #[error("{span}: unexpected end of input")]
    UnexpectedEof { span: SourceSpan },
    #[error("{span}: {message}")]
    InvalidSyntax { message: String, span: SourceSpan },
}

pub type ParseResult<T> = Result<T, ParseError>;

const KEYWORDS: &[&str] =
    &["let", "if", "send", "begin", "lambda", "input", "register", "set!", "error", "true", "false", "mod"];

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    LParen,
    RParen,
    Int(i64),
    Ident(String),
    Op(&'static str),
    Str(String),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    span: SourceSpan,
}

struct Lexer<'s> {
    src: &'s str,
    file: Arc<str>,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'s> Lexer<'s> {
    fn new(src: &'s str, file: Arc<str>) -> Self {
        Lexer { src, file, pos: 0, line: 1, col: 1 }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn here(&self) -> (u32, u32) {
        (self.line, self.col)
    }

    fn span_from(&self, start: (u32, u32)) -> SourceSpan {
        SourceSpan::new(self.file.clone(), start.0, start.1, self.line, self.col)
    }

    fn tokenize(mut self) -> ParseResult<Vec<Token>> {
        let mut out = Vec::new();
        loop {
            // Skip whitespace and `;` comments.
            loop {
                match self.peek_char() {
                    Some(c) if c.is_whitespace() => {
                        self.bump();
                    }
                    Some(';') => {
                        while let Some(c) = self.bump() {
                            if c == '\n' {
                                break;
                            }
                        }
                    }
                    _ => break,
                }
            }
            let start = self.here();
            let Some(c) = self.peek_char() else { break };
            match c {
                '(' => {
                    self.bump();
                    out.push(Token { kind: TokenKind::LParen, span: self.span_from(start) });
                }
                ')' => {
                    self.bump();
                    out.push(Token { kind: TokenKind::RParen, span: self.span_from(start) });
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            Some('"') => break,
                            Some('\\') => match self.bump() {
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(other @ ('"' | '\\')) => s.push(other),
                                Some(other) => {
                                    return Err(ParseError::InvalidSyntax {
                                        message: format!("unknown escape '\\{other}' in string"),
                                        span: self.span_from(start),
                                    })
                                }
                                None => {
                                    return Err(ParseError::UnexpectedEof {
                                        span: self.span_from(start),
                                    })
                                }
                            },
                            Some(other) => s.push(other),
                            None => {
                                return Err(ParseError::UnexpectedEof { span: self.span_from(start) })
                            }
                        }
                    }
                    out.push(Token { kind: TokenKind::Str(s), span: self.span_from(start) });
                }
                '-' | '0'..='9' => {
                    let mut text = String::new();
                    text.push(self.bump().unwrap());
                    while let Some(d) = self.peek_char() {
                        if d.is_ascii_digit() {
                            text.push(self.bump().unwrap());
                        } else {
                            break;
                        }
                    }
                    let span = self.span_from(start);
                    if text == "-" {
                        out.push(Token { kind: TokenKind::Op("-"), span });
                    } else {
                        let value: i64 = text.parse().map_err(|_| ParseError::InvalidSyntax {
                            message: format!("integer literal out of range: {text}"),
                            span: span.clone(),
                        })?;
                        out.push(Token { kind: TokenKind::Int(value), span });
                    }
                }
                '+' | '*' | '/' => {
                    self.bump();
                    let op = match c {
                        '+' => "+",
                        '*' => "*",
                        _ => "/",
                    };
                    out.push(Token { kind: TokenKind::Op(op), span: self.span_from(start) });
                }
                '=' => {
                    self.bump();
                    out.push(Token { kind: TokenKind::Op("="), span: self.span_from(start) });
                }
                '<' => {
                    self.bump();
                    if self.peek_char() == Some('=') {
                        self.bump();
                        out.push(Token { kind: TokenKind::Op("<="), span: self.span_from(start) });
                    } else {
                        out.push(Token { kind: TokenKind::Op("<"), span: self.span_from(start) });
                    }
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut text = String::new();
                    text.push(self.bump().unwrap());
                    while let Some(d) = self.peek_char() {
                        if d.is_ascii_alphanumeric() || matches!(d, '_' | '!' | '?' | '-') {
                            text.push(self.bump().unwrap());
                        } else {
                            break;
                        }
                    }
                    let span = self.span_from(start);
                    if text == "mod" {
                        out.push(Token { kind: TokenKind::Op("mod"), span });
                    } else {
                        out.push(Token { kind: TokenKind::Ident(text), span });
                    }
                }
                other => {
                    self.bump();
                    return Err(ParseError::InvalidSyntax {
                        message: format!("unexpected character '{other}'"),
                        span: self.span_from(start),
                    });
                }
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    file: Arc<str>,
    seq_counter: u32,
}

impl Parser {
    fn eof_span(&self) -> SourceSpan {
        self.tokens
            .last()
            .map(|t| t.span.clone())
            .unwrap_or_else(|| SourceSpan::new(self.file.clone(), 1, 1, 1, 1))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek2(&self) -> Option<&Token> {
        self.tokens.get(self.pos + 1)
    }

    fn advance(&mut self) -> ParseResult<Token> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(ParseError::UnexpectedEof { span: self.eof_span() })?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> ParseResult<Token> {
        let tok = self.advance()?;
        if &tok.kind == kind {
            Ok(tok)
        } else {
            Err(ParseError::UnexpectedToken {
                expected: what.to_string(),
                found: describe(&tok.kind),
                span: tok.span,
            })
        }
    }

    fn expect_ident(&mut self, what: &str) -> ParseResult<(Name, SourceSpan)> {
        let tok = self.advance()?;
        match tok.kind {
            TokenKind::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                Ok((Arc::from(name.as_str()), tok.span))
            }
            _ => Err(ParseError::UnexpectedToken {
                expected: what.to_string(),
                found: describe(&tok.kind),
                span: tok.span,
            }),
        }
    }

    fn fresh_seq_name(&mut self) -> Name {
        let name = format!("_seq{}", self.seq_counter);
        self.seq_counter += 1;
        Arc::from(name.as_str())
    }

    /// Is the token at `pos` the head of a compound form with the given keyword?
    fn at_form(&self, kw: &str) -> bool {
        matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen))
            && matches!(self.peek2().map(|t| &t.kind), Some(TokenKind::Ident(h)) if h == kw)
    }

    fn parse_expr(&mut self) -> ParseResult<Expr> {
        if self.at_form("let") {
            let open = self.advance()?; // (
            self.advance()?; // let
            let (name, _) = self.expect_ident("binding name")?;
            let bound = self.parse_expr()?;
            let body = self.parse_expr()?;
            let close = self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(Expr::Let {
                name,
                bound: Arc::new(bound),
                body: Arc::new(body),
                span: open.span.to(&close.span),
            });
        }
        if self.at_form("if") {
            let open = self.advance()?;
            self.advance()?;
            let cond = self.parse_atomic()?;
            let then_branch = self.parse_expr()?;
            let else_branch = self.parse_expr()?;
            let close = self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(Expr::If {
                cond,
                then_branch: Arc::new(then_branch),
                else_branch: Arc::new(else_branch),
                span: open.span.to(&close.span),
            });
        }
        if self.at_form("send") {
            let open = self.advance()?;
            self.advance()?;
            let (handler_type, _) = self.expect_ident("handler type")?;
            let mut payload = vec![self.parse_atomic()?];
            while !matches!(self.peek().map(|t| &t.kind), Some(TokenKind::RParen)) {
                payload.push(self.parse_atomic()?);
            }
            let close = self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(Expr::Send { handler_type, payload, span: open.span.to(&close.span) });
        }
        if self.at_form("begin") {
            let open = self.advance()?;
            self.advance()?;
            let mut exprs = vec![self.parse_expr()?];
            while !matches!(self.peek().map(|t| &t.kind), Some(TokenKind::RParen)) {
                exprs.push(self.parse_expr()?);
            }
            let close = self.expect(&TokenKind::RParen, "`)`")?;
            let span = open.span.to(&close.span);
            let mut result = exprs.pop().unwrap();
            while let Some(stmt) = exprs.pop() {
                result = Expr::Let {
                    name: self.fresh_seq_name(),
                    bound: Arc::new(stmt),
                    body: Arc::new(result),
                    span: span.clone(),
                };
            }
            return Ok(result);
        }
        // Application `(f a1 .. an)` where the head is a non-keyword atomic,
        // or a plain atomic expression.
        if matches!(self.peek().map(|t| &t.kind), Some(TokenKind::LParen)) && self.is_application() {
            let open = self.advance()?;
            let func = self.parse_atomic()?;
            let mut args = vec![self.parse_atomic()?];
            while !matches!(self.peek().map(|t| &t.kind), Some(TokenKind::RParen)) {
                args.push(self.parse_atomic()?);
            }
            let close = self.expect(&TokenKind::RParen, "`)`")?;
            return Ok(Expr::Apply { func, args, span: open.span.to(&close.span) });
        }
        Ok(Expr::Atomic(self.parse_atomic()?))
    }

    /// After an LParen: true when the form is a function application rather
    /// than a keyword form, operator form, or `(input)`.
    fn is_application(&self) -> bool {
        match self.peek2().map(|t| &t.kind) {
            Some(TokenKind::Ident(h)) => !KEYWORDS.contains(&h.as_str()),
            Some(TokenKind::LParen) => true, // head is itself a compound atomic
            _ => false,                      // operator, literal, or `)`
        }
    }

    fn parse_atomic(&mut self) -> ParseResult<AtomicExpr> {
        let tok = self.advance()?;
        match tok.kind {
            TokenKind::Int(value) => Ok(AtomicExpr::IntLit { value, span: tok.span }),
            TokenKind::Ident(name) => match name.as_str() {
                "true" => Ok(AtomicExpr::BoolLit { value: true, span: tok.span }),
                "false" => Ok(AtomicExpr::BoolLit { value: false, span: tok.span }),
                kw if KEYWORDS.contains(&kw) => Err(ParseError::InvalidSyntax {
                    message: format!("keyword `{kw}` cannot appear as an atomic expression"),
                    span: tok.span,
                }),
                _ => Ok(AtomicExpr::Var { name: Arc::from(name.as_str()), span: tok.span }),
            },
            TokenKind::LParen => self.parse_atomic_form(tok.span),
            other => Err(ParseError::UnexpectedToken {
                expected: "atomic expression".to_string(),
                found: describe(&other),
                span: tok.span,
            }),
        }
    }

    fn parse_atomic_form(&mut self, open: SourceSpan) -> ParseResult<AtomicExpr> {
        let head = self.advance()?;
        match &head.kind {
            TokenKind::Op(op) => {
                let op = BinOp::from_token(op).expect("lexer produced a known operator");
                let left = Box::new(self.parse_atomic()?);
                let right = Box::new(self.parse_atomic()?);
                let close = self.expect(&TokenKind::RParen, "`)`")?;
                Ok(AtomicExpr::Binary { op, left, right, span: open.to(&close.span) })
            }
            TokenKind::Ident(h) => match h.as_str() {
                "input" => {
                    let close = self.expect(&TokenKind::RParen, "`)`")?;
                    Ok(AtomicExpr::Input { span: open.to(&close.span) })
                }
                "lambda" => {
                    let lambda = self.parse_lambda_tail(open.clone())?;
                    Ok(AtomicExpr::Lambda(Arc::new(lambda)))
                }
                "register" => {
                    let (handler_type, _) = self.expect_ident("handler type")?;
                    let lam_open = self.expect(&TokenKind::LParen, "`(lambda ...)`")?;
                    let lam_kw = self.advance()?;
                    if !matches!(&lam_kw.kind, TokenKind::Ident(k) if k == "lambda") {
                        return Err(ParseError::UnexpectedToken {
                            expected: "`lambda`".to_string(),
                            found: describe(&lam_kw.kind),
                            span: lam_kw.span,
                        });
                    }
                    let lambda = self.parse_lambda_tail(lam_open.span)?;
                    let close = self.expect(&TokenKind::RParen, "`)`")?;
                    Ok(AtomicExpr::Register {
                        handler_type,
                        lambda: Arc::new(lambda),
                        span: open.to(&close.span),
                    })
                }
                "set!" => {
                    let (name, _) = self.expect_ident("assignment target")?;
                    let value = Box::new(self.parse_atomic()?);
                    let close = self.expect(&TokenKind::RParen, "`)`")?;
                    Ok(AtomicExpr::Assign { name, value, span: open.to(&close.span) })
                }
                "error" => {
                    let tok = self.advance()?;
                    let label = match tok.kind {
                        TokenKind::Str(s) => s,
                        other => {
                            return Err(ParseError::UnexpectedToken {
                                expected: "string label".to_string(),
                                found: describe(&other),
                                span: tok.span,
                            })
                        }
                    };
                    let close = self.expect(&TokenKind::RParen, "`)`")?;
                    Ok(AtomicExpr::ErrorExpr { label, span: open.to(&close.span) })
                }
                other => Err(ParseError::InvalidSyntax {
                    message: format!("`{other}` does not start an atomic form"),
                    span: head.span,
                }),
            },
            other => Err(ParseError::UnexpectedToken {
                expected: "operator or atomic form keyword".to_string(),
                found: describe(other),
                span: head.span,
            }),
        }
    }

    /// Parse `(params+) body)` after the `lambda` keyword; `open` is the
    /// span of the opening paren of the lambda form.
    fn parse_lambda_tail(&mut self, open: SourceSpan) -> ParseResult<Lambda> {
        self.expect(&TokenKind::LParen, "`(` before parameter list")?;
        let mut params = vec![self.expect_ident("parameter name")?.0];
        while !matches!(self.peek().map(|t| &t.kind), Some(TokenKind::RParen)) {
            params.push(self.expect_ident("parameter name")?.0);
        }
        self.expect(&TokenKind::RParen, "`)` after parameters")?;
        let body = self.parse_expr()?;
        let close = self.expect(&TokenKind::RParen, "`)`")?;
        Ok(Lambda { params, body: Arc::new(body), span: open.to(&close.span) })
    }
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::LParen => "`(`".to_string(),
        TokenKind::RParen => "`)`".to_string(),
        TokenKind::Int(v) => format!("integer `{v}`"),
        TokenKind::Ident(s) => format!("`{s}`"),
        TokenKind::Op(s) => format!("operator `{s}`"),
        TokenKind::Str(s) => format!("string {s:?}"),
    }
}

/// Parse a whole program from source text.
pub fn parse_program(src: &str, role: Role, name: &str) -> ParseResult<Program> {
    let file: Arc<str> = Arc::from(name);
    let tokens = Lexer::new(src, file.clone()).tokenize()?;
    let mut parser = Parser { tokens, pos: 0, file: file.clone(), seq_counter: 0 };
    let body = parser.parse_expr()?;
    if let Some(extra) = parser.peek() {
        return Err(ParseError::InvalidSyntax {
            message: "trailing tokens after program body".to_string(),
            span: extra.span.clone(),
        });
    }
    Ok(Program { role, body: Arc::new(body), name: file })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::lang::ast::{structurally_equal, AtomicExpr, Expr};
    use crate::lang::render::render_expr;

    fn parse(src: &str) -> Program {
        parse_program(src, Role::Client, "test.sfl").expect("parse")
    }

    fn parse_err(src: &str) -> ParseError {
        parse_program(src, Role::Client, "test.sfl").expect_err("should not parse")
    }

    #[test]
    fn minimal_let_shape() {
        let program = parse("(let x (input) x)");
        let Expr::Let { name, bound, body, .. } = program.body.as_ref() else {
            panic!("expected let, got {:?}", program.body);
        };
        assert_eq!(name.as_ref(), "x");
        assert!(matches!(bound.as_ref(), Expr::Atomic(AtomicExpr::Input { .. })));
        assert!(
            matches!(body.as_ref(), Expr::Atomic(AtomicExpr::Var { name, .. }) if name.as_ref() == "x")
        );
    }

    #[test]
    fn if_with_literal_arms() {
        let program = parse("(if true 1 2)");
        let Expr::If { cond, then_branch, else_branch, .. } = program.body.as_ref() else {
            panic!("expected if");
        };
        assert!(matches!(cond, AtomicExpr::BoolLit { value: true, .. }));
        assert!(
            matches!(then_branch.as_ref(), Expr::Atomic(AtomicExpr::IntLit { value: 1, .. }))
        );
        assert!(
            matches!(else_branch.as_ref(), Expr::Atomic(AtomicExpr::IntLit { value: 2, .. }))
        );
    }

    #[test]
    fn begin_desugars_to_let_chain() {
        let program = parse("(begin 1 2 3)");
        assert_eq!(render_expr(&program.body), "(let _seq1 1 (let _seq0 2 3))");
    }

    #[test]
    fn spans_point_into_the_source() {
        let program = parse("(if true\n    1\n    2)");
        let span = program.body.span();
        assert_eq!(span.file.as_ref(), "test.sfl");
        assert_eq!((span.line, span.col), (1, 1));
        assert_eq!(span.end_line, 3);
        let Expr::If { then_branch, .. } = program.body.as_ref() else { panic!() };
        assert_eq!((then_branch.span().line, then_branch.span().col), (2, 5));
    }

    #[test]
    fn comments_and_whitespace_are_skipped() {
        let program = parse("; leading note\n( + 1 ; inline\n 2 )");
        assert_eq!(render_expr(&program.body), "(+ 1 2)");
    }

    #[test]
    fn error_label_escapes_round_trip() {
        let program = parse(r#"(error "a \"quoted\" label \\ with backslash")"#);
        let rendered = render_expr(&program.body);
        let again = parse(&rendered);
        assert!(structurally_equal(&program.body, &again.body));
    }

    #[test]
    fn keyword_misuse_is_rejected() {
        for src in [
            "(let if 1 2)",       // keyword as binder
            "(lambda () 1)",      // empty parameter list
            "((lambda (x) x))",   // application without arguments
            "(send m)",           // empty payload
            "(begin)",            // empty sequence
            "(input 3)",          // input takes no arguments
            "(+ 1)",              // binary operator arity
            "(register m 1)",     // register requires a lambda literal
            "(set! 3 1)",         // assignment target must be a name
            "(if true 1)",        // missing else arm
            "(let x 1 x) extra",  // trailing tokens
            "(error unquoted)",   // error label must be a string
            "(input",             // unclosed paren
        ] {
            parse_err(src);
        }
    }

    #[test]
    fn parse_errors_carry_position_and_expectation() {
        let err = parse_err("(let 7 1 2)");
        let text = err.to_string();
        assert!(text.contains("test.sfl:1:"), "missing position: {text}");
        assert!(text.contains("expected"), "missing expectation: {text}");
    }

    #[test]
    fn application_head_must_not_be_a_keyword() {
        parse_err("(mod 1 2 3)");
        // ...but operators are fine in atomic position with exactly two operands.
        let program = parse("(mod 7 2)");
        assert!(matches!(
            program.body.as_ref(),
            Expr::Atomic(AtomicExpr::Binary { op: BinOp::Mod, .. })
        ));
    }

    #[test]
    fn fig1_program_shape() {
        let src = std::fs::read_to_string(crate::cli::corpus_dir().join("fig1.sfl")).unwrap();
        let program = parse_program(&src, Role::Server, "fig1.sfl").unwrap();
        assert_eq!(crate::lang::ast::count_ifs(&program.body), 2);
        assert_eq!(crate::lang::ast::count_inputs(&program.body), 2);
    }

    // --- property: parse ∘ render is the identity, structurally ------------

    fn name_strategy() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,4}".prop_filter("keywords are not identifiers", |s| {
            !KEYWORDS.contains(&s.as_str())
        })
    }

    fn atomic_strategy() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            (-999i64..1000).prop_map(|v| v.to_string()),
            Just("true".to_string()),
            Just("false".to_string()),
            name_strategy(),
            Just("(input)".to_string()),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                (
                    prop_oneof![
                        Just("+"),
                        Just("-"),
                        Just("*"),
                        Just("/"),
                        Just("mod"),
                        Just("="),
                        Just("<"),
                        Just("<=")
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, l, r)| format!("({op} {l} {r})")),
                (name_strategy(), inner.clone()).prop_map(|(n, v)| format!("(set! {n} {v})")),
                "[a-zA-Z0-9 #:_-]{0,12}".prop_map(|label| format!("(error {label:?})")),
                (proptest::collection::vec(name_strategy(), 1..3), inner)
                    .prop_map(|(params, body)| format!("(lambda ({}) {body})", params.join(" "))),
            ]
        })
    }

    fn expr_strategy() -> impl Strategy<Value = String> {
        let leaf = atomic_strategy();
        leaf.prop_recursive(3, 32, 3, |inner| {
            let atomic = atomic_strategy().boxed();
            prop_oneof![
                (name_strategy(), inner.clone(), inner.clone())
                    .prop_map(|(n, b, body)| format!("(let {n} {b} {body})")),
                (atomic_strategy(), inner.clone(), inner.clone())
                    .prop_map(|(c, t, e)| format!("(if {c} {t} {e})")),
                (name_strategy(), proptest::collection::vec(atomic.clone(), 1..3))
                    .prop_map(|(m, payload)| format!("(send {m} {})", payload.join(" "))),
                (name_strategy(), atomic.clone(), inner.clone()).prop_map(|(t, param, body)| {
                    // Register sites: a lambda literal is required in source.
                    format!("(let r (register {t} (lambda (p) {body})) {param})")
                }),
                proptest::collection::vec(inner, 2..4)
                    .prop_map(|exprs| format!("(begin {})", exprs.join(" "))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(96))]

        #[test]
        fn parse_render_round_trip(src in expr_strategy()) {
            let first = parse_program(&src, Role::Client, "prop.sfl").expect("generated source parses");
            let rendered = render_expr(&first.body);
            let second = parse_program(&rendered, Role::Client, "prop.sfl").expect("rendered source parses");
            prop_assert!(structurally_equal(&first.body, &second.body), "{src} vs {rendered}");
            prop_assert_eq!(render_expr(&second.body), rendered);
        }
    }
}
