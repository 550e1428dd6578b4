//! Problem readers: a native clausal S-expression format and a TPTP CNF subset.
//!
//! Native grammar:
//!
//! ```text
//! (declare-sort NAME)
//! (declare-fun NAME (SORT*) SORT)      ; result sort Bool declares a predicate
//! (assert CLAUSE)
//! (assert-forall ((VAR SORT)*) CLAUSE)
//! CLAUSE := (or LIT*) | LIT
//! LIT    := ATOM | (not ATOM)
//! ATOM   := (= T T) | (NAME T*) | NAME | true | false
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::terms::{
    Clause, Kind, Literal, QeId, QuantifiedExpression, Signature, SortId, TermBank, TermError, TermId, BOOL_SORT,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("lexical error: {0}")]
    Lexical(String),
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("unknown sort `{0}`")]
    UnknownSort(String),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error("non-clausal input: {0}")]
    NonClausal(String),
    #[error("unsupported construct: {0}")]
    Unsupported(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn new(pos: Pos, kind: ParseErrorKind) -> Self {
        ParseError {
            line: pos.line,
            col: pos.col,
            kind,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

/// A parsed problem: its term bank (which owns the signature), the ground
/// clauses and the quantified expressions.
#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub bank: TermBank,
    pub ground_clauses: Vec<Clause>,
    pub quantified: Vec<QuantifiedExpression>,
}

impl Problem {
    pub fn signature(&self) -> &Signature {
        self.bank.signature()
    }

    /// Renders the problem in the native format. Parsing the output yields
    /// the same problem.
    pub fn to_native(&self) -> String {
        let sig = self.bank.signature();
        let mut out = String::new();
        for sort in sig.user_sorts() {
            let _ = writeln!(out, "(declare-sort {})", sig.sort_name(sort));
        }
        for (_, decl) in sig.symbols() {
            let args: Vec<&str> = decl.args.iter().map(|&s| sig.sort_name(s)).collect();
            let _ = writeln!(
                out,
                "(declare-fun {} ({}) {})",
                decl.name,
                args.join(" "),
                sig.sort_name(decl.result)
            );
        }
        for clause in &self.ground_clauses {
            let _ = writeln!(out, "(assert {})", clause.display(&self.bank));
        }
        for qe in &self.quantified {
            let binders: Vec<String> = qe
                .variables
                .iter()
                .map(|&v| {
                    format!(
                        "({} {})",
                        self.bank.var_name(v).unwrap_or("?"),
                        sig.sort_name(self.bank.sort(v))
                    )
                })
                .collect();
            let _ = writeln!(
                out,
                "(assert-forall ({}) {})",
                binders.join(" "),
                qe.body.display(&self.bank)
            );
        }
        out
    }
}

/// Reads a problem from disk, choosing TPTP for `.p`/`.tptp` files and the
/// native format otherwise. The problem is named after the file stem.
pub fn load_problem(path: &Path) -> Result<Problem, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "problem".to_string());
    let tptp = matches!(path.extension().and_then(|e| e.to_str()), Some("p") | Some("tptp"));
    let parsed = if tptp {
        parse_tptp_cnf(&text)
    } else {
        parse_native(&text)
    };
    let mut problem = parsed.map_err(|e| format!("{}:{e}", path.display()))?;
    problem.name = name;
    Ok(problem)
}

// ---------------------------------------------------------------------------
// Native format

#[derive(Debug, Clone)]
enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }
}

fn read_sexps(text: &str) -> Result<Vec<Sexp>, ParseError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut top = Vec::new();
    let mut pos = Pos { line: 1, col: 1 };
    let mut chars = text.chars().peekable();
    while let Some(&ch) = chars.peek() {
        let here = pos;
        match ch {
            '\n' => {
                chars.next();
                pos.line += 1;
                pos.col = 1;
                continue;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    pos.col += 1;
                }
                continue;
            }
            c if c.is_whitespace() => {
                chars.next();
                pos.col += 1;
                continue;
            }
            '(' => {
                chars.next();
                pos.col += 1;
                stack.push((Vec::new(), here));
            }
            ')' => {
                chars.next();
                pos.col += 1;
                let (items, start) = stack
                    .pop()
                    .ok_or_else(|| ParseError::new(here, ParseErrorKind::Lexical("unbalanced `)`".into())))?;
                let list = Sexp::List(items, start);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(list),
                    None => top.push(list),
                }
            }
            _ => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    if !(c.is_alphanumeric() || "_-+=<>!?.*/$@#%^&~'".contains(c)) {
                        return Err(ParseError::new(
                            pos,
                            ParseErrorKind::Lexical(format!("unexpected character `{c}`")),
                        ));
                    }
                    word.push(c);
                    chars.next();
                    pos.col += 1;
                }
                let atom = Sexp::Atom(word, here);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(atom),
                    None => top.push(atom),
                }
            }
        }
    }
    if let Some((_, start)) = stack.pop() {
        return Err(ParseError::new(
            start,
            ParseErrorKind::Lexical("unterminated list".into()),
        ));
    }
    Ok(top)
}

struct NativeReader {
    bank: TermBank,
    ground: Vec<Clause>,
    quantified: Vec<QuantifiedExpression>,
}

impl NativeReader {
    fn sort(&self, s: &Sexp) -> Result<SortId, ParseError> {
        let name = s
            .atom()
            .ok_or_else(|| ParseError::new(s.pos(), ParseErrorKind::Syntax("expected a sort name".into())))?;
        self.bank
            .signature()
            .sort(name)
            .ok_or_else(|| ParseError::new(s.pos(), ParseErrorKind::UnknownSort(name.into())))
    }

    fn command(&mut self, cmd: &Sexp) -> Result<(), ParseError> {
        let syntax = |p: Pos, m: &str| ParseError::new(p, ParseErrorKind::Syntax(m.into()));
        let Sexp::List(items, pos) = cmd else {
            return Err(syntax(cmd.pos(), "expected a command"));
        };
        let head = items.first().and_then(Sexp::atom).unwrap_or("");
        let term_err = |e: TermError| ParseError::new(*pos, e.into());
        match (head, items.len()) {
            ("declare-sort", 2) => {
                let name = items[1].atom().ok_or_else(|| syntax(*pos, "bad sort name"))?;
                self.bank.signature_mut().declare_sort(name).map_err(term_err)?;
            }
            ("declare-fun", 4) => {
                let name = items[1].atom().ok_or_else(|| syntax(*pos, "bad symbol name"))?;
                let Sexp::List(arg_sorts, _) = &items[2] else {
                    return Err(syntax(items[2].pos(), "expected argument sort list"));
                };
                let args = arg_sorts.iter().map(|s| self.sort(s)).collect::<Result<Vec<_>, _>>()?;
                if args.contains(&BOOL_SORT) {
                    return Err(ParseError::new(
                        *pos,
                        ParseErrorKind::NonClausal(format!("`{name}` takes a Bool argument")),
                    ));
                }
                let result = self.sort(&items[3])?;
                self.bank
                    .signature_mut()
                    .declare_symbol(name, args, result)
                    .map_err(term_err)?;
            }
            ("assert", 2) => {
                let clause = self.clause(&items[1], &HashMap::new())?;
                self.add_clause(Vec::new(), clause, *pos)?;
            }
            ("assert-forall", 3) => {
                let Sexp::List(binders, _) = &items[1] else {
                    return Err(syntax(items[1].pos(), "expected binder list"));
                };
                let mut scope = HashMap::new();
                let mut vars = Vec::new();
                for b in binders {
                    let Sexp::List(pair, bpos) = b else {
                        return Err(syntax(b.pos(), "expected (VAR SORT)"));
                    };
                    if pair.len() != 2 {
                        return Err(syntax(*bpos, "expected (VAR SORT)"));
                    }
                    let name = pair[0].atom().ok_or_else(|| syntax(*bpos, "bad variable"))?;
                    let sort = self.sort(&pair[1])?;
                    if sort == BOOL_SORT {
                        return Err(ParseError::new(
                            *bpos,
                            ParseErrorKind::NonClausal("Bool-sorted variable".into()),
                        ));
                    }
                    let v = self.bank.mk_bound_var(name, sort);
                    scope.insert(name.to_string(), v);
                    vars.push(v);
                }
                let clause = self.clause(&items[2], &scope)?;
                self.add_clause(vars, clause, *pos)?;
            }
            _ => return Err(syntax(*pos, &format!("unknown or malformed command `{head}`"))),
        }
        Ok(())
    }

    fn add_clause(&mut self, vars: Vec<TermId>, clause: Clause, pos: Pos) -> Result<(), ParseError> {
        if clause.is_ground(&self.bank) {
            self.bank
                .clause_term(&clause)
                .map_err(|e| ParseError::new(pos, e.into()))?;
            self.ground.push(clause);
        } else {
            let id = QeId(self.quantified.len() as u32);
            let qe = QuantifiedExpression::new(&mut self.bank, id, vars, clause)
                .map_err(|e| ParseError::new(pos, e.into()))?;
            self.quantified.push(qe);
        }
        Ok(())
    }

    fn clause(&mut self, s: &Sexp, scope: &HashMap<String, TermId>) -> Result<Clause, ParseError> {
        if let Sexp::List(items, _) = s {
            if items.first().and_then(Sexp::atom) == Some("or") {
                let lits = items[1..]
                    .iter()
                    .map(|l| self.literal(l, scope))
                    .collect::<Result<Vec<_>, _>>()?;
                return Ok(Clause::new(lits));
            }
        }
        Ok(Clause::new(vec![self.literal(s, scope)?]))
    }

    fn literal(&mut self, s: &Sexp, scope: &HashMap<String, TermId>) -> Result<Literal, ParseError> {
        if let Sexp::List(items, pos) = s {
            if items.first().and_then(Sexp::atom) == Some("not") {
                if items.len() != 2 {
                    return Err(ParseError::new(
                        *pos,
                        ParseErrorKind::Syntax("`not` takes one atom".into()),
                    ));
                }
                return Ok(Literal::neg(self.atom(&items[1], scope)?));
            }
        }
        Ok(Literal::pos(self.atom(s, scope)?))
    }

    fn atom(&mut self, s: &Sexp, scope: &HashMap<String, TermId>) -> Result<TermId, ParseError> {
        let pos = s.pos();
        let head = match s {
            Sexp::Atom(a, _) => a.as_str(),
            Sexp::List(items, _) => items.first().and_then(Sexp::atom).unwrap_or(""),
        };
        match head {
            "true" => return Ok(self.bank.mk_true()),
            "false" => return Ok(self.bank.mk_false()),
            "or" | "not" | "and" | "=>" | "forall" | "exists" => {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::NonClausal(format!("`{head}` inside a literal")),
                ))
            }
            _ => {}
        }
        if let Sexp::List(items, _) = s {
            if head == "=" {
                if items.len() != 3 {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::Syntax("`=` takes two terms".into()),
                    ));
                }
                let a = self.term(&items[1], scope)?;
                let b = self.term(&items[2], scope)?;
                return self
                    .bank
                    .mk_term(Kind::Equality, None, &[a, b])
                    .map_err(|e| ParseError::new(pos, e.into()));
            }
        }
        let t = self.term(s, scope)?;
        if self.bank.sort(t) != BOOL_SORT {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::Syntax(format!("`{head}` is not a predicate")),
            ));
        }
        Ok(t)
    }

    fn term(&mut self, s: &Sexp, scope: &HashMap<String, TermId>) -> Result<TermId, ParseError> {
        let pos = s.pos();
        let (name, args): (&str, &[Sexp]) = match s {
            Sexp::Atom(a, _) => {
                if let Some(&v) = scope.get(a) {
                    return Ok(v);
                }
                (a, &[])
            }
            Sexp::List(items, _) => match items.split_first() {
                Some((Sexp::Atom(h, _), rest)) => (h, rest),
                _ => {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::Syntax("expected an application".into()),
                    ))
                }
            },
        };
        let sym = self
            .bank
            .signature()
            .symbol(name)
            .ok_or_else(|| ParseError::new(pos, ParseErrorKind::UnknownSymbol(name.into())))?;
        let mut children = Vec::with_capacity(args.len());
        for a in args {
            let t = self.term(a, scope)?;
            if self.bank.sort(t) == BOOL_SORT {
                return Err(ParseError::new(
                    a.pos(),
                    ParseErrorKind::NonClausal("formula used as a term".into()),
                ));
            }
            children.push(t);
        }
        self.bank
            .mk_app(sym, &children)
            .map_err(|e| ParseError::new(pos, e.into()))
    }
}

/// Parses the native clausal format.
pub fn parse_native(text: &str) -> Result<Problem, ParseError> {
    let sexps = read_sexps(text)?;
    let mut reader = NativeReader {
        bank: TermBank::new(Signature::default()),
        ground: Vec::new(),
        quantified: Vec::new(),
    };
    for cmd in &sexps {
        reader.command(cmd)?;
    }
    Ok(Problem {
        name: "problem".to_string(),
        bank: reader.bank,
        ground_clauses: reader.ground,
        quantified: reader.quantified,
    })
}

// ---------------------------------------------------------------------------
// TPTP CNF

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Lower(String),
    Upper(String),
    Dollar(String),
    LParen,
    RParen,
    Comma,
    Bar,
    Tilde,
    Eq,
    Neq,
    Dot,
    Other(String),
}

fn tptp_lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, '/');
            advance(&mut i, &mut line, &mut col, '*');
            loop {
                if i >= chars.len() {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::Lexical("unterminated comment".into()),
                    ));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, '*');
                    advance(&mut i, &mut line, &mut col, '/');
                    break;
                }
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            continue;
        }
        let simple = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '|' => Some(Tok::Bar),
            '~' => Some(Tok::Tilde),
            '=' => Some(Tok::Eq),
            '.' => Some(Tok::Dot),
            _ => None,
        };
        if let Some(tok) = simple {
            advance(&mut i, &mut line, &mut col, c);
            out.push((tok, pos));
            continue;
        }
        if c == '!' && chars.get(i + 1) == Some(&'=') {
            advance(&mut i, &mut line, &mut col, '!');
            advance(&mut i, &mut line, &mut col, '=');
            out.push((Tok::Neq, pos));
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            let mut word = String::new();
            advance(&mut i, &mut line, &mut col, c);
            loop {
                let Some(&d) = chars.get(i) else {
                    return Err(ParseError::new(
                        pos,
                        ParseErrorKind::Lexical("unterminated quoted name".into()),
                    ));
                };
                advance(&mut i, &mut line, &mut col, d);
                if d == '\\' {
                    if let Some(&e) = chars.get(i) {
                        word.push(e);
                        advance(&mut i, &mut line, &mut col, e);
                    }
                    continue;
                }
                if d == quote {
                    break;
                }
                word.push(d);
            }
            let word = if quote == '"' { format!("\"{word}\"") } else { word };
            out.push((Tok::Lower(word), pos));
            continue;
        }
        if c.is_alphanumeric() || c == '_' || c == '$' {
            let mut word = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                word.push(chars[i]);
                {
                    let ch = chars[i];
                    advance(&mut i, &mut line, &mut col, ch);
                }
            }
            let tok = if word.starts_with('$') {
                Tok::Dollar(word)
            } else if word.starts_with(|ch: char| ch.is_uppercase() || ch == '_') {
                Tok::Upper(word)
            } else {
                Tok::Lower(word)
            };
            out.push((tok, pos));
            continue;
        }
        advance(&mut i, &mut line, &mut col, c);
        out.push((Tok::Other(c.to_string()), pos));
    }
    Ok(out)
}

struct TptpReader {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    bank: TermBank,
    sort: SortId,
    ground: Vec<Clause>,
    quantified: Vec<QuantifiedExpression>,
}

impl TptpReader {
    fn pos(&self) -> Pos {
        self.toks
            .get(self.at)
            .or(self.toks.last())
            .map(|t| t.1)
            .unwrap_or_default()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.0.clone());
        self.at += 1;
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.pos(), ParseErrorKind::Syntax(msg.into()))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {tok:?}, found {:?}", self.peek())))
        }
    }

    fn name(&mut self) -> Result<String, ParseError> {
        match self.next() {
            Some(Tok::Lower(s)) | Some(Tok::Upper(s)) => Ok(s),
            other => {
                self.at -= 1;
                Err(self.err(format!("expected a name, found {other:?}")))
            }
        }
    }

    fn statement(&mut self) -> Result<(), ParseError> {
        let pos = self.pos();
        let keyword = self.name()?;
        if keyword != "cnf" {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::Unsupported(format!("`{keyword}` statements")),
            ));
        }
        self.expect(Tok::LParen)?;
        self.name()?;
        self.expect(Tok::Comma)?;
        self.name()?;
        self.expect(Tok::Comma)?;
        let mut scope = HashMap::new();
        let mut vars = Vec::new();
        let literals = self.disjunction(&mut scope, &mut vars)?;
        // skip annotations
        let mut depth = 0usize;
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated cnf statement")),
                Some(Tok::LParen) => depth += 1,
                Some(Tok::RParen) if depth == 0 => break,
                Some(Tok::RParen) => depth -= 1,
                _ => {}
            }
            self.at += 1;
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Dot)?;
        let clause = Clause::new(literals);
        if vars.is_empty() {
            self.bank
                .clause_term(&clause)
                .map_err(|e| ParseError::new(pos, e.into()))?;
            self.ground.push(clause);
        } else {
            let id = QeId(self.quantified.len() as u32);
            let qe = QuantifiedExpression::new(&mut self.bank, id, vars, clause)
                .map_err(|e| ParseError::new(pos, e.into()))?;
            self.quantified.push(qe);
        }
        Ok(())
    }

    fn disjunction(
        &mut self,
        scope: &mut HashMap<String, TermId>,
        vars: &mut Vec<TermId>,
    ) -> Result<Vec<Literal>, ParseError> {
        let mut lits = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.at += 1;
            lits.extend(self.disjunction(scope, vars)?);
            self.expect(Tok::RParen)?;
        } else {
            lits.push(self.literal(scope, vars)?);
        }
        while self.peek() == Some(&Tok::Bar) {
            self.at += 1;
            if self.peek() == Some(&Tok::LParen) {
                self.at += 1;
                lits.extend(self.disjunction(scope, vars)?);
                self.expect(Tok::RParen)?;
            } else {
                lits.push(self.literal(scope, vars)?);
            }
        }
        Ok(lits)
    }

    fn literal(&mut self, scope: &mut HashMap<String, TermId>, vars: &mut Vec<TermId>) -> Result<Literal, ParseError> {
        let mut positive = true;
        while self.peek() == Some(&Tok::Tilde) {
            self.at += 1;
            positive = !positive;
        }
        if self.peek() == Some(&Tok::LParen) {
            self.at += 1;
            let mut inner = self.literal(scope, vars)?;
            self.expect(Tok::RParen)?;
            inner.positive = inner.positive == positive;
            return Ok(inner);
        }
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Dollar(d)) if d == "$true" || d == "$false" => {
                let t = if d == "$true" {
                    self.bank.mk_true()
                } else {
                    self.bank.mk_false()
                };
                self.at += 1;
                return Ok(Literal { positive, atom: t });
            }
            Some(Tok::Other(o)) if o == "!" || o == "?" => {
                return Err(ParseError::new(
                    pos,
                    ParseErrorKind::Unsupported("quantifier in cnf".into()),
                ))
            }
            _ => {}
        }
        // predicate atom or the left side of an equation
        let is_var = matches!(self.peek(), Some(Tok::Upper(_)));
        let name = self.name()?;
        let args = if self.peek() == Some(&Tok::LParen) {
            self.args(scope, vars)?
        } else {
            Vec::new()
        };
        if matches!(self.peek(), Some(Tok::Eq) | Some(Tok::Neq)) {
            let lhs = if is_var {
                self.variable(&name, scope, vars)
            } else {
                self.function(&name, args, pos)?
            };
            let negated = self.next() == Some(Tok::Neq);
            let rhs = self.term(scope, vars)?;
            let atom = self
                .bank
                .mk_term(Kind::Equality, None, &[lhs, rhs])
                .map_err(|e| ParseError::new(pos, e.into()))?;
            return Ok(Literal {
                positive: positive != negated,
                atom,
            });
        }
        if is_var {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::NonClausal(format!("variable `{name}` used as a formula")),
            ));
        }
        let sym = match self.bank.signature().symbol(&name) {
            Some(s) => s,
            None => self
                .bank
                .signature_mut()
                .declare_symbol(&name, vec![self.sort; args.len()], BOOL_SORT)
                .map_err(|e| ParseError::new(pos, e.into()))?,
        };
        if self.bank.signature().decl(sym).result != BOOL_SORT {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::Syntax(format!("`{name}` used as both function and predicate")),
            ));
        }
        let atom = self
            .bank
            .mk_app(sym, &args)
            .map_err(|e| ParseError::new(pos, e.into()))?;
        Ok(Literal { positive, atom })
    }

    fn args(&mut self, scope: &mut HashMap<String, TermId>, vars: &mut Vec<TermId>) -> Result<Vec<TermId>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut args = vec![self.term(scope, vars)?];
        while self.peek() == Some(&Tok::Comma) {
            self.at += 1;
            args.push(self.term(scope, vars)?);
        }
        self.expect(Tok::RParen)?;
        Ok(args)
    }

    fn variable(&mut self, name: &str, scope: &mut HashMap<String, TermId>, vars: &mut Vec<TermId>) -> TermId {
        if let Some(&v) = scope.get(name) {
            return v;
        }
        let v = self.bank.mk_bound_var(name, self.sort);
        scope.insert(name.to_string(), v);
        vars.push(v);
        v
    }

    fn function(&mut self, name: &str, args: Vec<TermId>, pos: Pos) -> Result<TermId, ParseError> {
        let sym = match self.bank.signature().symbol(name) {
            Some(s) => s,
            None => self
                .bank
                .signature_mut()
                .declare_symbol(name, vec![self.sort; args.len()], self.sort)
                .map_err(|e| ParseError::new(pos, e.into()))?,
        };
        if self.bank.signature().decl(sym).result == BOOL_SORT {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::Syntax(format!("`{name}` used as both predicate and function")),
            ));
        }
        self.bank.mk_app(sym, &args).map_err(|e| ParseError::new(pos, e.into()))
    }

    fn term(&mut self, scope: &mut HashMap<String, TermId>, vars: &mut Vec<TermId>) -> Result<TermId, ParseError> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Upper(v)) => Ok(self.variable(&v, scope, vars)),
            Some(Tok::Lower(f)) => {
                let args = if self.peek() == Some(&Tok::LParen) {
                    self.args(scope, vars)?
                } else {
                    Vec::new()
                };
                self.function(&f, args, pos)
            }
            other => Err(ParseError::new(
                pos,
                ParseErrorKind::Syntax(format!("expected a term, found {other:?}")),
            )),
        }
    }
}

/// Parses TPTP `cnf(...)` statements into a single-sorted problem over `$i`.
pub fn parse_tptp_cnf(text: &str) -> Result<Problem, ParseError> {
    let toks = tptp_lex(text)?;
    let mut sig = Signature::default();
    let sort = sig.declare_sort("$i").expect("fresh signature");
    let mut reader = TptpReader {
        toks,
        at: 0,
        bank: TermBank::new(sig),
        sort,
        ground: Vec::new(),
        quantified: Vec::new(),
    };
    while reader.peek().is_some() {
        reader.statement()?;
    }
    Ok(Problem {
        name: "problem".to_string(),
        bank: reader.bank,
        ground_clauses: reader.ground,
        quantified: reader.quantified,
    })
}
