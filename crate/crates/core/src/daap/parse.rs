use super::{AccessVector, Affine, DaapError, IterVar, Loop, Program, RangeExpr, Statement};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Colon,
    Eq,
    Comma,
    DotDot,
    Plus,
    Minus,
    At,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, DaapError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '@' => Some(Tok::At),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line: tl, col: tc });
            i += 1;
            col += 1;
            continue;
        }
        if c == '.' {
            if chars.get(i + 1) == Some(&'.') {
                out.push(Token { tok: Tok::DotDot, line: tl, col: tc });
                i += 2;
                col += 2;
                continue;
            }
            return Err(syntax(tl, tc, "expected `..`"));
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<i64>()
                .map_err(|_| syntax(tl, tc, "integer literal out of range"))?;
            col += i - start;
            out.push(Token { tok: Tok::Int(v), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                col: tc,
            });
            continue;
        }
        return Err(syntax(tl, tc, &format!("unexpected character `{c}`")));
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

fn syntax(line: usize, col: usize, message: &str) -> DaapError {
    DaapError::Syntax {
        line,
        col,
        message: message.to_string(),
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    params: Vec<String>,
    nest: Vec<Loop>,
    statements: Vec<Statement>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, DaapError> {
        let t = self.bump();
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(t.line, t.col, &format!("expected {what}, found {}", describe(&t.tok))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token), DaapError> {
        let t = self.bump();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => Err(syntax(t.line, t.col, &format!("expected {what}, found {}", describe(other)))),
        }
    }

    fn program(&mut self) -> Result<(), DaapError> {
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Eof => return Ok(()),
                Tok::Ident(k) if k == "param" => {
                    self.bump();
                    let (name, _) = self.ident("parameter name")?;
                    self.params.push(name);
                }
                Tok::Ident(k) if k == "loop" => self.loop_block()?,
                other => {
                    return Err(syntax(
                        t.line,
                        t.col,
                        &format!("expected `param` or `loop`, found {}", describe(other)),
                    ))
                }
            }
        }
    }

    fn loop_block(&mut self) -> Result<(), DaapError> {
        self.bump();
        let (name, _) = self.ident("loop variable")?;
        let in_kw = self.bump();
        if in_kw.tok != Tok::Ident("in".into()) {
            return Err(syntax(in_kw.line, in_kw.col, "expected `in`"));
        }
        let lower = self.expr()?;
        self.expect(Tok::DotDot, "`..`")?;
        let upper = self.expr()?;
        self.expect(Tok::LBrace, "`{`")?;
        let level = self.nest.len() + 1;
        self.nest.push(Loop {
            var: IterVar { name, level },
            range: RangeExpr { lower, upper },
        });
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::RBrace => {
                    self.bump();
                    break;
                }
                Tok::Ident(k) if k == "loop" => self.loop_block()?,
                Tok::Ident(_) => self.stmt()?,
                other => {
                    return Err(syntax(
                        t.line,
                        t.col,
                        &format!("expected statement, `loop` or `}}`, found {}", describe(other)),
                    ))
                }
            }
        }
        self.nest.pop();
        Ok(())
    }

    fn in_scope(&self, name: &str) -> bool {
        self.nest.iter().any(|l| l.var.name == name)
    }

    fn expr(&mut self) -> Result<Affine, DaapError> {
        let t = self.bump();
        match t.tok {
            Tok::Int(v) => Ok(Affine::constant(v)),
            Tok::Minus => match self.bump() {
                Token { tok: Tok::Int(v), .. } => Ok(Affine::constant(-v)),
                u => Err(syntax(u.line, u.col, "expected integer after `-`")),
            },
            Tok::Ident(name) => {
                if !self.in_scope(&name) && !self.params.contains(&name) {
                    return Err(DaapError::UndeclaredVariable {
                        name,
                        line: t.line,
                        col: t.col,
                    });
                }
                let sign = match self.peek().tok {
                    Tok::Plus => 1,
                    Tok::Minus => -1,
                    _ => return Ok(Affine::symbol(name, 0)),
                };
                self.bump();
                match self.bump() {
                    Token { tok: Tok::Int(v), .. } => Ok(Affine::symbol(name, sign * v)),
                    u => Err(syntax(
                        u.line,
                        u.col,
                        "bounds must be affine: variable or parameter plus or minus an integer",
                    )),
                }
            }
            other => Err(syntax(t.line, t.col, &format!("expected bound expression, found {}", describe(&other)))),
        }
    }

    fn access(&mut self) -> Result<AccessVector, DaapError> {
        let (array, _) = self.ident("array name")?;
        self.expect(Tok::LBracket, "`[`")?;
        let mut components = Vec::new();
        loop {
            let (v, t) = self.ident("iteration variable")?;
            if !self.in_scope(&v) {
                return Err(DaapError::UndeclaredVariable {
                    name: v,
                    line: t.line,
                    col: t.col,
                });
            }
            components.push(v);
            match self.bump() {
                Token { tok: Tok::Comma, .. } => continue,
                Token { tok: Tok::RBracket, .. } => break,
                u => return Err(syntax(u.line, u.col, "expected `,` or `]`")),
            }
        }
        Ok(AccessVector { array, components })
    }

    fn stmt(&mut self) -> Result<(), DaapError> {
        let (id, _) = self.ident("statement id")?;
        self.expect(Tok::Colon, "`:`")?;
        let output = self.access()?;
        self.expect(Tok::Eq, "`=`")?;
        self.ident("function name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut inputs = Vec::new();
        if self.peek().tok == Tok::RParen {
            self.bump();
        } else {
            loop {
                inputs.push(self.access()?);
                match self.bump() {
                    Token { tok: Tok::Comma, .. } => continue,
                    Token { tok: Tok::RParen, .. } => break,
                    u => return Err(syntax(u.line, u.col, "expected `,` or `)`")),
                }
            }
        }
        let mut outdeg_one = Vec::new();
        while self.peek().tok == Tok::At {
            self.bump();
            let (name, t) = self.ident("annotation")?;
            if name != "outdeg1" {
                return Err(syntax(t.line, t.col, &format!("unknown annotation `@{name}`")));
            }
            self.expect(Tok::LParen, "`(`")?;
            let (array, _) = self.ident("array name")?;
            self.expect(Tok::RParen, "`)`")?;
            outdeg_one.push(array);
        }
        self.statements.push(Statement {
            id,
            loop_nest: self.nest.clone(),
            output,
            inputs,
            outdeg_one,
        });
        Ok(())
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

/// Parses DSL source into a validated [`Program`].
///
/// ```
/// let p = iolab::daap::parse_program(
///     "param N\nloop i in 0..N { S: y[i] = f(x[i]) }",
/// ).unwrap();
/// assert_eq!(p.statements.len(), 1);
/// ```
pub fn parse_program(text: &str) -> Result<Program, DaapError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        params: Vec::new(),
        nest: Vec::new(),
        statements: Vec::new(),
    };
    p.program()?;
    Program::new(p.params, p.statements)
}
