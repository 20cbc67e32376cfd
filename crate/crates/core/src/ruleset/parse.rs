//! Parser for the stratified rule fragment:
//!
//! ```text
//! rule    := head [ ":-" literal { "," literal } ] "."
//! head    := "target" "(" VAR "," class ")" | "ab" N "(" VAR ")"
//! literal := [ "not" ] pred "(" VAR ")"
//! pred    := [a-z][a-z0-9_]* | integer
//! class   := quoted string ('…', `…' or mixed) | identifier | integer
//! ```
//!
//! `%` starts a comment; `%!` comments carry metadata written by the printer.

use std::collections::BTreeMap;

use super::{derived_classes, derived_kernels, is_ab_name, Head, Literal, Predicate, Rule, RuleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Neck,
    Dot,
    Pragma(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str, line0: usize, col0: usize, allow_pragmas: bool) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut line, mut col) = (line0, col0);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        // Only whitespace can contain a newline; every other token stays on one line.
        let step = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
            }
            ' ' | '\t' | '\r' => step(1, &mut i, &mut col),
            '%' => {
                let start = i;
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                let comment: String = chars[start..i].iter().collect();
                col += i - start;
                if let Some(body) = comment.strip_prefix("%!") {
                    if allow_pragmas {
                        tokens.push(Token {
                            tok: Tok::Pragma(body.to_string()),
                            line: tl,
                            column: tc + 2,
                        });
                    }
                }
            }
            '(' | ')' | ',' | '.' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    _ => Tok::Dot,
                };
                tokens.push(Token { tok, line: tl, column: tc });
                step(1, &mut i, &mut col);
            }
            ':' => {
                if chars.get(i + 1) != Some(&'-') {
                    return Err(parse_error(tl, tc, "expected `:-`"));
                }
                tokens.push(Token {
                    tok: Tok::Neck,
                    line: tl,
                    column: tc,
                });
                step(2, &mut i, &mut col);
            }
            '\'' | '`' => {
                let mut value = String::new();
                step(1, &mut i, &mut col);
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(parse_error(tl, tc, "unterminated class label")),
                        Some('\'') | Some('`') => {
                            step(1, &mut i, &mut col);
                            break;
                        }
                        Some('\\') => {
                            let escaped = *chars
                                .get(i + 1)
                                .ok_or_else(|| parse_error(line, col, "dangling escape"))?;
                            value.push(escaped);
                            step(2, &mut i, &mut col);
                        }
                        Some(&ch) => {
                            value.push(ch);
                            step(1, &mut i, &mut col);
                        }
                    }
                }
                tokens.push(Token {
                    tok: Tok::Str(value),
                    line: tl,
                    column: tc,
                });
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                let tok = if c.is_ascii_digit() {
                    if !word.bytes().all(|b| b.is_ascii_digit()) {
                        return Err(parse_error(tl, tc, format!("bad predicate name `{word}`")));
                    }
                    Tok::Int(word)
                } else if c.is_ascii_uppercase() || c == '_' {
                    Tok::Var(word)
                } else {
                    Tok::Ident(word)
                };
                tokens.push(Token { tok, line: tl, column: tc });
            }
            other => return Err(parse_error(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    Ok(tokens)
}

#[derive(Default)]
struct Meta {
    classes: Option<Vec<String>>,
    kernels: Option<Vec<u32>>,
    bindings: BTreeMap<String, u32>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
    rules: Vec<Rule>,
    last_rule_line: Option<usize>,
    meta: Meta,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.end)
    }

    fn next(&mut self, what: &str) -> Result<Token> {
        let (line, column) = self.here();
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| parse_error(line, column, format!("unexpected end of input, expected {what}")))?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let t = self.next(what)?;
        if t.tok != want {
            return Err(parse_error(t.line, t.column, format!("expected {what}")));
        }
        Ok(())
    }

    fn var(&mut self, rule_var: &mut Option<String>) -> Result<()> {
        let t = self.next("a variable")?;
        match t.tok {
            Tok::Var(v) => match rule_var {
                Some(existing) if *existing != v => Err(parse_error(
                    t.line,
                    t.column,
                    format!("variable `{v}` differs from `{existing}` used earlier in the rule"),
                )),
                Some(_) => Ok(()),
                None => {
                    *rule_var = Some(v);
                    Ok(())
                }
            },
            _ => Err(parse_error(t.line, t.column, "expected a variable")),
        }
    }

    fn program(&mut self) -> Result<()> {
        while let Some(t) = self.peek().cloned() {
            if let Tok::Pragma(body) = &t.tok {
                self.pos += 1;
                self.pragma(body, t.line, t.column)?;
            } else {
                self.rule()?;
            }
        }
        Ok(())
    }

    fn rule(&mut self) -> Result<()> {
        let mut var = None;
        let t = self.next("a rule head")?;
        let head = match &t.tok {
            Tok::Ident(name) if name == "target" => {
                self.expect(Tok::LParen, "`(`")?;
                self.var(&mut var)?;
                self.expect(Tok::Comma, "`,`")?;
                let c = self.next("a class label")?;
                let class = match c.tok {
                    Tok::Str(s) | Tok::Ident(s) | Tok::Int(s) => s,
                    _ => return Err(parse_error(c.line, c.column, "expected a class label")),
                };
                if class.is_empty() {
                    return Err(parse_error(c.line, c.column, "empty class label"));
                }
                self.expect(Tok::RParen, "`)`")?;
                Head::Target(class)
            }
            Tok::Ident(name) if is_ab_name(name) => {
                let id = ab_id(name, t.line, t.column)?;
                self.expect(Tok::LParen, "`(`")?;
                self.var(&mut var)?;
                self.expect(Tok::RParen, "`)`")?;
                Head::Ab(id)
            }
            _ => {
                return Err(parse_error(
                    t.line,
                    t.column,
                    "rule head must be `target(X,'class')` or `abN(X)`",
                ))
            }
        };

        let mut body = Vec::new();
        let t = self.next("`:-` or `.`")?;
        let dot_line = match t.tok {
            Tok::Dot => t.line,
            Tok::Neck => loop {
                body.push(self.literal(&mut var)?);
                let sep = self.next("`,` or `.`")?;
                match sep.tok {
                    Tok::Comma => continue,
                    Tok::Dot => break sep.line,
                    _ => return Err(parse_error(sep.line, sep.column, "expected `,` or `.`")),
                }
            },
            _ => return Err(parse_error(t.line, t.column, "expected `:-` or `.`")),
        };
        self.rules.push(Rule::new(head, body));
        self.last_rule_line = Some(dot_line);
        Ok(())
    }

    fn literal(&mut self, var: &mut Option<String>) -> Result<Literal> {
        let mut negated = false;
        if let Some(Token { tok: Tok::Ident(w), .. }) = self.peek() {
            let followed_by_paren = matches!(self.tokens.get(self.pos + 1), Some(Token { tok: Tok::LParen, .. }));
            if w == "not" && !followed_by_paren {
                negated = true;
                self.pos += 1;
            }
        }
        let t = self.next("a predicate")?;
        let predicate = match &t.tok {
            Tok::Int(digits) => Predicate::Kernel(
                digits
                    .parse()
                    .map_err(|_| parse_error(t.line, t.column, "kernel id out of range"))?,
            ),
            Tok::Ident(name) if is_ab_name(name) => Predicate::Ab(ab_id(name, t.line, t.column)?),
            Tok::Ident(name) => {
                if name.chars().any(|c| c.is_ascii_uppercase()) {
                    return Err(parse_error(t.line, t.column, format!("predicate `{name}` must be lowercase")));
                }
                Predicate::Concept(name.clone())
            }
            _ => return Err(parse_error(t.line, t.column, "expected a predicate")),
        };
        self.expect(Tok::LParen, "`(`")?;
        self.var(var)?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(Literal { predicate, negated })
    }

    fn pragma(&mut self, body: &str, line: usize, column: usize) -> Result<()> {
        let toks = lex(body, line, column, false)?;
        let Some(first) = toks.first() else {
            return Ok(());
        };
        let key = match &first.tok {
            Tok::Ident(k) => k.as_str(),
            _ => return Err(parse_error(first.line, first.column, "expected a metadata key")),
        };
        let args = &toks[1..];
        let int = |t: &Token| match &t.tok {
            Tok::Int(d) => d
                .parse::<u64>()
                .map_err(|_| parse_error(t.line, t.column, "number out of range")),
            _ => Err(parse_error(t.line, t.column, "expected a number")),
        };
        match key {
            "classes" => {
                if self.meta.classes.is_some() {
                    return Err(parse_error(line, column, "class list given twice"));
                }
                let mut classes = Vec::new();
                for t in args {
                    match &t.tok {
                        Tok::Str(s) => classes.push(s.clone()),
                        _ => return Err(parse_error(t.line, t.column, "expected a quoted class label")),
                    }
                }
                self.meta.classes = Some(classes);
            }
            "kernels" => {
                if self.meta.kernels.is_some() {
                    return Err(parse_error(line, column, "kernel list given twice"));
                }
                let ids = args
                    .iter()
                    .map(|t| int(t).and_then(|v| u32::try_from(v).map_err(|_| parse_error(t.line, t.column, "kernel id out of range"))))
                    .collect::<Result<Vec<u32>>>()?;
                self.meta.kernels = Some(ids);
            }
            "bind" => {
                let [name_tok, id_tok] = args else {
                    return Err(parse_error(line, column, "expected `bind <label> <kernel>`"));
                };
                let Tok::Ident(name) = &name_tok.tok else {
                    return Err(parse_error(name_tok.line, name_tok.column, "expected a label"));
                };
                let k = u32::try_from(int(id_tok)?)
                    .map_err(|_| parse_error(id_tok.line, id_tok.column, "kernel id out of range"))?;
                if self.meta.bindings.insert(name.clone(), k).is_some() {
                    return Err(parse_error(line, column, format!("label `{name}` bound twice")));
                }
            }
            "coverage" => {
                let [n] = args else {
                    return Err(parse_error(line, column, "expected `coverage <n>`"));
                };
                let value = usize::try_from(int(n)?).map_err(|_| parse_error(n.line, n.column, "out of range"))?;
                match (self.last_rule_line, self.rules.last_mut()) {
                    (Some(l), Some(rule)) if l == line && rule.coverage.is_none() => rule.coverage = Some(value),
                    _ => return Err(parse_error(line, column, "coverage must follow its rule on the same line")),
                }
            }
            other => return Err(parse_error(first.line, first.column, format!("unknown metadata key `{other}`"))),
        }
        Ok(())
    }
}

fn ab_id(name: &str, line: usize, column: usize) -> Result<u32> {
    match name[2..].parse::<u32>() {
        Ok(0) | Err(_) => Err(parse_error(line, column, format!("bad exception id `{name}`"))),
        Ok(n) => Ok(n),
    }
}

/// Parses a rule program; fails with [`Error::Parse`] on syntax errors and
/// [`Error::Stratification`] when exceptions depend on themselves.
pub fn parse_ruleset(text: &str) -> Result<RuleSet> {
    let tokens = lex(text, 1, 1, true)?;
    let end = text
        .lines()
        .enumerate()
        .last()
        .map(|(i, l)| (i + 1, l.chars().count() + 1))
        .unwrap_or((1, 1));
    let mut parser = Parser {
        tokens,
        pos: 0,
        end,
        rules: Vec::new(),
        last_rule_line: None,
        meta: Meta::default(),
    };
    parser.program()?;
    let Parser { rules, meta, .. } = parser;
    let classes = meta.classes.unwrap_or_else(|| derived_classes(&rules));
    let kernels = meta
        .kernels
        .unwrap_or_else(|| derived_kernels(&rules, &meta.bindings));
    RuleSet::new(rules, classes, kernels, meta.bindings)
}
