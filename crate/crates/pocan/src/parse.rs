//! Text formats for models (`poc v1`) and Rabin automata (`dra v1`).
//!
//! Both formats are line oriented; `#` starts a comment. Probabilities are
//! written `INT/INT` or as finite decimals, which convert exactly (`0.4`
//! becomes `2/5`). Identifiers match `[A-Za-z_][A-Za-z0-9_]*`.

use crate::model::{Dra, ModelError, Poc, Rule};
use crate::numeric::Rat;
use num_bigint::BigInt;
use num_traits::Zero;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Parse failure, with the 1-based line and column of the offending token.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl ParseError {
    fn new(line: usize, col: usize, msg: impl Into<String>) -> ParseError {
        ParseError { line, col, msg: msg.into() }
    }

    fn from_model(line: usize, err: ModelError) -> ParseError {
        ParseError { line, col: 1, msg: err.to_string() }
    }
}

/// One whitespace-separated token with its column.
struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut toks = Vec::new();
    let mut rest = body;
    let mut offset = 0;
    loop {
        let trimmed = rest.trim_start();
        offset += rest.len() - trimmed.len();
        if trimmed.is_empty() {
            break;
        }
        let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        toks.push(Tok { text: &trimmed[..end], col: offset + 1 });
        offset += end;
        rest = &trimmed[end..];
    }
    toks
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parse a probability literal: `INT/INT`, a finite decimal, or an integer.
pub fn parse_prob(text: &str) -> Option<Rat> {
    if let Some((n, d)) = text.split_once('/') {
        let numer: BigInt = n.parse().ok()?;
        let denom: BigInt = d.parse().ok()?;
        if denom.is_zero() {
            return None;
        }
        return Some(Rat::new(numer, denom));
    }
    if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int_part: BigInt = if int.is_empty() { BigInt::zero() } else { int.parse().ok()? };
        let frac_part: BigInt = frac.parse().ok()?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        return Some(Rat::new(int_part * &scale + frac_part, scale));
    }
    let int: BigInt = text.parse().ok()?;
    Some(Rat::from(int))
}

/// Parse the `poc v1` model format.
pub fn parse_poc(input: &str) -> Result<Poc, ParseError> {
    let mut names: Vec<String> = Vec::new();
    let mut positions: HashMap<String, usize> = HashMap::new();
    let mut zero_rules: Vec<(usize, Rule)> = Vec::new();
    let mut pos_rules: Vec<(usize, Rule)> = Vec::new();
    let mut labels: HashMap<usize, (String, String)> = HashMap::new();
    let mut header_seen = false;

    for (lineno, raw) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let toks = tokenize(raw);
        if toks.is_empty() {
            continue;
        }
        if !header_seen {
            if toks.len() == 2 && toks[0].text == "poc" && toks[1].text == "v1" {
                header_seen = true;
                continue;
            }
            return Err(ParseError::new(lineno, toks[0].col, "expected header `poc v1`"));
        }
        let lookup = |tok: &Tok| -> Result<usize, ParseError> {
            if !is_ident(tok.text) {
                return Err(ParseError::new(lineno, tok.col, format!("invalid identifier `{}`", tok.text)));
            }
            positions.get(tok.text).copied().ok_or_else(|| {
                ParseError::new(lineno, tok.col, format!("unknown state `{}`", tok.text))
            })
        };
        match toks[0].text {
            "state" => {
                if toks.len() < 2 {
                    return Err(ParseError::new(lineno, toks[0].col, "`state` needs at least one identifier"));
                }
                for tok in &toks[1..] {
                    if !is_ident(tok.text) {
                        return Err(ParseError::new(lineno, tok.col, format!("invalid identifier `{}`", tok.text)));
                    }
                    if positions.insert(tok.text.to_string(), names.len()).is_some() {
                        return Err(ParseError::new(lineno, tok.col, format!("duplicate state `{}`", tok.text)));
                    }
                    names.push(tok.text.to_string());
                }
            }
            kind @ ("zero" | "pos") => {
                if toks.len() != 5 {
                    return Err(ParseError::new(
                        lineno,
                        toks[0].col,
                        format!("`{kind}` rule needs: {kind} <src> <delta> <dst> <prob>"),
                    ));
                }
                let src = lookup(&toks[1])?;
                let delta: i8 = toks[2].text.parse().map_err(|_| {
                    ParseError::new(lineno, toks[2].col, format!("invalid counter change `{}`", toks[2].text))
                })?;
                let dst = lookup(&toks[3])?;
                let prob = parse_prob(toks[4].text).ok_or_else(|| {
                    ParseError::new(lineno, toks[4].col, format!("invalid probability `{}`", toks[4].text))
                })?;
                let rule = Rule { src, delta, dst, prob };
                if kind == "zero" {
                    zero_rules.push((lineno, rule));
                } else {
                    pos_rules.push((lineno, rule));
                }
            }
            "label" => {
                if toks.len() != 4 {
                    return Err(ParseError::new(
                        lineno,
                        toks[0].col,
                        "`label` needs: label <state> zero=<letter> pos=<letter>",
                    ));
                }
                let state = lookup(&toks[1])?;
                let zero = toks[2]
                    .text
                    .strip_prefix("zero=")
                    .ok_or_else(|| ParseError::new(lineno, toks[2].col, "expected `zero=<letter>`"))?;
                let pos = toks[3]
                    .text
                    .strip_prefix("pos=")
                    .ok_or_else(|| ParseError::new(lineno, toks[3].col, "expected `pos=<letter>`"))?;
                if zero.is_empty() || pos.is_empty() {
                    return Err(ParseError::new(lineno, toks[2].col, "letters must be nonempty"));
                }
                if labels.insert(state, (zero.to_string(), pos.to_string())).is_some() {
                    return Err(ParseError::new(lineno, toks[1].col, format!("duplicate label for `{}`", toks[1].text)));
                }
            }
            other => {
                return Err(ParseError::new(lineno, toks[0].col, format!("unknown directive `{other}`")));
            }
        }
    }
    if !header_seen {
        return Err(ParseError::new(1, 1, "expected header `poc v1`"));
    }
    let n = names.len();
    let first_line = zero_rules.first().or(pos_rules.first()).map(|(l, _)| *l).unwrap_or(1);
    let label_vec = (0..n).map(|s| labels.get(&s).cloned()).collect();
    Poc::new(
        names,
        zero_rules.into_iter().map(|(_, r)| r).collect(),
        pos_rules.into_iter().map(|(_, r)| r).collect(),
        label_vec,
    )
    .map_err(|e| ParseError::from_model(first_line, e))
}

/// Parse the `dra v1` Rabin-automaton format.
pub fn parse_dra(input: &str) -> Result<Dra, ParseError> {
    let mut alphabet: Vec<String> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let mut positions: HashMap<String, usize> = HashMap::new();
    let mut init: Option<usize> = None;
    let mut trans: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)> = Vec::new();
    let mut header_seen = false;

    for (lineno, raw) in input.lines().enumerate() {
        let lineno = lineno + 1;
        let toks = tokenize(raw);
        if toks.is_empty() {
            continue;
        }
        if !header_seen {
            if toks.len() == 2 && toks[0].text == "dra" && toks[1].text == "v1" {
                header_seen = true;
                continue;
            }
            return Err(ParseError::new(lineno, toks[0].col, "expected header `dra v1`"));
        }
        let lookup_state = |tok: &Tok| -> Result<usize, ParseError> {
            positions.get(tok.text).copied().ok_or_else(|| {
                ParseError::new(lineno, tok.col, format!("unknown automaton state `{}`", tok.text))
            })
        };
        match toks[0].text {
            "alphabet" => {
                if toks.len() < 2 {
                    return Err(ParseError::new(lineno, toks[0].col, "`alphabet` needs at least one letter"));
                }
                for tok in &toks[1..] {
                    if alphabet.contains(&tok.text.to_string()) {
                        return Err(ParseError::new(lineno, tok.col, format!("duplicate letter `{}`", tok.text)));
                    }
                    alphabet.push(tok.text.to_string());
                }
            }
            "state" => {
                if toks.len() < 2 {
                    return Err(ParseError::new(lineno, toks[0].col, "`state` needs at least one identifier"));
                }
                for tok in &toks[1..] {
                    if !is_ident(tok.text) {
                        return Err(ParseError::new(lineno, tok.col, format!("invalid identifier `{}`", tok.text)));
                    }
                    if positions.insert(tok.text.to_string(), names.len()).is_some() {
                        return Err(ParseError::new(lineno, tok.col, format!("duplicate state `{}`", tok.text)));
                    }
                    names.push(tok.text.to_string());
                }
            }
            "init" => {
                if toks.len() != 2 {
                    return Err(ParseError::new(lineno, toks[0].col, "`init` needs one state"));
                }
                if init.is_some() {
                    return Err(ParseError::new(lineno, toks[0].col, "duplicate `init`"));
                }
                init = Some(lookup_state(&toks[1])?);
            }
            "trans" => {
                if toks.len() != 4 {
                    return Err(ParseError::new(lineno, toks[0].col, "`trans` needs: trans <q> <letter> <q'>"));
                }
                let src = lookup_state(&toks[1])?;
                let letter = alphabet.iter().position(|l| l == toks[2].text).ok_or_else(|| {
                    ParseError::new(lineno, toks[2].col, format!("unknown letter `{}`", toks[2].text))
                })?;
                let dst = lookup_state(&toks[3])?;
                if trans.insert((src, letter), (dst, lineno)).is_some() {
                    return Err(ParseError::new(
                        lineno,
                        toks[1].col,
                        format!("duplicate transition for ({}, {})", toks[1].text, toks[2].text),
                    ));
                }
            }
            "pair" => {
                // pair E <ids...> ; F <ids...>
                if toks.len() < 4 || toks[1].text != "E" {
                    return Err(ParseError::new(lineno, toks[0].col, "`pair` needs: pair E <ids...> ; F <ids...>"));
                }
                let semi = toks.iter().position(|t| t.text == ";").ok_or_else(|| {
                    ParseError::new(lineno, toks[0].col, "`pair` needs a `;` between E and F")
                })?;
                if semi + 1 >= toks.len() || toks[semi + 1].text != "F" {
                    return Err(ParseError::new(lineno, toks[0].col, "`pair` needs an `F` section"));
                }
                let mut e = BTreeSet::new();
                for tok in &toks[2..semi] {
                    e.insert(lookup_state(tok)?);
                }
                let mut f = BTreeSet::new();
                for tok in &toks[semi + 2..] {
                    f.insert(lookup_state(tok)?);
                }
                pairs.push((e, f));
            }
            other => {
                return Err(ParseError::new(lineno, toks[0].col, format!("unknown directive `{other}`")));
            }
        }
    }
    if !header_seen {
        return Err(ParseError::new(1, 1, "expected header `dra v1`"));
    }
    if names.is_empty() {
        return Err(ParseError::new(1, 1, "automaton declares no states"));
    }
    let init = init.ok_or_else(|| ParseError::new(1, 1, "automaton declares no `init`"))?;
    if pairs.is_empty() {
        return Err(ParseError::new(1, 1, "automaton declares no acceptance pair"));
    }
    // Completeness: the automaton must be total.
    let mut table = vec![vec![usize::MAX; alphabet.len()]; names.len()];
    for ((src, letter), (dst, _)) in &trans {
        table[*src][*letter] = *dst;
    }
    for (s, row) in table.iter().enumerate() {
        for (l, &dst) in row.iter().enumerate() {
            if dst == usize::MAX {
                return Err(ParseError::new(
                    1,
                    1,
                    format!("missing transition for ({}, {})", names[s], alphabet[l]),
                ));
            }
        }
    }
    Ok(Dra::new(names, alphabet, init, table, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::render_poc;
    use crate::numeric::rat;

    #[test]
    fn decimal_probabilities_convert_exactly() {
        assert_eq!(parse_prob("0.4").unwrap(), rat(2, 5));
        assert_eq!(parse_prob("1/3").unwrap(), rat(1, 3));
        assert_eq!(parse_prob("1").unwrap(), rat(1, 1));
        assert_eq!(parse_prob("0.125").unwrap(), rat(1, 8));
        assert!(parse_prob("1/0").is_none());
        assert!(parse_prob("0.1e3").is_none());
    }

    #[test]
    fn round_trip_through_render() {
        let text = "poc v1\n\
                    state p q\n\
                    zero p 0 p 1/2\n\
                    zero p 1 q 0.5\n\
                    zero q 1 q 1\n\
                    pos p -1 q 1/3\n\
                    pos p 1 p 2/3\n\
                    pos q -1 p 1 # comment\n\
                    label q zero=done pos=busy\n";
        let m = parse_poc(text).unwrap();
        let again = parse_poc(&render_poc(&m)).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.label(1).unwrap().0, "done");
    }

    #[test]
    fn errors_carry_line_and_column() {
        let err = parse_poc("poc v1\nstate p\nzero p 0 r 1\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert_eq!(err.col, 10);
        assert!(err.msg.contains("unknown state"));

        let err = parse_poc("poc v1\nstate p\nzero p 0 p 1\npos p -2 p 1\n").unwrap_err();
        assert!(err.msg.contains("counter change") || err.msg.contains("not allowed"));

        let err = parse_poc("nonsense\n").unwrap_err();
        assert_eq!(err.line, 1);

        let err = parse_poc("poc v1\nstate p\nzero p 0 p 0.75\npos p -1 p 1\n").unwrap_err();
        assert!(err.msg.contains("sum to 3/4"), "{}", err.msg);
    }

    #[test]
    fn dra_parses_and_checks_totality() {
        let text = "dra v1\n\
                    alphabet r1 other\n\
                    state qa qb\n\
                    init qb\n\
                    trans qa r1 qa\n\
                    trans qa other qb\n\
                    trans qb r1 qa\n\
                    trans qb other qb\n\
                    pair E qb ; F qa\n";
        let d = parse_dra(text).unwrap();
        assert_eq!(d.n_states(), 2);
        assert_eq!(d.init(), d.state_index("qb").unwrap());
        let r1 = d.letter_index("r1").unwrap();
        assert_eq!(d.step(d.init(), r1), d.state_index("qa").unwrap());
        assert_eq!(d.pairs().len(), 1);

        let incomplete = "dra v1\nalphabet a b\nstate q\ninit q\ntrans q a q\npair E ; F q\n";
        assert!(parse_dra(incomplete).unwrap_err().msg.contains("missing transition"));
    }

    #[test]
    fn empty_e_side_is_allowed() {
        let text = "dra v1\nalphabet a\nstate q\ninit q\ntrans q a q\npair E ; F q\n";
        let d = parse_dra(text).unwrap();
        assert!(d.pairs()[0].0.is_empty());
        assert!(d.pairs()[0].1.contains(&0));
    }
}
