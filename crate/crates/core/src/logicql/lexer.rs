use super::LogicError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Token {
    Ident(String),
    Var(String),
    Str(String),
    Int(i64),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Dot,
    ColonColon,
    Implies,
    Question,
    Eof,
}

impl Token {
    pub(crate) fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Var(s) => format!("variable `{s}`"),
            Token::Str(_) => "string".into(),
            Token::Int(i) => format!("integer `{i}`"),
            Token::Number(n) => format!("number `{n}`"),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Dot => "`.`".into(),
            Token::ColonColon => "`::`".into(),
            Token::Implies => "`:-`".into(),
            Token::Question => "`?`".into(),
            Token::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Spanned {
    pub token: Token,
    pub line: usize,
    pub column: usize,
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Spanned>, LogicError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let (mut i, mut line, mut column) = (0, 1, 1);

    let error = |line, column, message: String| LogicError::Parse {
        line,
        column,
        message,
    };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_column) = (line, column);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    column = 1;
                } else {
                    column += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let token = match c {
            '(' => {
                advance(1, &mut i);
                Token::LParen
            }
            ')' => {
                advance(1, &mut i);
                Token::RParen
            }
            ',' => {
                advance(1, &mut i);
                Token::Comma
            }
            '.' => {
                advance(1, &mut i);
                Token::Dot
            }
            '?' => {
                advance(1, &mut i);
                Token::Question
            }
            ':' => match chars.get(i + 1) {
                Some(':') => {
                    advance(2, &mut i);
                    Token::ColonColon
                }
                Some('-') => {
                    advance(2, &mut i);
                    Token::Implies
                }
                _ => {
                    return Err(error(
                        line,
                        column,
                        "expected `::` or `:-` after `:`".into(),
                    ))
                }
            },
            '"' => {
                advance(1, &mut i);
                let mut value = String::new();
                loop {
                    match chars.get(i) {
                        None => {
                            return Err(error(
                                start_line,
                                start_column,
                                "unterminated string".into(),
                            ))
                        }
                        Some('"') => {
                            advance(1, &mut i);
                            break;
                        }
                        Some('\\') => {
                            let escaped = match chars.get(i + 1) {
                                Some('"') => '"',
                                Some('\\') => '\\',
                                Some('n') => '\n',
                                _ => {
                                    return Err(error(
                                        line,
                                        column,
                                        "invalid escape in string".into(),
                                    ))
                                }
                            };
                            value.push(escaped);
                            advance(2, &mut i);
                        }
                        Some(&ch) => {
                            value.push(ch);
                            advance(1, &mut i);
                        }
                    }
                }
                Token::Str(value)
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) =>
            {
                let start = i;
                advance(1, &mut i);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i);
                }
                let fractional = c != '-'
                    && chars.get(i) == Some(&'.')
                    && chars.get(i + 1).is_some_and(char::is_ascii_digit);
                if fractional {
                    advance(1, &mut i);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(1, &mut i);
                    }
                    let literal: String = chars[start..i].iter().collect();
                    Token::Number(literal.parse().map_err(|_| {
                        error(
                            start_line,
                            start_column,
                            format!("invalid number `{literal}`"),
                        )
                    })?)
                } else {
                    let literal: String = chars[start..i].iter().collect();
                    Token::Int(literal.parse().map_err(|_| {
                        error(
                            start_line,
                            start_column,
                            format!("integer `{literal}` out of range"),
                        )
                    })?)
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i);
                }
                let word: String = chars[start..i].iter().collect();
                if c.is_ascii_lowercase() {
                    Token::Ident(word)
                } else {
                    Token::Var(word)
                }
            }
            other => {
                return Err(error(
                    line,
                    column,
                    format!("unexpected character `{other}`"),
                ))
            }
        };
        tokens.push(Spanned {
            token,
            line: start_line,
            column: start_column,
        });
    }
    tokens.push(Spanned {
        token: Token::Eof,
        line,
        column,
    });
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<Token> {
        tokenize(text)
            .unwrap()
            .into_iter()
            .map(|s| s.token)
            .collect()
    }

    #[test]
    fn probabilities_and_terminators() {
        assert_eq!(
            kinds("0.6::p(1). % trailing"),
            [
                Token::Number(0.6),
                Token::ColonColon,
                Token::Ident("p".into()),
                Token::LParen,
                Token::Int(1),
                Token::RParen,
                Token::Dot,
                Token::Eof
            ]
        );
    }

    #[test]
    fn positions_track_lines() {
        let tokens = tokenize("a.\n  b :- c.").unwrap();
        assert_eq!((tokens[2].line, tokens[2].column), (2, 3));
        assert_eq!(tokens[3].token, Token::Implies);
    }

    #[test]
    fn percent_inside_string_is_not_a_comment() {
        assert_eq!(kinds("\"50% off\"")[0], Token::Str("50% off".into()));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            tokenize("a : b"),
            Err(LogicError::Parse {
                line: 1,
                column: 3,
                ..
            })
        ));
        assert!(tokenize("\"open").is_err());
        assert!(tokenize("p(#)").is_err());
    }
}
