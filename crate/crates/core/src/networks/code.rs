use alloc::string::ToString;

use crate::error::{Error, Result};

/// Output channels, cubic kernel size, stride and padding of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LayerCode {
    pub n: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
}

impl LayerCode {
    /// Code of a dense layer producing `n` features.
    pub fn dense(n: usize) -> Self {
        Self { n, k: 1, s: 1, p: 0 }
    }
}

impl core::fmt::Display for LayerCode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "n{}k{}s{}p{}", self.n, self.k, self.s, self.p)
    }
}

impl core::str::FromStr for LayerCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_layer_code(s)
    }
}

fn parse_error(field: char, message: impl Into<alloc::string::String>) -> Error {
    Error::Parse {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parses `n<int>k<int>s<int>p<int>` with the fields in exactly that order.
/// `n`, `k` and `s` must be positive; `p` may be zero.
pub fn parse_layer_code(code: &str) -> Result<LayerCode> {
    let mut rest = code.trim();
    let mut values = [0usize; 4];
    for (slot, field) in ['n', 'k', 's', 'p'].into_iter().enumerate() {
        rest = match rest.strip_prefix(field) {
            Some(r) => r,
            None => {
                let found = rest.chars().next();
                return Err(match found {
                    Some(c) => parse_error(field, alloc::format!("expected `{field}`, found `{c}` in `{code}`")),
                    None => parse_error(field, alloc::format!("missing in `{code}`")),
                });
            }
        };
        let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(parse_error(field, alloc::format!("expected digits after `{field}` in `{code}`")));
        }
        let value: usize = rest[..digits]
            .parse()
            .map_err(|_| parse_error(field, alloc::format!("value out of range in `{code}`")))?;
        if value == 0 && field != 'p' {
            return Err(parse_error(field, "must be positive"));
        }
        values[slot] = value;
        rest = &rest[digits..];
    }
    if !rest.is_empty() {
        return Err(parse_error('p', alloc::format!("trailing `{rest}` in `{code}`")));
    }
    Ok(LayerCode {
        n: values[0],
        k: values[1],
        s: values[2],
        p: values[3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(code: &str) -> alloc::string::String {
        match parse_layer_code(code) {
            Err(Error::Parse { field, .. }) => field,
            other => panic!("{code}: unexpected {other:?}"),
        }
    }

    #[test]
    fn parses_canonical_codes() {
        assert_eq!(parse_layer_code("n256k3s1p1").unwrap(), LayerCode { n: 256, k: 3, s: 1, p: 1 });
        assert_eq!(parse_layer_code("n1k1s1p0").unwrap(), LayerCode::dense(1));
    }

    #[test]
    fn rejects_malformed_codes_naming_the_field() {
        assert_eq!(field_of("k3n256s1p1"), "n");
        assert_eq!(field_of("n256s1k3p1"), "k");
        assert_eq!(field_of("n256k3s1"), "p");
        assert_eq!(field_of("n256k3sxp1"), "s");
        assert_eq!(field_of("n0k3s1p1"), "n");
        assert_eq!(field_of("n2k3s1p1x"), "p");
        assert_eq!(field_of(""), "n");
    }

    #[test]
    fn display_round_trips() {
        let c = LayerCode { n: 64, k: 4, s: 2, p: 1 };
        assert_eq!(parse_layer_code(&alloc::format!("{c}")).unwrap(), c);
    }
}
