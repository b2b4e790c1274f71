//! `pnet:` application links embedded in bench notes.
//!
//! ```text
//! url    := "pnet:" action [ "?" param { "&" param } ]
//! action := "select" | "goto" | "run"
//! param  := name "=" percent-encoded value
//! ```
//!
//! Picker values may contain `&` (intersection). A `&` only separates
//! parameters when it is followed by a known parameter name and `=`, so
//! `pnet:select?picker=/a&/b` keeps the whole expression.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

use crate::network::ModuleId;
use crate::picker::{Picker, PickerSyntaxError};

pub const SCHEME: &str = "pnet:";

const PARAM_NAMES: [&str; 3] = ["picker", "module", "script"];

// Encode only what would change the parse.
const VALUE: &AsciiSet = &CONTROLS.add(b' ').add(b'%').add(b'#').add(b'"').add(b'<').add(b'>');

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    Select,
    Goto,
    Run,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Select => "select",
            Action::Goto => "goto",
            Action::Run => "run",
        }
    }

    fn required(self) -> &'static str {
        match self {
            Action::Select => "picker",
            Action::Goto => "module",
            Action::Run => "script",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UrlError {
    #[error("not a pnet: link")]
    BadScheme,
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("missing `{0}` parameter")]
    MissingParameter(&'static str),
    #[error("bad `{name}` value `{value}`")]
    BadValue { name: String, value: String },
    #[error(transparent)]
    Picker(#[from] PickerSyntaxError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppUrl {
    pub action: Action,
    /// Decoded query parameters.
    pub params: BTreeMap<String, String>,
}

impl AppUrl {
    pub fn picker(&self) -> Option<&str> {
        self.params.get("picker").map(String::as_str)
    }

    pub fn module(&self) -> Option<ModuleId> {
        self.params.get("module").and_then(|m| m.parse().ok()).map(ModuleId)
    }

    pub fn script(&self) -> Option<&str> {
        self.params.get("script").map(String::as_str)
    }
}

fn split_query(query: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, _) in query.match_indices('&') {
        let rest = &query[i + 1..];
        if PARAM_NAMES.iter().any(|n| rest.strip_prefix(n).is_some_and(|r| r.starts_with('='))) {
            parts.push(&query[start..i]);
            start = i + 1;
        }
    }
    parts.push(&query[start..]);
    parts
}

pub fn parse_app_url(text: &str) -> Result<AppUrl, UrlError> {
    let text = text.trim();
    let rest = text.strip_prefix(SCHEME).ok_or(UrlError::BadScheme)?;
    let (action, query) = rest.split_once('?').unwrap_or((rest, ""));
    let action = match action {
        "select" => Action::Select,
        "goto" => Action::Goto,
        "run" => Action::Run,
        other => return Err(UrlError::UnknownAction(other.to_string())),
    };
    let mut params = BTreeMap::new();
    if !query.is_empty() {
        for part in split_query(query) {
            let (name, raw) = part.split_once('=').unwrap_or((part, ""));
            let value = percent_decode_str(raw)
                .decode_utf8()
                .map_err(|_| UrlError::BadValue { name: name.to_string(), value: raw.to_string() })?;
            params.insert(name.to_string(), value.into_owned());
        }
    }
    let required = action.required();
    let value = params.get(required).filter(|v| !v.is_empty()).ok_or(UrlError::MissingParameter(required))?;
    match action {
        Action::Select => {
            Picker::parse(value)?;
        }
        Action::Goto => {
            if value.parse::<u64>().map_or(true, |v| v == 0) {
                return Err(UrlError::BadValue { name: required.to_string(), value: value.clone() });
            }
        }
        Action::Run => {}
    }
    Ok(AppUrl { action, params })
}

impl FromStr for AppUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_app_url(s)
    }
}

impl fmt::Display for AppUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{SCHEME}{}", self.action.as_str())?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            let sep = if i == 0 { '?' } else { '&' };
            write!(f, "{sep}{k}={}", utf8_percent_encode(v, VALUE))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_keeps_picker_verbatim() {
        let u = parse_app_url("pnet:select?picker=/myString/**").unwrap();
        assert_eq!(u.action, Action::Select);
        assert_eq!(u.picker(), Some("/myString/**"));
    }

    #[test]
    fn goto_module() {
        let u = parse_app_url("pnet:goto?module=12").unwrap();
        assert_eq!((u.action, u.module()), (Action::Goto, Some(ModuleId(12))));
        assert!(matches!(parse_app_url("pnet:goto?module=x"), Err(UrlError::BadValue { .. })));
    }

    #[test]
    fn errors() {
        assert_eq!(parse_app_url("http://example.org"), Err(UrlError::BadScheme));
        assert_eq!(parse_app_url("pnet:select"), Err(UrlError::MissingParameter("picker")));
        assert_eq!(parse_app_url("pnet:run?script="), Err(UrlError::MissingParameter("script")));
        assert!(matches!(parse_app_url("pnet:select?picker=/a+("), Err(UrlError::Picker(_))));
        assert!(matches!(parse_app_url("pnet:open?x=1"), Err(UrlError::UnknownAction(_))));
    }

    #[test]
    fn ampersand_inside_picker() {
        let u = parse_app_url("pnet:select?picker=/a&/b&module=3").unwrap();
        assert_eq!(u.picker(), Some("/a&/b"));
        assert_eq!(u.module(), Some(ModuleId(3)));
        let u = parse_app_url("pnet:select?picker=%2Fa%20%26%20/c").unwrap();
        assert_eq!(u.picker(), Some("/a & /c"));
    }

    #[test]
    fn display_round_trips() {
        for s in ["pnet:select?picker=/a/**-/a/b", "pnet:run?script=lib/x.pnsl", "pnet:goto?module=7"] {
            let u = parse_app_url(s).unwrap();
            assert_eq!(parse_app_url(&u.to_string()).unwrap(), u);
        }
    }
}
