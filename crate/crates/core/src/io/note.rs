//! Bench notes: HTML fragments placed on the workbench.

use crate::network::BenchPos;

use super::url::{parse_app_url, AppUrl, SCHEME};

// Elements that never take a closing tag.
const VOID: [&str; 14] =
    ["area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr"];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchNote {
    pub id: u64,
    pub bench: BenchPos,
    pub html: String,
    /// Parsed `pnet:` links, in body order.
    pub links: Vec<AppUrl>,
    /// Problems found in the body. A flagged note is kept as is.
    pub problems: Vec<String>,
}

impl BenchNote {
    pub fn new(id: u64, bench: BenchPos, html: impl Into<String>) -> BenchNote {
        let html = html.into();
        let (links, problems) = scan(&html);
        BenchNote { id, bench, html, links, problems }
    }

    pub fn is_flagged(&self) -> bool {
        !self.problems.is_empty()
    }
}

fn unescape(s: &str) -> String {
    s.replace("&lt;", "<").replace("&gt;", ">").replace("&quot;", "\"").replace("&#39;", "'").replace("&amp;", "&")
}

/// Value of an attribute inside a start tag body such as `a href="x" id=y`.
fn attribute<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let mut rest = tag;
    while let Some(i) = rest.find(|c: char| c.is_ascii_alphabetic()) {
        rest = &rest[i..];
        let end = rest.find(|c: char| c == '=' || c.is_whitespace()).unwrap_or(rest.len());
        let key = &rest[..end];
        let after = rest[end..].trim_start();
        let Some(after) = after.strip_prefix('=') else {
            rest = &rest[end..];
            continue;
        };
        let after = after.trim_start();
        let (value, next) = match after.chars().next() {
            Some(q @ ('"' | '\'')) => match after[1..].find(q) {
                Some(j) => (&after[1..1 + j], &after[j + 2..]),
                None => (&after[1..], ""),
            },
            _ => {
                let j = after.find(char::is_whitespace).unwrap_or(after.len());
                (&after[..j], &after[j..])
            }
        };
        if key.eq_ignore_ascii_case(name) {
            return Some(value);
        }
        rest = next;
    }
    None
}

fn scan(html: &str) -> (Vec<AppUrl>, Vec<String>) {
    let mut links = Vec::new();
    let mut problems = Vec::new();
    let mut open: Vec<String> = Vec::new();
    let mut rest = html;
    while let Some(i) = rest.find('<') {
        rest = &rest[i + 1..];
        if let Some(comment) = rest.strip_prefix("!--") {
            match comment.find("-->") {
                Some(j) => rest = &comment[j + 3..],
                None => {
                    problems.push("unterminated comment".into());
                    rest = "";
                }
            }
            continue;
        }
        let Some(end) = rest.find('>') else {
            problems.push("unterminated tag".into());
            break;
        };
        let tag = &rest[..end];
        rest = &rest[end + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            let name = name.trim().to_ascii_lowercase();
            match open.pop() {
                Some(top) if top == name => {}
                Some(top) => problems.push(format!("</{name}> closes <{top}>")),
                None => problems.push(format!("stray </{name}>")),
            }
            continue;
        }
        let name_end = tag.find(|c: char| c.is_whitespace() || c == '/').unwrap_or(tag.len());
        let name = tag[..name_end].to_ascii_lowercase();
        if name.is_empty() || name.starts_with('!') {
            continue;
        }
        if let Some(href) = attribute(&tag[name_end..], "href") {
            let href = unescape(href);
            if href.trim_start().starts_with(SCHEME) {
                match parse_app_url(&href) {
                    Ok(u) => links.push(u),
                    Err(e) => problems.push(format!("link `{href}`: {e}")),
                }
            }
        }
        if !tag.ends_with('/') && !VOID.contains(&name.as_str()) {
            open.push(name);
        }
    }
    for name in open.into_iter().rev() {
        problems.push(format!("unclosed <{name}>"));
    }
    (links, problems)
}
