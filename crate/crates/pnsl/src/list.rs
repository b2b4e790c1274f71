//! Lists are strings: elements separated by blanks, with braces around any
//! element that would otherwise split or substitute.

/// Splits a list string. Unbalanced braces or quotes are reported as an error.
pub fn split(s: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let Some(&c) = chars.peek() else { break };
        let mut item = String::new();
        match c {
            '{' => {
                chars.next();
                let mut depth = 1;
                loop {
                    match chars.next() {
                        None => return Err("unmatched open brace in list".into()),
                        Some('\\') => {
                            item.push('\\');
                            if let Some(n) = chars.next() {
                                item.push(n);
                            }
                        }
                        Some('{') => {
                            depth += 1;
                            item.push('{');
                        }
                        Some('}') => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                            item.push('}');
                        }
                        Some(c) => item.push(c),
                    }
                }
                if chars.peek().is_some_and(|c| !c.is_whitespace()) {
                    return Err("list element in braces followed by extra characters".into());
                }
            }
            '"' => {
                chars.next();
                loop {
                    match chars.next() {
                        None => return Err("unmatched quote in list".into()),
                        Some('\\') => {
                            if let Some(n) = chars.next() {
                                item.push(n);
                            }
                        }
                        Some('"') => break,
                        Some(c) => item.push(c),
                    }
                }
            }
            _ => {
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() {
                        break;
                    }
                    chars.next();
                    if c == '\\' {
                        if let Some(n) = chars.next() {
                            item.push(n);
                        }
                    } else {
                        item.push(c);
                    }
                }
            }
        }
        out.push(item);
    }
    Ok(out)
}

fn balanced(s: &str) -> bool {
    let mut depth = 0i32;
    let mut esc = false;
    for c in s.chars() {
        if esc {
            esc = false;
            continue;
        }
        match c {
            '\\' => esc = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0 && !esc
}

/// Quotes one element so that [`split`] returns it unchanged.
pub fn quote(item: &str) -> String {
    if !item.is_empty() && !item.chars().any(|c| c.is_whitespace() || "{}\"\\[]$;".contains(c)) {
        return item.to_string();
    }
    if balanced(item) && !item.ends_with('\\') {
        return format!("{{{item}}}");
    }
    let mut out = String::new();
    for c in item.chars() {
        if c.is_whitespace() || "{}\"\\[]$;".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

pub fn join<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> String {
    let mut out = String::new();
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&quote(item.as_ref()));
    }
    out
}
