use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no code found in response")]
pub struct NoCode;

fn strip_blank_edges(lines: &[&str]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

fn first_fence(lines: &[&str]) -> Option<String> {
    let open = lines.iter().position(|l| l.trim_start().starts_with("```"))?;
    let body = &lines[open + 1..];
    let close = body
        .iter()
        .position(|l| l.trim_start().starts_with("```"))
        .unwrap_or(body.len());
    Some(strip_blank_edges(&body[..close]))
}

/// End line of the brace-balanced region starting at `start`, if the
/// braces open and close again.
fn balanced_end(lines: &[&str], start: usize) -> Option<usize> {
    let mut depth = 0i64;
    let mut opened = false;
    for (offset, line) in lines[start..].iter().enumerate() {
        for c in line.chars() {
            match c {
                '{' => {
                    depth += 1;
                    opened = true;
                }
                '}' => {
                    depth -= 1;
                    if depth < 0 {
                        return None;
                    }
                }
                _ => {}
            }
        }
        if opened && depth == 0 {
            return Some(start + offset);
        }
    }
    None
}

/// The code in a model response: the first fenced block if there is one,
/// else the longest brace-balanced region of at least three lines that
/// starts on a line beginning with a word character.
pub fn extract_code(text: &str) -> Result<String, NoCode> {
    let lines: Vec<&str> = text.lines().collect();
    if let Some(code) = first_fence(&lines) {
        return if code.is_empty() { Err(NoCode) } else { Ok(code) };
    }
    let mut best: Option<(usize, usize)> = None;
    for start in 0..lines.len() {
        let begins_with_word = lines[start]
            .chars()
            .next()
            .is_some_and(|c| c.is_alphanumeric() || c == '_');
        if !begins_with_word {
            continue;
        }
        if let Some(end) = balanced_end(&lines, start) {
            let len = end - start + 1;
            if len >= 3 && best.is_none_or(|(s, e)| len > e - s + 1) {
                best = Some((start, end));
            }
        }
    }
    match best {
        Some((s, e)) => Ok(strip_blank_edges(&lines[s..=e])),
        None => Err(NoCode),
    }
}
