//! Minimal `{placeholder}` templating shared by classifier and generator prompts.

use crate::error::{Error, Result};

/// Substitutes every `{name}` in `template` with its value from `vars`.
///
/// `{{` and `}}` are literal braces. An unknown placeholder, an unclosed
/// brace, or a variable that never appears in the template is an error, so
/// a rendered prompt always carries every section it was given.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut used = vec![false; vars.len()];
    let mut chars = template.char_indices().peekable();
    while let Some((pos, c)) = chars.next() {
        match c {
            '{' if matches!(chars.peek(), Some((_, '{'))) => {
                chars.next();
                out.push('{');
            }
            '}' if matches!(chars.peek(), Some((_, '}'))) => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let rest = &template[pos + 1..];
                let end = rest.find('}').ok_or_else(|| {
                    Error::TemplateError(format!("unclosed placeholder at byte {pos}"))
                })?;
                let name = &rest[..end];
                let slot = vars.iter().position(|(k, _)| *k == name).ok_or_else(|| {
                    Error::TemplateError(format!("unresolved placeholder {{{name}}}"))
                })?;
                used[slot] = true;
                out.push_str(vars[slot].1);
                for _ in 0..name.chars().count() + 1 {
                    chars.next();
                }
            }
            '}' => {
                return Err(Error::TemplateError(format!("stray '}}' at byte {pos}")));
            }
            _ => out.push(c),
        }
    }
    if let Some(missing) = vars.iter().zip(&used).find(|(_, u)| !**u) {
        return Err(Error::TemplateError(format!(
            "template never uses placeholder {{{}}}",
            missing.0 .0
        )));
    }
    Ok(out)
}
