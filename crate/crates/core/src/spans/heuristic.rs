//! Dependency-tree antecedent rule: from a subordinating "if" to the
//! rightmost token in the subtree of its head.

use crate::corpus::ParsedSentence;
use crate::error::Result;
use crate::text::CharRange;

fn qualifies(surface: &str, upos: &str, deprel: &str) -> bool {
    surface.to_lowercase() == "if"
        && upos == "SCONJ"
        && (deprel == "mark" || deprel.starts_with("mark:"))
}

/// Character range `[start("if") ..= end(rightmost descendant of head("if"))]`
/// for the first qualifying "if", or `None`.
pub fn extract_if_antecedent(parse: &ParsedSentence) -> Result<Option<CharRange>> {
    parse.validate()?;
    let Some(at) = parse
        .tokens
        .iter()
        .position(|t| qualifies(&t.surface, &t.upos, &t.deprel))
    else {
        return Ok(None);
    };
    let Some(head) = parse.tokens[at].head else {
        return Ok(None);
    };
    let last = parse.subtree_max(head);
    if last < at {
        return Ok(None);
    }
    Ok(Some(CharRange::new(
        parse.tokens[at].char_start,
        parse.tokens[last].char_end,
    )))
}
