//! CoNLL-U ingestion with alignment of parser tokens back to the raw text.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::text::Token;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedToken {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
    pub upos: String,
    /// 0-based head index; `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub tokens: Vec<ParsedToken>,
}

impl ParsedSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Plain tokens (surface + offsets).
    pub fn text_tokens(&self) -> Vec<Token> {
        self.tokens
            .iter()
            .map(|t| Token {
                surface: t.surface.clone(),
                char_start: t.char_start,
                char_end: t.char_end,
            })
            .collect()
    }

    pub fn upos(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.upos.clone()).collect()
    }

    /// Checks for a single root, in-range heads and the absence of cycles.
    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        let mut roots = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            match t.head {
                None => roots += 1,
                Some(h) if h >= n => {
                    return Err(Error::MalformedTree(format!(
                        "token {i} has head {h} beyond {n} tokens"
                    )))
                }
                Some(h) if h == i => {
                    return Err(Error::MalformedTree(format!("token {i} heads itself")))
                }
                Some(_) => {}
            }
        }
        if n > 0 && roots != 1 {
            return Err(Error::MalformedTree(format!(
                "expected exactly one root, found {roots}"
            )));
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = self.tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(Error::MalformedTree(format!("cycle through token {start}")));
                }
            }
        }
        Ok(())
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.tokens.len()];
        for (i, t) in self.tokens.iter().enumerate() {
            if let Some(h) = t.head {
                children[h].push(i);
            }
        }
        children
    }

    /// Largest token index in the subtree rooted at `root` (inclusive).
    /// Assumes a validated tree.
    pub fn subtree_max(&self, root: usize) -> usize {
        let children = self.children();
        let mut stack = vec![root];
        let mut max = root;
        while let Some(node) = stack.pop() {
            max = max.max(node);
            stack.extend_from_slice(&children[node]);
        }
        max
    }
}

struct Row {
    line: usize,
    form: String,
    upos: String,
    head: usize,
    deprel: String,
}

fn parse_row(line_no: usize, line: &str) -> Result<Option<Row>> {
    let cols: Vec<&str> = line.split('\t').collect();
    let err = |message: String| Error::Conllu {
        line: line_no,
        message,
    };
    if cols.len() != 10 {
        return Err(err(format!(
            "expected 10 tab-separated columns, found {}",
            cols.len()
        )));
    }
    // multiword ranges ("3-4") and empty nodes ("5.1") are not word lines
    if cols[0].contains('-') || cols[0].contains('.') {
        return Ok(None);
    }
    cols[0]
        .parse::<usize>()
        .map_err(|_| err(format!("bad token id {:?}", cols[0])))?;
    let head = cols[6]
        .parse::<usize>()
        .map_err(|_| err(format!("bad head {:?}", cols[6])))?;
    Ok(Some(Row {
        line: line_no,
        form: cols[1].to_string(),
        upos: cols[3].to_string(),
        head,
        deprel: cols[7].to_string(),
    }))
}

fn align(id: &str, text: &[char], rows: Vec<Row>) -> Result<ParsedSentence> {
    let n = rows.len();
    let mut cursor = 0;
    let mut tokens = Vec::with_capacity(n);
    for row in rows {
        let surface: Vec<char> = row.form.chars().collect();
        let fail = || Error::Alignment {
            id: id.to_string(),
            token: row.form.clone(),
        };
        if surface.is_empty() {
            return Err(fail());
        }
        while cursor < text.len() && text[cursor].is_whitespace() {
            cursor += 1;
        }
        let found = (cursor..=text.len().saturating_sub(surface.len()))
            .find(|&s| text[s..s + surface.len()] == surface[..])
            .ok_or_else(fail)?;
        let head = match row.head {
            0 => None,
            h if h <= n => Some(h - 1),
            h => {
                return Err(Error::Conllu {
                    line: row.line,
                    message: format!("head {h} out of range for {n} words"),
                })
            }
        };
        tokens.push(ParsedToken {
            surface: row.form,
            char_start: found,
            char_end: found + surface.len() - 1,
            upos: row.upos,
            head,
            deprel: row.deprel,
        });
        cursor = found + surface.len();
    }
    let parsed = ParsedSentence { tokens };
    parsed.validate()?;
    Ok(parsed)
}

/// Parses CoNLL-U text, aligning each sentence (keyed by `# sent_id`) to
/// its raw text.
pub fn parse_conllu(
    input: &str,
    raw_texts: &HashMap<String, String>,
) -> Result<BTreeMap<String, ParsedSentence>> {
    let mut out = BTreeMap::new();
    let mut sent_id: Option<(usize, String)> = None;
    let mut rows: Vec<Row> = Vec::new();

    let mut flush =
        |sent_id: &mut Option<(usize, String)>, rows: &mut Vec<Row>, at: usize| -> Result<()> {
            if rows.is_empty() && sent_id.is_none() {
                return Ok(());
            }
            let (_, id) = sent_id.take().ok_or_else(|| Error::Conllu {
                line: at,
                message: "sentence block without `# sent_id`".into(),
            })?;
            let text = raw_texts
                .get(&id)
                .ok_or_else(|| Error::UnknownSentId { id: id.clone() })?;
            let chars: Vec<char> = text.chars().collect();
            let parsed = align(&id, &chars, std::mem::take(rows))?;
            out.insert(id, parsed);
            Ok(())
        };

    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut sent_id, &mut rows, line_no)?;
        } else if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("sent_id") {
                let id = id.trim_start().trim_start_matches('=').trim();
                sent_id = Some((line_no, id.to_string()));
            }
        } else if let Some(row) = parse_row(line_no, line)? {
            rows.push(row);
        }
    }
    flush(&mut sent_id, &mut rows, input.lines().count() + 1)?;
    Ok(out)
}

pub fn load_conllu(
    path: impl AsRef<Path>,
    raw_texts: &HashMap<String, String>,
) -> Result<BTreeMap<String, ParsedSentence>> {
    let path = path.as_ref();
    let input = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_conllu(&input, raw_texts)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const DREAMWORKS: &str = "# sent_id = fig1
# text = If I were at DreamWorks Animation
1\tIf\tif\tSCONJ\tIN\t_\t3\tmark\t_\t_
2\tI\tI\tPRON\tPRP\t_\t3\tnsubj\t_\t_
3\twere\tbe\tAUX\tVBD\t_\t0\tROOT\t_\t_
4\tat\tat\tADP\tIN\t_\t3\tprep\t_\t_
5\tDreamWorks\tDreamWorks\tPROPN\tNNP\t_\t6\tcompound\t_\t_
6\tAnimation\tAnimation\tPROPN\tNNP\t_\t4\tpobj\t_\t_

";

    fn texts(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn figure_parse_loads() {
        let map = parse_conllu(
            DREAMWORKS,
            &texts(&[("fig1", "If I were at DreamWorks Animation")]),
        )
        .unwrap();
        let p = &map["fig1"];
        assert_eq!(p.len(), 6);
        assert_eq!(p.tokens[0].surface, "If");
        assert_eq!(p.tokens[0].head, Some(2));
        assert_eq!(p.tokens[2].surface, "were");
        assert_eq!(p.tokens[0].deprel, "mark");
        assert_eq!(p.tokens[2].head, None);
        assert_eq!((p.tokens[5].char_start, p.tokens[5].char_end), (24, 32));
        assert_eq!(p.subtree_max(2), 5);
    }

    #[test]
    fn single_token_tree() {
        let src = "# sent_id = g\n1\tGo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n";
        let map = parse_conllu(src, &texts(&[("g", "Go")])).unwrap();
        assert_eq!(map["g"].tokens[0].head, None);
        map["g"].validate().unwrap();
    }

    #[test]
    fn misaligned_surface_errors() {
        let src = "# sent_id = c\n1\tcolor\tcolor\tNOUN\t_\t_\t0\troot\t_\t_\n";
        let err = parse_conllu(src, &texts(&[("c", "colour is nice")])).unwrap_err();
        assert!(
            matches!(err, Error::Alignment { ref id, ref token } if id == "c" && token == "color")
        );
    }

    #[test]
    fn unknown_sent_id_errors() {
        let src = "# sent_id = zz\n1\tGo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(src, &texts(&[])),
            Err(Error::UnknownSentId { .. })
        ));
    }

    #[test]
    fn multiword_ranges_are_skipped() {
        let src = "# sent_id = m\n1-2\twon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\two\twill\tAUX\t_\t_\t3\taux\t_\t_\n2\tn't\tnot\tPART\t_\t_\t3\tadvmod\t_\t_\n3\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n";
        let map = parse_conllu(src, &texts(&[("m", "won't go")])).unwrap();
        let surf: Vec<_> = map["m"]
            .tokens
            .iter()
            .map(|t| (t.surface.as_str(), t.char_start))
            .collect();
        assert_eq!(surf, [("wo", 0), ("n't", 2), ("go", 6)]);
    }

    #[test]
    fn cycles_are_rejected() {
        let src = "# sent_id = y\n1\ta\ta\tX\t_\t_\t2\tdep\t_\t_\n2\tb\tb\tX\t_\t_\t1\tdep\t_\t_\n3\tc\tc\tX\t_\t_\t0\troot\t_\t_\n";
        assert!(matches!(
            parse_conllu(src, &texts(&[("y", "a b c")])),
            Err(Error::MalformedTree(_))
        ));
    }

    #[test]
    fn wrong_column_count() {
        let src = "# sent_id = g\n1\tGo\tgo\n";
        assert!(matches!(
            parse_conllu(src, &texts(&[("g", "Go")])),
            Err(Error::Conllu { line: 2, .. })
        ));
    }
}
