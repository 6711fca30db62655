//! Grammar-independent comment scanning.
//!
//! Used wherever comments have to be found in text that may not parse (LLM
//! output, truncated files): `//` and `/* */` outside of string literals.

use std::collections::BTreeMap;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comment {
    pub span: Range<usize>,
    pub block: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CommentScan {
    pub comments: Vec<Comment>,
    /// A `/*` without a matching `*/` (the comment then runs to the end).
    pub unterminated_block: bool,
    /// `{` minus `}` outside comments and strings.
    pub brace_balance: i64,
}

pub fn scan(text: &str) -> CommentScan {
    let bytes = text.as_bytes();
    let mut out = CommentScan::default();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                let mut end = text[i..].find('\n').map_or(bytes.len(), |k| i + k);
                if end > i && bytes[end - 1] == b'\r' {
                    end -= 1;
                }
                out.comments.push(Comment { span: i..end, block: false });
                i = end;
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = match text[i + 2..].find("*/") {
                    Some(k) => i + 2 + k + 2,
                    None => {
                        out.unterminated_block = true;
                        bytes.len()
                    }
                };
                out.comments.push(Comment { span: i..end, block: true });
                i = end;
            }
            q @ (b'"' | b'\'') => {
                i += 1;
                while i < bytes.len() && bytes[i] != q {
                    i += if bytes[i] == b'\\' { 2 } else { 1 };
                }
                i += 1;
            }
            b'{' => {
                out.brace_balance += 1;
                i += 1;
            }
            b'}' => {
                out.brace_balance -= 1;
                i += 1;
            }
            _ => i += 1,
        }
    }
    out
}

/// Comment pieces on each 1-based line, for lines that carry any comment.
/// A block comment spanning several lines contributes its part of each line.
pub fn fragments_by_line(text: &str) -> BTreeMap<usize, Vec<String>> {
    let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for comment in scan(text).comments {
        let first_line = super::line_of(text, comment.span.start);
        for (k, piece) in text[comment.span].split('\n').enumerate() {
            let piece = piece.strip_suffix('\r').unwrap_or(piece);
            if k > 0 && piece.is_empty() {
                continue;
            }
            out.entry(first_line + k).or_default().push(piece.to_string());
        }
    }
    out
}

/// Lines (1-based) that contain at least part of a comment.
pub fn comment_lines(text: &str) -> Vec<usize> {
    fragments_by_line(text).into_keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_comment_spans_lines() {
        let text = "/**\n * a\n * */\nx // y\n";
        let frags = fragments_by_line(text);
        assert_eq!(frags.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(frags[&2], vec![" * a"]);
        assert_eq!(frags[&4], vec!["// y"]);
        assert_eq!(fragments_by_line("a /* b */ c // d")[&1], vec!["/* b */", "// d"]);
    }

    #[test]
    fn strings_hide_comment_markers() {
        let s = scan("x = \"http://a\" '/*' {");
        assert!(s.comments.is_empty());
        assert_eq!(s.brace_balance, 1);
    }

    #[test]
    fn unterminated() {
        let s = scan("a /* b\n c");
        assert!(s.unterminated_block);
        assert_eq!(s.comments.len(), 1);
    }

    #[test]
    fn braces_inside_comments_ignored() {
        assert_eq!(scan("{ /* } */ // }\n}").brace_balance, 0);
    }
}
