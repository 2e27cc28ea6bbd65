//! Kernel name canonicalization, rule set `cleaner/1`.
//!
//! One pass applies, in order:
//!
//! 1. ASCII lowercasing.
//! 2. Removal of balanced `<...>` template lists and `(...)` parameter lists,
//!    nested or not. An unbalanced opener drops the rest of the name.
//! 3. Removal of address-like tokens (`0x` followed by hex digits, not glued
//!    to a preceding alphanumeric).
//! 4. Removal of a leading `void ` return type and collapse of repeated
//!    `::` separators.
//! 5. Whitespace collapse.
//! 6. Removal of trailing hash suffixes (a final `_`, `.` or `$` segment of
//!    eight or more hex digits containing at least one digit) and of
//!    trailing separators (`_ . : $` and spaces).
//!
//! Passes repeat until the name stops changing, which makes the cleaner
//! idempotent by construction.

use std::sync::LazyLock;

use regex::Regex;

pub const CLEANER_VERSION: &str = "cleaner/1";

static ADDRESS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[^a-z0-9])0x[0-9a-f]+").unwrap());
static HASH_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[_.$]([0-9a-f]{8,})$").unwrap());
static MULTI_SCOPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(::){2,}").unwrap());
static SPACES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

pub fn clean_kernel_name(raw: &str) -> String {
    let mut current = raw.to_string();
    loop {
        let next = clean_pass(&current);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn clean_pass(name: &str) -> String {
    let lower = name.to_ascii_lowercase();
    let stripped = strip_groups(&lower);
    let no_addr = ADDRESS.replace_all(&stripped, "$1");
    let trimmed_lead = no_addr.trim_start();
    let no_void = trimmed_lead.strip_prefix("void ").unwrap_or(trimmed_lead);
    let scoped = MULTI_SCOPE.replace_all(no_void, "::");
    let mut out = SPACES.replace_all(&scoped, " ").trim().to_string();
    loop {
        let before = out.len();
        if let Some(c) = HASH_SUFFIX.captures(&out) {
            if c[1].bytes().any(|b| b.is_ascii_digit()) {
                let cut = c.get(0).unwrap().start();
                out.truncate(cut);
            }
        }
        let kept = out.trim_end_matches(['_', '.', ':', '$', ' ']).len();
        out.truncate(kept);
        if out.len() == before {
            break;
        }
    }
    out
}

fn strip_groups(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth_stack: Vec<char> = Vec::new();
    for ch in s.chars() {
        match ch {
            '<' | '(' => depth_stack.push(ch),
            '>' | ')' => {
                let opener = if ch == '>' { '<' } else { '(' };
                if let Some(pos) = depth_stack.iter().rposition(|&c| c == opener) {
                    depth_stack.truncate(pos);
                }
                // a stray closer outside any group is dropped
            }
            _ if depth_stack.is_empty() => out.push(ch),
            _ => {}
        }
    }
    out
}
