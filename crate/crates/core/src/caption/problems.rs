use std::collections::BTreeMap;
use std::path::Path;

use super::DomainKind;
use crate::error::{Error, Result};

/// Text of the built-in lists, in the format read by [`ProblemLists::parse`].
pub const DEFAULT_PROBLEM_LISTS: &str = include_str!("problem_lists.ini");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemList {
    pub domain: DomainKind,
    pub questions: Vec<String>,
    pub system_prompt: String,
    pub retry_prompt: String,
}

/// One list per domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemLists {
    lists: BTreeMap<DomainKind, ProblemList>,
}

impl Default for ProblemLists {
    fn default() -> Self {
        Self::parse(DEFAULT_PROBLEM_LISTS).expect("built-in problem lists parse")
    }
}

impl ProblemLists {
    /// Parses `[domain]` sections of `key = value` lines. `#` starts a
    /// comment line. Every domain must appear with at least one question.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lists: BTreeMap<DomainKind, ProblemList> = BTreeMap::new();
        let mut current: Option<DomainKind> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| Error::Parse { line: n + 1, message };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let domain: DomainKind = name.trim().parse().map_err(err)?;
                if lists.contains_key(&domain) {
                    return Err(err(format!("duplicate section [{domain}]")));
                }
                lists.insert(
                    domain,
                    ProblemList {
                        domain,
                        questions: Vec::new(),
                        system_prompt: String::new(),
                        retry_prompt: String::new(),
                    },
                );
                current = Some(domain);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let domain = current.ok_or_else(|| err("entry before any [section]".into()))?;
            let list = lists.get_mut(&domain).expect("section inserted");
            let value = value.trim().to_string();
            match key.trim() {
                "question" => list.questions.push(value),
                "system" => list.system_prompt = value,
                "retry" => list.retry_prompt = value,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        for domain in DomainKind::ALL {
            match lists.get(&domain) {
                None => return Err(Error::Config(format!("problem lists lack a [{domain}] section"))),
                Some(l) if l.questions.is_empty() => {
                    return Err(Error::Config(format!("[{domain}] has no questions")))
                }
                _ => {}
            }
        }
        Ok(Self { lists })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, domain: DomainKind) -> &ProblemList {
        &self.lists[&domain]
    }
}
