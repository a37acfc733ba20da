//! Keyword, length and multi-group filtering plus the stratified
//! group × news-bias sample.
//!
//! Keyword notation: a leading or trailing hyphen (`-migra-`, `heeb-`) marks a
//! substring pattern, `a(b/c)d` is an alternation expanding to `abd` and
//! `acd` (matched as substrings), and anything else is a whole-word pattern.
//! Whole-word patterns also accept a plural `s`/`es` ending.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive_client::RawComment;
use crate::error::{Error, Result};
use crate::types::{BiasLabel, Group};

pub const MIN_WORDS: usize = 30;
pub const MAX_WORDS: usize = 250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    Word,
    Substring,
    Alternation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub kind: PatternKind,
    pub text: String,
}

impl Pattern {
    /// Parse the hyphen / parenthesis keyword notation.
    pub fn parse(raw: &str) -> Result<Pattern> {
        let t = raw.trim().to_lowercase();
        if t.is_empty() {
            return Err(Error::Parse("empty keyword".into()));
        }
        let hyphenated = t.starts_with('-') || t.ends_with('-');
        let core = t.trim_matches('-').trim().to_string();
        if core.is_empty() {
            return Err(Error::Parse(format!("keyword `{raw}` has no text")));
        }
        let kind = if core.contains('(') {
            PatternKind::Alternation
        } else if hyphenated {
            PatternKind::Substring
        } else {
            PatternKind::Word
        };
        let p = Pattern { kind, text: core };
        if p.kind == PatternKind::Alternation && p.expansions()?.len() < 2 {
            return Err(Error::Parse(format!("alternation `{raw}` expands to fewer than 2 terms")));
        }
        Ok(p)
    }

    /// Concrete strings this pattern stands for.
    pub fn expansions(&self) -> Result<Vec<String>> {
        if self.kind != PatternKind::Alternation {
            return Ok(vec![self.text.clone()]);
        }
        let open = self.text.find('(');
        let close = self.text.find(')');
        match (open, close) {
            (Some(o), Some(c)) if o < c => {
                let prefix = &self.text[..o];
                let suffix = &self.text[c + 1..];
                let alts: Vec<String> = self.text[o + 1..c]
                    .split('/')
                    .map(|a| format!("{prefix}{}{suffix}", a.trim()))
                    .collect();
                Ok(alts)
            }
            _ => Err(Error::Parse(format!("malformed alternation `{}`", self.text))),
        }
    }

    /// `text` must already be lowercased.
    pub fn matches(&self, text: &str) -> bool {
        let expansions = match self.expansions() {
            Ok(e) => e,
            Err(_) => return false,
        };
        match self.kind {
            PatternKind::Substring | PatternKind::Alternation => {
                expansions.iter().any(|e| text.contains(e.as_str()))
            }
            PatternKind::Word => expansions.iter().any(|e| word_match(text, e)),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Whole-word occurrence of `term` (which may contain spaces or hyphens),
/// allowing a trailing `s` or `es`.
fn word_match(text: &str, term: &str) -> bool {
    if term.is_empty() {
        return false;
    }
    let mut search_from = 0;
    while let Some(pos) = text[search_from..].find(term) {
        let start = search_from + pos;
        let end = start + term.len();
        let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let rest = &text[end..];
        let after_ok = [rest, rest.strip_prefix('s').unwrap_or("\0"), rest.strip_prefix("es").unwrap_or("\0")]
            .iter()
            .any(|r| *r != "\0" && r.chars().next().is_none_or(|c| !is_word_char(c)));
        if before_ok && after_ok {
            return true;
        }
        search_from = start + text[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupKeywordSpec {
    pub group: Group,
    pub title_patterns: Vec<Pattern>,
    pub comment_patterns: Vec<Pattern>,
}

impl GroupKeywordSpec {
    pub fn new(group: Group, title: &[&str], comment: &[&str]) -> Result<Self> {
        let parse = |xs: &[&str]| xs.iter().map(|s| Pattern::parse(s)).collect::<Result<Vec<_>>>();
        let spec = GroupKeywordSpec {
            group,
            title_patterns: parse(title)?,
            comment_patterns: parse(comment)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.title_patterns.is_empty() || self.comment_patterns.is_empty() {
            return Err(Error::Config(format!("{}: keyword lists must be nonempty", self.group)));
        }
        for p in self.title_patterns.iter().chain(&self.comment_patterns) {
            if p.text != p.text.to_lowercase() {
                return Err(Error::Config(format!("pattern `{}` is not lowercase", p.text)));
            }
        }
        Ok(())
    }
}

/// The keyword table used to build the released corpus.
pub fn default_keyword_specs() -> Vec<GroupKeywordSpec> {
    let refugee_title = ["refugee", "asylum seeker"];
    let refugee_comment = ["refugee", "asylum seeker", "undocumented", "colonization"];
    let immigrants = ["-migra-", "undocumented", "colonization"];
    let muslims = ["muslim", "arab", "muhammad", "muhammed", "islam", "hijab", "sharia"];
    let jews = ["-jew(i/s)-", "heeb-", "sikey-", "-zionis-", "-semit-"];
    let liberals = ["antifa", "libtard", "communist", "socialist", "leftist", "liberal", "democrat"];
    let conservatives = [
        "altright",
        "alt-right",
        "cuckservative",
        "trumpster",
        "conservative",
        "republican",
    ];
    vec![
        GroupKeywordSpec::new(Group::Immigrants, &immigrants, &immigrants),
        GroupKeywordSpec::new(Group::Refugees, &refugee_title, &refugee_comment),
        GroupKeywordSpec::new(Group::Muslims, &muslims, &muslims),
        GroupKeywordSpec::new(Group::Jews, &jews, &jews),
        GroupKeywordSpec::new(Group::Liberals, &liberals, &liberals),
        GroupKeywordSpec::new(Group::Conservatives, &conservatives, &conservatives),
    ]
    .into_iter()
    .collect::<Result<Vec<_>>>()
    .expect("built-in keyword table is valid")
}

/// Load keyword specs from JSON: `[{"group": "Jews", "title": ["-jew(i/s)-"], "comment": [...]}]`.
pub fn load_keyword_specs(path: &Path) -> Result<Vec<GroupKeywordSpec>> {
    #[derive(Deserialize)]
    struct Entry {
        group: Group,
        title: Vec<String>,
        comment: Vec<String>,
    }
    let entries: Vec<Entry> = serde_json::from_slice(&std::fs::read(path)?)?;
    entries
        .into_iter()
        .map(|e| {
            let t: Vec<&str> = e.title.iter().map(String::as_str).collect();
            let c: Vec<&str> = e.comment.iter().map(String::as_str).collect();
            GroupKeywordSpec::new(e.group, &t, &c)
        })
        .collect()
}

/// Groups whose comment patterns match the body and whose title patterns
/// match the submission title. Case-insensitive.
pub fn match_group(body: &str, title: &str, specs: &[GroupKeywordSpec]) -> BTreeSet<Group> {
    let body = body.to_lowercase();
    let title = title.to_lowercase();
    specs
        .iter()
        .filter(|s| {
            s.comment_patterns.iter().any(|p| p.matches(&body))
                && s.title_patterns.iter().any(|p| p.matches(&title))
        })
        .map(|s| s.group)
        .collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateComment {
    pub comment: RawComment,
    pub group: Group,
    pub bias: BiasLabel,
    pub word_count: usize,
}

impl CandidateComment {
    pub fn validate(&self, specs: &[GroupKeywordSpec]) -> Result<()> {
        if !(MIN_WORDS..=MAX_WORDS).contains(&self.word_count)
            || self.word_count != word_count(&self.comment.body)
        {
            return Err(Error::domain(format!("{}: bad word count", self.comment.id)));
        }
        let groups = match_group(&self.comment.body, &self.comment.submission_title, specs);
        if groups.len() != 1 || !groups.contains(&self.group) {
            return Err(Error::domain(format!("{}: group match is not unique", self.comment.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoGroup,
    MultiGroup,
    TooShort,
    TooLong,
    UnknownBias,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoGroup => "no_group",
            DropReason::MultiGroup => "multi_group",
            DropReason::TooShort => "too_short",
            DropReason::TooLong => "too_long",
            DropReason::UnknownBias => "unknown_bias",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
}

impl DropReport {
    pub fn count(&self, reason: DropReason) -> usize {
        self.dropped.get(&reason).copied().unwrap_or(0)
    }

    /// CSV with header `reason,count`, one row per reason (zeros included).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["reason", "count"])?;
        for r in [
            DropReason::NoGroup,
            DropReason::MultiGroup,
            DropReason::TooShort,
            DropReason::TooLong,
            DropReason::UnknownBias,
        ] {
            wtr.write_record([r.as_str(), &self.count(r).to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Read a `domain,bias` CSV (header row required).
pub fn load_bias_map(path: &Path) -> Result<HashMap<String, BiasLabel>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut map = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let domain = rec.get(0).unwrap_or("").trim().to_lowercase();
        let bias: BiasLabel = rec.get(1).unwrap_or("").parse()?;
        if !domain.is_empty() {
            map.insert(domain, bias);
        }
    }
    Ok(map)
}

/// Keep comments with a unique group match, 30–250 words and a known bias.
pub fn filter_candidates(
    comments: &[RawComment],
    bias_map: &HashMap<String, BiasLabel>,
    specs: &[GroupKeywordSpec],
) -> (Vec<CandidateComment>, DropReport) {
    let mut report = DropReport::default();
    let mut out = Vec::new();
    for c in comments {
        let groups = match_group(&c.body, &c.submission_title, specs);
        let wc = word_count(&c.body);
        let reason = if groups.is_empty() {
            Some(DropReason::NoGroup)
        } else if groups.len() > 1 {
            Some(DropReason::MultiGroup)
        } else if wc < MIN_WORDS {
            Some(DropReason::TooShort)
        } else if wc > MAX_WORDS {
            Some(DropReason::TooLong)
        } else if !bias_map.contains_key(&c.source_domain.to_lowercase()) {
            Some(DropReason::UnknownBias)
        } else {
            None
        };
        match reason {
            Some(r) => *report.dropped.entry(r).or_default() += 1,
            None => {
                let group = *groups.iter().next().unwrap();
                let bias = bias_map[&c.source_domain.to_lowercase()];
                out.push(CandidateComment { comment: c.clone(), group, bias, word_count: wc });
            }
        }
    }
    let unknown = report.count(DropReason::UnknownBias);
    if unknown > 0 {
        warn!("{unknown} comment(s) dropped for an unlisted news source");
    }
    report.kept = out.len();
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellShortfall {
    pub group: Group,
    pub bias: BiasLabel,
    pub available: usize,
    pub requested: usize,
}

/// Draw up to `per_cell` comments from every (group, bias) cell uniformly
/// without replacement. Output is ordered by cell, then by comment id.
pub fn stratified_sample(
    candidates: &[CandidateComment],
    per_cell: usize,
    seed: u64,
) -> Result<(Vec<CandidateComment>, Vec<CellShortfall>)> {
    if per_cell == 0 {
        return Err(Error::Config("per_cell must be >= 1".into()));
    }
    let mut cells: BTreeMap<(Group, BiasLabel), Vec<&CandidateComment>> = BTreeMap::new();
    for c in candidates {
        cells.entry((c.group, c.bias)).or_default().push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut shortfalls = Vec::new();
    for (group, bias) in Group::ALL.into_iter().flat_map(|g| BiasLabel::ALL.map(|b| (g, b))) {
        let mut members = cells.remove(&(group, bias)).unwrap_or_default();
        members.sort_by(|a, b| a.comment.id.cmp(&b.comment.id));
        let take = per_cell.min(members.len());
        if members.len() < per_cell {
            warn!("cell {group}/{bias}: only {} of {per_cell} comments available", members.len());
            shortfalls.push(CellShortfall { group, bias, available: members.len(), requested: per_cell });
        }
        let mut idx = sample(&mut rng, members.len(), take).into_vec();
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| members[i].clone()));
    }
    Ok((out, shortfalls))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, body: &str, title: &str, domain: &str) -> RawComment {
        RawComment {
            id: id.into(),
            body: body.into(),
            created_utc: 0,
            parent_submission_id: "s".into(),
            submission_title: title.into(),
            subreddit: "news".into(),
            source_domain: domain.into(),
        }
    }

    fn words(n: usize, seed_text: &str) -> String {
        let mut v = vec![seed_text.to_string()];
        v.extend((1..n).map(|i| format!("w{i}")));
        v.join(" ")
    }

    #[test]
    fn pattern_notation() {
        let p = Pattern::parse("-jew(i/s)-").unwrap();
        assert_eq!(p.kind, PatternKind::Alternation);
        assert_eq!(p.expansions().unwrap(), vec!["jewi", "jews"]);
        assert_eq!(Pattern::parse("heeb-").unwrap().kind, PatternKind::Substring);
        assert_eq!(Pattern::parse("-migra-").unwrap().kind, PatternKind::Substring);
        let w = Pattern::parse("alt-right").unwrap();
        assert_eq!(w.kind, PatternKind::Word);
        assert_eq!(w.text, "alt-right");
        assert!(Pattern::parse("x(a)y").is_err());
        assert!(Pattern::parse("--").is_err());
    }

    #[test]
    fn word_patterns_respect_boundaries() {
        let arab = Pattern::parse("arab").unwrap();
        assert!(arab.matches("the arab league"));
        assert!(arab.matches("arabs."));
        assert!(!arab.matches("parabola"));
        assert!(!arab.matches("arabic"));
        let seeker = Pattern::parse("asylum seeker").unwrap();
        assert!(seeker.matches("many asylum seekers arrived"));
        let migra = Pattern::parse("-migra-").unwrap();
        assert!(migra.matches("immigration"));
        assert!(migra.matches("emigrants"));
    }

    #[test]
    fn match_group_examples() {
        let specs = default_keyword_specs();
        assert_eq!(
            match_group("refugees deserve help", "Refugee caravan arrives", &specs),
            BTreeSet::from([Group::Refugees])
        );
        assert_eq!(
            match_group(
                "immigration reform and sharia law",
                "Immigration debate turns to Sharia courts",
                &specs
            ),
            BTreeSet::from([Group::Immigrants, Group::Muslims])
        );
        assert!(match_group("the weather is nice", "Local sports results", &specs).is_empty());
    }

    #[test]
    fn title_must_match_same_group() {
        let specs = default_keyword_specs();
        assert!(match_group("muslims are welcome", "Refugee caravan arrives", &specs).is_empty());
        assert_eq!(
            match_group("Jewish voters", "Antisemitism report published", &specs),
            BTreeSet::from([Group::Jews])
        );
    }

    #[test]
    fn filter_length_bounds_and_multigroup() {
        let specs = default_keyword_specs();
        let bias: HashMap<String, BiasLabel> = [("cnn.com".to_string(), BiasLabel::CentreLeft)].into();
        let title = "Refugee and muslim news";
        let comments = vec![
            raw("short", &words(29, "refugees"), title, "cnn.com"),
            raw("edge", &words(30, "refugees"), title, "cnn.com"),
            raw("multi", &words(100, "refugees and muslims"), title, "cnn.com"),
            raw("long", &words(251, "refugees"), title, "cnn.com"),
            raw("nobias", &words(40, "refugees"), title, "unknown.org"),
            raw("nogroup", &words(40, "weather"), title, "cnn.com"),
        ];
        let (kept, report) = filter_candidates(&comments, &bias, &specs);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].comment.id, "edge");
        assert_eq!(kept[0].word_count, 30);
        assert!(kept[0].validate(&specs).is_ok());
        assert_eq!(report.count(DropReason::TooShort), 1);
        assert_eq!(report.count(DropReason::MultiGroup), 1);
        assert_eq!(report.count(DropReason::TooLong), 1);
        assert_eq!(report.count(DropReason::UnknownBias), 1);
        assert_eq!(report.count(DropReason::NoGroup), 1);

        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("reason,count\n"));
        assert!(csv.contains("multi_group,1"));
    }

    fn candidate(id: usize, group: Group, bias: BiasLabel) -> CandidateComment {
        CandidateComment {
            comment: raw(&format!("c{id:05}"), "x", "t", "d"),
            group,
            bias,
            word_count: 30,
        }
    }

    #[test]
    fn stratified_sample_full_grid() {
        let mut cands = Vec::new();
        let mut id = 0;
        for g in Group::ALL {
            for b in BiasLabel::ALL {
                for _ in 0..320 {
                    cands.push(candidate(id, g, b));
                    id += 1;
                }
            }
        }
        let (s, short) = stratified_sample(&cands, 300, 7).unwrap();
        assert_eq!(s.len(), 9000);
        assert!(short.is_empty());
        let (s2, _) = stratified_sample(&cands, 300, 7).unwrap();
        assert_eq!(s, s2);
        let (s3, _) = stratified_sample(&cands, 300, 8).unwrap();
        assert_ne!(s, s3);
    }

    #[test]
    fn stratified_sample_shortfall() {
        let cands = vec![
            candidate(0, Group::Jews, BiasLabel::Left),
            candidate(1, Group::Jews, BiasLabel::Right),
            candidate(2, Group::Jews, BiasLabel::Right),
            candidate(3, Group::Jews, BiasLabel::Right),
        ];
        let (s, short) = stratified_sample(&cands, 2, 1).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(short.len(), 29);
        let thin: Vec<_> = short.iter().filter(|c| c.available > 0).collect();
        assert_eq!(thin.len(), 1);
        assert_eq!((thin[0].group, thin[0].bias, thin[0].available), (Group::Jews, BiasLabel::Left, 1));
        assert!(stratified_sample(&cands, 0, 1).is_err());
    }
}
