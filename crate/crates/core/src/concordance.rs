//! Preprint to journal-article concordance.
//!
//! Stage one trusts author-supplied journal references that resolve to a
//! corpus article. Stage two scores the remaining preprint/article pairs that
//! share an author surname block, keeps those above both thresholds, and
//! hands them to an [`AssignmentStrategy`] for one-to-one assignment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprintRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal_ref: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    ExactRef,
    Fuzzy,
}

impl MatchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMethod::ExactRef => "exact_ref",
            MatchMethod::Fuzzy => "fuzzy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceMatch {
    pub preprint_id: String,
    pub article_id: String,
    pub method: MatchMethod,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchConfig {
    pub title_threshold: f64,
    pub author_threshold: f64,
    pub require_first_author: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            title_threshold: 0.75,
            author_threshold: 0.5,
            require_first_author: true,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("title_threshold", self.title_threshold),
            ("author_threshold", self.author_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

fn fold(s: &str) -> String {
    deunicode::deunicode(s).to_lowercase()
}

/// Lowercased, transliterated alphanumeric tokens of length two or more.
pub fn normalize_title(title: &str) -> Vec<String> {
    fold(title)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|tok| tok.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuthorKey {
    pub surname: String,
    pub initial: Option<char>,
}

impl AuthorKey {
    fn compatible(&self, other: &AuthorKey) -> bool {
        if self.surname.is_empty() || self.surname != other.surname {
            return false;
        }
        match (self.initial, other.initial) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    }
}

const NAME_SUFFIXES: [&str; 5] = ["jr", "sr", "ii", "iii", "iv"];

fn surname_key(s: &str) -> String {
    s.chars().filter(|c| c.is_alphanumeric()).collect()
}

fn first_initial(s: &str) -> Option<char> {
    s.chars().find(|c| c.is_alphabetic())
}

/// Reduces "Surname, Given" or "Given Surname" to a surname key and the
/// first given-name initial.
pub fn normalize_author(name: &str) -> AuthorKey {
    let folded = fold(name);
    if let Some((surname, given)) = folded.split_once(',') {
        return AuthorKey {
            surname: surname_key(surname),
            initial: first_initial(given),
        };
    }
    let mut tokens: Vec<&str> = folded.split_whitespace().collect();
    while tokens.len() > 2 && NAME_SUFFIXES.contains(&surname_key(tokens[tokens.len() - 1]).as_str()) {
        tokens.pop();
    }
    match tokens.as_slice() {
        [] => AuthorKey {
            surname: String::new(),
            initial: None,
        },
        [only] => AuthorKey {
            surname: surname_key(only),
            initial: None,
        },
        [first, .., last] => AuthorKey {
            surname: surname_key(last),
            initial: first_initial(first),
        },
    }
}

/// Jaccard similarity of the token sets. Two empty lists are identical.
pub fn title_similarity(a: &[String], b: &[String]) -> f64 {
    let sa: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let sb: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

/// Size of a maximum one-to-one pairing of compatible authors, divided by
/// the longer list length. Empty lists give 0.
pub fn author_overlap(a: &[AuthorKey], b: &[AuthorKey]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    // Kuhn's augmenting paths; author lists are short.
    fn augment(i: usize, a: &[AuthorKey], b: &[AuthorKey], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for j in 0..b.len() {
            if seen[j] || !a[i].compatible(&b[j]) {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, a, b, seen, owner)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; b.len()];
    let mut matched = 0;
    for i in 0..a.len() {
        let mut seen = vec![false; b.len()];
        if augment(i, a, b, &mut seen, &mut owner) {
            matched += 1;
        }
    }
    matched as f64 / longest as f64
}

/// A scored stage-two pairing. Indices refer to the id-sorted preprint and
/// article lists handed to the assignment strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub preprint: usize,
    pub article: usize,
    pub title_similarity: f64,
    pub author_overlap: f64,
    pub score: f64,
}

/// Chooses a one-to-one subset of candidates.
pub trait AssignmentStrategy: Named + Send + Sync {
    /// Returns indices into `candidates`. No preprint or article index may
    /// appear twice among the chosen candidates.
    fn assign(&self, candidates: &[Candidate]) -> Vec<usize>;
}

/// Highest score first, ties broken by (preprint, article) order.
pub struct GreedyAssignment;

impl Named for GreedyAssignment {
    fn name(&self) -> &'static str {
        "greedy"
    }
}

impl AssignmentStrategy for GreedyAssignment {
    fn assign(&self, candidates: &[Candidate]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&x, &y| {
            let (a, b) = (&candidates[x], &candidates[y]);
            b.score
                .total_cmp(&a.score)
                .then(a.preprint.cmp(&b.preprint))
                .then(a.article.cmp(&b.article))
        });
        let mut used_p = BTreeSet::new();
        let mut used_a = BTreeSet::new();
        let mut chosen = Vec::new();
        for i in order {
            let c = &candidates[i];
            if !used_p.contains(&c.preprint) && !used_a.contains(&c.article) {
                used_p.insert(c.preprint);
                used_a.insert(c.article);
                chosen.push(i);
            }
        }
        chosen
    }
}

/// Maximum-cardinality assignment, maximizing total score among
/// maximum-cardinality solutions. Solved per connected component of the
/// candidate graph with the Hungarian method.
///
/// Unlike greedy, the number of matches can never grow when candidates are
/// removed, so raising a threshold never adds matches.
pub struct OptimalAssignment;

impl Named for OptimalAssignment {
    fn name(&self) -> &'static str {
        "optimal"
    }
}

impl AssignmentStrategy for OptimalAssignment {
    fn assign(&self, candidates: &[Candidate]) -> Vec<usize> {
        let mut chosen = Vec::new();
        for component in components(candidates) {
            chosen.extend(solve_component(candidates, &component));
        }
        chosen.sort_unstable();
        chosen
    }
}

/// Groups candidate indices by connected component, in order of each
/// component's smallest preprint index.
fn components(candidates: &[Candidate]) -> Vec<Vec<usize>> {
    // union-find over preprint nodes and article nodes
    let mut p_node: BTreeMap<usize, usize> = BTreeMap::new();
    let mut a_node: BTreeMap<usize, usize> = BTreeMap::new();
    let mut parent: Vec<usize> = Vec::new();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let node = |map: &mut BTreeMap<usize, usize>, key: usize, parent: &mut Vec<usize>| {
        *map.entry(key).or_insert_with(|| {
            parent.push(parent.len());
            parent.len() - 1
        })
    };
    let mut edges = Vec::with_capacity(candidates.len());
    for c in candidates {
        let p = node(&mut p_node, c.preprint, &mut parent);
        let a = node(&mut a_node, c.article, &mut parent);
        let (rp, ra) = (find(&mut parent, p), find(&mut parent, a));
        if rp != ra {
            parent[rp.max(ra)] = rp.min(ra);
        }
        edges.push(p);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &p) in edges.iter().enumerate() {
        let root = find(&mut parent, p);
        groups.entry(root).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g.iter().map(|&i| candidates[i].preprint).min());
    out
}

fn solve_component(candidates: &[Candidate], component: &[usize]) -> Vec<usize> {
    let preprints: Vec<usize> = component
        .iter()
        .map(|&i| candidates[i].preprint)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let articles: Vec<usize> = component
        .iter()
        .map(|&i| candidates[i].article)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let p_pos: HashMap<usize, usize> = preprints.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let a_pos: HashMap<usize, usize> = articles.iter().enumerate().map(|(k, &a)| (a, k)).collect();

    // Rows must be the smaller side.
    let transpose = preprints.len() > articles.len();
    let (rows, cols) = if transpose {
        (articles.len(), preprints.len())
    } else {
        (preprints.len(), articles.len())
    };
    // Bonus per matched pair outweighs any total score difference, so the
    // optimum has maximum cardinality first.
    let bonus = rows as f64 + 1.0;
    let mut cost = vec![vec![0.0f64; cols]; rows];
    let mut which = vec![vec![None; cols]; rows];
    for &i in component {
        let c = &candidates[i];
        let (r, col) = if transpose {
            (a_pos[&c.article], p_pos[&c.preprint])
        } else {
            (p_pos[&c.preprint], a_pos[&c.article])
        };
        cost[r][col] = -(bonus + c.score);
        which[r][col] = Some(i);
    }
    hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(r, col)| which[r][col])
        .collect()
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols).
/// Returns the column chosen for each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    debug_assert!(n <= m);
    const EPS: f64 = 1e-12;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // way[j]: previous column on the alternating path; p[j]: row owning column j (1-based, 0 = none)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] - EPS {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta - EPS {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Assignment strategies by name; `optimal` is the default.
pub fn assignment_registry() -> Registry<dyn AssignmentStrategy> {
    Registry::new("assignment")
        .with(Arc::new(OptimalAssignment) as Arc<dyn AssignmentStrategy>)
        .with(Arc::new(GreedyAssignment) as Arc<dyn AssignmentStrategy>)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub exact_matches: u64,
    pub fuzzy_matches: u64,
    /// Journal references that name no corpus article.
    pub unresolved_refs: u64,
    /// Resolvable references whose article was already claimed by a
    /// preprint earlier in id order; these preprints stay unmatched.
    pub conflicting_refs: u64,
    pub duplicate_preprints: u64,
    pub unmatched_preprints: u64,
    pub candidates: u64,
    pub assignment: String,
    /// Ids of unmatched preprints, for manual audit.
    pub residue: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Concordance {
    /// Sorted by preprint id.
    pub matches: Vec<ConcordanceMatch>,
    pub report: ConcordanceReport,
}

pub const CONCORDANCE_CSV_HEADER: &str = "preprint_id,article_id,method,score";

impl Concordance {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CONCORDANCE_CSV_HEADER);
        out.push('\n');
        for m in &self.matches {
            let _ = writeln!(out, "{},{},{},{}", m.preprint_id, m.article_id, m.method.as_str(), m.score);
        }
        out
    }

    /// Parses the CSV written by [`Concordance::to_csv`].
    pub fn matches_from_csv<R: std::io::Read>(source: R) -> Result<Vec<ConcordanceMatch>> {
        let mut reader = csv::Reader::from_reader(source);
        let headers = reader.headers()?.iter().collect::<Vec<_>>().join(",");
        if headers != CONCORDANCE_CSV_HEADER {
            return Err(Error::BadHeader {
                file: "concordance",
                expected: CONCORDANCE_CSV_HEADER,
                found: headers,
            });
        }
        let mut out = Vec::new();
        for row in reader.deserialize() {
            out.push(row?);
        }
        Ok(out)
    }

    pub fn linked_corpus(&self, corpus: &Corpus) -> Corpus {
        corpus.with_preprint_links(self.matches.iter().map(|m| m.article_id.as_str()))
    }
}

/// Reads preprint JSONL. Unlike article ingest, any malformed line is an
/// error.
pub fn read_preprints<R: std::io::BufRead>(source: R) -> Result<Vec<PreprintRecord>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PreprintRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("preprints line {}: {e}", n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

struct Normalized {
    id: String,
    tokens: Vec<String>,
    authors: Vec<AuthorKey>,
}

impl Normalized {
    fn new(id: &str, title: &str, authors: &[String]) -> Self {
        Normalized {
            id: id.to_string(),
            tokens: normalize_title(title),
            authors: authors
                .iter()
                .map(|a| normalize_author(a))
                .filter(|k| !k.surname.is_empty())
                .collect(),
        }
    }

    fn fuzzy_eligible(&self) -> bool {
        !self.tokens.is_empty() && !self.authors.is_empty()
    }

    fn block_keys(&self, first_only: bool) -> Vec<&str> {
        let take = if first_only { 1 } else { self.authors.len() };
        let keys: BTreeSet<&str> = self.authors.iter().take(take).map(|a| a.surname.as_str()).collect();
        keys.into_iter().collect()
    }
}

pub fn build_concordance(preprints: &[PreprintRecord], corpus: &Corpus, config: &MatchConfig) -> Result<Concordance> {
    build_concordance_with(preprints, corpus, config, &OptimalAssignment)
}

pub fn build_concordance_with(
    preprints: &[PreprintRecord],
    corpus: &Corpus,
    config: &MatchConfig,
    strategy: &dyn AssignmentStrategy,
) -> Result<Concordance> {
    config.validate()?;
    let mut report = ConcordanceReport {
        assignment: strategy.name().to_string(),
        ..Default::default()
    };

    let mut by_id: BTreeMap<&str, &PreprintRecord> = BTreeMap::new();
    for p in preprints {
        if by_id.contains_key(p.id.as_str()) {
            report.duplicate_preprints += 1;
        } else {
            by_id.insert(&p.id, p);
        }
    }

    // Stage 1: author-supplied references, in preprint id order.
    let mut matches = Vec::new();
    let mut claimed_articles: BTreeSet<&str> = BTreeSet::new();
    let mut settled: BTreeSet<&str> = BTreeSet::new();
    for (&pid, p) in &by_id {
        let Some(reference) = p.journal_ref.as_deref().map(str::trim).filter(|r| !r.is_empty()) else {
            continue;
        };
        match corpus.get(reference) {
            None => report.unresolved_refs += 1,
            Some(article) => {
                settled.insert(pid);
                if claimed_articles.insert(article.id.as_str()) {
                    matches.push(ConcordanceMatch {
                        preprint_id: pid.to_string(),
                        article_id: article.id.clone(),
                        method: MatchMethod::ExactRef,
                        score: 1.0,
                    });
                } else {
                    report.conflicting_refs += 1;
                }
            }
        }
    }
    report.exact_matches = matches.len() as u64;

    // Stage 2: fuzzy title/author matching over what remains.
    let open_preprints: Vec<Normalized> = by_id
        .iter()
        .filter(|(pid, _)| !settled.contains(*pid))
        .map(|(_, p)| Normalized::new(&p.id, &p.title, &p.authors))
        .filter(Normalized::fuzzy_eligible)
        .collect();
    let open_articles: Vec<Normalized> = corpus
        .articles()
        .iter()
        .filter(|a| !claimed_articles.contains(a.id.as_str()))
        .map(|a| Normalized::new(&a.id, a.title.as_deref().unwrap_or(""), &a.authors))
        .filter(Normalized::fuzzy_eligible)
        .collect();

    let first_only = config.require_first_author;
    let mut blocks: HashMap<&str, Vec<usize>> = HashMap::new();
    for (k, a) in open_articles.iter().enumerate() {
        for key in a.block_keys(first_only) {
            blocks.entry(key).or_default().push(k);
        }
    }

    let candidates: Vec<Candidate> = open_preprints
        .par_iter()
        .enumerate()
        .map(|(pi, p)| {
            let mut pool: BTreeSet<usize> = BTreeSet::new();
            for key in p.block_keys(first_only) {
                if let Some(ks) = blocks.get(key) {
                    pool.extend(ks.iter().copied());
                }
            }
            pool.into_iter()
                .filter_map(|ai| {
                    let a = &open_articles[ai];
                    if first_only && a.authors[0].surname != p.authors[0].surname {
                        return None;
                    }
                    let title_similarity = title_similarity(&p.tokens, &a.tokens);
                    let author_overlap = author_overlap(&p.authors, &a.authors);
                    if title_similarity < config.title_threshold || author_overlap < config.author_threshold {
                        return None;
                    }
                    Some(Candidate {
                        preprint: pi,
                        article: ai,
                        title_similarity,
                        author_overlap,
                        score: 0.5 * title_similarity + 0.5 * author_overlap,
                    })
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    report.candidates = candidates.len() as u64;

    let chosen = strategy.assign(&candidates);
    let mut seen_p = BTreeSet::new();
    let mut seen_a = BTreeSet::new();
    for i in chosen {
        let c = candidates[i];
        assert!(
            seen_p.insert(c.preprint) && seen_a.insert(c.article),
            "assignment strategy `{}` returned a conflicting pair",
            strategy.name()
        );
        matches.push(ConcordanceMatch {
            preprint_id: open_preprints[c.preprint].id.clone(),
            article_id: open_articles[c.article].id.clone(),
            method: MatchMethod::Fuzzy,
            score: c.score,
        });
    }
    report.fuzzy_matches = matches.len() as u64 - report.exact_matches;

    matches.sort_by(|a, b| a.preprint_id.cmp(&b.preprint_id));
    let matched: BTreeSet<&str> = matches.iter().map(|m| m.preprint_id.as_str()).collect();
    report.residue = by_id.keys().filter(|id| !matched.contains(*id)).map(|id| id.to_string()).collect();
    report.unmatched_preprints = report.residue.len() as u64;

    Ok(Concordance { matches, report })
}
