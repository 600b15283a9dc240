//! Article and citation-edge data model, file ingestion, and the per-month
//! counting primitives behind the P statistic.
//!
//! Time is measured in whole months since January 1970 ([`MonthIndex`]).
//! Article age relative to a citing month `t` is `t - pub_month`, and an
//! [`AgeWindow`] selects the half-open age range `[start, start + len)`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Months elapsed since 1970-01 (month 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MonthIndex(u32);

impl MonthIndex {
    pub const EPOCH_YEAR: i32 = 1970;

    pub const fn new(value: u32) -> Self {
        MonthIndex(value)
    }

    pub fn from_year_month(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) || year < Self::EPOCH_YEAR {
            return Err(Error::InvalidMonth(format!("{year:04}-{month:02}")));
        }
        let value = (year - Self::EPOCH_YEAR) as u32 * 12 + (month - 1);
        Ok(MonthIndex(value))
    }

    pub const fn value(self) -> u32 {
        self.0
    }

    pub fn year(self) -> i32 {
        Self::EPOCH_YEAR + (self.0 / 12) as i32
    }

    /// Calendar month, 1-based.
    pub fn month(self) -> u32 {
        self.0 % 12 + 1
    }

    /// Signed month difference `self - earlier`.
    pub fn months_since(self, earlier: MonthIndex) -> i64 {
        i64::from(self.0) - i64::from(earlier.0)
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for MonthIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidMonth(s.to_string());
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        MonthIndex::from_year_month(year, month).map_err(|_| bad())
    }
}

impl Serialize for MonthIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthIndex {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Half-open range of article ages in months: `start <= age < start + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AgeWindow {
    start: u32,
    len: u32,
}

impl AgeWindow {
    pub fn new(start: u32, len: u32) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidWindow("window length must be at least one month".into()));
        }
        start
            .checked_add(len)
            .ok_or_else(|| Error::InvalidWindow("window end overflows".into()))?;
        Ok(AgeWindow { start, len })
    }

    /// Builds a window from year-valued offsets, each of which must be a
    /// whole number of months.
    pub fn from_years(start_years: f64, len_years: f64) -> Result<Self> {
        AgeWindow::new(years_to_months(start_years)?, years_to_months(len_years)?)
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    /// Window length in months (always at least one).
    pub fn span(&self) -> u32 {
        self.len
    }

    /// Exclusive upper age bound.
    pub fn end(&self) -> u32 {
        self.start + self.len
    }

    pub fn contains(&self, age: i64) -> bool {
        age >= i64::from(self.start) && age < i64::from(self.end())
    }

    /// Inclusive publication-month range selected at citing month `t`, or
    /// `None` when it lies entirely before 1970-01.
    fn pub_month_range(&self, t: MonthIndex) -> Option<(u32, u32)> {
        let hi = i64::from(t.value()) - i64::from(self.start);
        let lo = i64::from(t.value()) - i64::from(self.end()) + 1;
        if hi < 0 {
            return None;
        }
        Some((lo.max(0) as u32, hi as u32))
    }
}

impl fmt::Display for AgeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}) months", self.start, self.end())
    }
}

/// Converts a non-negative year value to whole months, rejecting values
/// that are not multiples of 1/12.
pub fn years_to_months(years: f64) -> Result<u32> {
    if !years.is_finite() || years < 0.0 {
        return Err(Error::InvalidWindow(format!("year value {years} must be finite and non-negative")));
    }
    let months = years * 12.0;
    let rounded = months.round();
    if (months - rounded).abs() > 1e-6 || rounded > f64::from(u32::MAX) {
        return Err(Error::FractionalMonths(years));
    }
    Ok(rounded as u32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub id: String,
    pub pub_month: MonthIndex,
    #[serde(default)]
    pub venue: String,
    #[serde(default)]
    pub preprint_linked: bool,
    /// Supplied citation count; when absent the in-corpus in-degree is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citation_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
}

impl ArticleRecord {
    pub fn new(id: impl Into<String>, pub_month: MonthIndex) -> Self {
        ArticleRecord {
            id: id.into(),
            pub_month,
            venue: String::new(),
            preprint_linked: false,
            citation_count: None,
            title: None,
            authors: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CitationEdge {
    pub citing_id: String,
    pub cited_id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestIssue {
    pub source: IssueSource,
    pub line: u64,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueSource {
    Articles,
    Edges,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Lines parsed successfully across both inputs.
    pub parsed: u64,
    pub skipped_malformed: u64,
    pub duplicate_ids: u64,
    pub dangling_edges: u64,
    /// Repeated edges removed by deduplication.
    pub dedup_edges: u64,
    /// Edges whose citing article predates the cited one.
    pub negative_age_edges: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<IngestIssue>,
}

pub const EDGES_HEADER: &str = "citing_id,cited_id";

/// Single-writer accumulation state; [`CorpusBuilder::finish`] freezes it.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    /// In insertion order; `ids` maps each id to its position here.
    articles: Vec<ArticleRecord>,
    ids: HashMap<String, u32>,
    edges: HashSet<(u32, u32)>,
    report: IngestReport,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn report(&self) -> &IngestReport {
        &self.report
    }

    fn issue(&mut self, source: IssueSource, line: u64, message: impl Into<String>) {
        self.report.issues.push(IngestIssue {
            source,
            line,
            message: message.into(),
        });
    }

    /// Adds one article. Returns false (and records the duplicate) when the
    /// id is already present; the first record wins.
    pub fn add_article(&mut self, record: ArticleRecord) -> bool {
        if self.ids.contains_key(&record.id) {
            self.report.duplicate_ids += 1;
            return false;
        }
        self.ids.insert(record.id.clone(), self.articles.len() as u32);
        self.articles.push(record);
        true
    }

    /// Adds one edge, returning false if it was dangling or a duplicate.
    pub fn add_edge(&mut self, edge: CitationEdge) -> bool {
        let (Some(&citing), Some(&cited)) = (self.ids.get(&edge.citing_id), self.ids.get(&edge.cited_id)) else {
            self.report.dangling_edges += 1;
            return false;
        };
        if !self.edges.insert((citing, cited)) {
            self.report.dedup_edges += 1;
            return false;
        }
        true
    }

    /// Reads JSONL article records. Malformed lines and duplicate ids are
    /// reported and skipped; only I/O failures abort.
    pub fn ingest_articles<R: BufRead>(&mut self, mut source: R) -> Result<()> {
        let mut buf = Vec::new();
        let mut line_no = 0u64;
        loop {
            buf.clear();
            if source.read_until(b'\n', &mut buf)? == 0 {
                break;
            }
            line_no += 1;
            let line = match std::str::from_utf8(&buf) {
                Ok(s) => s.trim(),
                Err(_) => {
                    self.report.skipped_malformed += 1;
                    self.issue(IssueSource::Articles, line_no, "invalid UTF-8");
                    continue;
                }
            };
            if line.is_empty() {
                continue;
            }
            match serde_json::from_str::<ArticleRecord>(line) {
                Ok(record) if record.id.is_empty() => {
                    self.report.skipped_malformed += 1;
                    self.issue(IssueSource::Articles, line_no, "empty id");
                }
                Ok(record) => {
                    self.report.parsed += 1;
                    let id = record.id.clone();
                    if !self.add_article(record) {
                        self.issue(IssueSource::Articles, line_no, format!("duplicate id {id:?}"));
                    }
                }
                Err(e) => {
                    self.report.skipped_malformed += 1;
                    self.issue(IssueSource::Articles, line_no, e.to_string());
                }
            }
        }
        Ok(())
    }

    /// Reads the `citing_id,cited_id` CSV. Call after all articles are in.
    pub fn ingest_edges<R: Read>(&mut self, source: R) -> Result<()> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(source);
        let mut records = reader.records();
        match records.next() {
            None => return Ok(()),
            Some(header) => {
                let header = header?;
                let found = header.iter().collect::<Vec<_>>().join(",");
                if found.trim_start_matches('\u{feff}') != EDGES_HEADER {
                    return Err(Error::BadHeader {
                        file: "edges",
                        expected: EDGES_HEADER,
                        found,
                    });
                }
            }
        }
        for row in records {
            let row = match row {
                Ok(row) => row,
                Err(e) => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    if let csv::ErrorKind::Io(_) = e.kind() {
                        return Err(e.into());
                    }
                    self.report.skipped_malformed += 1;
                    self.issue(IssueSource::Edges, line, e.to_string());
                    continue;
                }
            };
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let citing = row.get(0).map(str::trim).unwrap_or("");
            let cited = row.get(1).map(str::trim).unwrap_or("");
            if row.len() != 2 || citing.is_empty() || cited.is_empty() {
                self.report.skipped_malformed += 1;
                self.issue(IssueSource::Edges, line, "expected two non-empty fields");
                continue;
            }
            self.report.parsed += 1;
            let edge = CitationEdge {
                citing_id: citing.to_string(),
                cited_id: cited.to_string(),
            };
            let dangling_before = self.report.dangling_edges;
            if !self.add_edge(edge) && self.report.dangling_edges > dangling_before {
                self.issue(IssueSource::Edges, line, format!("dangling edge {citing} -> {cited}"));
            }
        }
        Ok(())
    }

    pub fn finish(self) -> (Corpus, IngestReport) {
        let mut report = self.report;
        let mut order: Vec<u32> = (0..self.articles.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| self.articles[a as usize].id.cmp(&self.articles[b as usize].id));
        let mut rank = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            rank[old as usize] = new as u32;
        }
        let mut slots: Vec<Option<ArticleRecord>> = self.articles.into_iter().map(Some).collect();
        let articles: Vec<ArticleRecord> = order.iter().map(|&old| slots[old as usize].take().unwrap()).collect();
        let edges = self.edges.into_iter().map(|(a, b)| (rank[a as usize], rank[b as usize]));
        let corpus = Corpus::assemble(articles, edges);
        report.negative_age_edges = corpus.negative_age_edges;
        (corpus, report)
    }
}

/// Serialized form written by `citadv ingest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSnapshot {
    pub articles: Vec<ArticleRecord>,
    pub edges: Vec<CitationEdge>,
}

/// An immutable, validated collection of articles and deduplicated edges.
#[derive(Clone, Debug)]
pub struct Corpus {
    articles: Vec<ArticleRecord>,
    index: HashMap<String, u32>,
    /// (citing, cited) article indices, sorted and unique.
    edges: Vec<(u32, u32)>,
    monthly_counts: BTreeMap<MonthIndex, u64>,
    /// `month_prefix[m]` = articles published in months `< m`.
    month_prefix: Vec<u64>,
    /// Sorted publication months of every cited article, keyed by citing month.
    cited_months: HashMap<u32, Vec<u32>>,
    in_degree: Vec<u64>,
    negative_age_edges: u64,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.articles == other.articles && self.edges == other.edges
    }
}

impl Corpus {
    fn assemble(articles: Vec<ArticleRecord>, edges: impl Iterator<Item = (u32, u32)>) -> Corpus {
        debug_assert!(articles.windows(2).all(|w| w[0].id < w[1].id));
        let index: HashMap<String, u32> = articles
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.clone(), i as u32))
            .collect();
        let mut edges: Vec<(u32, u32)> = edges.collect();
        edges.sort_unstable();
        edges.dedup();

        let mut monthly_counts = BTreeMap::new();
        for a in &articles {
            *monthly_counts.entry(a.pub_month).or_insert(0u64) += 1;
        }
        let max_month = monthly_counts.keys().next_back().map_or(0, |m| m.value() as usize + 1);
        let mut month_prefix = vec![0u64; max_month + 1];
        for (m, c) in &monthly_counts {
            month_prefix[m.value() as usize + 1] += c;
        }
        for i in 1..month_prefix.len() {
            month_prefix[i] += month_prefix[i - 1];
        }

        let mut cited_months: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut in_degree = vec![0u64; articles.len()];
        let mut negative_age_edges = 0;
        for &(citing, cited) in &edges {
            let citing_month = articles[citing as usize].pub_month;
            let cited_month = articles[cited as usize].pub_month;
            if cited_month > citing_month {
                negative_age_edges += 1;
            }
            cited_months.entry(citing_month.value()).or_default().push(cited_month.value());
            in_degree[cited as usize] += 1;
        }
        for months in cited_months.values_mut() {
            months.sort_unstable();
        }

        Corpus {
            articles,
            index,
            edges,
            monthly_counts,
            month_prefix,
            cited_months,
            in_degree,
            negative_age_edges,
        }
    }

    /// Ingests articles and edges from in-memory values.
    pub fn from_parts(
        articles: impl IntoIterator<Item = ArticleRecord>,
        edges: impl IntoIterator<Item = CitationEdge>,
    ) -> (Corpus, IngestReport) {
        let mut builder = CorpusBuilder::new();
        for a in articles {
            builder.add_article(a);
        }
        for e in edges {
            builder.add_edge(e);
        }
        builder.finish()
    }

    pub fn from_readers<A: BufRead, E: Read>(articles: A, edges: E) -> Result<(Corpus, IngestReport)> {
        let mut builder = CorpusBuilder::new();
        builder.ingest_articles(articles)?;
        builder.ingest_edges(edges)?;
        Ok(builder.finish())
    }

    pub fn from_snapshot(snapshot: CorpusSnapshot) -> (Corpus, IngestReport) {
        Corpus::from_parts(snapshot.articles, snapshot.edges)
    }

    pub fn snapshot(&self) -> CorpusSnapshot {
        CorpusSnapshot {
            articles: self.articles.clone(),
            edges: self.edges().collect(),
        }
    }

    /// Articles sorted by id.
    pub fn articles(&self) -> &[ArticleRecord] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ArticleRecord> {
        self.index.get(id).map(|&i| &self.articles[i as usize])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in (citing_id, cited_id) index order.
    pub fn edges(&self) -> impl Iterator<Item = CitationEdge> + '_ {
        self.edges.iter().map(|&(a, b)| CitationEdge {
            citing_id: self.articles[a as usize].id.clone(),
            cited_id: self.articles[b as usize].id.clone(),
        })
    }

    /// Citing/cited record pairs.
    pub fn edge_records(&self) -> impl Iterator<Item = (&ArticleRecord, &ArticleRecord)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (&self.articles[a as usize], &self.articles[b as usize]))
    }

    pub fn monthly_counts(&self) -> &BTreeMap<MonthIndex, u64> {
        &self.monthly_counts
    }

    pub fn negative_age_edges(&self) -> u64 {
        self.negative_age_edges
    }

    /// Earliest and latest publication month.
    pub fn month_range(&self) -> Option<(MonthIndex, MonthIndex)> {
        let first = *self.monthly_counts.keys().next()?;
        let last = *self.monthly_counts.keys().next_back()?;
        Some((first, last))
    }

    /// Number of in-corpus citations received by the article.
    pub fn in_degree(&self, id: &str) -> Option<u64> {
        self.index.get(id).map(|&i| self.in_degree[i as usize])
    }

    /// Supplied citation count, falling back to in-degree.
    pub fn citation_count(&self, id: &str) -> Option<u64> {
        let &i = self.index.get(id)?;
        let article = &self.articles[i as usize];
        Some(article.citation_count.unwrap_or(self.in_degree[i as usize]))
    }

    /// N(t): articles published in month `t`.
    pub fn articles_at(&self, t: MonthIndex) -> u64 {
        self.monthly_counts.get(&t).copied().unwrap_or(0)
    }

    fn published_between(&self, lo: u32, hi: u32) -> u64 {
        let last = self.month_prefix.len() - 1;
        let lo = (lo as usize).min(last);
        let hi = (hi as usize + 1).min(last);
        if hi <= lo {
            0
        } else {
            self.month_prefix[hi] - self.month_prefix[lo]
        }
    }

    /// N(t, t0, dt): articles whose age at `t` falls inside `window`.
    pub fn articles_in_window(&self, t: MonthIndex, window: AgeWindow) -> u64 {
        match window.pub_month_range(t) {
            Some((lo, hi)) => self.published_between(lo, hi),
            None => 0,
        }
    }

    /// citations(t, t0, dt): edges from articles published in month `t` to
    /// articles whose age at `t` falls inside `window`.
    pub fn citations_into_window(&self, t: MonthIndex, window: AgeWindow) -> u64 {
        let Some((lo, hi)) = window.pub_month_range(t) else {
            return 0;
        };
        let Some(months) = self.cited_months.get(&t.value()) else {
            return 0;
        };
        let start = months.partition_point(|&m| m < lo);
        let end = months.partition_point(|&m| m <= hi);
        (end - start) as u64
    }

    /// Returns a copy with `preprint_linked` set on the given article ids
    /// (in addition to any already set).
    pub fn with_preprint_links<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let mut out = self.clone();
        for id in ids {
            if let Some(&i) = out.index.get(id) {
                out.articles[i as usize].preprint_linked = true;
            }
        }
        out
    }
}
