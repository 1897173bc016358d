use super::{DecompError, Draft, DraftStep, Params, Refined, Subtask, TaskType, Violation};
use crate::doc::SchemaVersion;
use crate::model::{Channel, ChartSpec, ChartType, Orientation, Role, Scale, TickValue};
use crate::modelclient::RegionRef;
use regex::Regex;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

/// A data mark as seen by the rule engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MarkRef {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    /// `None` for line-based marks, which cover every category.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Names a question may refer to, and the regions they resolve to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Vocabulary {
    pub chart_type: ChartType,
    pub region_ids: Vec<u32>,
    pub marks: Vec<MarkRef>,
    pub series: Vec<String>,
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_name: Option<String>,
    /// Name of a quantitative horizontal axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_name: Option<String>,
}

const GENERIC_MEASURES: [&str; 8] = ["value", "count", "share", "people", "amount", "number", "frequency", "size"];
const SERIES_NOUNS: [&str; 5] = ["group", "source", "series", "layer", "category"];

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_owned());
    }
}

impl Vocabulary {
    pub fn new(spec: &ChartSpec, regions: &[RegionRef]) -> Self {
        let mut v = Vocabulary {
            chart_type: spec.chart_type,
            region_ids: regions.iter().map(|r| r.id).collect(),
            marks: Vec::new(),
            series: Vec::new(),
            categories: Vec::new(),
            y_name: spec.axis(Orientation::Vertical).filter(|a| a.is_quantitative()).map(|a| a.name.clone()),
            x_name: spec.axis(Orientation::Horizontal).filter(|a| a.is_quantitative()).map(|a| a.name.clone()),
            size_name: spec.series.iter().find(|s| s.channel == Channel::Size).map(|s| s.name.clone()),
        };
        if let Some(axis) = spec.axes.iter().find(|a| a.scale == Scale::Categorical) {
            for t in &axis.ticks {
                if let TickValue::Category(c) = &t.value {
                    push_unique(&mut v.categories, c);
                }
            }
        }
        for r in regions.iter().filter(|r| r.role == Role::DataMark) {
            v.marks.push(MarkRef { id: r.id, series: r.series.clone(), category: r.category.clone() });
            if let Some(s) = &r.series {
                push_unique(&mut v.series, s);
            }
            if let Some(c) = &r.category {
                push_unique(&mut v.categories, c);
            }
        }
        v
    }

    fn find(list: &[String], word: &str) -> Option<String> {
        let word = word.trim();
        let exact = |w: &str| list.iter().find(|n| n.eq_ignore_ascii_case(w)).cloned();
        exact(word)
            .or_else(|| word.strip_suffix("es").and_then(exact))
            .or_else(|| word.strip_suffix('s').and_then(exact))
    }

    pub fn category(&self, word: &str) -> Option<String> {
        Self::find(&self.categories, word)
    }

    pub fn series_name(&self, word: &str) -> Option<String> {
        Self::find(&self.series, word)
    }

    /// Resolves a phrase such as "gold medals" to a series name.
    pub fn series_phrase(&self, phrase: &str) -> Option<String> {
        self.series_name(phrase).or_else(|| phrase.split_whitespace().find_map(|w| self.series_name(w)))
    }

    /// Maps an axis name, the size channel name or a generic measure word to
    /// a data field: `value`, `x` or `size`.
    pub fn field(&self, word: &str) -> Option<&'static str> {
        let named = |n: &Option<String>| n.as_ref().is_some_and(|n| Self::find(std::slice::from_ref(n), word).is_some());
        if named(&self.y_name) {
            Some("value")
        } else if named(&self.x_name) {
            Some("x")
        } else if named(&self.size_name) {
            Some("size")
        } else {
            let w = word.trim().to_ascii_lowercase();
            let singular = w.strip_suffix('s').unwrap_or(&w);
            GENERIC_MEASURES.iter().any(|g| *g == w || *g == singular).then_some("value")
        }
    }

    /// Data marks matching optional series and category filters.
    pub fn marks_where(&self, series: Option<&[String]>, categories: Option<&[String]>) -> Vec<u32> {
        let ok = |have: &Option<String>, want: Option<&[String]>| match (have, want) {
            (_, None) | (None, _) => true,
            (Some(h), Some(w)) => w.iter().any(|x| x == h),
        };
        let mut ids: Vec<u32> = self
            .marks
            .iter()
            .filter(|m| ok(&m.series, series) && ok(&m.category, categories))
            .map(|m| m.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn all_marks(&self) -> Vec<u32> {
        self.marks_where(None, None)
    }

    fn axis_for(&self, field: &str) -> Option<String> {
        match field {
            "x" => self.x_name.clone(),
            "size" => None,
            _ => self.y_name.clone(),
        }
    }

    /// Checks that every series/category named in `params` exists.
    pub fn ungrounded_param(&self, params: &Params) -> Option<String> {
        let check = |key: &str, list: &[String]| {
            params.get(key).and_then(|v| split_list(v).into_iter().find(|x| !list.iter().any(|n| n == x)))
        };
        check("series", &self.series).or_else(|| check("category", &self.categories))
    }
}

pub(crate) fn split_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// Instruction text for a subtask, derived from its type and parameters.
pub fn phrase(t: TaskType, p: &Params) -> String {
    let get = |k: &str| p.get(k).map(String::as_str);
    let what = |p: &Params| match (p.get("series"), p.get("category")) {
        (Some(s), Some(c)) => format!("the {s} marks for {}", c.replace(',', " and ")),
        (Some(s), None) => format!("the {s} marks"),
        (None, Some(c)) => format!("the marks for {}", c.replace(',', " and ")),
        (None, None) => "every mark".to_owned(),
    };
    let dir = |op: Option<&str>| if op == Some("min") { "lowest" } else { "highest" };
    let by = if get("by") == Some("series") { "series" } else { "category" };
    match t {
        TaskType::Filter => match (get("above"), get("below"), get("channels")) {
            (Some(n), _, _) => format!("Keep only the values above {n}"),
            (_, Some(n), _) => format!("Keep only the values below {n}"),
            (_, _, Some(c)) => format!("Focus on the {} channels", c.replace(',', " and ")),
            _ => format!("Focus on {}", what(p)),
        },
        TaskType::RetrieveValue => match get("axis") {
            Some(a) => format!("Read the value of each selected mark against the {a} axis"),
            None => "Read the value of each selected mark".to_owned(),
        },
        TaskType::ComputeDerivedValue => match get("op") {
            Some("proportion") => match get("category") {
                Some(c) => format!("Divide the segment by the whole bar for {c} to get its proportion"),
                None => "Divide each segment by its whole bar to get a proportion".to_owned(),
            },
            Some("sum") if p.contains_key("by") => format!("Add up the values for each {by}"),
            Some("sum") => "Add up the selected values".to_owned(),
            Some("difference") => "Subtract the smaller value from the larger one".to_owned(),
            Some("count") => "Count how many remain".to_owned(),
            _ => "Compute the derived value".to_owned(),
        },
        TaskType::FindExtremum => format!("Find the {by} with the {} value", dir(get("op"))),
        TaskType::Sort => match get("order") {
            Some("ascending") => "Order the values from lowest to highest".to_owned(),
            _ => "Order the values from highest to lowest".to_owned(),
        },
        TaskType::DetermineRange => "Subtract the minimum from the maximum".to_owned(),
        TaskType::CharacterizeDistribution => "Describe the shape of the distribution".to_owned(),
        TaskType::FindAnomalies => "Look for marks far from the overall pattern".to_owned(),
        TaskType::Cluster => "Group nearby marks and count the groups".to_owned(),
        TaskType::Correlate => match get("as") {
            Some("trend") => "Follow the values from left to right and judge the trend".to_owned(),
            _ => "Check whether one quantity rises as the other rises".to_owned(),
        },
    }
}

struct Steps<'v> {
    vocab: &'v Vocabulary,
    steps: Vec<DraftStep>,
}

fn params(kv: &[(&str, &str)]) -> Params {
    kv.iter().map(|(k, v)| ((*k).to_owned(), (*v).to_owned())).collect()
}

impl<'v> Steps<'v> {
    fn push(&mut self, t: TaskType, targets: Vec<u32>, p: Params, consumes: Vec<usize>) -> usize {
        self.steps.push(DraftStep { task_type: Some(t), instruction: phrase(t, &p), targets, params: p, consumes });
        self.steps.len() - 1
    }

    fn retrieve(&mut self, targets: Vec<u32>, field: &str, consumes: Vec<usize>) -> usize {
        let mut p = params(&[("field", field)]);
        if let Some(axis) = self.vocab.axis_for(field) {
            p.insert("axis".into(), axis);
        }
        self.push(TaskType::RetrieveValue, targets, p, consumes)
    }
}

type Rule = fn(&regex::Captures, &mut Steps) -> Result<(), DecompError>;

macro_rules! re {
    ($s:expr) => {
        LazyLock::new(|| Regex::new(concat!("(?i)^", $s, "$")).expect("template regex"))
    };
}

static VALUE_OF: LazyLock<Regex> = re!(r"what is the value of (?:the )?(.+)");
static SERIES_VALUE: LazyLock<Regex> = re!(r"what is the (.+?) value for (.+)");
static PROPORTION_FOR: LazyLock<Regex> = re!(r"what is the proportion of (.+?) for (.+)");
static EXTREMUM: LazyLock<Regex> = re!(r"which (\S+) has the (highest|lowest|largest|smallest|most|least|greatest|biggest) (.+)");
static COMPARE: LazyLock<Regex> = re!(r"which (\S+) has an? (higher|lower|larger|smaller|greater) (.+?),? (\S+) or (\S+)");
static RANGE: LazyLock<Regex> = re!(r"what is the range of (?:the )?(.+)");
static SORT: LazyLock<Regex> = re!(r"sort the (\S+) in (ascending|descending) order");
static COUNT: LazyLock<Regex> = re!(r"how many (\S+) have an? (\S+) (above|below|over|under) (-?[\d.,]+%?)");
static TOTAL_OF: LazyLock<Regex> = re!(r"what is the (?:total|sum) of (\S+) and (\S+)");
static DIFFERENCE: LazyLock<Regex> = re!(r"what is the difference between (\S+) and (\S+)");
static TREND: LazyLock<Regex> = re!(r"what is the trend of (?:the )?(.+)");
static CORRELATION: LazyLock<Regex> = re!(r"is there a correlation between (.+) and (.+)");
static SHAPE: LazyLock<Regex> = re!(r"what is the shape of the distribution");
static OUTLIER: LazyLock<Regex> = re!(r"which (\S+) is an outlier");
static CLUSTERS: LazyLock<Regex> = re!(r"how many clusters are there");

fn unknown(name: &str) -> DecompError {
    DecompError::invalid(Violation::UnknownTarget { name: name.trim().to_owned() })
}

fn category(s: &Steps, word: &str) -> Result<String, DecompError> {
    if let Some(c) = s.vocab.category(word) {
        return Ok(c);
    }
    // "bar B", "bin 45", "month MAY"
    match word.trim().split_once(' ') {
        Some((_, rest)) => s.vocab.category(rest).ok_or_else(|| unknown(word)),
        None => Err(unknown(word)),
    }
}

fn series(s: &Steps, phrase: &str) -> Result<String, DecompError> {
    s.vocab.series_phrase(phrase).ok_or_else(|| unknown(phrase))
}

fn extremum_op(word: &str) -> &'static str {
    match word.to_ascii_lowercase().as_str() {
        "lowest" | "smallest" | "least" | "lower" | "smaller" => "min",
        _ => "max",
    }
}

fn group_by(noun: &str) -> &'static str {
    let n = noun.to_ascii_lowercase();
    let singular = n.strip_suffix('s').unwrap_or(&n);
    if SERIES_NOUNS.contains(&n.as_str()) || SERIES_NOUNS.contains(&singular) {
        "series"
    } else {
        "category"
    }
}

fn value_of(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let cat = category(s, &c[1])?;
    let targets = s.vocab.marks_where(None, Some(std::slice::from_ref(&cat)));
    let f = s.push(TaskType::Filter, targets.clone(), params(&[("category", &cat)]), vec![]);
    s.retrieve(targets, "value", vec![f]);
    Ok(())
}

fn series_value(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let ser = series(s, &c[1])?;
    let cat = category(s, &c[2])?;
    let targets = s.vocab.marks_where(Some(std::slice::from_ref(&ser)), Some(std::slice::from_ref(&cat)));
    let f = s.push(TaskType::Filter, targets.clone(), params(&[("series", &ser), ("category", &cat)]), vec![]);
    s.retrieve(targets, "value", vec![f]);
    Ok(())
}

fn proportion_for(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let ser = series(s, &c[1])?;
    let cat = category(s, &c[2])?;
    let cats = std::slice::from_ref(&cat);
    let targets = s.vocab.marks_where(Some(std::slice::from_ref(&ser)), Some(cats));
    let f = s.push(TaskType::Filter, targets.clone(), params(&[("series", &ser), ("category", &cat)]), vec![]);
    let r = s.retrieve(targets, "value", vec![f]);
    let whole = s.vocab.marks_where(None, Some(cats));
    s.push(TaskType::ComputeDerivedValue, whole, params(&[("op", "proportion")]), vec![r]);
    Ok(())
}

fn extremum(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let op = extremum_op(&c[2]);
    let by = group_by(&c[1]);
    let tail = c[3].trim().to_owned();
    let lower = tail.to_ascii_lowercase();
    let all = s.vocab.all_marks();
    if lower == "total" || lower == "sum" {
        let r = s.retrieve(all.clone(), "value", vec![]);
        let t = s.push(TaskType::ComputeDerivedValue, all.clone(), params(&[("op", "sum"), ("by", by)]), vec![r]);
        s.push(TaskType::FindExtremum, all, params(&[("op", op), ("by", by)]), vec![t]);
    } else if let Some(rest) = lower.strip_prefix("proportion of ") {
        let ser = series(s, rest)?;
        let targets = s.vocab.marks_where(Some(std::slice::from_ref(&ser)), None);
        let f = s.push(TaskType::Filter, targets.clone(), params(&[("series", &ser)]), vec![]);
        let r = s.retrieve(targets.clone(), "value", vec![f]);
        let p = s.push(TaskType::ComputeDerivedValue, all, params(&[("op", "proportion")]), vec![r]);
        s.push(TaskType::FindExtremum, targets, params(&[("op", op), ("by", "category")]), vec![p]);
    } else if let Some(rest) = lower.strip_prefix("value in ").or_else(|| lower.strip_prefix("value for ")) {
        let cat = category(s, rest)?;
        let targets = s.vocab.marks_where(None, Some(std::slice::from_ref(&cat)));
        let f = s.push(TaskType::Filter, targets.clone(), params(&[("category", &cat)]), vec![]);
        let r = s.retrieve(targets.clone(), "value", vec![f]);
        s.push(TaskType::FindExtremum, targets, params(&[("op", op), ("by", "series")]), vec![r]);
    } else if let Some(field) = s.vocab.field(&tail) {
        let r = s.retrieve(all.clone(), field, vec![]);
        s.push(TaskType::FindExtremum, all, params(&[("op", op), ("by", by)]), vec![r]);
    } else {
        let name = lower.strip_suffix(" value").unwrap_or(&lower);
        let ser = series(s, name)?;
        let targets = s.vocab.marks_where(Some(std::slice::from_ref(&ser)), None);
        let f = s.push(TaskType::Filter, targets.clone(), params(&[("series", &ser)]), vec![]);
        let r = s.retrieve(targets.clone(), "value", vec![f]);
        s.push(TaskType::FindExtremum, targets, params(&[("op", op), ("by", "category")]), vec![r]);
    }
    Ok(())
}

fn compare(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let op = extremum_op(&c[2]);
    let cats = vec![category(s, &c[4])?, category(s, &c[5])?];
    let joined = cats.join(",");
    let lower = c[3].trim().to_ascii_lowercase();
    if let Some(rest) = lower.strip_prefix("proportion of ") {
        let ser = series(s, rest)?;
        let targets = s.vocab.marks_where(Some(std::slice::from_ref(&ser)), Some(&cats));
        let f = s.push(TaskType::Filter, targets.clone(), params(&[("series", &ser), ("category", &joined)]), vec![]);
        let r = s.retrieve(targets.clone(), "value", vec![f]);
        let whole = s.vocab.marks_where(None, Some(&cats));
        let p = s.push(
            TaskType::ComputeDerivedValue,
            whole,
            params(&[("op", "proportion"), ("scope", "each"), ("category", &joined)]),
            vec![r],
        );
        s.push(TaskType::FindExtremum, targets, params(&[("op", op), ("by", "category")]), vec![p]);
    } else {
        let field = s.vocab.field(&lower).ok_or_else(|| unknown(&lower))?;
        let targets = s.vocab.marks_where(None, Some(&cats));
        let f = s.push(TaskType::Filter, targets.clone(), params(&[("category", &joined)]), vec![]);
        let r = s.retrieve(targets.clone(), field, vec![f]);
        s.push(TaskType::FindExtremum, targets, params(&[("op", op), ("by", "category")]), vec![r]);
    }
    Ok(())
}

fn range(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let field = s.vocab.field(&c[1]).ok_or_else(|| unknown(&c[1]))?;
    let all = s.vocab.all_marks();
    let mut p = params(&[("field", field)]);
    if let Some(axis) = s.vocab.axis_for(field) {
        p.insert("axis".into(), axis);
    }
    let mut hi = p.clone();
    hi.insert("op".into(), "max".into());
    let mut lo = p;
    lo.insert("op".into(), "min".into());
    let a = s.push(TaskType::FindExtremum, all.clone(), hi, vec![]);
    let b = s.push(TaskType::FindExtremum, all.clone(), lo, vec![]);
    s.push(TaskType::DetermineRange, all, Params::new(), vec![a, b]);
    Ok(())
}

fn sort(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let order = c[2].to_ascii_lowercase();
    let by = group_by(&c[1]);
    let all = s.vocab.all_marks();
    let r = s.retrieve(all.clone(), "value", vec![]);
    s.push(TaskType::Sort, all, params(&[("order", &order), ("by", by)]), vec![r]);
    Ok(())
}

fn count(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let measure = c[2].to_ascii_lowercase();
    let side = match c[3].to_ascii_lowercase().as_str() {
        "below" | "under" => "below",
        _ => "above",
    };
    let n = c[4].replace([',', '%'], "");
    n.parse::<f64>().map_err(|_| unknown(&c[4]))?;
    let all = s.vocab.all_marks();
    if measure == "total" || measure == "sum" {
        let r = s.retrieve(all.clone(), "value", vec![]);
        let t = s.push(TaskType::ComputeDerivedValue, all.clone(), params(&[("op", "sum"), ("by", "category")]), vec![r]);
        let f = s.push(TaskType::Filter, all.clone(), params(&[(side, &n)]), vec![t]);
        s.push(TaskType::ComputeDerivedValue, all, params(&[("op", "count")]), vec![f]);
    } else {
        s.vocab.field(&measure).ok_or_else(|| unknown(&measure))?;
        let f = s.push(TaskType::Filter, all.clone(), params(&[(side, &n)]), vec![]);
        s.push(TaskType::ComputeDerivedValue, all, params(&[("op", "count")]), vec![f]);
    }
    Ok(())
}

fn pair_op(c: &regex::Captures, s: &mut Steps, op: &str) -> Result<(), DecompError> {
    let cats = vec![category(s, &c[1])?, category(s, &c[2])?];
    let targets = s.vocab.marks_where(None, Some(&cats));
    let f = s.push(TaskType::Filter, targets.clone(), params(&[("category", &cats.join(","))]), vec![]);
    let r = s.retrieve(targets.clone(), "value", vec![f]);
    s.push(TaskType::ComputeDerivedValue, targets, params(&[("op", op)]), vec![r]);
    Ok(())
}

fn total_of(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    pair_op(c, s, "sum")
}

fn difference(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    pair_op(c, s, "difference")
}

fn trend(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let word = c[1].trim().to_owned();
    let trend = params(&[("against", "order"), ("as", "trend")]);
    if let Some(field) = s.vocab.field(&word) {
        let all = s.vocab.all_marks();
        let r = s.retrieve(all.clone(), field, vec![]);
        s.push(TaskType::Correlate, all, trend, vec![r]);
    } else {
        let ser = series(s, &word)?;
        let targets = s.vocab.marks_where(Some(std::slice::from_ref(&ser)), None);
        let f = s.push(TaskType::Filter, targets.clone(), params(&[("series", &ser)]), vec![]);
        let r = s.retrieve(targets.clone(), "value", vec![f]);
        s.push(TaskType::Correlate, targets, trend, vec![r]);
    }
    Ok(())
}

fn correlation(c: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let fa = s.vocab.field(&c[1]).ok_or_else(|| unknown(&c[1]))?;
    let fb = s.vocab.field(&c[2]).ok_or_else(|| unknown(&c[2]))?;
    if fa == fb {
        return Err(unknown(&c[2]));
    }
    let all = s.vocab.all_marks();
    let channels = format!("{fa},{fb}");
    let f = s.push(TaskType::Filter, all.clone(), params(&[("channels", &channels)]), vec![]);
    s.push(TaskType::Correlate, all, params(&[("x_field", fa), ("y_field", fb), ("as", "correlation")]), vec![f]);
    Ok(())
}

fn shape(_: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let all = s.vocab.all_marks();
    let r = s.retrieve(all.clone(), "value", vec![]);
    s.push(TaskType::CharacterizeDistribution, all, Params::new(), vec![r]);
    Ok(())
}

fn outlier(_: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let all = s.vocab.all_marks();
    let r = s.retrieve(all.clone(), "value", vec![]);
    s.push(TaskType::FindAnomalies, all, Params::new(), vec![r]);
    Ok(())
}

fn clusters(_: &regex::Captures, s: &mut Steps) -> Result<(), DecompError> {
    let all = s.vocab.all_marks();
    let r = s.retrieve(all.clone(), "value", vec![]);
    s.push(TaskType::Cluster, all, Params::new(), vec![r]);
    Ok(())
}

static RULES: [(&LazyLock<Regex>, Rule); 15] = [
    (&SERIES_VALUE, series_value),
    (&PROPORTION_FOR, proportion_for),
    (&VALUE_OF, value_of),
    (&COMPARE, compare),
    (&EXTREMUM, extremum),
    (&RANGE, range),
    (&SORT, sort),
    (&COUNT, count),
    (&TOTAL_OF, total_of),
    (&DIFFERENCE, difference),
    (&TREND, trend),
    (&CORRELATION, correlation),
    (&SHAPE, shape),
    (&OUTLIER, outlier),
    (&CLUSTERS, clusters),
];

fn normalize(q: &str) -> String {
    let q = q.trim().trim_end_matches(['?', '.', '!']);
    q.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Stage one: template match into typed draft steps. Failures are reported
/// in [`Draft::rejection`].
pub fn breakdown(question: &str, vocab: &Vocabulary) -> Draft {
    let q = normalize(question);
    let mut draft = Draft { schema_version: SchemaVersion, question: question.trim().to_owned(), steps: Vec::new(), rejection: None };
    if q.is_empty() {
        draft.rejection = Some(DecompError::invalid(Violation::EmptyQuestion));
        return draft;
    }
    let mut steps = Steps { vocab, steps: Vec::new() };
    let outcome = RULES
        .iter()
        .find_map(|(re, rule)| re.captures(&q).map(|c| rule(&c, &mut steps)))
        .unwrap_or_else(|| Err(DecompError::TemplateUnmatched { question: draft.question.clone() }));
    match outcome {
        Ok(()) => draft.steps = steps.steps,
        Err(e) => draft.rejection = Some(e),
    }
    draft
}

/// Stage two: checks grounding, splits abstract steps (`scope = each`) into
/// one child per category and assigns ids and dependencies.
pub fn refine(draft: &Draft, vocab: &Vocabulary) -> Result<Refined, DecompError> {
    let mut ids: Vec<Vec<u32>> = Vec::with_capacity(draft.steps.len());
    let mut out: Vec<Subtask> = Vec::new();
    for (i, step) in draft.steps.iter().enumerate() {
        let ungroundable = |reason: String| DecompError::RefineUngroundable { step: i, reason };
        let task_type = step.task_type.ok_or_else(|| DecompError::invalid(Violation::UntypedStep { step: i }))?;
        if let Some(missing) = step.targets.iter().find(|t| !vocab.region_ids.contains(t)) {
            return Err(ungroundable(format!("region {missing} does not exist")));
        }
        if step.targets.is_empty() && !step.params.contains_key("axis") {
            return Err(ungroundable("no target region or axis".into()));
        }
        if let Some(name) = vocab.ungrounded_param(&step.params) {
            return Err(ungroundable(format!("`{name}` names no series or category")));
        }
        let mut deps = Vec::new();
        for &c in &step.consumes {
            let produced = ids.get(c).ok_or_else(|| ungroundable(format!("consumes later step {c}")))?;
            deps.extend(produced.iter().copied());
        }
        let cats = step.params.get("category").map(|c| split_list(c)).unwrap_or_default();
        let children: Vec<(Params, Vec<u32>)> = if step.params.get("scope").map(String::as_str) == Some("each") && cats.len() >= 2 {
            cats.iter()
                .map(|c| {
                    let mut p = step.params.clone();
                    p.remove("scope");
                    p.insert("category".into(), c.clone());
                    let targets: Vec<u32> =
                        vocab.marks_where(None, Some(std::slice::from_ref(c))).into_iter().filter(|t| step.targets.contains(t)).collect();
                    (p, targets)
                })
                .collect()
        } else {
            let mut p = step.params.clone();
            p.remove("scope");
            vec![(p, step.targets.clone())]
        };
        let mut mine = Vec::new();
        for (p, targets) in children {
            let id = out.len() as u32 + 1;
            let instruction = if p == step.params && !step.instruction.trim().is_empty() { step.instruction.clone() } else { phrase(task_type, &p) };
            out.push(Subtask { id, task_type, instruction, target_region_ids: targets, params: p, deps: deps.clone() });
            mine.push(id);
        }
        ids.push(mine);
    }
    Ok(Refined { schema_version: SchemaVersion, question: draft.question.clone(), subtasks: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::TaskBank;
    use crate::synth::render;

    fn vocab_for(chart: &str) -> Vocabulary {
        let bank = TaskBank::bundled();
        let (_, gt) = render(bank.chart(chart).unwrap()).unwrap();
        let refs: Vec<RegionRef> = gt
            .regions
            .iter()
            .map(|r| RegionRef { id: r.id, role: r.role, label: r.label.clone(), series: r.series.clone(), category: r.category.clone() })
            .collect();
        Vocabulary::new(&gt.spec, &refs)
    }

    fn types(d: &Draft) -> Vec<TaskType> {
        d.steps.iter().filter_map(|s| s.task_type).collect()
    }

    #[test]
    fn value_lookup_is_filter_then_retrieve() {
        let v = vocab_for("bar_basic");
        let d = breakdown("What is the value of bar B?", &v);
        assert_eq!(types(&d), vec![TaskType::Filter, TaskType::RetrieveValue]);
        assert_eq!(d.steps[0].params["category"], "B");
        assert_eq!(d.steps[1].params["axis"], "VALUE");
        assert_eq!(d.steps[1].consumes, vec![0]);
    }

    #[test]
    fn smallest_gold_proportion_has_four_steps() {
        let v = vocab_for("olympic");
        let d = breakdown("Which country has the smallest proportion of gold medals?", &v);
        assert_eq!(
            types(&d),
            vec![TaskType::Filter, TaskType::RetrieveValue, TaskType::ComputeDerivedValue, TaskType::FindExtremum]
        );
        assert_eq!(d.steps[0].targets.len(), 4);
        assert_eq!(d.steps[3].params["op"], "min");
    }

    #[test]
    fn comparison_splits_per_country() {
        let v = vocab_for("olympic");
        let d = breakdown("Which country has a higher proportion of gold medals, USA or FRA?", &v);
        let r = refine(&d, &v).unwrap();
        let kinds: Vec<TaskType> = r.subtasks.iter().map(|s| s.task_type).collect();
        assert_eq!(
            kinds,
            vec![
                TaskType::Filter,
                TaskType::RetrieveValue,
                TaskType::ComputeDerivedValue,
                TaskType::ComputeDerivedValue,
                TaskType::FindExtremum
            ]
        );
        assert_eq!(r.subtasks[2].params["category"], "USA");
        assert_eq!(r.subtasks[3].params["category"], "FRA");
        assert_eq!(r.subtasks[4].deps, vec![3, 4]);
    }

    #[test]
    fn range_is_two_extrema_and_a_range() {
        let v = vocab_for("line_price");
        let d = breakdown("What is the range of prices?", &v);
        assert_eq!(types(&d), vec![TaskType::FindExtremum, TaskType::FindExtremum, TaskType::DetermineRange]);
    }

    #[test]
    fn correlation_skips_the_size_channel() {
        let v = vocab_for("bubble");
        let d = breakdown("Is there a correlation between GDP and LIFE EXPECTANCY?", &v);
        assert_eq!(types(&d), vec![TaskType::Filter, TaskType::Correlate]);
        assert_eq!(d.steps[0].params["channels"], "x,value");
        assert!(!d.steps[1].params.values().any(|v| v == "size"));
    }

    #[test]
    fn failures() {
        let v = vocab_for("olympic");
        let d = breakdown("Which country has the smallest proportion of platinum medals?", &v);
        assert!(d.rejection.unwrap().has("UNKNOWN_TARGET"));
        let d = breakdown("Tell me a story about this chart", &v);
        assert_eq!(d.rejection.unwrap().code(), "TEMPLATE_UNMATCHED");
        let d = breakdown("   ", &v);
        assert!(d.rejection.unwrap().has("EMPTY_QUESTION"));
    }

    #[test]
    fn refine_rejects_missing_regions_and_keeps_atomic_steps() {
        let v = vocab_for("bar_basic");
        let mut d = breakdown("What is the value of bar B?", &v);
        let r = refine(&d, &v).unwrap();
        assert_eq!(r.subtasks.len(), 2);
        assert_eq!(r.subtasks[1].deps, vec![1]);
        assert_eq!(r.subtasks[0].instruction, d.steps[0].instruction);
        d.steps[0].targets.push(999);
        assert_eq!(refine(&d, &v).unwrap_err().code(), "REFINE_UNGROUNDABLE");
    }
}
