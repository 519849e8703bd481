//! Rendering of analysis output into ranked alignment tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demographics::{DemographicCategory, DemographicGroup};
use crate::error::{Error, Result};
use crate::stats::{AnalysisOutput, GroupSummary};

pub const UNDEFINED: &str = "---";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Invalid(format!("unknown report format {other:?}"))),
        }
    }
}

/// Ordering of sections, rows, and columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportLayout {
    /// Section order; empty means every category in report order.
    #[serde(default)]
    pub categories: Vec<DemographicCategory>,
    /// Preferred row order by group key. Groups not listed follow in key
    /// order, so no row is ever dropped.
    #[serde(default)]
    pub rows: BTreeMap<DemographicCategory, Vec<String>>,
    /// Column order; empty means the analysis's own target order.
    #[serde(default)]
    pub targets: Vec<String>,
    /// Optional column headings keyed by target id.
    #[serde(default)]
    pub target_titles: BTreeMap<String, String>,
}

/// Row indices attaining a column's minimum and maximum.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: BTreeSet<usize>,
    pub max: BTreeSet<usize>,
}

/// Marks every row at the column max and min. Undefined cells are skipped;
/// with fewer than two defined cells nothing is marked.
pub fn mark_extremes(values: &[Option<f64>]) -> Extremes {
    let defined: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if defined.len() < 2 {
        return Extremes::default();
    }
    let max = defined.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let min = defined.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    Extremes {
        min: defined.iter().filter(|&&(_, v)| v == min).map(|&(i, _)| i).collect(),
        max: defined.iter().filter(|&&(_, v)| v == max).map(|&(i, _)| i).collect(),
    }
}

/// `%.2e` in the C/Python sense: `2.04e-05`, `1.00e+00`.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.2e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn fixed(x: Option<f64>, decimals: usize) -> String {
    match x {
        Some(v) => format!("{v:.decimals$}"),
        None => UNDEFINED.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct CellView {
    r: Option<f64>,
    p_value: Option<f64>,
    p_adjusted: Option<f64>,
    significant: bool,
    n_instances: Option<usize>,
    is_max: bool,
    is_min: bool,
}

#[derive(Debug, Clone, Serialize)]
struct RowView {
    group: String,
    key: String,
    label: String,
    annotation_count: usize,
    annotator_count: usize,
    alpha: Option<f64>,
    analyzed: bool,
    cells: BTreeMap<String, CellView>,
    #[serde(skip)]
    ordered: Vec<CellView>,
}

#[derive(Debug, Clone, Serialize)]
struct SectionView {
    category: DemographicCategory,
    title: &'static str,
    rows: Vec<RowView>,
}

#[derive(Debug, Serialize)]
struct DocumentView<'a> {
    family_alpha: f64,
    m_hypotheses: usize,
    per_test_threshold: f64,
    targets: &'a [String],
    sections: Vec<SectionView>,
}

fn build<'a>(output: &'a AnalysisOutput, layout: &ReportLayout, targets: &'a [String]) -> Result<DocumentView<'a>> {
    let known: BTreeSet<&str> = output.targets.iter().map(String::as_str).collect();
    for t in targets {
        if !known.contains(t.as_str()) {
            return Err(Error::UnknownTarget(t.clone()));
        }
    }
    let listed: BTreeSet<&str> = targets.iter().map(String::as_str).collect();
    if let Some(missing) = output.targets.iter().find(|t| !listed.contains(t.as_str())) {
        return Err(Error::Invalid(format!("layout omits target {missing:?}")));
    }

    let categories: Vec<DemographicCategory> = if layout.categories.is_empty() {
        DemographicCategory::ALL.to_vec()
    } else {
        layout.categories.clone()
    };
    let mut by_category: BTreeMap<DemographicCategory, Vec<&GroupSummary>> = BTreeMap::new();
    for summary in &output.groups {
        by_category.entry(summary.group.category).or_default().push(summary);
    }
    if let Some(c) = by_category.keys().find(|c| !categories.contains(c)) {
        return Err(Error::Invalid(format!("layout omits category {}", c.title())));
    }

    let mut sections = Vec::new();
    for category in categories {
        let Some(mut groups) = by_category.remove(&category) else {
            continue;
        };
        let preferred = layout.rows.get(&category).cloned().unwrap_or_default();
        let rank = |g: &DemographicGroup| preferred.iter().position(|k| k == &g.key).unwrap_or(usize::MAX);
        groups.sort_by(|a, b| rank(&a.group).cmp(&rank(&b.group)).then_with(|| a.group.cmp(&b.group)));

        let mut rows: Vec<RowView> = groups
            .iter()
            .map(|s| RowView {
                group: s.group.to_string(),
                key: s.group.key.clone(),
                label: s.group.display_key(),
                annotation_count: s.annotation_count,
                annotator_count: s.annotator_count,
                alpha: s.alpha,
                analyzed: s.analyzed,
                cells: BTreeMap::new(),
                ordered: targets
                    .iter()
                    .map(|t| {
                        let cell = output.cell(&s.group, t);
                        CellView {
                            r: cell.map(|c| c.r),
                            p_value: cell.and_then(|c| c.p_value),
                            p_adjusted: cell.and_then(|c| c.p_adjusted),
                            significant: cell.is_some_and(|c| c.significant),
                            n_instances: cell.map(|c| c.n_instances),
                            is_max: false,
                            is_min: false,
                        }
                    })
                    .collect(),
            })
            .collect();
        for col in 0..targets.len() {
            let values: Vec<Option<f64>> = rows.iter().map(|r| r.ordered[col].r).collect();
            let marks = mark_extremes(&values);
            for i in marks.max {
                rows[i].ordered[col].is_max = true;
            }
            for i in marks.min {
                rows[i].ordered[col].is_min = true;
            }
        }
        for row in &mut rows {
            row.cells = targets.iter().cloned().zip(row.ordered.iter().cloned()).collect();
        }
        sections.push(SectionView {
            category,
            title: category.title(),
            rows,
        });
    }

    Ok(DocumentView {
        family_alpha: output.config.family_alpha,
        m_hypotheses: output.m_hypotheses,
        per_test_threshold: output.per_test_threshold,
        targets,
        sections,
    })
}

/// Renders the main table and the adjusted p-value appendix.
///
/// Fails if the layout names a target absent from `output` or leaves one
/// out. Output bytes depend only on the inputs.
pub fn render(output: &AnalysisOutput, layout: &ReportLayout, format: ReportFormat) -> Result<String> {
    let targets: Vec<String> = if layout.targets.is_empty() {
        output.targets.clone()
    } else {
        layout.targets.clone()
    };
    let doc = build(output, layout, &targets)?;
    match format {
        ReportFormat::Markdown => Ok(markdown(&doc, layout)),
        ReportFormat::Csv => csv_table(&doc),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn md_r(cell: &CellView) -> String {
    let Some(r) = cell.r else {
        return UNDEFINED.to_string();
    };
    let mut s = format!("{r:.2}");
    if cell.significant {
        s.push_str("\\*");
    }
    match (cell.is_max, cell.is_min) {
        (true, true) => format!("**_{s}_**"),
        (true, false) => format!("**{s}**"),
        (false, true) => format!("_{s}_"),
        (false, false) => s,
    }
}

fn heading<'a>(layout: &'a ReportLayout, target: &'a str) -> &'a str {
    layout.target_titles.get(target).map_or(target, String::as_str)
}

fn markdown(doc: &DocumentView, layout: &ReportLayout) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Alignment report\n");
    let _ = writeln!(
        out,
        "Pearson's r between each group's mean score and each target. # is the group's annotation count, \
         alpha its Krippendorff's alpha. \\* marks p < {} after Bonferroni correction \
         (family alpha {}, m = {}). Bold is the category maximum, italic the minimum.\n",
        format_sci(doc.per_test_threshold),
        doc.family_alpha,
        doc.m_hypotheses
    );
    let header = |out: &mut String, first: &str, extra: &[&str]| {
        let mut cols: Vec<&str> = vec![first];
        cols.extend_from_slice(extra);
        cols.extend(doc.targets.iter().map(|t| heading(layout, t)));
        let _ = writeln!(out, "| {} |", cols.join(" | "));
        let aligns: Vec<&str> = std::iter::once("---").chain(cols.iter().skip(1).map(|_| "---:")).collect();
        let _ = writeln!(out, "| {} |", aligns.join(" | "));
    };

    for section in &doc.sections {
        let _ = writeln!(out, "## {}\n", section.title);
        header(&mut out, "Group", &["#", "alpha"]);
        for row in &section.rows {
            let mut cols = vec![row.label.clone(), row.annotation_count.to_string(), fixed(row.alpha, 2)];
            cols.extend(row.ordered.iter().map(md_r));
            let _ = writeln!(out, "| {} |", cols.join(" | "));
        }
        out.push('\n');
    }

    let _ = writeln!(out, "## Adjusted p-values\n");
    header(&mut out, "Group", &[]);
    for section in &doc.sections {
        let mut cols = vec![format!("**{}**", section.title)];
        cols.extend(doc.targets.iter().map(|_| String::new()));
        let _ = writeln!(out, "| {} |", cols.join(" | "));
        for row in &section.rows {
            let mut cols = vec![row.label.clone()];
            cols.extend(
                row.ordered
                    .iter()
                    .map(|c| c.p_adjusted.map_or_else(|| UNDEFINED.to_string(), format_sci)),
            );
            let _ = writeln!(out, "| {} |", cols.join(" | "));
        }
    }
    out
}

fn csv_table(doc: &DocumentView) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "category",
        "group",
        "label",
        "annotation_count",
        "alpha",
        "target_id",
        "r",
        "p_value",
        "p_adjusted",
        "significant",
        "n_instances",
        "is_max",
        "is_min",
    ])?;
    for section in &doc.sections {
        for row in &section.rows {
            for (target, cell) in doc.targets.iter().zip(&row.ordered) {
                let sci = |p: Option<f64>| p.map_or_else(|| UNDEFINED.to_string(), format_sci);
                w.write_record([
                    section.title.to_string(),
                    row.group.clone(),
                    row.label.clone(),
                    row.annotation_count.to_string(),
                    fixed(row.alpha, 4),
                    target.clone(),
                    fixed(cell.r, 4),
                    sci(cell.p_value),
                    sci(cell.p_adjusted),
                    cell.significant.to_string(),
                    cell.n_instances.map_or_else(|| UNDEFINED.to_string(), |n| n.to_string()),
                    cell.is_max.to_string(),
                    cell.is_min.to_string(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
