use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, SweepRow};

/// How "balanced precision and recall" is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceCriterion {
    /// Maximize `min(P, R)`.
    #[default]
    MaxMin,
    /// Minimize `|P - R|`.
    MinAbsDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSettings {
    /// Minimum train recall for the precision variant.
    pub recall_floor: f64,
    pub balance: BalanceCriterion,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings { recall_floor: 0.05, balance: BalanceCriterion::MaxMin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    /// `tm-f1`, `tm-b` or `tm-p`.
    pub name: String,
    /// Position of the chosen cell in the sweep table.
    pub index: usize,
    pub row: SweepRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variants {
    pub tm_f1: Variant,
    pub tm_b: Variant,
    pub tm_p: Variant,
    /// No cell reached the recall floor; `tm_p` is the most precise cell overall.
    pub tm_p_below_floor: bool,
}

impl Variants {
    pub fn all(&self) -> [&Variant; 3] {
        [&self.tm_f1, &self.tm_b, &self.tm_p]
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// Picks the cell that sorts first under `cmp`, breaking remaining ties by
/// smaller topic count and then by table position.
fn pick(rows: &[SweepRow], eligible: impl Fn(&SweepRow) -> bool, cmp: impl Fn(&SweepRow, &SweepRow) -> Ordering) -> Option<usize> {
    (0..rows.len())
        .filter(|&i| eligible(&rows[i]))
        .min_by(|&i, &j| {
            cmp(&rows[i], &rows[j]).then(rows[i].num_topics.cmp(&rows[j].num_topics)).then(i.cmp(&j))
        })
}

/// Chooses the three reported configurations from a sweep table.
///
/// * `tm-f1`: highest F1.
/// * `tm-b`: highest `min(P, R)` (or smallest `|P - R|`), ties by F1.
/// * `tm-p`: highest precision among cells with recall at least the floor,
///   ties by recall then F1. If no cell reaches the floor the most precise
///   cell overall is taken and [`Variants::tm_p_below_floor`] is set.
///
/// Remaining ties go to the smaller model, then to the earlier cell.
pub fn select_variants(rows: &[SweepRow], settings: &SelectionSettings) -> Result<Variants, ClassifierError> {
    if rows.is_empty() {
        return Err(ClassifierError::NoResults);
    }
    let variant = |name: &str, index: usize| Variant { name: name.into(), index, row: rows[index].clone() };

    let f1 = pick(rows, |_| true, |a, b| desc(a.f1, b.f1)).expect("rows non-empty");
    let balanced = pick(
        rows,
        |_| true,
        |a, b| {
            let primary = match settings.balance {
                BalanceCriterion::MaxMin => desc(a.precision.min(a.recall), b.precision.min(b.recall)),
                BalanceCriterion::MinAbsDiff => {
                    (a.precision - a.recall).abs().total_cmp(&(b.precision - b.recall).abs())
                }
            };
            primary.then(desc(a.f1, b.f1))
        },
    )
    .expect("rows non-empty");
    let by_precision = |a: &SweepRow, b: &SweepRow| {
        desc(a.precision, b.precision).then(desc(a.recall, b.recall)).then(desc(a.f1, b.f1))
    };
    let (precise, below_floor) = match pick(rows, |r| r.recall >= settings.recall_floor, by_precision) {
        Some(i) => (i, false),
        None => {
            log::warn!(
                "no sweep cell reaches recall {}; tm-p falls back to the most precise cell",
                settings.recall_floor
            );
            (pick(rows, |_| true, by_precision).expect("rows non-empty"), true)
        }
    };
    Ok(Variants {
        tm_f1: variant("tm-f1", f1),
        tm_b: variant("tm-b", balanced),
        tm_p: variant("tm-p", precise),
        tm_p_below_floor: below_floor,
    })
}
