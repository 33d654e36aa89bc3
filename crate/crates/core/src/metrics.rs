//! Solution-quality measurements: primal gap, primal integral, shifted
//! geometric mean, pairwise comparison and benchmark tables.

use crate::instance::ProblemClass;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Relative threshold under which two objective values are the same.
pub const SAME_TOL: f64 = 1e-5;
/// Gap fraction under which a run counts as an ε-gap hit.
pub const EPS_GAP: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shifted geometric mean of an empty list")]
    Empty,
    #[error("negative value {0} in shifted geometric mean")]
    Negative(f64),
    #[error("instance sets differ: {0:?}")]
    Mismatch(Vec<String>),
    #[error("csv: {0}")]
    Csv(String),
}

/// Timestamped sequence of strictly improving objective values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IncumbentTrace {
    /// `(seconds since start, objective)`.
    pub events: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl IncumbentTrace {
    pub fn new(horizon: f64) -> Self {
        Self { events: Vec::new(), horizon }
    }

    /// Records `value` at time `t` when it strictly improves on the last
    /// event; times are forced to be strictly increasing.
    pub fn record(&mut self, t: f64, value: f64) -> bool {
        if !value.is_finite() || self.best().is_some_and(|b| value >= b) {
            return false;
        }
        let t = match self.events.last() {
            Some(&(last, _)) if t <= last => last + 1e-9,
            _ => t.max(0.0),
        };
        self.events.push((t, value));
        true
    }

    pub fn best(&self) -> Option<f64> {
        self.events.last().map(|e| e.1)
    }

    /// Time of the first solution.
    pub fn first_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.0)
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Union of two traces keeping only improving events in time order.
    pub fn merged(&self, other: &IncumbentTrace) -> IncumbentTrace {
        let mut all: Vec<(f64, f64)> = self.events.iter().chain(&other.events).copied().collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut out = IncumbentTrace::new(self.horizon.max(other.horizon));
        for (t, v) in all {
            out.record(t, v);
        }
        out
    }

    /// Events with values mapped by `f` (e.g. to the reported sense).
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        self.events.iter().map(|&(t, v)| (t, f(v))).collect()
    }
}

/// `|v - v*| / max(|v|, |v*|)` in percent; zero when both are zero.
pub fn primal_gap(v: f64, v_star: f64) -> f64 {
    let den = v.abs().max(v_star.abs());
    if den == 0.0 {
        0.0
    } else {
        (v - v_star).abs() / den * 100.0
    }
}

/// Primal integral with fractional gaps: the gap is 1 until the first
/// solution, then the gap of the latest incumbent until the horizon.
/// An empty trace integrates to the horizon.
///
/// Gaps are capped at 1 (the no-solution value). Past 100 % the raw gap
/// is not monotone in the objective when `v` and `v_star` differ in sign,
/// and an uncapped integral could grow when a better incumbent arrives.
pub fn primal_integral(trace: &IncumbentTrace, v_star: f64) -> f64 {
    let gaps: Vec<(f64, f64)> = trace
        .events
        .iter()
        .map(|&(t, v)| (t, (primal_gap(v, v_star) / 100.0).min(1.0)))
        .collect();
    primal_integral_from_gaps(&gaps, trace.horizon)
}

/// Primal integral from `(t_i, g_i)` pairs with gaps as fractions.
pub fn primal_integral_from_gaps(events: &[(f64, f64)], horizon: f64) -> f64 {
    let Some(&(t1, _)) = events.first() else {
        return horizon;
    };
    let mut total = t1.min(horizon);
    for (k, &(t, g)) in events.iter().enumerate() {
        let next = events.get(k + 1).map_or(horizon, |e| e.0).min(horizon);
        total += g * (next - t.min(horizon)).max(0.0);
    }
    total
}

/// `exp(mean(ln(v + 1))) - 1`.
pub fn shifted_geomean(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&v) = values.iter().find(|&&v| v < 0.0) {
        return Err(MetricsError::Negative(v));
    }
    let mean = values.iter().map(|v| (v + 1.0).ln()).sum::<f64>() / values.len() as f64;
    Ok(mean.exp() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    Same,
    Better,
    Worse,
    None,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Comparison::Same => "Same",
            Comparison::Better => "Better",
            Comparison::Worse => "Worse",
            Comparison::None => "None",
        };
        f.write_str(s)
    }
}

/// Compares two minimization objectives from the point of view of `v1`.
pub fn compare(v1: f64, v2: f64) -> Comparison {
    let den = v1.abs().max(v2.abs());
    let rel = if den == 0.0 { 0.0 } else { (v1 - v2).abs() / den };
    if rel <= SAME_TOL {
        Comparison::Same
    } else if v1 < v2 {
        Comparison::Better
    } else {
        Comparison::Worse
    }
}

/// [`compare`] with `None` when either side has no solution.
pub fn compare_optional(v1: Option<f64>, v2: Option<f64>) -> Comparison {
    match (v1, v2) {
        (Some(a), Some(b)) => compare(a, b),
        _ => Comparison::None,
    }
}

/// True when the gap (given in percent) is below `1e-4` as a fraction.
pub fn eps_gap_hit(gap_percent: f64) -> bool {
    gap_percent / 100.0 < EPS_GAP
}

/// One benchmark row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub instance: String,
    pub class: ProblemClass,
    pub found: bool,
    /// Reported-sense objective of the final incumbent.
    pub objective: Option<f64>,
    pub best_known: Option<f64>,
    pub gap_percent: Option<f64>,
    pub eps_gap_hit: Option<bool>,
    pub primal_integral: Option<f64>,
    /// Time to the first feasible solution (the horizon when none).
    pub fft: f64,
    pub wall_time_s: f64,
    pub comparison: Option<Comparison>,
}

impl BenchRecord {
    /// Row from a trace of reported-sense values. Without a solution the
    /// gap is 100 and the primal integral equals the horizon; without a
    /// best-known value the gap fields are empty.
    pub fn from_trace(
        instance: impl Into<String>,
        class: ProblemClass,
        events: &[(f64, f64)],
        horizon: f64,
        best_known: Option<f64>,
        wall_time_s: f64,
    ) -> Self {
        let found = !events.is_empty();
        let objective = events.last().map(|e| e.1);
        let (gap, pi) = match (best_known, objective) {
            (Some(b), Some(v)) => {
                let gaps: Vec<(f64, f64)> = events.iter().map(|&(t, v)| (t, primal_gap(v, b) / 100.0)).collect();
                (Some(primal_gap(v, b)), Some(primal_integral_from_gaps(&gaps, horizon)))
            }
            (Some(_), None) => (Some(100.0), Some(horizon)),
            (None, _) => (None, None),
        };
        Self {
            instance: instance.into(),
            class,
            found,
            objective,
            best_known,
            gap_percent: gap,
            eps_gap_hit: gap.map(eps_gap_hit),
            primal_integral: pi,
            fft: events.first().map_or(horizon, |e| e.0),
            wall_time_s,
            comparison: None,
        }
    }
}

/// Per-class aggregate; averages are shifted geometric means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    /// Class name, or `All`.
    pub class: String,
    pub instances: usize,
    pub found: usize,
    pub gap_percent: Option<f64>,
    pub eps_gap: usize,
    pub primal_integral: Option<f64>,
    pub fft: Option<f64>,
}

fn summary_of<'a>(name: &str, rows: impl Iterator<Item = &'a BenchRecord>) -> ClassSummary {
    let rows: Vec<&BenchRecord> = rows.collect();
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_percent).collect();
    let pis: Vec<f64> = rows.iter().filter_map(|r| r.primal_integral).collect();
    let ffts: Vec<f64> = rows.iter().filter(|r| r.found).map(|r| r.fft).collect();
    ClassSummary {
        class: name.to_string(),
        instances: rows.len(),
        found: rows.iter().filter(|r| r.found).count(),
        gap_percent: shifted_geomean(&gaps).ok(),
        eps_gap: rows.iter().filter(|r| r.eps_gap_hit == Some(true)).count(),
        primal_integral: shifted_geomean(&pis).ok(),
        fft: shifted_geomean(&ffts).ok(),
    }
}

/// Aggregates per class (in MIBQP, MIQP, MIQCP order) plus an `All` row.
pub fn summarize(records: &[BenchRecord]) -> Vec<ClassSummary> {
    let mut out = Vec::new();
    for class in [ProblemClass::Mibqp, ProblemClass::Miqp, ProblemClass::Miqcp] {
        if records.iter().any(|r| r.class == class) {
            out.push(summary_of(&class.to_string(), records.iter().filter(|r| r.class == class)));
        }
    }
    out.push(summary_of("All", records.iter()));
    out
}

#[derive(Serialize)]
struct CsvRow<'a> {
    instance: &'a str,
    class: String,
    found: bool,
    objective: Option<f64>,
    best_known: Option<f64>,
    gap_percent: Option<f64>,
    eps_gap: Option<bool>,
    primal_integral: Option<f64>,
    fft: f64,
    wall_time_s: f64,
    comparison: Option<String>,
}

/// CSV table with a header row (always present).
pub fn records_to_csv(records: &[BenchRecord]) -> Result<String, MetricsError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "instance",
        "class",
        "found",
        "objective",
        "best_known",
        "gap_percent",
        "eps_gap",
        "primal_integral",
        "fft",
        "wall_time_s",
        "comparison",
    ])
    .map_err(|e| MetricsError::Csv(e.to_string()))?;
    for r in records {
        w.serialize(CsvRow {
            instance: &r.instance,
            class: r.class.to_string(),
            found: r.found,
            objective: r.objective,
            best_known: r.best_known,
            gap_percent: r.gap_percent,
            eps_gap: r.eps_gap_hit,
            primal_integral: r.primal_integral,
            fft: r.fft,
            wall_time_s: r.wall_time_s,
            comparison: r.comparison.map(|c| c.to_string()),
        })
        .map_err(|e| MetricsError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads a best-known table with columns `instance,objective`.
pub fn parse_best_known(text: &str) -> Result<BTreeMap<String, f64>, MetricsError> {
    #[derive(Deserialize)]
    struct Row {
        instance: String,
        objective: f64,
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for row in r.deserialize::<Row>() {
        let row = row.map_err(|e| MetricsError::Csv(e.to_string()))?;
        out.insert(row.instance, row.objective);
    }
    Ok(out)
}

/// Per-instance comparison of two result sets keyed by instance name.
pub fn compare_sets(
    a: &BTreeMap<String, Option<f64>>,
    b: &BTreeMap<String, Option<f64>>,
) -> Result<BTreeMap<String, Comparison>, MetricsError> {
    let diff: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .cloned()
        .collect();
    if !diff.is_empty() {
        return Err(MetricsError::Mismatch(diff));
    }
    Ok(a.iter().map(|(k, &v)| (k.clone(), compare_optional(v, b[k]))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gap_examples() {
        assert!((primal_gap(110.0, 100.0) - 100.0 / 11.0).abs() < 1e-12);
        assert_eq!(primal_gap(7.0, 7.0), 0.0);
        assert_eq!(primal_gap(-50.0, 100.0), 150.0);
        assert_eq!(primal_gap(0.0, 0.0), 0.0);
    }

    #[test]
    fn integral_examples() {
        let t = IncumbentTrace { events: vec![(10.0, 150.0), (20.0, 100.0)], horizon: 30.0 };
        // gap(150, 100) = 50/150; use explicit gaps for the hand example
        assert_eq!(primal_integral_from_gaps(&[(10.0, 0.5), (20.0, 0.0)], 30.0), 15.0);
        assert_eq!(primal_integral_from_gaps(&[(5.0, 0.0)], 300.0), 5.0);
        assert_eq!(primal_integral(&IncumbentTrace::new(300.0), 1.0), 300.0);
        assert!((primal_integral(&t, 100.0) - (10.0 + 10.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn integral_caps_sign_crossing_gaps() {
        // gap(3, -5) = 160 % counts as 1, like having no solution
        let t = IncumbentTrace { events: vec![(10.0, 3.0)], horizon: 20.0 };
        assert_eq!(primal_integral(&t, -5.0), 20.0);
        let better = IncumbentTrace { events: vec![(5.0, 100.0), (10.0, 3.0)], horizon: 20.0 };
        assert!(primal_integral(&better, -5.0) <= primal_integral(&t, -5.0));
    }

    #[test]
    fn geomean_examples() {
        assert_eq!(shifted_geomean(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((shifted_geomean(&[1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((shifted_geomean(&[3.0, 8.0]).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(shifted_geomean(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn compare_examples() {
        assert_eq!(compare(7.0, 7.0), Comparison::Same);
        assert_eq!(compare(1.0, 1.0000099), Comparison::Same);
        assert_eq!(compare(5.0, 6.0), Comparison::Better);
        assert_eq!(compare(6.0, 5.0), Comparison::Worse);
        assert_eq!(compare(1.0, 1.0001), Comparison::Better);
        assert_eq!(compare_optional(Some(1.0), None), Comparison::None);
    }

    #[test]
    fn eps_gap_examples() {
        assert!(eps_gap_hit(0.0));
        assert!(eps_gap_hit(5e-5 * 100.0));
        assert!(!eps_gap_hit(2e-4 * 100.0));
    }

    #[test]
    fn trace_records_only_improvements() {
        let mut t = IncumbentTrace::new(10.0);
        assert!(t.record(1.0, 5.0));
        assert!(!t.record(2.0, 5.0));
        assert!(t.record(1.0, 4.0));
        assert!(t.events[1].0 > t.events[0].0);
    }

    #[test]
    fn bench_record_conventions() {
        let r = BenchRecord::from_trace("a", ProblemClass::Miqp, &[], 300.0, Some(1.0), 300.0);
        assert_eq!(r.gap_percent, Some(100.0));
        assert_eq!(r.primal_integral, Some(300.0));
        assert!(!r.found);
        let r = BenchRecord::from_trace("a", ProblemClass::Miqp, &[(1.0, 2.0)], 300.0, None, 3.0);
        assert!(r.found && r.gap_percent.is_none());
    }

    #[test]
    fn csv_header_and_best_known() {
        let csv = records_to_csv(&[]).unwrap();
        assert!(csv.starts_with("instance,class,found"));
        let bk = parse_best_known("instance,objective\na, 1.5\nb,-2\n").unwrap();
        assert_eq!(bk["b"], -2.0);
    }

    #[test]
    fn mismatched_sets_list_difference() {
        let a: BTreeMap<String, Option<f64>> = [("x".into(), Some(1.0))].into();
        let b: BTreeMap<String, Option<f64>> = [("y".into(), Some(1.0))].into();
        assert_eq!(compare_sets(&a, &b), Err(MetricsError::Mismatch(vec!["x".into(), "y".into()])));
    }

    proptest! {
        #[test]
        fn gap_symmetric_and_scale_invariant(v in -1e3f64..1e3, w in -1e3f64..1e3, c in 0.01f64..100.0) {
            prop_assert!((primal_gap(v, w) - primal_gap(w, v)).abs() < 1e-9);
            prop_assert!((primal_gap(c * v, c * w) - primal_gap(v, w)).abs() < 1e-7);
        }

        #[test]
        fn compare_antisymmetric(v in -1e3f64..1e3, w in -1e3f64..1e3) {
            prop_assert_eq!(compare(v, w) == Comparison::Better, compare(w, v) == Comparison::Worse);
        }

        #[test]
        fn earlier_better_incumbent_never_raises_integral(
            times in proptest::collection::vec(0.1f64..100.0, 1..6),
            vals in proptest::collection::vec(0.0f64..50.0, 1..6),
            t_new in 0.0f64..100.0,
        ) {
            let mut ts = times.clone();
            ts.sort_by(f64::total_cmp);
            let mut vs = vals.clone();
            vs.sort_by(|a, b| b.total_cmp(a));
            let mut trace = IncumbentTrace::new(100.0);
            for (t, v) in ts.iter().zip(&vs) {
                trace.record(*t, 10.0 + *v);
            }
            let base = primal_integral(&trace, 10.0);
            // insert an incumbent no worse than whatever is current at t_new
            let current = trace.events.iter().filter(|e| e.0 <= t_new).last().map_or(f64::INFINITY, |e| e.1);
            let value = current.min(10.0 + vs[0]) - 0.5;
            let mut refined = IncumbentTrace::new(100.0);
            let mut events: Vec<(f64, f64)> = trace.events.clone();
            events.push((t_new, value.max(10.0)));
            events.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = f64::INFINITY;
            for (t, v) in events {
                let v = v.min(best);
                if v < best {
                    refined.record(t, v);
                    best = v;
                }
            }
            prop_assert!(primal_integral(&refined, 10.0) <= base + 1e-9);
        }
    }
}
