use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Mean using Neumaier-compensated summation, so the result does not depend
/// on summation order beyond rounding of the final division. 0 for an empty
/// input.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum + comp) / n as f64
    }
}

/// Scores of one evaluated shape; metrics that were not requested are
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_25: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg_map: Option<f64>,
}

/// Dataset-level scores with the per-shape breakdown. Every average is the
/// mean of the corresponding per-shape column, present only when every row
/// carries that column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub shapes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap_25: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg_map: Option<f64>,
    pub per_shape: Vec<ShapeMetrics>,
}

fn column_mean(rows: &[ShapeMetrics], f: impl Fn(&ShapeMetrics) -> Option<f64>) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let v: Option<Vec<f64>> = rows.iter().map(f).collect();
    v.map(compensated_mean)
}

impl MetricReport {
    pub fn from_shapes(per_shape: Vec<ShapeMetrics>) -> Self {
        MetricReport {
            shapes: per_shape.len(),
            ap_25: column_mean(&per_shape, |s| s.ap_25),
            edge_error: column_mean(&per_shape, |s| s.edge_error),
            seg_map: column_mean(&per_shape, |s| s.seg_map),
            per_shape,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width text table: one row per shape followed by the mean row.
    /// Columns appear when the mean row has them.
    pub fn to_table(&self) -> String {
        let name_w = self
            .per_shape
            .iter()
            .map(|s| s.name.len())
            .chain(["shape".len(), "mean".len()])
            .max()
            .unwrap_or(5);
        let cols: Vec<(&str, fn(&ShapeMetrics) -> Option<f64>)> = [
            ("AP@0.25", (|s: &ShapeMetrics| s.ap_25) as fn(&ShapeMetrics) -> Option<f64>, self.ap_25),
            ("EE", |s| s.edge_error, self.edge_error),
            ("mAP@0.5", |s| s.seg_map, self.seg_map),
        ]
        .into_iter()
        .filter(|c| c.2.is_some())
        .map(|c| (c.0, c.1))
        .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "shape");
        for (h, _) in &cols {
            let _ = write!(out, "  {:>8}", h);
        }
        out.push('\n');
        let mut row = |name: &str, vals: Vec<Option<f64>>| {
            let _ = write!(out, "{:<name_w$}", name);
            for v in vals {
                match v {
                    Some(v) => {
                        let _ = write!(out, "  {:>8.4}", v);
                    }
                    None => {
                        let _ = write!(out, "  {:>8}", "-");
                    }
                }
            }
            out.push('\n');
        };
        for s in &self.per_shape {
            row(&s.name, cols.iter().map(|c| c.1(s)).collect());
        }
        row("mean", vec![self.ap_25, self.edge_error, self.seg_map].into_iter().flatten().map(Some).collect());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(name: &str, ap: f64, ee: f64) -> ShapeMetrics {
        ShapeMetrics { name: name.into(), ap_25: Some(ap), edge_error: Some(ee), seg_map: None }
    }

    #[test]
    fn averages_and_table() {
        let r = MetricReport::from_shapes(vec![row("a", 1.0, 0.0), row("bb", 0.5, 0.5)]);
        assert_eq!(r.ap_25, Some(0.75));
        assert_eq!(r.edge_error, Some(0.25));
        assert_eq!(r.seg_map, None);
        let t = r.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(lines[3].starts_with("mean"));
    }

    #[test]
    fn json_round_trip() {
        let mut s = row("x", 0.8, 0.1);
        s.seg_map = Some(0.9);
        let r = MetricReport::from_shapes(vec![s]);
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_report() {
        let r = MetricReport::from_shapes(vec![]);
        assert_eq!(r.shapes, 0);
        assert_eq!(r.ap_25, None);
    }

    #[test]
    fn partial_columns() {
        let mut a = row("a", 1.0, 0.0);
        a.seg_map = Some(0.5);
        let r = MetricReport::from_shapes(vec![a, row("b", 0.0, 0.0)]);
        assert_eq!(r.seg_map, None);
        let only_ee = ShapeMetrics { name: "c".into(), ap_25: None, edge_error: Some(0.2), seg_map: None };
        let r = MetricReport::from_shapes(vec![only_ee]);
        assert!(!r.to_json().contains("ap_25"));
        let t = r.to_table();
        assert!(t.contains("EE") && !t.contains("AP@0.25"));
    }

    proptest! {
        #[test]
        fn order_independent_mean(mut v in proptest::collection::vec(0.0f64..1.0, 1..200)) {
            let a = compensated_mean(v.iter().copied());
            v.reverse();
            let b = compensated_mean(v.iter().copied());
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
