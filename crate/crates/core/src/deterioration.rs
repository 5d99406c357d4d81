//! Pre/post-flood deterioration statistics.
//!
//! All summaries sort their inputs by section key before aggregating, so
//! results are bit-identical under any permutation of the input windows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{mean, sample_std};
use crate::flood::SectionWindow;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectionKey {
    pub route_name: String,
    pub section_id: String,
    pub flood_year: i32,
}

impl From<&SectionWindow> for SectionKey {
    fn from(w: &SectionWindow) -> Self {
        SectionKey {
            route_name: w.route_name.clone(),
            section_id: w.section_id.clone(),
            flood_year: w.flood_year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDelta {
    pub key: SectionKey,
    pub pre_iri: f64,
    pub post_iri: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub per_section: Vec<SectionDelta>,
    pub mean: f64,
    pub std_dev: f64,
    pub count: usize,
}

fn sorted_windows(windows: &[SectionWindow]) -> Vec<&SectionWindow> {
    let mut v: Vec<&SectionWindow> = windows.iter().collect();
    v.sort_by(|a, b| a.key().cmp(&b.key()));
    v
}

/// Per-section `iri_plus1 - iri_minus1`, pooled over all sections.
/// Empty input yields `count = 0` with zero mean and spread.
pub fn pre_post_deltas(windows: &[SectionWindow]) -> DeltaSummary {
    let per_section: Vec<SectionDelta> = sorted_windows(windows)
        .into_iter()
        .map(|w| SectionDelta {
            key: w.into(),
            pre_iri: w.iri_minus1,
            post_iri: w.iri_plus1,
            delta: w.delta(),
        })
        .collect();
    let deltas: Vec<f64> = per_section.iter().map(|d| d.delta).collect();
    DeltaSummary {
        mean: if deltas.is_empty() { 0.0 } else { mean(&deltas) },
        std_dev: sample_std(&deltas),
        count: deltas.len(),
        per_section,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAverages {
    pub route_name: String,
    pub sections: usize,
    pub avg_iri_minus3: f64,
    pub avg_iri_minus1: f64,
    pub avg_iri_plus1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateComparison {
    pub per_route: Vec<RouteAverages>,
    /// Mean IRI change over the two years before the flood (in/mi per 2 years).
    pub before_rate: f64,
    /// Mean IRI change over the two years spanning the flood (in/mi per 2 years).
    pub after_rate: f64,
    pub count: usize,
}

/// Before/after deterioration rates over windows carrying all three readings.
pub fn rate_comparison(windows: &[SectionWindow]) -> RateComparison {
    let full: Vec<(&SectionWindow, f64)> = sorted_windows(windows)
        .into_iter()
        .filter_map(|w| w.iri_minus3.map(|m3| (w, m3)))
        .collect();
    if full.is_empty() {
        return RateComparison {
            per_route: Vec::new(),
            before_rate: 0.0,
            after_rate: 0.0,
            count: 0,
        };
    }
    let mut routes: BTreeMap<&str, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for (w, m3) in &full {
        routes
            .entry(w.route_name.as_str())
            .or_default()
            .push((*m3, w.iri_minus1, w.iri_plus1));
    }
    let per_route = routes
        .into_iter()
        .map(|(route, vals)| {
            let n = vals.len() as f64;
            RouteAverages {
                route_name: route.to_string(),
                sections: vals.len(),
                avg_iri_minus3: vals.iter().map(|v| v.0).sum::<f64>() / n,
                avg_iri_minus1: vals.iter().map(|v| v.1).sum::<f64>() / n,
                avg_iri_plus1: vals.iter().map(|v| v.2).sum::<f64>() / n,
            }
        })
        .collect();
    let before: Vec<f64> = full.iter().map(|(w, m3)| w.iri_minus1 - m3).collect();
    let after: Vec<f64> = full.iter().map(|(w, _)| w.delta()).collect();
    RateComparison {
        per_route,
        before_rate: mean(&before),
        after_rate: mean(&after),
        count: full.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDiff {
    pub key: SectionKey,
    pub flooded_delta: f64,
    pub control_mean_delta: f64,
    pub control_sections: usize,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRouteDiff {
    pub per_section: Vec<SectionDiff>,
    pub mean_diff: f64,
    pub min_diff: f64,
    pub max_diff: f64,
    pub skipped_routes: Vec<String>,
    pub warnings: Vec<String>,
}

/// Each flooded section's delta minus the mean delta of the non-flooded
/// sections on the same route. Routes without controls are skipped.
pub fn flooded_vs_nonflooded(
    flooded_windows: &[SectionWindow],
    nonflooded_windows: &[SectionWindow],
) -> PairedRouteDiff {
    let mut controls: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for w in sorted_windows(nonflooded_windows) {
        controls.entry(w.route_name.as_str()).or_default().push(w.delta());
    }
    let control_means: BTreeMap<&str, (f64, usize)> = controls
        .iter()
        .map(|(r, d)| (*r, (mean(d), d.len())))
        .collect();

    let mut per_section = Vec::new();
    let mut skipped = std::collections::BTreeSet::new();
    for w in sorted_windows(flooded_windows) {
        match control_means.get(w.route_name.as_str()) {
            Some(&(m, n)) => per_section.push(SectionDiff {
                key: w.into(),
                flooded_delta: w.delta(),
                control_mean_delta: m,
                control_sections: n,
                diff: w.delta() - m,
            }),
            None => {
                skipped.insert(w.route_name.clone());
            }
        }
    }
    let diffs: Vec<f64> = per_section.iter().map(|d| d.diff).collect();
    let mut warnings = Vec::new();
    let (mean_diff, min_diff, max_diff) = if diffs.is_empty() {
        warnings.push("no flooded route has non-flooded comparison sections".to_string());
        (0.0, 0.0, 0.0)
    } else {
        (
            mean(&diffs),
            diffs.iter().copied().fold(f64::INFINITY, f64::min),
            diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    PairedRouteDiff {
        per_section,
        mean_diff,
        min_diff,
        max_diff,
        skipped_routes: skipped.into_iter().collect(),
        warnings,
    }
}
