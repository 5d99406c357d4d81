//! Seeded synthetic section-year panels with a known next-year IRI function.
//!
//! Route-level attributes (truck share, 18-kip load, pavement type, climate
//! zone, rural/urban code) are constant along a route, so with the default
//! ground truth every section on a route drifts by the same amount each
//! year. Flooded sections come in contiguous marker blocks, one flood year
//! per block.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DataTable, SectionYearRecord, CLIMATE_LABELS, FEATURES};
use crate::error::{Error, Result};
use crate::flood::{self, FloodEvent};
use crate::models::Predictor;
use crate::seed;

/// Physical lower bound for generated IRI (in/mi).
pub const IRI_FLOOR: f64 = 26.0;
/// Upper bound for a section's first-year IRI.
pub const INITIAL_IRI_CAP: f64 = 300.0;
/// Mean IRI the initial readings are calibrated towards.
pub const TARGET_MEAN_IRI: f64 = 100.61;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub a: String,
    pub b: String,
    pub coef: f64,
    pub center_a: f64,
    pub center_b: f64,
}

/// `f(x) = intercept + sum(w_j x_j) + flood_bump * Flood
///        + sum(coef (x_a - center_a)(x_b - center_b))`, plus Gaussian noise
/// with `noise_std` when generating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intercept: f64,
    pub weights: BTreeMap<String, f64>,
    pub flood_bump: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth {
            intercept: -2.7,
            weights: BTreeMap::from([
                (dataset::IRI_AVERAGE.to_string(), 1.0),
                (dataset::TRUCK_AADT_PCT.to_string(), 0.05),
                (dataset::CURRENT_18KIP.to_string(), 0.001),
            ]),
            flood_bump: 5.0,
            noise_std: 5.0,
            interactions: vec![Interaction {
                a: dataset::TRUCK_AADT_PCT.to_string(),
                b: dataset::TRUCK_AADT_PCT.to_string(),
                coef: 0.03,
                center_a: 17.6,
                center_b: 17.6,
            }],
        }
    }
}

impl GroundTruth {
    /// Binds the function to a feature order. Terms with a zero coefficient
    /// may reference absent features; others may not.
    pub fn model(&self, feature_names: &[String]) -> Result<GroundTruthModel> {
        let find = |name: &str| {
            feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::MissingColumns(vec![name.to_string()]))
        };
        let mut linear = Vec::new();
        for (name, &w) in &self.weights {
            if w != 0.0 {
                linear.push((find(name)?, w));
            }
        }
        let flood = if self.flood_bump != 0.0 {
            Some(find(dataset::FLOOD)?)
        } else {
            None
        };
        let mut interactions = Vec::new();
        for t in &self.interactions {
            if t.coef != 0.0 {
                interactions.push((find(&t.a)?, find(&t.b)?, t.coef, t.center_a, t.center_b));
            }
        }
        Ok(GroundTruthModel {
            n_features: feature_names.len(),
            intercept: self.intercept,
            linear,
            flood,
            flood_bump: self.flood_bump,
            interactions,
        })
    }
}

/// Noise-free ground truth usable wherever a fitted model is.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    n_features: usize,
    intercept: f64,
    linear: Vec<(usize, f64)>,
    flood: Option<usize>,
    flood_bump: f64,
    interactions: Vec<(usize, usize, f64, f64, f64)>,
}

impl Predictor for GroundTruthModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = self.intercept;
        for &(j, w) in &self.linear {
            s += w * row[j];
        }
        if let Some(j) = self.flood {
            s += self.flood_bump * row[j];
        }
        for &(a, b, c, ca, cb) in &self.interactions {
            s += c * (row[a] - ca) * (row[b] - cb);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_sections: usize,
    pub start_year: i32,
    pub end_year: i32,
    pub flood_fraction: f64,
    pub sections_per_route: usize,
    pub ground_truth: GroundTruth,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_sections: 1000,
            start_year: 2010,
            end_year: 2019,
            flood_fraction: 0.05,
            sections_per_route: 20,
            ground_truth: GroundTruth::default(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_sections == 0 || self.sections_per_route == 0 {
            return Err(Error::Argument(
                "n_sections and sections_per_route must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flood_fraction) {
            return Err(Error::Argument(format!(
                "flood_fraction must lie in [0, 1], got {}",
                self.flood_fraction
            )));
        }
        if self.end_year - self.start_year < 4 {
            return Err(Error::InsufficientData(format!(
                "years {}..={} leave no room for a flood year with 3 prior years and 1 after",
                self.start_year, self.end_year
            )));
        }
        if !(self.ground_truth.noise_std >= 0.0) {
            return Err(Error::Argument("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Number of flooded sections the generator will produce.
    pub fn n_flooded(&self) -> usize {
        (self.flood_fraction * self.n_sections as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub records: Vec<SectionYearRecord>,
    pub table: DataTable,
    pub events: Vec<FloodEvent>,
    pub ground_truth: GroundTruth,
}

struct Route {
    name: String,
    sections: Vec<String>,
    truck: f64,
    kip18: f64,
    pavement: i32,
    climate: &'static str,
    rural: i32,
}

const PAVEMENT_CODES: [(i32, f64); 7] = [
    (1, 0.02),
    (2, 0.02),
    (4, 0.04),
    (6, 0.18),
    (8, 0.06),
    (9, 0.10),
    (10, 0.58),
];
const CLIMATE_WEIGHTS: [f64; 4] = [0.10, 0.25, 0.35, 0.30];
const RURAL_CODES: [(i32, f64); 4] = [(1, 0.98), (2, 0.005), (3, 0.005), (4, 0.01)];

fn pick<T: Copy>(items: impl IntoIterator<Item = (T, f64)>, rng: &mut ChaCha8Rng) -> T {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (item, p) in items {
        acc += p;
        last = Some(item);
        if u < acc {
            return item;
        }
    }
    last.expect("non-empty choice list")
}

fn make_routes(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Route> {
    let n_routes = spec.n_sections.div_ceil(spec.sections_per_route);
    let rw = n_routes.to_string().len().max(3);
    let sw = spec.sections_per_route.to_string().len().max(4);
    let truck = Normal::new(17.6f64, 8.52).unwrap();
    let kip = LogNormal::new(6.71f64, 0.763).unwrap();
    (0..n_routes)
        .map(|r| {
            let first = r * spec.sections_per_route;
            let count = spec.sections_per_route.min(spec.n_sections - first);
            Route {
                name: format!("R{:0rw$}", r + 1),
                sections: (0..count).map(|s| format!("{s:0sw$}")).collect(),
                truck: (truck.sample(rng).max(0.0) * 10.0).round() / 10.0,
                kip18: kip.sample(rng).round(),
                pavement: pick(PAVEMENT_CODES, rng),
                climate: pick(CLIMATE_LABELS.into_iter().zip(CLIMATE_WEIGHTS), rng),
                rural: pick(RURAL_CODES, rng),
            }
        })
        .collect()
}

/// Integer condition and distress scores in `[0, 100]`, mostly near 100,
/// sharing a common deficit so they correlate strongly.
fn scores(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let tail = Exp::new(1.0 / 16.0).unwrap();
    let extra = Exp::new(1.0 / 8.5).unwrap();
    let deficit: f64 = if rng.random::<f64>() < 0.75 {
        rng.random_range(0.0..1.0)
    } else {
        tail.sample(rng)
    };
    let more: f64 = if rng.random::<f64>() < 0.2 {
        extra.sample(rng)
    } else {
        0.0
    };
    let distress = (100.0 - deficit).clamp(0.0, 100.0).round();
    let condition = (100.0 - deficit - more).clamp(0.0, 100.0).round();
    (condition, distress)
}

/// Contiguous blocks of flooded sections: `(route, first, len, year)`.
/// The first pass caps each block at half a route; a second pass grows
/// blocks when the target is not reached.
fn flood_blocks(
    spec: &SynthSpec,
    routes: &[Route],
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize, usize, i32)> {
    let mut remaining = spec.n_flooded();
    let mut order: Vec<usize> = (0..routes.len()).collect();
    order.shuffle(rng);
    let mut blocks = Vec::new();
    for &r in &order {
        if remaining == 0 {
            break;
        }
        let n = routes[r].sections.len();
        let take = remaining.min((n / 2).max(1));
        let first = rng.random_range(0..=n - take);
        let year = rng.random_range(spec.start_year + 3..=spec.end_year - 1);
        blocks.push((r, first, take, year));
        remaining -= take;
    }
    for b in &mut blocks {
        if remaining == 0 {
            break;
        }
        let n = routes[b.0].sections.len();
        let extra = remaining.min(n - b.2);
        b.2 += extra;
        b.1 = b.1.min(n - b.2);
        remaining -= extra;
    }
    blocks
}

/// Generates the panel. Rows are ordered by route, section, then year.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let gt = &spec.ground_truth;
    let feature_names: Vec<String> = FEATURES.iter().map(|s| s.to_string()).collect();
    let model = gt.model(&feature_names)?;

    let routes = make_routes(spec, &mut seed::rng(seed::derive(spec.seed, "routes")));
    let blocks = flood_blocks(spec, &routes, &mut seed::rng(seed::derive(spec.seed, "floods")));
    let events: Vec<FloodEvent> = blocks
        .iter()
        .map(|&(r, first, len, year)| FloodEvent {
            route_name: routes[r].name.clone(),
            flood_year: year,
            start_marker: Some(routes[r].sections[first].clone()),
            end_marker: Some(routes[r].sections[first + len - 1].clone()),
        })
        .collect();

    let n_years = (spec.end_year - spec.start_year + 1) as usize;
    // Calibrate initial IRI from the average yearly change at IRI = 0.
    let mut probe = vec![0.0; FEATURES.len()];
    let drift: f64 = routes
        .iter()
        .map(|r| {
            probe[3] = r.truck;
            probe[4] = r.kip18;
            probe[5] = r.pavement as f64;
            probe[7] = r.rural as f64;
            probe[0] = 95.0;
            probe[1] = 95.0;
            model.predict_row(&probe)
        })
        .sum::<f64>()
        / routes.len() as f64;
    let init_mean = (TARGET_MEAN_IRI - drift * (n_years as f64 - 1.0) / 2.0).max(IRI_FLOOR + 10.0);
    let sigma = 0.68;
    let init = LogNormal::new((init_mean - IRI_FLOOR).ln() - sigma * sigma / 2.0, sigma).unwrap();
    let noise = Normal::new(0.0, gt.noise_std).unwrap();

    let section_root = seed::derive(spec.seed, "sections");
    let mut records = Vec::with_capacity(spec.n_sections * n_years);
    let mut climate_order: Vec<&str> = Vec::new();
    let mut global = 0u64;
    for route in &routes {
        if !climate_order.contains(&route.climate) {
            climate_order.push(route.climate);
        }
        let climate_code = climate_order.iter().position(|c| *c == route.climate).unwrap() as f64;
        for section in &route.sections {
            let mut rng = seed::rng(seed::derive_indexed(section_root, global));
            global += 1;
            let mut iri = (IRI_FLOOR + init.sample(&mut rng)).min(INITIAL_IRI_CAP);
            for y in 0..n_years {
                let year = spec.start_year + y as i32;
                let flooded = events.iter().any(|e| {
                    e.route_name == route.name && e.flood_year == year && e.covers_section(section)
                });
                let (condition, distress) = scores(&mut rng);
                let row = [
                    condition,
                    distress,
                    iri,
                    route.truck,
                    route.kip18,
                    route.pavement as f64,
                    climate_code,
                    route.rural as f64,
                    f64::from(u8::from(flooded)),
                ];
                let eps = if gt.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let next = (model.predict_row(&row) + eps).max(IRI_FLOOR);
                records.push(SectionYearRecord {
                    route_name: route.name.clone(),
                    section_id: section.clone(),
                    year,
                    condition_score: condition,
                    distress_score: distress,
                    iri_average: iri,
                    truck_aadt_pct: route.truck,
                    current_18kip: route.kip18,
                    pavement_type_code: route.pavement,
                    climate_zone: route.climate.to_string(),
                    rural_urban_code: route.rural,
                    flood: u8::from(flooded),
                    next_year_iri: Some(next),
                });
                iri = next;
            }
        }
    }
    let table = dataset::records_to_table(&records)?;
    Ok(SynthOutput {
        records,
        table,
        events,
        ground_truth: gt.clone(),
    })
}

pub const RECORDS_FILE: &str = "records.csv";
pub const EVENTS_FILE: &str = "flood_events.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Writes `records.csv`, `flood_events.csv` and `ground_truth.json`.
pub fn write_output(out: &SynthOutput, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    dataset::write_records(&out.records, dir.join(RECORDS_FILE))?;
    flood::write_events(&out.events, dir.join(EVENTS_FILE))?;
    let json = serde_json::to_string_pretty(&out.ground_truth)?;
    dataset::write_atomic(&dir.join(GROUND_TRUTH_FILE), json.as_bytes())
}
