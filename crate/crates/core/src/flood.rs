//! Flood event tagging and pre/post-flood IRI window extraction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataTable, FLOOD, IRI_AVERAGE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloodEvent {
    #[serde(rename = "ROUTE_NAME")]
    pub route_name: String,
    #[serde(rename = "FLOOD_YEAR")]
    pub flood_year: i32,
    #[serde(rename = "START_MARKER", default, deserialize_with = "empty_as_none")]
    pub start_marker: Option<String>,
    #[serde(rename = "END_MARKER", default, deserialize_with = "empty_as_none")]
    pub end_marker: Option<String>,
}

fn empty_as_none<'de, D>(d: D) -> std::result::Result<Option<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()))
}

impl FloodEvent {
    pub fn whole_route(route_name: impl Into<String>, flood_year: i32) -> Self {
        FloodEvent {
            route_name: route_name.into(),
            flood_year,
            start_marker: None,
            end_marker: None,
        }
    }

    /// Whether a section falls inside the event's marker range (inclusive,
    /// lexicographic). A missing marker leaves that side open.
    pub fn covers_section(&self, section_id: &str) -> bool {
        let after_start = self
            .start_marker
            .as_deref()
            .is_none_or(|s| section_id >= s);
        let before_end = self.end_marker.as_deref().is_none_or(|e| section_id <= e);
        after_start && before_end
    }

    fn covers(&self, route: &str, section: &str, year: i32) -> bool {
        self.route_name == route && self.flood_year == year && self.covers_section(section)
    }
}

pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<FloodEvent>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let missing: Vec<String> = ["ROUTE_NAME", "FLOOD_YEAR"]
        .iter()
        .filter(|c| !headers.iter().any(|h| h.trim() == **c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn write_events(events: &[FloodEvent], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for e in events {
            w.serialize(e)?;
        }
        if events.is_empty() {
            w.write_record(["ROUTE_NAME", "FLOOD_YEAR", "START_MARKER", "END_MARKER"])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    }
    crate::dataset::write_atomic(path.as_ref(), &buf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownRouteWarning {
    pub route_name: String,
    pub flood_year: i32,
}

impl std::fmt::Display for UnknownRouteWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "flood event {} ({}) matches no route in the records",
            self.route_name, self.flood_year
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tagged {
    pub table: DataTable,
    pub warnings: Vec<UnknownRouteWarning>,
}

/// Sets `Flood` to 1 exactly on rows matched by an event and 0 elsewhere.
/// The column is appended when the table does not carry it yet.
pub fn tag_flooded(table: &DataTable, events: &[FloodEvent]) -> Result<Tagged> {
    let routes: BTreeSet<&str> = table
        .row_keys()
        .iter()
        .map(|k| k.route_name.as_str())
        .collect();
    let warnings = events
        .iter()
        .filter(|e| !routes.contains(e.route_name.as_str()))
        .map(|e| UnknownRouteWarning {
            route_name: e.route_name.clone(),
            flood_year: e.flood_year,
        })
        .collect();
    let flags: Array1<f64> = table
        .row_keys()
        .iter()
        .map(|k| {
            let hit = events
                .iter()
                .any(|e| e.covers(&k.route_name, &k.section_id, k.year));
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(Tagged {
        table: table.with_column(FLOOD, flags)?,
        warnings,
    })
}

/// IRI readings around one section's flood year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionWindow {
    pub route_name: String,
    pub section_id: String,
    pub flood_year: i32,
    pub iri_minus3: Option<f64>,
    pub iri_minus1: f64,
    pub iri_plus1: f64,
}

impl SectionWindow {
    pub fn delta(&self) -> f64 {
        self.iri_plus1 - self.iri_minus1
    }

    pub fn key(&self) -> (&str, &str, i32) {
        (&self.route_name, &self.section_id, self.flood_year)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowExtraction {
    pub windows: Vec<SectionWindow>,
    /// Candidate sections discarded for lacking IRI one year before or after.
    pub dropped: usize,
}

type IriIndex<'a> = HashMap<(&'a str, &'a str, i32), f64>;

fn iri_index(table: &DataTable) -> Result<IriIndex<'_>> {
    let iri = table.column(IRI_AVERAGE)?;
    Ok(table
        .row_keys()
        .iter()
        .zip(iri.iter())
        .filter(|(_, v)| **v > 0.0)
        .map(|(k, &v)| ((k.route_name.as_str(), k.section_id.as_str(), k.year), v))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cohort {
    Flooded,
    Control,
}

fn extract(table: &DataTable, events: &[FloodEvent], cohort: Cohort) -> Result<WindowExtraction> {
    let flood = table.column(FLOOD)?;
    let iri = iri_index(table)?;
    // (route, flood_year) -> sections in the cohort
    let mut candidates: BTreeMap<(&str, i32), BTreeSet<&str>> = BTreeMap::new();
    for e in events {
        candidates.entry((e.route_name.as_str(), e.flood_year)).or_default();
    }
    for (k, &f) in table.row_keys().iter().zip(flood.iter()) {
        let Some(set) = candidates.get_mut(&(k.route_name.as_str(), k.year)) else {
            continue;
        };
        let in_cohort = match cohort {
            Cohort::Flooded => f == 1.0,
            Cohort::Control => f == 0.0,
        };
        if in_cohort {
            set.insert(k.section_id.as_str());
        }
    }
    // A section flooded in the event year must never serve as its own control.
    if cohort == Cohort::Control {
        for (k, &f) in table.row_keys().iter().zip(flood.iter()) {
            if f == 1.0 {
                if let Some(set) = candidates.get_mut(&(k.route_name.as_str(), k.year)) {
                    set.remove(k.section_id.as_str());
                }
            }
        }
    }

    let mut out = WindowExtraction::default();
    for ((route, year), sections) in candidates {
        for section in sections {
            let before = iri.get(&(route, section, year - 1));
            let after = iri.get(&(route, section, year + 1));
            match (before, after) {
                (Some(&b), Some(&a)) => out.windows.push(SectionWindow {
                    route_name: route.to_string(),
                    section_id: section.to_string(),
                    flood_year: year,
                    iri_minus3: iri.get(&(route, section, year - 3)).copied(),
                    iri_minus1: b,
                    iri_plus1: a,
                }),
                _ => out.dropped += 1,
            }
        }
    }
    Ok(out)
}

/// One window per flooded (section, flood year) with IRI at both
/// `flood_year - 1` and `flood_year + 1`; the 3-year look-back is filled
/// when available. Output is sorted by (route, flood year, section).
pub fn extract_windows(table: &DataTable, events: &[FloodEvent]) -> Result<WindowExtraction> {
    extract(table, events, Cohort::Flooded)
}

/// Windows for the non-flooded sections of each flooded route, on the same
/// years as the route's flood event.
pub fn extract_control_windows(
    table: &DataTable,
    events: &[FloodEvent],
) -> Result<WindowExtraction> {
    extract(table, events, Cohort::Control)
}

/// Drops windows whose IRI improved (assumed maintenance): `plus1 < minus1`,
/// or `minus1 < minus3` when the look-back is present. Equality is kept.
pub fn apply_maintenance_exclusion(windows: &[SectionWindow]) -> Vec<SectionWindow> {
    windows
        .iter()
        .filter(|w| {
            w.iri_plus1 >= w.iri_minus1 && w.iri_minus3.is_none_or(|m3| w.iri_minus1 >= m3)
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RowKey;
    use ndarray::Array2;

    /// Table with IRI and Flood columns from (route, section, year, iri).
    fn table(rows: &[(&str, &str, i32, f64)]) -> DataTable {
        let keys = rows
            .iter()
            .map(|(r, s, y, _)| RowKey {
                route_name: r.to_string(),
                section_id: s.to_string(),
                year: *y,
            })
            .collect();
        let data = Array2::from_shape_fn((rows.len(), 2), |(i, j)| if j == 0 { rows[i].3 } else { 0.0 });
        DataTable::new(
            vec![IRI_AVERAGE.into(), FLOOD.into()],
            data,
            Default::default(),
            keys,
        )
        .unwrap()
    }

    fn window(m3: Option<f64>, m1: f64, p1: f64) -> SectionWindow {
        SectionWindow {
            route_name: "R".into(),
            section_id: "S".into(),
            flood_year: 2014,
            iri_minus3: m3,
            iri_minus1: m1,
            iri_plus1: p1,
        }
    }

    #[test]
    fn tag_single_event_by_year() {
        let t = table(&[
            ("FM0481", "001", 2013, 90.0),
            ("FM0481", "001", 2014, 95.0),
            ("FM0481", "001", 2015, 110.0),
            ("SH0131", "001", 2014, 80.0),
        ]);
        let tagged = tag_flooded(&t, &[FloodEvent::whole_route("FM0481", 2014)]).unwrap();
        assert_eq!(tagged.table.column(FLOOD).unwrap().to_vec(), vec![0.0, 1.0, 0.0, 0.0]);
        assert!(tagged.warnings.is_empty());

        let none = tag_flooded(&t, &[]).unwrap();
        assert!(none.table.column(FLOOD).unwrap().iter().all(|&f| f == 0.0));

        let unknown = tag_flooded(&t, &[FloodEvent::whole_route("US0087", 2015)]).unwrap();
        assert_eq!(unknown.table, t);
        assert_eq!(unknown.warnings.len(), 1);
    }

    #[test]
    fn tag_respects_markers_and_is_idempotent() {
        let t = table(&[
            ("FM1908", "001", 2014, 90.0),
            ("FM1908", "002", 2014, 90.0),
            ("FM1908", "003", 2014, 90.0),
            ("FM1908", "004", 2014, 90.0),
        ]);
        let ev = FloodEvent {
            route_name: "FM1908".into(),
            flood_year: 2014,
            start_marker: Some("002".into()),
            end_marker: Some("003".into()),
        };
        let once = tag_flooded(&t, std::slice::from_ref(&ev)).unwrap().table;
        assert_eq!(once.column(FLOOD).unwrap().to_vec(), vec![0.0, 1.0, 1.0, 0.0]);
        let twice = tag_flooded(&once, &[ev]).unwrap().table;
        assert_eq!(once, twice);
    }

    #[test]
    fn windows_from_six_row_fixture() {
        let t = table(&[
            ("FM0481", "001", 2011, 80.0),
            ("FM0481", "001", 2013, 90.0),
            ("FM0481", "001", 2015, 105.0),
            ("FM0481", "002", 2013, 70.0),
            ("FM0481", "002", 2014, 72.0),
            ("FM0481", "001", 2014, 95.0),
        ]);
        let events = [FloodEvent::whole_route("FM0481", 2014)];
        let tagged = tag_flooded(&t, &events).unwrap().table;
        let ex = extract_windows(&tagged, &events).unwrap();
        assert_eq!(ex.dropped, 1);
        assert_eq!(
            ex.windows,
            vec![SectionWindow {
                route_name: "FM0481".into(),
                section_id: "001".into(),
                flood_year: 2014,
                iri_minus3: Some(80.0),
                iri_minus1: 90.0,
                iri_plus1: 105.0,
            }]
        );
    }

    #[test]
    fn control_windows_exclude_flooded_sections() {
        let t = table(&[
            ("FM1908", "001", 2013, 90.0),
            ("FM1908", "001", 2014, 92.0),
            ("FM1908", "001", 2015, 99.0),
            ("FM1908", "002", 2013, 60.0),
            ("FM1908", "002", 2014, 62.0),
            ("FM1908", "002", 2015, 64.0),
        ]);
        let events = [FloodEvent {
            route_name: "FM1908".into(),
            flood_year: 2014,
            start_marker: Some("001".into()),
            end_marker: Some("001".into()),
        }];
        let tagged = tag_flooded(&t, &events).unwrap().table;
        let flooded = extract_windows(&tagged, &events).unwrap();
        let control = extract_control_windows(&tagged, &events).unwrap();
        assert_eq!(flooded.windows.len(), 1);
        assert_eq!(flooded.windows[0].section_id, "001");
        assert_eq!(control.windows.len(), 1);
        assert_eq!(control.windows[0].section_id, "002");
        assert_eq!(control.windows[0].delta(), 4.0);
    }

    #[test]
    fn maintenance_exclusion_cases() {
        assert!(apply_maintenance_exclusion(&[window(None, 100.0, 95.0)]).is_empty());
        assert_eq!(apply_maintenance_exclusion(&[window(None, 100.0, 100.0)]).len(), 1);
        let mixed = [
            window(None, 100.0, 110.0),
            window(None, 100.0, 90.0),
            window(Some(80.0), 90.0, 105.0),
            window(Some(95.0), 90.0, 105.0),
            window(None, 50.0, 50.0),
        ];
        let kept = apply_maintenance_exclusion(&mixed);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|w| w.iri_plus1 >= w.iri_minus1));
    }

    #[test]
    fn load_events_with_optional_markers() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "ROUTE_NAME,FLOOD_YEAR,START_MARKER,END_MARKER").unwrap();
        writeln!(f, "FM0481,2014,,").unwrap();
        writeln!(f, "FM1908,2014,002,010").unwrap();
        let ev = load_events(f.path()).unwrap();
        assert_eq!(ev[0], FloodEvent::whole_route("FM0481", 2014));
        assert_eq!(ev[1].start_marker.as_deref(), Some("002"));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("events.csv");
        write_events(&ev, &p).unwrap();
        assert_eq!(load_events(&p).unwrap(), ev);
    }
}
