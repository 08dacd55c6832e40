//! Scenario documents: one JSON file describing a planning run end to end.
//!
//! A scenario names a service area (polygon plus the four corner marks), a
//! demand source, the traffic and link models, the tiling, and either a
//! fixed site count or a target cell load. Canonical-only analysis runs may
//! instead carry an explicit rectangle and a site-count sweep. Parsing and
//! validation are one step: a [`Scenario`] that exists is well-formed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{LinkModel, Tiling};
use crate::demand::{DemandPreset, Traffic};
use crate::geometry::{GeometryError, Point, Polygon, Quadrilateral, RectangleDomain};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse: {0}")]
    Parse(String),
    #[error("scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// Named demand source. The three presets are synthetic physical densities;
/// `induced` derives the density the conformal map uniformizes, so canonical
/// planning and physical reality describe the same traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandSourceKind {
    Uniform,
    Gauss1,
    Gauss2,
    Induced,
}

impl fmt::Display for DemandSourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DemandSourceKind::Uniform => "uniform",
            DemandSourceKind::Gauss1 => "gauss1",
            DemandSourceKind::Gauss2 => "gauss2",
            DemandSourceKind::Induced => "induced",
        };
        f.write_str(s)
    }
}

/// Demand block: exactly one of `preset` / `csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<DemandSourceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

/// Resolved demand source after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DemandSource {
    Preset(DemandSourceKind),
    Csv(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    /// Mean session duration E{mu} in seconds.
    pub mean_session_s: f64,
    /// Mean inter-arrival time E{lambda} in seconds.
    pub mean_interarrival_s: f64,
    /// Guaranteed per-user rate in bits per second.
    pub r_min_bps: f64,
    /// System bandwidth in hertz.
    pub b_sys_hz: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    /// Distance power-law exponent.
    pub beta: f64,
    /// Noise power in the normalized received-power units; 0 selects the
    /// pure-SIR regime.
    #[serde(default)]
    pub sigma2: f64,
}

/// Sites block: exactly one of a fixed count / a target uniform load.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SitesSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_load: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub w: f64,
    pub h: f64,
}

fn default_grid() -> usize {
    250
}

fn default_max_sites() -> usize {
    512
}

fn default_one() -> f64 {
    1.0
}

/// One planning scenario, as parsed from its JSON document.
///
/// `polygon`/`corners` describe a physical service area (required by the
/// full pipeline); `canonical_rect` plus `l_sweep` describe a canonical-only
/// sweep. A document may carry both.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Service-area vertices, counterclockwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    /// Indices of the four vertices marking the rectangle corners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<[usize; 4]>,
    pub demand: DemandSpec,
    pub traffic: TrafficSpec,
    pub link: LinkSpec,
    pub tiling: Tiling,
    pub sites: SitesSpec,
    /// Samples per axis for every field/partition/load grid in the run.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Dimensioning scan cap when `sites.target_load` is given.
    #[serde(default = "default_max_sites")]
    pub max_sites: usize,
    /// Multiplier on the solved module when building the planning rectangle;
    /// values other than 1 deliberately plan on a mismatched aspect ratio.
    #[serde(default = "default_one")]
    pub aspect_mismatch: f64,
    /// Explicit rectangle for canonical-only analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_rect: Option<RectSpec>,
    /// Site counts for the canonical-only sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_sweep: Option<Vec<usize>>,
    /// Exponents for the canonical-only sweep; defaults to `link.beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_sweep: Option<Vec<f64>>,
    /// Default output directory for this scenario's artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl Scenario {
    /// Parses and fully validates a scenario document.
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario =
            serde_json::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) || name.contains("..") {
                return Err(invalid(format!("name {name:?} is not a plain file stem")));
            }
        }
        match (&self.polygon, &self.corners) {
            (Some(_), Some(_)) => {
                self.quadrilateral()?; // full geometric validation
            }
            (None, None) => {}
            _ => {
                return Err(invalid(
                    "polygon and corners must be given together",
                ));
            }
        }
        if self.polygon.is_none() && self.canonical_rect.is_none() {
            return Err(invalid(
                "scenario needs a polygon (pipeline) or a canonical_rect (analysis)",
            ));
        }

        match (&self.demand.preset, &self.demand.csv) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(invalid("demand: exactly one of preset / csv")),
        }
        if let Some(csv) = &self.demand.csv {
            if csv.is_empty() {
                return Err(invalid("demand: empty csv path"));
            }
            if self.polygon.is_none() {
                return Err(invalid("demand: csv source needs a polygon grid"));
            }
        }
        if self.demand.preset == Some(DemandSourceKind::Induced) && self.polygon.is_none() {
            return Err(invalid("demand: induced source needs a polygon"));
        }

        // traffic and link models carry their own domain checks
        self.traffic().map_err(|e| invalid(e.to_string()))?;
        self.link_model().map_err(|e| invalid(e.to_string()))?;

        match (self.sites.l, self.sites.target_load) {
            (Some(l), None) => {
                if l == 0 {
                    return Err(invalid("sites: l must be positive"));
                }
            }
            (None, Some(t)) => {
                if !(t > 0.0 && t <= 1.0) {
                    return Err(invalid(format!(
                        "sites: target_load {t} outside (0, 1]"
                    )));
                }
            }
            _ => return Err(invalid("sites: exactly one of l / target_load")),
        }

        if self.grid < 16 {
            return Err(invalid(format!("grid {} too coarse (need >= 16)", self.grid)));
        }
        if self.max_sites == 0 {
            return Err(invalid("max_sites must be positive"));
        }
        if !(self.aspect_mismatch > 0.0 && self.aspect_mismatch.is_finite()) {
            return Err(invalid(format!(
                "aspect_mismatch {} must be a positive finite scale",
                self.aspect_mismatch
            )));
        }
        if let Some(r) = &self.canonical_rect {
            if !(r.w > 0.0 && r.h > 0.0 && r.w.is_finite() && r.h.is_finite()) {
                return Err(invalid(format!(
                    "canonical_rect {}x{} must have positive sides",
                    r.w, r.h
                )));
            }
        }
        if let Some(ls) = &self.l_sweep {
            if ls.is_empty() || ls.contains(&0) {
                return Err(invalid("l_sweep must be a nonempty list of positive counts"));
            }
        }
        if let Some(bs) = &self.beta_sweep {
            if bs.is_empty() {
                return Err(invalid("beta_sweep must be nonempty"));
            }
            for &b in bs {
                LinkModel::new(b, self.link.sigma2, self.traffic.b_sys_hz, self.traffic.r_min_bps)
                    .map_err(|e| invalid(e.to_string()))?;
            }
        }
        if let Some(d) = &self.out_dir {
            if d.is_empty() {
                return Err(invalid("out_dir must be nonempty when given"));
            }
        }
        Ok(())
    }

    /// The validated service area with its corner marking.
    pub fn quadrilateral(&self) -> Result<Quadrilateral, ScenarioError> {
        let verts = self
            .polygon
            .as_ref()
            .ok_or_else(|| invalid("scenario has no polygon"))?;
        let corners = self
            .corners
            .ok_or_else(|| invalid("scenario has no corner marks"))?;
        let poly = Polygon::new(verts.iter().map(|&[x, y]| Point::new(x, y)).collect())?;
        Ok(Quadrilateral::new(poly, corners)?)
    }

    pub fn traffic(&self) -> Result<Traffic, ScenarioError> {
        Traffic::new(self.traffic.mean_session_s, self.traffic.mean_interarrival_s)
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn link_model(&self) -> Result<LinkModel, ScenarioError> {
        LinkModel::new(
            self.link.beta,
            self.link.sigma2,
            self.traffic.b_sys_hz,
            self.traffic.r_min_bps,
        )
        .map_err(|e| invalid(e.to_string()))
    }

    pub fn demand_source(&self) -> DemandSource {
        match (&self.demand.preset, &self.demand.csv) {
            (Some(p), None) => DemandSource::Preset(*p),
            (None, Some(path)) => DemandSource::Csv(path.clone()),
            _ => unreachable!("validated: exactly one demand source"),
        }
    }

    /// The named presets that map onto [`DemandPreset`]; `induced` has no
    /// closed form and is derived from the solved map instead.
    pub fn fixed_preset(kind: DemandSourceKind) -> Option<DemandPreset> {
        match kind {
            DemandSourceKind::Uniform => Some(DemandPreset::Uniform),
            DemandSourceKind::Gauss1 => Some(DemandPreset::Gauss1),
            DemandSourceKind::Gauss2 => Some(DemandPreset::Gauss2),
            DemandSourceKind::Induced => None,
        }
    }

    pub fn canonical_rectangle(&self) -> Result<Option<RectangleDomain>, ScenarioError> {
        match &self.canonical_rect {
            None => Ok(None),
            Some(r) => Ok(Some(
                RectangleDomain::new(r.w, r.h).map_err(|e| invalid(e.to_string()))?,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "name": "unit",
            "polygon": [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            "corners": [0, 1, 2, 3],
            "demand": {"preset": "uniform"},
            "traffic": {
                "mean_session_s": 120.0,
                "mean_interarrival_s": 0.05,
                "r_min_bps": 1.0e5,
                "b_sys_hz": 5.0e6
            },
            "link": {"beta": 3.5},
            "tiling": "rectangular",
            "sites": {"l": 9}
        })
    }

    fn parse(v: serde_json::Value) -> Result<Scenario, ScenarioError> {
        Scenario::from_json(&v.to_string())
    }

    #[test]
    fn minimal_document_parses_with_defaults() {
        let sc = parse(base_json()).unwrap();
        assert_eq!(sc.grid, 250);
        assert_eq!(sc.max_sites, 512);
        assert_eq!(sc.aspect_mismatch, 1.0);
        assert_eq!(sc.link.sigma2, 0.0);
        assert_eq!(sc.demand_source(), DemandSource::Preset(DemandSourceKind::Uniform));
        assert_eq!(sc.sites.l, Some(9));
        let q = sc.quadrilateral().unwrap();
        assert_eq!(q.polygon.len(), 4);
        let t = sc.traffic().unwrap();
        assert_eq!(t.volume(), 2400.0);
        let lm = sc.link_model().unwrap();
        assert_eq!(lm.b_sys, 5.0e6);
    }

    #[test]
    fn rejects_malformed_documents() {
        // each mutation breaks exactly one schema rule
        let mut both_sites = base_json();
        both_sites["sites"] = serde_json::json!({"l": 9, "target_load": 0.5});
        let mut no_sites = base_json();
        no_sites["sites"] = serde_json::json!({});
        let mut both_demand = base_json();
        both_demand["demand"] = serde_json::json!({"preset": "uniform", "csv": "d.csv"});
        let mut bad_target = base_json();
        bad_target["sites"] = serde_json::json!({"target_load": 1.5});
        let mut unknown_field = base_json();
        unknown_field["grdi"] = serde_json::json!(100);
        let mut bad_corner = base_json();
        bad_corner["corners"] = serde_json::json!([0, 1, 2, 9]);
        let mut corner_only = base_json();
        corner_only.as_object_mut().unwrap().remove("polygon");
        let mut coarse = base_json();
        coarse["grid"] = serde_json::json!(4);
        let mut bad_mismatch = base_json();
        bad_mismatch["aspect_mismatch"] = serde_json::json!(-0.5);
        let mut induced_needs_polygon = base_json();
        induced_needs_polygon.as_object_mut().unwrap().remove("polygon");
        induced_needs_polygon.as_object_mut().unwrap().remove("corners");
        induced_needs_polygon["canonical_rect"] = serde_json::json!({"w": 2.0, "h": 1.0});
        induced_needs_polygon["demand"] = serde_json::json!({"preset": "induced"});
        let mut slashed_name = base_json();
        slashed_name["name"] = serde_json::json!("a/b");

        for (label, doc) in [
            ("both sites", both_sites),
            ("no sites", no_sites),
            ("both demand", both_demand),
            ("target out of range", bad_target),
            ("unknown field", unknown_field),
            ("corner index out of range", bad_corner),
            ("corners without polygon", corner_only),
            ("coarse grid", coarse),
            ("negative aspect scale", bad_mismatch),
            ("induced without polygon", induced_needs_polygon),
            ("name with separator", slashed_name),
        ] {
            assert!(parse(doc).is_err(), "{label} should be rejected");
        }
    }

    #[test]
    fn canonical_only_document_needs_rect() {
        let mut v = base_json();
        v.as_object_mut().unwrap().remove("polygon");
        v.as_object_mut().unwrap().remove("corners");
        assert!(parse(v.clone()).is_err());
        v["canonical_rect"] = serde_json::json!({"w": 6.84, "h": 4.90});
        v["l_sweep"] = serde_json::json!([64, 100, 144]);
        v["beta_sweep"] = serde_json::json!([2.5, 3.0, 3.5, 4.0]);
        let sc = parse(v).unwrap();
        let rect = sc.canonical_rectangle().unwrap().unwrap();
        assert_eq!((rect.w(), rect.h()), (6.84, 4.90));
        assert_eq!(sc.l_sweep.as_deref(), Some(&[64, 100, 144][..]));
    }

    #[test]
    fn target_load_and_csv_variants_parse() {
        let mut v = base_json();
        v["sites"] = serde_json::json!({"target_load": 0.3});
        v["demand"] = serde_json::json!({"csv": "demand.csv"});
        let sc = parse(v).unwrap();
        assert_eq!(sc.sites.target_load, Some(0.3));
        assert_eq!(sc.demand_source(), DemandSource::Csv("demand.csv".to_string()));
    }

    #[test]
    fn document_round_trips_through_serde() {
        let sc = parse(base_json()).unwrap();
        let again = Scenario::from_json(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(again.name.as_deref(), Some("unit"));
        assert_eq!(again.grid, sc.grid);
        assert_eq!(again.polygon, sc.polygon);
    }
}
