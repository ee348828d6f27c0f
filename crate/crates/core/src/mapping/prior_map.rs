use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MappingError;
use crate::geometry::Vec3;

pub const PRIOR_MAP_VERSION: u32 = 1;

/// A curated traffic light position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LightRepr", into = "LightRepr")]
pub struct MapLight {
    pub id: String,
    /// World frame, meters.
    pub position: Vec3,
    /// Routes (RDDF ids) for which this light is relevant.
    pub relevant_for: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightRepr {
    id: String,
    position: [f64; 3],
    relevant_for: BTreeSet<String>,
}

impl TryFrom<LightRepr> for MapLight {
    type Error = MappingError;

    fn try_from(r: LightRepr) -> Result<Self, Self::Error> {
        if r.position.iter().any(|v| !v.is_finite()) {
            return Err(MappingError::InvalidMap(format!(
                "light {} has a non-finite position",
                r.id
            )));
        }
        Ok(MapLight {
            id: r.id,
            position: Vec3::from(r.position),
            relevant_for: r.relevant_for,
        })
    }
}

impl From<MapLight> for LightRepr {
    fn from(l: MapLight) -> Self {
        LightRepr {
            id: l.id,
            position: [l.position.x, l.position.y, l.position.z],
            relevant_for: l.relevant_for,
        }
    }
}

/// Lights sharing control semantics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TLGroup {
    pub id: String,
    pub light_ids: Vec<String>,
}

/// Relevant traffic lights for one route, organized into groups.
///
/// Every group member resolves to a light and every light belongs to
/// exactly one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorMapRepr", into = "PriorMapRepr")]
pub struct PriorMap {
    pub route_id: String,
    pub lights: Vec<MapLight>,
    pub groups: Vec<TLGroup>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorMapRepr {
    version: u32,
    route_id: String,
    lights: Vec<MapLight>,
    groups: Vec<TLGroup>,
}

impl TryFrom<PriorMapRepr> for PriorMap {
    type Error = MappingError;

    fn try_from(r: PriorMapRepr) -> Result<Self, Self::Error> {
        if r.version != PRIOR_MAP_VERSION {
            return Err(MappingError::VersionMismatch {
                found: r.version,
                expected: PRIOR_MAP_VERSION,
            });
        }
        PriorMap::new(r.route_id, r.lights, r.groups)
    }
}

impl From<PriorMap> for PriorMapRepr {
    fn from(m: PriorMap) -> Self {
        PriorMapRepr {
            version: PRIOR_MAP_VERSION,
            route_id: m.route_id,
            lights: m.lights,
            groups: m.groups,
        }
    }
}

impl PriorMap {
    pub fn new(
        route_id: impl Into<String>,
        lights: Vec<MapLight>,
        groups: Vec<TLGroup>,
    ) -> Result<Self, MappingError> {
        let invalid = |m: String| Err(MappingError::InvalidMap(m));
        let mut index = HashMap::with_capacity(lights.len());
        for (i, l) in lights.iter().enumerate() {
            if index.insert(l.id.clone(), i).is_some() {
                return invalid(format!("duplicate light id {}", l.id));
            }
        }
        let mut group_ids = HashSet::new();
        let mut grouped = HashSet::new();
        for g in &groups {
            if !group_ids.insert(g.id.as_str()) {
                return invalid(format!("duplicate group id {}", g.id));
            }
            if g.light_ids.is_empty() {
                return invalid(format!("group {} is empty", g.id));
            }
            for id in &g.light_ids {
                if !index.contains_key(id) {
                    return invalid(format!("group {} references unknown light {id}", g.id));
                }
                if !grouped.insert(id.as_str()) {
                    return invalid(format!("light {id} belongs to more than one group"));
                }
            }
        }
        if let Some(l) = lights.iter().find(|l| !grouped.contains(l.id.as_str())) {
            return invalid(format!("light {} is not in any group", l.id));
        }
        Ok(Self {
            route_id: route_id.into(),
            lights,
            groups,
            index,
        })
    }

    pub fn empty(route_id: impl Into<String>) -> Self {
        Self::new(route_id, vec![], vec![]).expect("empty map is valid")
    }

    pub fn light(&self, id: &str) -> Option<&MapLight> {
        self.index.get(id).map(|&i| &self.lights[i])
    }

    pub fn group(&self, id: &str) -> Option<&TLGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    pub fn group_of(&self, light_id: &str) -> Option<&TLGroup> {
        self.groups
            .iter()
            .find(|g| g.light_ids.iter().any(|l| l == light_id))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("prior map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MappingError> {
        serde_json::from_str(s).map_err(|e| MappingError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, MappingError> {
        let s = std::fs::read_to_string(path)?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<(), MappingError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}
