use std::collections::{BTreeMap, BTreeSet};

use super::{MapLight, MappingError, PriorMap, TLGroup};

/// Group id derived from a group's lexicographically smallest member.
pub fn group_id_for(lowest_member: &str) -> String {
    format!("g-{lowest_member}")
}

/// Single-linkage grouping: lights end up together when a chain of
/// pairwise distances `<= radius` connects them. Groups are sorted by id and
/// their members by light id.
pub fn link_groups(lights: &[MapLight], radius: f64) -> Vec<TLGroup> {
    let n = lights.len();
    let mut component = vec![usize::MAX; n];
    let mut groups = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let c = groups.len();
        component[start] = c;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(lights[i].id.clone());
            for j in 0..n {
                if component[j] == usize::MAX
                    && (lights[i].position - lights[j].position).norm() <= radius
                {
                    component[j] = c;
                    stack.push(j);
                }
            }
        }
        members.sort();
        groups.push(TLGroup {
            id: group_id_for(&members[0]),
            light_ids: members,
        });
    }
    groups.sort_by(|a, b| a.id.cmp(&b.id));
    groups
}

/// Re-targets a map at another route. A light is kept when
/// `relevance_overrides` says so, or, absent an override, when it is already
/// marked relevant for `target_route`. Kept lights gain `target_route` in
/// their relevance set and are re-linked into groups.
pub fn transfer_annotations(
    map: &PriorMap,
    target_route: &str,
    relevance_overrides: &BTreeMap<String, bool>,
    known_routes: &BTreeSet<String>,
    link_radius: f64,
) -> Result<PriorMap, MappingError> {
    if !known_routes.contains(target_route) {
        return Err(MappingError::UnknownRoute(target_route.to_string()));
    }
    let lights: Vec<MapLight> = map
        .lights
        .iter()
        .filter(|l| {
            relevance_overrides
                .get(&l.id)
                .copied()
                .unwrap_or_else(|| l.relevant_for.contains(target_route))
        })
        .map(|l| {
            let mut l = l.clone();
            l.relevant_for.insert(target_route.to_string());
            l
        })
        .collect();
    let groups = link_groups(&lights, link_radius);
    PriorMap::new(target_route, lights, groups)
}
