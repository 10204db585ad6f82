//! Vertiport ground layout: FATO nodes, parking pads (some with
//! chargers), and the taxiway graph connecting them.
//!
//! FATOs and chargers are hard resources during simulation; parking
//! pads are tracked for occupancy reporting but never block, so a
//! layout needs enough pads for realism, not for liveness.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geo::LatLon;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Fato,
    Pad,
    PadCharger,
}

impl NodeClass {
    pub fn is_pad(self) -> bool {
        matches!(self, NodeClass::Pad | NodeClass::PadCharger)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutNode {
    pub id: String,
    pub class: NodeClass,
}

/// Bidirectional taxiway segment with a fixed traverse time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxiLink {
    pub from: String,
    pub to: String,
    pub traverse_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertiportLayout {
    pub id: String,
    pub position: LatLon,
    pub nodes: Vec<LayoutNode>,
    pub links: Vec<TaxiLink>,
}

impl VertiportLayout {
    /// A minimal layout: one FATO, plain pads, charger pads, all joined
    /// to the FATO by identical taxiways.
    pub fn simple(
        id: &str,
        position: LatLon,
        pads: u32,
        chargers: u32,
        taxi_s: f64,
    ) -> Self {
        let mut nodes = vec![LayoutNode { id: "F1".into(), class: NodeClass::Fato }];
        let mut links = Vec::new();
        for p in 1..=pads {
            nodes.push(LayoutNode { id: format!("P{p}"), class: NodeClass::Pad });
            links.push(TaxiLink { from: "F1".into(), to: format!("P{p}"), traverse_s: taxi_s });
        }
        for c in 1..=chargers {
            nodes.push(LayoutNode { id: format!("C{c}"), class: NodeClass::PadCharger });
            links.push(TaxiLink { from: "F1".into(), to: format!("C{c}"), traverse_s: taxi_s });
        }
        Self { id: id.to_string(), position, nodes, links }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: String| SimError::Layout { id: self.id.clone(), reason };
        check_id(&self.id).map_err(|r| SimError::Layout { id: self.id.clone(), reason: r })?;
        if !(self.position.lat_deg.is_finite()
            && self.position.lon_deg.is_finite()
            && self.position.lat_deg.abs() <= 90.0
            && self.position.lon_deg.abs() <= 180.0)
        {
            return Err(bad("position outside the globe".into()));
        }
        if self.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        let mut ids = BTreeSet::new();
        for node in &self.nodes {
            check_id(&node.id).map_err(|r| bad(format!("node `{}`: {r}", node.id)))?;
            if !ids.insert(node.id.as_str()) {
                return Err(bad(format!("duplicate node id `{}`", node.id)));
            }
        }
        if self.fato_count() == 0 {
            return Err(bad("needs at least one FATO".into()));
        }
        if self.pad_count() == 0 {
            return Err(bad("needs at least one parking pad".into()));
        }
        for link in &self.links {
            for end in [&link.from, &link.to] {
                if !ids.contains(end.as_str()) {
                    return Err(bad(format!("link references unknown node `{end}`")));
                }
            }
            if link.from == link.to {
                return Err(bad(format!("link `{}` loops onto itself", link.from)));
            }
            if !(link.traverse_s > 0.0 && link.traverse_s.is_finite()) {
                return Err(bad(format!(
                    "link {}-{} traverse time must be positive, found {}",
                    link.from, link.to, link.traverse_s
                )));
            }
        }
        if !self.is_connected() {
            return Err(bad("taxiway graph is not connected".into()));
        }
        Ok(())
    }

    pub fn fato_count(&self) -> u32 {
        self.nodes.iter().filter(|n| n.class == NodeClass::Fato).count() as u32
    }

    /// Parking pads, charger-equipped ones included.
    pub fn pad_count(&self) -> u32 {
        self.nodes.iter().filter(|n| n.class.is_pad()).count() as u32
    }

    pub fn charger_count(&self) -> u32 {
        self.nodes.iter().filter(|n| n.class == NodeClass::PadCharger).count() as u32
    }

    pub fn nodes_of_class(&self, class: NodeClass) -> impl Iterator<Item = &LayoutNode> {
        self.nodes.iter().filter(move |n| n.class == class)
    }

    fn is_connected(&self) -> bool {
        let mut adjacency: BTreeMap<&str, Vec<&str>> =
            self.nodes.iter().map(|n| (n.id.as_str(), Vec::new())).collect();
        for link in &self.links {
            adjacency.get_mut(link.from.as_str()).unwrap().push(&link.to);
            adjacency.get_mut(link.to.as_str()).unwrap().push(&link.from);
        }
        let start = self.nodes[0].id.as_str();
        let mut seen = BTreeSet::from([start]);
        let mut frontier = VecDeque::from([start]);
        while let Some(node) = frontier.pop_front() {
            for &next in &adjacency[node] {
                if seen.insert(next) {
                    frontier.push_back(next);
                }
            }
        }
        seen.len() == self.nodes.len()
    }

    /// All-pairs shortest taxi times over the (undirected) taxiways.
    /// Layout graphs have a handful of nodes, so Floyd-Warshall wins on
    /// simplicity.
    pub fn taxi_times(&self) -> BTreeMap<(String, String), f64> {
        let n = self.nodes.len();
        let index: BTreeMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, node)| (node.id.as_str(), i)).collect();
        let mut dist = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for link in &self.links {
            let (a, b) = (index[link.from.as_str()], index[link.to.as_str()]);
            dist[a][b] = dist[a][b].min(link.traverse_s);
            dist[b][a] = dist[b][a].min(link.traverse_s);
        }
        for via in 0..n {
            for from in 0..n {
                for to in 0..n {
                    let detour = dist[from][via] + dist[via][to];
                    if detour < dist[from][to] {
                        dist[from][to] = detour;
                    }
                }
            }
        }
        let mut times = BTreeMap::new();
        for (i, from) in self.nodes.iter().enumerate() {
            for (j, to) in self.nodes.iter().enumerate() {
                if dist[i][j].is_finite() {
                    times.insert((from.id.clone(), to.id.clone()), dist[i][j]);
                }
            }
        }
        times
    }
}

/// Ids appear inside space-separated `key=value` event payloads, so
/// they must not carry the separators.
fn check_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("empty id".into());
    }
    if id.chars().any(|c| c.is_whitespace() || c == '=' || c == ',') {
        return Err(format!("id `{id}` contains whitespace, `=`, or `,`"));
    }
    Ok(())
}

/// Reads a JSON array of layouts, validating each.
pub fn read_layouts_json<R: std::io::Read>(reader: R) -> Result<Vec<VertiportLayout>, SimError> {
    let layouts: Vec<VertiportLayout> =
        serde_json::from_reader(reader).map_err(|e| SimError::Json(e.to_string()))?;
    let mut ids = BTreeSet::new();
    for layout in &layouts {
        layout.validate()?;
        if !ids.insert(layout.id.clone()) {
            return Err(SimError::Layout {
                id: layout.id.clone(),
                reason: "duplicate vertiport id".into(),
            });
        }
    }
    Ok(layouts)
}

pub fn write_layouts_json<W: std::io::Write>(
    layouts: &[VertiportLayout],
    writer: W,
) -> Result<(), SimError> {
    serde_json::to_writer_pretty(writer, layouts).map_err(|e| SimError::Json(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monterey() -> LatLon {
        LatLon::new(36.587, -121.843)
    }

    #[test]
    fn simple_layout_validates_and_counts() {
        let layout = VertiportLayout::simple("A", monterey(), 3, 2, 20.0);
        layout.validate().unwrap();
        assert_eq!(layout.fato_count(), 1);
        assert_eq!(layout.pad_count(), 5);
        assert_eq!(layout.charger_count(), 2);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut layout = VertiportLayout::simple("A", monterey(), 2, 1, 20.0);
        layout.links.pop();
        let err = layout.validate().unwrap_err();
        assert!(err.to_string().contains("not connected"), "{err}");
    }

    #[test]
    fn missing_fato_is_rejected() {
        let mut layout = VertiportLayout::simple("A", monterey(), 2, 1, 20.0);
        layout.nodes.remove(0);
        layout.links.clear();
        layout.nodes.push(LayoutNode { id: "X".into(), class: NodeClass::Pad });
        layout.links.push(TaxiLink { from: "P1".into(), to: "P2".into(), traverse_s: 5.0 });
        layout.links.push(TaxiLink { from: "P2".into(), to: "C1".into(), traverse_s: 5.0 });
        layout.links.push(TaxiLink { from: "C1".into(), to: "X".into(), traverse_s: 5.0 });
        let err = layout.validate().unwrap_err();
        assert!(err.to_string().contains("FATO"), "{err}");
    }

    #[test]
    fn bad_ids_and_links_are_rejected() {
        let mut layout = VertiportLayout::simple("A B", monterey(), 1, 1, 20.0);
        assert!(layout.validate().is_err());
        layout.id = "A".into();
        layout.links[0].traverse_s = 0.0;
        assert!(layout.validate().is_err());
        layout.links[0].traverse_s = 20.0;
        layout.links.push(TaxiLink { from: "F1".into(), to: "GHOST".into(), traverse_s: 1.0 });
        assert!(layout.validate().is_err());
    }

    #[test]
    fn duplicate_node_id_is_rejected() {
        let mut layout = VertiportLayout::simple("A", monterey(), 2, 0, 20.0);
        layout.nodes.push(LayoutNode { id: "P1".into(), class: NodeClass::Pad });
        assert!(layout.validate().unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn taxi_times_take_the_short_way_around() {
        // F1 - P1 - P2 with a slow direct F1 - P2 alternative.
        let layout = VertiportLayout {
            id: "A".into(),
            position: monterey(),
            nodes: vec![
                LayoutNode { id: "F1".into(), class: NodeClass::Fato },
                LayoutNode { id: "P1".into(), class: NodeClass::Pad },
                LayoutNode { id: "P2".into(), class: NodeClass::PadCharger },
            ],
            links: vec![
                TaxiLink { from: "F1".into(), to: "P1".into(), traverse_s: 10.0 },
                TaxiLink { from: "P1".into(), to: "P2".into(), traverse_s: 10.0 },
                TaxiLink { from: "F1".into(), to: "P2".into(), traverse_s: 50.0 },
            ],
        };
        layout.validate().unwrap();
        let times = layout.taxi_times();
        assert_eq!(times[&("F1".to_string(), "P2".to_string())], 20.0);
        assert_eq!(times[&("P2".to_string(), "F1".to_string())], 20.0);
        assert_eq!(times[&("P1".to_string(), "P1".to_string())], 0.0);
    }

    #[test]
    fn layouts_json_round_trips_and_rejects_duplicates() {
        let layouts = vec![
            VertiportLayout::simple("A", monterey(), 3, 2, 20.0),
            VertiportLayout::simple("B", LatLon::new(37.0, -121.5), 3, 2, 20.0),
        ];
        let mut buf = Vec::new();
        write_layouts_json(&layouts, &mut buf).unwrap();
        let back = read_layouts_json(buf.as_slice()).unwrap();
        assert_eq!(layouts, back);

        let twice = vec![layouts[0].clone(), layouts[0].clone()];
        let mut buf = Vec::new();
        write_layouts_json(&twice, &mut buf).unwrap();
        assert!(read_layouts_json(buf.as_slice()).is_err());
    }

    #[test]
    fn unknown_json_keys_are_rejected() {
        let text = r#"[{"id":"A","position":{"lat_deg":1.0,"lon_deg":2.0},
            "nodes":[{"id":"F1","class":"fato","paint":"green"}],"links":[]}]"#;
        assert!(read_layouts_json(text.as_bytes()).is_err());
    }
}
