//! Distribution-network description: buses, lines, device placements, and the
//! `.net` text format parser.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub dynamic: bool,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusNetwork {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub slack: u32,
    pub s_base_mva: f64,
    pub v_base_kv: f64,
    /// Susceptance (pu) of the tie between the slack bus and the external
    /// grid reference; anchors the angle dynamics.
    pub ext_grid_b: f64,
    /// (generator id, bus id) placements, in file order.
    pub generators: Vec<(String, u32)>,
    pub pvbess_bus: Option<u32>,
    /// Sensor targets, as state names of the assembled model.
    pub sensors: Vec<String>,
}

impl BusNetwork {
    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.v_base_kv * self.v_base_kv / self.s_base_mva
    }

    /// Per-unit series susceptance of a line (DC power-flow, 1/x).
    pub fn line_susceptance(&self, line: &Line) -> f64 {
        self.z_base() / line.x_ohm
    }

    pub fn bus(&self, id: u32) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn line(&self, id: u32) -> Option<&Line> {
        self.lines.iter().find(|l| l.id == id)
    }

    /// Dynamic-equipment buses: generator buses in placement order, then the
    /// PV-BESS bus if present.
    pub fn dynamic_bus_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.generators.iter().map(|(_, b)| *b).collect();
        if let Some(b) = self.pvbess_bus {
            if !ids.contains(&b) {
                ids.push(b);
            }
        }
        ids
    }

    /// Copy of the network with one line switched out of service.
    pub fn without_line(&self, line_id: u32) -> Result<BusNetwork> {
        let mut net = self.clone();
        let line = net
            .lines
            .iter_mut()
            .find(|l| l.id == line_id)
            .ok_or_else(|| Error::Validation(format!("no line with id {line_id}")))?;
        if !line.in_service {
            return Err(Error::Validation(format!(
                "line {line_id} is already out of service"
            )));
        }
        line.in_service = false;
        Ok(net)
    }

    /// Set of bus ids reachable from the slack over in-service lines.
    pub fn slack_component(&self) -> BTreeSet<u32> {
        let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for l in self.lines.iter().filter(|l| l.in_service) {
            adj.entry(l.from).or_default().push(l.to);
            adj.entry(l.to).or_default().push(l.from);
        }
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(self.slack);
        queue.push_back(self.slack);
        while let Some(b) = queue.pop_front() {
            if let Some(next) = adj.get(&b) {
                for &n in next {
                    if seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        seen
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_base_mva <= 0.0 || self.v_base_kv <= 0.0 {
            return Err(Error::Validation("nonpositive system base".into()));
        }
        if self.ext_grid_b < 0.0 {
            return Err(Error::Validation("negative external grid susceptance".into()));
        }
        let mut ids = BTreeSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        if !ids.contains(&self.slack) {
            return Err(Error::Validation(format!(
                "slack bus {} not in bus list",
                self.slack
            )));
        }
        let mut line_ids = BTreeSet::new();
        for l in &self.lines {
            if !line_ids.insert(l.id) {
                return Err(Error::Validation(format!("duplicate line id {}", l.id)));
            }
            for end in [l.from, l.to] {
                if !ids.contains(&end) {
                    return Err(Error::Validation(format!(
                        "line {} references nonexistent bus {end}",
                        l.id
                    )));
                }
            }
            if l.r_ohm < 0.0 {
                return Err(Error::Validation(format!(
                    "line {} has negative resistance",
                    l.id
                )));
            }
            if l.x_ohm <= 0.0 {
                return Err(Error::Validation(format!(
                    "line {} has nonpositive reactance",
                    l.id
                )));
            }
        }
        let component = self.slack_component();
        if component.len() != self.buses.len() {
            let orphan = ids.difference(&component).next().copied().unwrap_or(0);
            return Err(Error::Validation(format!(
                "network is disconnected: bus {orphan} has no in-service path to slack {}",
                self.slack
            )));
        }
        let mut gen_ids = BTreeSet::new();
        for (gid, bus) in &self.generators {
            if !gen_ids.insert(gid.clone()) {
                return Err(Error::Validation(format!("duplicate generator id {gid}")));
            }
            let b = self
                .bus(*bus)
                .ok_or_else(|| Error::Validation(format!("generator {gid} on unknown bus {bus}")))?;
            if !b.dynamic {
                return Err(Error::Validation(format!(
                    "generator {gid} bus {bus} is not marked dynamic"
                )));
            }
        }
        if let Some(bus) = self.pvbess_bus {
            let b = self
                .bus(bus)
                .ok_or_else(|| Error::Validation(format!("pvbess on unknown bus {bus}")))?;
            if !b.dynamic {
                return Err(Error::Validation(format!(
                    "pvbess bus {bus} is not marked dynamic"
                )));
            }
        }
        Ok(())
    }
}

/// Parse a `.net` document. Sections: `[system]`, `[buses]`, `[lines]`,
/// `[generators]`, `[pvbess]`, `[sensors]`. `#` starts a comment.
pub fn load_network(text: &str) -> Result<BusNetwork> {
    let mut slack: Option<u32> = None;
    let mut s_base: Option<f64> = None;
    let mut v_base: Option<f64> = None;
    let mut ext_grid_b = 0.0;
    let mut buses = Vec::new();
    let mut lines = Vec::new();
    let mut generators = Vec::new();
    let mut pvbess_bus = None;
    let mut sensors = Vec::new();

    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: &str| Error::Parse(format!("line {}: {msg}", lineno + 1));
        if line.starts_with('[') && line.ends_with(']') {
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        match section.as_str() {
            "system" | "pvbess" => {
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| at("expected key = value"))?;
                let key = key.trim();
                let value = value.trim();
                let parse_f = || {
                    value
                        .parse::<f64>()
                        .map_err(|_| at(&format!("bad number {value:?}")))
                };
                let parse_u = || {
                    value
                        .parse::<u32>()
                        .map_err(|_| at(&format!("bad integer {value:?}")))
                };
                match (section.as_str(), key) {
                    ("system", "slack") => slack = Some(parse_u()?),
                    ("system", "s_base_mva") => s_base = Some(parse_f()?),
                    ("system", "v_base_kv") => v_base = Some(parse_f()?),
                    ("system", "ext_grid_b") => ext_grid_b = parse_f()?,
                    ("pvbess", "bus") => pvbess_bus = Some(parse_u()?),
                    _ => return Err(at(&format!("unknown key {key:?} in [{section}]"))),
                }
            }
            "buses" => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(at("expected: id dynamic p_mw q_mvar"));
                }
                buses.push(Bus {
                    id: f[0].parse().map_err(|_| at("bad bus id"))?,
                    dynamic: match f[1] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(at("dynamic flag must be 0 or 1")),
                    },
                    p_mw: f[2].parse().map_err(|_| at("bad p_mw"))?,
                    q_mvar: f[3].parse().map_err(|_| at("bad q_mvar"))?,
                });
            }
            "lines" => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 6 {
                    return Err(at("expected: id from to r_ohm x_ohm in_service"));
                }
                lines.push(Line {
                    id: f[0].parse().map_err(|_| at("bad line id"))?,
                    from: f[1].parse().map_err(|_| at("bad from bus"))?,
                    to: f[2].parse().map_err(|_| at("bad to bus"))?,
                    r_ohm: f[3].parse().map_err(|_| at("bad r_ohm"))?,
                    x_ohm: f[4].parse().map_err(|_| at("bad x_ohm"))?,
                    in_service: match f[5] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(at("in_service flag must be 0 or 1")),
                    },
                });
            }
            "generators" => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 2 {
                    return Err(at("expected: gen_id bus"));
                }
                generators.push((
                    f[0].to_string(),
                    f[1].parse().map_err(|_| at("bad generator bus"))?,
                ));
            }
            "sensors" => sensors.push(line.to_string()),
            "" => return Err(at("content before any section header")),
            other => return Err(at(&format!("unknown section [{other}]"))),
        }
    }

    let net = BusNetwork {
        buses,
        lines,
        slack: slack.ok_or_else(|| Error::Parse("missing [system] slack".into()))?,
        s_base_mva: s_base.ok_or_else(|| Error::Parse("missing [system] s_base_mva".into()))?,
        v_base_kv: v_base.ok_or_else(|| Error::Parse("missing [system] v_base_kv".into()))?,
        ext_grid_b,
        generators,
        pvbess_bus,
        sensors,
    };
    net.validate()?;
    Ok(net)
}

pub fn load_network_file(path: &Path) -> Result<BusNetwork> {
    load_network(&std::fs::read_to_string(path)?)
}
