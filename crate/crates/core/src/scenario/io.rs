//! One scenario per line, JSON objects with floats at 9 significant digits.

use super::{AgentKind, AgentTrack, Roadgraph, Scenario, ScenarioError, ScenarioTags, Template};
use crate::dynamics::{EgoState, OrientedBox, Point};
use serde_json::{Map, Value};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// Rounds to the value the file format stores (9 significant digits).
pub(crate) fn quantize(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn push_f(out: &mut String, x: f64) {
    assert!(x.is_finite(), "scenario floats must be finite");
    // The shortest representation of the quantized value has at most 9 digits.
    write!(out, "{}", quantize(x)).unwrap();
}

fn push_list<T>(out: &mut String, items: &[T], mut each: impl FnMut(&mut String, &T)) {
    out.push('[');
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        each(out, item);
    }
    out.push(']');
}

fn push_floats(out: &mut String, xs: &[f64]) {
    push_list(out, xs, |o, &x| push_f(o, x));
}

fn push_points(out: &mut String, pts: &[Point]) {
    push_list(out, pts, |o, p| push_floats(o, p));
}

fn push_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).unwrap());
}

pub(crate) fn encode_scenario(s: &Scenario) -> String {
    let mut o = String::with_capacity(64 * 1024);
    write!(o, "{{\"version\":{FORMAT_VERSION},\"id\":").unwrap();
    push_str(&mut o, &s.id);
    o.push_str(",\"dt\":");
    push_f(&mut o, s.dt);
    write!(o, ",\"horizon\":{},\"ego_track\":", s.horizon).unwrap();
    push_list(&mut o, &s.ego_track, |o, e| push_floats(o, &[e.x, e.y, e.heading, e.speed]));
    o.push_str(",\"agents\":");
    push_list(&mut o, &s.agents, |o, a| {
        write!(o, "{{\"id\":{},\"kind\":\"{}\",\"boxes\":", a.id, a.kind.name()).unwrap();
        push_list(o, &a.boxes, |o, b| match b {
            Some(b) => push_floats(o, &[b.cx, b.cy, b.heading, b.length, b.width]),
            None => o.push_str("null"),
        });
        o.push('}');
    });
    o.push_str(",\"road_edges\":");
    push_list(&mut o, &s.roadgraph.road_edges, |o, l| push_points(o, l));
    o.push_str(",\"lane_centers\":");
    push_list(&mut o, &s.roadgraph.lane_centers, |o, l| push_points(o, l));
    o.push_str(",\"route\":");
    push_points(&mut o, &s.route);
    o.push_str(",\"goal\":");
    push_floats(&mut o, &s.goal);
    o.push_str(",\"tags\":{\"template\":");
    push_str(&mut o, s.tags.template.name());
    write!(o, ",\"seed\":{},\"family\":{}}}}}", s.tags.seed, s.tags.family).unwrap();
    o
}

/// Decoding context: line number plus the JSON path being read.
struct Cursor<'a> {
    line: usize,
    path: String,
    value: &'a Value,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Malformed { line: self.line, field: self.path.clone(), message: message.into() }
    }

    fn field(&self, name: &str) -> Result<Cursor<'a>, ScenarioError> {
        let obj = self.object()?;
        let path = if self.path.is_empty() { name.to_string() } else { format!("{}.{name}", self.path) };
        match obj.get(name) {
            Some(value) => Ok(Cursor { line: self.line, path, value }),
            None => Err(ScenarioError::Malformed { line: self.line, field: path, message: "missing".into() }),
        }
    }

    fn object(&self) -> Result<&'a Map<String, Value>, ScenarioError> {
        self.value.as_object().ok_or_else(|| self.err("expected an object"))
    }

    fn items(&self) -> Result<Vec<Cursor<'a>>, ScenarioError> {
        let arr = self.value.as_array().ok_or_else(|| self.err("expected an array"))?;
        Ok(arr
            .iter()
            .enumerate()
            .map(|(i, value)| Cursor { line: self.line, path: format!("{}[{i}]", self.path), value })
            .collect())
    }

    fn f64(&self) -> Result<f64, ScenarioError> {
        self.value.as_f64().ok_or_else(|| self.err("expected a number"))
    }

    fn u64(&self) -> Result<u64, ScenarioError> {
        self.value.as_u64().ok_or_else(|| self.err("expected a non-negative integer"))
    }

    fn str(&self) -> Result<&'a str, ScenarioError> {
        self.value.as_str().ok_or_else(|| self.err("expected a string"))
    }

    fn floats<const N: usize>(&self) -> Result<[f64; N], ScenarioError> {
        let items = self.items()?;
        if items.len() != N {
            return Err(self.err(format!("expected {N} numbers, got {}", items.len())));
        }
        let mut out = [0.0; N];
        for (o, c) in out.iter_mut().zip(items) {
            *o = c.f64()?;
        }
        Ok(out)
    }

    fn points(&self) -> Result<Vec<Point>, ScenarioError> {
        self.items()?.iter().map(|c| c.floats::<2>()).collect()
    }

    fn polylines(&self) -> Result<Vec<Vec<Point>>, ScenarioError> {
        self.items()?.iter().map(|c| c.points()).collect()
    }
}

pub(crate) fn decode_scenario(line: usize, text: &str) -> Result<Scenario, ScenarioError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Malformed {
        line,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    let root = Cursor { line, path: String::new(), value: &value };
    let version = root.field("version")?;
    let found = version.value.as_i64().ok_or_else(|| version.err("expected an integer"))?;
    if found != FORMAT_VERSION as i64 {
        return Err(ScenarioError::VersionMismatch { line, found, expected: FORMAT_VERSION });
    }

    let ego_track = root
        .field("ego_track")?
        .items()?
        .iter()
        .map(|c| c.floats::<4>().map(|[x, y, heading, speed]| EgoState { x, y, heading, speed }))
        .collect::<Result<_, _>>()?;

    let mut agents = Vec::new();
    for a in root.field("agents")?.items()? {
        let kind_c = a.field("kind")?;
        let kind = match kind_c.str()? {
            "vehicle" => AgentKind::Vehicle,
            "pedestrian" => AgentKind::Pedestrian,
            other => return Err(kind_c.err(format!("unknown agent kind `{other}`"))),
        };
        let boxes = a
            .field("boxes")?
            .items()?
            .iter()
            .map(|b| {
                if b.value.is_null() {
                    Ok(None)
                } else {
                    b.floats::<5>().map(|[cx, cy, heading, length, width]| {
                        Some(OrientedBox { cx, cy, heading, length, width })
                    })
                }
            })
            .collect::<Result<_, _>>()?;
        let id_c = a.field("id")?;
        let id = u32::try_from(id_c.u64()?).map_err(|_| id_c.err("agent id out of range"))?;
        agents.push(AgentTrack { id, kind, boxes });
    }

    let tags = root.field("tags")?;
    let template_c = tags.field("template")?;
    let template: Template = template_c.str()?.parse().map_err(|e: ScenarioError| template_c.err(e.to_string()))?;

    let scenario = Scenario {
        id: root.field("id")?.str()?.to_string(),
        dt: root.field("dt")?.f64()?,
        horizon: root.field("horizon")?.u64()? as usize,
        ego_track,
        agents,
        roadgraph: Roadgraph {
            road_edges: root.field("road_edges")?.polylines()?,
            lane_centers: root.field("lane_centers")?.polylines()?,
        },
        route: root.field("route")?.points()?,
        goal: root.field("goal")?.floats::<2>()?,
        tags: ScenarioTags {
            template,
            seed: tags.field("seed")?.u64()?,
            family: tags.field("family")?.u64()?,
        },
    };
    scenario.validate().map_err(|e| ScenarioError::Malformed {
        line,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    Ok(scenario)
}

pub fn write_scenarios<W: Write>(mut w: W, scenarios: &[Scenario]) -> Result<(), ScenarioError> {
    for s in scenarios {
        w.write_all(encode_scenario(s).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenarios<R: Read>(r: R) -> Result<Vec<Scenario>, ScenarioError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_scenario(i + 1, &line)?);
    }
    Ok(out)
}

pub fn save_scenarios(path: impl AsRef<Path>, scenarios: &[Scenario]) -> Result<(), ScenarioError> {
    write_scenarios(BufWriter::new(File::create(path)?), scenarios)
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, ScenarioError> {
    read_scenarios(File::open(path)?)
}
