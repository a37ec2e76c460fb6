use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEART: &str = include_str!("../../data/heart.txt");
const HOUSE: &str = include_str!("../../data/house.txt");

/// Names of the shapes shipped with the crate.
pub const BUILTIN_SHAPES: [&str; 2] = ["heart", "house"];

/// An ordered waypoint list `(p_0, .., p_r)` on the unit canvas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub name: String,
    pub waypoints: Vec<[f64; 2]>,
}

impl Shape {
    pub fn new(name: impl Into<String>, waypoints: Vec<[f64; 2]>) -> Result<Self> {
        let shape = Self {
            name: name.into(),
            waypoints,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::config(format!(
                "shape '{}' needs at least 2 waypoints",
                self.name
            )));
        }
        if let Some(p) = self
            .waypoints
            .iter()
            .find(|p| !p.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)))
        {
            return Err(Error::config(format!(
                "shape '{}' has waypoint ({}, {}) outside the canvas",
                self.name, p[0], p[1]
            )));
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "heart" => Self::parse(HEART),
            "house" => Self::parse(HOUSE),
            other => Err(Error::Request(format!("unknown shape '{other}'"))),
        }
    }

    /// Index of the final waypoint, `r`.
    pub fn last_index(&self) -> usize {
        self.waypoints.len() - 1
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Polyline length in canvas units.
    pub fn arc_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    /// Points along the polyline, consecutive samples at most `spacing` apart.
    pub fn sample_polyline(&self, spacing: f64) -> Vec<[f64; 2]> {
        assert!(spacing > 0.0);
        let mut out = vec![self.waypoints[0]];
        for w in self.waypoints.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let pieces = (len / spacing).ceil().max(1.0) as usize;
            for s in 1..=pieces {
                let u = s as f64 / pieces as f64;
                out.push([a[0] + (b[0] - a[0]) * u, a[1] + (b[1] - a[1]) * u]);
            }
        }
        out
    }

    /// Parses the text format: a name line, then one `x y` pair per line.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let name = lines
            .next()
            .ok_or_else(|| Error::format("shape file", "missing name line"))?
            .to_string();
        let mut waypoints = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => waypoints.push([x, y]),
                _ => {
                    return Err(Error::format(
                        "shape file",
                        format!("line {}: expected 'x y', got '{line}'", n + 2),
                    ))
                }
            }
        }
        Self::new(name, waypoints)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.name);
        for p in &self.waypoints {
            let _ = writeln!(s, "{} {}", p[0], p[1]);
        }
        s
    }

    /// Loads a builtin by name, or a shape file when `name_or_path` is a path.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if BUILTIN_SHAPES.contains(&name_or_path) {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::parse(&std::fs::read_to_string(path)?);
        }
        Err(Error::Request(format!("unknown shape '{name_or_path}'")))
    }
}
