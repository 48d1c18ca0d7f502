use kreinlab_core::dtn::{BoundaryOperatorSpec, RealizationMode, RealizationSpec};
use kreinlab_core::elliptic::CoefficientSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

pub const SUITES: [&str; 8] = ["decay", "dirichlet", "dtn", "extension-oracle", "green", "krein", "regularity", "smoothing"];

#[derive(Debug)]
pub struct SchemaError {
    /// JSON pointer to the offending value
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

fn bad<T>(pointer: &str, message: impl Into<String>) -> Result<T, SchemaError> {
    Err(SchemaError { pointer: pointer.into(), message: message.into() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BottomShape {
    Flat,
    /// amplitude * sin(mode * x')
    Sine {
        amplitude: f64,
        #[serde(default = "one_u32")]
        mode: u32,
    },
    /// equispaced samples over one period, resampled trigonometrically
    Samples { values: Vec<f64> },
}

fn one_u32() -> u32 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    #[serde(default = "two_pi")]
    pub period: f64,
    #[serde(default = "one_f64")]
    pub extent: f64,
    pub bottom: BottomShape,
    /// Besov index and integrability of the boundary graph; tau = M - 3/2 - 1/p
    #[serde(rename = "M")]
    pub m: u32,
    pub p: f64,
}

fn two_pi() -> f64 {
    2.0 * PI
}

fn one_f64() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ray {
    /// angle of the ray in radians
    pub angle: f64,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub ray: Ray,
    /// tangential resolutions; each rung uses nn = nt + 1
    pub mesh_ladder: Vec<usize>,
    /// spectral parameters for the Krein, Dirichlet and regularity suites, as [re, im]
    pub lambdas: Vec<[f64; 2]>,
    /// grid of the decay suite
    #[serde(default = "decay_grid")]
    pub decay_grid: [usize; 2],
}

fn decay_grid() -> [usize; 2] {
    [32, 257]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Smoothing {
    #[serde(default = "smoothing_n")]
    pub n: usize,
    #[serde(default = "half")]
    pub delta: f64,
    pub tau: f64,
}

fn smoothing_n() -> usize {
    256
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    pub coefficients: CoefficientSpec,
    pub realization: RealizationSpec,
    pub sweep: Sweep,
    #[serde(default)]
    pub smoothing: Option<Smoothing>,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "oracle_pairs")]
    pub oracle_pairs: usize,
}

fn oracle_pairs() -> usize {
    20
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| SchemaError {
            pointer: pointer(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let g = &self.geometry;
        if !(g.period > 0.0) {
            return bad("/geometry/period", "must be positive");
        }
        if !(g.extent > 0.0) {
            return bad("/geometry/extent", "must be positive");
        }
        if g.m as f64 - 1.5 - 1.0 / g.p <= 0.0 {
            return bad("/geometry/p", "tau = M - 3/2 - 1/p must be positive");
        }
        if let BottomShape::Samples { values } = &g.bottom {
            if values.is_empty() {
                return bad("/geometry/bottom/values", "needs at least one sample");
            }
        }
        for (i, name) in self.suites.iter().enumerate() {
            if !SUITES.contains(&name.as_str()) {
                return bad(&format!("/suites/{i}"), format!("unknown suite `{name}`"));
            }
        }
        validate_ladder(&self.sweep.mesh_ladder, "/sweep/mesh_ladder")?;
        if self.sweep.lambdas.is_empty() {
            return bad("/sweep/lambdas", "needs at least one value");
        }
        if self.sweep.ray.mu.len() < 2 {
            return bad("/sweep/ray/mu", "needs at least two values");
        }
        for (i, mu) in self.sweep.ray.mu.iter().enumerate() {
            if !(*mu > 0.0) {
                return bad(&format!("/sweep/ray/mu/{i}"), "must be positive");
            }
        }
        let [nt, nn] = self.sweep.decay_grid;
        if nt < 8 || nt % 2 != 0 || nn < 5 {
            return bad("/sweep/decay_grid", "needs an even nt >= 8 and nn >= 5");
        }
        let r = &self.realization;
        if r.c.is_none() {
            return bad("/realization", "missing field `C`");
        }
        if matches!(r.mode, RealizationMode::Subspace) && !matches!(r.c, Some(BoundaryOperatorSpec::Multiplier { .. })) {
            return bad("/realization/C/kind", "subspace mode is built from a multiplier C");
        }
        if let Some(s) = &self.smoothing {
            if s.n < 16 || !s.n.is_power_of_two() {
                return bad("/smoothing/n", "must be a power of two >= 16");
            }
            if !(s.delta > 0.0 && s.delta < 1.0) {
                return bad("/smoothing/delta", "must lie in (0, 1)");
            }
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.geometry.m as f64 - 1.5 - 1.0 / self.geometry.p
    }
}

pub fn validate_ladder(ladder: &[usize], at: &str) -> Result<(), SchemaError> {
    if ladder.len() < 2 {
        return bad(at, "needs at least two rungs");
    }
    for (i, n) in ladder.iter().enumerate() {
        if *n < 8 || n % 2 != 0 {
            return bad(&format!("{at}/{i}"), "rungs must be even and >= 8");
        }
        if i > 0 && *n != 2 * ladder[i - 1] {
            return bad(&format!("{at}/{i}"), "each rung must double the previous one");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "geometry": {"bottom": {"kind": "flat"}, "M": 2, "p": 8},
        "coefficients": {"name": "laplace"},
        "realization": {"mode": "neumann_type", "C": {"kind": "multiplier", "params": {"value": -1}}, "component": "both"},
        "sweep": {"ray": {"angle": 2.356, "mu": [4, 8]}, "mesh_ladder": [16, 32], "lambdas": [[-1, 0]]}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = ScenarioConfig::parse(MINIMAL).unwrap();
        assert!(c.suites.is_empty());
        assert_eq!(c.sweep.decay_grid, [32, 257]);
        assert!((c.tau() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn type_errors_carry_a_pointer() {
        let text = MINIMAL.replace("\"mu\": [4, 8]", "\"mu\": [4, \"x\"]");
        let e = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(e.pointer, "/sweep/ray/mu/1");
        let text = MINIMAL.replace("\"M\": 2", "\"M\": 2, \"extra\": 1");
        assert_eq!(ScenarioConfig::parse(&text).unwrap_err().pointer, "/geometry/extra");
    }

    #[test]
    fn semantic_errors_carry_a_pointer() {
        let text = MINIMAL.replace("[16, 32]", "[16, 48]");
        assert_eq!(ScenarioConfig::parse(&text).unwrap_err().pointer, "/sweep/mesh_ladder/1");
        let text = MINIMAL.replace("\"geometry\"", "\"suites\": [\"green\", \"nope\"], \"geometry\"");
        assert_eq!(ScenarioConfig::parse(&text).unwrap_err().pointer, "/suites/1");
    }
}
