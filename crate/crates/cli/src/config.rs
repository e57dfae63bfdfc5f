//! Run configuration: TOML schema, preset resolution and grid specs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use coupler_cz::calibrate::OptimizeSettings;
use coupler_cz::device::{DeviceParams, TransmonParams, DEFAULT_LEVELS};
use coupler_cz::propagator::EvolutionSettings;
use coupler_cz::pulse::PulseParams;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSpec {
    pub freq_ghz: f64,
    pub anh_ghz: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub q1: TransmonSpec,
    pub coupler: TransmonSpec,
    pub q2: TransmonSpec,
    pub g1c_ghz: f64,
    pub g2c_ghz: f64,
}

impl DeviceSpec {
    pub fn from_params(d: &DeviceParams) -> Self {
        let t = |p: &TransmonParams| TransmonSpec {
            freq_ghz: p.frequency,
            anh_ghz: p.anharmonicity,
            levels: p.levels,
        };
        Self {
            q1: t(&d.q1),
            coupler: t(&d.coupler),
            q2: t(&d.q2),
            g1c_ghz: d.g1c,
            g2c_ghz: d.g2c,
        }
    }

    pub fn to_params(&self) -> Result<DeviceParams> {
        let t = |s: &TransmonSpec| TransmonParams::new(s.freq_ghz, s.anh_ghz).with_levels(s.levels);
        Ok(DeviceParams::new(
            t(&self.q1),
            t(&self.coupler),
            t(&self.q2),
            self.g1c_ghz,
            self.g2c_ghz,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSpec {
    pub amp0_ghz: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub t_f_ns: f64,
    #[serde(default)]
    pub detuning_ghz: f64,
}

impl PulseSpec {
    pub fn from_params(p: &PulseParams) -> Self {
        Self {
            amp0_ghz: p.amp0,
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            t_f_ns: p.t_f,
            detuning_ghz: p.detuning,
        }
    }

    pub fn to_params(&self) -> Result<PulseParams> {
        Ok(PulseParams::new(
            self.amp0_ghz,
            self.lambda1,
            self.lambda2,
            self.t_f_ns,
            self.detuning_ghz,
        )?)
    }
}

/// Either a preset name or an inline table.
#[derive(Debug, Clone, PartialEq)]
pub enum Source<S> {
    Preset(String),
    Inline(S),
}

struct SourceVisitor<S>(std::marker::PhantomData<S>);

impl<'de, S: Deserialize<'de>> Visitor<'de> for SourceVisitor<S> {
    type Value = Source<S>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a preset name or a table")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        Ok(Source::Preset(v.to_string()))
    }

    fn visit_map<A: MapAccess<'de>>(self, map: A) -> Result<Self::Value, A::Error> {
        S::deserialize(de::value::MapAccessDeserializer::new(map)).map(Source::Inline)
    }
}

impl<'de, S: Deserialize<'de>> Deserialize<'de> for Source<S> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(SourceVisitor(std::marker::PhantomData))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    pub dt_ns: Option<f64>,
    pub sample_stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub initial: Option<[f64; 3]>,
    pub max_evals: Option<usize>,
    pub cost_tol: Option<f64>,
    pub simplex_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub omega1_ghz: Option<String>,
    pub omega2_ghz: Option<String>,
    pub g_ghz: Option<String>,
    pub tg_ns: Option<String>,
    pub detuning_ghz: Option<String>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: Option<Source<DeviceSpec>>,
    pub pulse: Option<Source<PulseSpec>>,
    #[serde(default)]
    pub evolution: EvolutionSpec,
    #[serde(default)]
    pub optimize: OptimizeSpec,
    #[serde(default)]
    pub grid: GridSpec,
    pub mode: Option<String>,
    pub initial: Option<String>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn parse_toml<'de, T: Deserialize<'de>>(text: &'de str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| anyhow!("{}: {}", path.display(), e.to_string().trim_end()))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        parse_toml(&text, path)
    }

    pub fn evolution(&self, dt_flag: Option<f64>) -> EvolutionSettings {
        let mut s = EvolutionSettings::default();
        if let Some(dt) = dt_flag.or(self.evolution.dt_ns) {
            s.dt = dt;
        }
        if let Some(k) = self.evolution.sample_stride {
            s.sample_stride = k;
        }
        s
    }

    pub fn optimize(&self) -> OptimizeSettings {
        let mut s = OptimizeSettings::default();
        let o = &self.optimize;
        s.initial = o.initial.map(|[a, l1, l2]| (a, l1, l2));
        if let Some(v) = o.max_evals {
            s.max_evals = v;
        }
        if let Some(v) = o.cost_tol {
            s.cost_tol = v;
        }
        if let Some(v) = o.simplex_scale {
            s.simplex_scale = v;
        }
        s
    }
}

/// Resolves `--device`: a preset name or a TOML file of [`DeviceSpec`] keys.
pub fn resolve_device(flag: Option<&str>, config: Option<&Source<DeviceSpec>>) -> Result<DeviceSpec> {
    let source = match (flag, config) {
        (Some(_), Some(_)) => bail!("device given both by --device and in the config file"),
        (Some(f), None) => {
            if let Some(d) = DeviceParams::preset(f) {
                Source::Inline(DeviceSpec::from_params(&d))
            } else if Path::new(f).is_file() {
                let text = read(Path::new(f))?;
                Source::Inline(parse_toml::<DeviceSpec>(&text, Path::new(f))?)
            } else {
                bail!(
                    "unknown device '{f}': not a preset ({}) or a readable file",
                    DeviceParams::<f64>::PRESETS.join(", ")
                )
            }
        }
        (None, Some(s)) => s.clone(),
        (None, None) => Source::Preset("paper-tableI".into()),
    };
    let spec = match source {
        Source::Inline(s) => s,
        Source::Preset(name) => DeviceSpec::from_params(
            &DeviceParams::preset(&name).ok_or_else(|| anyhow!("unknown device preset '{name}'"))?,
        ),
    };
    spec.to_params()?;
    Ok(spec)
}

/// Resolves `--pulse` the same way; `None` if neither source is present.
pub fn resolve_pulse(flag: Option<&str>, config: Option<&Source<PulseSpec>>) -> Result<Option<PulseSpec>> {
    let source = match (flag, config) {
        (Some(_), Some(_)) => bail!("pulse given both by --pulse and in the config file"),
        (Some(f), None) => {
            if let Some(p) = PulseParams::preset(f) {
                Source::Inline(PulseSpec::from_params(&p))
            } else if Path::new(f).is_file() {
                let text = read(Path::new(f))?;
                Source::Inline(parse_toml::<PulseSpec>(&text, Path::new(f))?)
            } else {
                bail!(
                    "unknown pulse '{f}': not a preset ({}) or a readable file",
                    PulseParams::<f64>::PRESETS.join(", ")
                )
            }
        }
        (None, Some(s)) => s.clone(),
        (None, None) => return Ok(None),
    };
    let spec = match source {
        Source::Inline(s) => s,
        Source::Preset(name) => PulseSpec::from_params(
            &PulseParams::preset(&name).ok_or_else(|| anyhow!("unknown pulse preset '{name}'"))?,
        ),
    };
    spec.to_params()?;
    Ok(Some(spec))
}

/// `start:stop:count` (inclusive, evenly spaced) or a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.stop } else { self.start + step * k as f64 })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| -> Result<f64> {
            let v: f64 = p.trim().parse().with_context(|| format!("bad number '{p}' in grid '{s}'"))?;
            if !v.is_finite() {
                bail!("non-finite value in grid '{s}'");
            }
            Ok(v)
        };
        match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                Ok(Self { start: v, stop: v, count: 1 })
            }
            [a, b, n] => {
                let count: usize = n.trim().parse().with_context(|| format!("bad count '{n}' in grid '{s}'"))?;
                if count == 0 {
                    bail!("grid '{s}' has no points");
                }
                Ok(Self { start: num(a)?, stop: num(b)?, count })
            }
            _ => bail!("grid '{s}' must be 'start:stop:count' or a single value"),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        if self.count == 1 {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}:{}:{}", self.start, self.stop, self.count)
        }
    }
}

/// Flag value if given, else the config value, else `default`.
pub fn pick_grid(flag: Option<&str>, config: Option<&str>, name: &str, default: Option<&str>) -> Result<Grid> {
    let text = flag
        .or(config)
        .or(default)
        .ok_or_else(|| anyhow!("missing grid --{name}"))?;
    text.parse().with_context(|| format!("invalid --{name}"))
}
