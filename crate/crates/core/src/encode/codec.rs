use serde::{Deserialize, Serialize};

use crate::abm::{Agent, AgentType, ModelKind, Phase, SystemState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Min-max scaled into [-1, 1]; decoded values are rounded when `integer`.
    Numeric { min: f64, max: f64, integer: bool },
    Categorical { vocab: Vec<String> },
}

impl FeatureKind {
    fn width(&self) -> usize {
        match self {
            FeatureKind::Numeric { .. } => 1,
            FeatureKind::Categorical { vocab } => vocab.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    /// Predicted by the denoiser; static features only condition.
    pub dynamic: bool,
}

/// One raw feature value read off an agent.
#[derive(Debug, Clone, PartialEq)]
enum RawValue {
    Num(f64),
    Cat(&'static str),
    /// Numeric slot of an off-grid agent.
    Off,
}

/// Bidirectional map between [`Agent`]s and fixed-width vectors.
///
/// The full vector is laid out as
/// `[static features | dynamic categorical one-hots | dynamic numerics]`;
/// the dynamic vector is the trailing dynamic part alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCodec {
    pub model: ModelKind,
    pub grid: usize,
    /// Features in layout order.
    pub features: Vec<FeatureSpec>,
}

impl FeatureCodec {
    pub fn for_model(model: ModelKind, grid: usize) -> Self {
        let coord = |name: &str| FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Numeric {
                min: 0.0,
                max: (grid - 1) as f64,
                integer: true,
            },
            dynamic: true,
        };
        let cat = |name: &str, vocab: &[&str], dynamic| FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical {
                vocab: vocab.iter().map(|s| s.to_string()).collect(),
            },
            dynamic,
        };
        let features = match model {
            ModelKind::Schelling => vec![
                cat("type", &[AgentType::C1.name(), AgentType::C2.name()], false),
                coord("x"),
                coord("y"),
            ],
            ModelKind::PredPrey => vec![
                cat("type", &[AgentType::Prey.name(), AgentType::Predator.name()], false),
                cat("phase", &Phase::ALL.map(Phase::name), true),
                coord("x"),
                coord("y"),
            ],
        };
        let codec = Self { model, grid, features };
        debug_assert!(codec.check_layout().is_ok());
        codec
    }

    /// Static features first, then dynamic categoricals, then dynamic numerics.
    pub fn check_layout(&self) -> Result<()> {
        let rank = |f: &FeatureSpec| match (f.dynamic, &f.kind) {
            (false, _) => 0,
            (true, FeatureKind::Categorical { .. }) => 1,
            (true, FeatureKind::Numeric { .. }) => 2,
        };
        if self.features.windows(2).any(|w| rank(&w[0]) > rank(&w[1])) {
            return Err(Error::Parameter("codec features out of layout order".into()));
        }
        for f in &self.features {
            match &f.kind {
                FeatureKind::Numeric { min, max, .. } if !(max > min) => {
                    return Err(Error::Parameter(format!("feature `{}` has empty range", f.name)))
                }
                FeatureKind::Categorical { vocab } if vocab.is_empty() => {
                    return Err(Error::Parameter(format!("feature `{}` has no categories", f.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Width of the full encoding.
    pub fn dim(&self) -> usize {
        self.features.iter().map(|f| f.kind.width()).sum()
    }

    /// Width of the dynamic part.
    pub fn dyn_dim(&self) -> usize {
        self.features
            .iter()
            .filter(|f| f.dynamic)
            .map(|f| f.kind.width())
            .sum()
    }

    /// Offset of the dynamic part inside the full encoding.
    pub fn dyn_offset(&self) -> usize {
        self.dim() - self.dyn_dim()
    }

    fn raw(agent: &Agent, name: &str) -> RawValue {
        match name {
            "type" => RawValue::Cat(agent.kind.name()),
            "phase" => RawValue::Cat(agent.phase.map_or("", Phase::name)),
            "x" => agent.pos.map_or(RawValue::Off, |p| RawValue::Num(p.0 as f64)),
            "y" => agent.pos.map_or(RawValue::Off, |p| RawValue::Num(p.1 as f64)),
            other => unreachable!("codec has no feature `{other}`"),
        }
    }

    fn encode_into(&self, agent: &Agent, dynamic_only: bool, out: &mut Vec<f64>) -> Result<()> {
        for f in self.features.iter().filter(|f| f.dynamic || !dynamic_only) {
            match (&f.kind, Self::raw(agent, &f.name)) {
                (FeatureKind::Numeric { min, max, .. }, RawValue::Num(v)) => {
                    out.push(2.0 * (v - min) / (max - min) - 1.0);
                }
                (FeatureKind::Numeric { .. }, RawValue::Off) => out.push(0.0),
                (FeatureKind::Categorical { vocab }, RawValue::Cat(c)) => {
                    let k = vocab.iter().position(|v| v == c).ok_or_else(|| {
                        Error::UnknownCategory {
                            feature: f.name.clone(),
                            value: c.to_string(),
                        }
                    })?;
                    out.extend((0..vocab.len()).map(|j| if j == k { 1.0 } else { 0.0 }));
                }
                (kind, raw) => unreachable!("feature `{}`: {raw:?} for {kind:?}", f.name),
            }
        }
        Ok(())
    }

    pub fn encode_agent(&self, agent: &Agent) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        self.encode_into(agent, false, &mut out)?;
        Ok(out)
    }

    pub fn encode_dynamic(&self, agent: &Agent) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dyn_dim());
        self.encode_into(agent, true, &mut out)?;
        Ok(out)
    }

    /// Full encodings of every agent, row-major `n x dim`.
    pub fn encode_state(&self, state: &SystemState) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(state.len() * self.dim());
        for a in &state.agents {
            self.encode_into(a, false, &mut out)?;
        }
        Ok(out)
    }

    /// Dynamic encodings of every agent, row-major `n x dyn_dim`.
    pub fn encode_dynamic_state(&self, state: &SystemState) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(state.len() * self.dyn_dim());
        for a in &state.agents {
            self.encode_into(a, true, &mut out)?;
        }
        Ok(out)
    }

    /// Rebuilds an agent from a full encoding; id and parent come from
    /// `template`.
    pub fn decode_agent(&self, template: &Agent, v: &[f64]) -> Result<Agent> {
        self.decode(template, v, false)
    }

    /// Rebuilds an agent from a dynamic encoding; static features come from
    /// `template`.
    pub fn decode_dynamic(&self, template: &Agent, v: &[f64]) -> Result<Agent> {
        self.decode(template, v, true)
    }

    fn decode(&self, template: &Agent, v: &[f64], dynamic_only: bool) -> Result<Agent> {
        let expected = if dynamic_only { self.dyn_dim() } else { self.dim() };
        if v.len() != expected {
            return Err(Error::Dimension(format!(
                "decode expects {expected} values, got {}",
                v.len()
            )));
        }
        if let Some(bad) = v.iter().position(|x| x.is_nan()) {
            return Err(Error::Decode(format!("component {bad} is NaN")));
        }
        let mut agent = template.clone();
        let (mut x, mut y) = (None, None);
        let mut off = 0;
        for f in self.features.iter().filter(|f| f.dynamic || !dynamic_only) {
            let w = f.kind.width();
            let slot = &v[off..off + w];
            off += w;
            match &f.kind {
                FeatureKind::Numeric { min, max, integer } => {
                    let mut value = min + (slot[0] + 1.0) / 2.0 * (max - min);
                    if *integer {
                        value = value.round();
                    }
                    let value = value.clamp(*min, *max) as usize;
                    match f.name.as_str() {
                        "x" => x = Some(value),
                        _ => y = Some(value),
                    }
                }
                FeatureKind::Categorical { vocab } => {
                    let k = argmax(slot);
                    match f.name.as_str() {
                        "type" => agent.kind = parse_type(&vocab[k])?,
                        "phase" => agent.phase = Some(parse_phase(&vocab[k])?),
                        other => unreachable!("codec has no feature `{other}`"),
                    }
                }
            }
        }
        let on_grid = agent.phase.is_none_or(Phase::is_active);
        agent.pos = match (on_grid, x, y) {
            (true, Some(x), Some(y)) => Some((x, y)),
            _ => None,
        };
        Ok(agent)
    }

    /// Decodes `n x dyn_dim` rows onto the agents of `template`.
    pub fn decode_dynamic_state(&self, template: &SystemState, rows: &[f64]) -> Result<SystemState> {
        let d = self.dyn_dim();
        if rows.len() != template.len() * d {
            return Err(Error::Dimension(format!(
                "{} agents need {} values, got {}",
                template.len(),
                template.len() * d,
                rows.len()
            )));
        }
        let agents = template
            .agents
            .iter()
            .zip(rows.chunks_exact(d))
            .map(|(a, r)| self.decode_dynamic(a, r))
            .collect::<Result<_>>()?;
        Ok(SystemState {
            model: template.model,
            grid: template.grid,
            t: template.t + 1,
            agents,
        })
    }

    /// Decodes `n x dim` rows onto the agents of `template`.
    pub fn decode_state(&self, template: &SystemState, rows: &[f64]) -> Result<SystemState> {
        let d = self.dim();
        if rows.len() != template.len() * d {
            return Err(Error::Dimension(format!(
                "{} agents need {} values, got {}",
                template.len(),
                template.len() * d,
                rows.len()
            )));
        }
        let agents = template
            .agents
            .iter()
            .zip(rows.chunks_exact(d))
            .map(|(a, r)| self.decode_agent(a, r))
            .collect::<Result<_>>()?;
        Ok(SystemState {
            model: template.model,
            grid: template.grid,
            t: template.t + 1,
            agents,
        })
    }
}

/// Index of the largest value; the first one on ties.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn parse_type(s: &str) -> Result<AgentType> {
    [AgentType::C1, AgentType::C2, AgentType::Prey, AgentType::Predator]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::UnknownCategory {
            feature: "type".into(),
            value: s.into(),
        })
}

fn parse_phase(s: &str) -> Result<Phase> {
    Phase::ALL
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::UnknownCategory {
            feature: "phase".into(),
            value: s.into(),
        })
}
