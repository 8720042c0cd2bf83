//! Experiment configuration: a single TOML file with typed sections.
//!
//! Only `recipe` is mandatory; every other field has a recipe-appropriate
//! default that is filled in and echoed next to the results, so a re-run of
//! the echo reproduces the run byte for byte.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use starnls::{BackendKind, Nonlinearity, Preset, VertexCondition, VertexKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Theorem2_1,
    Lemma2_3,
    Lemma3_2,
    Lemma3_3,
    Lemma3_5,
    Cor3_4,
    AppendixA,
    SpectralSuite,
    ConvergenceSuite,
}

impl Recipe {
    pub const ALL: [Recipe; 9] = [
        Recipe::Theorem2_1,
        Recipe::Lemma2_3,
        Recipe::Lemma3_2,
        Recipe::Lemma3_3,
        Recipe::Lemma3_5,
        Recipe::Cor3_4,
        Recipe::AppendixA,
        Recipe::SpectralSuite,
        Recipe::ConvergenceSuite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Recipe::Theorem2_1 => "theorem-2-1",
            Recipe::Lemma2_3 => "lemma-2-3",
            Recipe::Lemma3_2 => "lemma-3-2",
            Recipe::Lemma3_3 => "lemma-3-3",
            Recipe::Lemma3_5 => "lemma-3-5",
            Recipe::Cor3_4 => "cor-3-4",
            Recipe::AppendixA => "appendix-a",
            Recipe::SpectralSuite => "spectral-suite",
            Recipe::ConvergenceSuite => "convergence-suite",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Recipe::Theorem2_1 => {
                "failure-of-scattering headline: pairing audit race and pullback plateau vs short-range control"
            }
            Recipe::Lemma2_3 => "numerical wave operator with P_ac: Kirchhoff, Dirichlet and delta bound-state cases",
            Recipe::Lemma3_2 => "Dollard factorization and profile convergence, plus Fourier-Sine transform checks",
            Recipe::Lemma3_3 => "vertex-derivative bound |∂_x w(t,0+)| <= t^{-1/2}‖φ'‖₁ over dyadic times",
            Recipe::Lemma3_5 => "adversarial test-function construction on randomized profiles",
            Recipe::Cor3_4 => "cumulative boundary integral growth exponent (tau^{1/2} ceiling)",
            Recipe::AppendixA => "admissible pairs and the weak-solution identity under refinement",
            Recipe::SpectralSuite => "vertex-condition admissibility, scattering matrices, bound states, resolvent ranks",
            Recipe::ConvergenceSuite => "quadrature, propagator and splitting convergence orders",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub n_edges: usize,
    pub edge_length: f64,
    pub points_per_edge: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSection {
    pub kind: VertexKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<(f64, f64)>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<(f64, f64)>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    /// "off" disables the nonlinearity; otherwise p and lambda apply.
    #[serde(default)]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_interval: f64,
    pub backend: BackendKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_velocity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<usize>>,
    #[serde(default)]
    pub dirichlet_compatible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub edge: usize,
    pub tau_max: f64,
    pub fit_window: (f64, f64),
    /// Pullback times for theorem-2-1 (long-range plateau set).
    pub pullback_times: Vec<f64>,
    /// Control-run pullback times (dyadic) and wave-operator schedule.
    pub schedule: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub recipe: Recipe,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub graph: GraphSection,
    pub vertex: VertexSection,
    pub evolution: EvolutionSection,
    pub initial: InitialSection,
    pub diagnostics: DiagnosticsSection,
}

/// Partial file: every section optional, defaults filled per recipe.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSpec {
    recipe: String,
    seed: Option<u64>,
    output: Option<String>,
    graph: Option<toml::Value>,
    vertex: Option<toml::Value>,
    evolution: Option<toml::Value>,
    initial: Option<toml::Value>,
    diagnostics: Option<toml::Value>,
}

fn recipe_from_name(name: &str) -> Result<Recipe> {
    Recipe::ALL
        .iter()
        .copied()
        .find(|r| r.name() == name)
        .with_context(|| {
            format!(
                "unknown recipe `{name}`; known recipes: {}",
                Recipe::ALL.map(|r| r.name()).join(", ")
            )
        })
}

/// The tuned defaults every recipe starts from.
pub fn default_spec(recipe: Recipe) -> ExperimentSpec {
    let (graph, vertex, evolution, initial, diagnostics) = match recipe {
        Recipe::Theorem2_1 => (
            GraphSection { n_edges: 3, edge_length: 400.0, points_per_edge: 16384 },
            VertexSection { kind: VertexKind::Kirchhoff, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: None,
                p: Some(0.5),
                lambda: Some(1.0),
                dt: 5e-3,
                t_end: 150.0,
                snapshot_interval: 0.46875,
                backend: BackendKind::CnGeneral,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(15.0),
                width: Some(4.0),
                amplitude: Some(1.0),
                phase_velocity: Some(0.0),
                edges: None,
                dirichlet_compatible: false,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 150.0,
                fit_window: (20.0, 150.0),
                pullback_times: (0..=12).map(|k| 18.75 * 2f64.powf(k as f64 / 4.0)).collect(),
                schedule: vec![18.75, 37.5, 75.0, 150.0],
            },
        ),
        Recipe::Lemma2_3 => (
            GraphSection { n_edges: 3, edge_length: 800.0, points_per_edge: 16384 },
            VertexSection { kind: VertexKind::Kirchhoff, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: Some("off".into()),
                p: None,
                lambda: None,
                dt: 5e-3,
                t_end: 80.0,
                snapshot_interval: 10.0,
                backend: BackendKind::KirchhoffKernel,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(10.0),
                width: Some(2.0),
                amplitude: Some(1.0),
                phase_velocity: Some(-1.75),
                edges: Some(vec![0]),
                dirichlet_compatible: false,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 80.0,
                fit_window: (10.0, 80.0),
                pullback_times: vec![],
                schedule: vec![10.0, 20.0, 40.0, 80.0],
            },
        ),
        Recipe::Lemma3_2 => (
            GraphSection { n_edges: 2, edge_length: 600.0, points_per_edge: 24576 },
            VertexSection { kind: VertexKind::Dirichlet, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: Some("off".into()),
                p: None,
                lambda: None,
                dt: 5e-3,
                t_end: 80.0,
                snapshot_interval: 5.0,
                backend: BackendKind::DirichletSpectral,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(5.0),
                width: Some(1.0),
                amplitude: Some(1.0),
                phase_velocity: Some(0.0),
                edges: None,
                dirichlet_compatible: true,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 80.0,
                fit_window: (4.0, 100.0),
                pullback_times: vec![5.0, 10.0, 20.0, 40.0, 80.0],
                schedule: vec![5.0, 20.0, 80.0],
            },
        ),
        Recipe::Lemma3_3 | Recipe::Cor3_4 => (
            GraphSection { n_edges: 2, edge_length: 60.0, points_per_edge: 2048 },
            VertexSection { kind: VertexKind::Dirichlet, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: Some("off".into()),
                p: None,
                lambda: None,
                dt: 5e-3,
                t_end: 128.0,
                snapshot_interval: 1.0,
                backend: BackendKind::DirichletSpectral,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(15.0),
                width: Some(1.5),
                amplitude: Some(1.0),
                phase_velocity: Some(0.0),
                edges: None,
                dirichlet_compatible: true,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 128.0,
                fit_window: (8.0, 128.0),
                pullback_times: vec![],
                schedule: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
            },
        ),
        Recipe::Lemma3_5 => (
            GraphSection { n_edges: 2, edge_length: 100.0, points_per_edge: 2048 },
            VertexSection { kind: VertexKind::Dirichlet, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: None,
                p: Some(0.5),
                lambda: Some(1.0),
                dt: 5e-3,
                t_end: 1.0,
                snapshot_interval: 1.0,
                backend: BackendKind::DirichletSpectral,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(10.0),
                width: Some(2.0),
                amplitude: Some(1.0),
                phase_velocity: Some(0.0),
                edges: None,
                dirichlet_compatible: true,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 20.0,
                fit_window: (1.0, 20.0),
                pullback_times: vec![],
                schedule: vec![],
            },
        ),
        Recipe::AppendixA => (
            GraphSection { n_edges: 2, edge_length: 60.0, points_per_edge: 1024 },
            VertexSection { kind: VertexKind::Dirichlet, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: None,
                p: Some(0.5),
                lambda: Some(1.0),
                dt: 8e-3,
                t_end: 4.0,
                snapshot_interval: 0.4,
                backend: BackendKind::DirichletSpectral,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(20.0),
                width: Some(2.0),
                amplitude: Some(1.0),
                phase_velocity: Some(0.0),
                edges: None,
                dirichlet_compatible: true,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 4.0,
                fit_window: (0.0, 4.0),
                pullback_times: vec![],
                schedule: vec![],
            },
        ),
        Recipe::SpectralSuite => (
            GraphSection { n_edges: 3, edge_length: 40.0, points_per_edge: 256 },
            VertexSection { kind: VertexKind::Delta, alpha: Some(-1.0), a: None, b: None },
            EvolutionSection {
                nonlinearity: Some("off".into()),
                p: None,
                lambda: None,
                dt: 5e-3,
                t_end: 1.0,
                snapshot_interval: 1.0,
                backend: BackendKind::CnGeneral,
            },
            InitialSection {
                preset: "zero".into(),
                center: None,
                width: None,
                amplitude: None,
                phase_velocity: None,
                edges: None,
                dirichlet_compatible: false,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 20.0,
                fit_window: (0.5, 2.0),
                pullback_times: vec![],
                schedule: vec![0.5, 1.0, 2.0],
            },
        ),
        Recipe::ConvergenceSuite => (
            GraphSection { n_edges: 2, edge_length: 60.0, points_per_edge: 1024 },
            VertexSection { kind: VertexKind::Dirichlet, alpha: None, a: None, b: None },
            EvolutionSection {
                nonlinearity: None,
                p: Some(0.5),
                lambda: Some(1.0),
                dt: 2e-3,
                t_end: 2.0,
                snapshot_interval: 0.5,
                backend: BackendKind::DirichletSpectral,
            },
            InitialSection {
                preset: "gaussian-bump".into(),
                center: Some(20.0),
                width: Some(2.0),
                amplitude: Some(1.0),
                phase_velocity: Some(0.0),
                edges: None,
                dirichlet_compatible: true,
                rate: None,
            },
            DiagnosticsSection {
                edge: 0,
                tau_max: 2.0,
                fit_window: (0.0, 2.0),
                pullback_times: vec![],
                schedule: vec![],
            },
        ),
    };
    ExperimentSpec {
        recipe,
        seed: 42,
        output: None,
        graph,
        vertex,
        evolution,
        initial,
        diagnostics,
    }
}

fn merge_section<T: serde::de::DeserializeOwned + Serialize>(
    base: &T,
    overlay: Option<&toml::Value>,
    section: &str,
) -> Result<T> {
    match overlay {
        None => Ok(toml::Value::try_into(toml::Value::try_from(base)?)
            .context("round-trip of defaults")?),
        Some(value) => {
            let mut merged = toml::Value::try_from(base)?;
            let toml::Value::Table(ref mut table) = merged else {
                bail!("section [{section}] must be a table");
            };
            let toml::Value::Table(over) = value else {
                bail!("section [{section}] must be a table");
            };
            for (k, v) in over {
                table.insert(k.clone(), v.clone());
            }
            merged
                .try_into()
                .with_context(|| format!("in section [{section}]"))
        }
    }
}

/// Parse and validate a configuration file; defaults filled in.
pub fn validate_config(text: &str) -> Result<ExperimentSpec> {
    let partial: PartialSpec = toml::from_str(text).context("parse error")?;
    let recipe = recipe_from_name(&partial.recipe)?;
    let base = default_spec(recipe);
    let spec = ExperimentSpec {
        recipe,
        seed: partial.seed.unwrap_or(base.seed),
        output: partial.output.or(base.output),
        graph: merge_section(&base.graph, partial.graph.as_ref(), "graph")?,
        vertex: merge_section(&base.vertex, partial.vertex.as_ref(), "vertex")?,
        evolution: merge_section(&base.evolution, partial.evolution.as_ref(), "evolution")?,
        initial: merge_section(&base.initial, partial.initial.as_ref(), "initial")?,
        diagnostics: merge_section(&base.diagnostics, partial.diagnostics.as_ref(), "diagnostics")?,
    };
    semantic_checks(&spec)?;
    Ok(spec)
}

fn semantic_checks(spec: &ExperimentSpec) -> Result<()> {
    let g = &spec.graph;
    if g.n_edges < 2 {
        bail!("schema violation: graph.n_edges = {} (need >= 2)", g.n_edges);
    }
    if !(g.edge_length > 0.0) {
        bail!("schema violation: graph.edge_length = {} (need > 0)", g.edge_length);
    }
    if g.points_per_edge < 8 {
        bail!("schema violation: graph.points_per_edge = {} (need >= 8)", g.points_per_edge);
    }
    spec.vertex_condition()
        .context("physical inconsistency in [vertex]")?;
    if spec.evolution.nonlinearity.as_deref() != Some("off") {
        let p = spec.evolution.p.context("schema violation: evolution.p is required unless nonlinearity = \"off\"")?;
        if !(p > 0.0 && p <= 4.0) {
            bail!("schema violation: evolution.p = {p} outside (0, 4]");
        }
        let lambda = spec
            .evolution
            .lambda
            .context("schema violation: evolution.lambda is required unless nonlinearity = \"off\"")?;
        if lambda != 1.0 && lambda != -1.0 {
            bail!("schema violation: evolution.lambda = {lambda} (need ±1)");
        }
    }
    if !(spec.evolution.dt > 0.0 && spec.evolution.dt <= 1e-2) {
        bail!(
            "physical inconsistency: evolution.dt = {} outside (0, 1e-2] (too coarse for the requested tolerances)",
            spec.evolution.dt
        );
    }
    if spec.evolution.snapshot_interval < spec.evolution.dt {
        bail!("schema violation: snapshot_interval must be at least dt");
    }
    spec.preset().context("schema violation in [initial]")?;
    if spec.diagnostics.edge >= g.n_edges {
        bail!("schema violation: diagnostics.edge = {} out of range", spec.diagnostics.edge);
    }
    if spec.diagnostics.fit_window.0 >= spec.diagnostics.fit_window.1 {
        bail!("schema violation: diagnostics.fit_window must be increasing");
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn vertex_condition(&self) -> Result<VertexCondition> {
        let v = &self.vertex;
        let rec = starnls::VertexConditionRecord {
            kind: v.kind,
            n: self.graph.n_edges,
            alpha: v.alpha,
            a: v.a.clone(),
            b: v.b.clone(),
        };
        VertexCondition::from_record(&rec).map_err(|e| match e {
            starnls::VertexError::InvalidAlpha => anyhow::anyhow!(
                "delta condition requires a nonzero coupling (vertex.alpha = 0 is the Kirchhoff case)"
            ),
            other => anyhow::anyhow!(other),
        })
    }

    pub fn preset(&self) -> Result<Preset> {
        let i = &self.initial;
        match i.preset.as_str() {
            "zero" => Ok(Preset::Zero),
            "gaussian-bump" => Ok(Preset::GaussianBump {
                center: i.center.context("initial.center is required for gaussian-bump")?,
                width: i.width.context("initial.width is required for gaussian-bump")?,
                amplitude: i.amplitude.unwrap_or(1.0),
                phase_velocity: i.phase_velocity.unwrap_or(0.0),
                edges: i.edges.clone(),
                dirichlet: i.dirichlet_compatible,
            }),
            "exponential-decay" => Ok(Preset::ExponentialDecay {
                rate: i.rate.context("initial.rate is required for exponential-decay")?,
                dirichlet: i.dirichlet_compatible,
            }),
            other => bail!("unknown preset `{other}` (known: zero, gaussian-bump, exponential-decay)"),
        }
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        if self.evolution.nonlinearity.as_deref() == Some("off") {
            Nonlinearity::Off
        } else {
            Nonlinearity::Power {
                p: self.evolution.p.unwrap_or(0.5),
                lambda: self.evolution.lambda.unwrap_or(1.0),
            }
        }
    }

    pub fn echo_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }
}
