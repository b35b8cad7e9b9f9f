use modalshift::alns::AlnsParams;
use modalshift::ingest::{CaseConfig, TARIFF_PRESETS};
use modalshift::instgen::{Allocation, GenSpec, Geography, TwClass};
use modalshift::policy::BisectionConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Alns,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Scatteredness,
    Frequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityBlock {
    pub sweep: SweepKind,
    pub values: Vec<f64>,
}

impl Default for SensitivityBlock {
    fn default() -> Self {
        Self {
            sweep: SweepKind::Frequency,
            values: (1..=10).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParetoBlock {
    pub subsidy_grid: Vec<f64>,
    pub budget_ratios: Vec<f64>,
}

impl Default for ParetoBlock {
    fn default() -> Self {
        Self {
            subsidy_grid: (0..=10).map(|i| f64::from(i) / 10.0).collect(),
            budget_ratios: vec![0.0, 0.25, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyBlock {
    pub random_sets: usize,
    pub min_alternatives: usize,
    pub max_alternatives: usize,
    pub trials: usize,
    pub p5_subsidy: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self {
            random_sets: 1000,
            min_alternatives: 3,
            max_alternatives: 8,
            trials: 1000,
            p5_subsidy: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BerlinBlock {
    pub pool: Option<PathBuf>,
    /// Built-in network when absent.
    pub network: Option<PathBuf>,
    pub tariffs: Vec<f64>,
    pub case: CaseConfig,
}

impl Default for BerlinBlock {
    fn default() -> Self {
        Self {
            pool: None,
            network: None,
            tariffs: TARIFF_PRESETS.to_vec(),
            case: CaseConfig::default(),
        }
    }
}

/// Everything a command needs, after defaults and flag overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenarios: usize,
    pub out: PathBuf,
    pub solver: SolverChoice,
    pub alns: AlnsParams,
    pub budget: f64,
    pub subsidy: Option<f64>,
    pub bisection: BisectionConfig,
    pub gen: GenSpec,
    /// Families for `compare`; every geography/allocation/window combination
    /// of `gen` when empty.
    pub families: Vec<GenSpec>,
    pub sensitivity: SensitivityBlock,
    pub pareto: ParetoBlock,
    pub verify: VerifyBlock,
    pub berlin: BerlinBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenarios: 10,
            out: PathBuf::from("out"),
            solver: SolverChoice::Alns,
            alns: AlnsParams::default(),
            budget: 0.0,
            subsidy: None,
            bisection: BisectionConfig::default(),
            gen: GenSpec::default(),
            families: Vec::new(),
            sensitivity: SensitivityBlock::default(),
            pareto: ParetoBlock::default(),
            verify: VerifyBlock::default(),
            berlin: BerlinBlock::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn resolved_families(&self) -> Vec<GenSpec> {
        if !self.families.is_empty() {
            return self.families.clone();
        }
        let mut out = Vec::new();
        for geography in [Geography::Intercity, Geography::Metropolitan] {
            for allocation in [Allocation::Different, Allocation::Random] {
                for tw_class in [TwClass::Tight, TwClass::Wide] {
                    out.push(GenSpec {
                        geography,
                        allocation,
                        tw_class,
                        ..self.gen.clone()
                    });
                }
            }
        }
        out
    }
}
