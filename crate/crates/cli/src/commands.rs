use crate::config::{ExperimentConfig, SolverChoice, SweepKind};
use crate::CliError;
use modalshift::ingest::{self, IngestError, NetworkConfig};
use modalshift::instgen::{self, GenError, GenSpec};
use modalshift::oracle::{self, FiniteLowerLevel};
use modalshift::policy::{
    self, pareto_sweep, verify_propositions, PolicyError, PolicyOutcome, Property, PropositionReport, Routing,
    ScenarioSet, Solver, VerifyConfig,
};
use modalshift::seeds::scenario_seed;
use modalshift::{Instance, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs;
use std::path::Path;

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::InfeasibleBudget { .. } | PolicyError::ScenarioInfeasible { .. } => {
                CliError::Infeasible(e.to_string())
            }
            PolicyError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::InvalidSpec(_) | GenError::MatrixOnly => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(_) => CliError::Usage(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn prepare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io(&cfg.out, e))?;
    let path = cfg.out.join("config.json");
    let text = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!("resolved config: {text}");
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

#[derive(Serialize)]
struct SeedRow {
    family: String,
    scenario: usize,
    seed: u64,
}

fn family_set(cfg: &ExperimentConfig, spec: &GenSpec, seeds: &mut Vec<SeedRow>) -> Result<ScenarioSet, CliError> {
    let family = spec.family();
    let mut instances = Vec::with_capacity(cfg.scenarios);
    let mut ss = Vec::with_capacity(cfg.scenarios);
    for i in 0..cfg.scenarios {
        let seed = scenario_seed(cfg.seed, &family, i as u64);
        instances.push(instgen::generate(&GenSpec { seed, ..spec.clone() })?);
        ss.push(seed);
        seeds.push(SeedRow {
            family: family.clone(),
            scenario: i,
            seed,
        });
    }
    Ok(ScenarioSet::new(instances, ss)?)
}

fn routing(cfg: &ExperimentConfig, scen: ScenarioSet) -> Result<Routing, CliError> {
    let solver = match cfg.solver {
        SolverChoice::Alns => Solver::Alns(cfg.alns.clone()),
        SolverChoice::Oracle => {
            for inst in scen.instances() {
                if inst.n_requests() > oracle::MAX_REQUESTS || inst.n_vehicles() > oracle::MAX_VEHICLES {
                    return Err(CliError::Usage(format!(
                        "oracle solver supports at most {} requests and {} vehicles; got {} and {}",
                        oracle::MAX_REQUESTS,
                        oracle::MAX_VEHICLES,
                        inst.n_requests(),
                        inst.n_vehicles()
                    )));
                }
            }
            Solver::Oracle
        }
    };
    Ok(Routing::new(scen, solver))
}

fn pct(base: f64, opt: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (opt - base) / base
    }
}

/// Policy for the "opt" column: closed form, or bisection at a partial subsidy.
fn opt_outcome(cfg: &ExperimentConfig, ll: &Routing) -> Result<PolicyOutcome, CliError> {
    match cfg.subsidy {
        Some(s) if s < 1.0 => {
            let r = policy::bisection_tax_search(ll, s, cfg.budget, &cfg.bisection)?;
            if !r.converged {
                log::warn!("bisection did not converge; reporting last midpoint");
            }
            Ok(r.outcome)
        }
        _ => Ok(policy::optimal_policy(ll, cfg.budget)?.1),
    }
}

pub fn gen(cfg: &ExperimentConfig) -> Result<(), CliError> {
    prepare(cfg)?;
    let dir = cfg.out.join("instances");
    fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let mut seeds = Vec::new();
    let scen = family_set(cfg, &cfg.gen, &mut seeds)?;
    for (i, inst) in scen.instances().iter().enumerate() {
        let path = dir.join(format!("{}-{i}.json", cfg.gen.family()));
        fs::write(&path, inst.to_json() + "\n").map_err(|e| io(&path, e))?;
    }
    write_csv(&cfg.out.join("seeds.csv"), &seeds)
}

#[derive(Serialize)]
struct CompareRow {
    family: String,
    budget: f64,
    subsidy: f64,
    tax: f64,
    base_d: f64,
    opt_d: f64,
    d_pct: f64,
    base_shift: f64,
    opt_shift: f64,
    base_cost: f64,
    opt_cost: f64,
    cost_pct: f64,
    realized_budget: f64,
    base_max_load: f64,
    opt_max_load: f64,
    base_vehicles: f64,
    opt_vehicles: f64,
}

fn compare_row(label: String, budget: f64, base: &PolicyOutcome, opt: &PolicyOutcome) -> CompareRow {
    CompareRow {
        family: label,
        budget,
        subsidy: opt.policy.s,
        tax: opt.policy.t,
        base_d: base.avg_d,
        opt_d: opt.avg_d,
        d_pct: pct(base.avg_d, opt.avg_d),
        base_shift: base.modal_shift,
        opt_shift: opt.modal_shift,
        base_cost: base.avg_cost,
        opt_cost: opt.avg_cost,
        cost_pct: pct(base.avg_cost, opt.avg_cost),
        realized_budget: opt.realized_budget,
        base_max_load: base.max_load,
        opt_max_load: opt.max_load,
        base_vehicles: base.n_vehicles_used,
        opt_vehicles: opt.n_vehicles_used,
    }
}

pub fn compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    prepare(cfg)?;
    let mut seeds = Vec::new();
    let mut rows = Vec::new();
    for spec in cfg.resolved_families() {
        let ll = routing(cfg, family_set(cfg, &spec, &mut seeds)?)?;
        let base = policy::evaluate_policy(&ll, Policy::BASE)?;
        let opt = opt_outcome(cfg, &ll)?;
        log::info!("{}: base d {} opt d {}", spec.family(), base.avg_d, opt.avg_d);
        rows.push(compare_row(spec.family(), cfg.budget, &base, &opt));
    }
    write_csv(&cfg.out.join("seeds.csv"), &seeds)?;
    write_csv(&cfg.out.join("compare.csv"), &rows)
}

#[derive(Serialize)]
struct SensitivityRow {
    sweep: &'static str,
    value: f64,
    status: String,
    base_shift: Option<f64>,
    opt_shift: Option<f64>,
    base_d: Option<f64>,
    opt_d: Option<f64>,
    tax: Option<f64>,
    base_cost: Option<f64>,
    opt_cost: Option<f64>,
    realized_budget: Option<f64>,
    /// Forwarder cost plus authority spending, `phi * d + f`.
    total_system_cost: Option<f64>,
}

fn transform(kind: SweepKind, value: f64, inst: &Instance) -> Result<Instance, CliError> {
    Ok(match kind {
        SweepKind::Scatteredness => instgen::apply_scatteredness(inst, value)?,
        SweepKind::Frequency => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::Usage(format!("frequency {value} must be a positive integer")));
            }
            instgen::set_frequency(inst, value as u32)?
        }
    })
}

pub fn sensitivity(cfg: &ExperimentConfig) -> Result<(), CliError> {
    prepare(cfg)?;
    let mut seeds = Vec::new();
    let base_set = family_set(cfg, &cfg.gen, &mut seeds)?;
    let kind = cfg.sensitivity.sweep;
    let name = match kind {
        SweepKind::Scatteredness => "scatteredness",
        SweepKind::Frequency => "frequency",
    };
    let mut rows = Vec::new();
    for &value in &cfg.sensitivity.values {
        let instances = base_set
            .instances()
            .iter()
            .map(|i| transform(kind, value, i))
            .collect::<Result<Vec<_>, _>>()?;
        let ll = routing(cfg, ScenarioSet::new(instances, base_set.seeds().to_vec())?)?;
        let point = policy::evaluate_policy(&ll, Policy::BASE)
            .and_then(|b| policy::optimal_policy(&ll, cfg.budget).map(|(_, o)| (b, o)));
        rows.push(match point {
            Ok((b, o)) => SensitivityRow {
                sweep: name,
                value,
                status: "ok".into(),
                base_shift: Some(b.modal_shift),
                opt_shift: Some(o.modal_shift),
                base_d: Some(b.avg_d),
                opt_d: Some(o.avg_d),
                tax: Some(o.policy.t),
                base_cost: Some(b.avg_cost),
                opt_cost: Some(o.avg_cost),
                realized_budget: Some(o.realized_budget),
                total_system_cost: Some(o.avg_cost + o.realized_budget),
            },
            Err(e) => {
                log::warn!("{name}={value}: {e}");
                SensitivityRow {
                    sweep: name,
                    value,
                    status: e.to_string(),
                    base_shift: None,
                    opt_shift: None,
                    base_d: None,
                    opt_d: None,
                    tax: None,
                    base_cost: None,
                    opt_cost: None,
                    realized_budget: None,
                    total_system_cost: None,
                }
            }
        });
    }
    write_csv(&cfg.out.join("seeds.csv"), &seeds)?;
    write_csv(&cfg.out.join(format!("sensitivity_{name}.csv")), &rows)
}

pub fn pareto(cfg: &ExperimentConfig) -> Result<(), CliError> {
    prepare(cfg)?;
    let mut seeds = Vec::new();
    let ll = routing(cfg, family_set(cfg, &cfg.gen, &mut seeds)?)?;
    let sweep = pareto_sweep(&ll, &cfg.pareto.subsidy_grid, &cfg.pareto.budget_ratios, &cfg.bisection)?;
    for o in &sweep.omitted {
        log::info!("omitted s={} B={}: {}", o.s, o.budget, o.reason);
    }
    write_csv(&cfg.out.join("seeds.csv"), &seeds)?;
    let path = cfg.out.join("frontier.csv");
    let file = fs::File::create(&path).map_err(|e| io(&path, e))?;
    policy::write_frontier_csv(&sweep.points, file).map_err(|e| io(&path, e))?;
    write_csv(&cfg.out.join("omitted.csv"), &sweep.omitted)
}

#[derive(Serialize)]
struct VerifyRow {
    property: String,
    statement: &'static str,
    checked: u64,
    violations: u64,
}

pub fn verify(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let v = &cfg.verify;
    if v.min_alternatives < 1 || v.min_alternatives > v.max_alternatives {
        return Err(CliError::Usage(
            "verify needs 1 <= min_alternatives <= max_alternatives".into(),
        ));
    }
    prepare(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vc = VerifyConfig {
        trials: v.trials,
        p5_subsidy: v.p5_subsidy,
        ..Default::default()
    };
    let mut report = PropositionReport::default();
    report.merge(&verify_propositions(&FiniteLowerLevel::example1(), &vc, &mut rng));
    for _ in 0..v.random_sets {
        let k = rng.gen_range(v.min_alternatives..=v.max_alternatives);
        let fll = oracle::random_pareto_set(k, &mut rng);
        report.merge(&verify_propositions(&fll, &vc, &mut rng));
    }
    let rows: Vec<VerifyRow> = Property::ALL
        .iter()
        .map(|&p| {
            let t = report.tally(p);
            VerifyRow {
                property: p.to_string(),
                statement: p.statement(),
                checked: t.checked,
                violations: t.violations,
            }
        })
        .collect();
    write_csv(&cfg.out.join("verify.csv"), &rows)?;
    for r in &rows {
        println!("{} checked={} violations={}", r.property, r.checked, r.violations);
    }
    if let Some(cx) = &report.first_counterexample {
        let path = cfg.out.join("counterexample.json");
        let text = serde_json::to_string_pretty(cx).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
        return Err(CliError::Violation(format!(
            "{} violations; first: {} {}",
            report.violations(),
            cx.property,
            cx.detail
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct BerlinRow {
    tariff: f64,
    base_d: f64,
    opt_d: f64,
    d_pct: f64,
    base_shift: f64,
    opt_shift: f64,
    base_cost: f64,
    opt_cost: f64,
    cost_pct: f64,
    base_vehicles: f64,
    opt_vehicles: f64,
    tax: f64,
}

pub fn berlin(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let b = &cfg.berlin;
    let pool_path = b
        .pool
        .as_ref()
        .ok_or_else(|| CliError::Usage("berlin needs a location pool (--pool or berlin.pool)".into()))?;
    let pool = ingest::parse_pool(pool_path)?;
    let net_cfg = match &b.network {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            NetworkConfig::from_json(&text)?
        }
        None => NetworkConfig::default(),
    };
    prepare(cfg)?;
    let mut seeds = Vec::new();
    let mut rows = Vec::new();
    for &tariff in &b.tariffs {
        let nc = NetworkConfig {
            tariff,
            ..net_cfg.clone()
        };
        let net = ingest::build_sbahn(&pool, &nc)?;
        let mut instances = Vec::new();
        let mut ss = Vec::new();
        for i in 0..cfg.scenarios {
            let seed = scenario_seed(cfg.seed, "berlin", i as u64);
            instances.push(ingest::sample_case(&pool, &net, nc.horizon, &b.case, seed)?);
            ss.push(seed);
            if rows.is_empty() {
                seeds.push(SeedRow {
                    family: "berlin".into(),
                    scenario: i,
                    seed,
                });
            }
        }
        let ll = routing(cfg, ScenarioSet::new(instances, ss)?)?;
        let base = policy::evaluate_policy(&ll, Policy::BASE)?;
        let opt = opt_outcome(cfg, &ll)?;
        rows.push(BerlinRow {
            tariff,
            base_d: base.avg_d,
            opt_d: opt.avg_d,
            d_pct: pct(base.avg_d, opt.avg_d),
            base_shift: base.modal_shift,
            opt_shift: opt.modal_shift,
            base_cost: base.avg_cost,
            opt_cost: opt.avg_cost,
            cost_pct: pct(base.avg_cost, opt.avg_cost),
            base_vehicles: base.n_vehicles_used,
            opt_vehicles: opt.n_vehicles_used,
            tax: opt.policy.t,
        });
    }
    write_csv(&cfg.out.join("seeds.csv"), &seeds)?;
    write_csv(&cfg.out.join("berlin.csv"), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pct_handles_zero_base() {
        assert_eq!(pct(0.0, 5.0), 0.0);
        assert_eq!(pct(200.0, 150.0), -25.0);
    }
}
