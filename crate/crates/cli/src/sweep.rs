//! Parameter sweeps that turn a scenario file into one CSV table.

use std::collections::BTreeMap;

use ivelox_core::analytic::{
    effective_profile, error_exponent, exact_failure_prob, exact_failure_prob_instantaneous,
    exact_failure_prob_mixture, failure_prob_bounds, information_velocity, ExponentForm,
};
use ivelox_core::model::{validate_scenario, LinkMode, LinkProfile, Scenario};
use ivelox_core::sim::{empirical_failure_ratio, simulate_tandem_with, SimOptions, TraceStats};
use rayon::prelude::*;

use crate::csv::{Cell, Table};
use crate::scenario::{ScenarioFile, Series, SweepSpec, SweepVariable};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Iv,
    EeChernoff,
    EeTypes,
    PeExact,
    PeLower,
    PeChernoff,
    PeSum,
    PeEmpirical,
}

impl Output {
    pub fn parse(name: &str) -> Result<Output, CliError> {
        Ok(match name.trim() {
            "iv" => Output::Iv,
            "ee_chernoff" => Output::EeChernoff,
            "ee_types" => Output::EeTypes,
            "pe_exact" => Output::PeExact,
            "pe_lower" => Output::PeLower,
            "pe_chernoff" => Output::PeChernoff,
            "pe_sum" => Output::PeSum,
            "pe_empirical" => Output::PeEmpirical,
            other => {
                return Err(CliError::Usage(format!(
                    "--outputs: unknown quantity `{other}`"
                )))
            }
        })
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Output::Iv => &["iv"],
            Output::EeChernoff => &["ee_chernoff"],
            Output::EeTypes => &["ee_types"],
            Output::PeExact => &["pe_exact"],
            Output::PeLower => &["pe_lower"],
            Output::PeChernoff => &["pe_chernoff"],
            Output::PeSum => &["pe_sum"],
            Output::PeEmpirical => &["pe_empirical", "ci_lo", "ci_hi"],
        }
    }

    fn needs_budget(self) -> bool {
        matches!(
            self,
            Output::PeExact
                | Output::PeLower
                | Output::PeChernoff
                | Output::PeSum
                | Output::PeEmpirical
        )
    }
}

pub fn parse_outputs<S: AsRef<str>>(names: &[S]) -> Result<Vec<Output>, CliError> {
    names.iter().map(|n| Output::parse(n.as_ref())).collect()
}

/// One row to evaluate: the scenario at this point, its budget N (absent
/// for lambda sweeps) and the rate at which exponents are evaluated.
struct Point {
    key: Vec<Cell>,
    scenario: Scenario,
    lambda: f64,
    n: Option<u64>,
    alpha: Option<f64>,
}

fn key_columns(variable: SweepVariable) -> &'static [&'static str] {
    match variable {
        SweepVariable::Alpha => &["alpha", "N", "r"],
        SweepVariable::N => &["r", "N", "p_eff"],
        SweepVariable::Lambda => &["lambda", "p_eff"],
    }
}

fn homogeneous_p(profile: &LinkProfile) -> Option<f64> {
    match profile {
        LinkProfile::Homogeneous { p, .. } => Some(*p),
        _ => None,
    }
}

fn p_eff_cell(profile: &LinkProfile, lambda: f64) -> Cell {
    homogeneous_p(profile).map_or(Cell::Empty, |p| Cell::Float(p / (1.0 - lambda)))
}

/// The profile with `r` links, re-apportioned where needed.
fn with_links(scenario: &Scenario, r: usize) -> Result<Scenario, CliError> {
    let profile = match &scenario.profile {
        LinkProfile::Homogeneous { p, .. } => LinkProfile::Homogeneous { p: *p, r },
        LinkProfile::FixedType { probs, types, .. } => LinkProfile::FixedType {
            probs: probs.clone(),
            types: types.clone(),
            r,
            counts: Vec::new(),
        },
        LinkProfile::Probabilistic { probs, weights, .. } => LinkProfile::Probabilistic {
            probs: probs.clone(),
            weights: weights.clone(),
            r,
        },
        LinkProfile::Explicit { p_seq } if p_seq.len() == r => return Ok(scenario.clone()),
        LinkProfile::Explicit { .. } => {
            return Err(CliError::Config(
                "an explicit profile cannot be resized by a sweep".into(),
            ))
        }
    };
    Ok(validate_scenario(&Scenario {
        profile,
        ..scenario.clone()
    })?)
}

fn points(series: &Series, spec: &SweepSpec) -> Result<Vec<Point>, CliError> {
    let base = &series.scenario;
    let lambda = base.arrivals.rate();
    let mut out = Vec::new();
    for v in spec.points()? {
        match spec.variable {
            SweepVariable::Alpha => {
                let r = base.profile.link_count() as u64;
                if !(v > 0.0) {
                    return Err(CliError::Config(format!(
                        "sweep alpha = {v} must be positive"
                    )));
                }
                let n = (r as f64 / v).round() as u64;
                if n == 0 {
                    return Err(CliError::Config(format!(
                        "sweep alpha = {v} gives N = 0 at r = {r}"
                    )));
                }
                // grid points that round to an N already present add nothing
                if out.iter().any(|p: &Point| p.n == Some(n)) {
                    continue;
                }
                let alpha = r as f64 / n as f64;
                out.push(Point {
                    key: vec![Cell::Float(alpha), Cell::Int(n), Cell::Int(r)],
                    scenario: base.clone(),
                    lambda,
                    n: Some(n),
                    alpha: Some(alpha),
                });
            }
            SweepVariable::N => {
                if !(v >= 1.0) {
                    return Err(CliError::Config(format!(
                        "sweep N = {v} must be at least 1"
                    )));
                }
                let n = v.round() as u64;
                let scenario = match spec.fixed.alpha {
                    Some(a) => with_links(base, ((a * n as f64).round() as usize).max(1))?,
                    None => base.clone(),
                };
                let r = scenario.profile.link_count() as u64;
                out.push(Point {
                    key: vec![
                        Cell::Int(r),
                        Cell::Int(n),
                        p_eff_cell(&scenario.profile, lambda),
                    ],
                    scenario,
                    lambda,
                    n: Some(n),
                    alpha: Some(r as f64 / n as f64),
                });
            }
            SweepVariable::Lambda => {
                if !(0.0..1.0).contains(&v) {
                    return Err(CliError::Config(format!(
                        "sweep lambda = {v} is outside [0, 1)"
                    )));
                }
                out.push(Point {
                    key: vec![Cell::Float(v), p_eff_cell(&base.profile, v)],
                    scenario: base.clone(),
                    lambda: v,
                    n: None,
                    alpha: spec.fixed.alpha,
                });
            }
        }
    }
    Ok(out)
}

/// Arrive-failure probability from the single-packet law of the effective
/// profile. `None` when the effective profile does not exist (unstable).
fn exact_tail(s: &Scenario, lambda: f64, n: u64) -> Option<f64> {
    let eff = effective_profile(&s.profile, lambda).ok()?;
    let r = eff.link_count() as u64;
    if let LinkProfile::Homogeneous { p, .. } = eff {
        return Some(match s.mode {
            LinkMode::Delayed => exact_failure_prob(r, n, p),
            LinkMode::Instantaneous => exact_failure_prob_instantaneous(r, n, p),
        });
    }
    let links: Vec<Vec<(f64, f64)>> = match eff.fixed_sequence() {
        Some(seq) => seq.into_iter().map(|p| vec![(1.0, p)]).collect(),
        None => {
            let (probs, weights) = eff.weighted_alphabet();
            let law: Vec<(f64, f64)> = weights.into_iter().zip(probs).collect();
            vec![law; r as usize]
        }
    };
    Some(exact_failure_prob_mixture(&links, n, s.mode))
}

fn exponent(
    s: &Scenario,
    lambda: f64,
    alpha: Option<f64>,
    iv: Option<f64>,
    form: ExponentForm,
) -> Cell {
    match (alpha, iv) {
        (Some(a), Some(iv)) if a >= iv => Cell::Float(0.0),
        (Some(a), Some(_)) => error_exponent(&s.profile, lambda, s.mode, a, form)
            .map(|rep| rep.ee)
            .ok()
            .into(),
        _ => Cell::Empty,
    }
}

fn evaluate(point: &Point, outputs: &[Output], sims: &BTreeMap<usize, TraceStats>) -> Vec<Cell> {
    let s = &point.scenario;
    let lambda = point.lambda;
    let iv = information_velocity(&s.profile, lambda, s.mode).ok();
    let r = s.profile.link_count() as u64;
    let bounds = match (homogeneous_p(&s.profile), point.n, s.mode) {
        (Some(p), Some(n), LinkMode::Delayed) if outputs.iter().any(|o| o.needs_budget()) => {
            failure_prob_bounds(r, n, p / (1.0 - lambda)).ok()
        }
        _ => None,
    };
    let mut row = point.key.clone();
    for &out in outputs {
        match out {
            Output::Iv => row.push(iv.into()),
            Output::EeChernoff => {
                row.push(exponent(s, lambda, point.alpha, iv, ExponentForm::Chernoff))
            }
            Output::EeTypes => row.push(exponent(s, lambda, point.alpha, iv, ExponentForm::Types)),
            Output::PeExact => row.push(point.n.and_then(|n| exact_tail(s, lambda, n)).into()),
            Output::PeLower => row.push(bounds.as_ref().map(|b| b.lower).into()),
            Output::PeChernoff => row.push(bounds.as_ref().map(|b| b.chernoff_upper).into()),
            Output::PeSum => row.push(bounds.as_ref().map(|b| b.sum_upper).into()),
            Output::PeEmpirical => {
                let fr = point
                    .n
                    .and_then(|n| empirical_failure_ratio(&sims[&(r as usize)], n).ok());
                row.push(fr.map(|f| f.ratio).into());
                row.push(fr.map(|f| f.ci_lo).into());
                row.push(fr.map(|f| f.ci_hi).into());
            }
        }
    }
    row
}

fn series_rows(
    series: &Series,
    spec: &SweepSpec,
    outputs: &[Output],
) -> Result<Vec<Vec<Cell>>, CliError> {
    let pts = points(series, spec)?;
    let mut sims = BTreeMap::new();
    if outputs.contains(&Output::PeEmpirical) {
        let mut distinct: BTreeMap<usize, &Scenario> = BTreeMap::new();
        for p in &pts {
            distinct
                .entry(p.scenario.profile.link_count())
                .or_insert(&p.scenario);
        }
        let runs: Vec<(usize, TraceStats)> = distinct
            .into_par_iter()
            .map(|(r, s)| {
                (
                    r,
                    simulate_tandem_with(
                        s,
                        SimOptions {
                            record_node_waits: false,
                        },
                    ),
                )
            })
            .collect();
        sims.extend(runs);
    }
    let label = series.label.clone();
    Ok(pts
        .par_iter()
        .map(|p| {
            let mut row = Vec::new();
            if let Some(l) = &label {
                row.push(Cell::Text(l.clone()));
            }
            row.extend(evaluate(p, outputs, &sims));
            row
        })
        .collect())
}

/// Evaluate every series over the sweep. Rows follow series order, then
/// sweep order.
pub fn run_sweep(file: &ScenarioFile, outputs: &[Output]) -> Result<Table, CliError> {
    let spec = file
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("scenario file has no `sweep` section".into()))?;
    if spec.variable == SweepVariable::Lambda && outputs.iter().any(|o| o.needs_budget()) {
        return Err(CliError::Config(
            "a lambda sweep has no delay budget; pe_* outputs need an N or alpha sweep".into(),
        ));
    }
    if outputs.is_empty() {
        return Err(CliError::Config(
            "no outputs requested (set `outputs` or --outputs)".into(),
        ));
    }
    let labelled = file.series.iter().any(|s| s.label.is_some());
    let mut header: Vec<&str> = Vec::new();
    if labelled {
        header.push("series");
    }
    header.extend(key_columns(spec.variable));
    for o in outputs {
        header.extend(o.columns());
    }
    let mut table = Table::new(header);
    let blocks: Vec<Vec<Vec<Cell>>> = file
        .series
        .par_iter()
        .map(|s| {
            let mut rows = series_rows(s, spec, outputs)?;
            if labelled && s.label.is_none() {
                rows.iter_mut().for_each(|r| r.insert(0, Cell::Empty));
            }
            Ok(rows)
        })
        .collect::<Result<_, CliError>>()?;
    for row in blocks.into_iter().flatten() {
        table.push(row);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_document, Overrides};
    use serde_json::json;

    fn file(sweep: serde_json::Value) -> ScenarioFile {
        parse_document(
            json!({
                "profile": {"kind": "homogeneous", "p": 0.01, "r": 20},
                "arrivals": {"kind": "geometric", "lambda": 0.5},
                "num_packets": 2000,
                "seed": 1,
                "sweep": sweep
            }),
            &Overrides::default(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_sweep_reports_realized_rate() {
        let f = file(json!({"variable": "alpha", "values": [0.9, 0.91, 0.97]}));
        let t = run_sweep(&f, &parse_outputs(&["pe_exact"]).unwrap()).unwrap();
        assert_eq!(t.header, ["alpha", "N", "r", "pe_exact"]);
        assert_eq!(t.rows.len(), 2, "0.9 and 0.91 both give N = 22");
        assert_eq!(t.rows[0][1], Cell::Int(22));
        assert_eq!(t.rows[0][0], Cell::Float(20.0 / 22.0));
        assert_eq!(t.rows[1][1], Cell::Int(21));
        assert_eq!(t.rows[1][3], Cell::Float(exact_failure_prob(20, 21, 0.02)));
    }

    #[test]
    fn bounds_sandwich_exact() {
        let f = file(
            json!({"variable": "N", "start": 25.0, "stop": 200.0, "count": 8, "fixed": {"alpha": 0.96}}),
        );
        let outs = parse_outputs(&["pe_lower", "pe_exact", "pe_chernoff", "pe_sum"]).unwrap();
        let t = run_sweep(&f, &outs).unwrap();
        assert_eq!(
            t.header,
            [
                "r",
                "N",
                "p_eff",
                "pe_lower",
                "pe_exact",
                "pe_chernoff",
                "pe_sum"
            ]
        );
        for row in &t.rows {
            let v: Vec<f64> = row[3..]
                .iter()
                .map(|c| match c {
                    Cell::Float(x) => *x,
                    _ => panic!("{row:?}"),
                })
                .collect();
            assert!(v[0] <= v[1] && v[1] <= v[2].min(v[3]), "{row:?}");
        }
    }

    #[test]
    fn lambda_sweep_leaves_unstable_empty() {
        let f = file(json!({"variable": "lambda", "values": [0.0, 0.5, 0.995]}));
        let t = run_sweep(&f, &parse_outputs(&["iv"]).unwrap()).unwrap();
        assert_eq!(t.rows[0][2], Cell::Float(0.99));
        assert_eq!(t.rows[1][2], Cell::Float(0.98));
        assert_eq!(t.rows[2][2], Cell::Empty);
        assert!(run_sweep(&f, &parse_outputs(&["pe_exact"]).unwrap()).is_err());
    }

    #[test]
    fn exponent_vanishes_past_iv() {
        let f = file(json!({"variable": "alpha", "values": [0.5, 0.99]}));
        let t = run_sweep(&f, &parse_outputs(&["ee_chernoff"]).unwrap()).unwrap();
        assert!(matches!(t.rows[0][3], Cell::Float(x) if x > 0.0));
        assert_eq!(t.rows[1][3], Cell::Float(0.0));
    }
}
