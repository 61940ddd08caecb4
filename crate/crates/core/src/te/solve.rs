use super::{max_violation, Commodity, Path, PathRate, TeError, TeSolution, TrafficClass};
use crate::lp::{Constraint, LinearProgram, LpSolution};
use crate::netmodel::NetworkGraph;
use std::collections::HashMap;

// LP variables are in Mbit/s to keep the tableau well scaled.
const UNIT: f64 = 1e6;
const SATURATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TeParams {
    /// Per-flow cap on best-effort totals; infinite disables it.
    pub be_ceiling_bps: f64,
    /// Allowed relative constraint violation after a solve.
    pub tolerance: f64,
}

impl Default for TeParams {
    fn default() -> Self {
        Self { be_ceiling_bps: 20e6, tolerance: 1e-6 }
    }
}

/// Base program shared by both objectives: one variable per usable path.
struct Model {
    lp: LinearProgram,
    /// path index for each LP variable
    var_path: Vec<usize>,
    /// LP variables of each commodity, indexed like `commodities`
    flow_vars: Vec<Vec<usize>>,
    /// per-flow cap in LP units
    flow_cap: Vec<f64>,
}

fn build(commodities: &[Commodity], paths: &[Path], graph: &NetworkGraph, params: &TeParams) -> Result<Model, TeError> {
    let index: HashMap<usize, usize> = commodities.iter().enumerate().map(|(i, c)| (c.flow_id, i)).collect();
    let mut var_path = Vec::new();
    let mut flow_vars = vec![Vec::new(); commodities.len()];
    for (pi, p) in paths.iter().enumerate() {
        let &fi = index.get(&p.flow_id).ok_or(TeError::UnknownFlow(p.flow_id))?;
        if p.peak_rate_bps > 0.0 {
            flow_vars[fi].push(var_path.len());
            var_path.push(pi);
        }
    }
    let cap = |c: &Commodity| match c.class {
        TrafficClass::BestEffort => params.be_ceiling_bps,
        TrafficClass::Video => c.demand_bps,
    };
    let mut lp = LinearProgram::new(var_path.len());

    let mut by_node: HashMap<usize, Vec<usize>> = HashMap::new();
    for (v, &pi) in var_path.iter().enumerate() {
        by_node.entry(paths[pi].radio_node).or_default().push(v);
    }
    let mut nodes: Vec<_> = by_node.into_iter().collect();
    nodes.sort();
    for (_, vars) in nodes {
        let terms = vars.iter().map(|&v| (v, UNIT / paths[var_path[v]].peak_rate_bps)).collect();
        lp.push(Constraint::le(terms, 1.0));
    }

    for (fi, c) in commodities.iter().enumerate() {
        let cap = cap(c);
        if cap.is_finite() && !flow_vars[fi].is_empty() {
            lp.push(Constraint::le(flow_vars[fi].iter().map(|&v| (v, 1.0)).collect(), cap.max(0.0) / UNIT));
        }
    }

    // A link is redundant when the variables crossing it cannot exceed its
    // capacity even at their individual upper bounds.
    let upper: Vec<f64> = var_path
        .iter()
        .map(|&pi| {
            let p = &paths[pi];
            p.peak_rate_bps.min(cap(&commodities[index[&p.flow_id]]).max(0.0))
        })
        .collect();
    let mut on_link: Vec<Vec<usize>> = vec![Vec::new(); graph.links().len()];
    for (v, &pi) in var_path.iter().enumerate() {
        for &l in &paths[pi].links {
            on_link[l].push(v);
        }
    }
    for (l, vars) in on_link.iter().enumerate() {
        let capacity = graph.links()[l].capacity_bps;
        let reach: f64 = vars.iter().map(|&v| upper[v]).sum();
        if !vars.is_empty() && reach > capacity {
            lp.push(Constraint::le(vars.iter().map(|&v| (v, 1.0)).collect(), capacity / UNIT));
        }
    }
    let flow_cap = commodities.iter().map(|c| cap(c).max(0.0) / UNIT).collect();
    Ok(Model { lp, var_path, flow_vars, flow_cap })
}

fn to_solution(x: &[f64], model: &Model, paths: &[Path], objective: f64, solved_at: f64) -> TeSolution {
    let mut rates: Vec<PathRate> = paths
        .iter()
        .map(|p| PathRate { flow_id: p.flow_id, path_id: p.path_id, rate_bps: 0.0 })
        .collect();
    for (v, &pi) in model.var_path.iter().enumerate() {
        rates[pi].rate_bps = x[v].max(0.0) * UNIT;
    }
    TeSolution { rates, objective, solved_at }
}

fn checked(sol: TeSolution, paths: &[Path], graph: &NetworkGraph, params: &TeParams) -> Result<TeSolution, TeError> {
    let v = max_violation(&sol, paths, graph);
    if v > params.tolerance {
        return Err(TeError::Violation(format!("constraints by {v:e}")));
    }
    Ok(sol)
}

/// Maximizes total allocated rate. Among the optimal allocations the one
/// using the least radio time is returned.
pub fn solve_max_sum(
    commodities: &[Commodity],
    paths: &[Path],
    graph: &NetworkGraph,
    params: &TeParams,
    now: f64,
) -> Result<TeSolution, TeError> {
    let mut model = build(commodities, paths, graph, params)?;
    model.lp.objective = vec![1.0; model.var_path.len()];
    let s = model.lp.maximize()?;
    let mut lp = model.lp.clone();
    lp.push(Constraint::ge((0..model.var_path.len()).map(|v| (v, 1.0)).collect(), s.objective * (1.0 - 1e-9)));
    let x = least_airtime(lp, &model, paths)?;
    let sol = to_solution(&x, &model, paths, s.objective * UNIT, now);
    checked(sol, paths, graph, params)
}

/// Lexicographic max-min fair allocation of per-flow totals by progressive
/// filling. The objective reported is the smallest flow total.
pub fn solve_max_min(
    commodities: &[Commodity],
    paths: &[Path],
    graph: &NetworkGraph,
    params: &TeParams,
    now: f64,
) -> Result<TeSolution, TeError> {
    let model = build(commodities, paths, graph, params)?;
    let n = model.var_path.len();
    let t = n;
    let mut level: Vec<Option<f64>> = model
        .flow_vars
        .iter()
        .map(|vars| if vars.is_empty() { Some(0.0) } else { None })
        .collect();
    let mut x = vec![0.0; n];

    while level.iter().any(Option::is_none) {
        let active: Vec<usize> = (0..level.len()).filter(|&f| level[f].is_none()).collect();
        let mut lp = with_levels(&model, &level, 1);
        lp.objective[t] = 1.0;
        let rows: Vec<usize> = active
            .iter()
            .map(|&f| {
                let mut terms: Vec<_> = model.flow_vars[f].iter().map(|&v| (v, 1.0)).collect();
                terms.push((t, -1.0));
                lp.push(Constraint::ge(terms, 0.0))
            })
            .collect();
        let s: LpSolution = lp.maximize()?;
        let t_star = s.x[t];
        x.copy_from_slice(&s.x[..n]);

        let mut frozen = 0;
        for (&f, &row) in active.iter().zip(&rows) {
            let at_cap = model.flow_cap[f] <= t_star + SATURATION_TOL * (1.0 + t_star);
            if at_cap || s.duals[row].abs() > SATURATION_TOL {
                level[f] = Some(t_star);
                frozen += 1;
            }
        }
        if frozen == 0 {
            // dual degenerate: test each flow by trying to raise it alone
            for &f in &active {
                let mut lp = with_levels(&model, &level, 0);
                for &g in &active {
                    if g != f {
                        let terms = model.flow_vars[g].iter().map(|&v| (v, 1.0)).collect();
                        lp.push(Constraint::ge(terms, t_star * (1.0 - 1e-9)));
                    }
                }
                for &v in &model.flow_vars[f] {
                    lp.objective[v] = 1.0;
                }
                let best = lp.maximize()?.objective;
                if best <= t_star + SATURATION_TOL * (1.0 + t_star) {
                    level[f] = Some(t_star);
                    frozen += 1;
                }
            }
        }
        if frozen == 0 {
            for &f in &active {
                level[f] = Some(t_star);
            }
        }
    }
    let min_level = level.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let objective = if min_level.is_finite() { min_level * UNIT } else { 0.0 };
    let x = least_airtime(with_levels(&model, &level, 0), &model, paths).unwrap_or(x);
    let sol = to_solution(&x, &model, paths, objective, now);
    checked(sol, paths, graph, params)
}

/// Solves `lp` for the smallest total radio time `sum x / peak`.
fn least_airtime(mut lp: LinearProgram, model: &Model, paths: &[Path]) -> Result<Vec<f64>, TeError> {
    lp.objective = model.var_path.iter().map(|&pi| -UNIT / paths[pi].peak_rate_bps).collect();
    Ok(lp.maximize()?.x)
}

/// Base program with `extra_vars` appended and frozen flows held at their level.
fn with_levels(model: &Model, level: &[Option<f64>], extra_vars: usize) -> LinearProgram {
    let n = model.var_path.len();
    let mut lp = model.lp.clone();
    lp.n_vars = n + extra_vars;
    lp.objective = vec![0.0; n + extra_vars];
    for (f, lv) in level.iter().enumerate() {
        if let Some(lv) = lv.filter(|l| *l > 0.0) {
            let terms = model.flow_vars[f].iter().map(|&v| (v, 1.0)).collect();
            lp.push(Constraint::ge(terms, lv * (1.0 - 1e-9)));
        }
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Node, NodeKind, WiredLink};
    use crate::te::candidate_paths;

    fn line(caps: &[f64]) -> NetworkGraph {
        // gateway 0, routers, radio nodes at the leaves
        let mut nodes = vec![Node { id: 0, kind: NodeKind::Gateway, position: None }];
        let mut links = Vec::new();
        for (i, &c) in caps.iter().enumerate() {
            nodes.push(Node { id: i + 1, kind: NodeKind::RadioNode, position: Some((i as f64, 0.0)) });
            links.push(WiredLink { from: 0, to: i + 1, capacity_bps: c, latency_s: 0.001 });
        }
        NetworkGraph::new(nodes, links).unwrap()
    }

    fn flow(id: usize, class: TrafficClass, demand: f64) -> Commodity {
        Commodity { flow_id: id, source: 0, ue_id: id, class, demand_bps: demand }
    }

    fn uncapped() -> TeParams {
        TeParams { be_ceiling_bps: f64::INFINITY, ..TeParams::default() }
    }

    #[test]
    fn single_bottleneck() {
        let g = line(&[10e6]);
        let c = vec![flow(0, TrafficClass::BestEffort, 0.0)];
        let p = candidate_paths(&g, &c[0], &[(1, 20e6)], 1).unwrap();
        let s = solve_max_sum(&c, &p, &g, &uncapped(), 0.0).unwrap();
        assert!((s.flow_rate(0) - 10e6).abs() < 1.0);
        let m = solve_max_min(&c, &p, &g, &uncapped(), 0.0).unwrap();
        assert!((m.flow_rate(0) - s.flow_rate(0)).abs() < 1.0);
    }

    #[test]
    fn max_sum_prefers_faster_ue() {
        let g = line(&[1e9]);
        let c = vec![flow(0, TrafficClass::BestEffort, 0.0), flow(1, TrafficClass::BestEffort, 0.0)];
        let mut p = candidate_paths(&g, &c[0], &[(1, 20e6)], 1).unwrap();
        p.extend(candidate_paths(&g, &c[1], &[(1, 10e6)], 1).unwrap());
        let s = solve_max_sum(&c, &p, &g, &uncapped(), 0.0).unwrap();
        assert!((s.flow_rate(0) - 20e6).abs() < 1.0);
        assert!(s.flow_rate(1).abs() < 1.0);
        // max-min equalizes: x/20 + x/10 = 1
        let m = solve_max_min(&c, &p, &g, &uncapped(), 0.0).unwrap();
        assert!((m.flow_rate(0) - 20e6 / 3.0).abs() < 1.0);
        assert!((m.flow_rate(1) - 20e6 / 3.0).abs() < 1.0);
    }

    #[test]
    fn empty_problem() {
        let g = line(&[1e9]);
        let s = solve_max_sum(&[], &[], &g, &TeParams::default(), 1.5).unwrap();
        assert!(s.rates.is_empty());
        assert_eq!(s.objective, 0.0);
        assert_eq!(s.solved_at, 1.5);
    }

    #[test]
    fn max_min_symmetric_and_limited() {
        // two flows on one 10 Mbit/s link
        let g = line(&[10e6]);
        let c = vec![flow(0, TrafficClass::BestEffort, 0.0), flow(1, TrafficClass::BestEffort, 0.0)];
        let mut p = candidate_paths(&g, &c[0], &[(1, 1e9)], 1).unwrap();
        p.extend(candidate_paths(&g, &c[1], &[(1, 1e9)], 1).unwrap());
        let m = solve_max_min(&c, &p, &g, &uncapped(), 0.0).unwrap();
        assert!((m.flow_rate(0) - 5e6).abs() < 1.0 && (m.flow_rate(1) - 5e6).abs() < 1.0);
    }

    #[test]
    fn ceiling_and_video_demand() {
        let g = line(&[1e9, 1e9]);
        let c = vec![flow(0, TrafficClass::BestEffort, 0.0), flow(1, TrafficClass::Video, 3e6)];
        let mut p = candidate_paths(&g, &c[0], &[(1, 80e6), (2, 80e6)], 4).unwrap();
        p.extend(candidate_paths(&g, &c[1], &[(2, 80e6)], 4).unwrap());
        let s = solve_max_sum(&c, &p, &g, &TeParams::default(), 0.0).unwrap();
        assert!((s.flow_rate(0) - 20e6).abs() < 1.0);
        assert!((s.flow_rate(1) - 3e6).abs() < 1.0);
        let m = solve_max_min(&c, &p, &g, &TeParams::default(), 0.0).unwrap();
        assert!((m.flow_rate(1) - 3e6).abs() < 1.0);
        assert!((m.flow_rate(0) - 20e6).abs() < 1.0);
    }

    #[test]
    fn zero_peak_path_gets_nothing() {
        let g = line(&[1e9, 1e9]);
        let c = vec![flow(0, TrafficClass::BestEffort, 0.0)];
        let p = candidate_paths(&g, &c[0], &[(1, 0.0), (2, 5e6)], 4).unwrap();
        let s = solve_max_sum(&c, &p, &g, &TeParams::default(), 0.0).unwrap();
        assert_eq!(s.path_rate(0, 0), 0.0);
        assert!((s.path_rate(0, 1) - 5e6).abs() < 1.0);
    }

    #[test]
    fn capacities_scale_solution() {
        let g1 = line(&[4e6, 7e6]);
        let g2 = line(&[12e6, 21e6]);
        let c = vec![flow(0, TrafficClass::BestEffort, 0.0), flow(1, TrafficClass::BestEffort, 0.0)];
        let mk = |scale: f64| {
            let mut p = candidate_paths(&g1, &c[0], &[(1, 9e6 * scale), (2, 6e6 * scale)], 4).unwrap();
            p.extend(candidate_paths(&g1, &c[1], &[(2, 15e6 * scale)], 4).unwrap());
            p
        };
        let a = solve_max_sum(&c, &mk(1.0), &g1, &uncapped(), 0.0).unwrap();
        let b = solve_max_sum(&c, &mk(3.0), &g2, &uncapped(), 0.0).unwrap();
        assert!((b.objective - 3.0 * a.objective).abs() < 1e-3 * b.objective);
    }
}
