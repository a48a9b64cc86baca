//! The experiments behind each subcommand. Each returns a table whose rows are
//! in a fixed order, whatever the order in which they were computed.

use fracprop::contour::{default_correction, integrand_norm_profile, loglog_slope};
use fracprop::mittag_leffler::ml;
use fracprop::solvers::solve_with_residual;
use fracprop::{solve, Complex64, Error, Formula, SolutionRecord, StateVector};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ValuesMode};
use crate::Failure;

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn join(w: &[String]) -> String {
    w.join("; ")
}

fn value_columns(mode: ValuesMode, dim: usize) -> (ValuesMode, Vec<String>) {
    let mode = match mode {
        ValuesMode::Auto if dim <= 16 => ValuesMode::Real,
        ValuesMode::Auto => ValuesMode::Norm,
        m => m,
    };
    let cols = match mode {
        ValuesMode::Real => (0..dim).map(|i| format!("u{i}")).collect(),
        ValuesMode::Complex => (0..dim).flat_map(|i| [format!("u{i}_re"), format!("u{i}_im")]).collect(),
        _ => vec!["norm".to_string()],
    };
    (mode, cols)
}

fn values(mode: ValuesMode, u: &StateVector) -> Vec<String> {
    match mode {
        ValuesMode::Real => u.iter().map(|z| num(z.re)).collect(),
        ValuesMode::Complex => u.iter().flat_map(|z| [num(z.re), num(z.im)]).collect(),
        _ => vec![num(u.norm())],
    }
}

pub fn run_solve(cfg: &ExperimentConfig) -> Result<Table, Failure> {
    let b = cfg.build()?;
    let grid = cfg.time_grid()?;
    let scfg = cfg.solver_config();
    let formula = cfg.formula();
    let sol = solve(formula, &b.data, &grid, &scfg)?;
    let residuals: Vec<Option<f64>> = if cfg.solver.residual {
        let rule = cfg.residual_rule();
        grid.points()
            .par_iter()
            .map(|&t| solve_with_residual(formula, &b.data, t, &scfg, &rule).map(|r| Some(r.1)))
            .collect::<fracprop::Result<_>>()?
    } else {
        vec![None; grid.len()]
    };
    let (mode, cols) = value_columns(cfg.output.values, b.data.dim());
    let mut header = vec!["t".to_string()];
    header.extend(cols);
    header.extend(["residual", "node_count", "correction", "warnings"].map(String::from));
    let mut table = Table { header, rows: Vec::new() };
    for (i, &t) in grid.points().iter().enumerate() {
        let d = &sol.diagnostics[i];
        let mut row = vec![num(t)];
        row.extend(values(mode, &sol.u_values[i]));
        row.push(opt(residuals[i]));
        row.push(d.node_count.to_string());
        row.push(d.correction_order.map(|m| m.to_string()).unwrap_or_default());
        row.push(join(&d.warnings));
        table.rows.push(row);
    }
    Ok(table)
}

/// Least-squares slope of ln(err) against N over errors above the rounding floor.
fn geometric_rate(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(_, e)| *e > 1e-13).map(|&(n, e)| (n as f64, e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn rel_dist(a: &StateVector, b: &StateVector) -> f64 {
    let d = a.dist(b);
    let n = b.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

pub fn run_converge(cfg: &ExperimentConfig) -> Result<Table, Failure> {
    let block = cfg.converge.as_ref().ok_or_else(|| Failure::Config("missing [converge] table".into()))?;
    let b = cfg.build()?;
    let grid = cfg.time_grid()?;
    let reference_nodes = block.node_counts.iter().max().expect("validated nonempty") * block.reference_factor;
    let mut table = Table::new(&["formula", "N", "t", "err", "slope", "warnings"]);
    for tag in &block.formulas {
        let formula: Formula = tag.parse()?;
        let with_nodes = |n: usize| -> fracprop::Result<SolutionRecord> {
            let mut scfg = cfg.solver_config();
            scfg.contour.nodes = Some(n);
            solve(formula, &b.data, &grid, &scfg)
        };
        let reference = with_nodes(reference_nodes)?;
        let runs = block.node_counts.iter().map(|&n| with_nodes(n)).collect::<fracprop::Result<Vec<_>>>()?;
        for (i, &t) in grid.points().iter().enumerate() {
            let errs: Vec<(usize, f64)> = block
                .node_counts
                .iter()
                .zip(&runs)
                .map(|(&n, r)| (n, rel_dist(&r.u_values[i], &reference.u_values[i])))
                .collect();
            let slope = opt(geometric_rate(&errs));
            for ((n, err), r) in errs.iter().zip(&runs) {
                table.rows.push(vec![
                    formula.to_string(),
                    n.to_string(),
                    num(t),
                    num(*err),
                    slope.clone(),
                    join(&r.diagnostics[i].warnings),
                ]);
            }
        }
    }
    Ok(table)
}

pub fn run_decay(cfg: &ExperimentConfig) -> Result<Table, Failure> {
    let block = cfg.decay.clone().unwrap_or_default();
    let b = cfg.build()?;
    let p = &b.data;
    if p.u0.is_zero() {
        return Err(Failure::Config("decay profiles need a nonzero problem.u0".into()));
    }
    let alpha = p.alpha();
    let radii = block.radii.unwrap_or_else(|| (0..12).map(|i| 1e6 * 2f64.powi(i)).collect());
    let gamma = block.gamma.or(b.u0_gamma).unwrap_or(0.0);
    let m = block.correction.or_else(|| default_correction(alpha, alpha, gamma)).unwrap_or(0);
    // expected slopes; the corrected one is the decay bound −(mα + β + αγ)
    let families = [
        ("beta_one", 1.0, None, -1.0),
        ("beta_two", 2.0, None, -2.0),
        ("beta_alpha", alpha, None, -alpha),
        ("corrected", alpha, Some(m), -(m as f64 * alpha + alpha + alpha * gamma)),
    ];
    let mut table =
        Table::new(&["family", "alpha", "beta", "correction", "radius", "norm", "fitted_slope", "expected_slope"]);
    let profiles = families
        .par_iter()
        .map(|&(_, beta, corr, _)| {
            let prof = integrand_norm_profile(p.operator.as_ref(), alpha, beta, block.t, &p.u0, corr, &radii, None)?;
            let slope = loglog_slope(&prof)?;
            Ok((prof, slope))
        })
        .collect::<fracprop::Result<Vec<_>>>()?;
    for ((name, beta, corr, expected), (prof, slope)) in families.iter().zip(profiles) {
        for (r, v) in prof {
            table.rows.push(vec![
                name.to_string(),
                num(alpha),
                num(*beta),
                corr.map(|m| m.to_string()).unwrap_or_default(),
                num(r),
                num(v),
                num(slope),
                num(*expected),
            ]);
        }
    }
    Ok(table)
}

pub fn run_compare(cfg: &ExperimentConfig) -> Result<Table, Failure> {
    let b = cfg.build()?;
    let grid = cfg.time_grid()?;
    let scfg = cfg.solver_config();
    let mut formulas = vec![Formula::New, Formula::Classic, Formula::MlOracle];
    let with_li = b.data.alpha() > 1.0;
    if with_li {
        formulas.push(Formula::Li);
    }
    let sols = formulas.iter().map(|&f| solve(f, &b.data, &grid, &scfg)).collect::<fracprop::Result<Vec<_>>>()?;
    let mut table = Table::new(&["t", "new_classic", "new_oracle", "li_new", "warnings"]);
    for (i, &t) in grid.points().iter().enumerate() {
        let u = |k: usize| &sols[k].u_values[i];
        let warnings: Vec<String> = formulas
            .iter()
            .zip(&sols)
            .flat_map(|(f, s)| s.diagnostics[i].warnings.iter().map(move |w| format!("{f}: {w}")))
            .collect();
        table.rows.push(vec![
            num(t),
            num(u(0).dist(u(1))),
            num(u(0).dist(u(2))),
            if with_li { num(u(3).dist(u(0))) } else { String::new() },
            join(&warnings),
        ]);
    }
    Ok(table)
}

pub fn run_mlval(cfg: &ExperimentConfig) -> Result<Table, Failure> {
    let block = cfg.mlval.as_ref().ok_or_else(|| Failure::Config("missing [mlval] table".into()))?;
    let zs: Vec<Complex64> = match &block.z_im {
        Some(im) => block.z.iter().zip(im).map(|(&re, &im)| Complex64::new(re, im)).collect(),
        None => block.z.iter().map(|&re| Complex64::new(re, 0.0)).collect(),
    };
    let mut points = Vec::new();
    for &a in &block.alpha {
        for &b in &block.beta {
            points.extend(zs.iter().map(|&z| (a, b, z)));
        }
    }
    let rows = points
        .par_iter()
        .map(|&(a, b, z)| {
            let mut row = vec![num(a), num(b), num(z.re), num(z.im)];
            match ml(a, b, z) {
                Ok(v) => row.extend([num(v.re), num(v.im), String::new()]),
                // outside the validated domain: report per row instead of failing the table
                Err(e @ Error::AccuracyDomain(_)) => row.extend([String::new(), String::new(), e.to_string()]),
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect::<fracprop::Result<Vec<_>>>()?;
    let mut table = Table::new(&["alpha", "beta", "z_re", "z_im", "value_re", "value_im", "warnings"]);
    table.rows = rows;
    Ok(table)
}
