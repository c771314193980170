//! One pipeline per subcommand. Each returns a [`Report`] or the first error.

use degen_core::coeff::{Degeneracy, DEFAULT_REFINEMENT_LEVELS};
use degen_core::inequalities::{adversarial_search, InequalityTrial, Lemma};
use degen_core::nemytskii::{k_r_monotone, k_r_table, spatial_corpus, validate_a3};
use degen_core::operator::{dissipativity_sweep, random_admissible_bc};
use degen_core::rng::trial_rng;
use degen_core::solver::{
    check_conformance, convergence_study, random_datum_pair, solve_strict, solve_strong, stability_gap,
    stability_slack, ExactSolution,
};
use degen_core::{BoundaryMode, Mesh, ModelKind, Result};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::report::{f, opt, Report};

/// Largest `|boundary relation|` accepted after a step.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Seed stream for random boundary data, disjoint from per-trial streams.
const BC_STREAM: u64 = 0xbc;

pub fn classify(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("classify");
    let coeff = &cfg.problem.coeff;
    let report = coeff.classify(DEFAULT_REFINEMENT_LEVELS)?;
    let class = report.classification;
    r.check(
        "k_finite_iff_weakly_degenerate",
        report.k_constant.is_finite() == (class != Degeneracy::StronglyDegenerate),
        format!("{class:?}, k = {}", report.k_constant),
    );
    if class == Degeneracy::StronglyDegenerate {
        if let ModelKind::PaperExample { theta, .. } | ModelKind::PurePower { theta, .. } = cfg.problem.model {
            let check = coeff.check_a5_sd(theta)?;
            r.check(
                "xi_a_in_l_q_theta",
                check.verdict == degen_core::coeff::Verdict::Holds,
                format!("q_theta = {}, norm = {}", check.q_theta, check.xi_norm),
            );
            r.result("a5_sd", check);
        }
    }
    r.csv(
        "refinement.csv",
        &["level", "truncated_integral"],
        report
            .refinement_sequence
            .iter()
            .enumerate()
            .map(|(i, v)| [i.to_string(), f(*v)]),
    );
    r.result("classification", &report);
    Ok(r)
}

pub fn verify_inequalities(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("verify-inequalities");
    let coeff = &cfg.problem.coeff;
    let search = cfg.search();
    let mut trials: Vec<String> = Vec::new();
    let mut summary = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for checker in &cfg.inequalities.checkers {
        for &family in &cfg.inequalities.families {
            if let Err(e) = checker.admits(family) {
                log::info!("skipping {family:?} for {}: {e}", checker.lemma());
                continue;
            }
            let out = match adversarial_search(*checker, family, coeff, &search) {
                Err(degen_core::Error::Precondition(m)) => {
                    skipped.push(format!("{}: {m}", checker.lemma()));
                    continue;
                }
                other => other?,
            };
            let label = format!("{}/{}", checker.lemma(), serde_json::to_value(family).unwrap().as_str().unwrap());
            r.check(
                format!("{label}/refinement_stable"),
                out.stable,
                format!(
                    "worst ratio {} at N, {} at 2N",
                    out.worst.ratio, out.refined.ratio
                ),
            );
            if checker.lemma() == Lemma::Sob1 {
                let holds = out.worst.flag == Some(true) && out.refined.flag == Some(true);
                r.check(format!("{label}/explicit_constant"), holds, format!("ratio {}", out.worst.ratio));
            }
            trials.push(out.worst.csv_row());
            trials.push(out.refined.csv_row());
            rows.push([
                checker.lemma().to_string(),
                label.rsplit('/').next().unwrap().to_string(),
                f(out.worst.ratio),
                f(out.refined.ratio),
                f(out.relative_change),
                out.stable.to_string(),
            ]);
            summary.push(serde_json::json!({
                "checker": checker,
                "family": family,
                "worst": out.worst,
                "refined": out.refined,
                "relative_change": out.relative_change,
                "stable": out.stable,
            }));
        }
    }
    let mut body = String::from(InequalityTrial::CSV_HEADER);
    body.push('\n');
    for t in &trials {
        body.push_str(t);
        body.push('\n');
    }
    r.file("trials.csv", body.into_bytes());
    r.csv(
        "search.csv",
        &["lemma", "family", "worst_ratio", "refined_ratio", "relative_change", "stable"],
        rows,
    );
    skipped.dedup();
    r.result("searches", summary);
    r.result("skipped", skipped);
    Ok(r)
}

pub fn validate_f(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("validate-f");
    let model = cfg.model()?;
    let nc = &cfg.nemytskii;
    let a3 = validate_a3(&model, nc.samples, nc.box_u, cfg.seed)?;
    for b in &a3.bounds {
        r.check(
            format!("a3/{}", b.name),
            b.holds,
            format!("{} violations, worst margin {}", b.violations, b.worst_margin),
        );
    }
    r.csv(
        "a3.csv",
        &["bound", "holds", "worst_margin", "empirical_constant", "violations"],
        a3.bounds.iter().map(|b| {
            [
                b.name.to_string(),
                b.holds.to_string(),
                f(b.worst_margin),
                f(b.empirical_constant),
                b.violations.to_string(),
            ]
        }),
    );
    let mesh = Mesh::new(cfg.mesh.n, cfg.grading())?;
    let corpus = spatial_corpus(&mesh, nc.corpus, cfg.seed);
    let table = k_r_table(&model, &corpus, &nc.radii, &nc.horizons, nc.steps, &cfg.problem.coeff)?;
    let (in_r, in_t) = k_r_monotone(&table);
    r.check("k_r/finite", table.iter().all(|e| e.k_r.is_finite()), "");
    r.check("k_r/nondecreasing_in_r", in_r, "");
    r.check("k_r/nondecreasing_in_t", in_t, "");
    r.csv(
        "k_r.csv",
        &["T", "R", "K_R", "pairs_in_ball"],
        table
            .iter()
            .map(|e| [f(e.horizon), f(e.radius), f(e.k_r), e.pairs_in_ball.to_string()]),
    );
    r.result("a3", &a3);
    r.result("k_r", &table);
    Ok(r)
}

pub fn operator_checks(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("operator-checks");
    let coeff = &cfg.problem.coeff;
    let mut modes = Vec::new();
    if let Ok(bc) = cfg.boundary() {
        modes.push(bc);
    }
    if coeff.degeneracy()? != Degeneracy::StronglyDegenerate {
        let mut rng = trial_rng(cfg.seed, &[BC_STREAM]);
        modes.extend((0..cfg.operator_checks.random_bcs).map(|_| BoundaryMode::Robin(random_admissible_bc(&mut rng))));
    }
    let mesh = Mesh::new(cfg.mesh.n, cfg.grading())?;
    let rows = dissipativity_sweep(&mesh, coeff, &modes, cfg.operator_checks.functions, cfg.seed)?;
    for (i, row) in rows.iter().enumerate() {
        r.check(format!("bc{i}/self_adjoint"), row.self_adjoint, format!("asymmetry {}", row.asymmetry));
        r.check(
            format!("bc{i}/dissipative"),
            row.dissipative,
            format!("max form {}, relative {}", row.max_form, row.max_relative_form),
        );
    }
    r.csv(
        "operator.csv",
        &[
            "index",
            "mode",
            "beta0",
            "beta1",
            "gamma0",
            "gamma1",
            "asymmetry",
            "max_form",
            "max_relative_form",
            "self_adjoint",
            "dissipative",
        ],
        rows.iter().enumerate().map(|(i, row)| {
            let (mode, b) = match row.bc {
                BoundaryMode::Robin(b) => ("robin", [f(b.beta0), f(b.beta1), f(b.gamma0), f(b.gamma1)]),
                BoundaryMode::WeightedNeumann => ("weighted_neumann", Default::default()),
            };
            let mut v = vec![i.to_string(), mode.to_string()];
            v.extend(b);
            v.extend([
                f(row.asymmetry),
                f(row.max_form),
                f(row.max_relative_form),
                row.self_adjoint.to_string(),
                row.dissipative.to_string(),
            ]);
            v
        }),
    );
    r.result("checks", &rows);
    Ok(r)
}

pub fn solve(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("solve");
    let spec = cfg.problem_spec()?;
    let settings = cfg.settings();
    let out = solve_strict(&spec, &settings)?;
    let summary = out.summary();
    r.check(
        "picard_converged",
        summary.max_final_residual < settings.picard_tol,
        format!("max final residual {}", summary.max_final_residual),
    );
    r.check(
        "boundary_relation",
        summary.max_boundary_residual <= BOUNDARY_TOL,
        format!("max residual {}", summary.max_boundary_residual),
    );
    if spec.model.is_zero() && spec.alpha_plus() == 0.0 {
        let decays = out.l2_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        r.check("energy_decay", decays, "");
        if spec.u0.grid(out.final_state.mesh()).values().iter().all(|&v| v >= 0.0) {
            r.check(
                "nonnegativity",
                out.min_value >= -10.0 * settings.picard_tol,
                format!("min value {}", out.min_value),
            );
        }
    }
    let mut solution = Vec::new();
    out.solution.write_csv(&mut solution).expect("in-memory write");
    r.file("solution.csv", solution);
    r.csv(
        "steps.csv",
        &["step", "t", "picard_iterations", "final_residual", "boundary_left", "boundary_right", "l2"],
        (0..out.picard_iterations.len()).map(|k| {
            let t = spec.horizon * (k + 1) as f64 / settings.m as f64;
            [
                (k + 1).to_string(),
                f(t),
                out.picard_iterations[k].to_string(),
                f(*out.residuals[k].last().unwrap()),
                f(out.boundary_residuals[k][0]),
                f(out.boundary_residuals[k][1]),
                f(out.l2_history[k + 1]),
            ]
        }),
    );
    if let Some(exact) = cfg.exact {
        let mut cells = Vec::new();
        if settings.n >= 4 && settings.m.is_multiple_of(4) {
            cells.push((settings.n / 2, settings.m / 4));
        }
        cells.push((settings.n, settings.m));
        let table = convergence_study(exact, &cells, spec.horizon, settings.grading)?;
        convergence_csv(&mut r, "errors.csv", &table);
        r.result("errors", &table);
    }
    r.result("solve", &summary);
    Ok(r)
}

fn convergence_csv(r: &mut Report, name: &str, table: &degen_core::solver::ConvergenceTable) {
    r.csv(
        name,
        &["N", "M", "l2_error", "b_error", "l2_order", "b_order"],
        table.rows.iter().enumerate().map(|(i, row)| {
            let order = |v: &[f64]| opt(i.checked_sub(1).map(|j| v[j]));
            [
                row.n.to_string(),
                row.m.to_string(),
                f(row.l2_error),
                f(row.b_error),
                order(&table.l2_orders),
                order(&table.b_orders),
            ]
        }),
    );
}

pub fn strong_limit(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("strong-limit");
    let spec = cfg.problem_spec()?;
    let out = solve_strong(&spec, &cfg.settings(), &cfg.strong.levels, cfg.seed)?;
    let summary = out.summary();
    r.check("data_errors_decrease", summary.data_errors_decrease, format!("{:?}", summary.initial_data_errors));
    r.check("gaps_decrease", summary.gaps_decrease, format!("{:?}", summary.cauchy_gaps));
    for (j, c) in out.stability_certificates.iter().enumerate() {
        r.check(
            format!("certificate{j}"),
            c.holds,
            format!("gap {} vs C_T * datum gap {}", c.gap, c.bound),
        );
    }
    r.check("certified", out.certified, "");
    r.csv(
        "levels.csv",
        &["k", "data_error", "norm_1a", "gap", "datum_gap", "bound", "holds"],
        out.levels.iter().enumerate().map(|(i, k)| {
            let c = i.checked_sub(1).map(|j| out.stability_certificates[j]);
            [
                k.to_string(),
                f(out.initial_data_errors[i]),
                f(out.initial_l2_norms_1a[i]),
                opt(c.map(|c| c.gap)),
                opt(c.map(|c| c.datum_gap)),
                opt(c.map(|c| c.bound)),
                c.map(|c| c.holds.to_string()).unwrap_or_default(),
            ]
        }),
    );
    let mut limit = Vec::new();
    out.limit.write_csv(&mut limit).expect("in-memory write");
    r.file("limit.csv", limit);
    r.result("strong", &summary);
    Ok(r)
}

pub fn stability(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("stability");
    let mut spec = cfg.problem_spec()?;
    spec.regularity_claim = degen_core::RegularityClaim::L2Only;
    let settings = cfg.settings();
    let empirical_nu = check_conformance(&spec.model, cfg.seed)?;
    let slack = stability_slack(&spec, &settings);
    let mesh = Mesh::new(settings.n, settings.grading)?;
    let gaps: Vec<_> = (0..cfg.stability.pairs)
        .into_par_iter()
        .map(|i| {
            let (u0, v0) = random_datum_pair(&mesh, cfg.seed, i);
            stability_gap(&spec, &settings, &u0, &v0)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let worst = gaps.iter().map(|g| g.ratio).fold(0.0, f64::max);
    r.check(
        "stability_bound",
        gaps.iter().all(|g| g.lhs <= (1.0 + slack) * g.rhs),
        format!("worst lhs/rhs {worst} against 1 + {slack:e}"),
    );
    r.csv(
        "pairs.csv",
        &["pair", "datum_gap", "lhs", "rhs", "ratio", "sup_l2_gap"],
        gaps.iter()
            .enumerate()
            .map(|(i, g)| [i.to_string(), f(g.datum_gap), f(g.lhs), f(g.rhs), f(g.ratio), f(g.sup_l2_gap)]),
    );
    r.result("c_t", spec.stability_constant());
    r.result("declared_nu", spec.model.nu);
    r.result("empirical_nu", empirical_nu);
    r.result("slack", slack);
    r.result("worst_ratio", worst);
    Ok(r)
}

pub fn converge(cfg: &RunConfig) -> Result<Report> {
    let mut r = Report::new("converge");
    let c = cfg.converge.clone().unwrap_or_else(|| crate::default_study(cfg.exact.unwrap_or(ExactSolution::Legendre { n: 2 })));
    let grading = c.grading.unwrap_or(2.0);
    let table = convergence_study(c.exact, &c.cells, c.horizon, grading)?;
    let decreasing = table.rows.windows(2).all(|w| w[1].l2_error < w[0].l2_error);
    r.check("errors_decrease", decreasing, format!("{:?}", table.rows.iter().map(|x| x.l2_error).collect::<Vec<_>>()));
    convergence_csv(&mut r, "convergence.csv", &table);
    r.result("convergence", &table);
    Ok(r)
}
