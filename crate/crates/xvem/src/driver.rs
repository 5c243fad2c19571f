//! Convergence-study orchestration: one solve per mesh of a refinement
//! sequence, CSV emission, and the observed-vs-expected rate summary.

use crate::assembly::{apply_dirichlet, assemble, static_condense};
use crate::config::{Domain, MeshFamily, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::local_spaces::build_spaces;
use crate::mesh::{
    build_cartesian_fractured_mesh, build_cartesian_lshape_mesh,
    build_cartesian_lshape_mesh_tr, build_hexagonal_lshape_mesh, read_mesh_text, Mesh,
};
use crate::postprocess::{compute_errors, fit_rates, ErrorReport};
use crate::problems::Problem;
use crate::scalar::Real;
use crate::solver::{condition_estimate, solve_spd, CsrMatrix};
use std::fmt::Write as _;

pub struct StudyResult<T: Real> {
    pub reports: Vec<ErrorReport<T>>,
    pub csv: String,
}

fn build_mesh<T: Real>(config: &RunConfig<T>, index: usize) -> Result<Mesh<T>> {
    match config.mesh_family {
        MeshFamily::Cartesian => {
            let n = config.refine[index];
            match config.domain {
                Domain::Fracture => build_cartesian_fractured_mesh(n),
                Domain::LshapeBr => build_cartesian_lshape_mesh(n),
                Domain::LshapeTr => build_cartesian_lshape_mesh_tr(n),
            }
        }
        MeshFamily::Hexagonal => build_hexagonal_lshape_mesh(config.refine[index]),
        MeshFamily::File => {
            let mesh = read_mesh_text(&config.mesh_files[index])?;
            // third-party meshes get the full invariant check
            crate::mesh::validate_mesh(&mesh)?;
            Ok(mesh)
        }
    }
}

/// Run the full study: one row per mesh. A solver or projector failure is
/// recorded as a row with empty error fields and the failure flag set; the
/// study continues with the next mesh.
pub fn run_convergence_study<T: Real>(config: &RunConfig<T>) -> Result<StudyResult<T>> {
    config.validate()?;
    let problem = Problem::<T>::for_domain(config.domain);
    let plan = config.plan();
    let n_meshes = match config.mesh_family {
        MeshFamily::File => config.mesh_files.len(),
        _ => config.refine.len(),
    };
    let mut reports = Vec::with_capacity(n_meshes);
    for index in 0..n_meshes {
        let mesh = build_mesh(config, index)?;
        let title = format!("{}", index + 1);
        let row = run_single(config, &problem, &plan, &mesh, title)?;
        reports.push(row);
    }
    let csv = study_csv(&reports);
    if let Some(path) = &config.out {
        std::fs::write(path, &csv)?;
    }
    Ok(StudyResult { reports, csv })
}

fn run_single<T: Real>(
    config: &RunConfig<T>,
    problem: &Problem<T>,
    plan: &crate::enrichment::EnrichmentPlan<T>,
    mesh: &Mesh<T>,
    title: String,
) -> Result<ErrorReport<T>> {
    let mut report = ErrorReport {
        mesh_title: title,
        mesh_size: mesh.mesh_size,
        n_cells: mesh.n_elements(),
        n_edges: mesh.n_edges(),
        n_vertices: mesh.n_vertices(),
        dofs: 0,
        l2_error: None,
        h1_error: None,
        cond_estimate: None,
        failed: true,
    };
    let outcome = (|| -> Result<(crate::local_spaces::DofVector<T>, usize, T)> {
        let spaces = build_spaces(
            mesh,
            config.k,
            plan,
            &problem.enrichment,
            config.space_settings(),
        )?;
        let f = |p: Point2<T>, h: Option<Point2<T>>| problem.forcing(p, h);
        let g = |p: Point2<T>, h: Option<Point2<T>>| problem.exact(p, h);
        let mut system = assemble(mesh, &spaces, &f)?;
        apply_dirichlet(mesh, &spaces, &mut system, &g)?;
        let condensed = static_condense(&system)?;
        let (x, cond) = if condensed.n == 0 {
            (nalgebra::DVector::zeros(0), system.max_local_cond)
        } else {
            let a = CsrMatrix::from_triplets(condensed.n, &condensed.triplets)?;
            let options = config.solve_options();
            match options.method {
                crate::solver::SolveMethod::Direct => {
                    // factor once: shared by the condition estimate and the solve
                    let factor = crate::solver::ldlt_factor(&a)?;
                    let cond = condition_estimate(&a, Some(&factor), 30, config.seed);
                    let x = crate::solver::solve_with_factor(&a, &factor, &condensed.rhs, &options)?;
                    (x, cond.max(system.max_local_cond))
                }
                crate::solver::SolveMethod::Krylov => {
                    let cond = condition_estimate(&a, None, 30, config.seed);
                    let x = solve_spd(&a, &condensed.rhs, &options)?;
                    (x, cond.max(system.max_local_cond))
                }
            }
        };
        let solution = condensed.recover(&system, &x);
        let gu = |p: Point2<T>, h: Option<Point2<T>>| problem.exact_gradient(p, h);
        let norms = compute_errors(mesh, &spaces, &solution, &g, &gu)?;
        report.l2_error = Some(norms.l2);
        report.h1_error = Some(norms.h1);
        Ok((solution, condensed.n, cond))
    })();
    match outcome {
        Ok((_solution, n_dofs, cond)) => {
            report.dofs = n_dofs;
            report.cond_estimate = Some(cond);
            report.failed = false;
        }
        Err(Error::Solver { detail, residual }) => {
            // the documented failure mode of ill-conditioned enrichment:
            // keep the row, leave the error fields empty
            eprintln!(
                "solver failure on mesh {}: {detail} (residual {residual:e})",
                report.mesh_title
            );
        }
        Err(Error::Projector { element, detail }) => {
            eprintln!(
                "projector failure on mesh {} element {element}: {detail}",
                report.mesh_title
            );
        }
        Err(other) => return Err(other),
    }
    Ok(report)
}

fn fmt_opt<T: Real>(v: Option<T>) -> String {
    match v {
        Some(x) => format!("{:.11e}", x),
        None => String::new(),
    }
}

/// CSV with one row per mesh; scientific notation with 12 significant digits.
pub fn study_csv<T: Real>(reports: &[ErrorReport<T>]) -> String {
    let mut out = String::from(
        "MeshTitle,MeshSize,NbCells,NbEdges,NbVertices,DOFs,L2Error,H1Error,CondEst,Failed\n",
    );
    for r in reports {
        writeln!(
            out,
            "{},{:.11e},{},{},{},{},{},{},{},{}",
            r.mesh_title,
            r.mesh_size,
            r.n_cells,
            r.n_edges,
            r.n_vertices,
            r.dofs,
            fmt_opt(r.l2_error),
            fmt_opt(r.h1_error),
            fmt_opt(r.cond_estimate),
            u8::from(r.failed),
        )
        .unwrap();
    }
    out
}

/// Human-readable table of observed vs expected slopes for one study.
pub fn emit_report<T: Real>(k: usize, reports: &[ErrorReport<T>]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to summarise".into()));
    }
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>12} {:>10} {:>12} {:>12} {:>12}",
        "Mesh", "h", "DOFs", "L2Error", "H1Error", "CondEst"
    )
    .unwrap();
    for r in reports {
        writeln!(
            out,
            "{:<10} {:>12.4e} {:>10} {:>12} {:>12} {:>12}",
            r.mesh_title,
            r.mesh_size,
            r.dofs,
            fmt_short(r.l2_error),
            fmt_short(r.h1_error),
            fmt_short(r.cond_estimate),
        )
        .unwrap();
    }
    let ok_rows = reports.iter().filter(|r| !r.failed).count();
    if ok_rows >= 2 {
        let h1 = fit_rates(reports, |r| r.h1_error)?;
        let l2 = fit_rates(reports, |r| r.l2_error)?;
        writeln!(
            out,
            "H1 slope in h: observed {:.2} / expected {}",
            h1.asymptotic_h.to_f64_lossy(),
            k
        )
        .unwrap();
        let l2_expected = if k == 2 {
            // second order sees the documented depleted-moment effect: the L2
            // rate is not better than the H1 rate
            format!(">= {k} (suboptimality documented)")
        } else {
            format!("{}", k + 1)
        };
        writeln!(
            out,
            "L2 slope in h: observed {:.2} / expected {}",
            l2.asymptotic_h.to_f64_lossy(),
            l2_expected
        )
        .unwrap();
        writeln!(
            out,
            "H1 slope in DOFs: observed {:.2} / expected -{:.1}",
            h1.asymptotic_dofs.to_f64_lossy(),
            k as f64 / 2.0
        )
        .unwrap();
    } else {
        writeln!(out, "(fewer than two successful meshes; no rates fitted)").unwrap();
    }
    Ok(out)
}

fn fmt_short<T: Real>(v: Option<T>) -> String {
    match v {
        Some(x) => format!("{:.4e}", x),
        None => "-".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrichment::EnrichmentMode;

    fn quick_config() -> RunConfig<f64> {
        let mut cfg = RunConfig::<f64>::default();
        cfg.refine = vec![4, 8];
        cfg.k = 1;
        cfg
    }

    #[test]
    fn fracture_study_produces_monotone_errors() {
        let mut cfg = quick_config();
        cfg.refine = vec![4, 8, 16];
        let result = run_convergence_study(&cfg).unwrap();
        assert_eq!(result.reports.len(), 3);
        let errs: Vec<f64> = result
            .reports
            .iter()
            .map(|r| r.h1_error.unwrap())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(result.csv.starts_with("MeshTitle,MeshSize,"));
        assert_eq!(result.csv.lines().count(), 4);
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = quick_config();
        let a = run_convergence_study(&cfg).unwrap().csv;
        let b = run_convergence_study(&cfg).unwrap().csv;
        assert_eq!(a, b);
    }

    #[test]
    fn none_equals_local_with_zero_gamma() {
        let mut a = quick_config();
        a.enrichment = EnrichmentMode::None;
        let mut b = quick_config();
        b.enrichment = EnrichmentMode::Local;
        b.gamma = Some(0.0);
        let ra = run_convergence_study(&a).unwrap();
        let rb = run_convergence_study(&b).unwrap();
        for (x, y) in ra.reports.iter().zip(&rb.reports) {
            assert_eq!(x.dofs, y.dofs);
        }
    }

    #[test]
    fn emit_report_examples() {
        // synthetic quadratic decay
        let reports: Vec<ErrorReport<f64>> = [0.4, 0.2, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &h)| ErrorReport {
                mesh_title: format!("{}", i + 1),
                mesh_size: h,
                n_cells: 10,
                n_edges: 20,
                n_vertices: 11,
                dofs: 100 * (i + 1) * (i + 1),
                l2_error: Some(2.0 * h * h),
                h1_error: Some(3.0 * h * h),
                cond_estimate: Some(1e3),
                failed: false,
            })
            .collect();
        let text = emit_report(2, &reports).unwrap();
        assert!(text.contains("observed 2.00"), "{text}");
        assert!(text.contains("suboptimality documented"), "{text}");
        assert!(emit_report::<f64>(1, &[]).is_err());
    }
}
