use std::path::Path;

use serde_json::json;

use soqbt::dampingfit::{fit, DampingFitProblem, FitModel, FitOptions, FitResult};
use soqbt::io::{self, SampleFile, FORMAT_VERSION};
use soqbt::linalg::{c, CMat};
use soqbt::loewner::{assemble_general, assemble_hermite, realify_with_residual, AssemblyMode, SampleSet};
use soqbt::metrics::{pointwise_norms, relerr_h2, relerr_hinf, sample_system, FrequencyGrid};
use soqbt::models::{
    generate_msd_chain, generate_random_spd_system, generate_structural_chain, MsdParams, RandomSpdOptions,
};
use soqbt::quadrature::{exp_trapezoid, interleave, RuleSide};
use soqbt::reduction::{check_stability, rom_transfer, rom_transfer_on, soquadpvbt};
use soqbt::validation::run_battery;
use soqbt::{Error, Result};

use crate::{EvaluateArgs, FitArgs, GenerateArgs, GenerateKind, ModelArg, ReduceArgs, SampleArgs, ValidateArgs};

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn generate(args: GenerateArgs) -> Result<u8> {
    let sys = match args.kind {
        GenerateKind::Msd {
            d,
            mass,
            m0,
            k_row,
            k_couple,
            k_anchor,
            alpha,
            beta,
        } => generate_msd_chain(
            d,
            &MsdParams {
                mass,
                m0,
                k_row,
                k_couple,
                k_anchor,
                alpha,
                beta,
            },
        )?,
        GenerateKind::RandomSpd {
            n,
            m,
            p,
            seed,
            alpha,
            beta,
            symmetric,
            velocity_output,
        } => generate_random_spd_system(
            n,
            m,
            p,
            seed,
            &RandomSpdOptions {
                alpha,
                beta,
                symmetric,
                velocity_output,
            },
        )?,
        GenerateKind::StructuralChain { n, eta } => generate_structural_chain(n, eta)?,
    };
    emit(args.output.as_deref(), &io::system_to_string(&sys)?)?;
    Ok(0)
}

pub fn sample(args: SampleArgs) -> Result<u8> {
    let sys = io::system_from_str(&io::read_text(&args.system)?)?;
    let file = if args.hermite {
        let rule = exp_trapezoid(args.wmin, args.wmax, args.n, RuleSide::Right)?;
        SampleFile {
            mode: AssemblyMode::Hermite,
            damping: sys.damping().clone(),
            left: None,
            right: SampleSet::from_system(&sys, &rule, false, true)?,
        }
    } else {
        let (left, right) = interleave(args.wmin, args.wmax, args.n)?;
        SampleFile {
            mode: AssemblyMode::General,
            damping: sys.damping().clone(),
            left: Some(SampleSet::from_system(&sys, &left, false, false)?),
            right: SampleSet::from_system(&sys, &right, true, false)?,
        }
    };
    io::write_text(&args.output, &io::samples_to_string(&file)?)?;
    Ok(0)
}

pub fn reduce(args: ReduceArgs) -> Result<u8> {
    let file = io::samples_from_str(&io::read_text(&args.samples)?)?;
    if args.hermite && file.mode != AssemblyMode::Hermite {
        return Err(Error::InvalidParams("--hermite needs a sample file written with --hermite".into()));
    }
    let ds = match (&file.mode, &file.left) {
        (AssemblyMode::Hermite, _) => assemble_hermite(&file.right, &file.damping)?,
        (AssemblyMode::General, Some(left)) => assemble_general(left, &file.right, &file.damping)?,
        (AssemblyMode::General, None) => return Err(Error::Format("general sample file without left samples".into())),
    };
    let (ds, residual) = if args.realify {
        let (real, residual) = realify_with_residual(&ds)?;
        (real, Some(residual))
    } else {
        (ds, None)
    };
    let (rom, report) = soquadpvbt(&ds, args.r)?;
    io::write_text(&args.output, &io::rom_to_string(&rom)?)?;
    let doc = json!({
        "format": "soqbt-reduce-report",
        "version": FORMAT_VERSION,
        "mode": ds.mode.as_str(),
        "realified": ds.realified,
        "max_imag_residual": residual,
        "r": report.r_used,
        "numerical_rank": report.numerical_rank(),
        "discarded_mass": report.discarded_mass,
        "singular_values": report.singular_values,
    });
    emit(args.report.as_deref(), &pretty(&doc))?;
    Ok(0)
}

fn parse_inits(raw: &[String], dim: usize) -> Result<Vec<Vec<f64>>> {
    let values = raw
        .iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParams(format!("cannot parse initial value {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.is_empty() || values.len() % dim != 0 {
        return Err(Error::InvalidParams(format!(
            "initial values come in groups of {dim}, got {}",
            values.len()
        )));
    }
    Ok(values.chunks(dim).map(<[f64]>::to_vec).collect())
}

fn param_names(model: FitModel) -> &'static [&'static str] {
    match model {
        FitModel::Rayleigh => &["alpha", "beta"],
        FitModel::Structural => &["eta"],
    }
}

pub fn fit_damping(args: FitArgs) -> Result<u8> {
    let rom = io::rom_from_str(&io::read_text(&args.rom)?)?;
    let samples = io::samples_from_str(&io::read_text(&args.samples)?)?;
    let model = match args.model {
        ModelArg::Rayleigh => FitModel::Rayleigh,
        ModelArg::Structural => FitModel::Structural,
    };
    let inits = parse_inits(&args.init, model.dim())?;
    let problem = DampingFitProblem::from_rom(&rom, samples.all_samples(), model)?;
    let opts = FitOptions {
        grad_tol: args.grad_tol,
        step_tol: args.step_tol,
        max_iter: args.max_iter,
    };
    let runs = inits.iter().map(|x0| fit(&problem, x0, &opts)).collect::<Result<Vec<FitResult>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.final_cost.total_cmp(&b.1.final_cost))
        .map(|(i, _)| i)
        .expect("at least one start");
    io::write_text(&args.output, &io::rom_to_string(&runs[best].apply(&rom)?)?)?;

    let names = param_names(model);
    if let Some(path) = &args.trace {
        let mut header = vec!["run", "iteration", "cost"];
        header.extend_from_slice(names);
        let rows: Vec<Vec<String>> = runs
            .iter()
            .enumerate()
            .flat_map(|(k, run)| {
                run.trace.iter().enumerate().map(move |(it, (x, f))| {
                    let mut row = vec![k.to_string(), it.to_string(), io::fmt_f64(*f)];
                    row.extend(io::csv_row(x));
                    row
                })
            })
            .collect();
        io::write_text(path, &io::csv_string(&header, &rows))?;
    }
    let run_docs: Vec<serde_json::Value> = runs
        .iter()
        .zip(&inits)
        .map(|(run, x0)| {
            json!({
                "init": x0,
                "params": names.iter().zip(&run.params).map(|(n, v)| (n.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
                "final_cost": run.final_cost,
                "grad_norm": run.grad_norm,
                "iterations": run.iterations,
                "termination": run.termination.as_str(),
            })
        })
        .collect();
    let doc = json!({
        "format": "soqbt-fit-report",
        "version": FORMAT_VERSION,
        "model": model.as_str(),
        "cost_scale": problem.scale,
        "best_run": best,
        "runs": run_docs,
    });
    emit(args.report.as_deref(), &pretty(&doc))?;
    Ok(0)
}

pub fn evaluate(args: EvaluateArgs) -> Result<u8> {
    let rom = io::rom_from_str(&io::read_text(&args.rom)?)?;
    let grid = || {
        if args.linear {
            FrequencyGrid::linear(args.wmin, args.wmax, args.points)
        } else {
            FrequencyGrid::log(args.wmin, args.wmax, args.points)
        }
    };
    let (omegas, reference): (Vec<f64>, Vec<CMat>) = if let Some(path) = &args.system {
        let sys = io::system_from_str(&io::read_text(path)?)?;
        let g = grid()?;
        let values = sample_system(&sys, &g)?;
        (g.omegas().to_vec(), values)
    } else if let Some(path) = &args.samples {
        let file = io::samples_from_str(&io::read_text(path)?)?;
        let mut pts = file.all_samples();
        pts.sort_by(|a, b| a.0.im.total_cmp(&b.0.im));
        pts.into_iter().map(|(s, g)| (s.im, g)).unzip()
    } else if let Some(path) = &args.reference_rom {
        let reference = io::rom_from_str(&io::read_text(path)?)?;
        let g = grid()?;
        let values = rom_transfer_on(&reference, g.omegas())?;
        (g.omegas().to_vec(), values)
    } else {
        unreachable!("clap requires one reference source")
    };
    let test = omegas
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            rom_transfer(&rom, c(0.0, w)).map_err(|e| match e {
                Error::SingularPencil { s, .. } => Error::SingularReducedPencil { k, s },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let norms = pointwise_norms(&reference, &test)?;
    let mut rows = Vec::with_capacity(omegas.len());
    for (k, (&w, &(nr, nt, nd))) in omegas.iter().zip(&norms).enumerate() {
        if nr == 0.0 {
            return Err(Error::ZeroReference(k));
        }
        rows.push(io::csv_row(&[w, nr, nt, nd / nr]));
    }
    let table = io::csv_string(&["omega", "norm_ref", "norm_test", "relerr"], &rows);
    emit(args.output.as_deref(), &table)?;
    let hinf = relerr_hinf(&reference, &test)?;
    let h2 = relerr_h2(&reference, &test)?;
    let mut summary = format!("points={}\nrelerr_hinf={}\nrelerr_h2={}\n", omegas.len(), io::fmt_f64(hinf), io::fmt_f64(h2));
    if args.stability {
        let rep = check_stability(&rom)?;
        summary.push_str(&format!("stable={} max_real_part={}\n", rep.stable, io::fmt_f64(rep.max_real_part)));
    }
    // The summary goes to stderr when the table occupies stdout.
    if args.output.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(0)
}

pub fn validate(args: ValidateArgs) -> Result<u8> {
    let outcomes = run_battery();
    println!("check\tstatus\tvalue\ttolerance\tseconds\tdetail");
    for o in &outcomes {
        println!(
            "{}\t{}\t{:.3e}\t{:.1e}\t{:.3}\t{}",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.value,
            o.tolerance,
            o.seconds,
            o.detail
        );
    }
    if let Some(path) = &args.json {
        let doc = json!({
            "format": "soqbt-validate-report",
            "version": FORMAT_VERSION,
            "checks": outcomes,
        });
        io::write_text(path, &pretty(&doc))?;
    }
    let failures = outcomes.iter().filter(|o| !o.passed).count();
    if failures > 0 {
        eprintln!("{failures} of {} checks failed", outcomes.len());
        Ok(1)
    } else {
        Ok(0)
    }
}
