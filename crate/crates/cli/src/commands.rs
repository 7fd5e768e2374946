use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context};
use serde_json::{json, Value};
use shiftrf::data::{atomic_write, format_float, parse_meta, write_fold_manifest, write_meta_manifest, write_meta_skeleton};
use shiftrf::pipeline::{format_class_table, format_gamma, format_sweep_table, kernel_column_name};
use shiftrf::{
    grid_search, load_features, load_fold_manifest, load_model, make_synthetic, probe_approximation, run_experiment,
    save_model, storage_report, sweep_m, train_predictor, write_features, Dataset, EvalReport, Error, ExperimentConfig,
    KernelSpec, SyntheticSpec,
};

use crate::args::{
    ConvertMetaArgs, CvArgs, DataArgs, GridArgs, Mode, PredictArgs, ProbeArgs, SvmArgs, SweepArgs, SynthArgs,
    TrainArgs,
};

fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
    .with_context(|| format!("cannot write {}", path.display()))
}

fn load_dataset(data: &DataArgs) -> anyhow::Result<Dataset> {
    let d = load_features(&data.features)?;
    let folds = load_fold_manifest(&data.folds, &d)?;
    log::info!(
        "loaded {} rows, N={}, {} classes, {} folds",
        d.len(),
        d.dim(),
        d.class_labels().len(),
        folds.iter().max().copied().unwrap_or(0)
    );
    Ok(d.with_folds(folds)?)
}

fn report_value(report: &EvalReport, timing: bool) -> anyhow::Result<Value> {
    let r = if timing { report.clone() } else { report.clone().without_timing() };
    Ok(serde_json::to_value(r)?)
}

fn warn_unconverged(name: &str, report: &EvalReport) {
    let folds: Vec<String> = report
        .per_fold
        .iter()
        .filter(|f| !f.converged)
        .map(|f| f.fold.to_string())
        .collect();
    if !folds.is_empty() {
        log::warn!(
            "{name}, dim {}: solver hit the epoch limit in fold(s) {}",
            report.dims.effective_dim,
            folds.join(",")
        );
    }
}

pub fn kernel_probe(a: &ProbeArgs) -> anyhow::Result<()> {
    if !a.kernel.is_shift_invariant() {
        return Err(Error::LinearKernelHasNoFeatures.into());
    }
    let gamma = a.gamma.context("--gamma is required")?;
    let spec = KernelSpec::new(a.kernel, gamma)?;
    let rows = probe_approximation(&spec, a.dim, a.pairs, &a.m_values, a.seed)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} N={} pairs={} seed={}",
        kernel_column_name(&spec),
        a.dim,
        a.pairs,
        a.seed
    );
    let _ = writeln!(out, "{:>8} | {:>12} | {:>12} | {:>14}", "M", "mean |err|", "max |err|", "sqrt(M) * mean");
    out.push_str(&"-".repeat(8 + 15 + 15 + 17));
    out.push('\n');
    for r in &rows {
        let _ = writeln!(
            out,
            "{:>8} | {:>12.6} | {:>12.6} | {:>14.4}",
            r.target_dim, r.mean_abs_error, r.max_abs_error, r.scaled_error
        );
    }
    if let Some(path) = &a.report_out {
        write_json(
            path,
            &json!({ "kernel": spec, "dim": a.dim, "pairs": a.pairs, "seed": a.seed, "rows": rows }),
        )?;
    }
    print!("{out}");
    Ok(())
}

pub fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let specs = a.experiment.kernel.specs(false)?;
    ensure!(specs.len() == 1, "train takes exactly one kernel");
    let cfg = a.experiment.config(specs[0])?;
    ensure!(
        a.export_dense.is_none() || a.experiment.mode == Mode::Rff,
        "--export-dense needs --mode rff"
    );
    let d = load_features(&a.features)?;
    cfg.validate()?;
    cfg.warn_if_not_reducing(d.dim());
    let predictor = train_predictor(d.features(), d.labels(), &cfg, cfg.map_seed)?;
    if !predictor.model.all_converged() {
        log::warn!("solver hit the epoch limit for at least one class");
    }
    save_model(&predictor, &a.model_out).with_context(|| format!("cannot write {}", a.model_out.display()))?;
    if let (Some(path), Some(map)) = (&a.export_dense, &predictor.feature_map) {
        map.export_dense(path)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    let correct = predictor
        .predict(d.features())?
        .iter()
        .zip(d.labels())
        .filter(|(p, l)| &p.label == *l)
        .count();
    println!(
        "trained {} on {} rows, {} classes, N={} -> dim {}; training accuracy {:.1} %",
        kernel_column_name(&cfg.kernel),
        d.len(),
        predictor.model.class_labels().len(),
        d.dim(),
        cfg.effective_dim(d.dim()),
        100.0 * correct as f64 / d.len() as f64
    );
    Ok(())
}

pub fn predict(a: &PredictArgs) -> anyhow::Result<()> {
    let predictor = load_model(&a.model)?;
    let d = load_features(&a.features)?;
    let predictions = predictor.predict(d.features())?;
    let classes = predictor.model.class_labels();
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["segment_id".to_string(), "predicted_label".to_string()];
        if a.scores {
            header.extend(classes.iter().map(|c| format!("score:{c}")));
        }
        w.write_record(&header)?;
        for (id, p) in d.segment_ids().iter().zip(&predictions) {
            let mut rec = vec![id.clone(), p.label.clone()];
            if a.scores {
                rec.extend(p.scores.iter().map(|&s| format_float(s)));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    let known = d.labels().iter().filter(|l| classes.contains(l)).count();
    if known > 0 {
        let correct = predictions.iter().zip(d.labels()).filter(|(p, l)| &p.label == *l).count();
        log::info!("{correct} of {} rows match the label column", d.len());
    }
    match &a.out {
        Some(path) => atomic_write(path, |w| Ok(w.write_all(&buf)?))
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

pub fn cv(a: &CvArgs, timing: bool) -> anyhow::Result<()> {
    let specs = a.experiment.kernel.specs(false)?;
    let configs = specs
        .iter()
        .map(|s| a.experiment.config(*s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let d = load_dataset(&a.data)?;
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        let name = kernel_column_name(&cfg.kernel);
        log::info!("cross-validating {name}");
        let r = run_experiment(&d, cfg).with_context(|| name.clone())?;
        warn_unconverged(&name, &r);
        reports.push((name, r));
    }
    let mut out = String::new();
    let columns: Vec<(String, &EvalReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
    out.push_str(&format_class_table(&columns));
    for (name, r) in &reports {
        if let Some(s) = &r.storage {
            let _ = writeln!(
                out,
                "{name}: N={} -> M={}, storage {} -> {} bytes, N/M = {:.1}",
                s.input_dim, s.target_dim, s.input_bytes, s.rff_bytes, s.ratio
            );
        }
        if timing {
            if let Some(t) = &r.timing {
                let _ = writeln!(out, "{name}: train {:.3} s, test {:.3} s", t.train_seconds, t.test_seconds);
            }
        }
    }
    if let Some(path) = &a.report_out {
        let value = if reports.len() == 1 {
            report_value(&reports[0].1, timing)?
        } else {
            json!({ "reports": reports.iter().map(|(_, r)| report_value(r, timing)).collect::<anyhow::Result<Vec<_>>>()? })
        };
        write_json(path, &value)?;
    }
    print!("{out}");
    Ok(())
}

pub fn sweep(a: &SweepArgs, timing: bool) -> anyhow::Result<()> {
    let specs = a.kernel.specs(true)?;
    ensure!(!a.m_values.is_empty(), "--m-values is empty");
    let d = load_dataset(&a.data)?;
    let svm = a.svm.config(a.seed);
    let mut columns = Vec::new();
    let mut kernels = Vec::new();
    for spec in &specs {
        let mut base = ExperimentConfig::random_features(*spec, a.m_values[0], svm, a.seed);
        base.reseed_per_fold = a.reseed_per_fold;
        let name = kernel_column_name(spec);
        log::info!("sweeping {name}");
        let reports = sweep_m(&d, &base, &a.m_values).with_context(|| name.clone())?;
        for (_, r) in &reports {
            warn_unconverged(&name, r);
        }
        columns.push((name, reports.iter().map(|(_, r)| r.overall_accuracy).collect::<Vec<_>>()));
        kernels.push(json!({
            "kernel": spec,
            "reports": reports.iter().map(|(_, r)| report_value(r, timing)).collect::<anyhow::Result<Vec<_>>>()?,
        }));
    }
    let table = format_sweep_table(d.dim(), &a.m_values, &columns);
    if let Some(path) = &a.report_out {
        let storage: Vec<_> = a.m_values.iter().map(|&m| storage_report(d.dim(), m, d.len())).collect();
        write_json(
            path,
            &json!({ "input_dim": d.dim(), "m_values": a.m_values, "storage": storage, "kernels": kernels }),
        )?;
    }
    print!("{table}");
    Ok(())
}

pub fn grid(a: &GridArgs) -> anyhow::Result<()> {
    let svm_args = SvmArgs {
        c: 1.0,
        tol: a.tol,
        max_iter: a.max_iter,
        order: a.order,
        shrinking: a.shrinking,
    };
    let svm = svm_args.config(a.seed);
    // the gamma here is a placeholder; the grid supplies the real values
    let kernel = if a.kernel.is_shift_invariant() {
        KernelSpec::new(a.kernel, a.gammas.first().copied().unwrap_or(1.0))?
    } else {
        KernelSpec::linear()
    };
    let mut base = match a.mode {
        Mode::Exact => ExperimentConfig::exact(kernel, svm),
        Mode::Rff => ExperimentConfig::random_features(kernel, a.m.context("--mode rff needs --m")?, svm, a.seed),
    };
    base.map_seed = a.seed;
    let d = load_dataset(&a.data)?;
    let result = grid_search(&d, &base, &a.gammas, &a.cs)?;

    let mut cs: Vec<f64> = result.table.iter().map(|c| c.c).collect();
    cs.sort_by(f64::total_cmp);
    cs.dedup();
    let mut out = String::new();
    let _ = write!(out, "{:>10}", "gamma \\ C");
    for c in &cs {
        let _ = write!(out, " | {:>8}", format_gamma(*c));
    }
    out.push('\n');
    out.push_str(&"-".repeat(10 + 11 * cs.len()));
    out.push('\n');
    for row in result.table.chunks(cs.len()) {
        let g = row[0].gamma.map(format_gamma).unwrap_or_else(|| "-".into());
        let _ = write!(out, "{g:>10}");
        for cell in row {
            let _ = write!(out, " | {:>6.1} %", 100.0 * cell.accuracy);
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "best: gamma={} C={} accuracy={:.1} %",
        result.best.gamma.map(format_gamma).unwrap_or_else(|| "-".into()),
        format_gamma(result.best.c),
        100.0 * result.best.accuracy
    );
    if let Some(path) = &a.report_out {
        write_json(path, &serde_json::to_value(&result)?)?;
    }
    print!("{out}");
    Ok(())
}

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        class_count: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        separation: a.separation,
        seed: a.seed,
        folds: a.fold_count,
    };
    let d = make_synthetic(&spec)?;
    write_features(&d, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    write_fold_manifest(&d, &a.folds_out).with_context(|| format!("cannot write {}", a.folds_out.display()))?;
    println!(
        "wrote {} rows, N={}, {} classes, {} folds",
        d.len(),
        d.dim(),
        d.class_labels().len(),
        d.fold_count()
    );
    Ok(())
}

pub fn convert_meta(a: &ConvertMetaArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.meta).with_context(|| format!("cannot read {}", a.meta.display()))?;
    let entries = parse_meta(&text, &a.meta)?;
    if entries.is_empty() {
        bail!("{} lists no segments", a.meta.display());
    }
    write_meta_skeleton(&entries, &a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    if let (Some(fold), Some(path)) = (a.fold, &a.folds_out) {
        ensure!(fold >= 1, "--fold starts at 1");
        write_meta_manifest(&entries, fold, path).with_context(|| format!("cannot write {}", path.display()))?;
    }
    println!("wrote {} segments", entries.len());
    Ok(())
}
