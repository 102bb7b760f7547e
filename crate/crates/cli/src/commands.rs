use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use strf_core::classify::{
    nested_search_points, rank_results, run_cv, standard_scales, Classifier, CvDataset, CvResult,
    CvScheme, GridPoint, GridResult, ParamGrid,
};
use strf_core::descriptor::JointHistogram;
use strf_core::ingest::{
    load_manifest, synth_texture, write_container, write_desk3, DatasetManifest, SynthKind,
    SynthSpec,
};
use strf_core::pipeline::{dataset_from_histograms, DescriptorConfig};
use strf_core::rfields::FieldSet;

use crate::cli_error;
use crate::opts::{
    parse_usize_list, ExtractArgs, FitPcaArgs, Global, ReportArgs, SynthArgs, TuneArgs,
};
use crate::store::{short, Store};

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn classifier_key(c: &Classifier) -> String {
    match c {
        Classifier::Nn => "nn".into(),
        Classifier::Svm(p) => format!(
            "svm gamma={} c={} tol={} max_iter={}",
            p.gamma, p.c, p.tol, p.max_iter
        ),
    }
}

fn mean_filled(hists: &[Vec<JointHistogram>]) -> f64 {
    let counts: Vec<usize> = hists.iter().flatten().map(|h| h.nonzero_count()).collect();
    counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn load(global: &Global) -> Result<DatasetManifest> {
    let p = global.manifest_path()?;
    load_manifest(p).with_context(|| format!("loading manifest {}", p.display()))
}

pub fn extract(global: &Global, args: &ExtractArgs) -> Result<()> {
    let manifest = load(global)?;
    let cfg = global.descriptor_config()?;
    let store = Store::new(&global.cache_dir);
    let model = store.pca(global.pca.as_deref(), &cfg, &manifest, args.fit_pca)?;
    let (hists, stats, digests) =
        store.descriptors(&manifest, std::slice::from_ref(&cfg), &model)?;
    let files: usize = hists[0].iter().map(Vec::len).sum();
    eprintln!(
        "extract: {} videos, computed {}, cached {}",
        manifest.entries.len(),
        stats.computed,
        stats.cached
    );
    println!("config_digest={}", hex::encode(digests[0]));
    println!(
        "descriptors={} files={files}",
        store.descriptor_dir(&digests[0]).display()
    );
    Ok(())
}

pub fn fit_pca(global: &Global, args: &FitPcaArgs) -> Result<()> {
    let manifest = load(global)?;
    let cfg = global.descriptor_config()?;
    let store = Store::new(&global.cache_dir);
    let path = store.pca_path(&cfg, &manifest);
    if path.exists() && !args.force {
        eprintln!("fit-pca: cached");
    } else {
        store.fit_pca(&cfg, &manifest)?;
        eprintln!("fit-pca: fitted");
    }
    println!("pca={}", path.display());
    Ok(())
}

fn write_confusion(path: &Path, classes: &[String], r: &CvResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(classes.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in classes.iter().zip(&r.confusion) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn eval(global: &Global) -> Result<()> {
    let manifest = load(global)?;
    let cfg = global.descriptor_config()?;
    let scheme = global.scheme()?;
    let classifiers = global.classifiers()?;
    let store = Store::new(&global.cache_dir);
    let model = store.pca(global.pca.as_deref(), &cfg, &manifest, true)?;
    let (mut hists, stats, digests) =
        store.descriptors(&manifest, std::slice::from_ref(&cfg), &model)?;
    eprintln!(
        "extract: computed {}, cached {}",
        stats.computed, stats.cached
    );
    let hists = hists.remove(0);
    let digest = hex::encode(digests[0]);
    let filled = mean_filled(&hists);
    let mut ds = dataset_from_histograms(&manifest, &hists)?;

    let out = &global.out;
    std::fs::create_dir_all(out)?;
    let mut results = csv::Writer::from_path(out.join("results.csv"))?;
    results.write_record([
        "config_digest",
        "scheme",
        "classifier",
        "seed",
        "trial",
        "accuracy",
    ])?;
    let mut summary = csv::Writer::from_path(out.join("summary.csv"))?;
    summary.write_record([
        "config_digest",
        "manifest",
        "field_set",
        "sigma_s",
        "sigma_tau_ms",
        "n_comp",
        "n_bins",
        "binary",
        "window",
        "scheme",
        "classifier",
        "seed",
        "trials",
        "n_samples",
        "mean_accuracy",
        "std_accuracy",
        "mean_filled_cells",
    ])?;
    let mut report = String::new();
    let _ = writeln!(report, "# strf eval report");
    let _ = writeln!(report, "# config_digest={digest}");
    let _ = writeln!(report, "# seed={}", cfg.seed);
    let _ = writeln!(report, "# manifest={}", manifest.name);
    let _ = writeln!(report, "# scheme={}", scheme.name());
    let _ = writeln!(
        report,
        "# samples={} videos={}",
        ds.len(),
        manifest.entries.len()
    );
    let _ = writeln!(report, "# mean_filled_cells={filled:.3}");
    for line in cfg.canonical_text().lines() {
        let _ = writeln!(report, "#   {line}");
    }
    let _ = writeln!(
        report,
        "{:<12}{:>12}{:>12}{:>8}",
        "classifier", "accuracy", "std", "trials"
    );

    for clf in &classifiers {
        let r = run_cv(&mut ds, &scheme, clf, cfg.seed)?;
        for (t, a) in r.trial_accuracies.iter().enumerate() {
            results.write_record([
                digest.clone(),
                scheme.name(),
                clf.name().into(),
                cfg.seed.to_string(),
                t.to_string(),
                format!("{a:.6}"),
            ])?;
        }
        let sd = std_dev(&r.trial_accuracies);
        summary.write_record([
            digest.clone(),
            manifest.name.clone(),
            cfg.field_set.name().into(),
            list(&cfg.sigma_s),
            list(&cfg.sigma_tau_ms),
            cfg.n_comp.to_string(),
            cfg.n_bins.to_string(),
            cfg.binary.to_string(),
            cfg.window
                .map(|w| w.to_string())
                .unwrap_or_else(|| "none".into()),
            scheme.name(),
            clf.name().into(),
            cfg.seed.to_string(),
            r.trial_accuracies.len().to_string(),
            ds.len().to_string(),
            format!("{:.6}", r.mean_accuracy),
            format!("{sd:.6}"),
            format!("{filled:.3}"),
        ])?;
        write_confusion(
            &out.join(format!("confusion_{}.csv", clf.name())),
            &ds.class_names,
            &r,
        )?;
        let _ = writeln!(
            report,
            "{:<12}{:>12.6}{:>12.6}{:>8}",
            clf.name(),
            r.mean_accuracy,
            sd,
            r.trial_accuracies.len()
        );
        println!(
            "{} {} accuracy={:.6}",
            clf.name(),
            scheme.name(),
            r.mean_accuracy
        );
    }
    results.flush()?;
    summary.flush()?;
    std::fs::write(out.join("report.txt"), report)?;
    Ok(())
}

fn grid_for(global: &Global, args: &TuneArgs, cfg: &DescriptorConfig) -> Result<ParamGrid> {
    let field_sets = match &args.grid_fieldsets {
        Some(v) if v.len() == 1 && v[0].eq_ignore_ascii_case("all") => FieldSet::ALL.to_vec(),
        Some(v) => v
            .iter()
            .map(|s| FieldSet::parse(s))
            .collect::<strf_core::Result<_>>()?,
        None => vec![cfg.field_set],
    };
    let scales = match args.grid_scales.as_str() {
        "given" => vec![(
            cfg.sigma_s.clone(),
            global.descriptor_config()?.sigma_tau_ms.clone(),
        )],
        "singles" => standard_scales(true, false),
        "pairs" => standard_scales(false, true),
        "both" => standard_scales(true, true),
        other => {
            return Err(cli_error(
                "Usage",
                format!("unknown --grid-scales `{other}`"),
            ))
        }
    };
    // sigma_tau for purely spatial base configs
    let scales = scales
        .into_iter()
        .map(|(s, t)| {
            let t = if t.is_empty() {
                global
                    .sigma_tau
                    .clone()
                    .unwrap_or_else(|| DescriptorConfig::default().sigma_tau_ms)
            } else {
                t
            };
            (s, t)
        })
        .collect();
    let n_comps = match &args.grid_ncomp {
        Some(s) => parse_usize_list(s)?,
        None => vec![cfg.n_comp],
    };
    Ok(ParamGrid {
        field_sets,
        n_comps,
        scales,
        n_bins: args.grid_nbins.clone().unwrap_or_else(|| vec![cfg.n_bins]),
    })
}

fn point_config(base: &DescriptorConfig, p: &GridPoint) -> DescriptorConfig {
    DescriptorConfig {
        field_set: p.field_set,
        sigma_s: p.sigma_s.clone(),
        sigma_tau_ms: p.sigma_tau_ms.clone(),
        n_comp: p.n_comp,
        n_bins: p.n_bins,
        binary: base.binary && p.n_bins == 2,
        ..base.clone()
    }
}

struct Evaluated {
    point: GridPoint,
    digest: [u8; 32],
    filled: f64,
    dataset: CvDataset,
}

fn result_path(
    store_root: &Path,
    digest: &[u8; 32],
    scheme: &CvScheme,
    clf: &Classifier,
    seed: u64,
) -> PathBuf {
    let mut h = Sha256::new();
    h.update(digest);
    h.update(scheme.name().as_bytes());
    h.update(classifier_key(clf).as_bytes());
    h.update(seed.to_le_bytes());
    let d: [u8; 32] = h.finalize().into();
    store_root
        .join("results")
        .join(format!("{}.txt", short(&d)))
}

fn cached_accuracies(path: &Path) -> Option<Vec<f64>> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines().map(|l| l.parse().ok()).collect()
}

pub fn tune(global: &Global, args: &TuneArgs) -> Result<()> {
    let manifest = load(global)?;
    let base = global.descriptor_config()?;
    let scheme = global.scheme()?;
    let classifiers = global.classifiers()?;
    let grid = grid_for(global, args, &base)?;
    let store = Store::new(&global.cache_dir);

    // one PCA fit and one extraction pass per jet configuration
    let mut groups: Vec<(DescriptorConfig, Vec<GridPoint>)> = Vec::new();
    for p in grid.points() {
        let cfg = point_config(&base, &p);
        let key = cfg.pca_text();
        match groups.iter_mut().find(|(c, _)| c.pca_text() == key) {
            Some((_, pts)) => pts.push(p),
            None => groups.push((cfg, vec![p])),
        }
    }
    let mut evaluated: Vec<Evaluated> = Vec::new();
    let explicit_pca = if groups.len() == 1 {
        global.pca.as_deref()
    } else {
        None
    };
    for (gi, (gcfg, pts)) in groups.iter().enumerate() {
        gcfg.validate()?;
        let model = store.pca(explicit_pca, gcfg, &manifest, true)?;
        let (kept, skipped): (Vec<&GridPoint>, Vec<&GridPoint>) =
            pts.iter().partition(|p| p.n_comp <= model.max_components());
        for p in skipped {
            eprintln!(
                "tune: skipping {} (only {} components)",
                p.label(),
                model.max_components()
            );
        }
        let cfgs: Vec<DescriptorConfig> = kept.iter().map(|p| point_config(&base, p)).collect();
        if cfgs.is_empty() {
            continue;
        }
        let (hists, stats, digests) = store.descriptors(&manifest, &cfgs, &model)?;
        eprintln!(
            "tune: group {}/{} extract computed {}, cached {}",
            gi + 1,
            groups.len(),
            stats.computed,
            stats.cached
        );
        for ((p, h), d) in kept.into_iter().zip(hists).zip(digests) {
            evaluated.push(Evaluated {
                point: p.clone(),
                digest: d,
                filled: mean_filled(&h),
                dataset: dataset_from_histograms(&manifest, &h)?,
            });
        }
    }
    if evaluated.is_empty() {
        return Err(cli_error("EmptyGrid", "no evaluable grid points"));
    }

    let out = &global.out;
    std::fs::create_dir_all(out)?;
    std::fs::create_dir_all(global.cache_dir.join("results"))?;

    if args.nested {
        return tune_nested(global, &base, &scheme, &classifiers, evaluated);
    }

    let mut w = csv::Writer::from_path(out.join("tune.csv"))?;
    w.write_record([
        "rank",
        "classifier",
        "config_digest",
        "manifest",
        "field_set",
        "sigma_s",
        "sigma_tau_ms",
        "n_comp",
        "n_bins",
        "binary",
        "scheme",
        "seed",
        "accuracy",
        "mean_filled_cells",
    ])?;
    let total = evaluated.len() * classifiers.len();
    let mut done = 0;
    for clf in &classifiers {
        let mut results = Vec::new();
        for e in evaluated.iter_mut() {
            let rp = result_path(&global.cache_dir, &e.digest, &scheme, clf, base.seed);
            let trials = match cached_accuracies(&rp) {
                Some(t) if !t.is_empty() => t,
                _ => {
                    let r = run_cv(&mut e.dataset, &scheme, clf, base.seed)?;
                    let text: String = r
                        .trial_accuracies
                        .iter()
                        .map(|a| format!("{a}\n"))
                        .collect();
                    std::fs::write(&rp, text)?;
                    r.trial_accuracies
                }
            };
            let accuracy = trials.iter().sum::<f64>() / trials.len() as f64;
            done += 1;
            eprintln!(
                "tune: [{done}/{total}] {} {} accuracy={accuracy:.6}",
                clf.name(),
                e.point.label()
            );
            results.push(GridResult {
                point: e.point.clone(),
                accuracy,
                trial_accuracies: trials,
                rank: 0,
            });
        }
        let ranked = rank_results(results);
        for r in &ranked {
            let e = evaluated.iter().find(|e| e.point == r.point).unwrap();
            let cfg = point_config(&base, &r.point);
            w.write_record([
                r.rank.to_string(),
                clf.name().into(),
                hex::encode(e.digest),
                manifest.name.clone(),
                r.point.field_set.name().into(),
                list(&r.point.sigma_s),
                list(&r.point.sigma_tau_ms),
                r.point.n_comp.to_string(),
                r.point.n_bins.to_string(),
                cfg.binary.to_string(),
                scheme.name(),
                base.seed.to_string(),
                format!("{:.6}", r.accuracy),
                format!("{:.3}", e.filled),
            ])?;
        }
        let best = &ranked[0];
        let cfg = point_config(&base, &best.point);
        let mut text = cfg.canonical_text();
        let _ = writeln!(text, "scheme={}", scheme.name());
        let _ = writeln!(text, "classifier={}", classifier_key(clf));
        let _ = writeln!(text, "accuracy={:.6}", best.accuracy);
        std::fs::write(out.join(format!("best_{}.conf", clf.name())), text)?;
        println!(
            "best {}: {} accuracy={:.6}",
            clf.name(),
            best.point.label(),
            best.accuracy
        );
    }
    w.flush()?;
    Ok(())
}

fn tune_nested(
    global: &Global,
    base: &DescriptorConfig,
    scheme: &CvScheme,
    classifiers: &[Classifier],
    evaluated: Vec<Evaluated>,
) -> Result<()> {
    let out = &global.out;
    let points: Vec<GridPoint> = evaluated.iter().map(|e| e.point.clone()).collect();
    let mut datasets: BTreeMap<usize, CvDataset> = evaluated
        .into_iter()
        .map(|e| e.dataset)
        .enumerate()
        .collect();
    let mut acc = csv::Writer::from_path(out.join("nested.csv"))?;
    acc.write_record(["classifier", "scheme", "seed", "trial", "accuracy"])?;
    let mut sel = csv::Writer::from_path(out.join("nested_selections.csv"))?;
    sel.write_record([
        "classifier",
        "fold",
        "field_set",
        "sigma_s",
        "sigma_tau_ms",
        "n_comp",
        "n_bins",
    ])?;
    for clf in classifiers {
        let r = nested_search_points(
            &points,
            |p| {
                let k = points.iter().position(|q| q == p).unwrap();
                Ok(datasets.get_mut(&k).unwrap().clone())
            },
            scheme,
            clf,
            base.seed,
        )?;
        for (t, a) in r.trial_accuracies.iter().enumerate() {
            acc.write_record([
                clf.name().to_string(),
                scheme.name(),
                base.seed.to_string(),
                t.to_string(),
                format!("{a:.6}"),
            ])?;
        }
        for (f, p) in r.selections.iter().enumerate() {
            sel.write_record([
                clf.name().to_string(),
                f.to_string(),
                p.field_set.name().into(),
                list(&p.sigma_s),
                list(&p.sigma_tau_ms),
                p.n_comp.to_string(),
                p.n_bins.to_string(),
            ])?;
        }
        println!("nested {}: accuracy={:.6}", clf.name(), r.mean_accuracy);
    }
    acc.flush()?;
    sel.flush()?;
    Ok(())
}

pub fn synth(global: &Global, args: &SynthArgs) -> Result<()> {
    let seed = global.seed.unwrap_or(0);
    if args.kind == "desk3" {
        let m = write_desk3(
            &global.out,
            args.width,
            args.height,
            args.frames,
            args.per_class,
        )?;
        println!("manifest={}", m.display());
        return Ok(());
    }
    let mut spec = SynthSpec::new(
        SynthKind::parse(&args.kind)?,
        args.width,
        args.height,
        args.frames,
    );
    if let Some(v) = args.wavelength {
        spec.wavelength = v;
    }
    if let Some(v) = args.velocity {
        spec.velocity = v;
    }
    if let Some(v) = args.period {
        spec.period = v;
    }
    if let Some(v) = args.noise_scale {
        spec.noise_scale = v;
    }
    if let Some(v) = args.orientation {
        spec.orientation_deg = v;
    }
    if let Some(v) = args.components {
        spec.components = v;
    }
    if let Some(f) = global.fps {
        spec.fps = f;
    }
    let path = if global.out.extension().is_some() {
        global.out.clone()
    } else {
        std::fs::create_dir_all(&global.out)?;
        global.out.join(format!("{}-{seed}.strv", spec.kind.name()))
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut stream = synth_texture(&spec, seed)?;
    let n = write_container(&path, &mut stream)?;
    println!("{} frames={n}", path.display());
    Ok(())
}

type Row = BTreeMap<String, String>;

fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

fn field<'a>(row: &'a Row, key: &str, path: &Path) -> Result<&'a str> {
    row.get(key).map(String::as_str).ok_or_else(|| {
        cli_error(
            "BadReportInput",
            format!("{} has no `{key}` column", path.display()),
        )
    })
}

pub fn report(global: &Global, args: &ReportArgs) -> Result<()> {
    // (manifest, classifier, field_set, n_comp, accuracy, cells)
    let mut rows: Vec<(String, String, String, usize, f64, f64)> = Vec::new();
    for path in &args.inputs {
        for row in read_rows(path)? {
            let is_tune = row.contains_key("rank");
            if is_tune && !args.size_vs_accuracy && field(&row, "rank", path)? != "1" {
                continue;
            }
            let accuracy_key = if is_tune { "accuracy" } else { "mean_accuracy" };
            rows.push((
                field(&row, "manifest", path)?.to_string(),
                field(&row, "classifier", path)?.to_string(),
                field(&row, "field_set", path)?.to_string(),
                field(&row, "n_comp", path)?.parse()?,
                field(&row, accuracy_key, path)?.parse()?,
                field(&row, "mean_filled_cells", path)?.parse()?,
            ));
        }
    }
    std::fs::create_dir_all(&global.out)?;
    let target = global.out.join(if args.size_vs_accuracy {
        "size_vs_accuracy.csv"
    } else {
        "report.csv"
    });
    let mut buf = csv::Writer::from_writer(Vec::new());
    if args.size_vs_accuracy {
        // best accuracy per (classifier, n_comp)
        let mut best: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
        for (_, clf, _, nc, acc, cells) in &rows {
            let e = best.entry((clf.clone(), *nc)).or_insert((*acc, *cells));
            if *acc > e.0 {
                *e = (*acc, *cells);
            }
        }
        buf.write_record(["classifier", "n_comp", "mean_nonempty_cells", "accuracy"])?;
        for ((clf, nc), (acc, cells)) in best {
            buf.write_record([
                clf,
                nc.to_string(),
                format!("{cells:.3}"),
                format!("{acc:.6}"),
            ])?;
        }
    } else {
        buf.write_record([
            "manifest",
            "classifier",
            "field_set",
            "n_comp",
            "accuracy_pct",
            "mean_nonempty_cells",
        ])?;
        for (m, clf, fs, nc, acc, cells) in &rows {
            buf.write_record([
                m.clone(),
                clf.clone(),
                fs.clone(),
                nc.to_string(),
                format!("{:.2}", 100.0 * acc),
                format!("{cells:.3}"),
            ])?;
        }
    }
    let bytes = buf
        .into_inner()
        .map_err(|e| cli_error("Csv", e.to_string()))?;
    std::fs::write(&target, &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}
