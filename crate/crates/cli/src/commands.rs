use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use iriskit::datamodel::{
    import_embeddings, load_manifest, load_templates, save_manifest, save_templates, Mask, SampleRecord, Template,
    TemplateMap,
};
use iriskit::encode::{extract_records, ExtractConfig};
use iriskit::matcher::{match_pairs, save_scores, load_scores, MatcherConfig, ScoresMeta};
use iriskit::metrics::{dual_frr_at_far, frr_at_far, rank1_from_pairs, render_table, ProtocolResult, Report, ReportPoint, ScoreSet, Side};
use iriskit::protocols::{
    build_identification, build_verification, load_identification, load_pairs, peek_spec, save_identification,
    save_pairs, split_dataset, EyeMode, ProtocolName, ProtocolSpec, Task,
};
use iriskit::quality::{clean, score_all, QualityThresholds};
use iriskit::synthgen::{self, generate_corpus, DefectProfile, SynthConfig};
use iriskit::Error;
use log::{info, warn};

use crate::*;

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Synth(SynthCmd::Generate(a)) => generate(a),
        Command::Clean(a) => clean_cmd(a),
        Command::Quality(QualityCmd::Score(a)) => score(a),
        Command::Split(a) => split(a),
        Command::Protocol(ProtocolCmd::Build(a)) => build(a),
        Command::Encode(a) => encode(a),
        Command::Match(a) => match_cmd(a),
        Command::Eval(EvalCmd::Verify(a)) => verify(a),
        Command::Eval(EvalCmd::Identify(a)) => identify(a),
        Command::Report(a) => report(a),
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    let dir = parent_dir(path);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let records = load_manifest(path).with_context(|| format!("loading manifest {}", path.display()))?;
    info!("{}: {} records", path.display(), records.len());
    Ok(records)
}

/// Relative image and mask paths resolve against the manifest directory; when
/// a manifest moves to another directory they are made absolute.
fn rebase(records: &mut [SampleRecord], from: &Path, to: &Path) -> Result<()> {
    let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (from, to) = (canon(from), canon(to));
    if from == to {
        return Ok(());
    }
    let fix = |s: &mut String| {
        if !synthgen::is_virtual(s) && Path::new(s.as_str()).is_relative() {
            *s = from.join(&*s).to_string_lossy().into_owned();
        }
    };
    for r in records {
        fix(&mut r.image_ref);
        if let Some(a) = &mut r.annotation {
            for m in [&mut a.occlusion_mask, &mut a.eyelash_mask, &mut a.reflection_mask] {
                if let Mask::External(p) = m {
                    fix(p);
                }
            }
        }
    }
    Ok(())
}

fn write_manifest_to(records: &mut [SampleRecord], input: &Path, out: &Path) -> Result<()> {
    ensure_parent(out)?;
    rebase(records, &parent_dir(input), &parent_dir(out))?;
    save_manifest(out, records).with_context(|| format!("writing {}", out.display()))?;
    info!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn thresholds(a: &ThresholdArgs) -> Result<QualityThresholds> {
    let mut t = match &a.thresholds {
        Some(p) => QualityThresholds::load(p).with_context(|| format!("loading thresholds {}", p.display()))?,
        None => QualityThresholds::default(),
    };
    for (k, v) in &a.overrides {
        t.set(k, *v)?;
    }
    Ok(t)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(a.subjects, a.seed);
    cfg.camera_tilt_deg = a.camera_tilt;
    if a.no_defects {
        cfg.defects = DefectProfile::none();
    }
    for (k, v) in &a.defects {
        cfg.defects.set(k, *v)?;
    }
    let t = std::time::Instant::now();
    let mut records = generate_corpus(&cfg)?;
    let defective = records.iter().filter(|r| r.annotation.is_none()).count();
    info!(
        "generated {} records for {} subjects ({} defective) in {:.1?}",
        records.len(),
        a.subjects,
        defective,
        t.elapsed()
    );
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if a.write_images {
        synthgen::write_images(&mut records, &a.out, "images")?;
        info!("rendered {} images", records.len());
    }
    let path = a.out.join("manifest.jsonl");
    save_manifest(&path, &records)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn clean_cmd(a: &CleanArgs) -> Result<()> {
    let records = read_manifest(&a.manifest)?;
    let (mut kept, dropped) = clean(records);
    info!("dropped {dropped} records without a usable annotation");
    write_manifest_to(&mut kept, &a.manifest, &a.out)
}

fn score(a: &ScoreArgs) -> Result<()> {
    let t = thresholds(&a.thresholds)?;
    let mut records = read_manifest(&a.manifest)?;
    score_all(&mut records, &t, &parent_dir(&a.manifest))?;
    let challenging = records
        .iter()
        .filter(|r| r.category == Some(iriskit::datamodel::Category::Challenging))
        .count();
    info!(
        "{challenging} of {} records challenging ({:.1}%)",
        records.len(),
        100.0 * challenging as f64 / records.len().max(1) as f64
    );
    write_manifest_to(&mut records, &a.manifest, &a.out)
}

fn split(a: &SplitArgs) -> Result<()> {
    let records = read_manifest(&a.manifest)?;
    let mut records = split_dataset(records, a.ratio, a.seed)?;
    let test: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.split == Some(iriskit::datamodel::Split::Test))
        .map(|r| r.subject_id.as_str())
        .collect();
    info!("{} test subjects", test.len());
    write_manifest_to(&mut records, &a.manifest, &a.out)
}

/// Parses a comma list or `all`; the flag says whether `all` was used.
fn selection<T>(s: &str, all: &[T], flag: &str) -> Result<(Vec<T>, bool)>
where
    T: std::str::FromStr + Copy,
    T::Err: std::fmt::Display,
{
    if s.trim() == "all" {
        return Ok((all.to_vec(), true));
    }
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<T>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| anyhow::anyhow!("--{flag}: {e}"))?;
    Ok((v, false))
}

fn build(a: &BuildArgs) -> Result<()> {
    let t = thresholds(&a.thresholds)?;
    let (names, all_names) = selection(&a.name, &ProtocolName::ALL, "name")?;
    let (tasks, all_tasks) = selection(&a.task, &[Task::Verification, Task::Identification], "task")?;
    let (eyes, all_eyes) = selection(&a.eye, &EyeMode::ALL, "eye")?;
    let bulk = all_names || all_tasks || all_eyes;
    let records = read_manifest(&a.manifest)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written = 0;
    for &task in &tasks {
        for &name in &names {
            for &eye in &eyes {
                // An undefined combination is an error only when the user
                // named both of its conflicting parts.
                let asked = match (name, task, eye) {
                    (ProtocolName::Dilation, Task::Identification, _) => !all_names && !all_tasks,
                    (ProtocolName::Select, _, EyeMode::Dual) => !all_names && !all_eyes,
                    _ => true,
                };
                let spec = match ProtocolSpec::new(name, task, eye, a.seed) {
                    Ok(s) => s,
                    Err(e) if !asked => {
                        log::debug!("skipping {name}/{}/{eye}: {e}", task.as_str());
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let file = a.out.join(format!("{}_{}_{}.csv", task.as_str(), name, eye.as_str()));
                let built = match task {
                    Task::Verification => build_verification(&spec, &records, &t).and_then(|list| {
                        info!("{}: {} genuine, {} impostor pairs", file.display(), list.n_genuine(), list.pairs.len() - list.n_genuine());
                        save_pairs(&file, &list)
                    }),
                    Task::Identification => build_identification(&spec, &records, &t).and_then(|set| {
                        info!("{}: {} gallery, {} probes", file.display(), set.gallery.len(), set.probes.len());
                        save_identification(&file, &set)
                    }),
                };
                match built {
                    Ok(()) => written += 1,
                    Err(e @ Error::EmptyPool { .. }) if bulk => warn!("skipping {}: {e}", file.display()),
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    info!("wrote {written} protocol files to {}", a.out.display());
    Ok(())
}

/// Sample ids referenced by a pairs or identification file.
fn referenced_ids(path: &Path, ids: &mut BTreeSet<String>) -> Result<()> {
    let spec = peek_spec(path).with_context(|| format!("reading {}", path.display()))?;
    let pairs = match spec.task {
        Task::Verification => load_pairs(path)?.pairs,
        Task::Identification => load_identification(path)?.pairs(),
    };
    for p in &pairs {
        ids.extend(p.probe.ids().chain(p.reference.ids()).map(str::to_string));
    }
    Ok(())
}

fn subset_filter(subsets: &[PathBuf]) -> Result<Option<BTreeSet<String>>> {
    if subsets.is_empty() {
        return Ok(None);
    }
    let mut ids = BTreeSet::new();
    for p in subsets {
        referenced_ids(p, &mut ids)?;
    }
    Ok(Some(ids))
}

fn encode(a: &EncodeArgs) -> Result<()> {
    let wanted = subset_filter(&a.subsets)?;
    let templates: TemplateMap = if let Some(path) = &a.import {
        import_embeddings(path)
            .with_context(|| format!("importing {}", path.display()))?
            .into_iter()
            .filter(|(id, _)| wanted.as_ref().is_none_or(|w| w.contains(id)))
            .map(|(id, e)| (id, Template::Embedding(e)))
            .collect()
    } else {
        let method = a.method.expect("clap requires --method without --import");
        let Some(manifest) = &a.manifest else {
            bail!("--manifest is required with --method");
        };
        let mut records = read_manifest(manifest)?;
        if let Some(w) = &wanted {
            let known: BTreeSet<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
            if let Some(missing) = w.iter().find(|id| !known.contains(id.as_str())) {
                bail!("sample {missing} referenced by --subset is not in the manifest");
            }
            records.retain(|r| w.contains(&r.sample_id));
        }
        let before = records.len();
        records.retain(|r| r.annotation.is_some());
        if records.len() < before {
            warn!("skipping {} records without annotation", before - records.len());
        }
        let base = parent_dir(manifest);
        let t = std::time::Instant::now();
        let map = match a.precision.as_str() {
            "f32" => extract_records(method, &records, &base, &ExtractConfig::<f32>::default())?,
            _ => extract_records(method, &records, &base, &ExtractConfig::<f64>::default())?,
        };
        info!("encoded {} samples with {method} in {:.1?}", map.len(), t.elapsed());
        map
    };
    ensure_parent(&a.out)?;
    save_templates(&a.out, &templates)?;
    info!("wrote {} templates to {}", templates.len(), a.out.display());
    Ok(())
}

fn template_kind(templates: &TemplateMap) -> String {
    match templates.values().next() {
        Some(Template::Code(c)) => format!("{:?}", c.kind).to_lowercase(),
        Some(Template::Embedding(e)) => format!("embedding-{}", e.dims()),
        None => String::new(),
    }
}

fn match_cmd(a: &MatchArgs) -> Result<()> {
    let templates = load_templates(&a.templates).with_context(|| format!("loading {}", a.templates.display()))?;
    let spec = peek_spec(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?;
    let pairs = match spec.task {
        Task::Verification => load_pairs(&a.pairs)?.pairs,
        Task::Identification => load_identification(&a.pairs)?.pairs(),
    };
    let cfg = MatcherConfig {
        max_shift: a.max_shift,
        min_valid_fraction: a.min_valid,
    };
    let t = std::time::Instant::now();
    let scores = match_pairs::<f64>(&pairs, &templates, &cfg)?;
    info!("matched {} pairs in {:.1?}", scores.len(), t.elapsed());
    let meta = ScoresMeta {
        spec,
        matcher: cfg,
        templates: template_kind(&templates),
    };
    ensure_parent(&a.out)?;
    save_scores(&a.out, &meta, &scores)?;
    Ok(())
}

fn result_row(meta: &ScoresMeta, n_genuine: usize, n_impostor: usize) -> ProtocolResult {
    ProtocolResult {
        protocol: meta.spec.name.to_string(),
        eye_mode: meta.spec.eye_mode.as_str().to_string(),
        task: meta.spec.task.as_str().to_string(),
        n_genuine,
        n_impostor,
        points: Vec::new(),
        rank1: None,
    }
}

fn save_report(report: &Report, out: &Path) -> Result<()> {
    ensure_parent(out)?;
    report.save(out)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn verify(a: &VerifyArgs) -> Result<()> {
    if let Some(f) = a.far.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        bail!("--far {f}: targets must lie in (0, 1]");
    }
    let mut results = Vec::new();
    for path in &a.scores {
        let (meta, scores) = load_scores(path).with_context(|| format!("loading {}", path.display()))?;
        if meta.spec.task != Task::Verification {
            bail!("{} holds {} scores", path.display(), meta.spec.task.as_str());
        }
        let n_gen = scores.iter().filter(|s| s.genuine).count();
        let mut row = result_row(&meta, n_gen, scores.len() - n_gen);
        let single = ScoreSet::from_pairs(&scores, Side::Left);
        for &far in &a.far {
            let point = if meta.spec.eye_mode == EyeMode::Dual {
                dual_frr_at_far(&scores, far).map(ReportPoint::from)
            } else {
                frr_at_far(&single, far).map(ReportPoint::from)
            };
            match point {
                Ok(p) => row.points.push(p),
                Err(e @ Error::InsufficientImpostors { .. }) => {
                    warn!("{}: FAR {far:e} skipped: {e}", path.display())
                }
                Err(e) => return Err(e).with_context(|| path.display().to_string()),
            }
        }
        results.push(row);
    }
    save_report(&Report::merge([Report { results }]), &a.out)
}

fn identify(a: &IdentifyArgs) -> Result<()> {
    let mut results = Vec::new();
    for path in &a.scores {
        let (meta, scores) = load_scores(path).with_context(|| format!("loading {}", path.display()))?;
        if meta.spec.task != Task::Identification {
            bail!("{} holds {} scores", path.display(), meta.spec.task.as_str());
        }
        let r = rank1_from_pairs(&scores).with_context(|| path.display().to_string())?;
        info!("{}: rank-1 {}/{}", path.display(), r.correct, r.total);
        let n_gen = scores.iter().filter(|s| s.genuine).count();
        let mut row = result_row(&meta, n_gen, scores.len() - n_gen);
        row.rank1 = Some(r.accuracy());
        results.push(row);
    }
    save_report(&Report::merge([Report { results }]), &a.out)
}

fn report(a: &ReportArgs) -> Result<()> {
    let reports = a
        .inputs
        .iter()
        .map(|p| Report::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let merged = Report::merge(reports);
    save_report(&merged, &a.out)?;
    if let Some(table) = &a.table {
        ensure_parent(table)?;
        std::fs::write(table, render_table(&merged)).with_context(|| format!("writing {}", table.display()))?;
        info!("wrote {}", table.display());
    }
    Ok(())
}
