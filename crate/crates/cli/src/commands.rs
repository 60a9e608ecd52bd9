use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use pssff::nn::{ModelConfig, ModelState};
use pssff::pipeline::{
    build_folds, class_names, evaluate as score, extract_utterance, feature_file_name,
    feature_files, load_examples, predict_utterances, scan_max_gci, train_fold, utterance_gcis,
    write_history, CrossValidationReport, Emotion, EvalReport, Manifest, Role,
};
use pssff::spectrogram::FeatureKind;
use pssff::wav::load_wav;
use pssff::FeatureMatrix;

use crate::args::{EvaluateArgs, ExtractArgs, GciArgs, RenderArgs, ScanArgs, TrainArgs};
use crate::CliError;

fn collect_wavs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
        let rd = fs::read_dir(dir).map_err(|e| pssff::Error::Io {
            path: dir.into(),
            source: e,
        })?;
        let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            walk(p, &mut out)?;
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no input files".into()));
    }
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| {
        pssff::Error::Io {
            path: dir.into(),
            source: e,
        }
        .into()
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| {
        pssff::Error::Io {
            path: path.into(),
            source: e,
        }
        .into()
    })
}

pub fn extract(a: &ExtractArgs) -> Result<(), CliError> {
    let items: Vec<(String, PathBuf)> = match &a.manifest {
        Some(m) => {
            let m = Manifest::load(m)?;
            if m.is_empty() {
                return Err(CliError::Usage("no input files".into()));
            }
            m.entries.into_iter().map(|e| (e.id, e.path)).collect()
        }
        None => collect_wavs(&a.inputs)?
            .into_iter()
            .map(|p| (stem(&p), p))
            .collect(),
    };
    let config = a.dsp.config();
    config.validate()?;
    let kinds = a.kind.kinds();
    create_dir(&a.out)?;
    let start = Instant::now();
    let results: Vec<Option<usize>> = items
        .par_iter()
        .map(|(id, path)| {
            let run = || -> Result<usize, pssff::Error> {
                let signal = load_wav(path, a.audio.channel)?;
                let segments = extract_utterance(id, &signal, &config, &kinds)?;
                let mut n = 0;
                for seg in &segments {
                    for (m, kind) in seg.features.iter().zip(&kinds) {
                        m.save(a.out.join(feature_file_name(id, seg.index, *kind)))?;
                        n += 1;
                    }
                }
                Ok(n)
            };
            match run() {
                Ok(n) => Some(n),
                Err(e) => {
                    log::error!("{}: {e}", path.display());
                    None
                }
            }
        })
        .collect();
    let ok = results.iter().flatten().count();
    let files: usize = results.iter().flatten().sum();
    println!(
        "extracted {files} feature files from {ok} of {} utterances in {:.2} s",
        items.len(),
        start.elapsed().as_secs_f64()
    );
    if ok == 0 {
        return Err(CliError::Runtime(format!(
            "all {} inputs failed",
            items.len()
        )));
    }
    Ok(())
}

pub fn gci(a: &GciArgs) -> Result<(), CliError> {
    let files = collect_wavs(&a.inputs)?;
    let zff = a.zff.config();
    zff.validate()?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
    }
    let listings: Vec<Result<String, pssff::Error>> = files
        .par_iter()
        .map(|p| {
            let signal = load_wav(p, a.audio.channel)?;
            Ok(utterance_gcis(&signal, &zff)?.to_text(a.seconds))
        })
        .collect();
    let mut failed = 0;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (p, listing) in files.iter().zip(listings) {
        match listing {
            Ok(text) => match &a.out {
                Some(dir) => write_file(&dir.join(format!("{}.gci", stem(p))), text.as_bytes())?,
                None => {
                    if files.len() > 1 {
                        let _ = writeln!(out, "# {}", p.display());
                    }
                    let _ = out.write_all(text.as_bytes());
                }
            },
            Err(e) => {
                failed += 1;
                log::error!("{}: {e}", p.display());
            }
        }
    }
    if failed == files.len() {
        return Err(CliError::Runtime(format!("all {failed} inputs failed")));
    }
    Ok(())
}

pub fn render(a: &RenderArgs) -> Result<(), CliError> {
    let signal = load_wav(&a.input, a.audio.channel)?;
    let config = a.dsp.config();
    let mut kinds = vec![FeatureKind::PitchSyncSff, FeatureKind::Stft];
    if a.fixed_frame {
        kinds.push(FeatureKind::SffFixedFrame);
    }
    let segments = extract_utterance(&stem(&a.input), &signal, &config, &kinds)?;
    let seg = segments.get(a.segment).ok_or_else(|| {
        CliError::Usage(format!(
            "segment {} requested, utterance has {}",
            a.segment,
            segments.len()
        ))
    })?;
    create_dir(&a.out)?;
    for (m, kind) in seg.features.iter().zip(&kinds) {
        let path = a
            .out
            .join(format!("{}_{:03}_{kind}.pgm", stem(&a.input), seg.index));
        write_file(&path, &m.to_pgm())?;
        println!("{}", path.display());
    }
    Ok(())
}

fn first_feature(
    manifest: &Manifest,
    dir: &Path,
    kind: FeatureKind,
) -> Result<FeatureMatrix, CliError> {
    for e in &manifest.entries {
        if let Some(f) = feature_files(dir, &e.id, kind).first() {
            return Ok(FeatureMatrix::load(f)?);
        }
    }
    Err(CliError::Runtime(format!(
        "no {kind} feature files in {}",
        dir.display()
    )))
}

fn write_predictions(path: &Path, rows: &[(String, usize, usize)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label", "predicted"])
        .map_err(pssff::Error::from)?;
    for (id, l, p) in rows {
        let name =
            |i: usize| Emotion::from_index(i).map_or_else(|| i.to_string(), |e| e.name().into());
        w.write_record([id.as_str(), &name(*l), &name(*p)])
            .map_err(pssff::Error::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(path, &bytes)
}

fn write_report(dir: &Path, json: &str, table: &str) -> Result<(), CliError> {
    create_dir(dir)?;
    write_file(&dir.join("report.json"), json.as_bytes())?;
    write_file(&dir.join("report.txt"), table.as_bytes())
}

pub fn train(a: &TrainArgs, seed: u64) -> Result<(), CliError> {
    let mut manifest = Manifest::load(&a.manifest)?;
    if a.improvised_only {
        manifest = manifest.improvised_only();
    }
    let kind: FeatureKind = a.kind.into();
    let folds = build_folds(&manifest, a.both_orders)?;
    let folds: Vec<_> = match a.fold {
        Some(i) => vec![folds.get(i).cloned().ok_or_else(|| {
            CliError::Usage(format!("fold {i} requested, {} available", folds.len()))
        })?],
        None => folds,
    };
    let probe = first_feature(&manifest, &a.features, kind)?;
    let mut model = ModelConfig::standard(probe.width());
    model.input_h = probe.rows();
    model.dropout_rate = a.model.dropout;
    model.dense_width = a.model.dense_width;
    model.validate()?;
    let config = a.train_config(seed);
    create_dir(&a.out)?;

    let classes = model.num_classes;
    let mut reports = Vec::new();
    for fold in &folds {
        log::info!(
            "fold {}: held-out session {}, validation {}, test {}",
            fold.index,
            fold.held_out_session,
            fold.validation_speaker,
            fold.test_speaker
        );
        let outcome = train_fold(fold, &manifest, &a.features, kind, model.clone(), &config)?;
        let tag = format!("fold{}", fold.index);
        outcome.best.save(a.out.join(format!("{tag}.sffn")))?;
        let mut hist = Vec::new();
        write_history(&outcome.history, &mut hist)?;
        write_file(&a.out.join(format!("{tag}_history.csv")), &hist)?;

        let test = load_examples(&fold.select(&manifest, Role::Test), &a.features, kind)?;
        let preds = predict_utterances(&outcome.best, &test, config.batch_size)?;
        let rows: Vec<(String, usize, usize)> = preds
            .iter()
            .map(|p| (p.id.clone(), p.label, p.predicted))
            .collect();
        write_predictions(&a.out.join(format!("{tag}_predictions.csv")), &rows)?;
        let p: Vec<usize> = preds.iter().map(|u| u.predicted).collect();
        let l: Vec<usize> = preds.iter().map(|u| u.label).collect();
        let report = score(&p, &l, classes)?;
        log::info!(
            "fold {}: best epoch {}, test WA {:.2} UWA {:.2}",
            fold.index,
            outcome.best_epoch,
            report.wa,
            report.uwa
        );
        reports.push(report);
    }
    let cv = CrossValidationReport::new(reports)?;
    let table = cv.to_table();
    write_report(&a.out, &cv.to_json(), &table)?;
    print!("{table}");
    Ok(())
}

fn parse_label(s: &str, classes: usize) -> Result<usize, CliError> {
    if let Ok(i) = s.trim().parse::<usize>() {
        if i < classes {
            return Ok(i);
        }
        return Err(CliError::Runtime(format!(
            "label {i} outside {classes} classes"
        )));
    }
    Ok(s.parse::<Emotion>()?.index())
}

fn read_predictions(path: &Path) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(pssff::Error::from)?;
    let headers = rdr.headers().map_err(pssff::Error::from)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Runtime(format!("{}: missing column {name}", path.display())))
    };
    let (li, pi) = (col("label")?, col("predicted")?);
    let (mut labels, mut preds) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(pssff::Error::from)?;
        labels.push(parse_label(&rec[li], Emotion::COUNT)?);
        preds.push(parse_label(&rec[pi], Emotion::COUNT)?);
    }
    Ok((preds, labels))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let report: EvalReport = if let Some(ckpt) = &a.checkpoint {
        let state = ModelState::load(ckpt)?;
        let manifest = Manifest::load(a.manifest.as_ref().expect("clap requires manifest"))?;
        let entries: Vec<_> = manifest
            .entries
            .iter()
            .filter(|e| a.speakers.is_empty() || a.speakers.contains(&e.speaker))
            .collect();
        let features = a.features.as_ref().expect("clap requires features");
        let examples = load_examples(&entries, features, a.kind.into())?;
        let preds = predict_utterances(&state, &examples, 8)?;
        let p: Vec<usize> = preds.iter().map(|u| u.predicted).collect();
        let l: Vec<usize> = preds.iter().map(|u| u.label).collect();
        score(&p, &l, state.config().num_classes)?
    } else {
        let path = a.predictions.as_ref().expect("clap requires predictions");
        let (p, l) = read_predictions(path)?;
        if l.is_empty() {
            return Err(CliError::Usage(format!(
                "{}: no predictions",
                path.display()
            )));
        }
        let mut r = score(&p, &l, Emotion::COUNT)?;
        r.classes = class_names(Emotion::COUNT);
        r
    };
    let table = report.to_table();
    if let Some(dir) = &a.out {
        write_report(dir, &report.to_json(), &table)?;
    }
    print!("{table}");
    Ok(())
}

pub fn scan(a: &ScanArgs) -> Result<(), CliError> {
    let manifest = Manifest::load(&a.manifest)?;
    println!("{}", scan_max_gci(&manifest, &a.dsp.config())?);
    Ok(())
}
