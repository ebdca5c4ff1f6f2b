use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use speakgen::corpus::{corpus_stats, decode_corpus, encode_corpus, import_csv, generate_synthetic_corpus, EmbeddingCorpus, PlantedDirections};
use speakgen::gan::{sample_latent, train, Checkpoint, GeneratorParams};
use speakgen::ganspace::{edit_and_generate, fit_generator_directions, DirectionBasis, DirectionRegistry};
use speakgen::ndmath::SeededRng;
use speakgen::probes::render::{audit_csv, flip_csv, histogram_csv, histogram_svg, range_csv};
use speakgen::probes::{
    direction_correlations, fit_binary_probe, fit_scalar_probe, flip_sweep, privacy_audit, range_sweep, strongest,
    BinaryProbe, FlipOrientation, Histogram, ScalarProbe, ThresholdPolicy,
};

use crate::config::RunConfig;
use crate::error::{CliError, Context};
use crate::manifest::{hash_file, load_manifest, Manifest, RunDir, CONFIG_FILE};
use crate::{Command, SweepKind};

/// Replaces input paths by their canonical absolute form.
pub fn absolutize(mut command: Command) -> Result<Command, CliError> {
    let canon = |p: &mut PathBuf| -> Result<(), CliError> {
        *p = p
            .canonicalize()
            .map_err(|e| CliError::Data(format!("cannot open {}: {e}", p.display())))?;
        Ok(())
    };
    match &mut command {
        Command::SynthCorpus | Command::Replay { .. } => {}
        Command::Train { corpus } => canon(corpus)?,
        Command::Directions { checkpoint } => canon(checkpoint)?,
        Command::Edit { checkpoint, basis, .. } => {
            canon(checkpoint)?;
            canon(basis)?;
        }
        Command::Sweep {
            checkpoint,
            basis,
            probe,
            corpus,
            registry,
            ..
        } => {
            canon(checkpoint)?;
            canon(basis)?;
            for p in [probe, corpus, registry].into_iter().flatten() {
                canon(p)?;
            }
        }
        Command::Audit { checkpoint, corpus, .. } => {
            canon(checkpoint)?;
            canon(corpus)?;
        }
    }
    Ok(command)
}

pub fn execute(command: &Command, config: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    let mut run = RunDir::create(out)?;
    run.write(CONFIG_FILE, config.to_json().as_bytes())?;
    match command {
        Command::SynthCorpus => synth_corpus(&mut run, config)?,
        Command::Train { corpus } => train_cmd(&mut run, config, corpus)?,
        Command::Directions { checkpoint } => directions(&mut run, config, checkpoint)?,
        Command::Edit {
            checkpoint,
            basis,
            offsets,
        } => edit(&mut run, config, checkpoint, basis, offsets)?,
        Command::Sweep {
            checkpoint,
            basis,
            kind,
            probe,
            corpus,
            direction,
            label,
            registry,
        } => sweep(
            &mut run,
            config,
            SweepArgs {
                checkpoint,
                basis,
                kind: *kind,
                probe: probe.as_deref(),
                corpus: corpus.as_deref(),
                direction: *direction,
                label: label.as_deref(),
                registry: registry.as_deref(),
            },
        )?,
        Command::Audit {
            checkpoint,
            corpus,
            threshold,
            generated,
        } => audit(&mut run, config, checkpoint, corpus, *threshold, *generated)?,
        Command::Replay { .. } => return Err(CliError::Usage("replay cannot be nested".into())),
    }
    run.finish(command, config)
}

/// `EMBC` files, or `.csv` files with a `dim,<D>` header.
fn load_corpus_input(run: &mut RunDir, path: &Path) -> Result<EmbeddingCorpus, CliError> {
    let bytes = run.read_input(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = String::from_utf8(bytes).map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))?;
        return import_csv(&text).context(path.display());
    }
    decode_corpus(&bytes).context(path.display())
}

fn load_checkpoint(run: &mut RunDir, path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = run.read_input(path)?;
    Checkpoint::decode(&bytes).context(path.display())
}

fn load_basis(run: &mut RunDir, path: &Path, g: &GeneratorParams) -> Result<DirectionBasis, CliError> {
    let bytes = run.read_input(path)?;
    let basis = DirectionBasis::decode(&bytes).context(path.display())?;
    if basis.generator_fingerprint != g.fingerprint() {
        return Err(CliError::Data(format!(
            "{} was fitted on a different generator ({} vs {})",
            path.display(),
            basis.generator_fingerprint,
            g.fingerprint()
        )));
    }
    Ok(basis)
}

fn synth_corpus(run: &mut RunDir, config: &RunConfig) -> Result<(), CliError> {
    config
        .corpus
        .validate()
        .map_err(|e| CliError::Usage(format!("corpus section: {e}")))?;
    let corpus = generate_synthetic_corpus(&config.corpus)?;
    run.write("corpus.embc", &encode_corpus(&corpus))?;
    run.write_json("corpus_stats.json", &corpus_stats(&corpus)?)?;
    let planted = PlantedDirections::for_spec(&config.corpus);
    #[derive(Serialize)]
    struct Planted<'a> {
        binary: &'a [f32],
        scalar: &'a [f32],
    }
    run.write_json(
        "planted_directions.json",
        &Planted {
            binary: &planted.binary,
            scalar: &planted.scalar,
        },
    )?;
    println!(
        "corpus: {} embeddings, {} speakers, hash {}",
        corpus.count(),
        config.corpus.speakers,
        corpus.content_hash()
    );
    Ok(())
}

fn train_cmd(run: &mut RunDir, config: &RunConfig, corpus_path: &Path) -> Result<(), CliError> {
    config
        .train
        .validate()
        .map_err(|e| CliError::Usage(format!("train section: {e}")))?;
    let corpus = load_corpus_input(run, corpus_path)?;
    let mut csv = String::from("step,transport_cost,critic_loss,generator_loss\n");
    let ck = train(&corpus, &config.train, |m| {
        writeln!(csv, "{},{},{},{}", m.step, m.transport_cost, m.critic_loss, m.generator_loss).unwrap();
        eprintln!(
            "step {:>6}  transport {:.5}  critic {:.5}  generator {:.5}",
            m.step, m.transport_cost, m.critic_loss, m.generator_loss
        );
    })?;
    run.write("checkpoint.egan", &ck.encode())?;
    run.write("metrics.csv", csv.as_bytes())?;
    println!("checkpoint: {} steps, generator {}", ck.step, ck.generator.fingerprint());
    Ok(())
}

fn directions(run: &mut RunDir, config: &RunConfig, checkpoint: &Path) -> Result<(), CliError> {
    let ck = load_checkpoint(run, checkpoint)?;
    let s = &config.ganspace;
    if s.directions == 0 || s.directions > ck.generator.hidden().min(s.samples) {
        return Err(CliError::Usage(format!(
            "ganspace.directions = {} must be in 1..={}",
            s.directions,
            ck.generator.hidden().min(s.samples)
        )));
    }
    let mut rng = SeededRng::new(s.seed);
    let basis = fit_generator_directions(&ck.generator, s.samples, s.directions, &mut rng)?;
    run.write("basis.edir", &basis.encode())?;
    let total: f64 = basis.variances.iter().map(|&v| v as f64).sum();
    let mut csv = String::from("k,variance,fraction_of_fitted\n");
    for (k, v) in basis.variances.iter().enumerate() {
        writeln!(csv, "{k},{v},{}", *v as f64 / total).unwrap();
    }
    run.write("variances.csv", csv.as_bytes())?;
    println!("basis: {} directions from {} samples", basis.directions(), basis.sample_count);
    Ok(())
}

fn edit(
    run: &mut RunDir,
    config: &RunConfig,
    checkpoint: &Path,
    basis_path: &Path,
    offsets: &[crate::Offset],
) -> Result<(), CliError> {
    let ck = load_checkpoint(run, checkpoint)?;
    let basis = load_basis(run, basis_path, &ck.generator)?;
    let mut x = vec![0.0f32; basis.directions()];
    for o in offsets {
        if o.direction >= basis.directions() {
            return Err(CliError::Usage(format!(
                "direction {} out of range: basis has {} directions",
                o.direction,
                basis.directions()
            )));
        }
        x[o.direction] = o.value;
    }
    let z = sample_latent(&mut SeededRng::new(config.seed), ck.generator.latent_dim())?;
    let e = edit_and_generate(&ck.generator, &z, &basis, &x)?;
    let line = |v: &[f32]| v.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",") + "\n";
    run.write("embedding.csv", line(&e).as_bytes())?;
    run.write("latent.csv", line(&z).as_bytes())?;
    print!("{}", line(&e));
    Ok(())
}

struct SweepArgs<'a> {
    checkpoint: &'a Path,
    basis: &'a Path,
    kind: SweepKind,
    probe: Option<&'a Path>,
    corpus: Option<&'a Path>,
    direction: Option<usize>,
    label: Option<&'a str>,
    registry: Option<&'a Path>,
}

enum Probe {
    Binary(BinaryProbe),
    Scalar(ScalarProbe),
}

impl Probe {
    /// Monotone score used to rank directions.
    fn rank_score(&self, e: &[f32]) -> speakgen::Result<f64> {
        match self {
            Probe::Binary(p) => p.logit(e),
            Probe::Scalar(p) => p.score(e),
        }
    }
}

fn sweep(run: &mut RunDir, config: &RunConfig, a: SweepArgs) -> Result<(), CliError> {
    let s = &config.sweep;
    let grid = s.grid();
    grid.offsets().map_err(|e| CliError::Usage(format!("sweep section: {e}")))?;
    let ck = load_checkpoint(run, a.checkpoint)?;
    let g = &ck.generator;
    let basis = load_basis(run, a.basis, g)?;

    let probe = match (a.probe, a.corpus) {
        (Some(path), _) => {
            let text = String::from_utf8(run.read_input(path)?)
                .map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))?;
            match a.kind {
                SweepKind::Flip => Probe::Binary(BinaryProbe::from_json(&text).context(path.display())?),
                SweepKind::Range => Probe::Scalar(ScalarProbe::from_json(&text).context(path.display())?),
            }
        }
        (None, Some(path)) => {
            let corpus = load_corpus_input(run, path)?;
            match a.kind {
                SweepKind::Flip => {
                    let p = fit_binary_probe(&corpus, &s.binary_attribute, s.heldout_fraction, s.seed)?;
                    run.write("probe.json", (p.to_json() + "\n").as_bytes())?;
                    Probe::Binary(p)
                }
                SweepKind::Range => {
                    let p = fit_scalar_probe(&corpus, &s.scalar_attribute, s.heldout_fraction, s.seed)?;
                    run.write("probe.json", (p.to_json() + "\n").as_bytes())?;
                    Probe::Scalar(p)
                }
            }
        }
        (None, None) => return Err(CliError::Usage("sweep needs --probe or --corpus".into())),
    };

    let (k, correlations) = match a.direction {
        Some(k) if k >= basis.directions() => {
            return Err(CliError::Usage(format!(
                "direction {k} out of range: basis has {} directions",
                basis.directions()
            )))
        }
        Some(k) => (k, None),
        None => {
            let mut rng = SeededRng::with_stream(s.seed, 2);
            let c = direction_correlations(g, &basis, s.selection_samples, &mut rng, |e| probe.rank_score(e))?;
            (strongest(&c).expect("basis has at least one direction"), Some(c))
        }
    };

    let mut registry = match a.registry {
        Some(path) => {
            let text = String::from_utf8(run.read_input(path)?)
                .map_err(|_| CliError::Data(format!("{} is not UTF-8", path.display())))?;
            DirectionRegistry::from_text(&text).context(path.display())?
        }
        None => DirectionRegistry::new(basis.directions()),
    };
    let provenance = format!(
        "{} sweep: {} seeds, offsets {}..{} step {}, seed {}",
        match a.kind {
            SweepKind::Flip => "flip",
            SweepKind::Range => "range",
        },
        grid.seeds,
        grid.start,
        grid.end,
        grid.step,
        grid.seed
    );

    match probe {
        Probe::Binary(p) => {
            let r = flip_sweep(g, &basis, k, &p, &grid)?;
            run.write("sweep.csv", flip_csv(&r).as_bytes())?;
            emit_histogram(run, "flip_histogram", &r.histogram, "Flip points", "offset")?;
            let (lh, hl) = (r.count(FlipOrientation::LowToHigh), r.count(FlipOrientation::HighToLow));
            #[derive(Serialize)]
            struct Summary<'a> {
                direction: usize,
                correlations: Option<Vec<f64>>,
                probe_heldout_accuracy: f64,
                seeds: usize,
                flipped: usize,
                flipped_once: usize,
                multi_flip_seeds: usize,
                central_fraction: f64,
                low_to_high: usize,
                high_to_low: usize,
                fraction_low_to_high: f64,
                fraction_high_to_low: f64,
                histogram: &'a Histogram,
            }
            run.write_json(
                "summary.json",
                &Summary {
                    direction: k,
                    correlations,
                    probe_heldout_accuracy: p.heldout_accuracy,
                    seeds: r.records.len(),
                    flipped: r.flipped(),
                    flipped_once: r.flipped_once(),
                    multi_flip_seeds: r.multi_flip_seeds,
                    central_fraction: r.central_fraction(),
                    low_to_high: lh,
                    high_to_low: hl,
                    fraction_low_to_high: r.fraction_low_to_high,
                    fraction_high_to_low: r.fraction_high_to_low,
                    histogram: &r.histogram,
                },
            )?;
            if r.multi_flip_seeds > 0 {
                eprintln!("warning: {} seeds changed prediction more than once", r.multi_flip_seeds);
            }
            println!(
                "direction {k}: {}/{} seeds flipped ({} once), {lh} low->high, {hl} high->low",
                r.flipped(),
                r.records.len(),
                r.flipped_once()
            );
            if let Some(label) = a.label {
                let orientation = if lh >= hl {
                    "positive offsets raise the probe score"
                } else {
                    "negative offsets raise the probe score"
                };
                registry.register_label(k, label, &provenance, orientation).map_err(label_error)?;
            }
        }
        Probe::Scalar(p) => {
            let r = range_sweep(g, &basis, k, &p, &grid)?;
            run.write("sweep.csv", range_csv(&r).as_bytes())?;
            emit_histogram(run, "min_histogram", &r.min_histogram, "Minimum predicted value", "score")?;
            emit_histogram(run, "max_histogram", &r.max_histogram, "Maximum predicted value", "score")?;
            emit_histogram(run, "range_histogram", &r.range_histogram, "Range of predicted value", "score")?;
            let mean = |f: fn(&speakgen::probes::RangeRecord) -> f64| {
                r.records.iter().map(f).sum::<f64>() / r.records.len() as f64
            };
            #[derive(Serialize)]
            struct Summary<'a> {
                direction: usize,
                correlations: Option<Vec<f64>>,
                probe_heldout_r2: f64,
                seeds: usize,
                mean_min: f64,
                mean_max: f64,
                mean_range: f64,
                min_histogram: &'a Histogram,
                max_histogram: &'a Histogram,
                range_histogram: &'a Histogram,
            }
            run.write_json(
                "summary.json",
                &Summary {
                    direction: k,
                    correlations,
                    probe_heldout_r2: p.heldout_r2,
                    seeds: r.records.len(),
                    mean_min: mean(|x| x.min),
                    mean_max: mean(|x| x.max),
                    mean_range: r.mean_range(),
                    min_histogram: &r.min_histogram,
                    max_histogram: &r.max_histogram,
                    range_histogram: &r.range_histogram,
                },
            )?;
            println!("direction {k}: mean range {:.4} over {} seeds", r.mean_range(), r.records.len());
            if let Some(label) = a.label {
                registry.register_label(k, label, &provenance, "").map_err(label_error)?;
            }
        }
    }
    if a.label.is_some() || a.registry.is_some() {
        run.write("registry.tsv", registry.to_text().as_bytes())?;
    }
    Ok(())
}

fn label_error(e: speakgen::Error) -> CliError {
    CliError::Usage(format!("label: {e}"))
}

fn emit_histogram(run: &mut RunDir, stem: &str, h: &Histogram, title: &str, x_label: &str) -> Result<(), CliError> {
    run.write(&format!("{stem}.csv"), histogram_csv(h).as_bytes())?;
    run.write(&format!("{stem}.svg"), histogram_svg(h, title, x_label).as_bytes())
}

fn audit(
    run: &mut RunDir,
    config: &RunConfig,
    checkpoint: &Path,
    corpus_path: &Path,
    threshold: Option<f64>,
    generated: Option<usize>,
) -> Result<(), CliError> {
    let ck = load_checkpoint(run, checkpoint)?;
    let corpus = load_corpus_input(run, corpus_path)?;
    let n = generated.unwrap_or(config.audit.generated);
    if n == 0 {
        return Err(CliError::Usage("audit needs at least one generated embedding".into()));
    }
    let policy = match threshold.or(config.audit.threshold) {
        Some(t) if t.is_finite() => ThresholdPolicy::Fixed(t),
        Some(t) => return Err(CliError::Usage(format!("threshold {t} is not finite"))),
        None => ThresholdPolicy::Calibrated,
    };
    let report = privacy_audit(&ck.generator, &corpus, n, &policy, config.audit.seed)?;
    run.write_json("audit.json", &report)?;
    run.write("audit.csv", audit_csv(&report).as_bytes())?;
    println!(
        "audit: ER {:.2}% ({} of {}) at threshold {:.4}, {} exact duplicates",
        report.error_rate, report.flagged, report.generated, report.threshold, report.duplicates
    );
    Ok(())
}

/// Re-runs the manifest's command into `out` and compares output hashes.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let recorded = load_manifest(manifest_path)?;
    for input in &recorded.inputs {
        let now = hash_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Data(format!(
                "input {} changed since the run (recorded {}, now {now})",
                input.path, input.sha256
            )));
        }
    }
    let fresh = execute(&recorded.command, &recorded.config, out)?;
    let want: BTreeMap<&str, &str> = recorded.outputs.iter().map(|f| (f.path.as_str(), f.sha256.as_str())).collect();
    let got: BTreeMap<&str, &str> = fresh.outputs.iter().map(|f| (f.path.as_str(), f.sha256.as_str())).collect();
    let mut problems = Vec::new();
    for (path, hash) in &want {
        match got.get(path) {
            None => problems.push(format!("{path}: not produced")),
            Some(h) if h != hash => problems.push(format!("{path}: hash {h} differs from recorded {hash}")),
            _ => {}
        }
    }
    for path in got.keys().filter(|p| !want.contains_key(*p)) {
        problems.push(format!("{path}: not in the recorded manifest"));
    }
    if !problems.is_empty() {
        return Err(CliError::Data(format!("replay mismatch:\n  {}", problems.join("\n  "))));
    }
    println!("replay: {} outputs verified", want.len());
    Ok(())
}
