use std::path::{Path, PathBuf};

use koopman_pe_core::dictionary::Dictionary;
use koopman_pe_core::doe::{design_pe_ics, simulate_batch, DesignResult};
use koopman_pe_core::edmd::{build_snapshots, fit_edmd};
use koopman_pe_core::eval::{mean_error, run_basin_experiment, trajectory_error, ExperimentConfig, TrajectoryError};
use koopman_pe_core::ode_sim::{Trajectory, REPRESSILATOR_LABELS};
use koopman_pe_core::pe_analysis::{pe_analysis, rank_curve, LiftedSignalEnsemble, PeCertificate};
use koopman_pe_core::Error as CoreError;
use serde::Serialize;

use crate::config::{self, DesignFile, ExperimentFile, FitFile, PeFile, PredictFile, SimulateFile};
use crate::error::CliError;
use crate::formats::{self, num, FileRef, ModelFile};
use crate::threads::Threads;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Predict,
    Pe,
    Design,
    Experiment,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Overrides the config's seed where one exists.
    pub seed: Option<u64>,
    /// Forces mean removal before spectral analysis.
    pub center: bool,
    pub threads: Threads,
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cmd: Command, opts: &Options) -> Result<Vec<FileRef>, CliError> {
    std::fs::create_dir_all(&opts.out).map_err(|e| CliError::io(&opts.out, e))?;
    match cmd {
        Command::Simulate => simulate(opts),
        Command::Fit => fit(opts),
        Command::Predict => predict(opts),
        Command::Pe => pe(opts),
        Command::Design => design(opts),
        Command::Experiment => experiment(opts),
    }
}

fn simulate(opts: &Options) -> Result<Vec<FileRef>, CliError> {
    let (cfg, path): (SimulateFile, _) = config::load(&opts.config)?;
    let field = cfg.system.0.build()?;
    if cfg.initial_conditions.is_empty() {
        return Err(CliError::input(path, "initial_conditions is empty"));
    }
    let trajs = simulate_batch(&field, &cfg.initial_conditions, &cfg.sim.0, &opts.threads)?;
    trajs
        .iter()
        .enumerate()
        .map(|(i, t)| formats::write_file(&opts.out, &format!("trajectory_{i:03}.csv"), "trajectory", &formats::trajectory_csv(t)))
        .collect()
}

fn read_trajectories(config: &Path, paths: &[PathBuf]) -> Result<Vec<Trajectory>, CliError> {
    if paths.is_empty() {
        return Err(CliError::input(config, "no trajectory files given"));
    }
    paths.iter().map(|p| formats::read_trajectory_csv(&formats::relative_to(config, p))).collect()
}

fn fit(opts: &Options) -> Result<Vec<FileRef>, CliError> {
    let (cfg, path): (FitFile, _) = config::load(&opts.config)?;
    let trajs = read_trajectories(&path, &cfg.trajectories)?;
    let dict = Dictionary::from_spec(trajs[0].dim(), &cfg.dictionary)?;
    let model = fit_edmd(&build_snapshots(&dict, &trajs)?, &cfg.fit.0)?;
    log::info!("fitted K ({0} x {0}), training residual {1:e}", model.n_lifted(), model.training_residual);
    let bytes = formats::json_bytes(&ModelFile::from_model(&model));
    Ok(vec![formats::write_file(&opts.out, "model.json", "model", &bytes)?])
}

#[derive(Serialize)]
struct PredictionEntry {
    file: String,
    sha256: String,
    diverged: bool,
    first_non_finite: Option<usize>,
    error: Option<TrajectoryError>,
}

#[derive(Serialize)]
struct PredictReport {
    model_sha256: String,
    predictions: Vec<PredictionEntry>,
    mean_error: Option<TrajectoryError>,
}

fn predict(opts: &Options) -> Result<Vec<FileRef>, CliError> {
    let (cfg, path): (PredictFile, _) = config::load(&opts.config)?;
    let model_path = formats::relative_to(&path, &cfg.model);
    let model = formats::read_model(&model_path, cfg.model_sha256.as_deref())?;
    let truth: Vec<Trajectory> = cfg
        .truth
        .iter()
        .map(|p| formats::read_trajectory_csv(&formats::relative_to(&path, p)))
        .collect::<Result<_, _>>()?;
    let mut jobs: Vec<(Vec<f64>, f64, usize, Option<&Trajectory>)> =
        cfg.initial_conditions.iter().map(|x| (x.clone(), 0.0, cfg.steps, None)).collect();
    jobs.extend(truth.iter().map(|t| (t.state(0).to_vec(), t.times()[0], t.len() - 1, Some(t))));
    if jobs.is_empty() {
        return Err(CliError::input(path, "give initial_conditions or truth trajectories"));
    }

    let mut files = Vec::new();
    let mut entries = Vec::new();
    for (i, (x0, t0, steps, truth)) in jobs.iter().enumerate() {
        let p = model.predict_with(x0, *t0, *steps, cfg.rollout)?;
        let error = truth.map(|t| trajectory_error(&p.trajectory, t, cfg.error_mode)).transpose()?;
        let f = formats::write_file(&opts.out, &format!("prediction_{i:03}.csv"), "prediction", &formats::trajectory_csv(&p.trajectory))?;
        entries.push(PredictionEntry {
            file: f.path.clone(),
            sha256: f.sha256.clone(),
            diverged: p.diverged(),
            first_non_finite: p.first_non_finite,
            error,
        });
        files.push(f);
    }
    let errors: Vec<TrajectoryError> = entries.iter().filter_map(|e| e.error).collect();
    let report = PredictReport {
        model_sha256: formats::sha256_file(&model_path)?,
        mean_error: (!errors.is_empty()).then(|| mean_error(&errors)),
        predictions: entries,
    };
    files.push(formats::write_file(&opts.out, "predict_report.json", "report", &formats::json_bytes(&report))?);
    Ok(files)
}

#[derive(Serialize)]
struct PeReport {
    inputs: Vec<FileRef>,
    certificate: PeCertificate,
    rank_curve: Vec<(usize, usize)>,
}

fn pe(opts: &Options) -> Result<Vec<FileRef>, CliError> {
    let (mut cfg, path): (PeFile, _) = config::load(&opts.config)?;
    cfg.pe.0.center |= opts.center;
    let trajs = read_trajectories(&path, &cfg.signals)?;
    let ensemble = match &cfg.dictionary {
        Some(spec) => LiftedSignalEnsemble::from_trajectories(&Dictionary::from_spec(trajs[0].dim(), spec)?, &trajs)?,
        None => LiftedSignalEnsemble::from_states(&trajs)?,
    };
    let analysis = pe_analysis(&ensemble, cfg.order, &cfg.pe.0, &opts.threads)?;
    let curve = rank_curve(&analysis.spectrum, cfg.pe.0.rank_threshold, cfg.rank_curve_points);
    let inputs = cfg
        .signals
        .iter()
        .map(|p| {
            let full = formats::relative_to(&path, p);
            Ok(FileRef { kind: "signal".into(), path: p.display().to_string(), sha256: formats::sha256_file(&full)? })
        })
        .collect::<Result<_, CliError>>()?;
    let mut files = vec![
        formats::write_file(&opts.out, "periodogram.csv", "periodogram", &formats::periodogram_csv(&analysis.spectrum))?,
        formats::write_file(&opts.out, "rank.csv", "rank", &formats::rank_csv(&curve))?,
    ];
    let report = PeReport { inputs, certificate: analysis.certificate, rank_curve: curve };
    files.push(formats::write_file(&opts.out, "certificate.json", "certificate", &formats::json_bytes(&report))?);
    Ok(files)
}

#[derive(Serialize)]
struct DesignReport<'a> {
    #[serde(flatten)]
    result: &'a DesignResult,
    ics_csv: FileRef,
}

fn design(opts: &Options) -> Result<Vec<FileRef>, CliError> {
    let (mut cfg, _): (DesignFile, _) = config::load(&opts.config)?;
    let design = &mut cfg.design.0;
    if let Some(seed) = opts.seed {
        design.seed = seed;
    }
    design.pe.center |= opts.center;
    let field = cfg.system.0.build()?;
    let dict = Dictionary::from_spec(cfg.region.0.dim(), &cfg.dictionary)?;
    let (result, outcome) = match design_pe_ics(&field, &dict, &cfg.region.0, design, &opts.threads) {
        Ok(r) => (r, Ok(())),
        Err(CoreError::BudgetExhausted(r)) => {
            let partial = (*r).clone();
            (partial, Err(CliError::Core(CoreError::BudgetExhausted(r))))
        }
        Err(e) => return Err(e.into()),
    };
    let ics = formats::write_file(&opts.out, "design_ics.csv", "initial_conditions", &formats::ics_csv(&result.accepted_ics))?;
    let report = DesignReport { result: &result, ics_csv: ics.clone() };
    let rep = formats::write_file(&opts.out, "design_report.json", "report", &formats::json_bytes(&report))?;
    outcome.map(|_| vec![ics, rep])
}

/// Everything an experiment run records. File paths are relative to the
/// output directory.
#[derive(Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub model: FileRef,
    pub n_lifted: usize,
    pub training_residual: f64,
    pub one_step_error: f64,
    pub lifted_certificate: PeCertificate,
    pub raw_certificate: PeCertificate,
    pub rank_curve: Vec<(usize, usize)>,
    pub train_ics: Vec<Vec<f64>>,
    pub test_ics: Vec<Vec<f64>>,
    pub test_errors: Vec<TrajectoryError>,
    pub mean_test_error: TrajectoryError,
    /// Training ICs predicted out to the test horizon.
    pub train_extrapolation_errors: Vec<TrajectoryError>,
    pub files: Vec<FileRef>,
}

/// Protein coordinates of every trajectory, tagged by role.
fn phase_portrait_csv(sets: &[(&str, &[Trajectory])]) -> Vec<u8> {
    let header: Vec<String> =
        ["set", "index", "t"].iter().map(|s| s.to_string()).chain(REPRESSILATOR_LABELS[3..].iter().map(|s| s.to_string())).collect();
    let mut rows = Vec::new();
    for (name, trajs) in sets {
        for (i, t) in trajs.iter().enumerate() {
            for k in 0..t.len() {
                let x = t.state(k);
                rows.push(vec![name.to_string(), i.to_string(), num(t.times()[k]), num(x[3]), num(x[4]), num(x[5])]);
            }
        }
    }
    formats::csv_bytes(&header, rows)
}

pub fn load_experiment(opts: &Options) -> Result<ExperimentConfig, CliError> {
    let (file, path): (ExperimentFile, _) = config::load(&opts.config)?;
    let mut cfg = file.experiment.0;
    if let Some(p) = &file.train_ics_csv {
        cfg.train_ics = Some(formats::read_ics_csv(&formats::relative_to(&path, p))?);
    }
    if let Some(p) = &file.test_ics_csv {
        cfg.test_ics = Some(formats::read_ics_csv(&formats::relative_to(&path, p))?);
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.pe.center |= opts.center;
    cfg.validate().map_err(|e| CliError::input(path, e.to_string()))?;
    Ok(cfg)
}

fn experiment(opts: &Options) -> Result<Vec<FileRef>, CliError> {
    let cfg = load_experiment(opts)?;
    let out = run_basin_experiment(&cfg, &opts.threads)?;
    let dir = &opts.out;
    let mut files = Vec::new();

    let model = formats::write_file(dir, "model.json", "model", &formats::json_bytes(&ModelFile::from_model(&out.model)))?;
    let predictions: Vec<Trajectory> = out.test_predictions.iter().map(|p| p.trajectory.clone()).collect();
    for (prefix, trajs) in [("train", &out.train_trajectories), ("test_truth", &out.test_truth), ("test_pred", &predictions)] {
        for (i, t) in trajs.iter().enumerate() {
            files.push(formats::write_file(dir, &format!("{prefix}_{i:03}.csv"), "trajectory", &formats::trajectory_csv(t))?);
        }
    }
    let portrait = phase_portrait_csv(&[
        ("train", &out.train_trajectories),
        ("test_truth", &out.test_truth),
        ("test_pred", &predictions),
    ]);
    files.push(formats::write_file(dir, "phase_portrait.csv", "phase_portrait", &portrait)?);
    files.push(formats::write_file(dir, "periodogram.csv", "periodogram", &formats::periodogram_csv(&out.lifted.spectrum))?);
    files.push(formats::write_file(dir, "periodogram_raw.csv", "periodogram", &formats::periodogram_csv(&out.raw.spectrum))?);
    files.push(formats::write_file(dir, "rank.csv", "rank", &formats::rank_csv(&out.rank_curve))?);

    let report = ExperimentReport {
        config: cfg,
        model: model.clone(),
        n_lifted: out.model.n_lifted(),
        training_residual: out.model.training_residual,
        one_step_error: out.one_step_error,
        lifted_certificate: out.lifted.certificate.clone(),
        raw_certificate: out.raw.certificate.clone(),
        rank_curve: out.rank_curve.clone(),
        train_ics: out.train_ics.clone(),
        test_ics: out.test_ics.clone(),
        mean_test_error: out.mean_test_error(),
        test_errors: out.test_errors.clone(),
        train_extrapolation_errors: out.train_extrapolation_errors.clone(),
        files: files.clone(),
    };
    log::info!(
        "stacked rank {} of {}, mean test error {:?}",
        report.lifted_certificate.spectral_rank.stacked,
        report.n_lifted,
        report.mean_test_error
    );
    let rep = formats::write_file(dir, "report.json", "report", &formats::json_bytes(&report))?;
    let mut all = vec![model];
    all.extend(files);
    all.push(rep);
    Ok(all)
}
