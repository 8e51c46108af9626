//! Command-line front end: `simulate`, `fit`, `report`, `hrf` and
//! `smooth-bold`. Every command writes a `manifest.json` next to its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    band_probabilities, connectivity_bold_correlation, positive_support_map, posterior_predictive,
    quantile_bands, trace_summaries, truth_coverage, PredictiveMode, PredictiveSummary,
};
use crate::error::{Error, Result};
use crate::io::{self, FileDigest, RunManifest};
use crate::model::{ml2_hyperparameters, ChainOutput, Dataset, Hyperparameters, ModelSpec, Variant};
use crate::sampler::{run_chain, ChainControls};
use crate::signal::{self, HrfParams, StimulusDesign, DEFAULT_DELTA};
use crate::simulate::{default_regressor, simulate_dataset, SimVariant, SimulationParams, TruthRecord};

/// Default output root when `--out` is not given.
pub const OUT_ENV: &str = "DYNCONN_OUT";

#[derive(Debug, Parser)]
#[command(name = "dynconn", version, about = "Dynamic effective-connectivity models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a dataset.
    Fit(FitArgs),
    /// Posterior summaries for a stored chain.
    Report(ReportArgs),
    /// Sample the hemodynamic response and the modeled regressor.
    Hrf(HrfArgs),
    /// Fit the periodogram sinusoid smoother to a regressor.
    SmoothBold(SmoothArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArg {
    /// Output directory (must exist). Defaults to $DYNCONN_OUT, then `.`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArg {
    fn resolve(&self) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        if !dir.is_dir() {
            return Err(Error::io(
                &dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            ));
        }
        Ok(dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimKind {
    Rw,
    Rwprime,
    Ar,
    Dp,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "rwprime")]
    pub variant: SimKind,
    #[arg(long, default_value_t = 0.999)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// DP concentration for `--variant dp`.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long = "T", default_value_t = 285)]
    pub len: usize,
    #[arg(long = "R", default_value_t = 3)]
    pub regions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with generative parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Regressor as a `t,value` CSV; defaults to the built-in block design.
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Dataset CSV `t,y1,…,yR[,x]`.
    #[arg(long)]
    pub data: PathBuf,
    /// Regressor CSV, required when the dataset has no `x` column.
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    /// JSON config; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub model: Option<Variant>,
    /// Pairs pinned at zero, e.g. "3,1;3,2".
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub keep: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub prop_scale_sigma: Option<f64>,
    #[arg(long)]
    pub prop_scale_rho: Option<f64>,
    /// Keep the proposal scales fixed during burn-in.
    #[arg(long)]
    pub no_adapt: bool,
    /// Independent chains with seeds seed, seed+1, …
    #[arg(long)]
    pub chains: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictiveArg {
    Resimulate,
    PlugIn,
}

impl From<PredictiveArg> for PredictiveMode {
    fn from(v: PredictiveArg) -> Self {
        match v {
            PredictiveArg::Resimulate => PredictiveMode::Resimulate,
            PredictiveArg::PlugIn => PredictiveMode::PlugIn,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Chain directory written by `fit`.
    #[arg(long, required_unless_present = "compare")]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub regressor: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Two chain directories to tabulate side by side.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "chain")]
    pub compare: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Seed for predictive replication.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "resimulate")]
    pub predictive: PredictiveArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args)]
pub struct HrfArgs {
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long = "T", default_value_t = 285)]
    pub len: usize,
    /// Seconds of HRF to sample.
    #[arg(long, default_value_t = 32.0)]
    pub span: f64,
    /// JSON with `onsets` and `durations` arrays (seconds) and optional
    /// `weights`; defaults to the built-in alternating block design.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Rescale the regressor so its largest absolute value equals this.
    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    /// Undershoot ratio.
    #[arg(long = "undershoot")]
    pub c: Option<f64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args)]
pub struct SmoothArgs {
    /// `t,value` series or a dataset with an `x` column.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Prior overrides in a fit config; anything absent comes from the
/// empirical defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperOverrides {
    pub mu: Option<Vec<f64>>,
    pub sigma2_alpha: Option<f64>,
    pub beta_bar: Option<f64>,
    pub sigma2_beta: Option<f64>,
    pub gamma_bar: Option<f64>,
    pub sigma2_gamma: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub a_tau: Option<f64>,
    pub b_tau: Option<f64>,
}

/// Contents of a `fit --config` file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: Option<Variant>,
    pub mask: Option<String>,
    pub c: Option<f64>,
    pub burn: Option<usize>,
    pub keep: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub prop_scale_sigma: Option<f64>,
    pub prop_scale_rho: Option<f64>,
    pub adapt: Option<bool>,
    pub initial_sigma2_delta: Option<f64>,
    pub initial_rho: Option<f64>,
    pub chains: Option<usize>,
    pub hyper: HyperOverrides,
}

/// Fully resolved fit settings, echoed into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveFit {
    pub spec: ModelSpec,
    pub hyper: Hyperparameters,
    pub controls: ChainControls,
    pub chains: usize,
}

/// Applies flag > config file > empirical default precedence.
pub fn resolve_fit(args: &FitArgs, file: &FitConfig, data: &Dataset) -> Result<EffectiveFit> {
    let variant = args.model.or(file.model).unwrap_or(Variant::Dp);
    let mask = match args.mask.as_ref().or(file.mask.as_ref()) {
        Some(text) => ModelSpec::parse_mask(text)?,
        None => Default::default(),
    };
    let spec = ModelSpec::with_mask(variant, mask);
    let mut hyper = ml2_hyperparameters(data, &spec)?;
    let o = &file.hyper;
    if let Some(mu) = &o.mu {
        hyper.mu = mu.clone();
    }
    let fields: [(&mut f64, Option<f64>); 7] = [
        (&mut hyper.sigma2_alpha, o.sigma2_alpha),
        (&mut hyper.beta_bar, o.beta_bar),
        (&mut hyper.sigma2_beta, o.sigma2_beta),
        (&mut hyper.gamma_bar, o.gamma_bar),
        (&mut hyper.sigma2_gamma, o.sigma2_gamma),
        (&mut hyper.a, o.a),
        (&mut hyper.b, o.b),
    ];
    for (slot, v) in fields {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(c) = args.c.or(file.c) {
        hyper.c = c;
        hyper.apply_tau_recipe(spec.free_count(data.regions()));
    }
    if let Some(v) = o.a_tau {
        hyper.a_tau = v;
    }
    if let Some(v) = o.b_tau {
        hyper.b_tau = v;
    }
    hyper.validate(data.regions())?;

    let d = ChainControls::default();
    let controls = ChainControls {
        burn: args.burn.or(file.burn).unwrap_or(d.burn),
        keep: args.keep.or(file.keep).unwrap_or(d.keep),
        thin: args.thin.or(file.thin).unwrap_or(d.thin),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        proposal_scales: [
            args.prop_scale_sigma.or(file.prop_scale_sigma).unwrap_or(d.proposal_scales[0]),
            args.prop_scale_rho.or(file.prop_scale_rho).unwrap_or(d.proposal_scales[1]),
        ],
        adapt: if args.no_adapt { false } else { file.adapt.unwrap_or(d.adapt) },
        initial_sigma2_delta: file.initial_sigma2_delta,
        initial_rho: file.initial_rho,
    };
    controls.validate()?;
    let chains = args.chains.or(file.chains).unwrap_or(1);
    if chains == 0 {
        return Err(Error::InvalidParameter("--chains must be at least 1".into()));
    }
    Ok(EffectiveFit {
        spec,
        hyper,
        controls,
        chains,
    })
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths.iter().map(|p| FileDigest::of(p)).collect()
}

struct ManifestCtx<'a> {
    command: &'a str,
    started: Instant,
}

impl ManifestCtx<'_> {
    fn write(
        &self,
        dir: &Path,
        config: impl Serialize,
        seed: Option<u64>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
    ) -> Result<()> {
        let config = serde_json::to_value(config).map_err(|e| Error::format(dir, e))?;
        let manifest = RunManifest {
            command: self.command.to_string(),
            config,
            seed,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        io::write_manifest(dir, &manifest)?;
        Ok(())
    }
}

/// Loads a dataset, taking the regressor from the file or from `regressor`.
pub fn load_dataset(path: &Path, regressor: Option<&Path>) -> Result<Dataset> {
    let file = io::read_dataset(path)?;
    let x = match (regressor, file.x) {
        (Some(p), _) => io::read_series(p)?,
        (None, Some(x)) => x,
        (None, None) => {
            return Err(Error::InvalidParameter(format!(
                "{} has no `x` column; pass --regressor",
                path.display()
            )))
        }
    };
    Dataset::new(file.y, x)
}

fn inputs_of(data: &Path, regressor: Option<&Path>, config: Option<&Path>) -> Vec<PathBuf> {
    std::iter::once(data)
        .chain(regressor)
        .chain(config)
        .map(Path::to_path_buf)
        .collect()
}

pub fn run(cli: Cli, command: &str) -> Result<()> {
    let ctx = ManifestCtx {
        command,
        started: Instant::now(),
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, &ctx),
        Command::Fit(a) => cmd_fit(&a, &ctx),
        Command::Report(a) => cmd_report(&a, &ctx),
        Command::Hrf(a) => cmd_hrf(&a, &ctx),
        Command::SmoothBold(a) => cmd_smooth(&a, &ctx),
    }
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    variant: SimVariant,
    params: &'a SimulationParams,
    regions: usize,
    len: usize,
    seed: u64,
}

fn cmd_simulate(a: &SimulateArgs, ctx: &ManifestCtx) -> Result<()> {
    let dir = a.out.resolve()?;
    let variant = match a.variant {
        SimKind::Rw => SimVariant::Rw,
        SimKind::Rwprime => SimVariant::RwPrime { phi: a.phi },
        SimKind::Ar => SimVariant::Ar { rho: a.rho },
        SimKind::Dp => SimVariant::Dp { tau: a.tau, rho: a.rho },
    };
    let params: SimulationParams = match &a.params {
        Some(p) => io::read_json(p)?,
        None => SimulationParams::default(),
    };
    let x = match &a.regressor {
        Some(p) => io::read_series(p)?,
        None => default_regressor(a.len)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (data, mut truth) = simulate_dataset(variant, &params, a.regions, &x, &mut rng)?;
    truth.seed = Some(a.seed);
    let outputs = vec![dir.join("data.csv"), dir.join("truth.json")];
    io::write_dataset(&outputs[0], &data)?;
    io::write_json(&outputs[1], &truth)?;
    let inputs: Vec<PathBuf> = a.params.iter().chain(&a.regressor).cloned().collect();
    let config = SimulateConfig {
        variant,
        params: &params,
        regions: a.regions,
        len: x.len(),
        seed: a.seed,
    };
    ctx.write(&dir, config, Some(a.seed), &inputs, &outputs)?;
    log::info!("simulated {} regions × {} scans into {}", a.regions, x.len(), dir.display());
    Ok(())
}

fn cmd_fit(a: &FitArgs, ctx: &ManifestCtx) -> Result<()> {
    let dir = a.out.resolve()?;
    let data = load_dataset(&a.data, a.regressor.as_deref())?;
    let file: FitConfig = match &a.config {
        Some(p) => io::read_json(p)?,
        None => FitConfig::default(),
    };
    let eff = resolve_fit(a, &file, &data)?;
    let inputs = inputs_of(&a.data, a.regressor.as_deref(), a.config.as_deref());

    let jobs: Vec<(PathBuf, ChainControls)> = (0..eff.chains)
        .map(|k| {
            let controls = ChainControls {
                seed: eff.controls.seed + k as u64,
                ..eff.controls.clone()
            };
            let sub = if eff.chains == 1 { dir.clone() } else { dir.join(format!("chain-{k}")) };
            (sub, controls)
        })
        .collect();
    for (sub, _) in &jobs {
        std::fs::create_dir_all(sub).map_err(|e| Error::io(sub, e))?;
    }
    let results: Vec<Result<ChainOutput>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(_, c)| s.spawn(|| run_chain(&data, &eff.spec, &eff.hyper, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::NumericDegeneracy("sampler thread panicked".into()))))
            .collect()
    });
    for ((sub, controls), chain) in jobs.iter().zip(results) {
        let chain = chain?;
        let outputs = io::write_chain(sub, &chain)?;
        let config = EffectiveFit {
            controls: controls.clone(),
            ..eff.clone()
        };
        ctx.write(sub, &config, Some(controls.seed), &inputs, &outputs)?;
        log::info!(
            "chain seed {} done: MH acceptance {:.3}, outputs in {}",
            controls.seed,
            chain.meta.mh_acceptance_rate,
            sub.display()
        );
    }
    Ok(())
}

fn pair_name(p: usize, r: usize) -> String {
    format!("gamma{}{}", p / r + 1, p % r + 1)
}

fn write_csv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for row in rows {
        writeln!(w, "{row}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn predictive_for(chain: &ChainOutput, data: &Dataset, a: &ReportArgs) -> Result<Vec<PredictiveSummary>> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    posterior_predictive(chain, data, a.predictive.into(), a.level, &mut rng)
}

#[derive(Serialize)]
struct ReportConfig {
    level: f64,
    seed: u64,
    predictive: PredictiveMode,
}

fn cmd_report(a: &ReportArgs, ctx: &ManifestCtx) -> Result<()> {
    let dir = a.out.resolve()?;
    let data = load_dataset(&a.data, a.regressor.as_deref())?;
    let config = ReportConfig {
        level: a.level,
        seed: a.seed,
        predictive: a.predictive.into(),
    };
    let mut inputs = inputs_of(&a.data, a.regressor.as_deref(), a.truth.as_deref());

    if let Some(pair) = &a.compare {
        let chains = [io::read_chain(&pair[0])?, io::read_chain(&pair[1])?];
        let mut labels = [0, 1].map(|k| chains[k].meta.spec.variant.name().to_string());
        if labels[0] == labels[1] {
            labels = [format!("{}_a", labels[0]), format!("{}_b", labels[1])];
        }
        let pa = predictive_for(&chains[0], &data, a)?;
        let pb = predictive_for(&chains[1], &data, a)?;
        let header = format!(
            "y,proportion_{0},proportion_{1},length_{0},length_{1}",
            labels[0], labels[1]
        );
        let rows: Vec<String> = pa
            .iter()
            .zip(&pb)
            .enumerate()
            .map(|(i, (x, y))| format!("y{},{},{},{},{}", i + 1, x.coverage, y.coverage, x.mean_length, y.mean_length))
            .collect();
        println!("{header}");
        rows.iter().for_each(|r| println!("{r}"));
        let out = vec![dir.join("compare.csv")];
        write_csv(&out[0], &header, rows)?;
        for p in pair {
            inputs.extend(io::CHAIN_FILES.iter().map(|f| p.join(f)));
        }
        return ctx.write(&dir, config, Some(a.seed), &inputs, &out);
    }

    let chain_dir = a.chain.as_ref().expect("clap enforces --chain");
    let chain = io::read_chain(chain_dir)?;
    inputs.extend(io::CHAIN_FILES.iter().map(|f| chain_dir.join(f)));
    let r = chain.regions();
    let model = chain.meta.spec.variant.name();
    let mut outputs = Vec::new();

    if let Some(tp) = &a.truth {
        let truth: TruthRecord = io::read_json(tp)?;
        let cov = truth_coverage(&chain, &truth, a.level)?;
        let header = std::iter::once("model".to_string())
            .chain((0..r * r).map(|p| pair_name(p, r)))
            .collect::<Vec<_>>()
            .join(",");
        let row = std::iter::once(model.to_string())
            .chain(cov.iter().flatten().map(f64::to_string))
            .collect::<Vec<_>>()
            .join(",");
        let path = dir.join("coverage.csv");
        write_csv(&path, &header, [row])?;
        outputs.push(path);
    }

    let pred = predictive_for(&chain, &data, a)?;
    let path = dir.join("predictive.csv");
    write_csv(
        &path,
        "y,model,proportion,length",
        pred.iter()
            .enumerate()
            .map(|(i, s)| format!("y{},{model},{},{}", i + 1, s.coverage, s.mean_length)),
    )?;
    outputs.push(path);

    let support = positive_support_map(&chain);
    let path = dir.join("support_map.csv");
    let rows = support.values.iter().enumerate().flat_map(|(p, row)| {
        let masked = support.masked[p] as u8;
        row.iter()
            .enumerate()
            .map(move |(t, v)| format!("{},{},{},{v},{masked}", p / r + 1, p % r + 1, t + 1))
    });
    write_csv(&path, "i,j,t,prop,masked", rows)?;
    outputs.push(path);

    let fit = signal::fit_sinusoid(&data.x, &signal::fourier_grid(data.len()))?;
    let corr = connectivity_bold_correlation(&chain, &fit.fitted(data.len()))?;
    let path = dir.join("correlations.csv");
    write_csv(
        &path,
        "i,j,correlation",
        corr.iter()
            .enumerate()
            .map(|(p, c)| format!("{},{},{}", p / r + 1, p % r + 1, opt(*c))),
    )?;
    outputs.push(path);

    let path = dir.join("traces.csv");
    write_csv(
        &path,
        "name,mean,variance,geweke_z",
        trace_summaries(&chain)
            .into_iter()
            .map(|s| format!("{},{},{},{}", s.name, s.mean, s.variance, opt(s.geweke_z))),
    )?;
    outputs.push(path);

    let plot = dir.join("plotdata");
    std::fs::create_dir_all(&plot).map_err(|e| Error::io(&plot, e))?;
    let header = std::iter::once("t".to_string())
        .chain(band_probabilities().iter().map(|q| format!("q{}", q * 100.0)))
        .collect::<Vec<_>>()
        .join(",");
    for (p, bands) in quantile_bands(&chain).into_iter().enumerate() {
        let path = plot.join(format!("{}.csv", pair_name(p, r)));
        let rows = bands.iter().enumerate().map(|(t, q)| {
            std::iter::once((t + 1).to_string())
                .chain(q.iter().map(f64::to_string))
                .collect::<Vec<_>>()
                .join(",")
        });
        write_csv(&path, &header, rows)?;
        outputs.push(path);
    }
    ctx.write(&dir, config, Some(a.seed), &inputs, &outputs)
}

/// Stimulus design file for `hrf --design`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub onsets: Vec<f64>,
    pub durations: Vec<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct HrfConfig {
    hrf: HrfParams,
    delta: f64,
    len: usize,
    span: f64,
    peak: Option<f64>,
    design: StimulusDesign,
}

fn cmd_hrf(a: &HrfArgs, ctx: &ManifestCtx) -> Result<()> {
    let dir = a.out.resolve()?;
    let d = HrfParams::default();
    let hrf = HrfParams {
        a1: a.a1.unwrap_or(d.a1),
        a2: a.a2.unwrap_or(d.a2),
        b1: a.b1.unwrap_or(d.b1),
        b2: a.b2.unwrap_or(d.b2),
        c: a.c.unwrap_or(d.c),
    };
    hrf.validate()?;
    if !(a.span >= 0.0) || !(a.delta > 0.0) {
        return Err(Error::InvalidParameter("span must be ≥ 0 and delta > 0".into()));
    }
    let design = match &a.design {
        Some(p) => {
            let f: DesignFile = io::read_json(p)?;
            let s = StimulusDesign::new(f.onsets, f.durations, a.delta, a.len)?;
            match f.weights {
                Some(w) => s.with_weights(w)?,
                None => s,
            }
        }
        None => signal::block_design(6, 18, 2.0, a.delta, a.len)?,
    };
    let steps = (a.span / a.delta).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * a.delta).collect();
    let values = times.iter().map(|t| signal::glover_hrf(&hrf, *t)).collect::<Result<Vec<_>>>()?;
    let mut x = signal::convolve_stimulus(&design, &hrf)?;
    if let Some(peak) = a.peak {
        let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            return Err(Error::DegenerateSeries("regressor is identically zero".into()));
        }
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
    let outputs = vec![dir.join("hrf.csv"), dir.join("x.csv")];
    io::write_series(&outputs[0], &times, &values)?;
    let scans: Vec<f64> = (1..=x.len()).map(|t| t as f64).collect();
    io::write_series(&outputs[1], &scans, &x)?;
    let config = HrfConfig {
        hrf,
        delta: a.delta,
        len: a.len,
        span: a.span,
        peak: a.peak,
        design,
    };
    let inputs: Vec<PathBuf> = a.design.iter().cloned().collect();
    ctx.write(&dir, config, None, &inputs, &outputs)
}

fn cmd_smooth(a: &SmoothArgs, ctx: &ManifestCtx) -> Result<()> {
    let dir = a.out.resolve()?;
    let x = io::read_series(&a.input)?;
    let fit = signal::fit_sinusoid(&x, &signal::fourier_grid(x.len()))?;
    let scans: Vec<f64> = (1..=x.len()).map(|t| t as f64).collect();
    let outputs = vec![dir.join("smooth.csv"), dir.join("sinusoid.json")];
    io::write_series(&outputs[0], &scans, &fit.fitted(x.len()))?;
    io::write_json(&outputs[1], &fit)?;
    println!(
        "omega={} beta1={} beta2={} A={} phi={}",
        fit.omega_hat, fit.beta1, fit.beta2, fit.amplitude, fit.phase
    );
    ctx.write(&dir, fit, None, std::slice::from_ref(&a.input), &outputs)
}
