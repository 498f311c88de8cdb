use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qem_core::basis::{compensation_decompose, decompose, inverse_decompose};
use qem_core::cost::{cost_curve, Family, RateSet};
use qem_core::engine::{exact_extrapolation, run_repetitions, sampled_extrapolation};
use qem_core::gst::{estimate, simulate_gst, stability_report, GaugeChoice, GstEstimate, GstRecord, Shots, StabilityReport};
use qem_core::noise::site_seed;
use qem_core::{
    Circuit, Device, Gate, NoiseKind, NoiseSpec, OperationModel, QemError, QuasiDecomposition, SamplingPlan, MAX_QUBITS,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{
    DecompositionChoice, ExperimentConfig, MethodConfig, ModelChoice, PlacementChoice,
};
use crate::error::CliError;
use crate::output::{fmt_f64, to_json, with_comment, Histogram, Provenance, Sink};

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: usize,
}

impl Globals {
    fn read_config(&self) -> Result<Option<ExperimentConfig>, CliError> {
        match &self.config {
            None => Ok(None),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text).map(Some)
            }
        }
    }
}

/// Parses a snake_case name into any serde enum.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// A noise family, or `none` for a noiseless device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseArg {
    None,
    Kind(NoiseKind),
}

impl Serialize for NoiseArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            NoiseArg::None => "none",
            NoiseArg::Kind(k) => k.name(),
        })
    }
}

impl NoiseArg {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "none" {
            Ok(NoiseArg::None)
        } else {
            parse_enum(s).map(NoiseArg::Kind)
        }
    }
}

fn build_device(noise: NoiseArg, eps: f64, placement: PlacementChoice, seed: Option<u64>) -> Result<Device, CliError> {
    match noise {
        NoiseArg::None => Ok(Device::ideal()),
        NoiseArg::Kind(kind) => {
            let mut spec = NoiseSpec::new(kind, eps);
            if let Some(s) = seed {
                spec = spec.with_seed(s);
            }
            spec.validate()?;
            Ok(Device::new(spec, placement.build())?)
        }
    }
}

fn config_device(cfg: &ExperimentConfig) -> Result<Device, CliError> {
    match &cfg.noise {
        None => Ok(Device::ideal()),
        Some(spec) => Ok(Device::new(spec.clone(), cfg.placement.build())?),
    }
}

fn check_capacity(circuit: &Circuit) -> Result<(), CliError> {
    if circuit.n() > MAX_QUBITS {
        return Err(QemError::Capacity {
            qubits: circuit.n(),
            limit: MAX_QUBITS,
        }
        .into());
    }
    Ok(())
}

fn tomography(device: &Device, gates: &[Gate], shots: Option<u64>, seed: u64) -> Result<(GstRecord, GstEstimate), CliError> {
    let shots = shots.map_or(Shots::Exact, Shots::Count);
    let record = simulate_gst(device, gates, shots, seed)?;
    let est = estimate(&record, &GaugeChoice::ideal_states())?;
    Ok((record, est))
}

#[derive(Debug, Clone, Serialize)]
struct CircuitSummary {
    qubits: usize,
    probe: usize,
    gates: usize,
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    provenance: Provenance,
    circuit: CircuitSummary,
    method: MethodConfig,
    ideal_value: f64,
    /// The value the estimator converges to with unlimited trials.
    estimator_limit: f64,
    cost: f64,
    trials_per_repetition: u64,
    repetitions: usize,
    mean: f64,
    std_dev: f64,
    std_error: f64,
    predicted_sigma: f64,
    /// `(mean - ideal) / std_error`.
    bias_in_std_errors: Option<f64>,
    mean_absolute_error: f64,
    histogram: Histogram,
}

struct Estimates {
    values: Vec<f64>,
    limit: f64,
    cost: f64,
    predicted_sigma: f64,
}

/// `qem run`: repeated estimates of one experiment.
pub fn run(globals: &Globals) -> Result<(), CliError> {
    let mut cfg = globals
        .read_config()?
        .ok_or_else(|| CliError::Config("`run` needs --config PATH".into()))?;
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    let out_dir = globals
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("qem-out"));
    cfg.output_dir = None;
    let provenance = Provenance::new(&cfg, cfg.seed)?;

    let circuit = cfg.build_circuit()?;
    check_capacity(&circuit)?;
    let device = config_device(&cfg)?;
    let ideal = circuit.ideal_expectation()?;
    let est = match &cfg.method {
        MethodConfig::None {} => {
            let plan = SamplingPlan::unmitigated(&device.attach(&circuit)?)?;
            repeated(&plan, &cfg, globals.threads)?
        }
        MethodConfig::QuasiProb {
            decomposition,
            lambda,
            model,
            gst_shots,
        } => {
            let method = decomposition.mitigation(*lambda);
            let plan = match model {
                ModelChoice::Device => SamplingPlan::mitigated(&circuit, &device, &device, method)?,
                ModelChoice::Gst => {
                    let gates: Vec<Gate> = circuit.gate_counts().into_keys().collect();
                    let (_, est) = tomography(&device, &gates, *gst_shots, site_seed(cfg.seed, "tomography"))?;
                    SamplingPlan::mitigated(&circuit, &device, &est, method)?
                }
            };
            repeated(&plan, &cfg, globals.threads)?
        }
        MethodConfig::Extrapolation { model, r } => extrapolated(&circuit, &device, (*model).into(), *r, &cfg, globals.threads)?,
    };

    let reps = est.values.len();
    let mean = est.values.iter().sum::<f64>() / reps as f64;
    let var = if reps > 1 {
        est.values.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
    } else {
        0.0
    };
    let std_error = (var / reps as f64).sqrt();
    let histogram = Histogram::new(&est.values, cfg.histogram_bins);
    let summary = RunSummary {
        provenance: provenance.clone(),
        circuit: CircuitSummary {
            qubits: circuit.n(),
            probe: circuit.probe(),
            gates: circuit.len(),
        },
        method: cfg.method.clone(),
        ideal_value: ideal,
        estimator_limit: est.limit,
        cost: est.cost,
        trials_per_repetition: cfg.trials,
        repetitions: reps,
        mean,
        std_dev: var.sqrt(),
        std_error,
        predicted_sigma: est.predicted_sigma,
        bias_in_std_errors: (std_error > 0.0).then(|| (mean - ideal) / std_error),
        mean_absolute_error: est.values.iter().map(|e| (e - ideal).abs()).sum::<f64>() / reps as f64,
        histogram: histogram.clone(),
    };

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["repetition", "estimate"])?;
    for (i, v) in est.values.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(*v)])?;
    }
    let estimates_csv = with_comment(&provenance, w)?;

    let sink = Sink::new(Some(out_dir));
    sink.emit("histogram.csv", &histogram.to_csv(&provenance)?)?;
    sink.emit("estimates.csv", &estimates_csv)?;
    sink.emit("summary.json", &to_json(&summary)?)?;
    println!(
        "mean {} +- {} (ideal {}, cost {})",
        fmt_f64(mean),
        fmt_f64(std_error),
        fmt_f64(ideal),
        fmt_f64(est.cost)
    );
    Ok(())
}

fn repeated(plan: &SamplingPlan, cfg: &ExperimentConfig, threads: usize) -> Result<Estimates, CliError> {
    let s = run_repetitions(plan, cfg.trials, cfg.repetitions, cfg.seed, threads)?;
    Ok(Estimates {
        values: s.estimates,
        limit: s.exact_value,
        cost: s.cost,
        predicted_sigma: s.predicted_sigma,
    })
}

fn extrapolated(
    circuit: &Circuit,
    device: &Device,
    kind: qem_core::Extrapolation,
    r: f64,
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<Estimates, CliError> {
    let exact = exact_extrapolation(circuit, device, r, kind)?;
    let cost = SamplingPlan::boosted(circuit, device, r)?.cost();
    let reps = cfg.repetitions;
    let threads = threads.clamp(1, reps);
    let mut results: Vec<Option<Result<(f64, f64), QemError>>> = vec![None; reps];
    std::thread::scope(|scope| {
        let mut first = 0usize;
        for chunk in results.chunks_mut(reps.div_ceil(threads)) {
            let start = first;
            first += chunk.len();
            scope.spawn(move || {
                for (i, out) in chunk.iter_mut().enumerate() {
                    let seed = site_seed(cfg.seed, &format!("repetition {}", start + i));
                    *out = Some(
                        sampled_extrapolation(circuit, device, r, kind, cfg.trials, seed).map(|e| (e.estimate, e.sigma)),
                    );
                }
            });
        }
    });
    let results: Vec<(f64, f64)> = results
        .into_iter()
        .map(|r| r.expect("every repetition ran"))
        .collect::<Result<_, _>>()?;
    let predicted_sigma = results.iter().map(|r| r.1).sum::<f64>() / reps as f64;
    Ok(Estimates {
        values: results.into_iter().map(|r| r.0).collect(),
        limit: exact.estimate,
        cost,
        predicted_sigma,
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GstArgs {
    /// Noise family of the simulated device, or `none`.
    #[arg(long, default_value = "depolarizing", value_parser = NoiseArg::parse)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = PlacementChoice::SimulationSimple)]
    pub placement: PlacementChoice,
    /// Gates to characterise besides the sixteen basis operations.
    #[arg(long, value_delimiter = ',', default_value = "h,s,t,cnot")]
    pub gates: Vec<Gate>,
    /// Shots per expectation value; exact expectations when omitted.
    #[arg(long)]
    pub shots: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
struct GstOutput {
    provenance: Provenance,
    record: GstRecord,
    estimate: GstEstimate,
    stability: StabilityReport,
}

/// `qem gst`: tomography of a simulated device. With `--config`, the device
/// and gates come from the experiment.
pub fn gst(globals: &Globals, args: &GstArgs) -> Result<(), CliError> {
    let seed = globals.seed.unwrap_or(0);
    let (device, gates, provenance) = match globals.read_config()? {
        Some(cfg) => {
            let gates: Vec<Gate> = cfg.build_circuit()?.gate_counts().into_keys().collect();
            let shots = args.shots;
            (config_device(&cfg)?, gates, Provenance::new(&(cfg, shots), seed)?)
        }
        None => (
            build_device(args.noise, args.eps, args.placement, globals.seed)?,
            args.gates.clone(),
            Provenance::new(args, seed)?,
        ),
    };
    if matches!(args.shots, Some(0)) {
        return Err(CliError::Config("--shots must be positive".into()));
    }
    let (record, estimate) = tomography(&device, &gates, args.shots, seed)?;
    let stability = stability_report(&device, &estimate, &record)?;
    let doc = GstOutput {
        provenance,
        record,
        estimate,
        stability,
    };
    Sink::new(globals.out.clone()).emit("gst.json", &to_json(&doc)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DecomposeMethod {
    /// The ideal gate over the basis.
    Direct,
    Inverse,
    Compensation,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub gate: Gate,
    /// Noise family of the device, or `none` for ideal basis operations.
    #[arg(long, default_value = "none", value_parser = NoiseArg::parse)]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = PlacementChoice::SimulationSimple)]
    pub placement: PlacementChoice,
    #[arg(long, value_enum, default_value_t = DecomposeMethod::Direct)]
    pub method: DecomposeMethod,
    /// Fixed weight of the noisy gate for `compensation`; optimised when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Decompose with the device itself or a tomography estimate of it.
    #[arg(long, value_enum, default_value_t = ModelChoice::Device)]
    pub model: ModelChoice,
}

#[derive(Debug, Clone, Serialize)]
struct DecomposeOutput {
    provenance: Provenance,
    gate: Gate,
    arity: usize,
    noise: NoiseArg,
    method: DecomposeMethod,
    model: ModelChoice,
    decomposition: QuasiDecomposition,
}

/// `qem decompose`: the quasi-probability decomposition of one gate.
pub fn decompose_gate(globals: &Globals, args: &DecomposeArgs) -> Result<(), CliError> {
    let seed = globals.seed.unwrap_or(0);
    let device = build_device(args.noise, args.eps, args.placement, globals.seed)?;
    let est;
    let model: &dyn OperationModel = match args.model {
        ModelChoice::Device => &device,
        ModelChoice::Gst => {
            est = tomography(&device, &[args.gate], None, seed)?.1;
            &est
        }
    };
    let ideal = args.gate.ptm();
    let bases = vec![model.basis(); args.gate.arity()];
    let actual = || match args.gate {
        Gate::Basis(i) => Ok(model.basis().get(i as usize).clone()),
        g => model.gate(g),
    };
    let decomposition = match args.method {
        DecomposeMethod::Direct => decompose(&ideal, &bases)?,
        DecomposeMethod::Inverse => inverse_decompose(&ideal, &actual()?, &bases)?,
        DecomposeMethod::Compensation => {
            let lambda = DecompositionChoice::Compensation.mitigation(args.lambda);
            let qem_core::Mitigation::Compensation { lambda } = lambda else {
                unreachable!("compensation choice yields compensation")
            };
            compensation_decompose(&ideal, &actual()?, &bases, lambda)?
        }
    };
    let doc = DecomposeOutput {
        provenance: Provenance::new(args, seed)?,
        gate: args.gate,
        arity: args.gate.arity(),
        noise: args.noise,
        method: args.method,
        model: args.model,
        decomposition,
    };
    Sink::new(globals.out.clone()).emit("decompose.json", &to_json(&doc)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RatesChoice {
    /// Two-qubit gates 1e-3, single-qubit operations 1e-4.
    IonTrap,
    /// Ten times lower than `ion_trap`.
    TenTimesBetter,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CostArgs {
    #[arg(long, default_value = "swap_test", value_parser = parse_enum::<Family>)]
    pub family: Family,
    /// A single qubit count; otherwise every valid size in `--nq-min..=--nq-max`.
    #[arg(long, conflicts_with_all = ["nq_min", "nq_max"])]
    pub nq: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub nq_min: usize,
    #[arg(long, default_value_t = 51)]
    pub nq_max: usize,
    #[arg(long, value_enum, default_value_t = RatesChoice::IonTrap)]
    pub rates: RatesChoice,
    #[arg(long, default_value = "inhom_pauli", value_parser = parse_enum::<NoiseKind>)]
    pub noise: NoiseKind,
}

/// `qem cost`: circuit cost `C` and `C^2` against qubit count.
pub fn cost(globals: &Globals, args: &CostArgs) -> Result<(), CliError> {
    let rates = match args.rates {
        RatesChoice::IonTrap => RateSet::ion_trap(args.noise),
        RatesChoice::TenTimesBetter => RateSet::ten_times_better(args.noise),
    };
    let sizes = match args.nq {
        Some(nq) => vec![nq],
        None => args.family.sizes(args.nq_min, args.nq_max),
    };
    if sizes.is_empty() {
        return Err(CliError::Config(format!(
            "no valid {} sizes in {}..={}",
            args.family.name(),
            args.nq_min,
            args.nq_max
        )));
    }
    let rows = cost_curve(args.family, &rates, &sizes)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["family", "rates", "noise", "N_q", "C", "C2"])?;
    for r in &rows {
        w.write_record([
            r.family.clone(),
            r.rates.clone(),
            r.noise.clone(),
            r.nq.to_string(),
            fmt_f64(r.cost),
            fmt_f64(r.cost_squared),
        ])?;
    }
    let provenance = Provenance::new(args, globals.seed.unwrap_or(0))?;
    Sink::new(globals.out.clone()).emit("cost.csv", &with_comment(&provenance, w)?)
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CircuitArgs {
    #[arg(long, default_value = "swap_test", value_parser = parse_enum::<Family>)]
    pub family: Family,
    #[arg(long)]
    pub nq: usize,
}

/// `qem circuit`: the text form of a built-in circuit.
pub fn circuit(globals: &Globals, args: &CircuitArgs) -> Result<(), CliError> {
    let c = args.family.build(args.nq)?;
    let provenance = Provenance::new(args, globals.seed.unwrap_or(0))?;
    let text = c.to_text();
    let (header, body) = text.split_once('\n').unwrap_or((&text, ""));
    let doc = format!("{header}  {}\n{body}", provenance.comment());
    Sink::new(globals.out.clone()).emit("circuit.txt", &doc)
}
