//! Command-line harness: experiment dispatch, CSV/JSON persistence, and
//! reproducibility manifests.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error,
//! 3 failed verdict of a check-type subcommand.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use hvpe::analysis::{
    carre_scaling_study, g_convergence_study, mild_convergence_study, sum_lemma_eval,
    sum_lemma_study, uniqueness_window_check, AnalysisError, RateStudy, Verdict,
};
use hvpe::chaos::{poisson_residual, ChaosError, GeneratorParams};
use hvpe::config::{
    fmt_f64, resolve, sha256_hex, ConfigError, HarnessConfig, Overrides, RunManifest,
};
use hvpe::dynamics::{
    realized_qv, simulate_replica, DynamicsError, Initial, Scheme, SimConfig,
};
use hvpe::measure::{sample_mu, MeasureError};
use hvpe::nonlinearity::{b_fast, b_truncated, NonlinearityError};
use hvpe::spectral::{disk_modes, FieldError, ModeIndex, SpectralField};
use hvpe::stats::ks_test_standard_normal;

#[derive(Parser, Debug)]
#[command(name = "hvpe", version, about = "Spectral Galerkin toolkit for the hyperviscous stochastic primitive equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonOpts {
    /// Flat key-value config file; command-line flags override it
    #[arg(long, global = false)]
    config: Option<PathBuf>,
    /// Hyperviscosity exponent θ
    #[arg(long)]
    theta: Option<f64>,
    /// Galerkin cutoff
    #[arg(long)]
    m: Option<u32>,
    /// Time horizon
    #[arg(long = "T")]
    t_final: Option<f64>,
    /// Time step
    #[arg(long)]
    dt: Option<f64>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Number of replicas
    #[arg(long)]
    ensemble: Option<usize>,
    /// Integrator: exp_euler or splitting
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Record every n-th step
    #[arg(long)]
    record_stride: Option<usize>,
    /// Worker-pool size (recorded; execution is single-core)
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (falls back to $OUT_DIR, then '.')
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Use the transform-based nonlinearity
    #[arg(long)]
    fast: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one μ-sample and write it as a snapshot file
    Sample {
        #[command(flatten)]
        common: CommonOpts,
        /// Snapshot path (default: <out-dir>/sample.txt)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate an ensemble and write observables.csv plus snapshots
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Check invariance of μ: per-mode KS and variance at the horizon
    Invariance {
        #[command(flatten)]
        common: CommonOpts,
        /// Per-family significance level before Bonferroni correction
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
    },
    /// Verify the exact Poisson identity per mode
    PoissonCheck {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 1e-12)]
        tolerance: f64,
    },
    /// Carré-du-champ scaling along the diagonal
    Scaling {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 2)]
        j_min: u32,
        #[arg(long, default_value_t = 24)]
        j_max: u32,
    },
    /// Coupled Cauchy-rate study of the drift integrals
    Converge {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 8, 16, 32])]
        m_values: Vec<u32>,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        zeta: f64,
    },
    /// Mild-integral rate study (|k|, m, and Hölder fits)
    MildConverge {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_delimiter = ',', default_values_t = [4u32, 8, 16])]
        m_values: Vec<u32>,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
    },
    /// Comparison-sum evaluation and diagonal slope fit
    SumLemma {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 512)]
        cutoff: u32,
        #[arg(long, default_value_t = 2)]
        j_min: u32,
        #[arg(long, default_value_t = 32)]
        j_max: u32,
    },
    /// Realized quadratic variation of the martingale part against 2t·|k|^{2θ}
    QvCheck {
        #[command(flatten)]
        common: CommonOpts,
        /// Relative tolerance on the ensemble mean
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
    },
    /// Uniqueness-window report and coupled-contraction diagnostic
    UniquenessWindow {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 16, 32])]
        m_values: Vec<u32>,
        /// Required fraction of replicas with monotone decrease
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
    },
    /// Time the nonlinearity evaluators
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_delimiter = ',', default_values_t = [8u32, 16, 32])]
        m_values: Vec<u32>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
}

macro_rules! runtime_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(
    std::io::Error,
    FieldError,
    MeasureError,
    NonlinearityError,
    ChaosError,
    FieldWriteError
);

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::BadInput(_) => CliError::Config(e.to_string()),
            AnalysisError::Dynamics(inner) => inner.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Wrapper so the macro can cover snapshot-write failures uniformly.
#[derive(Debug)]
struct FieldWriteError(String);

impl std::fmt::Display for FieldWriteError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}

fn overrides_of(common: &CommonOpts) -> Overrides {
    Overrides {
        theta: common.theta,
        m: common.m,
        t_final: common.t_final,
        dt: common.dt,
        seed: common.seed,
        ensemble: common.ensemble,
        scheme: common.scheme,
        record_stride: common.record_stride,
        fast: common.fast,
        threads: common.threads,
        out_dir: common.out_dir.clone(),
    }
}

fn setup(common: &CommonOpts) -> Result<(SimConfig, HarnessConfig), CliError> {
    let (sim, harness) = resolve(common.config.as_deref(), &overrides_of(common))?;
    std::fs::create_dir_all(&harness.out_dir)?;
    Ok((sim, harness))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Plot descriptor naming the columns of a study CSV.
fn plot_descriptor(title: &str, csv: &str) -> String {
    serde_json::json!({
        "csv": csv,
        "x": "axis",
        "y": "statistic",
        "yerr": "stderr",
        "xscale": "log",
        "yscale": "log",
        "title": title,
    })
    .to_string()
}

fn write_study(
    dir: &Path,
    manifest: &mut RunManifest,
    stem: &str,
    title: &str,
    study: &RateStudy,
) -> Result<(), CliError> {
    let csv = dir.join(format!("{stem}.csv"));
    let mut lines = vec!["axis,statistic,stderr".to_string()];
    for i in 0..study.axis.len() {
        lines.push(format!(
            "{},{},{}",
            fmt_f64(study.axis[i]),
            fmt_f64(study.values[i]),
            fmt_f64(study.stderrs[i])
        ));
    }
    write_lines(&csv, lines)?;
    manifest.add_output(&csv)?;
    let json = dir.join(format!("{stem}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(study).expect("study serializes"))?;
    manifest.add_output(&json)?;
    let plot = dir.join(format!("{stem}.plot.json"));
    std::fs::write(&plot, plot_descriptor(title, &format!("{stem}.csv")))?;
    manifest.add_output(&plot)?;
    println!(
        "{title}: slope {:.4} (target {} ± {}), r² {:.4} -> {}",
        study.fit.slope, study.target_exponent, study.tolerance, study.fit.r_squared, study.verdict
    );
    Ok(())
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Fail => 3,
        _ => 0,
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Sample { common, out } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("sample", &sim, &harness);
            let path = out.unwrap_or_else(|| harness.out_dir.join("sample.txt"));
            let field = sample_mu(sim.m, sim.master_seed)?;
            let mut buf = Vec::new();
            field
                .write_snapshot(&mut buf)
                .map_err(|e| FieldWriteError(e.to_string()))?;
            std::fs::write(&path, &buf)?;
            manifest.add_output(&path)?;
            manifest.finish(&harness.out_dir)?;
            println!("wrote {} (sha256 {})", path.display(), sha256_hex(&buf));
            Ok(0)
        }
        Command::Simulate { common } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("simulate", &sim, &harness);
            let csv_path = harness.out_dir.join("observables.csv");
            let mut w = BufWriter::new(File::create(&csv_path)?);
            writeln!(w, "t,replica,mode_k1,mode_k2,omega,G,G_mild,M")?;
            let modes = disk_modes(sim.m);
            let mut snapshot_paths = Vec::new();
            for r in 0..sim.ensemble as u64 {
                let traj = simulate_replica(&sim, &Initial::SampleMu, r)?;
                for i in 0..traj.len() {
                    for &k in &modes {
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{},{}",
                            fmt_f64(traj.times[i]),
                            r,
                            k.k1(),
                            k.k2(),
                            fmt_f64(traj.states[i].get(k)),
                            fmt_f64(traj.g[i].get(k)),
                            fmt_f64(traj.g_mild[i].get(k)),
                            fmt_f64(traj.mart[i].get(k)),
                        )?;
                    }
                }
                if r == 0 {
                    for (i, state) in traj.states.iter().enumerate() {
                        let p = harness.out_dir.join(format!("state_r0_{i:06}.txt"));
                        let mut buf = Vec::new();
                        state
                            .write_snapshot(&mut buf)
                            .map_err(|e| FieldWriteError(e.to_string()))?;
                        std::fs::write(&p, &buf)?;
                        snapshot_paths.push(p);
                    }
                }
            }
            w.flush()?;
            manifest.add_output(&csv_path)?;
            for p in &snapshot_paths {
                manifest.add_output(p)?;
            }
            manifest.finish(&harness.out_dir)?;
            println!(
                "simulated {} replicas, {} recorded times each",
                sim.ensemble,
                sim.num_steps() / sim.record_stride as u64 + 1
            );
            Ok(0)
        }
        Command::Invariance { common, alpha } => {
            let (mut sim, harness) = setup(&common)?;
            // only the endpoint marginals are tested
            sim.record_stride = (sim.num_steps().max(1)) as usize;
            let mut manifest = RunManifest::start("invariance", &sim, &harness);
            let modes = disk_modes(sim.m);
            let mut finals: Vec<Vec<f64>> = vec![Vec::with_capacity(sim.ensemble); modes.len()];
            for r in 0..sim.ensemble as u64 {
                let traj = simulate_replica(&sim, &Initial::SampleMu, r)?;
                let state = traj.final_state();
                for (j, &k) in modes.iter().enumerate() {
                    finals[j].push(state.get(k));
                }
            }
            let n = sim.ensemble as f64;
            let bonferroni = alpha / modes.len() as f64;
            let var_se = (2.0 / (n - 1.0)).sqrt();
            let mut lines = vec!["k1,k2,mean,variance,ks_statistic,p_value".to_string()];
            let mut ks_fail = 0usize;
            let mut var_fail = 0usize;
            for (j, &k) in modes.iter().enumerate() {
                let xs = &finals[j];
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
                let ks = ks_test_standard_normal(xs);
                let p = ks.p_value.unwrap_or(f64::NAN);
                if p < bonferroni {
                    ks_fail += 1;
                }
                if (var - 1.0).abs() > 3.0 * var_se {
                    var_fail += 1;
                }
                lines.push(format!(
                    "{},{},{},{},{},{}",
                    k.k1(),
                    k.k2(),
                    fmt_f64(mean),
                    fmt_f64(var),
                    fmt_f64(ks.statistic),
                    fmt_f64(p)
                ));
            }
            let csv = harness.out_dir.join("invariance.csv");
            write_lines(&csv, lines)?;
            manifest.add_output(&csv)?;
            let pass = ks_fail == 0 && var_fail == 0;
            let verdict = harness.out_dir.join("verdict.json");
            std::fs::write(
                &verdict,
                serde_json::json!({
                    "alpha": alpha,
                    "bonferroni_alpha": bonferroni,
                    "modes": modes.len(),
                    "ks_rejections": ks_fail,
                    "variance_rejections": var_fail,
                    "pass": pass,
                })
                .to_string(),
            )?;
            manifest.add_output(&verdict)?;
            manifest.finish(&harness.out_dir)?;
            println!(
                "invariance: {} modes, {ks_fail} KS rejections at {bonferroni:.2e}, \
                 {var_fail} variance rejections -> {}",
                modes.len(),
                if pass { "pass" } else { "fail" }
            );
            Ok(if pass { 0 } else { 3 })
        }
        Command::PoissonCheck { common, tolerance } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("poisson-check", &sim, &harness);
            let params = GeneratorParams::new(sim.theta)?;
            let mut lines = vec!["k1,k2,m,theta,residual".to_string()];
            let mut worst = 0.0f64;
            for k in disk_modes(sim.m) {
                let r = poisson_residual(k, sim.m, params)?;
                worst = worst.max(r);
                lines.push(format!(
                    "{},{},{},{},{}",
                    k.k1(),
                    k.k2(),
                    sim.m,
                    fmt_f64(sim.theta),
                    fmt_f64(r)
                ));
            }
            let csv = harness.out_dir.join("poisson.csv");
            write_lines(&csv, lines)?;
            manifest.add_output(&csv)?;
            manifest.finish(&harness.out_dir)?;
            let pass = worst <= tolerance;
            println!(
                "poisson-check: max residual {worst:.3e} (tolerance {tolerance:.1e}) -> {}",
                if pass { "pass" } else { "fail" }
            );
            Ok(if pass { 0 } else { 3 })
        }
        Command::Scaling {
            common,
            j_min,
            j_max,
        } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("scaling", &sim, &harness);
            if j_min < 1 || j_max <= j_min {
                return Err(CliError::Config(format!(
                    "need 1 <= j_min < j_max, got {j_min}..{j_max}"
                )));
            }
            let params = GeneratorParams::new(sim.theta)?;
            let mut lines = vec!["k1,k2,m,theta,expected_carre".to_string()];
            for j in j_min..=j_max {
                let k = ModeIndex::new(j, j).map_err(|e| CliError::Config(e.to_string()))?;
                let v = hvpe::chaos::expected_carre(k, sim.m, params)?;
                lines.push(format!(
                    "{},{},{},{},{}",
                    j,
                    j,
                    sim.m,
                    fmt_f64(sim.theta),
                    fmt_f64(v)
                ));
            }
            let csv = harness.out_dir.join("scaling.csv");
            write_lines(&csv, lines)?;
            manifest.add_output(&csv)?;
            let study = carre_scaling_study(sim.theta, sim.m, j_min..=j_max, 6.0 - 2.0 * sim.theta)?;
            write_study(
                &harness.out_dir,
                &mut manifest,
                "study",
                "carre-du-champ diagonal scaling",
                &study,
            )?;
            manifest.finish(&harness.out_dir)?;
            Ok(verdict_code(study.verdict))
        }
        Command::Converge {
            common,
            m_values,
            zeta,
        } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("converge", &sim, &harness);
            let study = g_convergence_study(&sim, &m_values, zeta, &[sim.master_seed])?;
            write_study(
                &harness.out_dir,
                &mut manifest,
                "study",
                "coupled drift-integral Cauchy rate",
                &study,
            )?;
            manifest.finish(&harness.out_dir)?;
            Ok(verdict_code(study.verdict))
        }
        Command::MildConverge {
            common,
            m_values,
            epsilon,
        } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("mild-converge", &sim, &harness);
            let study = mild_convergence_study(&sim, &m_values, epsilon, &[sim.master_seed])?;
            write_study(
                &harness.out_dir,
                &mut manifest,
                "study_k",
                "mild integral |k| scaling",
                &study.k_scaling,
            )?;
            write_study(
                &harness.out_dir,
                &mut manifest,
                "study_m",
                "mild integral m decay",
                &study.m_decay,
            )?;
            write_study(
                &harness.out_dir,
                &mut manifest,
                "study_holder",
                "mild integral Hölder-in-time",
                &study.holder,
            )?;
            let json = harness.out_dir.join("study.json");
            std::fs::write(&json, serde_json::to_string_pretty(&study).expect("serializes"))?;
            manifest.add_output(&json)?;
            manifest.finish(&harness.out_dir)?;
            let worst = [
                study.k_scaling.verdict,
                study.m_decay.verdict,
                study.holder.verdict,
            ]
            .into_iter()
            .map(verdict_code)
            .max()
            .unwrap_or(0);
            Ok(worst)
        }
        Command::SumLemma {
            common,
            cutoff,
            j_min,
            j_max,
        } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("sum-lemma", &sim, &harness);
            if j_min < 1 || j_max <= j_min {
                return Err(CliError::Config(format!(
                    "need 1 <= j_min < j_max, got {j_min}..{j_max}"
                )));
            }
            let probe = sum_lemma_eval(
                ModeIndex::new(1, 1).expect("valid mode"),
                sim.theta,
                cutoff,
            )?;
            println!(
                "sum at k=(1,1): {} (last shell {:.2e}, tail flag {})",
                fmt_f64(probe.value),
                probe.last_shell_fraction,
                probe.tail_flagged
            );
            let study = sum_lemma_study(sim.theta, j_min..=j_max, cutoff)?;
            write_study(
                &harness.out_dir,
                &mut manifest,
                "study",
                "comparison sum diagonal scaling",
                &study,
            )?;
            manifest.finish(&harness.out_dir)?;
            Ok(verdict_code(study.verdict))
        }
        Command::QvCheck { common, tolerance } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("qv-check", &sim, &harness);
            let phi = SpectralField::basis(sim.m, ModeIndex::new(1, 1).expect("valid mode"))?;
            let mut lines = vec!["replica,realized,expected".to_string()];
            let mut sum = 0.0;
            let mut expected = 0.0;
            for r in 0..sim.ensemble as u64 {
                let traj = simulate_replica(&sim, &Initial::SampleMu, r)?;
                let qv = realized_qv(&traj, &phi, sim.theta)?;
                sum += qv.realized;
                expected = qv.expected;
                lines.push(format!(
                    "{},{},{}",
                    r,
                    fmt_f64(qv.realized),
                    fmt_f64(qv.expected)
                ));
            }
            let csv = harness.out_dir.join("qv.csv");
            write_lines(&csv, lines)?;
            manifest.add_output(&csv)?;
            manifest.finish(&harness.out_dir)?;
            let mean = sum / sim.ensemble as f64;
            let rel = (mean / expected - 1.0).abs();
            let pass = rel <= tolerance;
            println!(
                "qv-check: mean realized {mean:.6}, expected {expected:.6}, \
                 relative error {rel:.3} (tolerance {tolerance}) -> {}",
                if pass { "pass" } else { "fail" }
            );
            Ok(if pass { 0 } else { 3 })
        }
        Command::UniquenessWindow {
            common,
            m_values,
            threshold,
        } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("uniqueness-window", &sim, &harness);
            let report = uniqueness_window_check(&sim, &m_values)?;
            let json = harness.out_dir.join("report.json");
            std::fs::write(&json, serde_json::to_string_pretty(&report).expect("serializes"))?;
            manifest.add_output(&json)?;
            manifest.finish(&harness.out_dir)?;
            match report.window {
                None => {
                    println!("uniqueness-window: {}", report.note);
                    Ok(0)
                }
                Some((lo, hi)) => {
                    let frac = report.monotone_fraction.unwrap_or(0.0);
                    let pass = frac >= threshold;
                    println!(
                        "uniqueness-window: window ({lo}, {hi}), xi {}, monotone fraction \
                         {frac:.3} (threshold {threshold}) -> {}",
                        report.xi.unwrap_or(f64::NAN),
                        if pass { "pass" } else { "fail" }
                    );
                    Ok(if pass { 0 } else { 3 })
                }
            }
        }
        Command::Bench { common, m_values } => {
            let (sim, harness) = setup(&common)?;
            let mut manifest = RunManifest::start("bench", &sim, &harness);
            let mut lines = vec!["m,method,wall_ns,checksum".to_string()];
            for &m in &m_values {
                let field = sample_mu(m, sim.master_seed)?;
                for (method, result) in [
                    ("direct", b_truncated(&field, m)?),
                    ("fast", b_fast(&field, m)?),
                ] {
                    let start = std::time::Instant::now();
                    let fresh = if method == "direct" {
                        b_truncated(&field, m)?
                    } else {
                        b_fast(&field, m)?
                    };
                    let wall_ns = start.elapsed().as_nanos();
                    debug_assert_eq!(fresh.field, result.field);
                    let bytes: String = disk_modes(m)
                        .iter()
                        .map(|&k| fmt_f64(result.field.get(k)))
                        .collect::<Vec<_>>()
                        .join(",");
                    let checksum = &sha256_hex(bytes.as_bytes())[..16];
                    lines.push(format!("{m},{method},{wall_ns},{checksum}"));
                }
            }
            let csv = harness.out_dir.join("bench.csv");
            write_lines(&csv, lines)?;
            manifest.add_output(&csv)?;
            manifest.finish(&harness.out_dir)?;
            println!("bench: wrote {}", csv.display());
            Ok(0)
        }
    }
}
