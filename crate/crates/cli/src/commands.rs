//! Subcommand implementations. Each writes its outputs plus `manifest.json`
//! into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aimrom::dmaps::{dmaps_fit, double_dmaps_lift, llr_residuals, median_epsilon, select_independent};
use aimrom::eval::ensemble_histogram;
use aimrom::integrate::{rk4, sample_attractor};
use aimrom::io;
use aimrom::nn::{Autoencoder, TrainReport};
use aimrom::pod::pod_fit;
use aimrom::rom::{
    learn_black_box, learn_gray_box, learn_latent_map, true_derivatives, Artifact, BaseField, ModelStore, PipelineConfig,
    PipelineOutput, DEFAULT_HIDDEN, GRAY_BOX_HIDDEN, LATENT_MAP_HIDDEN,
};
use aimrom::spectral::{reconstruct, BasisSpec, Grid, SpectralState};
use ndarray::{s, Array2};
use serde::Serialize;

use crate::config::{RunConfig, TrainKind, TrainSection};
use crate::plot::{line_plot, Series};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub command: &'static str,
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed_override: Option<u64>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed_override: Option<u64>,
    config: &'a RunConfig,
    /// Content hashes of stored models read or written, by alias.
    models: BTreeMap<String, String>,
    /// SHA-256 of input files.
    inputs: BTreeMap<String, String>,
    /// SHA-256 of every file written, by name.
    outputs: BTreeMap<String, String>,
}

impl Context {
    fn store_dir(&self) -> PathBuf {
        self.config.store.clone().unwrap_or_else(|| self.out.join("models"))
    }

    fn provenance(&self) -> String {
        format!("aimrom {} {}", env!("CARGO_PKG_VERSION"), self.command)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn finish(&self, outputs: &[&str], models: BTreeMap<String, String>, inputs: BTreeMap<String, String>) -> Result<()> {
        let mut hashed = BTreeMap::new();
        for name in outputs {
            hashed.insert(name.to_string(), io::hash_file(&self.path(name))?);
        }
        let manifest = Manifest {
            tool: "aimrom",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed_override: self.seed_override,
            config: &self.config,
            models,
            inputs,
            outputs: hashed,
        };
        // one entry per command so runs sharing a directory keep their records
        let path = self.path("manifest.json");
        let mut all: BTreeMap<String, serde_json::Value> = if path.exists() {
            io::read_json(&path)?
        } else {
            BTreeMap::new()
        };
        all.insert(self.command.to_string(), serde_json::to_value(&manifest).expect("serializable manifest"));
        io::write_json(&path, &all)?;
        Ok(())
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("the configuration has no [{name}] section")))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Lib(e.into()))
}

pub fn simulate(ctx: &Context) -> Result<()> {
    let cfg = section(&ctx.config.simulate, "simulate")?;
    let n = cfg.n_modes.unwrap_or(cfg.model.default_modes().0);
    let nu = cfg.nu.unwrap_or(cfg.model.default_nu());
    let field = cfg.model.galerkin(nu, n)?;
    if cfg.initial_condition.len() != n {
        return Err(CliError::Config(format!(
            "initial_condition has {} entries but the model has {n} modes",
            cfg.initial_condition.len()
        )));
    }
    let start = Instant::now();
    let traj = rk4(&field, &cfg.initial_condition, cfg.final_time, cfg.dt)?;
    let elapsed = start.elapsed();

    let basis = BasisSpec::new(cfg.model.basis_kind(), n)?;
    let grid = Grid::for_basis(&basis, cfg.grid_nodes)?;
    let mut values = Array2::zeros((traj.len(), grid.len()));
    for (row, mut out) in traj.states.rows().into_iter().zip(values.rows_mut()) {
        out.assign(&reconstruct(&SpectralState::new(basis, row.to_owned())?, &grid)?);
    }
    io::write_trajectory_csv(&ctx.path("trajectory.csv"), &traj)?;
    io::write_field_csv(&ctx.path("field.csv"), grid.points(), &traj.times, values.view())?;
    let last = values.row(values.nrows() - 1).to_vec();
    let svg = line_plot(
        &format!("u(x, {})", traj.final_time()),
        "x",
        "u",
        &[Series {
            label: "u(x,T)",
            x: grid.points(),
            y: &last,
        }],
        &ctx.provenance(),
    );
    write(&ctx.path("final_field.svg"), &svg)?;
    println!(
        "simulated {} steps to t = {}; final state {:?}; wall time {:.3} s",
        traj.len() - 1,
        traj.final_time(),
        traj.final_state().to_vec(),
        elapsed.as_secs_f64()
    );
    ctx.finish(&["trajectory.csv", "field.csv", "final_field.svg"], BTreeMap::new(), BTreeMap::new())
}

pub fn sample(ctx: &Context) -> Result<()> {
    let cfg = section(&ctx.config.sample, "sample")?;
    let n = cfg.n_modes.unwrap_or(cfg.model.default_modes().0);
    let nu = cfg.nu.unwrap_or(cfg.model.default_nu());
    let field = cfg.model.galerkin(nu, n)?;
    let ds = sample_attractor(&field, &cfg.sampler, cfg.dt)?;
    io::write_dataset_csv(&ctx.path("dataset.csv"), &ds)?;
    println!(
        "{} snapshots from {} trajectories; {} blew up",
        ds.len(),
        cfg.sampler.n_trajectories - ds.failed.len(),
        ds.failed.len()
    );
    for (id, t) in &ds.failed {
        eprintln!("trajectory {id} blew up at t = {t}");
    }
    ctx.finish(&["dataset.csv"], BTreeMap::new(), BTreeMap::new())
}

fn write_losses(path: &Path, report: &TrainReport) -> Result<()> {
    let epochs: Vec<f64> = (1..=report.train_loss.len()).map(|e| e as f64).collect();
    let mut names = vec!["epoch", "train_loss"];
    let mut cols: Vec<&[f64]> = vec![&epochs, &report.train_loss];
    if !report.val_loss.is_empty() {
        names.push("val_loss");
        cols.push(&report.val_loss);
    }
    io::write_columns_csv(path, &names, &cols)?;
    Ok(())
}

pub fn train(ctx: &Context) -> Result<()> {
    let cfg = section(&ctx.config.train, "train")?;
    let ds = io::read_dataset_csv(&cfg.dataset)?;
    let data_hash = io::hash_file(&cfg.dataset)?;
    let x = ds.snapshots;
    let n_full = x.ncols();
    let nr = cfg.n_reduced.unwrap_or(cfg.model.default_modes().1);
    if nr == 0 || nr >= n_full {
        return Err(CliError::Config(format!("need 0 < n_reduced < {n_full}")));
    }
    let nu = cfg.nu.unwrap_or(cfg.model.default_nu());
    let store_dir = ctx.store_dir();
    let mut store = ModelStore::open(&store_dir)?;

    let mut metadata = BTreeMap::new();
    metadata.insert("config".to_string(), serde_json::to_string(cfg).expect("serializable config"));
    metadata.insert("data_hash".to_string(), data_hash.clone());
    metadata.insert("seed".to_string(), cfg.optimizer.seed.to_string());

    let hidden = |default: &[usize]| cfg.hidden.clone().unwrap_or_else(|| default.to_vec());
    let mut outputs = Vec::new();
    let mut used = BTreeMap::new();
    let artifact = match cfg.kind {
        TrainKind::BlackBox | TrainKind::GrayBox => {
            let full = cfg.model.galerkin(nu, n_full)?;
            let (states, derivs) = match &cfg.pod {
                Some(alias) => {
                    let pod = store.pod(alias)?;
                    used.insert(alias.clone(), store.entry(alias).map(|e| e.hash.clone()).unwrap_or_default());
                    let (_, f) = true_derivatives(&full, x.view(), n_full)?;
                    let basis = pod.modes.slice(s![.., ..nr]);
                    (pod.project_batch(x.view(), nr)?, f.dot(&basis))
                }
                None => true_derivatives(&full, x.view(), nr)?,
            };
            let (field, report) = if cfg.kind == TrainKind::BlackBox {
                learn_black_box(states.view(), derivs.view(), &hidden(&DEFAULT_HIDDEN), &cfg.optimizer)?
            } else {
                if cfg.pod.is_some() {
                    return Err(CliError::Config("gray-box fields need Fourier coordinates".into()));
                }
                let base = BaseField::Galerkin {
                    model: cfg.model,
                    nu,
                    n_modes: nr,
                };
                learn_gray_box(states.view(), derivs.view(), base, &hidden(&GRAY_BOX_HIDDEN), &cfg.optimizer)?
            };
            write_losses(&ctx.path("loss.csv"), &report)?;
            outputs.push("loss.csv");
            Artifact::Field(field)
        }
        TrainKind::Closure => {
            let coords = match &cfg.pod {
                Some(alias) => {
                    let pod = store.pod(alias)?;
                    used.insert(alias.clone(), store.entry(alias).map(|e| e.hash.clone()).unwrap_or_default());
                    pod.project_batch(x.view(), pod.rank())?
                }
                None => x.clone(),
            };
            if coords.ncols() <= nr {
                return Err(CliError::Config("nothing left to close: n_reduced covers every coordinate".into()));
            }
            let (net, report) = learn_latent_map(
                coords.slice(s![.., ..nr]),
                coords.slice(s![.., nr..]),
                &hidden(&DEFAULT_HIDDEN),
                &cfg.optimizer,
            )?;
            write_losses(&ctx.path("loss.csv"), &report)?;
            outputs.push("loss.csv");
            Artifact::Mlp(net)
        }
        TrainKind::Autoencoder => {
            let (ae, report) = Autoencoder::fit(
                x.view(),
                &hidden(&DEFAULT_HIDDEN),
                cfg.bottleneck.unwrap_or(nr),
                &cfg.optimizer,
            )?;
            write_losses(&ctx.path("loss.csv"), &report)?;
            outputs.push("loss.csv");
            Artifact::Autoencoder(ae)
        }
        TrainKind::LatentMap => {
            let alias = cfg
                .latent
                .as_ref()
                .ok_or_else(|| CliError::Config("latent-map training needs `latent`".into()))?;
            let targets = match store.get(alias)? {
                Artifact::Autoencoder(ae) => {
                    let mut z = Array2::zeros((x.nrows(), ae.latent_dim()));
                    for (row, mut out) in x.rows().into_iter().zip(z.rows_mut()) {
                        out.assign(&ae.encode(row)?);
                    }
                    z
                }
                Artifact::DoubleDmaps(dd) => dd.dm.restrict_batch(x.view())?,
                other => {
                    return Err(CliError::Config(format!(
                        "model '{alias}' is a {}, not an autoencoder or double-dmaps model",
                        other.kind_name()
                    )))
                }
            };
            used.insert(alias.clone(), store.entry(alias).map(|e| e.hash.clone()).unwrap_or_default());
            let (net, report) = learn_latent_map(
                x.slice(s![.., ..nr]),
                targets.view(),
                &hidden(&LATENT_MAP_HIDDEN),
                &cfg.optimizer,
            )?;
            write_losses(&ctx.path("loss.csv"), &report)?;
            outputs.push("loss.csv");
            Artifact::Mlp(net)
        }
        TrainKind::Pod => {
            let pod = pod_fit(x.view(), cfg.center)?;
            let modes: Vec<f64> = (1..=pod.rank()).map(|k| k as f64).collect();
            let total: f64 = pod.singular_values.iter().map(|v| v * v).sum();
            let share: Vec<f64> = pod.singular_values.iter().map(|v| v * v / total).collect();
            io::write_columns_csv(
                &ctx.path("energy.csv"),
                &["mode", "singular_value", "energy_fraction", "cumulative_energy"],
                &[
                    &modes,
                    pod.singular_values.as_slice().expect("contiguous"),
                    &share,
                    pod.energy_fractions.as_slice().expect("contiguous"),
                ],
            )?;
            outputs.push("energy.csv");
            println!(
                "POD: {} modes capture 99.9% of the energy",
                pod.modes_for_energy(0.999)
            );
            Artifact::Pod(pod)
        }
        TrainKind::Dmaps => dmaps_artifact(ctx, cfg, &x, &mut outputs)?,
    };
    let hash = store.insert(&cfg.alias, artifact, metadata)?;
    store.save(&store_dir)?;
    println!("stored '{}' ({hash}) in {}", cfg.alias, store_dir.display());
    used.insert(cfg.alias.clone(), hash);
    let mut inputs = BTreeMap::new();
    inputs.insert(cfg.dataset.display().to_string(), data_hash);
    ctx.finish(&outputs, used, inputs)
}

fn dmaps_artifact(ctx: &Context, cfg: &TrainSection, x: &Array2<f64>, outputs: &mut Vec<&str>) -> Result<Artifact> {
    let d = &cfg.dmaps;
    let n = d.max_points.unwrap_or(x.nrows()).min(x.nrows());
    let x = x.slice(s![..n, ..]);
    let eps = match d.epsilon {
        Some(e) => e,
        None => median_epsilon(x)?,
    };
    let dm = dmaps_fit(x, eps, d.n_eigs)?;
    let residuals = llr_residuals(&dm, d.bandwidth_factor)?;
    let kept = select_independent(&dm, d.bandwidth_factor, d.residual_threshold)?;
    let index: Vec<f64> = (1..=residuals.len()).map(|k| k as f64).collect();
    let eigenvalues = dm.eigenvalues.slice(s![1..=residuals.len()]).to_vec();
    io::write_columns_csv(
        &ctx.path("dmaps_residuals.csv"),
        &["index", "eigenvalue", "residual"],
        &[&index, &eigenvalues, &residuals],
    )?;
    outputs.push("dmaps_residuals.csv");
    println!("diffusion map on {n} points, epsilon {eps:e}; kept coordinates {kept:?}");
    let dm = dm.with_kept(kept)?;
    let dd = double_dmaps_lift(&dm, x, d.epsilon_star, d.delta)?;
    println!("lift in-sample MSE {:e}", dd.in_sample_mse(x));
    Ok(Artifact::DoubleDmaps(Box::new(dd)))
}

fn used_models(cfg: &PipelineConfig, store: &ModelStore) -> BTreeMap<String, String> {
    let m = &cfg.models;
    [&m.dynamics, &m.closure, &m.latent, &m.latent_map]
        .into_iter()
        .filter_map(|a| store.entry(a).map(|e| (a.clone(), e.hash.clone())))
        .collect()
}

fn run(ctx: &Context) -> Result<(PipelineConfig, ModelStore, PipelineOutput)> {
    let cfg = section(&ctx.config.pipeline, "pipeline")?.clone();
    let store = ModelStore::open(&ctx.store_dir())?;
    let out = aimrom::rom::run_pipeline(&cfg, &store)?;
    println!(
        "MAPE of u(x,T): post-processed {}%, truncated {}%; coefficient MSE {:e}",
        out.metrics.mape, out.metrics.raw_mape, out.metrics.mse
    );
    Ok((cfg, store, out))
}

fn write_overlay(ctx: &Context, out: &PipelineOutput) -> Result<()> {
    io::write_columns_csv(
        &ctx.path("final_field.csv"),
        &["x", "truth", "truncated", "post_processed"],
        &[&out.grid, &out.u_truth, &out.u_raw, &out.u_post],
    )?;
    let svg = line_plot(
        &format!("u(x, {})", out.truth.final_time()),
        "x",
        "u",
        &[
            Series { label: "truth", x: &out.grid, y: &out.u_truth },
            Series { label: "truncated", x: &out.grid, y: &out.u_raw },
            Series { label: "post-processed", x: &out.grid, y: &out.u_post },
        ],
        &ctx.provenance(),
    );
    write(&ctx.path("overlay.svg"), &svg)
}

pub fn postprocess(ctx: &Context) -> Result<()> {
    let (cfg, store, out) = run(ctx)?;
    write_overlay(ctx, &out)?;
    let modes: Vec<f64> = (1..=out.truth_state.coeffs().len()).map(|k| k as f64).collect();
    io::write_columns_csv(
        &ctx.path("final_state.csv"),
        &["mode", "truth", "truncated", "post_processed"],
        &[
            &modes,
            out.truth_state.coeffs().as_slice().expect("contiguous"),
            out.raw_state.coeffs().as_slice().expect("contiguous"),
            out.final_state.coeffs().as_slice().expect("contiguous"),
        ],
    )?;
    io::write_json(&ctx.path("metrics.json"), &out.metrics)?;
    ctx.finish(
        &["final_field.csv", "overlay.svg", "final_state.csv", "metrics.json"],
        used_models(&cfg, &store),
        BTreeMap::new(),
    )
}

pub fn evaluate(ctx: &Context) -> Result<()> {
    let (cfg, store, out) = run(ctx)?;
    write_overlay(ctx, &out)?;
    let (t, e): (Vec<f64>, Vec<f64>) = out.metrics.percent_error_series.iter().copied().unzip();
    io::write_columns_csv(&ctx.path("error_series.csv"), &["t", "percent_error"], &[&t, &e])?;
    let svg = line_plot(
        "reduced-coordinate error",
        "t",
        "MAPE (%)",
        &[Series { label: "reduced model", x: &t, y: &e }],
        &ctx.provenance(),
    );
    write(&ctx.path("error_series.svg"), &svg)?;
    io::write_json(&ctx.path("metrics.json"), &out.metrics)?;
    io::write_json(&ctx.path("decomposition.json"), &out.decomposition)?;
    let d = out.decomposition;
    println!("delta1 {:e} delta2 {:e} delta3 {:e} delta4 {:e}", d.delta1, d.delta2, d.delta3, d.delta4);
    ctx.finish(
        &[
            "final_field.csv",
            "overlay.svg",
            "error_series.csv",
            "error_series.svg",
            "metrics.json",
            "decomposition.json",
        ],
        used_models(&cfg, &store),
        BTreeMap::new(),
    )
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn ensemble(ctx: &Context) -> Result<()> {
    let cfg = section(&ctx.config.ensemble, "ensemble")?;
    let store = ModelStore::open(&ctx.store_dir())?;
    let configs: Vec<(String, PipelineConfig)> =
        cfg.members.iter().map(|m| (m.label.clone(), m.pipeline.clone())).collect();
    let mut seen = std::collections::BTreeSet::new();
    for (label, _) in &configs {
        if label.is_empty() || label.contains([',', '"', '\n']) {
            return Err(CliError::Config(format!("ensemble label {label:?} must be non-empty without commas or quotes")));
        }
        if !seen.insert(file_label(label)) {
            return Err(CliError::Config(format!("duplicate ensemble label '{label}'")));
        }
    }
    let result = ensemble_histogram(&configs, &store, &cfg.ic_box, cfg.n_ic, cfg.final_time, cfg.seed, cfg.n_bins)?;

    let mut files = vec!["samples.csv".to_string(), "histogram.csv".into(), "histogram.svg".into(), "ensemble.json".into()];
    io::write_long_csv(&ctx.path("samples.csv"), &result.long_rows())?;
    let mut hist_rows = Vec::new();
    let mut series_data = Vec::new();
    for m in &result.members {
        let idx: Vec<f64> = m.samples.iter().map(|s| s.0 as f64).collect();
        let name = format!("samples_{}.csv", file_label(&m.label));
        io::write_columns_csv(&ctx.path(&name), &["ic_index", "mape"], &[&idx, &m.values()])?;
        files.push(name);
        let h = &m.histogram;
        for (b, &c) in h.counts.iter().enumerate() {
            hist_rows.push((m.label.clone(), h.edges[b], h.edges[b + 1], c));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (b, &c) in h.counts.iter().enumerate() {
            xs.extend([h.edges[b], h.edges[b + 1]]);
            ys.extend([c as f64, c as f64]);
        }
        series_data.push((m.label.clone(), xs, ys));
        println!(
            "{}: {} runs, median MAPE {}%, {} failed",
            m.label,
            m.samples.len(),
            m.median(),
            m.failures.len()
        );
        for (i, why) in &m.failures {
            eprintln!("{} ic {i}: {why}", m.label);
        }
    }
    write_histogram_csv(&ctx.path("histogram.csv"), &hist_rows)?;
    let series: Vec<Series> = series_data
        .iter()
        .map(|(l, x, y)| Series { label: l, x, y })
        .collect();
    let svg = line_plot("MAPE of u(x,T) over initial conditions", "MAPE (%)", "count", &series, &ctx.provenance());
    write(&ctx.path("histogram.svg"), &svg)?;
    io::write_json(&ctx.path("ensemble.json"), &result)?;
    let mut used = BTreeMap::new();
    for (_, c) in &configs {
        used.extend(used_models(c, &store));
    }
    let names: Vec<&str> = files.iter().map(String::as_str).collect();
    ctx.finish(&names, used, BTreeMap::new())
}

fn write_histogram_csv(path: &Path, rows: &[(String, f64, f64, usize)]) -> Result<()> {
    let mut text = String::from("config,bin_lo,bin_hi,count\n");
    for (label, lo, hi, c) in rows {
        text.push_str(&format!("{label},{lo:e},{hi:e},{c}\n"));
    }
    write(path, &text)
}

