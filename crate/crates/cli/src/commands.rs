use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use qis_core::adapt::{self, MarkovParams, ResetEstimator};
use qis_core::analytics;
use qis_core::bench::{self, BenchSettings};
use qis_core::corpus::{self, CorpusImage};
use qis_core::hdr::{self, CurvePolicy, ThresholdPolicy};
use qis_core::reconstruct::{self, Psnr};
use qis_core::special;
use qis_core::{forward, io, QisError, SensorConfig, ThresholdMap};
use serde::Serialize;
use serde_json::json;

use crate::args::{parse_list, parse_pair, read_image, scene, ImageArgs, SensorArgs};
use crate::output::{config_hash, num, read_meta, write_file, write_meta, Meta};

const DEFAULT_ALPHA: f64 = 300.0;

fn fixed_alpha(_: &SensorConfig) -> f64 {
    DEFAULT_ALPHA
}

fn psnr_json(p: Option<Psnr>) -> serde_json::Value {
    match p {
        Some(Psnr::Finite(v)) => json!(v),
        Some(Psnr::Infinite) => json!("inf"),
        None => serde_json::Value::Null,
    }
}

/// Comma-separated list of floats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct List(pub Vec<f64>);

fn parse_list_arg(s: &str) -> std::result::Result<List, String> {
    parse_list(s).map(List)
}

// ---------------------------------------------------------------- simulate

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sensor: SensorArgs,
    #[command(flatten)]
    pub image: ImageArgs,
    /// Uniform threshold for every jot.
    #[arg(long, default_value_t = 1, conflicts_with = "qmap")]
    pub q: u32,
    /// Threshold-map CSV used instead of a uniform threshold.
    #[arg(long)]
    pub qmap: Option<PathBuf>,
    /// Output QISB bit file.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = a.sensor.config(fixed_alpha)?;
    let img = a.image.load()?;
    let theta = forward::expose(&img, &cfg, a.sensor.kernel)?;
    let map = match &a.qmap {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            io::read_threshold_map(std::io::BufReader::new(f))
                .with_context(|| format!("reading {}", p.display()))?
        }
        None => ThresholdMap::uniform(&cfg, img.width(), img.height(), a.q)?,
    };
    map.validate(cfg.q_max)?;
    if (map.jot_width(), map.jot_height()) != (theta.jot_width(), theta.jot_height()) {
        return Err(QisError::Dimension(format!(
            "threshold map covers {}x{} jots, sensor has {}x{}",
            map.jot_width(),
            map.jot_height(),
            theta.jot_width(),
            theta.jot_height()
        ))
        .into());
    }
    let bits = forward::sample_bits(&theta, &map, cfg.frames, cfg.seed)?;
    write_file(&a.out, |w| io::write_qisb(w, &bits))?;
    let meta = Meta {
        command: "simulate".into(),
        config_hash: config_hash("simulate", a)?,
        seed: cfg.seed,
        width: img.width(),
        height: img.height(),
        config: Some(cfg),
        threshold_map: Some(map),
        details: json!({
            "image": a.image,
            "kernel": a.sensor.kernel.to_string(),
            "jots": bits.jots(),
            "frames": bits.frames(),
            "ones": bits.count_ones(),
        }),
    };
    write_meta(&a.out, &meta)?;
    println!(
        "wrote {} ({} jots x {} frames, bit density {:.4})",
        a.out.display(),
        bits.jots(),
        bits.frames(),
        bits.count_ones() as f64 / (bits.jots() * bits.frames()) as f64
    );
    Ok(())
}

// ------------------------------------------------------------- reconstruct

#[derive(Args, Debug, Serialize)]
pub struct ReconstructArgs {
    /// QISB bit file written by `simulate`.
    #[arg(long)]
    pub bits: PathBuf,
    /// Metadata of the bit file (default `<bits>.meta.json`).
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Ground-truth image for PSNR (default: the simulated source, if known).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Upper clip of the estimate.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Output PGM of the clipped estimate.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Also write the estimate as a CSV grid.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

pub fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let meta_file = a
        .meta
        .clone()
        .unwrap_or_else(|| crate::output::meta_path(&a.bits));
    let src = read_meta(&meta_file)?;
    let (Some(cfg), Some(map)) = (src.config, src.threshold_map.clone()) else {
        return Err(QisError::Format(format!(
            "{} lacks the sensor config or threshold map",
            meta_file.display()
        ))
        .into());
    };
    let f = fs::File::open(&a.bits).with_context(|| format!("opening {}", a.bits.display()))?;
    let bits = io::read_qisb(std::io::BufReader::new(f), map.jot_width())
        .with_context(|| format!("reading {}", a.bits.display()))?;
    let cfg = cfg.with_frames(bits.frames() as u32)?;
    let mut rec = reconstruct::mle_reconstruct(&bits, &map, &cfg, a.clip)?;

    let truth = match &a.truth {
        Some(p) => Some(read_image(p)?),
        None => match serde_json::from_value::<ImageArgs>(src.details["image"].clone()) {
            Ok(ImageArgs { image: Some(p), .. }) if p.exists() => Some(read_image(&p)?),
            Ok(ImageArgs {
                image: None,
                scene: s,
                width,
                height,
            }) => Some(scene(&s, width, height)?),
            _ => None,
        },
    };
    if let Some(t) = &truth {
        rec = rec.with_truth(t.pixels())?;
    }

    write_file(&a.out, |w| {
        io::write_pgm(w, rec.width, rec.height, &rec.estimate)
    })?;
    if let Some(p) = &a.csv {
        write_file(p, |w| {
            io::write_csv_grid(w, rec.width, rec.height, &rec.estimate)
        })?;
    }
    let params = json!({ "source": src.config_hash, "clip": a.clip, "truth": a.truth });
    let meta = Meta {
        command: "reconstruct".into(),
        config_hash: config_hash("reconstruct", &params)?,
        seed: src.seed,
        width: rec.width,
        height: rec.height,
        config: Some(cfg),
        threshold_map: Some(map),
        details: json!({
            "source_config_hash": src.config_hash,
            "clip": a.clip,
            "psnr_db": psnr_json(rec.psnr_db),
            "saturated_fraction": rec.saturated_fraction(),
            "mean_estimate": rec.mean_estimate(),
        }),
    };
    write_meta(&a.out, &meta)?;
    match rec.psnr_db {
        Some(p) => println!("psnr_db={p} saturated={:.4}", rec.saturated_fraction()),
        None => println!("saturated={:.4}", rec.saturated_fraction()),
    }
    Ok(())
}

// ------------------------------------------------------------------- adapt

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum AdaptMethod {
    Bisection,
    Markov,
}

#[derive(Args, Debug, Serialize)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub sensor: SensorArgs,
    #[command(flatten)]
    pub image: ImageArgs,
    #[arg(long, value_enum, default_value = "bisection")]
    pub method: AdaptMethod,
    /// Jots per threshold block as `WxH` (default: one pixel).
    #[arg(long, value_parser = parse_pair)]
    pub block: Option<(u32, u32)>,
    /// Frame budget for adaptation (major iterations for `markov`).
    #[arg(long, default_value_t = 4)]
    pub adapt_frames: u32,
    /// Convergence tolerance on the bit density (default 1/√(block jots)).
    #[arg(long)]
    pub tol: Option<f64>,
    /// Starting threshold of the Markov chains.
    #[arg(long, default_value_t = 1)]
    pub q_start: u32,
    /// Markov sub-state bits.
    #[arg(long, default_value_t = 4)]
    pub levels: u32,
    /// Markov probability of holding state.
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    /// Output threshold-map CSV.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Adaptation trace CSV.
    #[arg(long)]
    #[serde(skip)]
    pub report: Option<PathBuf>,
    /// Reconstruct the remaining frames into this PGM (bisection only).
    #[arg(long)]
    #[serde(skip)]
    pub reconstruction: Option<PathBuf>,
}

pub fn adapt(a: &AdaptArgs) -> Result<()> {
    let cfg = a.sensor.config(fixed_alpha)?;
    let img = a.image.load()?;
    let block = a
        .block
        .map(|(w, h)| (w as usize, h as usize))
        .unwrap_or((cfg.kx as usize, cfg.ky as usize));
    let (map, mse, mut details) = match a.method {
        AdaptMethod::Bisection => {
            let (report, psnr) = match &a.reconstruction {
                Some(p) => {
                    let (report, rec) = adapt::adapt_and_reconstruct(
                        &img,
                        &cfg,
                        a.sensor.kernel,
                        block,
                        a.adapt_frames,
                        a.tol,
                    )?;
                    write_file(p, |w| {
                        io::write_pgm(w, rec.width, rec.height, &rec.estimate)
                    })?;
                    (report, psnr_json(rec.psnr_db))
                }
                None => (
                    adapt::run_bisection(
                        &img,
                        &cfg,
                        a.sensor.kernel,
                        block,
                        a.adapt_frames,
                        a.tol,
                    )?,
                    serde_json::Value::Null,
                ),
            };
            if let Some(p) = &a.report {
                let rows: Vec<Vec<String>> = report
                    .trace
                    .iter()
                    .map(|r| {
                        vec![
                            r.iteration.to_string(),
                            r.block_id.to_string(),
                            r.q_a.to_string(),
                            r.q_b.to_string(),
                            r.q_m.to_string(),
                            num(r.bit_density),
                            r.converged.to_string(),
                        ]
                    })
                    .collect();
                let header = [
                    "iteration",
                    "block_id",
                    "q_a",
                    "q_b",
                    "q_m",
                    "bit_density",
                    "converged",
                ];
                write_file(p, |w| io::write_table(w, &header, &rows))?;
            }
            let details = json!({
                "adaptation_frames": report.adaptation_frames,
                "reconstruction_frames": report.reconstruction_frames,
                "converged_blocks": report.states.iter().filter(|s| s.converged).count(),
                "psnr_db": psnr,
            });
            (report.map, report.mse, details)
        }
        AdaptMethod::Markov => {
            let params = MarkovParams {
                levels: a.levels,
                beta: a.beta,
            };
            let report = adapt::run_markov(
                &img,
                &cfg,
                a.sensor.kernel,
                block,
                a.adapt_frames,
                a.q_start,
                params,
            )?;
            if let Some(p) = &a.report {
                let rows: Vec<Vec<String>> = report
                    .history
                    .iter()
                    .enumerate()
                    .flat_map(|(i, qs)| {
                        qs.iter().enumerate().map(move |(b, q)| {
                            vec![(i + 1).to_string(), b.to_string(), q.to_string()]
                        })
                    })
                    .collect();
                write_file(p, |w| {
                    io::write_table(w, &["iteration", "block_id", "q"], &rows)
                })?;
            }
            let details = json!({ "major_iterations": a.adapt_frames });
            (report.map, report.mse, details)
        }
    };
    write_file(&a.out, |w| io::write_threshold_map(w, &map))?;
    details["mse_to_oracle"] = json!(mse);
    details["method"] = json!(a.method);
    let meta = Meta {
        command: "adapt".into(),
        config_hash: config_hash("adapt", a)?,
        seed: cfg.seed,
        width: img.width(),
        height: img.height(),
        config: Some(cfg),
        threshold_map: Some(map),
        details,
    };
    write_meta(&a.out, &meta)?;
    if let Some(last) = mse.last() {
        println!("final threshold MSE to oracle: {last:.4}");
    }
    Ok(())
}

// ----------------------------------------------------------------- analyze

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Table {
    /// SNR, Fisher information and lower bound over (c, q).
    Snr,
    /// Expected estimate, bit density and admissibility over q at each c.
    Phase,
    /// Oracle threshold and its SNR at each c.
    Oracle,
    /// δ-admissible threshold set at each c.
    Admissible,
    /// Optimal two-threshold checkerboard and its CRLB over c.
    Checkerboard,
}

#[derive(Args, Debug, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub sensor: SensorArgs,
    #[arg(long, value_enum)]
    pub table: Table,
    /// Explicit intensities, comma separated (overrides the grid).
    #[arg(long, value_parser = parse_list_arg)]
    pub c: Option<List>,
    #[arg(long, default_value_t = 0.01)]
    pub c_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub c_step: f64,
    /// Smallest threshold in the table.
    #[arg(long, default_value_t = 1)]
    pub q_lo: u32,
    /// Largest threshold in the table (default q_max).
    #[arg(long)]
    pub q_hi: Option<u32>,
    /// Bound on the probability that a block saturates.
    #[arg(long, default_value_t = 2e-4)]
    pub delta: f64,
    /// Output CSV.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let cfg = a.sensor.config(fixed_alpha)?;
    let grid = match &a.c {
        Some(List(v)) => v.clone(),
        None => analytics::intensity_grid(a.c_min, a.c_max, a.c_step)?,
    };
    let q_hi = a.q_hi.unwrap_or(cfg.q_max);
    if a.q_lo < 1 || a.q_lo > q_hi {
        return Err(QisError::Config(format!("empty threshold range {}..={q_hi}", a.q_lo)).into());
    }
    let mut details = json!({ "table": a.table });
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match a.table {
        Table::Snr => {
            let pts = analytics::snr_table(&cfg, &grid, a.q_lo..=q_hi);
            let rows = pts
                .iter()
                .map(|p| {
                    let (mean, _) = analytics::bit_density_moments(p.c, p.q, &cfg)?;
                    Ok(vec![
                        num(p.c),
                        p.q.to_string(),
                        num(cfg.theta(p.c)),
                        num(1.0 - mean),
                        num(p.snr_db),
                        num(p.fisher),
                        num(p.lower_bound),
                    ])
                })
                .collect::<qis_core::Result<_>>()?;
            (
                vec![
                    "c",
                    "q",
                    "theta",
                    "bit_density",
                    "snr_db",
                    "fisher",
                    "lower_bound",
                ],
                rows,
            )
        }
        Table::Phase => {
            let mut rows = Vec::new();
            for &c in &grid {
                for r in analytics::phase_transition_curve(c, &cfg, a.q_lo..=q_hi, a.delta)? {
                    rows.push(vec![
                        num(c),
                        r.q.to_string(),
                        num(r.e_chat_ratio),
                        num(r.bit_density),
                        num(r.snr_db),
                        r.admissible.to_string(),
                    ]);
                }
            }
            (
                vec![
                    "c",
                    "q",
                    "e_chat_ratio",
                    "bit_density",
                    "snr_db",
                    "admissible",
                ],
                rows,
            )
        }
        Table::Oracle => {
            let rows = grid
                .iter()
                .map(|&c| {
                    let o = analytics::oracle_threshold(c, &cfg);
                    vec![
                        num(c),
                        num(cfg.theta(c)),
                        o.q.to_string(),
                        o.clamped.to_string(),
                        num(analytics::snr_db(c, o.q, &cfg).unwrap_or(f64::NAN)),
                    ]
                })
                .collect();
            (vec!["c", "theta", "q_star", "clamped", "snr_db"], rows)
        }
        Table::Admissible => {
            let eps = special::delta_epsilon(a.delta, cfg.bits_per_pixel())?;
            details["epsilon"] = json!(eps);
            let rows = grid
                .iter()
                .map(|&c| {
                    let set = special::delta_admissible_set(
                        cfg.theta(c),
                        a.delta,
                        cfg.k(),
                        cfg.frames,
                        cfg.q_max,
                    )?;
                    let (lo, hi) = set.map_or((String::new(), String::new()), |s| {
                        (s.lo.to_string(), s.hi.to_string())
                    });
                    Ok(vec![num(c), num(cfg.theta(c)), num(eps), lo, hi])
                })
                .collect::<qis_core::Result<_>>()?;
            (vec!["c", "theta", "epsilon", "q_lo", "q_hi"], rows)
        }
        Table::Checkerboard => {
            let (lo, hi) = (grid[0], grid[grid.len() - 1]);
            let step = if grid.len() > 1 {
                grid[1] - grid[0]
            } else {
                a.c_step
            };
            let d = analytics::checkerboard_design(&cfg, lo, hi, step)?;
            details["q1"] = json!(d.q1);
            details["q2"] = json!(d.q2);
            details["objective"] = json!(d.objective);
            println!(
                "checkerboard design q1={} q2={} objective={}",
                d.q1, d.q2, d.objective
            );
            let rows = grid
                .iter()
                .map(|&c| {
                    vec![
                        num(c),
                        d.q1.to_string(),
                        d.q2.to_string(),
                        num(analytics::checkerboard_crlb(d.q1, d.q2, c, &cfg)),
                    ]
                })
                .collect();
            (vec!["c", "q1", "q2", "crlb"], rows)
        }
    };
    write_file(&a.out, |w| io::write_table(w, &header, &rows))?;
    let meta = Meta {
        command: "analyze".into(),
        config_hash: config_hash("analyze", a)?,
        seed: cfg.seed,
        width: 0,
        height: 0,
        config: Some(cfg),
        threshold_map: None,
        details,
    };
    write_meta(&a.out, &meta)?;
    println!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}

// --------------------------------------------------------------------- hdr

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum RadianceScene {
    /// Dim room with a window and a lamp.
    Room,
    /// Horizontal ramp over `--decades` decades.
    Ramp,
}

#[derive(Args, Debug, Serialize)]
pub struct HdrArgs {
    /// Gain defaults to K·(q_max − 1) here.
    #[command(flatten)]
    pub sensor: SensorArgs,
    #[arg(long, value_enum, default_value = "room")]
    pub radiance: RadianceScene,
    /// Radiance CSV used instead of a built-in scene.
    #[arg(long)]
    pub radiance_file: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    /// Peak radiance of a built-in scene.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
    /// Decades spanned by the ramp scene.
    #[arg(long, default_value_t = 4.0)]
    pub decades: f64,
    /// Duty cycles, strictly decreasing.
    #[arg(long, value_parser = parse_list_arg, default_value = "1,0.2,0.04,0.008")]
    pub taus: List,
    /// Threshold policy: `oracle`, `bisection` or `uniform:Q`.
    #[arg(long, default_value = "oracle")]
    pub policy: String,
    /// Jots per bisection block as `WxH` (default: one pixel).
    #[arg(long, value_parser = parse_pair)]
    pub block: Option<(u32, u32)>,
    #[arg(long, default_value_t = 4)]
    pub adapt_frames: u32,
    /// Output CSV of the fused radiance.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Tone-mapped PGM of the fused radiance.
    #[arg(long)]
    #[serde(skip)]
    pub tone: Option<PathBuf>,
    /// Analytic dynamic-range curve CSV.
    #[arg(long)]
    #[serde(skip)]
    pub curve: Option<PathBuf>,
    /// SNR floor defining the dynamic range, in dB.
    #[arg(long, default_value_t = 20.0)]
    pub floor: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub theta_lo: f64,
    #[arg(long, default_value_t = 1e5)]
    pub theta_hi: f64,
    #[arg(long, default_value_t = 50)]
    pub per_decade: usize,
}

fn threshold_policy(s: &str, block: (usize, usize), adapt_frames: u32) -> Result<ThresholdPolicy> {
    match s {
        "oracle" => Ok(ThresholdPolicy::Oracle),
        "bisection" => Ok(ThresholdPolicy::Bisection {
            block,
            adapt_frames,
        }),
        other => match other.strip_prefix("uniform:").map(str::parse::<u32>) {
            Some(Ok(q)) => Ok(ThresholdPolicy::Uniform(q)),
            _ => Err(QisError::Config(format!("unknown threshold policy '{other}'")).into()),
        },
    }
}

pub fn hdr_cmd(a: &HdrArgs) -> Result<()> {
    let cfg = a.sensor.config(hdr::default_gain)?;
    let taus = &a.taus.0;
    let (w, h, radiance) = match &a.radiance_file {
        Some(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            io::read_csv_grid(std::io::BufReader::new(f))
                .with_context(|| format!("reading {}", p.display()))?
        }
        None => {
            let r = match a.radiance {
                RadianceScene::Room => corpus::hdr_scene(a.width, a.height, a.peak),
                RadianceScene::Ramp => corpus::radiance_ramp(a.width, a.height, a.decades, a.peak),
            };
            (a.width, a.height, r)
        }
    };
    let block = a
        .block
        .map(|(bw, bh)| (bw as usize, bh as usize))
        .unwrap_or((cfg.kx as usize, cfg.ky as usize));
    let policy = threshold_policy(&a.policy, block, a.adapt_frames)?;
    let stack = hdr::simulate_stack(&radiance, w, h, &cfg, a.sensor.kernel, taus, policy)?;
    let recs = hdr::reconstruct_stack(&stack)?;
    let res = hdr::fuse(&stack, &recs)?;
    write_file(&a.out, |wr| io::write_csv_grid(wr, w, h, &res.fused))?;
    let peak = radiance.iter().copied().fold(0.0, f64::max);
    if let Some(p) = &a.tone {
        let toned: Vec<f64> = res
            .fused
            .iter()
            .map(|&r| hdr::tone_curve(r, peak))
            .collect();
        write_file(p, |wr| io::write_pgm(wr, w, h, &toned))?;
    }
    let tone_psnr = hdr::tone_mapped_psnr(&res.fused, &radiance, peak).ok();
    let mut details = json!({
        "taus": taus,
        "policy": a.policy,
        "psnr_db": psnr_json(res.psnr_db),
        "tone_mapped_psnr_db": psnr_json(tone_psnr),
        "fallback_pixels": res.fallback.iter().filter(|f| **f).count(),
    });
    if let Some(p) = &a.curve {
        let thetas = hdr::log_grid(a.theta_lo, a.theta_hi, a.per_decade);
        let curves = [
            ("snr_q1", CurvePolicy::Uniform(1)),
            ("snr_qmax", CurvePolicy::Uniform(cfg.q_max)),
            ("snr_oracle", CurvePolicy::Oracle),
        ]
        .map(|(name, pol)| hdr::dynamic_range_curve(&cfg, taus, pol, &thetas).map(|c| (name, c)));
        let curves = curves.into_iter().collect::<qis_core::Result<Vec<_>>>()?;
        let rows: Vec<Vec<String>> = thetas
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut r = vec![num(t)];
                r.extend(
                    curves
                        .iter()
                        .map(|(_, c)| c[i].snr_db.map_or(String::new(), num)),
                );
                r
            })
            .collect();
        write_file(p, |wr| {
            io::write_table(wr, &["theta", "snr_q1", "snr_qmax", "snr_oracle"], &rows)
        })?;
        let dr: Vec<f64> = curves
            .iter()
            .map(|(_, c)| hdr::dynamic_range_db(c, a.floor))
            .collect();
        details["dynamic_range_db"] = json!({ "q1": dr[0], "q_max": dr[1], "oracle": dr[2] });
        println!(
            "dynamic range at {} dB: q=1 {:.2} dB, q_max {:.2} dB, oracle {:.2} dB",
            a.floor, dr[0], dr[1], dr[2]
        );
    }
    let meta = Meta {
        command: "hdr".into(),
        config_hash: config_hash("hdr", a)?,
        seed: cfg.seed,
        width: w,
        height: h,
        config: Some(cfg),
        threshold_map: None,
        details,
    };
    write_meta(&a.out, &meta)?;
    if let Some(p) = res.psnr_db {
        println!("fused psnr_db={p}");
    }
    Ok(())
}

// ------------------------------------------------------------------- bench

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Random realizations per image.
    #[arg(long, default_value_t = 50)]
    pub seeds: u32,
    /// Base seed of every realization.
    #[arg(long, env = "QIS_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Size of the built-in corpus images.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    /// Directory of PGM images replacing the built-in corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Conditional-reset estimator: integration or likelihood.
    #[arg(long, default_value = "integration")]
    pub reset_estimator: ResetEstimator,
    /// Output CSV.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn load_corpus(dir: &Path) -> Result<Vec<CorpusImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "pgm"));
    paths.sort();
    if paths.is_empty() {
        return Err(QisError::Config(format!("no .pgm images in {}", dir.display())).into());
    }
    paths
        .iter()
        .map(|p| {
            Ok(CorpusImage {
                name: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                image: read_image(p)?,
            })
        })
        .collect()
}

pub fn bench_cmd(a: &BenchArgs) -> Result<()> {
    let corpus = match &a.corpus {
        Some(d) => load_corpus(d)?,
        None => corpus::default_corpus(a.width, a.height)?,
    };
    let settings = BenchSettings {
        reset_estimator: a.reset_estimator,
        ..BenchSettings::standard(a.seeds, a.seed)?
    };
    let rows = bench::run_bench(&corpus, &settings, &bench::standard_policies())?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.policy.clone(), num(r.mean_psnr), num(r.std_psnr)])
        .collect();
    write_file(&a.out, |w| {
        io::write_table(w, &["policy", "mean_psnr_db", "std_psnr_db"], &table)
    })?;
    let meta = Meta {
        command: "bench".into(),
        config_hash: config_hash("bench", a)?,
        seed: a.seed,
        width: a.width,
        height: a.height,
        config: Some(settings.config),
        threshold_map: None,
        details: json!({
            "images": corpus.iter().map(|c| c.name.clone()).collect::<Vec<_>>(),
            "seeds": a.seeds,
            "adapt_frames": settings.adapt_frames,
            "reset_estimator": settings.reset_estimator,
        }),
    };
    write_meta(&a.out, &meta)?;
    for r in &rows {
        println!("{:<32} {:>7.2} ± {:.2}", r.policy, r.mean_psnr, r.std_psnr);
    }
    Ok(())
}
