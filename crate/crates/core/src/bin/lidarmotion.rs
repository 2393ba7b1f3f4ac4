use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lidarmotion::augmentor::{make_pair, AugmentedScenePair};
use lidarmotion::baselines::icp;
use lidarmotion::config::Config;
use lidarmotion::eval::{flow_of, run_pipeline, FieldSource, Injection};
use lidarmotion::pcio::{read_mesh, read_velodyne_bin, write_flow};
use lidarmotion::rigidmotion::stationarity_experiment;
use lidarmotion::voxelgrid::{flatten_to_ground, voxelize};
use lidarmotion::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "lidarmotion", version, about = "Rigid-motion and scene-flow tools for LIDAR scans")]
struct Cli {
    /// TOML configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory. Reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Insert moving virtual cars into a scan and write a scene pair.
    Augment {
        /// Velodyne `.bin` scan.
        #[arg(long)]
        scan: PathBuf,
        /// Directory of `.obj` car meshes.
        #[arg(long)]
        meshes: PathBuf,
    },
    /// Score a decoded motion field on a scene pair.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Source::Gt)]
        source: Source,
        /// Rotation offset (rad) added to every object cell.
        #[arg(long, default_value_t = 0.0)]
        inject_dtheta: f64,
        /// Translation offset (m) added to every object cell, as `x,y`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        inject_dt: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Rigid motion and per-point flow between two scans by ICP.
    IcpFlow { scan_t: PathBuf, scan_t1: PathBuf },
    /// Spread of world-frame versus local-frame motion targets on a grid.
    ExperimentEquivariance {
        #[arg(long, default_value_t = 10)]
        grid_n: usize,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        /// Rotation angles (rad); defaults to 0.1, 0.2, ..., 1.0.
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
    },
    /// Voxelize a scan and summarize the occupied cells.
    Voxelize { scan: PathBuf },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Source {
    Gt,
    Icp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Writes `text` to `out/name`, or prints it when no output directory is set.
fn emit(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            println!("{}", path.display());
            Ok(())
        }
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn load_meshes(dir: &Path) -> Result<Vec<lidarmotion::pcio::TriangleMesh>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .obj meshes in {}", dir.display())));
    }
    paths.iter().map(read_mesh).collect()
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::Augment { scan, meshes } => {
            let out = out.ok_or_else(|| Error::InvalidArgument("augment needs --out".into()))?;
            let original = read_velodyne_bin(&scan)?;
            let meshes = load_meshes(&meshes)?;
            let aug = make_pair(&original, &meshes, &cfg.sensor, &cfg.augment, &cfg.grid, cli.seed)?;
            let manifest = aug.pair.save(out)?;
            log::info!("placed {} cars; scan_t has {} points", aug.cars.len(), aug.pair.scan_t.len());
            println!("{}", manifest.display());
        }
        Command::Evaluate {
            manifest,
            source,
            inject_dtheta,
            inject_dt,
            format,
        } => {
            let pair = AugmentedScenePair::load(&manifest, &cfg.grid)?;
            let mut pipeline = cfg.pipeline();
            pipeline.source = match source {
                Source::Gt => FieldSource::GroundTruth,
                Source::Icp => FieldSource::Icp,
            };
            let dt = inject_dt.map(|v| [v[0], v[1]]).unwrap_or([0.0, 0.0]);
            if inject_dtheta != 0.0 || dt != [0.0, 0.0] {
                pipeline.injection = Some(Injection { dtheta: inject_dtheta, dt });
            }
            let report = run_pipeline(&pair, &pipeline)?;
            match format {
                Format::Csv => emit(out, "report.csv", &report.to_csv())?,
                Format::Json => emit(out, "report.json", &json(&report)?)?,
            }
        }
        Command::IcpFlow { scan_t, scan_t1 } => {
            let a = read_velodyne_bin(&scan_t)?;
            let b = read_velodyne_bin(&scan_t1)?;
            let r = icp(&a.points, &b.points, &cfg.icp)?;
            let summary = serde_json::json!({
                "rotation": r.motion.rotation.row_iter().map(|row| [row[0], row[1], row[2]]).collect::<Vec<_>>(),
                "translation": [r.motion.translation.x, r.motion.translation.y, r.motion.translation.z],
                "planar": r.motion.to_planar(),
                "iterations": r.iterations,
                "converged": r.converged,
                "rms": r.final_rms(),
            });
            if let Some(dir) = out {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                write_flow(&flow_of(&r.motion, &a.points), dir.join("flow.bin"))?;
            }
            emit(out, "motion.json", &json(&summary)?)?;
        }
        Command::ExperimentEquivariance { grid_n, spacing, thetas } => {
            let thetas = thetas.unwrap_or_else(|| (1..=10).map(|i| i as f64 / 10.0).collect());
            let rows = stationarity_experiment(grid_n, spacing, &thetas)?;
            let mut csv = String::from("theta,world_spread,local_spread,closed_form\n");
            for r in rows {
                csv.push_str(&format!("{},{},{},{}\n", r.theta, r.world_spread, r.local_spread, r.closed_form));
            }
            emit(out, "equivariance.csv", &csv)?;
        }
        Command::Voxelize { scan } => {
            let cloud = read_velodyne_bin(&scan)?;
            let mut spec = cfg.grid;
            spec.rng_seed ^= cli.seed;
            let grid = voxelize(&cloud, &spec)?;
            let ground = flatten_to_ground(&grid);
            let summary = serde_json::json!({
                "points": cloud.len(),
                "occupied_voxels": grid.cells.len(),
                "ground_cells": ground.len(),
                "retained_points": grid.retained(),
                "subsampled_away": grid.discarded,
                "outside_grid": grid.dropped,
            });
            if let Some(dir) = out {
                let mut csv = String::from("i,j,k,count,occupied,density,dx,dy,dz,spread,reflectance\n");
                for (idx, c) in &grid.cells {
                    let f: Vec<String> = c.feature.iter().map(|v| v.to_string()).collect();
                    csv.push_str(&format!("{},{},{},{},{}\n", idx[0], idx[1], idx[2], c.total, f.join(",")));
                }
                emit(Some(dir), "voxels.csv", &csv)?;
            }
            emit(out, "voxelize.json", &json(&summary)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
