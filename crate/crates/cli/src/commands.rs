//! The five pipeline stages. Each reads its inputs from the output directory written by
//! the earlier stages and writes matrices, CSV tables and a JSON sidecar.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use hamrom::basis::{
    complex_svd_basis, cotangent_lift_basis, greedy_symplectic_basis, trajectory_snapshots,
    GreedyConfig, SnapshotSet,
};
use hamrom::deim::{
    deim_operator_from_snapshots, pair_indices, sdeim_basis, sdeim_operator, symplectic_projector,
    DeimOperator,
};
use hamrom::integrators::integrate;
use hamrom::matrix::DenseMatrix;
use hamrom::rom::{assemble_pod_rom, assemble_symplectic_rom, error_series, simulate_rom, NonlinearPath};
use hamrom::svd::left_singular_vectors;
use hamrom::symplectic::{apply_j_columns, GramSchmidtOptions, SymplecticBasis};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    ensure_dir, read_json, read_matrix, read_table, write_json, write_matrix, write_table,
    write_text, Layout,
};
use crate::config::{BasisMethod, DeimMethod, ExperimentConfig, ModelSpec};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Snapshots,
    BuildBasis,
    BuildDeim,
    Simulate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Self::Snapshots => "snapshots",
            Self::BuildBasis => "build-basis",
            Self::BuildDeim => "build-deim",
            Self::Simulate => "simulate",
            Self::Report => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub model: String,
    pub config_hash: String,
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub parameters: usize,
    pub columns: usize,
    pub nonlinear: bool,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub method: String,
    pub model: String,
    pub n: usize,
    pub k: usize,
    pub columns: usize,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_s: f64,
    /// Wall time of the snapshot stage the basis was computed from.
    pub snapshot_wall_time_s: Option<f64>,
    pub symplectic_residual: Option<f64>,
    pub orthonormality_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeimMeta {
    pub method: String,
    pub basis_method: String,
    pub m: usize,
    /// Half-dimension of the reduced system after enrichment.
    pub reduced_k: usize,
    pub indices: usize,
    pub paired: bool,
    pub closure_verified: bool,
    pub condition_number: f64,
    pub config_hash: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateMeta {
    pub omega: Vec<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub basis_method: String,
    pub nonlinear_path: String,
    pub reduced_dim: usize,
    pub final_l2: f64,
    pub delta_h_deviation: f64,
    pub fom_wall_time_s: f64,
    pub rom_wall_time_s: f64,
    pub config_hash: String,
}

pub fn run(stage: Stage, cfg: &ExperimentConfig) -> CliResult<()> {
    let layout = Layout::new(&cfg.output.dir);
    ensure_dir(layout.root())?;
    info!("{} into {}", stage.name(), layout.root().display());
    match stage {
        Stage::Snapshots => cmd_snapshots(cfg, &layout),
        Stage::BuildBasis => cmd_build_basis(cfg, &layout),
        Stage::BuildDeim => cmd_build_deim(cfg, &layout),
        Stage::Simulate => cmd_simulate(cfg, &layout),
        Stage::Report => cmd_report(cfg, &layout),
    }
}

fn core(context: &str) -> impl FnOnce(hamrom::error::Error) -> CliError + '_ {
    move |e| CliError::from_core(context, e)
}

fn omega_header(prefix: &[&str], dim: usize) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend((1..=dim).map(|i| format!("omega_{i}")));
    h
}

pub fn cmd_snapshots(cfg: &ExperimentConfig, layout: &Layout) -> CliResult<()> {
    let built = cfg.build_model()?;
    let model = built.model.as_ref();
    let params = cfg.parameter_grid(model)?;
    let opts = cfg.snapshot_options();
    let record = model.has_nonlinearity();
    let start = Instant::now();
    let runs = params
        .par_iter()
        .map(|w| {
            trajectory_snapshots(model, &built.grid, w, &opts, record)
                .map_err(|e| CliError::from_core(format!("full-order run at omega = {:?}", w.coords()), e))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let wall = start.elapsed().as_secs_f64();

    let mut all = SnapshotSet::empty(2 * model.half_dim());
    let mut provenance = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        for j in 0..run.len() {
            let mut row = vec![(all.len() + j) as f64, i as f64, run.time(j)];
            row.extend_from_slice(run.omega(j).coords());
            provenance.push(row);
        }
        all.append(run).map_err(core("stacking snapshots"))?;
    }
    info!("{} snapshots from {} parameters in {wall:.2} s", all.len(), params.len());

    let dir = layout.snapshots();
    ensure_dir(&dir)?;
    write_matrix(&dir.join("states.bin"), all.states())?;
    if let Some(g) = all.nonlinear() {
        write_matrix(&dir.join("nonlinear.bin"), g)?;
    }
    let header = omega_header(&["column", "param_index", "t"], model.parameter_box().dim());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(&dir.join("columns.csv"), &header, provenance)?;
    write_json(
        &dir.join("meta.json"),
        &SnapshotMeta {
            model: cfg.model_id().into(),
            config_hash: cfg.hash(),
            seed: cfg.output.seed,
            dt: cfg.time.dt,
            t_final: cfg.time.t_final,
            stride: cfg.time.snapshot_stride,
            parameters: params.len(),
            columns: all.len(),
            nonlinear: record,
            wall_time_s: wall,
        },
    )
}

pub fn cmd_build_basis(cfg: &ExperimentConfig, layout: &Layout) -> CliResult<()> {
    let built = cfg.build_model()?;
    let model = built.model.as_ref();
    let method = cfg.basis.method;
    let k = cfg.basis.k;
    let dir = layout.basis(method.name());
    ensure_dir(&dir)?;

    let start = Instant::now();
    let mut snapshot_wall = None;
    let basis = if method == BasisMethod::Greedy {
        let params = cfg.parameter_grid(model)?;
        let dim = model.parameter_box().dim();
        let mut g = GreedyConfig::new(cfg.basis.delta, params, k, built.grid.clone());
        g.min_k = cfg.basis.min_k;
        g.indicator = cfg.basis.indicator.into();
        g.integrate = cfg.snapshot_options();
        g.fresh_snapshots = cfg.basis.fresh_snapshots;
        g.record_nonlinear = model.has_nonlinearity();
        let out = greedy_symplectic_basis(model, &g).map_err(core("greedy basis generation"))?;
        let rows = out.report.iterations.iter().enumerate().map(|(i, it)| {
            let mut row = vec![i as f64 + 1.0, it.k as f64, it.param_index as f64, it.indicator, it.sigma];
            row.extend_from_slice(it.omega.coords());
            row
        });
        let header = omega_header(&["iteration", "k", "param_index", "indicator", "sigma"], dim);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(&dir.join("greedy_report.csv"), &header, rows.collect::<Vec<_>>())?;
        write_matrix(&dir.join("greedy_states.bin"), out.snapshots.states())?;
        if let Some(sg) = out.snapshots.nonlinear() {
            write_matrix(&dir.join("greedy_nonlinear.bin"), sg)?;
        }
        out.basis.matrix()
    } else {
        let snaps = layout.snapshots();
        let states = read_matrix(&snaps.join("states.bin"), "snapshots")?;
        let meta: SnapshotMeta = read_json(&snaps.join("meta.json"), "snapshots")?;
        snapshot_wall = Some(meta.wall_time_s);
        let set = SnapshotSet::from_states(states);
        match method {
            BasisMethod::Pod => {
                let (sigmas, left) = left_singular_vectors(set.states(), 2 * k).map_err(core("POD"))?;
                let rows = sigmas.iter().enumerate().map(|(i, &s)| vec![i as f64 + 1.0, s]);
                write_table(&dir.join("singular_values.csv"), &["index", "sigma"], rows.collect::<Vec<_>>())?;
                left
            }
            BasisMethod::Cotangent => cotangent_lift_basis(&set, k).map_err(core("cotangent lift"))?.matrix(),
            BasisMethod::Csvd => complex_svd_basis(&set, k).map_err(core("complex SVD"))?.matrix(),
            BasisMethod::Greedy => unreachable!(),
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let symplectic_residual = method
        .is_symplectic()
        .then(|| to_symplectic(&basis).map(|a| a.symplectic_residual()))
        .transpose()?;
    info!("{} basis with {} columns in {wall:.2} s", method.name(), basis.cols());
    write_matrix(&dir.join("basis.bin"), &basis)?;
    write_json(
        &dir.join("meta.json"),
        &BasisMeta {
            method: method.name().into(),
            model: cfg.model_id().into(),
            n: model.half_dim(),
            k: basis.cols() / 2,
            columns: basis.cols(),
            config_hash: cfg.hash(),
            seed: cfg.output.seed,
            wall_time_s: wall,
            snapshot_wall_time_s: snapshot_wall,
            symplectic_residual,
            orthonormality_residual: basis.orthonormality_residual(),
        },
    )
}

fn to_symplectic(a: &DenseMatrix<f64>) -> CliResult<SymplecticBasis<f64>> {
    if a.cols() % 2 != 0 {
        return Err(CliError::Config(format!("symplectic basis has odd column count {}", a.cols())));
    }
    SymplecticBasis::from_e_block(a.column_block(0, a.cols() / 2)).map_err(core("loading symplectic basis"))
}

/// `Vᵀ J₂ₙ`, the row operator of the Galerkin projection onto orthonormal `V`.
fn galerkin_projector(v: &DenseMatrix<f64>) -> CliResult<DenseMatrix<f64>> {
    Ok(apply_j_columns(v, true).map_err(core("projector"))?.transpose())
}

fn nonlinear_snapshots(cfg: &ExperimentConfig, layout: &Layout) -> CliResult<DenseMatrix<f64>> {
    let (path, stage) = if cfg.basis.method == BasisMethod::Greedy {
        (layout.basis("greedy").join("greedy_nonlinear.bin"), "build-basis")
    } else {
        (layout.snapshots().join("nonlinear.bin"), "snapshots")
    };
    let sg = read_matrix(&path, stage)?;
    if sg.cols() == 0 {
        return Err(CliError::Config(format!("{}: empty nonlinear snapshot set", path.display())));
    }
    Ok(sg)
}

fn write_indices(path: &Path, indices: &[usize]) -> CliResult<()> {
    let rows = indices.iter().enumerate().map(|(r, &i)| vec![r as f64, i as f64]);
    write_table(path, &["position", "index"], rows.collect::<Vec<_>>())
}

fn read_indices(path: &Path) -> CliResult<Vec<usize>> {
    let (_, rows) = read_table(path, "build-deim")?;
    Ok(rows.iter().map(|r| r[1] as usize).collect())
}

pub fn cmd_build_deim(cfg: &ExperimentConfig, layout: &Layout) -> CliResult<()> {
    let built = cfg.build_model()?;
    let model = built.model.as_ref();
    if cfg.deim.method == DeimMethod::None {
        return Err(CliError::Config("deim.method is 'none'".into()));
    }
    if !model.has_nonlinearity() {
        return Err(CliError::Config(format!("model '{}' has no nonlinear term to interpolate", model.name())));
    }
    let basis = read_matrix(&layout.basis(cfg.basis.method.name()).join("basis.bin"), "build-basis")?;
    let sg = nonlinear_snapshots(cfg, layout)?;
    let pairing = cfg.deim.pairing.into();
    let dir = layout.deim();
    ensure_dir(&dir)?;

    let start = Instant::now();
    let (reduced, op) = match cfg.deim.method {
        DeimMethod::Sdeim => {
            if !cfg.basis.method.is_symplectic() {
                return Err(CliError::Config("SDEIM needs a symplectic basis method".into()));
            }
            let a = to_symplectic(&basis)?;
            let big = sdeim_basis(&a, &sg, cfg.deim.delta, Some(cfg.deim.m), &GramSchmidtOptions::default())
                .map_err(core("SDEIM basis enrichment"))?;
            let op = sdeim_operator(&big, pairing).map_err(core("SDEIM index selection"))?;
            (big.matrix(), op)
        }
        DeimMethod::Deim => {
            let op = if cfg.basis.method.is_symplectic() {
                deim_operator_from_snapshots(&to_symplectic(&basis)?, &sg, cfg.deim.m, pairing)
            } else {
                let w = galerkin_projector(&basis)?;
                left_singular_vectors(&sg, cfg.deim.m).and_then(|(_, u)| DeimOperator::new(u, &w, pairing))
            }
            .map_err(core("DEIM index selection"))?;
            (basis, op)
        }
        DeimMethod::None => unreachable!(),
    };
    let wall = start.elapsed().as_secs_f64();

    let mut sorted = op.indices().to_vec();
    sorted.sort_unstable();
    let closure_verified = op.paired() && pair_indices(op.indices(), model.half_dim()) == sorted;
    write_matrix(&dir.join("basis.bin"), &reduced)?;
    write_matrix(&dir.join("u.bin"), op.basis())?;
    write_indices(&dir.join("indices.csv"), op.indices())?;
    write_json(
        &dir.join("meta.json"),
        &DeimMeta {
            method: match cfg.deim.method {
                DeimMethod::Sdeim => "sdeim",
                _ => "deim",
            }
            .into(),
            basis_method: cfg.basis.method.name().into(),
            m: cfg.deim.m,
            reduced_k: reduced.cols() / 2,
            indices: op.indices().len(),
            paired: op.paired(),
            closure_verified,
            condition_number: op.condition_number(),
            config_hash: cfg.hash(),
            wall_time_s: wall,
        },
    )
}

pub fn cmd_simulate(cfg: &ExperimentConfig, layout: &Layout) -> CliResult<()> {
    let built = cfg.build_model()?;
    let model = built.model.as_ref();
    let omega = cfg.test_parameter();
    let grid = built
        .grid
        .with_time(cfg.time.dt, cfg.simulate.t_final)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut opts = cfg.snapshot_options();
    opts.stride = cfg.simulate.stride;
    let method = cfg.basis.method;
    let basis = read_matrix(&layout.basis(method.name()).join("basis.bin"), "build-basis")?;

    let deim_method = if model.has_nonlinearity() { cfg.deim.method } else { DeimMethod::None };
    let (basis, path) = match deim_method {
        DeimMethod::None if model.has_nonlinearity() => (basis, NonlinearPath::Dense),
        DeimMethod::None => (basis, NonlinearPath::None),
        DeimMethod::Deim | DeimMethod::Sdeim => {
            let dir = layout.deim();
            let meta: DeimMeta = read_json(&dir.join("meta.json"), "build-deim")?;
            let u = read_matrix(&dir.join("u.bin"), "build-deim")?;
            let indices = read_indices(&dir.join("indices.csv"))?;
            let basis = if deim_method == DeimMethod::Sdeim {
                read_matrix(&dir.join("basis.bin"), "build-deim")?
            } else {
                basis
            };
            let w = if method.is_symplectic() {
                symplectic_projector(&basis).map_err(core("projector"))?
            } else {
                galerkin_projector(&basis)?
            };
            let op = DeimOperator::from_indices(u, indices, meta.paired, &w).map_err(core("loading DEIM operator"))?;
            if deim_method == DeimMethod::Sdeim {
                (basis, NonlinearPath::Sdeim(op))
            } else {
                (basis, NonlinearPath::Deim(op))
            }
        }
    };
    let path_name = path.name();

    let start = Instant::now();
    let z0 = model.initial_state(&omega).map_err(core("initial state"))?;
    let fom = integrate(model, &z0, &grid, &omega, &opts)
        .map_err(|e| CliError::from_core(format!("full-order run at omega = {:?}", omega.coords()), e))?;
    let fom_wall = start.elapsed().as_secs_f64();

    let rom = if method.is_symplectic() {
        assemble_symplectic_rom(model, &to_symplectic(&basis)?, path, &omega)
    } else {
        assemble_pod_rom(model, &basis, path, &omega)
    }
    .map_err(core("reduced model assembly"))?;
    let start = Instant::now();
    let traj = simulate_rom(&rom, &grid, &opts)
        .map_err(|e| CliError::from_core(format!("reduced run at omega = {:?}", omega.coords()), e))?;
    let rom_wall = start.elapsed().as_secs_f64();
    let series = error_series(&fom, &rom, &traj, grid.dx()).map_err(core("error series"))?;

    let lifted = traj
        .states
        .columns()
        .map(|y| rom.lift(y))
        .collect::<hamrom::error::Result<Vec<_>>>()
        .and_then(|cols| DenseMatrix::from_columns(fom.states.rows(), &cols))
        .map_err(core("lifting reduced states"))?;

    let dir = layout.simulate();
    ensure_dir(&dir)?;
    write_matrix(&dir.join("fom.bin"), &fom.states)?;
    write_matrix(&dir.join("rom.bin"), &lifted)?;
    let csv = dir.join("error_series.csv");
    let file = File::create(&csv).map_err(|source| CliError::Io { path: csv.clone(), source })?;
    series
        .write_csv(BufWriter::new(file))
        .map_err(|e| CliError::from_core(csv.display().to_string(), e))?;
    info!(
        "{} ROM ({path_name}) with {} reduced states: final L2 error {:e}",
        method.name(),
        rom.reduced_dim(),
        series.final_l2()
    );
    write_json(
        &dir.join("meta.json"),
        &SimulateMeta {
            omega: omega.coords().to_vec(),
            dt: cfg.time.dt,
            t_final: cfg.simulate.t_final,
            basis_method: method.name().into(),
            nonlinear_path: path_name.into(),
            reduced_dim: rom.reduced_dim(),
            final_l2: series.final_l2(),
            delta_h_deviation: series.delta_h_deviation(),
            fom_wall_time_s: fom_wall,
            rom_wall_time_s: rom_wall,
            config_hash: cfg.hash(),
        },
    )
}

pub fn cmd_report(cfg: &ExperimentConfig, layout: &Layout) -> CliResult<()> {
    let built = cfg.build_model()?;
    let sim = layout.simulate();
    let (_, series) = read_table(&sim.join("error_series.csv"), "simulate")?;
    let meta: SimulateMeta = read_json(&sim.join("meta.json"), "simulate")?;
    let dir = layout.report();
    ensure_dir(&dir)?;

    write_table(&dir.join("l2_error.csv"), &["t", "l2"], series.iter().map(|r| vec![r[0], r[1]]).collect::<Vec<_>>())?;
    write_table(
        &dir.join("hamiltonian.csv"),
        &["t", "H_full", "H_rom"],
        series.iter().map(|r| vec![r[0], r[2], r[3]]).collect::<Vec<_>>(),
    )?;

    let fom = read_matrix(&sim.join("fom.bin"), "simulate")?;
    let rom = read_matrix(&sim.join("rom.bin"), "simulate")?;
    let n = fom.rows() / 2;
    let (panels, nonlinear) = match cfg.model {
        ModelSpec::Wave { .. } => ([0.0, 1.0, 2.0], false),
        ModelSpec::Nls { .. } => ([0.0, 10.0, 20.0], true),
    };
    let times: Vec<f64> = series.iter().map(|r| r[0]).collect();
    for t in panels {
        let Some(j) = times.iter().position(|&s| (s - t).abs() <= 0.5 * cfg.time.dt) else {
            continue;
        };
        let value = |m: &DenseMatrix<f64>, i: usize| {
            let c = m.col(j);
            if nonlinear {
                c[i].hypot(c[n + i])
            } else {
                c[i]
            }
        };
        let rows = (0..n).map(|i| vec![built.grid.node(i + 1), value(&fom, i), value(&rom, i)]);
        let header = if nonlinear { ["x", "abs_u_full", "abs_u_rom"] } else { ["x", "q_full", "q_rom"] };
        write_table(&dir.join(format!("solution_t{t}.csv")), &header, rows.collect::<Vec<_>>())?;
    }

    let mut summary = String::from("offline stage\n");
    summary.push_str(&format!("{:<10} {:>8} {:>14} {:>14} {:>14}\n", "method", "columns", "basis_s", "snapshots_s", "total_s"));
    let mut totals = Vec::new();
    for method in [BasisMethod::Pod, BasisMethod::Cotangent, BasisMethod::Csvd, BasisMethod::Greedy] {
        let bdir = layout.basis(method.name());
        let sv = bdir.join("singular_values.csv");
        if sv.exists() {
            let (_, rows) = read_table(&sv, "build-basis")?;
            write_table(&dir.join(format!("singular_values_{}.csv", method.name())), &["index", "sigma"], rows)?;
        }
        let gr = bdir.join("greedy_report.csv");
        if gr.exists() {
            let (_, rows) = read_table(&gr, "build-basis")?;
            let conv = rows.iter().map(|r| vec![r[1], r[4]]).collect::<Vec<_>>();
            write_table(&dir.join("greedy_convergence.csv"), &["k", "max_l2_error"], conv)?;
        }
        let mpath = bdir.join("meta.json");
        if mpath.exists() {
            let m: BasisMeta = read_json(&mpath, "build-basis")?;
            let snap = m.snapshot_wall_time_s.unwrap_or(0.0);
            let total = m.wall_time_s + snap;
            summary.push_str(&format!(
                "{:<10} {:>8} {:>14.3} {:>14.3} {:>14.3}\n",
                m.method, m.columns, m.wall_time_s, snap, total
            ));
            totals.push((method, total));
        }
    }
    if let Some(&(_, greedy)) = totals.iter().find(|(m, _)| *m == BasisMethod::Greedy) {
        for (m, t) in totals.iter().filter(|(m, _)| *m != BasisMethod::Greedy) {
            summary.push_str(&format!("offline time ratio greedy/{}: {:.3}\n", m.name(), greedy / t));
        }
    }
    let dmeta = layout.deim().join("meta.json");
    if dmeta.exists() {
        let d: DeimMeta = read_json(&dmeta, "build-deim")?;
        summary.push_str(&format!(
            "{}: {} indices, reduced k = {}, cond = {:.3e}, closure verified = {}, {:.3} s\n",
            d.method, d.indices, d.reduced_k, d.condition_number, d.closure_verified, d.wall_time_s
        ));
    }
    summary.push_str("\nonline stage\n");
    summary.push_str(&format!(
        "omega = {:?}, basis = {}, nonlinear term = {}, reduced dimension = {}\n",
        meta.omega, meta.basis_method, meta.nonlinear_path, meta.reduced_dim
    ));
    summary.push_str(&format!(
        "full model {:.3} s, reduced model {:.3} s\nfinal L2 error {:.6e}\nmax |dH(t) - dH(0)| {:.6e}\n",
        meta.fom_wall_time_s, meta.rom_wall_time_s, meta.final_l2, meta.delta_h_deviation
    ));
    write_text(&dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
