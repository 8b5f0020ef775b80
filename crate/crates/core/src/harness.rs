//! Experiment harness: run configuration, the coverage metric, per-iteration
//! CSV records, multi-run aggregation and the paired evaluator benchmark.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Point3;

use crate::error::{NbvError, Result};
use crate::mesh::{load_mesh, TriangleMesh};
use crate::oracle::{
    oracle_benchmark, oracle_evaluate_all, oracle_rank, write_benchmark_csv, DEFAULT_STRIDE,
};
use crate::planner::{Evaluator, IterationRecord, Planner, PlannerConfig};
use crate::projection::{evaluate_all, write_scores_csv};
use crate::render::{write_point_cloud_ply, Scene};
use crate::sampling::{write_candidates_csv, SamplingConfig, SamplingMode};

pub const COVERAGE_SAMPLES: usize = 10_000;
pub const COVERAGE_THRESHOLD: f64 = 0.005;
/// Fixed so every evaluator and seed is measured against the same samples.
pub const COVERAGE_SEED: u64 = 0x5eed_c0de;

pub const RECORDS_HEADER: &str = "iteration,coverage,compute_time_s,pos_x,pos_y,pos_z,partition,n_empty,n_occupied,n_unknown,n_frontier,n_eo,n_ef";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh_path: PathBuf,
    pub mode: SamplingMode,
    pub resolution: f64,
    pub t_max: usize,
    pub beta: usize,
    /// Number of parallels `α`.
    pub alpha: usize,
    /// Candidate count `N`.
    pub candidates: usize,
    pub working_distance: f64,
    /// Defaults to twice the resolution.
    pub gamma: Option<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub evaluator: Evaluator,
    pub initial_distance: f64,
    pub depth_noise: f64,
    pub coverage_threshold: f64,
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PlannerConfig::default();
        Self {
            mesh_path: PathBuf::new(),
            mode: SamplingMode::FullSphere,
            resolution: p.resolution,
            t_max: p.t_max,
            beta: p.beta,
            alpha: p.sampling.parallels,
            candidates: p.sampling.count,
            working_distance: p.sampling.working_distance,
            gamma: None,
            iterations: p.iterations,
            seed: p.seed,
            output_dir: None,
            evaluator: Evaluator::Projection,
            initial_distance: p.initial_distance,
            depth_noise: 0.0,
            coverage_threshold: COVERAGE_THRESHOLD,
            verbose: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| NbvError::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    /// Sets one option by name. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "mesh" | "mesh_path" => self.mesh_path = PathBuf::from(value),
            "mode" => self.mode = value.parse()?,
            "resolution" => self.resolution = parse_num(&key, value)?,
            "t_max" => self.t_max = parse_num(&key, value)?,
            "beta" => self.beta = parse_num(&key, value)?,
            "alpha" => self.alpha = parse_num(&key, value)?,
            "candidates" => self.candidates = parse_num(&key, value)?,
            "working_distance" => self.working_distance = parse_num(&key, value)?,
            "gamma" => self.gamma = Some(parse_num(&key, value)?),
            "iterations" => self.iterations = parse_num(&key, value)?,
            "seed" => self.seed = parse_num(&key, value)?,
            "out" | "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "evaluator" => {
                let stride = match self.evaluator {
                    Evaluator::Oracle { stride } => stride,
                    _ => DEFAULT_STRIDE,
                };
                self.evaluator = value.parse()?;
                if let Evaluator::Oracle { .. } = self.evaluator {
                    self.evaluator = Evaluator::Oracle { stride };
                }
            }
            "stride" => {
                let s: u32 = parse_num(&key, value)?;
                if s == 0 {
                    return Err(NbvError::Config("stride must be ≥ 1".into()));
                }
                if let Evaluator::Oracle { stride } = &mut self.evaluator {
                    *stride = s;
                } else {
                    return Err(NbvError::Config(
                        "stride applies to the oracle evaluator only".into(),
                    ));
                }
            }
            "initial_distance" => self.initial_distance = parse_num(&key, value)?,
            "depth_noise" => self.depth_noise = parse_num(&key, value)?,
            "coverage_threshold" => self.coverage_threshold = parse_num(&key, value)?,
            "verbose" => self.verbose = parse_num(&key, value)?,
            other => return Err(NbvError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| NbvError::Format {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(k, v).map_err(|e| NbvError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NbvError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Round-trippable `key=value` form (output directory omitted).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mesh={}", self.mesh_path.display());
        let _ = writeln!(out, "mode={}", self.mode);
        let _ = writeln!(out, "resolution={}", self.resolution);
        let _ = writeln!(out, "t_max={}", self.t_max);
        let _ = writeln!(out, "beta={}", self.beta);
        let _ = writeln!(out, "alpha={}", self.alpha);
        let _ = writeln!(out, "candidates={}", self.candidates);
        let _ = writeln!(out, "working_distance={}", self.working_distance);
        let _ = writeln!(out, "gamma={}", self.gamma());
        let _ = writeln!(out, "iterations={}", self.iterations);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "evaluator={}", self.evaluator.name());
        if let Evaluator::Oracle { stride } = self.evaluator {
            let _ = writeln!(out, "stride={stride}");
        }
        let _ = writeln!(out, "initial_distance={}", self.initial_distance);
        let _ = writeln!(out, "depth_noise={}", self.depth_noise);
        let _ = writeln!(out, "coverage_threshold={}", self.coverage_threshold);
        let _ = writeln!(out, "verbose={}", self.verbose);
        out
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(2.0 * self.resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coverage_threshold > 0.0) {
            return Err(NbvError::Config(
                "coverage_threshold must be positive".into(),
            ));
        }
        if self.alpha == 0 || self.candidates == 0 {
            return Err(NbvError::Config("alpha and candidates must be ≥ 1".into()));
        }
        self.planner_config().validate()
    }

    pub fn planner_config(&self) -> PlannerConfig {
        let base = PlannerConfig::default();
        PlannerConfig {
            resolution: self.resolution,
            t_max: self.t_max,
            beta: self.beta,
            sampling: SamplingConfig {
                mode: self.mode,
                parallels: self.alpha,
                count: self.candidates,
                working_distance: self.working_distance,
                ..SamplingConfig::default()
            },
            gamma: self.gamma(),
            iterations: self.iterations,
            seed: self.seed,
            evaluator: self.evaluator,
            initial_distance: self.initial_distance,
            depth_noise: self.depth_noise,
            ..base
        }
    }
}

type CellKey = [i64; 3];

fn cell_of(p: &Point3<f64>, size: f64) -> CellKey {
    [0, 1, 2].map(|k| (p[k] / size).floor() as i64)
}

/// Incremental coverage: which model samples have an acquired point within
/// the threshold. Exact; samples are bucketed in a hash grid of cell size
/// `threshold`.
#[derive(Debug, Clone)]
pub struct CoverageTracker {
    samples: Vec<Point3<f64>>,
    cells: HashMap<CellKey, Vec<u32>>,
    covered: Vec<bool>,
    n_covered: usize,
    threshold: f64,
}

impl CoverageTracker {
    pub fn new(samples: Vec<Point3<f64>>, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(NbvError::InvalidArgument(
                "coverage threshold must be positive".into(),
            ));
        }
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        for (i, p) in samples.iter().enumerate() {
            cells
                .entry(cell_of(p, threshold))
                .or_default()
                .push(i as u32);
        }
        Ok(Self {
            covered: vec![false; samples.len()],
            samples,
            cells,
            n_covered: 0,
            threshold,
        })
    }

    pub fn add_points(&mut self, points: &[Point3<f64>]) {
        let t2 = self.threshold * self.threshold;
        for p in points {
            let c = cell_of(p, self.threshold);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz])
                        else {
                            continue;
                        };
                        for &i in bucket {
                            let i = i as usize;
                            if !self.covered[i] && (self.samples[i] - p).norm_squared() <= t2 {
                                self.covered[i] = true;
                                self.n_covered += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn fraction(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.n_covered as f64 / self.samples.len() as f64
        }
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }
}

/// Fraction of `model` points with an `acquired` point within `threshold`.
pub fn coverage(model: &[Point3<f64>], acquired: &[Point3<f64>], threshold: f64) -> Result<f64> {
    let mut t = CoverageTracker::new(model.to_vec(), threshold)?;
    t.add_points(acquired);
    Ok(t.fraction())
}

/// One row of `records.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub iteration: usize,
    pub coverage: f64,
    pub compute_time_s: f64,
    pub position: [f64; 3],
    pub partition: usize,
    pub n_empty: usize,
    pub n_occupied: usize,
    pub n_unknown: usize,
    pub n_frontier: usize,
    pub n_eo: usize,
    pub n_ef: usize,
}

impl RecordRow {
    fn from_record(rec: &IterationRecord, coverage: f64) -> Self {
        let p = rec.view.pose.position();
        Self {
            iteration: rec.iteration,
            coverage,
            compute_time_s: rec.times.compute().as_secs_f64(),
            position: [p.x, p.y, p.z],
            partition: rec.view.partition,
            n_empty: rec.counts.empty,
            n_occupied: rec.counts.occupied,
            n_unknown: rec.counts.unknown,
            n_frontier: rec.counts.frontier,
            n_eo: rec.n_eo,
            n_ef: rec.n_ef,
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.coverage,
            self.compute_time_s,
            self.position[0],
            self.position[1],
            self.position[2],
            self.partition,
            self.n_empty,
            self.n_occupied,
            self.n_unknown,
            self.n_frontier,
            self.n_eo,
            self.n_ef
        )
    }
}

/// Extends `rows` to `iterations` entries by repeating the last row; the
/// repeated rows carry no compute time.
pub fn pad_rows(rows: &mut Vec<RecordRow>, iterations: usize) {
    while let Some(last) = rows.last().cloned() {
        if rows.len() >= iterations {
            break;
        }
        rows.push(RecordRow {
            iteration: last.iteration + 1,
            compute_time_s: 0.0,
            ..last
        });
    }
}

pub fn write_records_csv(path: &Path, rows: &[RecordRow]) -> Result<()> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| NbvError::io(path, e))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<RecordRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| NbvError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORDS_HEADER => {}
        _ => {
            return Err(NbvError::Format {
                line: 1,
                message: format!("expected header {RECORDS_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| NbvError::Format {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 13 {
            return Err(bad("expected 13 fields"));
        }
        let num = |k: usize| {
            f[k].trim()
                .parse::<f64>()
                .map_err(|_| bad(&format!("bad number {:?}", f[k])))
        };
        let int = |k: usize| {
            f[k].trim()
                .parse::<usize>()
                .map_err(|_| bad(&format!("bad integer {:?}", f[k])))
        };
        rows.push(RecordRow {
            iteration: int(0)?,
            coverage: num(1)?,
            compute_time_s: num(2)?,
            position: [num(3)?, num(4)?, num(5)?],
            partition: int(6)?,
            n_empty: int(7)?,
            n_occupied: int(8)?,
            n_unknown: int(9)?,
            n_frontier: int(10)?,
            n_eo: int(11)?,
            n_ef: int(12)?,
        });
    }
    Ok(rows)
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// One row per budgeted iteration, padded after early termination.
    pub rows: Vec<RecordRow>,
    /// Coverage after the initial view alone.
    pub initial_coverage: f64,
    pub records: Vec<IterationRecord>,
    pub cloud: Vec<Point3<f64>>,
    pub visit_order: Vec<(usize, usize)>,
}

impl RunOutcome {
    pub fn final_coverage(&self) -> f64 {
        self.rows
            .last()
            .map_or(self.initial_coverage, |r| r.coverage)
    }

    pub fn total_compute_time(&self) -> f64 {
        self.rows.iter().map(|r| r.compute_time_s).sum()
    }
}

/// Loads the configured mesh and runs it.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let mesh = load_mesh(&cfg.mesh_path)?;
    run_mesh(mesh, cfg)
}

/// Runs the planning loop on an in-memory mesh and writes artifacts when an
/// output directory is configured.
pub fn run_mesh(mesh: TriangleMesh, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let samples = mesh.sample_surface(COVERAGE_SAMPLES, COVERAGE_SEED);
    let mut tracker = CoverageTracker::new(samples, cfg.coverage_threshold)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| NbvError::io(dir, e))?;
        let path = dir.join("config.txt");
        std::fs::write(&path, cfg.to_text()).map_err(|e| NbvError::io(&path, e))?;
    }

    let mut planner = Planner::new(Scene::new(mesh), cfg.planner_config())?;
    tracker.add_points(&planner.state.cloud);
    let initial_coverage = tracker.fraction();
    let mut seen = planner.state.cloud.len();
    let mut rows = Vec::with_capacity(cfg.iterations);
    if cfg.verbose {
        dump_iteration(cfg, &planner, 0)?;
    }

    while !planner.is_done() {
        let rec = planner.run_iteration()?.clone();
        tracker.add_points(&planner.state.cloud[seen..]);
        seen = planner.state.cloud.len();
        rows.push(RecordRow::from_record(&rec, tracker.fraction()));
        if cfg.verbose {
            dump_iteration(cfg, &planner, rec.iteration)?;
        }
    }
    if rows.len() < cfg.iterations {
        log::info!(
            "terminated early after {} iterations; padding records",
            rows.len()
        );
    }
    if rows.is_empty() {
        // frontier never appeared: repeat the initial view's state
        let st = &planner.state;
        let pose = cfg.planner_config().initial_pose()?;
        let p = pose.position();
        let c = st.grid.counts();
        rows.push(RecordRow {
            iteration: 1,
            coverage: initial_coverage,
            compute_time_s: 0.0,
            position: [p.x, p.y, p.z],
            partition: 0,
            n_empty: c.empty,
            n_occupied: c.occupied,
            n_unknown: c.unknown,
            n_frontier: c.frontier,
            n_eo: st.ellipsoids.occupied.len(),
            n_ef: st.ellipsoids.frontier.len(),
        });
    }
    pad_rows(&mut rows, cfg.iterations);

    if let Some(dir) = &cfg.output_dir {
        write_records_csv(&dir.join("records.csv"), &rows)?;
        write_point_cloud_ply(&dir.join("final.ply"), &planner.state.cloud)?;
    }
    let st = planner.state;
    Ok(RunOutcome {
        rows,
        initial_coverage,
        records: st.records,
        cloud: st.cloud,
        visit_order: st.ledger.visit_order,
    })
}

fn dump_iteration(cfg: &RunConfig, planner: &Planner, iteration: usize) -> Result<()> {
    let Some(out) = &cfg.output_dir else {
        return Ok(());
    };
    let dir = out.join(format!("iter_{iteration:03}"));
    std::fs::create_dir_all(&dir).map_err(|e| NbvError::io(&dir, e))?;
    let st = &planner.state;
    st.grid.write_ply(&dir.join("voxels.ply"))?;
    let path = dir.join("ellipsoids.txt");
    std::fs::write(&path, st.ellipsoids.dump()).map_err(|e| NbvError::io(&path, e))?;
    if !st.last_candidates.is_empty() {
        write_candidates_csv(&dir.join("candidates.csv"), &st.last_candidates)?;
        if !st.last_view_scores.is_empty() {
            write_scores_csv(
                &dir.join("scores.csv"),
                &st.last_candidates,
                &st.last_view_scores,
            )?;
        }
    }
    Ok(())
}

/// Per-iteration aggregate across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iteration: usize,
    pub coverage_mean: f64,
    pub coverage_std: f64,
    pub time_mean: f64,
    pub time_std: f64,
    pub runs: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and (population) standard deviation per iteration. Shorter runs are
/// extended by repeating their last row.
pub fn summarize_rows(runs: &[Vec<RecordRow>]) -> Result<Vec<SummaryRow>> {
    if runs.is_empty() || runs.iter().any(|r| r.is_empty()) {
        return Err(NbvError::EmptyInput(
            "summarize needs at least one nonempty run".into(),
        ));
    }
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    let padded: Vec<Vec<RecordRow>> = runs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            pad_rows(&mut r, len);
            r
        })
        .collect();
    Ok((0..len)
        .map(|i| {
            let cov: Vec<f64> = padded.iter().map(|r| r[i].coverage).collect();
            let time: Vec<f64> = padded.iter().map(|r| r[i].compute_time_s).collect();
            let (coverage_mean, coverage_std) = mean_std(&cov);
            let (time_mean, time_std) = mean_std(&time);
            SummaryRow {
                iteration: i + 1,
                coverage_mean,
                coverage_std,
                time_mean,
                time_std,
                runs: runs.len(),
            }
        })
        .collect())
}

/// Reads `records.csv` from every directory and aggregates.
pub fn summarize(run_dirs: &[PathBuf]) -> Result<Vec<SummaryRow>> {
    let runs = run_dirs
        .iter()
        .map(|d| read_records_csv(&d.join("records.csv")))
        .collect::<Result<Vec<_>>>()?;
    summarize_rows(&runs)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "iteration,coverage_mean,coverage_std,compute_time_mean,compute_time_std,runs\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.coverage_mean, r.coverage_std, r.time_mean, r.time_std, r.runs
        );
    }
    out
}

/// Paired timing of both evaluators on one mid-scan state.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub candidates: usize,
    pub active_voxels: usize,
    pub ellipsoids: usize,
    pub projection_s: f64,
    pub oracle_s: f64,
    pub stride: u32,
    pub spearman: f64,
    /// Position of the projection's best candidate in the oracle ranking.
    pub top1_oracle_rank: usize,
}

impl BenchReport {
    pub fn speedup(&self) -> f64 {
        self.oracle_s / self.projection_s
    }
}

/// Voxels that carry evidence about the surface: occupied and frontier.
pub fn active_voxels(counts: &crate::voxel::StateCounts) -> usize {
    counts.occupied + counts.frontier
}

/// Runs `warmup` planning iterations, then times projection and oracle
/// scoring of the same candidate set.
pub fn bench(
    mesh: TriangleMesh,
    cfg: &RunConfig,
    warmup: usize,
    stride: u32,
) -> Result<BenchReport> {
    let mut pcfg = cfg.planner_config();
    pcfg.iterations = warmup.max(1);
    pcfg.evaluator = Evaluator::Projection;
    let mut planner = Planner::new(Scene::new(mesh), pcfg)?;
    for _ in 0..warmup {
        planner.run_iteration()?;
    }
    let report = bench_state(&planner, stride)?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| NbvError::io(dir, e))?;
        let st = &planner.state;
        let mut cands = planner.sample()?;
        let scores = evaluate_all(&mut cands, &st.ellipsoids, &st.config.intrinsics)?;
        write_scores_csv(&dir.join("projection.csv"), &cands, &scores)?;
        let rows = oracle_benchmark(&cands, &st.grid, &st.config.intrinsics, stride);
        write_benchmark_csv(&dir.join("oracle.csv"), &rows)?;
    }
    Ok(report)
}

/// Times both evaluators on the planner's current state.
pub fn bench_state(planner: &Planner, stride: u32) -> Result<BenchReport> {
    let st = &planner.state;
    let k = st.config.intrinsics;
    let mut cands = planner.sample()?;

    let t = Instant::now();
    evaluate_all(&mut cands, &st.ellipsoids, &k)?;
    let projection_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let oracle = oracle_evaluate_all(&cands, &st.grid, &k, stride);
    let oracle_s = t.elapsed().as_secs_f64();

    let proj: Vec<f64> = cands.iter().map(|c| c.score.unwrap_or(0.0)).collect();
    let orc: Vec<f64> = oracle.iter().map(|s| s.visible_frontier as f64).collect();
    let best = argmax_first(&proj);
    let order = oracle_rank(&oracle);
    let top1_oracle_rank = order.iter().position(|&i| i == best).unwrap_or(order.len());
    Ok(BenchReport {
        candidates: cands.len(),
        active_voxels: active_voxels(&st.grid.counts()),
        ellipsoids: st.ellipsoids.len(),
        projection_s,
        oracle_s,
        stride,
        spearman: spearman(&proj, &orc),
        top1_oracle_rank,
    })
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iteration: usize, coverage: f64, t: f64) -> RecordRow {
        RecordRow {
            iteration,
            coverage,
            compute_time_s: t,
            position: [0.0; 3],
            partition: 0,
            n_empty: 0,
            n_occupied: 0,
            n_unknown: 0,
            n_frontier: 0,
            n_eo: 0,
            n_ef: 0,
        }
    }

    #[test]
    fn coverage_basics() {
        let model = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0)];
        assert_eq!(coverage(&model, &model, 0.005).unwrap(), 1.0);
        assert_eq!(
            coverage(&model, &[Point3::new(0.003, 0.0, 0.0)], 0.005).unwrap(),
            0.5
        );
        assert_eq!(coverage(&model, &[], 0.005).unwrap(), 0.0);
        // boundary counts as within
        assert_eq!(
            coverage(&model, &[Point3::new(1.0, 0.0, 0.004)], 0.004).unwrap(),
            0.5
        );
    }

    #[test]
    fn tracker_is_incremental() {
        let model: Vec<_> = (0..50)
            .map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0))
            .collect();
        let mut t = CoverageTracker::new(model.clone(), 0.005).unwrap();
        t.add_points(&model[..10]);
        let a = t.fraction();
        t.add_points(&model[..10]);
        assert_eq!(t.fraction(), a);
        t.add_points(&model[10..]);
        assert_eq!(t.fraction(), 1.0);
    }

    #[test]
    fn config_text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "mesh = a.obj\nmode=hemisphere # comment\nt-max=5\nevaluator=oracle\nstride=2\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, SamplingMode::Hemisphere);
        assert_eq!(cfg.t_max, 5);
        assert_eq!(cfg.evaluator, Evaluator::Oracle { stride: 2 });
        let mut again = RunConfig::default();
        again.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(again.evaluator, cfg.evaluator);
        assert_eq!(again.mesh_path, cfg.mesh_path);
        assert_eq!(again.gamma(), cfg.gamma());
    }

    #[test]
    fn config_rejects_unknown_and_malformed() {
        let mut cfg = RunConfig::default();
        assert!(matches!(
            cfg.apply_text("colour=red"),
            Err(NbvError::Format { line: 1, .. })
        ));
        assert!(cfg.apply_text("\n\nbeta").is_err());
        assert!(cfg.set("beta", "four").is_err());
        assert!(cfg.set("evaluator", "greedy").is_err());
    }

    #[test]
    fn padding_repeats_last_row() {
        let mut rows: Vec<RecordRow> = (1..=7).map(|i| row(i, i as f64 / 10.0, 1.0)).collect();
        pad_rows(&mut rows, 10);
        assert_eq!(rows.len(), 10);
        for r in &rows[7..] {
            assert_eq!(r.coverage, 0.7);
            assert_eq!(r.compute_time_s, 0.0);
        }
        assert_eq!(rows[9].iteration, 10);
    }

    #[test]
    fn summarize_means() {
        let one = vec![row(1, 0.2, 1.0), row(2, 0.3, 1.0), row(3, 0.4, 2.0)];
        let s = summarize_rows(std::slice::from_ref(&one)).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[2].coverage_mean, 0.4);
        assert_eq!(s[2].coverage_std, 0.0);
        let two = vec![row(1, 0.2, 1.0), row(2, 0.3, 1.0), row(3, 0.6, 4.0)];
        let s = summarize_rows(&[one, two]).unwrap();
        assert!((s[2].coverage_mean - 0.5).abs() < 1e-12);
        assert!((s[2].time_mean - 3.0).abs() < 1e-12);
        assert!(summarize_rows(&[]).is_err());
    }

    #[test]
    fn records_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let rows = vec![row(1, 0.25, 0.5), row(2, 0.5, 0.25)];
        write_records_csv(&path, &rows).unwrap();
        assert_eq!(read_records_csv(&path).unwrap(), rows);
        std::fs::write(&path, "nope\n").unwrap();
        assert!(read_records_csv(&path).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}
