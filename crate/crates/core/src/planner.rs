//! The next-best-view loop: sample, score, pick under the longitude
//! partition constraint, observe, update the map, refit.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ellipsoid::{refit_all, EllipsoidSet, FitConfig};
use crate::error::{NbvError, Result};
use crate::geometry::{Aabb, CameraIntrinsics, Pose};
use crate::oracle::{oracle_evaluate_all, DEFAULT_STRIDE};
use crate::projection::{evaluate_all, ViewScore};
use crate::render::{add_depth_noise, frame_to_points, render_depth, Scene};
use crate::sampling::{
    assign_partitions, point_on_sphere, sample_candidates, sampling_radius, CandidateView,
    SamplingConfig,
};
use crate::voxel::{preprocess, Observation, StateCounts, VoxelGrid, VoxelState};

/// Which scorer ranks the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    Projection,
    Oracle {
        stride: u32,
    },
    /// Uniform random scores; a seeded floor for comparisons.
    Random,
}

impl Evaluator {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Projection => "projection",
            Evaluator::Oracle { .. } => "oracle",
            Evaluator::Random => "random",
        }
    }
}

impl std::str::FromStr for Evaluator {
    type Err = NbvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "projection" => Ok(Evaluator::Projection),
            "oracle" => Ok(Evaluator::Oracle {
                stride: DEFAULT_STRIDE,
            }),
            "random" => Ok(Evaluator::Random),
            other => Err(NbvError::Config(format!("unknown evaluator {other:?}"))),
        }
    }
}

/// Partitions scanned so far and the order they were visited in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionLedger {
    pub beta: usize,
    pub scanned: BTreeSet<usize>,
    /// `(iteration, partition)` of every selection.
    pub visit_order: Vec<(usize, usize)>,
}

impl PartitionLedger {
    pub fn new(beta: usize) -> Result<Self> {
        if beta == 0 {
            return Err(NbvError::InvalidArgument("β must be ≥ 1".into()));
        }
        Ok(Self {
            beta,
            scanned: BTreeSet::new(),
            visit_order: Vec::new(),
        })
    }

    pub fn mark(&mut self, iteration: usize, partition: usize) {
        debug_assert!(partition < self.beta);
        self.scanned.insert(partition);
        self.visit_order.push((iteration, partition));
    }
}

/// Nothing scanned or everything scanned: all sectors. Otherwise the
/// unscanned sectors next to a scanned one (wrapping around).
pub fn admissible_partitions(ledger: &PartitionLedger) -> BTreeSet<usize> {
    let beta = ledger.beta;
    if ledger.scanned.is_empty() || ledger.scanned.len() == beta {
        return (0..beta).collect();
    }
    let mut out = BTreeSet::new();
    for &p in &ledger.scanned {
        for q in [(p + 1) % beta, (p + beta - 1) % beta] {
            if !ledger.scanned.contains(&q) {
                out.insert(q);
            }
        }
    }
    out
}

/// Position in `scored` of the highest score among candidates passing
/// `allowed`; ties go to the lower candidate index.
fn best_where(scored: &[CandidateView], allowed: impl Fn(usize) -> bool) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64, usize)> = None;
    for (pos, c) in scored.iter().enumerate() {
        let f = c.score.ok_or_else(|| {
            NbvError::InvalidArgument(format!("candidate {} has no score", c.index))
        })?;
        if !allowed(c.partition) {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bf, bi)) => f > bf || (f == bf && c.index < bi),
        };
        if better {
            best = Some((pos, f, c.index));
        }
    }
    Ok(best.map(|b| b.0))
}

/// Best-scoring admissible candidate; marks its partition scanned.
///
/// Fails with [`NbvError::ConstraintInfeasible`] when no candidate lies in
/// an admissible partition; the ledger is then left untouched.
pub fn select_next_view<'a>(
    scored: &'a [CandidateView],
    ledger: &mut PartitionLedger,
    iteration: usize,
) -> Result<&'a CandidateView> {
    if scored.is_empty() {
        return Err(NbvError::EmptyInput("no scored candidates".into()));
    }
    let admissible = admissible_partitions(ledger);
    let pos =
        best_where(scored, |p| admissible.contains(&p))?.ok_or(NbvError::ConstraintInfeasible)?;
    ledger.mark(iteration, scored[pos].partition);
    Ok(&scored[pos])
}

/// Best-scoring candidate regardless of partition.
pub fn select_unconstrained<'a>(
    scored: &'a [CandidateView],
    ledger: &mut PartitionLedger,
    iteration: usize,
) -> Result<&'a CandidateView> {
    let pos = best_where(scored, |_| true)?
        .ok_or_else(|| NbvError::EmptyInput("no scored candidates".into()))?;
    ledger.mark(iteration, scored[pos].partition);
    Ok(&scored[pos])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub resolution: f64,
    pub t_max: usize,
    pub beta: usize,
    pub sampling: SamplingConfig,
    /// Frontier inflation radius for the later-frame box update.
    pub gamma: f64,
    /// Iteration budget.
    pub iterations: usize,
    pub seed: u64,
    pub evaluator: Evaluator,
    pub intrinsics: CameraIntrinsics,
    /// Scene point the initial view looks at.
    pub target: Point3<f64>,
    /// Distance of the initial view from `target`.
    pub initial_distance: f64,
    pub initial_polar_deg: f64,
    pub initial_azimuth_deg: f64,
    /// Half-size of the cube around `target` points are cropped to.
    pub workspace_half: f64,
    /// Dedup spacing for the accumulated cloud `P_f`.
    pub cloud_spacing: f64,
    pub depth_noise: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            resolution: 0.03,
            t_max: 10,
            beta: 4,
            sampling: SamplingConfig::default(),
            gamma: 0.06,
            iterations: 10,
            seed: 7,
            evaluator: Evaluator::Projection,
            intrinsics: CameraIntrinsics::default(),
            target: Point3::origin(),
            initial_distance: 0.7,
            initial_polar_deg: 60.0,
            initial_azimuth_deg: 0.0,
            workspace_half: 1.0,
            cloud_spacing: 0.001,
            depth_noise: 0.0,
        }
    }
}

impl PlannerConfig {
    /// Defaults with `γ` tied to the resolution.
    pub fn with_resolution(resolution: f64) -> Self {
        Self {
            resolution,
            gamma: 2.0 * resolution,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("resolution", self.resolution),
            ("gamma", self.gamma),
            ("initial_distance", self.initial_distance),
            ("workspace_half", self.workspace_half),
            ("cloud_spacing", self.cloud_spacing),
            ("working_distance", self.sampling.working_distance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(NbvError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.t_max == 0 || self.beta == 0 || self.iterations == 0 {
            return Err(NbvError::Config(
                "t_max, beta and iterations must be ≥ 1".into(),
            ));
        }
        if self.sampling.parallels == 0 || self.sampling.count < self.sampling.parallels {
            return Err(NbvError::Config("need candidates ≥ parallels ≥ 1".into()));
        }
        if self.depth_noise < 0.0 {
            return Err(NbvError::Config("depth_noise must be ≥ 0".into()));
        }
        self.intrinsics.validate()
    }

    pub fn initial_pose(&self) -> Result<Pose> {
        let eye = point_on_sphere(
            &self.target,
            self.initial_distance,
            self.initial_polar_deg.to_radians(),
            self.initial_azimuth_deg.to_radians(),
            &self.sampling.up,
        );
        Pose::look_at(eye, self.target, self.sampling.up)
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig::new(self.t_max, self.resolution)
    }

    fn workspace(&self) -> Aabb {
        Aabb::from_center_half(self.target, Vector3::repeat(self.workspace_half))
    }
}

/// Wall-clock split of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub sample: Duration,
    pub evaluate: Duration,
    pub select: Duration,
    pub render: Duration,
    pub integrate: Duration,
    pub refit: Duration,
}

impl PhaseTimes {
    /// Planner time proper: everything except simulated rendering.
    pub fn compute(&self) -> Duration {
        self.sample + self.evaluate + self.select + self.integrate + self.refit
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub view: CandidateView,
    pub score: f64,
    /// True when the partition constraint had to be dropped.
    pub widened: bool,
    pub points_observed: usize,
    pub counts: StateCounts,
    pub n_eo: usize,
    pub n_ef: usize,
    pub times: PhaseTimes,
}

#[derive(Debug, Clone)]
pub struct PlannerState {
    pub iteration: usize,
    pub grid: VoxelGrid,
    pub ellipsoids: EllipsoidSet,
    /// Accumulated registered cloud, deduplicated at `cloud_spacing`.
    pub cloud: Vec<Point3<f64>>,
    pub ledger: PartitionLedger,
    pub history: Vec<CandidateView>,
    pub records: Vec<IterationRecord>,
    pub config: PlannerConfig,
    /// Consecutive planning iterations that ended without frontier
    /// ellipsoids.
    pub empty_frontier_streak: usize,
    /// Candidates of the latest iteration, scored.
    pub last_candidates: Vec<CandidateView>,
    /// Projection breakdowns of the latest iteration (projection only).
    pub last_view_scores: Vec<ViewScore>,
    pub init_times: PhaseTimes,
    cloud_cells: HashSet<[i64; 3]>,
}

impl PlannerState {
    fn absorb_cloud(&mut self, points: &[Point3<f64>]) -> usize {
        let s = self.config.cloud_spacing;
        let before = self.cloud.len();
        for p in points {
            let key = [0, 1, 2].map(|k| (p[k] / s).floor() as i64);
            if self.cloud_cells.insert(key) {
                self.cloud.push(*p);
            }
        }
        self.cloud.len() - before
    }
}

/// Iteration budget spent, or no frontier for two iterations in a row.
pub fn should_terminate(state: &PlannerState) -> bool {
    state.iteration >= state.config.iterations || state.empty_frontier_streak >= 2
}

/// Owns the simulated scene and the planner state.
pub struct Planner {
    scene: Scene,
    pub state: PlannerState,
}

impl Planner {
    /// Takes the initial observation and builds the first map and
    /// ellipsoids.
    pub fn new(scene: Scene, config: PlannerConfig) -> Result<Self> {
        config.validate()?;
        let pose = config.initial_pose()?;
        let mut times = PhaseTimes::default();

        let t = Instant::now();
        let raw = observe(&scene, &pose, &config, 0)?;
        times.render = t.elapsed();

        let t = Instant::now();
        let points = preprocess(&raw, &config.workspace(), config.resolution / 2.0);
        if points.is_empty() {
            return Err(NbvError::EmptyFirstObservation);
        }
        // roughly the sampling sphere; grows with the object box
        let mut grid = VoxelGrid::covering(
            &Aabb::from_center_half(config.target, Vector3::repeat(config.initial_distance)),
            config.resolution,
        )?;
        for p in &points {
            if let Some(idx) = grid.voxel_of(p) {
                grid.set_state(idx, VoxelState::Occupied);
            }
        }
        grid.update_bbox(&pose.optical_axis(), true, config.gamma)?;
        grid.integrate_observation(&Observation {
            points,
            sensor_origin: pose.position(),
        });
        grid.update_frontier();
        times.integrate = t.elapsed();

        let t = Instant::now();
        let ellipsoids = refit_all(&grid, config.seed, &config.fit_config())?;
        times.refit = t.elapsed();

        let ledger = PartitionLedger::new(config.beta)?;
        let mut state = PlannerState {
            iteration: 0,
            grid,
            ellipsoids,
            cloud: Vec::new(),
            ledger,
            history: Vec::new(),
            records: Vec::new(),
            config,
            empty_frontier_streak: 0,
            last_candidates: Vec::new(),
            last_view_scores: Vec::new(),
            init_times: times,
            cloud_cells: HashSet::new(),
        };
        state.absorb_cloud(&raw);
        log::info!(
            "initialized: {} points, {} occupied ellipsoids, {} frontier ellipsoids",
            state.cloud.len(),
            state.ellipsoids.occupied.len(),
            state.ellipsoids.frontier.len()
        );
        Ok(Self { scene, state })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn is_done(&self) -> bool {
        should_terminate(&self.state)
    }

    /// Candidates on the sphere around the current object box.
    pub fn sample(&self) -> Result<Vec<CandidateView>> {
        let cfg = &self.state.config;
        let bbox = self
            .state
            .grid
            .bbox()
            .ok_or_else(|| NbvError::InvalidArgument("grid has no object box".into()))?;
        let radius = sampling_radius(&bbox, cfg.sampling.working_distance);
        let mut candidates = sample_candidates(&cfg.sampling, &bbox.center(), radius)?;
        assign_partitions(&mut candidates, cfg.beta)?;
        Ok(candidates)
    }

    /// Scores `candidates` in place with the configured evaluator.
    pub fn score(&mut self, candidates: &mut [CandidateView]) -> Result<()> {
        let st = &self.state;
        let cfg = &st.config;
        let mut view_scores = Vec::new();
        match cfg.evaluator {
            Evaluator::Projection => {
                view_scores = evaluate_all(candidates, &st.ellipsoids, &cfg.intrinsics)?;
            }
            Evaluator::Oracle { stride } => {
                let scores = oracle_evaluate_all(candidates, &st.grid, &cfg.intrinsics, stride);
                for (c, s) in candidates.iter_mut().zip(scores) {
                    c.score = Some(s.visible_frontier as f64);
                }
            }
            Evaluator::Random => {
                let salt = (st.iteration as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ salt);
                for c in candidates.iter_mut() {
                    c.score = Some(rng.random::<f64>());
                }
            }
        }
        self.state.last_view_scores = view_scores;
        Ok(())
    }

    /// One full planning step.
    pub fn run_iteration(&mut self) -> Result<&IterationRecord> {
        let mut times = PhaseTimes::default();
        let iteration = self.state.iteration + 1;

        let t = Instant::now();
        let mut candidates = self.sample()?;
        times.sample = t.elapsed();

        let t = Instant::now();
        self.score(&mut candidates)?;
        times.evaluate = t.elapsed();

        let t = Instant::now();
        let (view, widened) = match select_next_view(&candidates, &mut self.state.ledger, iteration)
        {
            Ok(v) => (v.clone(), false),
            Err(NbvError::ConstraintInfeasible) => {
                log::warn!(
                    "iteration {iteration}: no candidate in an admissible partition, widening"
                );
                (
                    select_unconstrained(&candidates, &mut self.state.ledger, iteration)?.clone(),
                    true,
                )
            }
            Err(e) => return Err(e),
        };
        times.select = t.elapsed();

        let points_observed = self.apply_view(&view.pose, iteration, &mut times)?;

        self.state.iteration = iteration;
        self.state.history.push(view.clone());
        self.state.last_candidates = candidates;
        self.state.empty_frontier_streak = if self.state.ellipsoids.frontier.is_empty() {
            self.state.empty_frontier_streak + 1
        } else {
            0
        };
        let record = IterationRecord {
            iteration,
            score: view.score.unwrap_or(0.0),
            view,
            widened,
            points_observed,
            counts: self.state.grid.counts(),
            n_eo: self.state.ellipsoids.occupied.len(),
            n_ef: self.state.ellipsoids.frontier.len(),
            times,
        };
        log::info!(
            "iteration {}: partition {} F={:.1} points={} |E_o|={} |E_f|={}",
            iteration,
            record.view.partition,
            record.score,
            points_observed,
            record.n_eo,
            record.n_ef
        );
        self.state.records.push(record);
        Ok(self.state.records.last().expect("just pushed"))
    }

    /// Renders from `pose`, integrates the observation and refits. Returns
    /// the number of surface points seen.
    pub fn apply_view(
        &mut self,
        pose: &Pose,
        iteration: usize,
        times: &mut PhaseTimes,
    ) -> Result<usize> {
        let cfg = self.state.config.clone();
        let t = Instant::now();
        let raw = observe(&self.scene, pose, &cfg, iteration as u64)?;
        times.render = t.elapsed();

        let t = Instant::now();
        let points = preprocess(&raw, &cfg.workspace(), cfg.resolution / 2.0);
        if points.is_empty() {
            log::warn!("iteration {iteration}: observation saw nothing");
        } else {
            self.state.grid.integrate_observation(&Observation {
                points,
                sensor_origin: pose.position(),
            });
        }
        self.state.grid.update_frontier();
        self.state
            .grid
            .update_bbox(&pose.optical_axis(), false, cfg.gamma)?;
        times.integrate = t.elapsed();

        let t = Instant::now();
        self.state.ellipsoids = refit_all(
            &self.state.grid,
            cfg.seed.wrapping_add(iteration as u64),
            &cfg.fit_config(),
        )?;
        times.refit = t.elapsed();
        self.state.absorb_cloud(&raw);
        Ok(raw.len())
    }

    /// Iterates until [`should_terminate`].
    pub fn run(&mut self) -> Result<&[IterationRecord]> {
        while !self.is_done() {
            self.run_iteration()?;
        }
        Ok(&self.state.records)
    }
}

fn observe(scene: &Scene, pose: &Pose, cfg: &PlannerConfig, salt: u64) -> Result<Vec<Point3<f64>>> {
    let mut frame = render_depth(scene, pose, &cfg.intrinsics);
    if cfg.depth_noise > 0.0 {
        add_depth_noise(&mut frame, cfg.depth_noise, cfg.seed.wrapping_add(salt))?;
    }
    Ok(frame_to_points(&frame))
}
