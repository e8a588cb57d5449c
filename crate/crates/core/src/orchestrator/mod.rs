//! Outer block-coordinate loops, baselines and run reports.

mod init;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{see_metrics, SeeMetrics};
use crate::scenario::{NodeLayout, ScenarioConfig};
use crate::subproblems::{
    audit_constraints, solve_p1, solve_p2, solve_p31, solve_p4, AuditReport, BlockOutcome, Iterate, ObjectiveMode,
    Problem, SubproblemError,
};

pub use init::{circular_plan, initialize_feasible, piriform_plan, piriform_width, round_robin};

pub const MAX_OUTER_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("mission time {mission_time} s is below the minimum {min_time} s needed to return to the start")]
    MissionTooShort { mission_time: f64, min_time: f64 },
    #[error("block {block} failed: {source}")]
    Block {
        block: Block,
        #[source]
        source: SubproblemError,
        /// Report up to the last committed iterate.
        partial: Box<RunReport>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    #[serde(rename = "p1")]
    Scheduling,
    #[serde(rename = "p2")]
    RelayPower,
    #[serde(rename = "p31")]
    JamPower,
    #[serde(rename = "p4")]
    Trajectory,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::Scheduling, Block::RelayPower, Block::JamPower, Block::Trajectory];

    pub fn name(self) -> &'static str {
        match self {
            Block::Scheduling => "p1",
            Block::RelayPower => "p2",
            Block::JamPower => "p31",
            Block::Trajectory => "p4",
        }
    }

    pub fn solve(self, problem: &Problem, it: &Iterate) -> Result<BlockOutcome, SubproblemError> {
        match self {
            Block::Scheduling => solve_p1(problem, it),
            Block::RelayPower => solve_p2(problem, it),
            Block::JamPower => solve_p31(problem, it),
            Block::Trajectory => solve_p4(problem, it),
        }
    }
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    MseeSeq,
    MseeMi,
    /// MI loop with the trajectory frozen at the initial plan.
    Ftrj,
    /// Trajectory block alone, powers and schedule frozen.
    Fpow,
    MasrSeq,
    /// The initial feasible point, unoptimized.
    Initial,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [Scheme::MseeSeq, Scheme::MseeMi, Scheme::Ftrj, Scheme::Fpow, Scheme::MasrSeq, Scheme::Initial];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MseeSeq => "msee_seq",
            Scheme::MseeMi => "msee_mi",
            Scheme::Ftrj => "ftrj",
            Scheme::Fpow => "fpow",
            Scheme::MasrSeq => "masr_seq",
            Scheme::Initial => "initial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// MASR-Seq keeps the flight power budget as a constraint.
    pub masr_keep_power_limit: bool,
    pub max_outer_iters: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { masr_keep_power_limit: true, max_outer_iters: MAX_OUTER_ITERS }
    }
}

/// One row of the convergence trace; row 0 is the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub block_committed: String,
    /// Value of the optimized objective in normalized units.
    pub objective: f64,
    /// bits/Joule
    pub msee: f64,
    /// bps
    pub masr: f64,
    /// W
    pub afpc: f64,
    pub afpcr: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub iter: usize,
    pub block: Block,
    pub committed: bool,
    pub gain: f64,
    pub inner_iterations: usize,
    pub wall_ms: f64,
    pub flag: Option<String>,
    /// Σ ζ̃(1 − ζ̃) before rounding, for the scheduling block.
    pub binary_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheme: Scheme,
    pub mode: ObjectiveMode,
    pub trace: Vec<IterationRecord>,
    pub blocks: Vec<BlockRecord>,
    pub initial: Iterate,
    pub solution: Iterate,
    pub metrics: SeeMetrics,
    pub objective: f64,
    pub audit: AuditReport,
    pub converged: bool,
    pub outer_iterations: usize,
    pub runtime_s: f64,
}

impl RunReport {
    pub fn flags(&self) -> Vec<String> {
        self.blocks.iter().filter_map(|b| b.flag.clone().map(|f| format!("iter {} {}: {f}", b.iter, b.block))).collect()
    }
}

fn mode_for(scheme: Scheme, opts: &RunOptions) -> ObjectiveMode {
    match scheme {
        Scheme::MasrSeq => ObjectiveMode::Masr { keep_power_limit: opts.masr_keep_power_limit },
        _ => ObjectiveMode::Msee,
    }
}

fn blocks_for(scheme: Scheme) -> &'static [Block] {
    match scheme {
        Scheme::MseeSeq | Scheme::MseeMi | Scheme::MasrSeq => &Block::ALL,
        Scheme::Ftrj => &Block::ALL[..3],
        Scheme::Fpow => &Block::ALL[3..],
        Scheme::Initial => &[],
    }
}

struct Driver<'a> {
    problem: Problem<'a>,
    scheme: Scheme,
    start: Instant,
    initial: Iterate,
    current: Iterate,
    trace: Vec<IterationRecord>,
    blocks: Vec<BlockRecord>,
}

impl<'a> Driver<'a> {
    fn record(&mut self, iter: usize, label: String) {
        let gains = self.problem.gains(&self.current.plan);
        let m = see_metrics(&gains, &self.current.alloc, &self.current.plan, self.problem.config);
        self.trace.push(IterationRecord {
            iter,
            block_committed: label,
            objective: self.problem.objective(&self.current),
            msee: m.msee,
            masr: m.masr,
            afpc: m.afpc,
            afpcr: m.afpcr,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }

    fn report(&self, converged: bool, outer_iterations: usize) -> RunReport {
        let gains = self.problem.gains(&self.current.plan);
        RunReport {
            scheme: self.scheme,
            mode: self.problem.mode,
            trace: self.trace.clone(),
            blocks: self.blocks.clone(),
            initial: self.initial.clone(),
            solution: self.current.clone(),
            metrics: see_metrics(&gains, &self.current.alloc, &self.current.plan, self.problem.config),
            objective: self.problem.objective(&self.current),
            audit: audit_constraints(&self.problem, &self.current),
            converged,
            outer_iterations,
            runtime_s: self.start.elapsed().as_secs_f64(),
        }
    }

    fn fail(&self, block: Block, source: SubproblemError, iter: usize) -> OrchestratorError {
        OrchestratorError::Block { block, source, partial: Box::new(self.report(false, iter)) }
    }

    fn block_record(iter: usize, block: Block, out: &BlockOutcome, committed: bool, wall_ms: f64) -> BlockRecord {
        BlockRecord {
            iter,
            block,
            committed,
            gain: out.objective_after - out.objective_before,
            inner_iterations: out.inner_iterations,
            wall_ms,
            flag: out.flag.clone(),
            binary_residual: out.binary_residual,
        }
    }

    fn converged(before: f64, after: f64, tol: f64) -> bool {
        (after - before) <= tol * before.abs().max(f64::MIN_POSITIVE)
    }

    /// Algorithm 2: every block in order, committing each result.
    fn run_sequential(&mut self, blocks: &[Block], max_iters: usize) -> Result<(bool, usize), OrchestratorError> {
        let tol = self.problem.config.tol_outer;
        for iter in 1..=max_iters {
            let before = self.problem.objective(&self.current);
            for &block in blocks {
                let t = Instant::now();
                let out = block.solve(&self.problem, &self.current).map_err(|e| self.fail(block, e, iter - 1))?;
                let ms = t.elapsed().as_secs_f64() * 1e3;
                self.blocks.push(Self::block_record(iter, block, &out, true, ms));
                self.current = out.iterate;
            }
            let label = blocks.iter().map(|b| b.name()).collect::<Vec<_>>().join("+");
            self.record(iter, label);
            let after = self.problem.objective(&self.current);
            log::info!("{} iter {iter}: objective {after:.6e}", self.scheme.name());
            if Self::converged(before, after, tol) {
                return Ok((true, iter));
            }
        }
        Ok((false, max_iters))
    }

    /// Algorithm 3: every block from the same snapshot, commit the best.
    fn run_max_improvement(&mut self, blocks: &[Block], max_iters: usize) -> Result<(bool, usize), OrchestratorError> {
        let tol = self.problem.config.tol_outer;
        for iter in 1..=max_iters {
            let snapshot = &self.current;
            let problem = &self.problem;
            let results: Vec<(Block, Result<BlockOutcome, SubproblemError>, f64)> = std::thread::scope(|s| {
                let handles: Vec<_> = blocks
                    .iter()
                    .map(|&block| {
                        s.spawn(move || {
                            let t = Instant::now();
                            let out = block.solve(problem, snapshot);
                            (block, out, t.elapsed().as_secs_f64() * 1e3)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("block thread panicked")).collect()
            });
            let mut outcomes = Vec::with_capacity(results.len());
            for (block, res, ms) in results {
                match res {
                    Ok(out) => outcomes.push((block, out, ms)),
                    Err(e) => return Err(self.fail(block, e, iter - 1)),
                }
            }
            // largest exact gain; ties go to the earlier block
            let best = outcomes
                .iter()
                .enumerate()
                .fold(0, |b, (i, o)| if o.1.objective_after - o.1.objective_before > outcomes[b].1.objective_after - outcomes[b].1.objective_before { i } else { b });
            let before = self.problem.objective(&self.current);
            for (i, (block, out, ms)) in outcomes.iter().enumerate() {
                self.blocks.push(Self::block_record(iter, *block, out, i == best, *ms));
            }
            let (block, out, _) = outcomes.swap_remove(best);
            self.current = out.iterate;
            self.record(iter, block.name().to_string());
            let after = self.problem.objective(&self.current);
            log::info!("{} iter {iter}: committed {block}, objective {after:.6e}", self.scheme.name());
            if Self::converged(before, after, tol) {
                return Ok((true, iter));
            }
        }
        Ok((false, max_iters))
    }
}

/// Runs one scheme from the feasible initial point.
pub fn run_scheme(config: &ScenarioConfig, layout: &NodeLayout, scheme: Scheme, opts: &RunOptions) -> Result<RunReport, OrchestratorError> {
    let start = Instant::now();
    let initial = initialize_feasible(config, layout)?;
    let problem = Problem::new(config, layout, mode_for(scheme, opts));
    let mut driver = Driver {
        problem,
        scheme,
        start,
        current: initial.clone(),
        initial,
        trace: Vec::new(),
        blocks: Vec::new(),
    };
    driver.record(0, "init".into());
    let blocks = blocks_for(scheme);
    let (converged, iters) = match scheme {
        Scheme::Initial => (true, 0),
        Scheme::MseeSeq | Scheme::MasrSeq | Scheme::Fpow => driver.run_sequential(blocks, opts.max_outer_iters)?,
        Scheme::MseeMi | Scheme::Ftrj => driver.run_max_improvement(blocks, opts.max_outer_iters)?,
    };
    Ok(driver.report(converged, iters))
}

pub fn run_msee_seq(config: &ScenarioConfig, layout: &NodeLayout) -> Result<RunReport, OrchestratorError> {
    run_scheme(config, layout, Scheme::MseeSeq, &RunOptions::default())
}

pub fn run_msee_mi(config: &ScenarioConfig, layout: &NodeLayout) -> Result<RunReport, OrchestratorError> {
    run_scheme(config, layout, Scheme::MseeMi, &RunOptions::default())
}

/// `scheme` must be one of the baselines: ftrj, fpow or masr_seq.
pub fn run_baseline(config: &ScenarioConfig, layout: &NodeLayout, scheme: Scheme) -> Result<RunReport, OrchestratorError> {
    run_scheme(config, layout, scheme, &RunOptions::default())
}
