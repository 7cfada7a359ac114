//! A full decentralized EP run on one realization.

use num_complex::Complex64;

use crate::config::{GraphKind, Schedule};
use crate::consensus::{final_beliefs, run_iteration, spanning_tree, IterationReport, ScheduleState};
use crate::ep::{preprocess_pilots, ApWorkspace, EngineSettings, ModelParams};
use crate::error::{Error, Result};
use crate::gaussian::CategoricalMsg;
use crate::scenario::{ApGraph, ChannelModel, PilotBook, Realization};
use crate::trace::TraceSink;

/// Stopping rule for [`Session::run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iterations: usize,
    /// Stop once the iteration residual falls to or below this value.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
}

/// Resolves the configured AP graph.
pub fn resolve_graph(graph: &ApGraph, kind: GraphKind) -> Result<ApGraph> {
    match kind {
        GraphKind::Grid => Ok(graph.clone()),
        GraphKind::Tree => spanning_tree(graph, 0),
    }
}

pub struct Session {
    workspaces: Vec<ApWorkspace>,
    state: ScheduleState,
    settings: EngineSettings,
    schedule: Schedule,
    reports: Vec<IterationReport>,
}

impl Session {
    pub fn new(
        params: &ModelParams,
        model: &ChannelModel,
        pilot_book: &PilotBook,
        realization: &Realization,
        graph: ApGraph,
        settings: EngineSettings,
        schedule: Schedule,
    ) -> Result<Self> {
        let num_aps = model.variance.len();
        if graph.node_count() != num_aps || realization.y_data.len() != num_aps {
            return Err(Error::DimensionMismatch {
                expected: num_aps,
                found: graph.node_count(),
            });
        }
        let workspaces = (0..num_aps)
            .map(|l| {
                let prior_var = model.variance[l]
                    .iter()
                    .map(|&v| vec![v; model.antennas])
                    .collect();
                let yp = preprocess_pilots(&realization.y_pilot[l], pilot_book)?;
                ApWorkspace::new(l, params.clone(), prior_var, pilot_book, yp, &realization.y_data[l])
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs = pilot_book.assignment.len() * realization.symbols.cols;
        let state = ScheduleState::new(graph, &params.constellation, pairs);
        Ok(Self {
            workspaces,
            state,
            settings,
            schedule,
            reports: Vec::new(),
        })
    }

    /// Clamps every data-factor symbol message to the given symbol indices
    /// (row-major `K x T`).
    pub fn set_genie_symbols(&mut self, indices: &[usize]) -> Result<()> {
        for ws in &mut self.workspaces {
            ws.set_genie_symbols(indices.to_vec())?;
        }
        Ok(())
    }

    pub fn step(&mut self, sink: Option<&mut dyn TraceSink>) -> Result<IterationReport> {
        let report = run_iteration(
            &mut self.workspaces,
            &mut self.state,
            &self.settings,
            self.schedule,
            sink,
        )?;
        self.reports.push(report);
        Ok(report)
    }

    pub fn run(&mut self, stop: StopRule, mut sink: Option<&mut dyn TraceSink>) -> Result<RunSummary> {
        let mut last = f64::INFINITY;
        for i in 0..stop.max_iterations {
            let report = self.step(sink.as_mut().map(|s| &mut **s as &mut dyn TraceSink))?;
            last = report.residual();
            if last <= stop.tolerance {
                return Ok(RunSummary {
                    iterations: i + 1,
                    converged: true,
                    final_residual: last,
                });
            }
        }
        Ok(RunSummary {
            iterations: stop.max_iterations,
            converged: false,
            final_residual: last,
        })
    }

    pub fn workspaces(&self) -> &[ApWorkspace] {
        &self.workspaces
    }

    pub fn state(&self) -> &ScheduleState {
        &self.state
    }

    pub fn reports(&self) -> &[IterationReport] {
        &self.reports
    }

    pub fn iterations(&self) -> usize {
        self.state.iteration
    }

    /// Channel estimates indexed `[l][k][n]`.
    pub fn channel_estimates(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.workspaces.iter().map(ApWorkspace::channel_estimate).collect()
    }

    /// Symbol beliefs at every AP from the current messages, `[l][k * T + t]`.
    pub fn symbol_beliefs(&self) -> Result<Vec<Vec<CategoricalMsg>>> {
        final_beliefs(&self.workspaces, &self.state)
    }

    pub fn clamp_count(&self) -> usize {
        self.workspaces.iter().map(|w| w.diagnostics().clamp_count).sum()
    }
}
