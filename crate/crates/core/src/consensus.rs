//! Consensus propagation of symbol messages over the AP graph, and the outer
//! iteration schedule.
//!
//! AP `l` sends its neighbor `l'` the envelope
//! `nu_{l->l'} ∝ mu_l prod_{j in N(l) \ l'} nu_{j->l}` and forms its symbol
//! belief as `p(x) mu_l prod_{j in N(l)} nu_{j->l}`. On a tree this equals the
//! centralized product over all APs once envelopes have crossed the diameter.

use std::collections::VecDeque;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::Schedule;
use crate::ep::{ApWorkspace, EngineSettings};
use crate::error::{Error, Result};
use crate::gaussian::{CategoricalMsg, Constellation};
use crate::scenario::ApGraph;
use crate::trace::TraceSink;

/// Symbol messages from one AP to a neighbor, one pmf per `(k, t)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusEnvelope {
    pub from: usize,
    pub to: usize,
    pub iteration: usize,
    pub payload: Vec<CategoricalMsg>,
}

/// Inter-AP message store plus convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct ScheduleState {
    pub iteration: usize,
    graph: ApGraph,
    /// `inbox[l][j]` is the latest envelope from `graph.neighbors(l)[j]` to `l`.
    inbox: Vec<Vec<ConsensusEnvelope>>,
    pub residuals: Vec<f64>,
    prev_beliefs: Vec<Vec<CategoricalMsg>>,
    prev_channel_means: Vec<Vec<Vec<Complex64>>>,
}

impl ScheduleState {
    /// Uniform envelopes on every directed edge.
    pub fn new(graph: ApGraph, constellation: &Constellation, pairs: usize) -> Self {
        let uniform = vec![CategoricalMsg::uniform(constellation); pairs];
        let inbox = (0..graph.node_count())
            .map(|l| {
                graph
                    .neighbors(l)
                    .iter()
                    .map(|&from| ConsensusEnvelope {
                        from,
                        to: l,
                        iteration: 0,
                        payload: uniform.clone(),
                    })
                    .collect()
            })
            .collect();
        let prev_beliefs = vec![uniform; graph.node_count()];
        Self {
            iteration: 0,
            inbox,
            residuals: Vec::new(),
            prev_beliefs,
            prev_channel_means: Vec::new(),
            graph,
        }
    }

    pub fn graph(&self) -> &ApGraph {
        &self.graph
    }

    /// Envelopes currently addressed to `l`.
    pub fn inbound(&self, l: usize) -> &[ConsensusEnvelope] {
        &self.inbox[l]
    }

    pub fn envelope(&self, from: usize, to: usize) -> Option<&ConsensusEnvelope> {
        self.inbox.get(to)?.iter().find(|e| e.from == from)
    }

    /// Replaces the stored envelope on `(from, to)`.
    pub fn deliver(&mut self, envelope: ConsensusEnvelope) -> Result<()> {
        let slot = self
            .inbox
            .get_mut(envelope.to)
            .and_then(|v| v.iter_mut().find(|e| e.from == envelope.from))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "({}, {}) is not an edge of the AP graph",
                    envelope.from, envelope.to
                ))
            })?;
        *slot = envelope;
        Ok(())
    }
}

fn check_local(local: &[CategoricalMsg], expected: usize) -> Result<()> {
    if local.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: local.len(),
        });
    }
    Ok(())
}

/// Envelope `nu_{l -> to}` from AP `l`'s symbol messages and every inbound
/// envelope except the one from `to`.
pub fn compute_nu(
    l: usize,
    to: usize,
    local: &[CategoricalMsg],
    state: &ScheduleState,
) -> Result<ConsensusEnvelope> {
    if !state.graph.has_edge(l, to) {
        return Err(Error::InvalidArgument(format!(
            "({l}, {to}) is not an edge of the AP graph"
        )));
    }
    let inbound: Vec<&ConsensusEnvelope> =
        state.inbox[l].iter().filter(|e| e.from != to).collect();
    for e in &inbound {
        check_local(&e.payload, local.len())?;
    }
    let payload = local
        .iter()
        .enumerate()
        .map(|(i, mu)| {
            let s = mu.constellation();
            CategoricalMsg::product(s, std::iter::once(mu).chain(inbound.iter().map(|e| &e.payload[i])))
                .ok_or(Error::MessageUnderflow { k: i, t: 0 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConsensusEnvelope {
        from: l,
        to,
        iteration: state.iteration,
        payload,
    })
}

/// Symbol information available at AP `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApBelief {
    /// `p(x) mu_l prod_{j in N(l)} nu_{j->l}`
    pub belief: Vec<CategoricalMsg>,
    /// `p(x) prod_{j in N(l)} nu_{j->l}`
    pub network: Vec<CategoricalMsg>,
}

pub fn decentralized_belief(
    l: usize,
    local: &[CategoricalMsg],
    state: &ScheduleState,
    prior: &CategoricalMsg,
) -> Result<ApBelief> {
    let inbound = &state.inbox[l];
    for e in inbound {
        check_local(&e.payload, local.len())?;
    }
    let s = prior.constellation();
    let mut belief = Vec::with_capacity(local.len());
    let mut network = Vec::with_capacity(local.len());
    for (i, mu) in local.iter().enumerate() {
        let net = CategoricalMsg::product(
            s,
            std::iter::once(prior).chain(inbound.iter().map(|e| &e.payload[i])),
        )
        .ok_or(Error::MessageUnderflow { k: i, t: 0 })?;
        let full = CategoricalMsg::product(s, [&net, mu]).ok_or(Error::MessageUnderflow { k: i, t: 0 })?;
        network.push(net);
        belief.push(full);
    }
    Ok(ApBelief { belief, network })
}

/// BFS spanning tree of a connected graph.
pub fn spanning_tree(graph: &ApGraph, root: usize) -> Result<ApGraph> {
    let n = graph.node_count();
    if root >= n {
        return Err(Error::InvalidArgument(format!("root {root} out of range")));
    }
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in graph.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                edges.push((u, v));
                queue.push_back(v);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::DisconnectedGraph);
    }
    ApGraph::from_edges(n, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Largest total-variation change of any AP's symbol belief.
    pub belief_change: f64,
    /// Largest relative change of any channel belief mean.
    pub channel_change: f64,
}

impl IterationReport {
    pub fn residual(&self) -> f64 {
        self.belief_change + self.channel_change
    }
}

fn relative_change(new: &[Complex64], old: &[Complex64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let scale = new
        .iter()
        .map(|a| a.norm_sqr())
        .sum::<f64>()
        .sqrt()
        .max(old.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt());
    if scale > 0.0 {
        diff / scale
    } else {
        0.0
    }
}

/// One outer iteration.
///
/// Every AP first assembles its symbol beliefs from the stored envelopes.
/// With the sequential schedule APs then update one at a time in index
/// order, each sending fresh envelopes before the next AP starts; with the
/// parallel schedule all APs update from the same stored envelopes and the
/// new envelopes are delivered together.
pub fn run_iteration(
    workspaces: &mut [ApWorkspace],
    state: &mut ScheduleState,
    settings: &EngineSettings,
    schedule: Schedule,
    mut sink: Option<&mut dyn TraceSink>,
) -> Result<IterationReport> {
    let num_aps = state.graph.node_count();
    if workspaces.len() != num_aps {
        return Err(Error::DimensionMismatch {
            expected: num_aps,
            found: workspaces.len(),
        });
    }
    state.iteration += 1;
    let iteration = state.iteration;

    let beliefs = workspaces
        .par_iter()
        .enumerate()
        .map(|(l, ws)| decentralized_belief(l, ws.symbol_messages(), state, &ws.params().prior))
        .collect::<Result<Vec<_>>>()?;
    let mut belief_change: f64 = 0.0;
    for (l, (ws, b)) in workspaces.iter_mut().zip(beliefs).enumerate() {
        for (new, old) in b.belief.iter().zip(&state.prev_beliefs[l]) {
            belief_change = belief_change.max(new.total_variation(old));
        }
        state.prev_beliefs[l] = b.belief.clone();
        ws.set_symbol_beliefs(b.belief, b.network)?;
    }

    match schedule {
        Schedule::Sequential => {
            for l in 0..num_aps {
                workspaces[l].local_update(settings)?;
                if let Some(s) = sink.as_deref_mut() {
                    workspaces[l].trace_messages(iteration, s)?;
                }
                for &to in state.graph.neighbors(l).to_vec().iter() {
                    let env = compute_nu(l, to, workspaces[l].symbol_messages(), state)?;
                    if let Some(s) = sink.as_deref_mut() {
                        s.envelope(&env, workspaces[l].slots())?;
                    }
                    state.deliver(env)?;
                }
            }
        }
        Schedule::Parallel => {
            workspaces
                .par_iter_mut()
                .try_for_each(|ws| ws.local_update(settings))?;
            let snapshot: &ScheduleState = state;
            let envelopes = (0..num_aps)
                .into_par_iter()
                .map(|l| {
                    snapshot
                        .graph
                        .neighbors(l)
                        .iter()
                        .map(|&to| compute_nu(l, to, workspaces[l].symbol_messages(), snapshot))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            for (l, envs) in envelopes.into_iter().enumerate() {
                if let Some(s) = sink.as_deref_mut() {
                    workspaces[l].trace_messages(iteration, s)?;
                }
                for env in envs {
                    if let Some(s) = sink.as_deref_mut() {
                        s.envelope(&env, workspaces[l].slots())?;
                    }
                    state.deliver(env)?;
                }
            }
        }
    }

    let means: Vec<Vec<Vec<Complex64>>> =
        workspaces.iter().map(ApWorkspace::channel_estimate).collect();
    let mut channel_change: f64 = 0.0;
    if state.prev_channel_means.len() == means.len() {
        for (new_ap, old_ap) in means.iter().zip(&state.prev_channel_means) {
            for (new, old) in new_ap.iter().zip(old_ap) {
                channel_change = channel_change.max(relative_change(new, old));
            }
        }
    } else {
        channel_change = 1.0;
    }
    state.prev_channel_means = means;

    let report = IterationReport {
        iteration,
        belief_change,
        channel_change,
    };
    state.residuals.push(report.residual());
    Ok(report)
}

/// Final symbol beliefs at every AP from the current messages.
pub fn final_beliefs(
    workspaces: &[ApWorkspace],
    state: &ScheduleState,
) -> Result<Vec<Vec<CategoricalMsg>>> {
    workspaces
        .iter()
        .enumerate()
        .map(|(l, ws)| {
            decentralized_belief(l, ws.symbol_messages(), state, &ws.params().prior).map(|b| b.belief)
        })
        .collect()
}
