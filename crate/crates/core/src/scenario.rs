//! Cell-free uplink scenario: AP/UT geometry, path-loss channel variances,
//! orthogonal pilot book and Monte-Carlo realizations of `[Yp Y] = H [Xp X] + V`.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::gaussian::Constellation;

/// Slack added to the AP link distance so grid neighbors at exactly the
/// spacing are connected despite rounding.
const LINK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Undirected AP adjacency, stored as sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApGraph {
    neighbors: Vec<Vec<usize>>,
}

impl ApGraph {
    /// Builds a graph from an undirected edge list.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); nodes];
        for &(a, b) in edges {
            if a >= nodes || b >= nodes || a == b {
                return Err(Error::InvalidArgument(format!("bad edge ({a}, {b})")));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self { neighbors })
    }

    /// Links every pair of points within `max_distance`.
    pub fn within_distance(points: &[Point], max_distance: f64) -> Self {
        let mut edges = Vec::new();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i].distance(&points[j]) <= max_distance {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(points.len(), &edges).expect("indices are in range")
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors
            .get(a)
            .is_some_and(|n| n.binary_search(&b).is_ok())
    }

    /// Undirected edges with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ns) in self.neighbors.iter().enumerate() {
            out.extend(ns.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// BFS hop distances from `root`; `None` for unreachable nodes.
    pub fn hop_distances(&self, root: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        if root >= self.node_count() {
            return dist;
        }
        dist[root] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() == 0 || self.hop_distances(0).iter().all(Option::is_some)
    }

    /// Longest shortest path, or `None` if disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut diameter = 0;
        for root in 0..self.node_count() {
            for d in self.hop_distances(root) {
                diameter = diameter.max(d?);
            }
        }
        Some(diameter)
    }

    pub fn is_tree(&self) -> bool {
        self.is_connected() && self.edge_count() + 1 == self.node_count().max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub area_side: f64,
    pub ap_positions: Vec<Point>,
    pub ut_positions: Vec<Point>,
    pub ap_graph: ApGraph,
}

/// APs on a `grid x grid` lattice spanning the square, corners included.
pub fn ap_grid_positions(grid: usize, area_side: f64) -> Vec<Point> {
    let step = if grid > 1 {
        area_side / (grid - 1) as f64
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            out.push(Point {
                x: step * i as f64,
                y: step * j as f64,
            });
        }
    }
    out
}

impl Geometry {
    /// Grid APs, i.i.d. uniform UTs and the distance-threshold AP graph.
    pub fn build<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Self> {
        let ap_positions = ap_grid_positions(cfg.ap_grid, cfg.area_side);
        let ut_positions = (0..cfg.num_uts)
            .map(|_| Point {
                x: rng.random::<f64>() * cfg.area_side,
                y: rng.random::<f64>() * cfg.area_side,
            })
            .collect();
        let ap_graph =
            ApGraph::within_distance(&ap_positions, cfg.link_distance() + LINK_TOLERANCE);
        if !ap_graph.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        Ok(Self {
            area_side: cfg.area_side,
            ap_positions,
            ut_positions,
            ap_graph,
        })
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_uts(&self) -> usize {
        self.ut_positions.len()
    }
}

/// Minimum AP-UT distance used in the path-loss law.
pub const MIN_DISTANCE_M: f64 = 1.0;

/// Large-scale fading `10 log10(var) = -30 - 36.7 log10(d)`, with `d`
/// clamped below at 1 m.
pub fn path_loss_variance(distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    let d = distance_m.max(MIN_DISTANCE_M);
    Ok(10f64.powf((-30.0 - 36.7 * d.log10()) / 10.0))
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Per-link channel variances; `h_lk ~ CN(0, variance[l][k] I_N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub antennas: usize,
    pub variance: Vec<Vec<f64>>,
}

impl ChannelModel {
    pub fn from_geometry(geometry: &Geometry, antennas: usize) -> Result<Self> {
        let variance = geometry
            .ap_positions
            .iter()
            .map(|ap| {
                geometry
                    .ut_positions
                    .iter()
                    .map(|ut| path_loss_variance(ap.distance(ut).max(MIN_DISTANCE_M)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { antennas, variance })
    }

    pub fn mean_variance(&self) -> f64 {
        let n: usize = self.variance.iter().map(Vec::len).sum();
        self.variance.iter().flatten().sum::<f64>() / n as f64
    }
}

/// Orthogonal pilot sequences and the user-to-sequence assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotBook {
    pub symbol_power: f64,
    /// `sequences[g]` has length P.
    pub sequences: Vec<Vec<Complex64>>,
    pub assignment: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

impl PilotBook {
    pub fn length(&self) -> usize {
        self.sequences.len()
    }

    pub fn group_of(&self, user: usize) -> usize {
        self.assignment[user]
    }
}

/// Round-robin assignment `k -> k mod P` over the rows of the unitary DFT
/// matrix scaled by `sqrt(symbol_power)`, so that `x_g x_g^H = P symbol_power`.
pub fn assign_pilots(num_users: usize, length: usize, symbol_power: f64) -> Result<PilotBook> {
    if num_users == 0 || length == 0 {
        return Err(Error::InvalidArgument(
            "pilot book needs at least one user and one pilot symbol".into(),
        ));
    }
    let amp = symbol_power.sqrt();
    let sequences = (0..length)
        .map(|g| {
            (0..length)
                .map(|p| {
                    let phase = -2.0 * PI * ((g * p) % length) as f64 / length as f64;
                    Complex64::from_polar(amp, phase)
                })
                .collect()
        })
        .collect();
    let assignment: Vec<usize> = (0..num_users).map(|k| k % length).collect();
    let mut groups = vec![Vec::new(); length];
    for (k, &g) in assignment.iter().enumerate() {
        groups[g].push(k);
    }
    Ok(PilotBook {
        symbol_power,
        sequences,
        assignment,
        groups,
    })
}

/// Dense complex `rows x cols` block, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// One Monte-Carlo draw of the uplink transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    /// `channels[l][k]` is the N-vector `h_lk`.
    pub channels: Vec<Vec<Vec<Complex64>>>,
    /// K x P pilot symbols.
    pub pilots: CBlock,
    /// K x T data symbols.
    pub symbols: CBlock,
    /// Constellation index of each data symbol, row-major K x T.
    pub symbol_indices: Vec<usize>,
    pub noise_pilot: Vec<CBlock>,
    pub noise_data: Vec<CBlock>,
    pub y_pilot: Vec<CBlock>,
    pub y_data: Vec<CBlock>,
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// `H X + V` for one AP.
fn synthesize(channels: &[Vec<Complex64>], x: &CBlock, noise: &CBlock) -> CBlock {
    let n = noise.rows;
    let mut y = noise.clone();
    for r in 0..n {
        for c in 0..x.cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, h) in channels.iter().enumerate() {
                acc += h[r] * x.get(k, c);
            }
            y.set(r, c, acc + noise.get(r, c));
        }
    }
    y
}

/// Draws channels, i.i.d. data symbols from `prior` over `constellation`,
/// noise and the received blocks.
///
/// Draw order is channels, then symbols, then pilot noise, then data noise,
/// so two calls with identically seeded generators agree exactly.
pub fn draw_realization<R: Rng + ?Sized>(
    model: &ChannelModel,
    pilot_book: &PilotBook,
    data_length: usize,
    constellation: &Constellation,
    prior: &[f64],
    noise_var: f64,
    rng: &mut R,
) -> Result<Realization> {
    if prior.len() != constellation.len() {
        return Err(Error::DimensionMismatch {
            expected: constellation.len(),
            found: prior.len(),
        });
    }
    let num_aps = model.variance.len();
    let num_users = pilot_book.assignment.len();
    let n = model.antennas;
    let p_len = pilot_book.length();

    let channels: Vec<Vec<Vec<Complex64>>> = model
        .variance
        .iter()
        .map(|row| {
            if row.len() != num_users {
                return Err(Error::DimensionMismatch {
                    expected: num_users,
                    found: row.len(),
                });
            }
            Ok(row
                .iter()
                .map(|&v| (0..n).map(|_| complex_normal(rng, v)).collect())
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut pilots = CBlock::zeros(num_users, p_len);
    for k in 0..num_users {
        for (p, &x) in pilot_book.sequences[pilot_book.group_of(k)].iter().enumerate() {
            pilots.set(k, p, x);
        }
    }

    let mut cdf = Vec::with_capacity(prior.len());
    let mut acc = 0.0;
    for p in prior {
        acc += p;
        cdf.push(acc);
    }
    let mut symbols = CBlock::zeros(num_users, data_length);
    let mut symbol_indices = Vec::with_capacity(num_users * data_length);
    for k in 0..num_users {
        for t in 0..data_length {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cdf.iter().position(|&c| u < c).unwrap_or(prior.len() - 1);
            symbol_indices.push(idx);
            symbols.set(k, t, constellation.points()[idx]);
        }
    }

    let mut noise_pilot = Vec::with_capacity(num_aps);
    let mut noise_data = Vec::with_capacity(num_aps);
    for _ in 0..num_aps {
        let mut v = CBlock::zeros(n, p_len);
        v.data.iter_mut().for_each(|x| *x = complex_normal(rng, noise_var));
        noise_pilot.push(v);
    }
    for _ in 0..num_aps {
        let mut v = CBlock::zeros(n, data_length);
        v.data.iter_mut().for_each(|x| *x = complex_normal(rng, noise_var));
        noise_data.push(v);
    }

    let y_pilot = (0..num_aps)
        .map(|l| synthesize(&channels[l], &pilots, &noise_pilot[l]))
        .collect();
    let y_data = (0..num_aps)
        .map(|l| synthesize(&channels[l], &symbols, &noise_data[l]))
        .collect();

    Ok(Realization {
        channels,
        pilots,
        symbols,
        symbol_indices,
        noise_pilot,
        noise_data,
        y_pilot,
        y_data,
    })
}

impl Realization {
    /// Recomputes `H X + V` for the pilot and data blocks of AP `l`.
    pub fn resynthesize(&self, l: usize) -> (CBlock, CBlock) {
        (
            synthesize(&self.channels[l], &self.pilots, &self.noise_pilot[l]),
            synthesize(&self.channels[l], &self.symbols, &self.noise_data[l]),
        )
    }
}
