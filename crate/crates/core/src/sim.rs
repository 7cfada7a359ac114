//! Monte-Carlo harness: metrics, baselines, the estimator suite over a
//! transmit-power sweep, aggregation and CSV/SVG output.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::ep::{EngineSettings, ModelParams};
use crate::error::{Error, Result};
use crate::gaussian::CategoricalMsg;
use crate::linalg::CMatrix;
use crate::scenario::{
    assign_pilots, dbm_to_watts, draw_realization, ChannelModel, Geometry, PilotBook, Realization,
};
use crate::session::{resolve_graph, Session, StopRule};
use crate::trace::TraceSink;

/// Channel estimates or truth, indexed `[l][k][n]`.
pub type ChannelSet = Vec<Vec<Vec<Complex64>>>;

/// `sum |Hhat - H|^2 / sum |H|^2` over every AP, user and antenna.
pub fn nmse(estimate: &ChannelSet, truth: &ChannelSet) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    for (el, tl) in estimate.iter().zip(truth) {
        if el.len() != tl.len() {
            return Err(Error::DimensionMismatch {
                expected: tl.len(),
                found: el.len(),
            });
        }
        for (ek, tk) in el.iter().zip(tl) {
            if ek.len() != tk.len() {
                return Err(Error::DimensionMismatch {
                    expected: tk.len(),
                    found: ek.len(),
                });
            }
            for (e, t) in ek.iter().zip(tk) {
                num += (e - t).norm_sqr();
                den += t.norm_sqr();
            }
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

/// Fraction of symbols whose most probable value (lowest index on ties)
/// differs from the truth.
pub fn ser(beliefs: &[CategoricalMsg], truth: &[usize]) -> Result<f64> {
    if beliefs.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: beliefs.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let errors = beliefs
        .iter()
        .zip(truth)
        .filter(|(b, &t)| b.argmax() != t)
        .count();
    Ok(errors as f64 / truth.len() as f64)
}

/// LMMSE estimate of every channel given the pilot and data symbols.
///
/// For AP `l` and antenna `n` the users' coefficients are estimated jointly
/// from row `n` of `[Y_p Y]` under the diagonal prior.
pub fn mmse_genie(realization: &Realization, model: &ChannelModel, noise_var: f64) -> Result<ChannelSet> {
    let users = realization.pilots.rows;
    let cols = realization.pilots.cols + realization.symbols.cols;
    let x = |k: usize, c: usize| {
        if c < realization.pilots.cols {
            realization.pilots.get(k, c)
        } else {
            realization.symbols.get(k, c - realization.pilots.cols)
        }
    };
    // A^H A with A = [X_p X]^T, shared by every AP and antenna
    let mut gram = CMatrix::zeros(users);
    for i in 0..users {
        for j in 0..users {
            gram[(i, j)] = (0..cols).map(|c| x(i, c).conj() * x(j, c)).sum();
        }
    }
    let mut out = Vec::with_capacity(model.variance.len());
    for (l, var_l) in model.variance.iter().enumerate() {
        let n_ant = model.antennas;
        let (yp, yd) = (&realization.y_pilot[l], &realization.y_data[l]);
        // posterior precision sigma_v^2 Xi^{-1} + A^H A, scaled by sigma_v^2
        let mut prec = gram.clone();
        prec.add_real_diagonal(&var_l.iter().map(|v| noise_var / v).collect::<Vec<_>>());
        let chol = prec.cholesky()?;
        let mut h_l = vec![vec![Complex64::new(0.0, 0.0); n_ant]; users];
        for n in 0..n_ant {
            let y = |c: usize| {
                if c < yp.cols {
                    yp.get(n, c)
                } else {
                    yd.get(n, c - yp.cols)
                }
            };
            let rhs: Vec<Complex64> = (0..users)
                .map(|i| (0..cols).map(|c| x(i, c).conj() * y(c)).sum())
                .collect();
            for (k, v) in chol.solve(&rhs).into_iter().enumerate() {
                h_l[k][n] = v;
            }
        }
        out.push(h_l);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Decentralized EP on pilots and data.
    Proposed,
    /// The same engine with the data symbols known.
    GenieEp,
    /// Joint LMMSE with the data symbols known.
    MmseGenie,
    /// LMMSE from the pilots alone.
    PilotOnly,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::MmseGenie,
        Estimator::GenieEp,
        Estimator::Proposed,
        Estimator::PilotOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Proposed => "proposed",
            Estimator::GenieEp => "genie_ep",
            Estimator::MmseGenie => "mmse_genie",
            Estimator::PilotOnly => "pilot_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub tx_power_dbm: f64,
    pub estimator: Estimator,
    pub realization: usize,
    pub nmse: f64,
    /// `None` for estimators that make no symbol decisions.
    pub ser: Option<f64>,
    pub iterations: usize,
    pub clamps: usize,
    pub wall_time_s: f64,
    /// `sigma_x^2 mean(sigma_h^2) / sigma_v^2`, linear.
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobFailure {
    pub tx_power_dbm: f64,
    pub realization: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub records: Vec<ResultRecord>,
    pub failures: Vec<JobFailure>,
}

impl SuiteOutput {
    pub fn completed_jobs(&self) -> usize {
        let mut keys: Vec<(u64, usize)> = self
            .records
            .iter()
            .map(|r| (r.tx_power_dbm.to_bits(), r.realization))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `r`. Power points share it, so every point of the
/// sweep sees the same positions, fading, symbols and noise shapes.
pub fn realization_seed(master: u64, realization: usize) -> u64 {
    splitmix64(splitmix64(master) ^ realization as u64)
}

/// Everything needed to run the estimators on one (power, realization) pair.
pub struct Instance {
    pub params: ModelParams,
    pub model: ChannelModel,
    pub pilot_book: PilotBook,
    pub geometry: Geometry,
    pub realization: Realization,
}

impl Instance {
    pub fn build(cfg: &RunConfig, tx_power_dbm: f64, realization: usize) -> Result<Self> {
        let s = &cfg.scenario;
        let symbol_power = dbm_to_watts(tx_power_dbm);
        let noise_var = dbm_to_watts(s.noise_dbm);
        let constellation = s.constellation(symbol_power)?;
        let params = ModelParams::new(noise_var, symbol_power, s.pilot_length, constellation);

        let mut rng = ChaCha8Rng::seed_from_u64(realization_seed(cfg.seed, realization));
        let geometry = if s.redraw_positions {
            Geometry::build(s, &mut rng)?
        } else {
            let mut fixed = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x5_eed0_f9e0));
            Geometry::build(s, &mut fixed)?
        };
        let model = ChannelModel::from_geometry(&geometry, s.antennas)?;
        let pilot_book = assign_pilots(s.num_uts, s.pilot_length, symbol_power)?;
        let realization = draw_realization(
            &model,
            &pilot_book,
            s.data_length,
            &params.constellation,
            params.prior.pmf(),
            noise_var,
            &mut rng,
        )?;
        Ok(Self {
            params,
            model,
            pilot_book,
            geometry,
            realization,
        })
    }

    pub fn snr(&self) -> f64 {
        self.params.symbol_power * self.model.mean_variance() / self.params.noise_var
    }

    pub fn session(&self, cfg: &RunConfig) -> Result<Session> {
        let a = &cfg.algorithm;
        Session::new(
            &self.params,
            &self.model,
            &self.pilot_book,
            &self.realization,
            resolve_graph(&self.geometry.ap_graph, a.graph)?,
            EngineSettings {
                mode: a.mode,
                damping: a.damping,
                precision_floor: a.precision_floor,
            },
            a.schedule,
        )
    }
}

fn stop_rule(cfg: &RunConfig) -> StopRule {
    StopRule {
        max_iterations: cfg.algorithm.max_iterations,
        tolerance: cfg.algorithm.tolerance,
    }
}

fn mean_ser(beliefs: &[Vec<CategoricalMsg>], truth: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for b in beliefs {
        total += ser(b, truth)?;
    }
    Ok(total / beliefs.len().max(1) as f64)
}

/// Runs all four estimators on one (power, realization) pair.
pub fn run_job(cfg: &RunConfig, tx_power_dbm: f64, realization: usize) -> Result<Vec<ResultRecord>> {
    let inst = Instance::build(cfg, tx_power_dbm, realization)?;
    let truth = &inst.realization.channels;
    let snr = inst.snr();
    let record = |estimator, nmse, ser, iterations, clamps, started: Instant| ResultRecord {
        tx_power_dbm,
        estimator,
        realization,
        nmse,
        ser,
        iterations,
        clamps,
        wall_time_s: started.elapsed().as_secs_f64(),
        snr,
    };
    let mut out = Vec::with_capacity(4);

    let started = Instant::now();
    let est = mmse_genie(&inst.realization, &inst.model, inst.params.noise_var)?;
    out.push(record(Estimator::MmseGenie, nmse(&est, truth)?, Some(0.0), 0, 0, started));

    let started = Instant::now();
    let mut genie = inst.session(cfg)?;
    genie.set_genie_symbols(&inst.realization.symbol_indices)?;
    let pilot_only = genie.channel_estimates();
    let pilot_time = started.elapsed();
    let summary = genie.run(stop_rule(cfg), None)?;
    out.push(record(
        Estimator::GenieEp,
        nmse(&genie.channel_estimates(), truth)?,
        Some(0.0),
        summary.iterations,
        genie.clamp_count(),
        started,
    ));

    let started = Instant::now();
    let mut proposed = inst.session(cfg)?;
    let summary = proposed.run(stop_rule(cfg), None)?;
    let symbol_error = mean_ser(&proposed.symbol_beliefs()?, &inst.realization.symbol_indices)?;
    out.push(record(
        Estimator::Proposed,
        nmse(&proposed.channel_estimates(), truth)?,
        Some(symbol_error),
        summary.iterations,
        proposed.clamp_count(),
        started,
    ));

    let mut r = record(Estimator::PilotOnly, nmse(&pilot_only, truth)?, None, 0, 0, Instant::now());
    r.wall_time_s = pilot_time.as_secs_f64();
    out.push(r);
    Ok(out)
}

/// Every (power, realization) job, in parallel, collected in sweep order.
pub fn run_estimator_suite(cfg: &RunConfig) -> Result<SuiteOutput> {
    cfg.validate()?;
    let jobs: Vec<(f64, usize)> = cfg
        .sweep
        .tx_power_dbm
        .iter()
        .flat_map(|&p| (0..cfg.scenario.realizations).map(move |r| (p, r)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(p, r)| (p, r, run_job(cfg, p, r)))
        .collect();
    let mut out = SuiteOutput::default();
    for (p, r, res) in results {
        match res {
            Ok(records) => out.records.extend(records),
            Err(e) => out.failures.push(JobFailure {
                tx_power_dbm: p,
                realization: r,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// Runs the proposed estimator on one job with tracing.
pub fn trace_job(
    cfg: &RunConfig,
    tx_power_dbm: f64,
    realization: usize,
    sink: &mut dyn TraceSink,
) -> Result<ResultRecord> {
    let started = Instant::now();
    let inst = Instance::build(cfg, tx_power_dbm, realization)?;
    let mut session = inst.session(cfg)?;
    let summary = session.run(stop_rule(cfg), Some(sink))?;
    Ok(ResultRecord {
        tx_power_dbm,
        estimator: Estimator::Proposed,
        realization,
        nmse: nmse(&session.channel_estimates(), &inst.realization.channels)?,
        ser: Some(mean_ser(&session.symbol_beliefs()?, &inst.realization.symbol_indices)?),
        iterations: summary.iterations,
        clamps: session.clamp_count(),
        wall_time_s: started.elapsed().as_secs_f64(),
        snr: inst.snr(),
    })
}

/// Statistics of one (estimator, power) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub estimator: Estimator,
    pub tx_power_dbm: f64,
    pub snr_db: f64,
    pub mean_nmse: f64,
    /// Sample standard deviation, 0 for a single realization.
    pub std_nmse: f64,
    pub mean_ser: Option<f64>,
    pub realizations: usize,
    pub mean_iters: f64,
}

impl Summary {
    /// Standard error of `mean_nmse`.
    pub fn std_error(&self) -> f64 {
        self.std_nmse / (self.realizations as f64).sqrt()
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `sqrt(se_a^2 + se_b^2)`
pub fn pooled_std_error(a: &Summary, b: &Summary) -> f64 {
    (a.std_error().powi(2) + b.std_error().powi(2)).sqrt()
}

/// Per (estimator, power) statistics, ordered by estimator then by the
/// order in which powers first appear in `records`.
pub fn aggregate(records: &[ResultRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to aggregate".into()));
    }
    let mut powers: Vec<f64> = Vec::new();
    for r in records {
        if !powers.iter().any(|p| p.to_bits() == r.tx_power_dbm.to_bits()) {
            powers.push(r.tx_power_dbm);
        }
    }
    let mut out = Vec::new();
    for est in Estimator::ALL {
        for &p in &powers {
            let cell: Vec<&ResultRecord> = records
                .iter()
                .filter(|r| r.estimator == est && r.tx_power_dbm.to_bits() == p.to_bits())
                .collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len() as f64;
            let nm: Vec<f64> = cell.iter().map(|r| r.nmse).collect();
            let (mean_nmse, std_nmse) = mean_std(&nm);
            let sers: Vec<f64> = cell.iter().filter_map(|r| r.ser).collect();
            let mean_ser = (sers.len() == cell.len()).then(|| sers.iter().sum::<f64>() / n);
            let snr = cell.iter().map(|r| r.snr).sum::<f64>() / n;
            out.push(Summary {
                estimator: est,
                tx_power_dbm: p,
                snr_db: 10.0 * snr.log10(),
                mean_nmse,
                std_nmse,
                mean_ser,
                realizations: cell.len(),
                mean_iters: cell.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
            });
        }
    }
    Ok(out)
}

pub const CSV_HEADER: &str =
    "estimator,tx_power_dbm,snr_db,mean_nmse,std_nmse,mean_ser,realizations,mean_iters";

/// CSV text; SER is left empty for estimators without symbol decisions.
pub fn to_csv(summaries: &[Summary]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in summaries {
        let ser = r.mean_ser.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.9e},{:.9e},{},{},{:.3}",
            r.estimator.name(),
            r.tx_power_dbm,
            r.snr_db,
            r.mean_nmse,
            r.std_nmse,
            ser,
            r.realizations,
            r.mean_iters
        );
    }
    s
}

/// NMSE in dB versus transmit power, one polyline per estimator.
pub fn to_svg(summaries: &[Summary]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 440.0;
    const ML: f64 = 70.0;
    const MR: f64 = 150.0;
    const MT: f64 = 30.0;
    const MB: f64 = 55.0;
    let db = |v: f64| 10.0 * v.max(1e-300).log10();
    let xs: Vec<f64> = summaries.iter().map(|s| s.tx_power_dbm).collect();
    let ys: Vec<f64> = summaries.iter().map(|s| db(s.mean_nmse)).collect();
    let (x0, x1) = bounds(&xs);
    let (mut y0, mut y1) = bounds(&ys);
    y0 = (y0 / 5.0).floor() * 5.0;
    y1 = (y1 / 5.0).ceil() * 5.0;
    if y1 <= y0 {
        y1 = y0 + 5.0;
    }
    let px = |x: f64| ML + (x - x0) / (x1 - x0).max(1e-12) * (W - ML - MR);
    let py = |y: f64| MT + (y1 - y) / (y1 - y0) * (H - MT - MB);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (bx, by, bw, bh) = (ML, MT, W - ML - MR, H - MT - MB);
    let _ = writeln!(
        s,
        r#"<rect x="{bx}" y="{by}" width="{bw}" height="{bh}" fill="none" stroke="black"/>"#
    );
    let mut y = y0;
    while y <= y1 + 1e-9 {
        let v = py(y);
        let _ = writeln!(
            s,
            r##"<line x1="{bx}" y1="{v:.2}" x2="{:.2}" y2="{v:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y}</text>"##,
            bx + bw,
            bx - 6.0,
            v + 4.0
        );
        y += 5.0;
    }
    let mut ticks = xs.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            px(x),
            by + bh + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Transmit power [dBm]</text>"#,
        bx + bw / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">NMSE [dB]</text>"#,
        by + bh / 2.0
    );
    let colors = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];
    for (i, est) in Estimator::ALL.iter().enumerate() {
        let pts: Vec<String> = summaries
            .iter()
            .filter(|r| r.estimator == *est)
            .map(|r| format!("{:.2},{:.2}", px(r.tx_power_dbm), py(db(r.mean_nmse))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let c = colors[i % colors.len()];
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = MT + 20.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            W - MR + 12.0,
            W - MR + 36.0,
            W - MR + 42.0,
            ly + 4.0,
            est.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// Aggregates `records` and writes the CSV and, if given, the plot.
pub fn aggregate_and_emit(
    records: &[ResultRecord],
    csv: Option<&Path>,
    plot: Option<&Path>,
) -> Result<Vec<Summary>> {
    let summaries = aggregate(records)?;
    if let Some(p) = csv {
        std::fs::write(p, to_csv(&summaries)).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = plot {
        std::fs::write(p, to_svg(&summaries)).map_err(|e| Error::io(p, e))?;
    }
    Ok(summaries)
}
