//! Per-AP factor-graph updates.
//!
//! Each access point `l` owns the factors touching its observations: one
//! data-likelihood factor per slot `t` (messages to every `h_lk` and `x_kt`)
//! and one pilot factor per pilot group `g` (messages to `h_lk`, `k` in the
//! group). Channel messages are diagonal complex Gaussians; symbol messages
//! are categorical. The interference seen by user `k` in slot `t` is replaced
//! by a Gaussian with the exact first two moments of `sum_{i != k} x_it h_li`.

use num_complex::Complex64;

use crate::config::UpdateMode;
use crate::error::{Error, Result};
use crate::gaussian::{
    categorical_moments, project_mixture_to_diag, CategoricalMsg, Constellation,
    DiagGaussianMsg, FullGaussian,
};
use crate::linalg::CMatrix;
use crate::scenario::{CBlock, PilotBook};
use crate::trace::{MessageKind, MessageRecord, TraceSink};

/// Model constants shared by every AP.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// `sigma_v^2`
    pub noise_var: f64,
    /// `sigma_x^2`, the per-symbol pilot power.
    pub symbol_power: f64,
    pub pilot_length: usize,
    pub constellation: Constellation,
    /// Data-symbol prior `p(x)`.
    pub prior: CategoricalMsg,
}

impl ModelParams {
    /// Uniform prior over `constellation`.
    pub fn new(
        noise_var: f64,
        symbol_power: f64,
        pilot_length: usize,
        constellation: Constellation,
    ) -> Self {
        let prior = CategoricalMsg::uniform(&constellation);
        Self {
            noise_var,
            symbol_power,
            pilot_length,
            constellation,
            prior,
        }
    }

    /// Effective noise variance of the despread pilot observation scaled by
    /// `1 / (P sigma_x^2)`, i.e. `sigma_v^2 / (sigma_x^2 P)`.
    pub fn pilot_noise_var(&self) -> f64 {
        self.noise_var / (self.symbol_power * self.pilot_length as f64)
    }

    /// Absolute precision floor for Gaussian division, from a floor given
    /// relative to `sigma_x^2 / sigma_v^2`.
    pub fn absolute_floor(&self, relative: f64) -> f64 {
        if self.noise_var > 0.0 {
            relative * self.symbol_power / self.noise_var
        } else {
            relative
        }
    }
}

/// Knobs of one EP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineSettings {
    pub mode: UpdateMode,
    /// Convex damping on the natural parameters of channel messages; 1 = off.
    pub damping: f64,
    /// Division floor relative to `sigma_x^2 / sigma_v^2`.
    pub precision_floor: f64,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            mode: UpdateMode::Simplified,
            damping: 1.0,
            precision_floor: crate::gaussian::DEFAULT_PRECISION_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Gaussian-division components clamped to the precision floor.
    pub clamp_count: usize,
}

/// Despreads the pilot block: `y_{p,lg} = Y_{p,l} x_{p,g}^*` for every group.
pub fn preprocess_pilots(y_pilot: &CBlock, book: &PilotBook) -> Result<Vec<Vec<Complex64>>> {
    if y_pilot.cols != book.length() {
        return Err(Error::DimensionMismatch {
            expected: book.length(),
            found: y_pilot.cols,
        });
    }
    Ok(book
        .sequences
        .iter()
        .map(|seq| {
            (0..y_pilot.rows)
                .map(|n| (0..y_pilot.cols).map(|p| y_pilot.get(n, p) * seq[p].conj()).sum())
                .collect()
        })
        .collect())
}

/// Gaussian stand-in for the interference `sum_{i != k} x_it h_li`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interference {
    pub mean: Vec<Complex64>,
    pub cov: CMatrix,
}

/// Moments of `sum_i x_i h_i` for independent `x_i ~ symbols[i]` and
/// `h_i ~ channels[i]`: mean `sum m_x m_h`, covariance
/// `sum r_x C_h + tau_x m_h m_h^H`.
pub fn interference_moments<'a>(
    dim: usize,
    terms: impl IntoIterator<Item = (&'a CategoricalMsg, &'a DiagGaussianMsg)>,
) -> Interference {
    let mut mean = vec![Complex64::new(0.0, 0.0); dim];
    let mut cov = CMatrix::zeros(dim);
    for (x, h) in terms {
        let mx = categorical_moments(x);
        let mh = h.mean();
        let vh = h.variance();
        for n in 0..dim {
            mean[n] += mx.mean * mh[n];
            cov[(n, n)].re += mx.second_moment * vh[n];
        }
        if mx.variance > 0.0 {
            cov.add_outer(mx.variance, &mh);
        }
    }
    Interference { mean, cov }
}

/// One AP's observations and message store.
#[derive(Debug, Clone)]
pub struct ApWorkspace {
    ap: usize,
    params: ModelParams,
    antennas: usize,
    users: usize,
    slots: usize,
    /// Diagonal of `Xi_{h_lk}`, indexed `[k][n]`.
    prior_var: Vec<Vec<f64>>,
    groups: Vec<Vec<usize>>,
    group_of: Vec<usize>,
    /// Despread pilots, one N-vector per group.
    y_pilot: Vec<Vec<Complex64>>,
    /// Data observations, one N-vector per slot.
    y_data: Vec<Vec<Complex64>>,

    psi2_to_h: Vec<DiagGaussianMsg>,
    h_to_psi2: Vec<DiagGaussianMsg>,
    psi2_to_x: Vec<CategoricalMsg>,
    x_to_psi2: Vec<CategoricalMsg>,
    psi3_to_h: Vec<DiagGaussianMsg>,
    h_to_psi3: Vec<DiagGaussianMsg>,
    /// Symbol belief assembled at this AP from the network.
    belief_x: Vec<CategoricalMsg>,
    /// `p(x)` times every neighbor's envelope, i.e. the belief without this
    /// AP's own factor.
    network_x: Vec<CategoricalMsg>,
    interference: Vec<Interference>,
    genie: Option<Vec<usize>>,
    diagnostics: Diagnostics,
}

impl ApWorkspace {
    /// Initial state: uniform symbol messages, non-informative data-factor
    /// channel messages and pilot-factor messages equal to the pilot-only
    /// LMMSE estimate (extrinsics at the pilot factor set to the prior).
    pub fn new(
        ap: usize,
        params: ModelParams,
        prior_var: Vec<Vec<f64>>,
        pilot_book: &PilotBook,
        y_pilot: Vec<Vec<Complex64>>,
        y_data: &CBlock,
    ) -> Result<Self> {
        let users = pilot_book.assignment.len();
        let antennas = y_data.rows;
        let slots = y_data.cols;
        if prior_var.len() != users {
            return Err(Error::DimensionMismatch {
                expected: users,
                found: prior_var.len(),
            });
        }
        if let Some(bad) = prior_var.iter().find(|v| v.len() != antennas) {
            return Err(Error::DimensionMismatch {
                expected: antennas,
                found: bad.len(),
            });
        }
        if prior_var.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("prior variances must be positive".into()));
        }
        if y_pilot.len() != pilot_book.length() {
            return Err(Error::DimensionMismatch {
                expected: pilot_book.length(),
                found: y_pilot.len(),
            });
        }
        if params.pilot_length != pilot_book.length() {
            return Err(Error::DimensionMismatch {
                expected: pilot_book.length(),
                found: params.pilot_length,
            });
        }
        let s = &params.constellation;
        let uniform = CategoricalMsg::uniform(s);
        let flat = DiagGaussianMsg::non_informative(antennas);
        let kt = users * slots;
        let mut ws = Self {
            ap,
            antennas,
            users,
            slots,
            groups: pilot_book.groups.clone(),
            group_of: pilot_book.assignment.clone(),
            y_pilot,
            y_data: (0..slots).map(|t| y_data.column(t)).collect(),
            psi2_to_h: vec![flat.clone(); kt],
            h_to_psi2: vec![flat.clone(); kt],
            psi2_to_x: vec![uniform.clone(); kt],
            x_to_psi2: vec![params.prior.clone(); kt],
            psi3_to_h: vec![flat.clone(); users],
            h_to_psi3: vec![flat; users],
            belief_x: vec![params.prior.clone(); kt],
            network_x: vec![params.prior.clone(); kt],
            interference: vec![
                Interference {
                    mean: vec![Complex64::new(0.0, 0.0); antennas],
                    cov: CMatrix::zeros(antennas),
                };
                kt
            ],
            genie: None,
            diagnostics: Diagnostics::default(),
            prior_var,
            params,
        };
        for k in 0..users {
            ws.psi3_to_h[k] = ws.message_psi3_to_h(k)?;
        }
        Ok(ws)
    }

    fn idx(&self, k: usize, t: usize) -> usize {
        k * self.slots + t
    }

    pub fn ap(&self) -> usize {
        self.ap
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    pub fn y_data(&self, t: usize) -> &[Complex64] {
        &self.y_data[t]
    }

    pub fn y_pilot(&self, g: usize) -> &[Complex64] {
        &self.y_pilot[g]
    }

    /// Clamps every data-factor symbol message to a point mass at the given
    /// constellation indices (row-major `K x T`).
    pub fn set_genie_symbols(&mut self, indices: Vec<usize>) -> Result<()> {
        if indices.len() != self.users * self.slots {
            return Err(Error::DimensionMismatch {
                expected: self.users * self.slots,
                found: indices.len(),
            });
        }
        if indices.iter().any(|&i| i >= self.params.constellation.len()) {
            return Err(Error::InvalidArgument("genie symbol index out of range".into()));
        }
        for (slot, &i) in indices.iter().enumerate() {
            self.psi2_to_x[slot] = CategoricalMsg::point_mass(&self.params.constellation, i);
        }
        self.genie = Some(indices);
        Ok(())
    }

    pub fn msg_psi2_to_h(&self, k: usize, t: usize) -> &DiagGaussianMsg {
        &self.psi2_to_h[self.idx(k, t)]
    }

    pub fn msg_h_to_psi2(&self, k: usize, t: usize) -> &DiagGaussianMsg {
        &self.h_to_psi2[self.idx(k, t)]
    }

    pub fn msg_psi2_to_x(&self, k: usize, t: usize) -> &CategoricalMsg {
        &self.psi2_to_x[self.idx(k, t)]
    }

    pub fn msg_x_to_psi2(&self, k: usize, t: usize) -> &CategoricalMsg {
        &self.x_to_psi2[self.idx(k, t)]
    }

    pub fn msg_psi3_to_h(&self, k: usize) -> &DiagGaussianMsg {
        &self.psi3_to_h[k]
    }

    pub fn msg_h_to_psi3(&self, k: usize) -> &DiagGaussianMsg {
        &self.h_to_psi3[k]
    }

    /// All data-factor messages toward the symbols, row-major `K x T`.
    pub fn symbol_messages(&self) -> &[CategoricalMsg] {
        &self.psi2_to_x
    }

    pub fn belief_x(&self, k: usize, t: usize) -> &CategoricalMsg {
        &self.belief_x[self.idx(k, t)]
    }

    pub fn symbol_beliefs(&self) -> &[CategoricalMsg] {
        &self.belief_x
    }

    pub fn set_psi2_to_h(&mut self, k: usize, t: usize, msg: DiagGaussianMsg) {
        let i = self.idx(k, t);
        self.psi2_to_h[i] = msg;
    }

    pub fn set_h_to_psi2(&mut self, k: usize, t: usize, msg: DiagGaussianMsg) {
        let i = self.idx(k, t);
        self.h_to_psi2[i] = msg;
    }

    pub fn set_psi2_to_x(&mut self, k: usize, t: usize, msg: CategoricalMsg) {
        let i = self.idx(k, t);
        self.psi2_to_x[i] = msg;
    }

    pub fn set_x_to_psi2(&mut self, k: usize, t: usize, msg: CategoricalMsg) {
        let i = self.idx(k, t);
        self.x_to_psi2[i] = msg;
    }

    pub fn set_psi3_to_h(&mut self, k: usize, msg: DiagGaussianMsg) {
        self.psi3_to_h[k] = msg;
    }

    pub fn set_h_to_psi3(&mut self, k: usize, msg: DiagGaussianMsg) {
        self.h_to_psi3[k] = msg;
    }

    /// Installs the network-side symbol information for this AP: `belief` is
    /// the full decentralized belief and `network` the same product without
    /// this AP's own symbol messages.
    pub fn set_symbol_beliefs(
        &mut self,
        belief: Vec<CategoricalMsg>,
        network: Vec<CategoricalMsg>,
    ) -> Result<()> {
        let kt = self.users * self.slots;
        for v in [&belief, &network] {
            if v.len() != kt {
                return Err(Error::DimensionMismatch {
                    expected: kt,
                    found: v.len(),
                });
            }
        }
        self.belief_x = belief;
        self.network_x = network;
        Ok(())
    }

    /// Interference moments for user `k` in slot `t` from the current
    /// extrinsics of every other user.
    pub fn interference_stats(&self, k: usize, t: usize) -> Interference {
        interference_moments(
            self.antennas,
            (0..self.users)
                .filter(|&i| i != k)
                .map(|i| (&self.x_to_psi2[self.idx(i, t)], &self.h_to_psi2[self.idx(i, t)])),
        )
    }

    /// `sigma_v^2 I + C_z`
    fn noise_plus_interference(&self, z: &Interference) -> CMatrix {
        let mut c = z.cov.clone();
        c.add_real_diagonal(&vec![self.params.noise_var; self.antennas]);
        c
    }

    /// Data-factor message toward `x_kt`:
    /// `pmf(s) ∝ CN(y_lt; m_z + s m_h, sigma_v^2 I + C_z + |s|^2 C_h)`.
    pub fn message_psi2_to_x(&self, k: usize, t: usize, z: &Interference) -> Result<CategoricalMsg> {
        let s = &self.params.constellation;
        if let Some(genie) = &self.genie {
            return Ok(CategoricalMsg::point_mass(s, genie[self.idx(k, t)]));
        }
        let ext = &self.h_to_psi2[self.idx(k, t)];
        if ext.prec().contains(&0.0) {
            return Err(Error::InvalidArgument(
                "channel extrinsic must be informative in every component".into(),
            ));
        }
        let m_h = ext.mean();
        let v_h = ext.variance();
        let base = self.noise_plus_interference(z);
        let y = &self.y_data[t];
        let residual = |x: Complex64| -> Vec<Complex64> {
            (0..self.antennas).map(|n| y[n] - z.mean[n] - x * m_h[n]).collect()
        };
        let logw: Vec<f64> = if s.is_constant_modulus() {
            let mut cov = base;
            let r2 = s.points()[0].norm_sqr();
            cov.add_real_diagonal(&v_h.iter().map(|v| r2 * v).collect::<Vec<_>>());
            let chol = cov.cholesky()?;
            s.points().iter().map(|&x| -chol.quad_form(&residual(x))).collect()
        } else {
            s.points()
                .iter()
                .map(|&x| {
                    let mut cov = base.clone();
                    let r2 = x.norm_sqr();
                    cov.add_real_diagonal(&v_h.iter().map(|v| r2 * v).collect::<Vec<_>>());
                    let chol = cov.cholesky()?;
                    Ok(-chol.quad_form(&residual(x)) - chol.ln_det())
                })
                .collect::<Result<_>>()?
        };
        CategoricalMsg::from_log_weights(s, &logw)
            .ok_or(Error::MessageUnderflow { k, t })
    }

    /// Posterior of `h_lk` given `x_kt = x` under the Gaussian interference
    /// model, with the data-factor channel extrinsic as prior.
    pub fn conditional_channel_stats(
        &self,
        k: usize,
        t: usize,
        x: Complex64,
        z: &Interference,
    ) -> Result<FullGaussian> {
        let noise_inv = self.noise_plus_interference(z).hpd_inverse()?;
        self.conditional_with_inverse(k, t, x, z, &noise_inv)
    }

    fn conditional_with_inverse(
        &self,
        k: usize,
        t: usize,
        x: Complex64,
        z: &Interference,
        noise_inv: &CMatrix,
    ) -> Result<FullGaussian> {
        if x.norm() == 0.0 {
            return Err(Error::InvalidArgument("symbol must be nonzero".into()));
        }
        let ext = &self.h_to_psi2[self.idx(k, t)];
        let mut precision = noise_inv.scaled(x.norm_sqr());
        precision.add_real_diagonal(ext.prec());
        let y = &self.y_data[t];
        let resid: Vec<Complex64> = (0..self.antennas).map(|n| y[n] - z.mean[n]).collect();
        let pulled = noise_inv.matvec(&resid);
        let eta: Vec<Complex64> = ext
            .prec_mean()
            .iter()
            .zip(&pulled)
            .map(|(pm, v)| pm + x.conj() * v)
            .collect();
        let chol = precision.cholesky()?;
        FullGaussian::new(chol.solve(&eta), chol.inverse())
    }

    /// Data-factor message toward `h_lk`: the symbol-weighted mixture of
    /// conditional posteriors, projected onto a diagonal Gaussian and divided
    /// by the channel extrinsic. Returns the message and the clamp count.
    pub fn message_psi2_to_h(
        &self,
        k: usize,
        t: usize,
        z: &Interference,
        floor: f64,
    ) -> Result<(DiagGaussianMsg, usize)> {
        let i = self.idx(k, t);
        let s = &self.params.constellation;
        let weights = CategoricalMsg::product(s, [&self.x_to_psi2[i], &self.psi2_to_x[i]])
            .ok_or(Error::MessageUnderflow { k, t })?;
        let noise_inv = self.noise_plus_interference(z).hpd_inverse()?;
        let components = s
            .points()
            .iter()
            .map(|&x| self.conditional_with_inverse(k, t, x, z, &noise_inv))
            .collect::<Result<Vec<_>>>()?;
        let projected = project_mixture_to_diag(&weights, &components)?;
        DiagGaussianMsg::divide(&projected, &self.h_to_psi2[i], floor)
    }

    /// Pilot-factor extrinsic: product of the data-factor messages over all slots.
    pub fn extrinsic_to_psi3(&self, k: usize) -> DiagGaussianMsg {
        let mut acc = DiagGaussianMsg::non_informative(self.antennas);
        for t in 0..self.slots {
            acc.absorb(&self.psi2_to_h[self.idx(k, t)]);
        }
        acc
    }

    /// Pilot-factor message toward `h_lk`.
    ///
    /// Each co-pilot user `k'` is summarized by `q_{k'} ∝ p(h_lk') mu_{h_lk' -> Psi3}`;
    /// the message is the componentwise LMMSE estimate of `h_lk` from the
    /// despread pilot after cancelling the co-pilot means, with their residual
    /// variance added to the pilot noise.
    pub fn message_psi3_to_h(&self, k: usize) -> Result<DiagGaussianMsg> {
        let g = self.group_of[k];
        let scale = 1.0 / (self.params.symbol_power * self.params.pilot_length as f64);
        let noise = self.params.pilot_noise_var();
        let mut mean = Vec::with_capacity(self.antennas);
        let mut var = Vec::with_capacity(self.antennas);
        for n in 0..self.antennas {
            let mut resid_var = noise;
            let mut obs = self.y_pilot[g][n] * scale;
            for &other in self.groups[g].iter().filter(|&&o| o != k) {
                let ext = &self.h_to_psi3[other];
                let q_prec = 1.0 / self.prior_var[other][n] + ext.prec()[n];
                resid_var += 1.0 / q_prec;
                obs -= ext.prec_mean()[n] / q_prec;
            }
            let xi = self.prior_var[k][n];
            mean.push(obs * (xi / (resid_var + xi)));
            var.push(1.0 / (1.0 / xi + 1.0 / resid_var));
        }
        DiagGaussianMsg::from_moments(&mean, &var)
    }

    /// Channel belief `mu_{Psi3 -> h} prod_t mu_{Psi2,t -> h}`.
    pub fn channel_belief(&self, k: usize) -> DiagGaussianMsg {
        let mut b = self.extrinsic_to_psi3(k);
        b.absorb(&self.psi3_to_h[k]);
        b
    }

    /// Channel estimates (belief means), indexed `[k][n]`.
    pub fn channel_estimate(&self) -> Vec<Vec<Complex64>> {
        (0..self.users).map(|k| self.channel_belief(k).mean()).collect()
    }

    /// Refreshes the extrinsics feeding the data factors.
    ///
    /// `Exact` uses leave-one-out products; `Simplified` feeds the full
    /// channel and symbol beliefs to every data factor.
    pub fn update_extrinsics(&mut self, mode: UpdateMode) {
        for k in 0..self.users {
            let mut belief = self.h_to_psi3[k].clone();
            belief.absorb(&self.psi3_to_h[k]);
            for t in 0..self.slots {
                let i = self.idx(k, t);
                self.h_to_psi2[i] = match mode {
                    UpdateMode::Simplified => belief.clone(),
                    UpdateMode::Exact => {
                        let mut loo = self.psi3_to_h[k].clone();
                        for tt in (0..self.slots).filter(|&tt| tt != t) {
                            loo.absorb(&self.psi2_to_h[self.idx(k, tt)]);
                        }
                        loo
                    }
                };
                self.x_to_psi2[i] = match mode {
                    UpdateMode::Simplified => self.belief_x[i].clone(),
                    UpdateMode::Exact => self.network_x[i].clone(),
                };
            }
        }
    }

    /// One local sweep in schedule order: pilot-factor extrinsics, data-factor
    /// extrinsics, pilot-factor messages, data-factor symbol messages and
    /// data-factor channel messages.
    pub fn local_update(&mut self, settings: &EngineSettings) -> Result<()> {
        for k in 0..self.users {
            self.h_to_psi3[k] = self.extrinsic_to_psi3(k);
        }
        self.update_extrinsics(settings.mode);

        let mut fresh = Vec::with_capacity(self.users);
        for k in 0..self.users {
            fresh.push(self.message_psi3_to_h(k)?);
        }
        for (k, msg) in fresh.into_iter().enumerate() {
            self.psi3_to_h[k] = msg.damped(&self.psi3_to_h[k], settings.damping);
        }

        for k in 0..self.users {
            for t in 0..self.slots {
                let i = self.idx(k, t);
                self.interference[i] = self.interference_stats(k, t);
            }
        }
        for k in 0..self.users {
            for t in 0..self.slots {
                let i = self.idx(k, t);
                self.psi2_to_x[i] = self.message_psi2_to_x(k, t, &self.interference[i])?;
            }
        }
        let floor = self.params.absolute_floor(settings.precision_floor);
        for k in 0..self.users {
            for t in 0..self.slots {
                let i = self.idx(k, t);
                let (msg, clamped) = self.message_psi2_to_h(k, t, &self.interference[i], floor)?;
                self.diagnostics.clamp_count += clamped;
                self.psi2_to_h[i] = msg.damped(&self.psi2_to_h[i], settings.damping);
            }
        }
        Ok(())
    }

    /// Writes every factor-to-variable message of this AP to `sink`.
    pub fn trace_messages(&self, iteration: usize, sink: &mut dyn TraceSink) -> Result<()> {
        for k in 0..self.users {
            sink.message(&MessageRecord::gaussian(
                iteration,
                self.ap,
                k,
                None,
                MessageKind::Psi3ToH,
                &self.psi3_to_h[k],
            ))?;
            for t in 0..self.slots {
                let i = self.idx(k, t);
                sink.message(&MessageRecord::gaussian(
                    iteration,
                    self.ap,
                    k,
                    Some(t),
                    MessageKind::Psi2ToH,
                    &self.psi2_to_h[i],
                ))?;
                sink.message(&MessageRecord::categorical(
                    iteration,
                    self.ap,
                    k,
                    t,
                    MessageKind::Psi2ToX,
                    &self.psi2_to_x[i],
                ))?;
            }
        }
        Ok(())
    }
}
