//! Closed-form quantities of the delivery model: user association read off
//! the precoders, fronthaul rates, achievable rates under successive
//! interference cancellation, power, the design objective and feasibility
//! of the full constraint set.

use crate::linalg::CMat;
use crate::scenario::{CacheState, Scenario};
use crate::{real, Real};

/// Stacked precoders, one `N_R x d` matrix per (UE, subfile) stream with
/// per-eRRH row blocks. Requests are pairwise distinct, so (UE, subfile)
/// indexes the requested (file, subfile) pairs one-to-one.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderStack<T> {
    mats: Vec<CMat<T>>,
    pub num_ue: usize,
    pub subfiles: usize,
    pub antennas_errh: usize,
}

impl<T: Real> PrecoderStack<T> {
    pub fn zeros(num_ue: usize, subfiles: usize, num_errh: usize, antennas_errh: usize, streams: usize) -> Self {
        let mats = vec![CMat::zeros(num_errh * antennas_errh, streams); num_ue * subfiles];
        Self { mats, num_ue, subfiles, antennas_errh }
    }

    pub fn from_mats(mats: Vec<CMat<T>>, num_ue: usize, subfiles: usize, antennas_errh: usize) -> Self {
        assert_eq!(mats.len(), num_ue * subfiles);
        Self { mats, num_ue, subfiles, antennas_errh }
    }

    pub fn num_pairs(&self) -> usize {
        self.mats.len()
    }

    pub fn pair_index(&self, ue: usize, subfile: usize) -> usize {
        ue * self.subfiles + subfile
    }

    pub fn get(&self, ue: usize, subfile: usize) -> &CMat<T> {
        &self.mats[self.pair_index(ue, subfile)]
    }

    pub fn get_mut(&mut self, ue: usize, subfile: usize) -> &mut CMat<T> {
        let idx = self.pair_index(ue, subfile);
        &mut self.mats[idx]
    }

    pub fn mats(&self) -> &[CMat<T>] {
        &self.mats
    }

    /// Per-eRRH block of one stream's precoder (rows of eRRH `errh`).
    pub fn block(&self, ue: usize, subfile: usize, errh: usize) -> CMat<T> {
        let n_r = self.antennas_errh;
        self.get(ue, subfile).row_block(errh * n_r, (errh + 1) * n_r)
    }

    /// `trace(F^i F^{iH})` of one stream at one eRRH, W.
    pub fn block_energy(&self, ue: usize, subfile: usize, errh: usize) -> T {
        let mat = self.get(ue, subfile);
        let n_r = self.antennas_errh;
        let mut acc = T::zero();
        for r in errh * n_r..(errh + 1) * n_r {
            for c in 0..mat.cols {
                acc = acc + mat[(r, c)].norm_sqr();
            }
        }
        acc
    }

    /// Energy an eRRH spends on one UE, summed over that UE's subfiles.
    pub fn ue_errh_energy(&self, ue: usize, errh: usize) -> T {
        (0..self.subfiles).map(|m| self.block_energy(ue, m, errh)).sum()
    }

    /// Transmit power of one eRRH over all streams.
    pub fn errh_tx_power(&self, errh: usize) -> T {
        (0..self.num_ue).map(|k| self.ue_errh_energy(k, errh)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(CMat::is_finite)
    }
}

/// Binary serving relation between UEs and eRRHs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub served: Vec<Vec<bool>>,
}

impl Association {
    pub fn all_ones(num_ue: usize, num_errh: usize) -> Self {
        Self { served: vec![vec![true; num_errh]; num_ue] }
    }

    pub fn serves(&self, ue: usize, errh: usize) -> bool {
        self.served[ue][errh]
    }

    pub fn active_pairs(&self) -> usize {
        self.served.iter().flatten().filter(|&&b| b).count()
    }
}

/// Reads the association off the precoder block energies; a strictly
/// positive threshold absorbs solver round-off that never reaches exact
/// zero.
pub fn association_from_precoders<T: Real>(stack: &PrecoderStack<T>, threshold: T) -> Association {
    let num_errh = stack.mats()[0].rows / stack.antennas_errh;
    let served = (0..stack.num_ue)
        .map(|k| (0..num_errh).map(|i| stack.ue_errh_energy(k, i) > threshold).collect())
        .collect();
    Association { served }
}

/// Delivery rate per (UE, subfile) stream, Mb/s.
#[derive(Debug, Clone, PartialEq)]
pub struct DdrAllocation<T> {
    pub rates: Vec<T>,
    pub subfiles: usize,
}

impl<T: Real> DdrAllocation<T> {
    pub fn uniform(num_ue: usize, subfiles: usize, rate: T) -> Self {
        Self { rates: vec![rate; num_ue * subfiles], subfiles }
    }

    pub fn get(&self, ue: usize, subfile: usize) -> T {
        self.rates[ue * self.subfiles + subfile]
    }

    pub fn set(&mut self, ue: usize, subfile: usize, rate: T) {
        self.rates[ue * self.subfiles + subfile] = rate;
    }

    pub fn sum(&self) -> T {
        self.rates.iter().copied().sum()
    }
}

/// Traffic an eRRH pulls over its fronthaul link: every missing subfile of
/// every UE it serves, at that subfile's delivery rate.
pub fn fronthaul_rate<T: Real>(
    assoc: &Association,
    rates: &DdrAllocation<T>,
    cache: &CacheState,
    errh: usize,
) -> T {
    let mut acc = T::zero();
    for (k, row) in assoc.served.iter().enumerate() {
        if !row[errh] {
            continue;
        }
        for m in 0..rates.subfiles {
            if !cache.is_cached(errh, k, m) {
                acc = acc + rates.get(k, m);
            }
        }
    }
    acc
}

pub fn fronthaul_rates_all<T: Real>(
    assoc: &Association,
    rates: &DdrAllocation<T>,
    cache: &CacheState,
    num_errh: usize,
) -> Vec<T> {
    (0..num_errh).map(|i| fronthaul_rate(assoc, rates, cache, i)).collect()
}

/// Interference-plus-noise covariance seen by UE `ue` when decoding its
/// subfile `m`. Decoding runs in subfile order within the UE's own file,
/// so own-file subfiles before `m` are already cancelled; later own-file
/// subfiles and every other UE's streams interfere.
pub fn interference_covariance<T: Real>(
    stack: &PrecoderStack<T>,
    scen: &Scenario<T>,
    ue: usize,
    subfile: usize,
) -> CMat<T> {
    let h = &scen.channels.channels[ue];
    let mut xi = scen.channels.noise_covariance(scen.cfg.antennas_ue);
    for k in 0..stack.num_ue {
        for m in 0..stack.subfiles {
            let interferes = if k == ue { m > subfile } else { true };
            if interferes {
                let hf = h.mul(stack.get(k, m));
                xi.add_assign_scaled(&hf.mul_herm(), T::one());
            }
        }
    }
    xi
}

/// Achievable rate of one stream in Mb/s: bandwidth times
/// `log2 det(I + Pi Pi^H Xi^-1)`, evaluated as a Cholesky log-det
/// difference so the interference covariance is never inverted.
pub fn achievable_rate<T: Real>(
    stack: &PrecoderStack<T>,
    scen: &Scenario<T>,
    ue: usize,
    subfile: usize,
) -> T {
    let h = &scen.channels.channels[ue];
    assert!(h.is_finite() && stack.get(ue, subfile).is_finite(), "non-finite channel or precoder");
    let xi = interference_covariance(stack, scen, ue, subfile);
    let pi = h.mul(stack.get(ue, subfile));
    let mut signal = xi.clone();
    signal.add_assign_scaled(&pi.mul_herm(), T::one());
    let ln2 = real::<T>(std::f64::consts::LN_2);
    let g = scen.cfg.bandwidth
        * (signal.logdet().expect("signal covariance must be PD")
            - xi.logdet().expect("interference covariance must be PD"))
        / ln2;
    g.max(T::zero())
}

/// Achievable rates for every (UE, subfile) stream in pair order.
pub fn all_rates<T: Real>(stack: &PrecoderStack<T>, scen: &Scenario<T>) -> Vec<T> {
    scen.pairs().map(|(k, m)| achievable_rate(stack, scen, k, m)).collect()
}

#[derive(Debug, Clone)]
pub struct PowerBreakdown<T> {
    /// Per-eRRH radiated power, W.
    pub tx: Vec<T>,
    /// Per-eRRH consumption including amplifier slope and active/sleep base.
    pub errh: Vec<T>,
    /// Per-eRRH fronthaul power, W.
    pub fronthaul: Vec<T>,
    /// Whether each eRRH radiates above the activity threshold.
    pub active: Vec<bool>,
    pub total: T,
    /// Total minus the always-on sleep power.
    pub busy: T,
    /// eRRHs radiating above their budget (still evaluated, just flagged).
    pub budget_violations: Vec<usize>,
}

/// Network power: amplifier slope plus active base for radiating eRRHs,
/// sleep base otherwise, plus fronthaul power proportional to fetched
/// traffic.
pub fn total_power<T: Real>(
    stack: &PrecoderStack<T>,
    assoc: &Association,
    rates: &DdrAllocation<T>,
    scen: &Scenario<T>,
) -> PowerBreakdown<T> {
    let cfg = &scen.cfg;
    let mut tx = Vec::with_capacity(cfg.num_errh);
    let mut errh = Vec::with_capacity(cfg.num_errh);
    let mut fronthaul = Vec::with_capacity(cfg.num_errh);
    let mut active = Vec::with_capacity(cfg.num_errh);
    let mut budget_violations = Vec::new();
    for i in 0..cfg.num_errh {
        let p_tx = stack.errh_tx_power(i);
        if p_tx > cfg.tx_power_budget[i] + real::<T>(1e-9) {
            budget_violations.push(i);
        }
        let radiating = p_tx > cfg.assoc_threshold;
        let p_errh = if radiating {
            cfg.amplifier_slope * p_tx + cfg.active_power
        } else {
            cfg.sleep_power
        };
        let p_fh = cfg.fronthaul_slope * fronthaul_rate(assoc, rates, &scen.cache, i);
        tx.push(p_tx);
        errh.push(p_errh);
        fronthaul.push(p_fh);
        active.push(radiating);
    }
    let total: T = errh.iter().copied().sum::<T>() + fronthaul.iter().copied().sum::<T>();
    let sleep_total = cfg.sleep_power * real::<T>(cfg.num_errh as f64);
    PowerBreakdown { tx, errh, fronthaul, active, total, busy: total - sleep_total, budget_violations }
}

/// Design objective: sum rate minus `eta` times total power.
pub fn objective_p1<T: Real>(
    stack: &PrecoderStack<T>,
    assoc: &Association,
    rates: &DdrAllocation<T>,
    scen: &Scenario<T>,
) -> T {
    rates.sum() - scen.cfg.eta * total_power(stack, assoc, rates, scen).total
}

/// Slack of every design constraint at a candidate point. Positive slack
/// means satisfied; entries below `-tol` are violations.
#[derive(Debug, Clone)]
pub struct FeasibilityReport<T> {
    pub entries: Vec<(String, T)>,
}

impl<T: Real> FeasibilityReport<T> {
    pub fn violations(&self, tol: T) -> Vec<&(String, T)> {
        self.entries.iter().filter(|(_, s)| *s < -tol).collect()
    }

    pub fn is_feasible(&self, tol: T) -> bool {
        self.violations(tol).is_empty()
    }

    pub fn max_violation(&self) -> T {
        self.entries.iter().map(|(_, s)| -*s).fold(T::zero(), T::max)
    }
}

/// Evaluates minimum/maximum rate bounds, fronthaul capacities (with the
/// association read off the precoders), achievable-rate bounds and
/// transmit power budgets.
pub fn check_feasibility<T: Real>(
    stack: &PrecoderStack<T>,
    rates: &DdrAllocation<T>,
    scen: &Scenario<T>,
    _tol: T,
) -> FeasibilityReport<T> {
    let cfg = &scen.cfg;
    let mut entries = Vec::new();
    for (k, m) in scen.pairs() {
        let r = rates.get(k, m);
        entries.push((format!("rate_lower[{},{}]", k + 1, m + 1), r - cfg.qos_rate));
        entries.push((format!("rate_upper[{},{}]", k + 1, m + 1), cfg.subfile_rate_cap - r));
    }
    let assoc = association_from_precoders(stack, cfg.assoc_threshold);
    for i in 0..cfg.num_errh {
        let load = fronthaul_rate(&assoc, rates, &scen.cache, i);
        entries.push((format!("fronthaul[{}]", i + 1), cfg.fronthaul_capacity[i] - load));
    }
    for (k, m) in scen.pairs() {
        let g = achievable_rate(stack, scen, k, m);
        entries.push((format!("rate_bound[{},{}]", k + 1, m + 1), g - rates.get(k, m)));
    }
    for i in 0..cfg.num_errh {
        entries.push((format!("tx_power[{}]", i + 1), cfg.tx_power_budget[i] - stack.errh_tx_power(i)));
    }
    FeasibilityReport { entries }
}
