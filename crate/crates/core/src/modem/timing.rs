use crate::error::Result;

use super::TimingRecoveryParams;

/// Mueller and Muller decision-directed symbol timing recovery on a real
/// soft stream, with linear interpolation at the fractional phase `mu`.
///
/// Each step emits `y = x[i] + mu * (x[i+1] - x[i])`, forms the timing error
/// `e = sgn(y_prev) * y - sgn(y) * y_prev` (clipped to +/-1), and advances
/// `omega += gain_omega * e` (held within the relative limit) and
/// `mu += omega + gain_mu * e`.
#[derive(Debug, Clone)]
pub struct MuellerMuller {
    params: TimingRecoveryParams,
    omega: f64,
    omega_mid: f64,
    omega_limit: f64,
    mu: f64,
    last: f64,
    pending: Vec<f64>,
    /// absolute input index of `pending[0]`
    base: u64,
    /// next interpolation index, relative to `pending`
    idx: usize,
}

fn decision(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl MuellerMuller {
    pub fn new(params: TimingRecoveryParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            omega: params.omega,
            omega_mid: params.omega,
            omega_limit: params.omega * params.omega_relative_limit,
            mu: params.mu,
            last: 0.0,
            pending: Vec::new(),
            base: 0,
            idx: 0,
            params,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Appends recovered symbols to `out`. When `positions` is given, the
    /// absolute input index each symbol was interpolated from is appended too.
    pub fn process(&mut self, input: &[f64], out: &mut Vec<f64>, mut positions: Option<&mut Vec<u64>>) {
        self.pending.extend_from_slice(input);
        while self.idx + 1 < self.pending.len() {
            let x0 = self.pending[self.idx];
            let x1 = self.pending[self.idx + 1];
            let y = x0 + self.mu * (x1 - x0);
            let err = (decision(self.last) * y - decision(y) * self.last).clamp(-1.0, 1.0);
            self.last = y;
            out.push(y);
            if let Some(p) = positions.as_deref_mut() {
                p.push(self.base + self.idx as u64);
            }

            self.omega += self.params.gain_omega * err;
            self.omega = self.omega_mid + (self.omega - self.omega_mid).clamp(-self.omega_limit, self.omega_limit);
            self.mu += self.omega + self.params.gain_mu * err;
            let whole = self.mu.floor();
            self.idx += whole.max(0.0) as usize;
            self.mu -= whole;
        }
        // keep only what the next interpolation still needs
        let drop = self.idx.min(self.pending.len());
        self.pending.drain(..drop);
        self.base += drop as u64;
        self.idx -= drop;
    }
}

pub fn mm_timing_recovery(soft: &[f64], params: &TimingRecoveryParams) -> Result<Vec<f64>> {
    let mut mm = MuellerMuller::new(*params)?;
    let mut out = Vec::with_capacity(soft.len() / params.omega.max(1.0) as usize + 1);
    mm.process(soft, &mut out, None);
    Ok(out)
}
