//! Discrete-time coined quantum walk on the infinite line, with the
//! probability-current analytics: forward- and central-difference current
//! fields, their continuity equations, the global interference term, and the
//! closed-form steady-state current.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum WalkError {
    #[error("cot(theta) is undefined at theta = pi/2")]
    UndefinedCotangent,
}

/// Two-parameter coin: rows/cols over the (up, down) chirality basis,
/// C = [[cos t, e^{i d} sin t], [e^{-i d} sin t, -cos t]].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoinParams {
    pub theta: f64,
    pub delta: f64,
}

/// Initial coin state cos(phi/2)|up> + e^{i gamma} sin(phi/2)|down> at the
/// origin.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InitialCoin {
    pub phi: f64,
    pub gamma: f64,
}

impl InitialCoin {
    /// The spatially symmetric choice (1, i)/sqrt(2).
    pub fn symmetric() -> Self {
        InitialCoin { phi: std::f64::consts::FRAC_PI_2, gamma: std::f64::consts::FRAC_PI_2 }
    }

    pub fn amplitudes(&self) -> (C64, C64) {
        (
            C64::new((self.phi / 2.0).cos(), 0.0),
            C64::from_polar((self.phi / 2.0).sin(), self.gamma),
        )
    }
}

/// Chirality-resolved amplitudes on the window [-t, t]; alpha moves right,
/// beta moves left.
#[derive(Clone, Debug)]
pub struct WalkerState {
    pub t: usize,
    /// amplitudes at positions offset + i
    pub offset: i64,
    pub alpha: Vec<C64>,
    pub beta: Vec<C64>,
}

impl WalkerState {
    pub fn localized(init: InitialCoin) -> WalkerState {
        let (a, b) = init.amplitudes();
        WalkerState { t: 0, offset: 0, alpha: vec![a], beta: vec![b] }
    }

    pub fn positions(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.alpha.len()).map(move |i| self.offset + i as i64)
    }

    pub fn alpha_at(&self, n: i64) -> C64 {
        let i = n - self.offset;
        if i < 0 || i as usize >= self.alpha.len() {
            C64::new(0.0, 0.0)
        } else {
            self.alpha[i as usize]
        }
    }

    pub fn beta_at(&self, n: i64) -> C64 {
        let i = n - self.offset;
        if i < 0 || i as usize >= self.beta.len() {
            C64::new(0.0, 0.0)
        } else {
            self.beta[i as usize]
        }
    }

    pub fn rho_at(&self, n: i64) -> f64 {
        self.alpha_at(n).norm_sqr() + self.beta_at(n).norm_sqr()
    }

    pub fn total_probability(&self) -> f64 {
        self.alpha.iter().map(|z| z.norm_sqr()).sum::<f64>()
            + self.beta.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// Global interference term Q(t) = sum_n conj(alpha) beta.
    pub fn q_interference(&self) -> C64 {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a.conj() * b).sum()
    }

    /// Position spread sqrt(<n^2> - <n>^2).
    pub fn sigma(&self) -> f64 {
        let mut p = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for n in self.positions() {
            let rho = self.rho_at(n);
            p += rho;
            m1 += n as f64 * rho;
            m2 += (n as f64) * (n as f64) * rho;
        }
        (m2 / p - (m1 / p) * (m1 / p)).sqrt()
    }
}

/// One step of the walk:
/// alpha(n, t) = cosت alpha(n-1) + e^{i d} sint beta(n-1),
/// beta(n, t) = e^{-i d} sint alpha(n+1) - cost beta(n+1).
pub fn step(state: &WalkerState, coin: CoinParams) -> WalkerState {
    let (c, s) = (coin.theta.cos(), coin.theta.sin());
    let eid = C64::from_polar(1.0, coin.delta);
    let n = state.alpha.len();
    let mut alpha = vec![C64::new(0.0, 0.0); n + 2];
    let mut beta = vec![C64::new(0.0, 0.0); n + 2];
    // new window [offset - 1, offset + n]
    for i in 0..n {
        let a = state.alpha[i];
        let b = state.beta[i];
        // moves right into slot i + 2 within the shifted window
        alpha[i + 2] += c * a + eid * s * b;
        // moves left into slot i
        beta[i] += eid.conj() * s * a - c * b;
    }
    WalkerState { t: state.t + 1, offset: state.offset - 1, alpha, beta }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurrentScheme {
    Forward,
    Central,
}

/// A probability current field at one time slice.
#[derive(Clone, Debug)]
pub struct CurrentField {
    pub scheme: CurrentScheme,
    pub offset: i64,
    pub values: Vec<f64>,
}

impl CurrentField {
    pub fn at(&self, n: i64) -> f64 {
        let i = n - self.offset;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Forward-difference current: satisfies rho(n, t+1) - rho(n, t) =
/// -(j(n+1, t) - j(n, t)) identically.
pub fn current_forward(state: &WalkerState, coin: CoinParams) -> CurrentField {
    let (c, s) = (coin.theta.cos(), coin.theta.sin());
    let (c2, s2) = (c * c, s * s);
    let s2t = 2.0 * s * c;
    let eid = C64::from_polar(1.0, coin.delta);
    let lo = state.offset - 1;
    let hi = state.offset + state.alpha.len() as i64 + 1;
    let mut values = Vec::with_capacity((hi - lo + 1) as usize);
    for n in lo..=hi {
        let am1 = state.alpha_at(n - 1);
        let bm1 = state.beta_at(n - 1);
        let a = state.alpha_at(n);
        let b = state.beta_at(n);
        let j = c2 * (am1.norm_sqr() - b.norm_sqr()) - s2 * (a.norm_sqr() - bm1.norm_sqr())
            + s2t * (eid * (am1.conj() * bm1 + a.conj() * b)).re;
        values.push(j);
    }
    CurrentField { scheme: CurrentScheme::Forward, offset: lo, values }
}

/// Central-difference current:
/// j(n, t) = cos^2 (|alpha|^2 - |beta|^2) + sin 2theta Re(e^{i delta}
/// conj(alpha) beta), satisfying the centred continuity equation.
pub fn current_central(state: &WalkerState, coin: CoinParams) -> CurrentField {
    let c2 = coin.theta.cos().powi(2);
    let s2t = (2.0 * coin.theta).sin();
    let eid = C64::from_polar(1.0, coin.delta);
    let lo = state.offset - 1;
    let hi = state.offset + state.alpha.len() as i64 + 1;
    let mut values = Vec::with_capacity((hi - lo + 1) as usize);
    for n in lo..=hi {
        let a = state.alpha_at(n);
        let b = state.beta_at(n);
        let j = c2 * (a.norm_sqr() - b.norm_sqr()) + s2t * (eid * (a.conj() * b)).re;
        values.push(j);
    }
    CurrentField { scheme: CurrentScheme::Central, offset: lo, values }
}

/// Naive chirality current |alpha|^2 - |beta|^2; kept as the reference that
/// fails the continuity equation for generic coins.
pub fn current_naive(state: &WalkerState) -> CurrentField {
    let lo = state.offset - 1;
    let hi = state.offset + state.alpha.len() as i64 + 1;
    let values = (lo..=hi)
        .map(|n| state.alpha_at(n).norm_sqr() - state.beta_at(n).norm_sqr())
        .collect();
    CurrentField { scheme: CurrentScheme::Forward, offset: lo, values }
}

/// Largest violation of the continuity equation matching the field's scheme,
/// over all sites. `history` must hold the states at (t, t+1) for the
/// forward scheme and (t-1, t, t+1) for the central one; the field belongs
/// to time t.
pub fn continuity_residual(states: &[&WalkerState], field: &CurrentField) -> f64 {
    let mut worst = 0.0f64;
    match field.scheme {
        CurrentScheme::Forward => {
            let (now, next) = (states[0], states[1]);
            let lo = next.offset - 1;
            let hi = next.offset + next.alpha.len() as i64 + 1;
            for n in lo..=hi {
                let dt_rho = next.rho_at(n) - now.rho_at(n);
                let dn_j = field.at(n + 1) - field.at(n);
                worst = worst.max((dt_rho + dn_j).abs());
            }
        }
        CurrentScheme::Central => {
            let (prev, _, next) = (states[0], states[1], states[2]);
            let lo = next.offset - 1;
            let hi = next.offset + next.alpha.len() as i64 + 1;
            for n in lo..=hi {
                let dt_rho = (next.rho_at(n) - prev.rho_at(n)) / 2.0;
                let dn_j = (field.at(n + 1) - field.at(n - 1)) / 2.0;
                worst = worst.max((dt_rho + dn_j).abs());
            }
        }
    }
    worst
}

/// Closed-form asymptotic interference term for a localized initial state.
pub fn q0_analytic(coin: CoinParams, init: InitialCoin) -> std::result::Result<C64, WalkError> {
    let (th, d) = (coin.theta, coin.delta);
    if th.cos().abs() < 1e-12 {
        return Err(WalkError::UndefinedCotangent);
    }
    let (phi, gamma) = (init.phi, init.gamma);
    let tan = th.tan();
    let pref = C64::from_polar(1.0, -d) * ((1.0 - th.sin()) * tan / 2.0);
    let inner = C64::new(phi.cos(), 0.0)
        + phi.sin()
            * (C64::from_polar(tan, -(d + gamma))
                + C64::new(0.0, (d + gamma).sin() * th.cos() / (1.0 - th.sin())));
    Ok(pref * inner)
}

/// Steady-state total current from the interference term,
/// J_inf = 2 cot(theta) Re(e^{i delta} Q0).
pub fn j_infinity_from_q0(coin: CoinParams, q0: C64) -> std::result::Result<f64, WalkError> {
    if coin.theta.cos().abs() < 1e-12 {
        return Err(WalkError::UndefinedCotangent);
    }
    let cot = coin.theta.cos() / coin.theta.sin();
    Ok(2.0 * cot * (C64::from_polar(1.0, coin.delta) * q0).re)
}

/// Steady-state current in closed form,
/// J_inf = (1 - sin theta)(cos phi + sin phi cos(delta + gamma) tan theta).
pub fn j_infinity_analytic(coin: CoinParams, init: InitialCoin) -> std::result::Result<f64, WalkError> {
    if coin.theta.cos().abs() < 1e-12 {
        return Err(WalkError::UndefinedCotangent);
    }
    Ok((1.0 - coin.theta.sin())
        * (init.phi.cos() + init.phi.sin() * (coin.delta + init.gamma).cos() * coin.theta.tan()))
}

/// Asymptotic chirality populations (Omega_plus, Omega_minus) =
/// (1 +- 2 cot(theta) Re(e^{i delta} Q0)) / 2.
pub fn omega_pm(coin: CoinParams, q0: C64) -> std::result::Result<(f64, f64), WalkError> {
    let j = j_infinity_from_q0(coin, q0)?;
    Ok(((1.0 + j) / 2.0, (1.0 - j) / 2.0))
}

/// Moving-window average over the trailing `width` samples.
pub fn moving_average(series: &[f64], width: usize) -> Vec<f64> {
    series
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let lo = i.saturating_sub(width - 1);
            let slice = &series[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

pub struct SteadyStateReport {
    pub t_max: usize,
    pub j_numeric: f64,
    pub j_analytic: f64,
    pub q_numeric: C64,
    pub q_analytic: C64,
    pub deviation: f64,
}

/// Run a walk to t_max and compare the smoothed total current and the
/// interference term against their analytic asymptotics.
pub fn steady_state_check(
    coin: CoinParams,
    init: InitialCoin,
    t_max: usize,
    smoothing: usize,
) -> std::result::Result<SteadyStateReport, WalkError> {
    assert!(t_max >= 200, "asymptotics need at least 200 steps");
    let q0 = q0_analytic(coin, init)?;
    let j_inf = j_infinity_analytic(coin, init)?;
    let mut state = WalkerState::localized(init);
    let mut j_series = Vec::with_capacity(t_max);
    let mut q_series = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        state = step(&state, coin);
        j_series.push(current_forward(&state, coin).total());
        q_series.push(state.q_interference());
    }
    let j_avg = moving_average(&j_series, smoothing);
    let q_re = moving_average(&q_series.iter().map(|q| q.re).collect::<Vec<_>>(), smoothing);
    let q_im = moving_average(&q_series.iter().map(|q| q.im).collect::<Vec<_>>(), smoothing);
    let j_numeric = *j_avg.last().unwrap();
    let q_numeric = C64::new(*q_re.last().unwrap(), *q_im.last().unwrap());
    Ok(SteadyStateReport {
        t_max,
        j_numeric,
        j_analytic: j_inf,
        q_numeric,
        q_analytic: q0,
        deviation: (j_numeric - j_inf).abs(),
    })
}

/// CSV of (n, rho, j, j_central) at the walker's current time.
pub fn field_csv(state: &WalkerState, coin: CoinParams) -> String {
    let jf = current_forward(state, coin);
    let jc = current_central(state, coin);
    let mut out = String::from("n,t,rho,j,j_central\n");
    for n in state.positions() {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e}\n",
            n,
            state.t,
            state.rho_at(n),
            jf.at(n),
            jc.at(n)
        ));
    }
    out
}
