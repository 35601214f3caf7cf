//! Coupled congestion-window increase and decrease rules.
//!
//! Every rule is a pure function of a [`CouplingView`], a read-only picture
//! of all subflows' windows (in MSS) and smoothed RTTs (in seconds).
//!
//! | mode            | increase per ACK (congestion avoidance) | decrease on loss                  |
//! |-----------------|------------------------------------------|-----------------------------------|
//! | Uncoupled       | `1 / w_i`                                | `w_i / 2`, floored at 2           |
//! | FullyCoupled    | `1 / w_total`                            | `w_i - w_total / 2`, floored at 1 |
//! | LinkedIncreases | `alpha / w_total`                        | `w_i / 2`, floored at 2           |
//! | RttCompensator  | `min(alpha / w_total, 1 / w_i)`          | `w_i / 2`, floored at 2           |
//!
//! with `alpha = w_total * max_i(w_i / rtt_i^2) / (sum_i w_i / rtt_i)^2`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingMode {
    Uncoupled,
    FullyCoupled,
    LinkedIncreases,
    RttCompensator,
}

impl CouplingMode {
    pub const ALL: [CouplingMode; 4] = [
        CouplingMode::Uncoupled,
        CouplingMode::FullyCoupled,
        CouplingMode::LinkedIncreases,
        CouplingMode::RttCompensator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CouplingMode::Uncoupled => "uncoupled",
            CouplingMode::FullyCoupled => "fully-coupled",
            CouplingMode::LinkedIncreases => "linked-increases",
            CouplingMode::RttCompensator => "rtt-compensator",
        }
    }
}

impl fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown coupling mode {0:?} (expected uncoupled, fully-coupled, linked-increases or rtt-compensator)")]
pub struct UnknownCouplingMode(pub String);

impl FromStr for CouplingMode {
    type Err = UnknownCouplingMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match norm.as_str() {
            "uncoupled" | "reno" => Ok(CouplingMode::Uncoupled),
            "fullycoupled" => Ok(CouplingMode::FullyCoupled),
            "linkedincreases" | "lia" => Ok(CouplingMode::LinkedIncreases),
            "rttcompensator" => Ok(CouplingMode::RttCompensator),
            _ => Err(UnknownCouplingMode(s.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CouplingError {
    #[error("no subflow has a positive congestion window")]
    NoActiveSubflow,
}

/// Windows (MSS) and smoothed RTTs (seconds) of every subflow.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingView {
    windows: Vec<f64>,
    rtts: Vec<f64>,
}

impl CouplingView {
    /// Panics if the slices differ in length or an RTT is not positive.
    pub fn new(windows: Vec<f64>, rtts: Vec<f64>) -> Self {
        assert_eq!(windows.len(), rtts.len(), "one RTT per window");
        assert!(rtts.iter().all(|&r| r > 0.0 && r.is_finite()), "RTTs must be positive");
        CouplingView { windows, rtts }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window(&self, i: usize) -> f64 {
        self.windows[i]
    }

    pub fn rtt(&self, i: usize) -> f64 {
        self.rtts[i]
    }

    pub fn set_window(&mut self, i: usize, w: f64) {
        self.windows[i] = w;
    }

    pub fn total_window(&self) -> f64 {
        self.windows.iter().sum()
    }
}

pub fn compute_alpha(view: &CouplingView) -> Result<f64, CouplingError> {
    let active = || view.windows.iter().zip(&view.rtts).filter(|(&w, _)| w > 0.0);
    let (w_best, rtt_best) = active()
        .max_by(|(w1, r1), (w2, r2)| (*w1 / (*r1 * *r1)).total_cmp(&(*w2 / (*r2 * *r2))))
        .map(|(&w, &r)| (w, r))
        .ok_or(CouplingError::NoActiveSubflow)?;
    // RTTs relative to the best path's, so one path or equal paths come out
    // exact.
    let total: f64 = active().map(|(&w, _)| w).sum();
    let rate_sum: f64 = active().map(|(&w, &r)| w * (rtt_best / r)).sum();
    Ok(total * w_best / (rate_sum * rate_sum))
}

/// Congestion-avoidance window increment (in MSS) for one ACK on subflow `i`.
pub fn on_ack_increase(mode: CouplingMode, i: usize, view: &CouplingView) -> f64 {
    let w_i = view.window(i);
    let reno = 1.0 / w_i;
    match mode {
        CouplingMode::Uncoupled => reno,
        CouplingMode::FullyCoupled => 1.0 / view.total_window(),
        CouplingMode::LinkedIncreases | CouplingMode::RttCompensator => {
            let alpha = match compute_alpha(view) {
                Ok(a) => a,
                Err(_) => return reno,
            };
            let linked = alpha / view.total_window();
            if mode == CouplingMode::LinkedIncreases {
                linked
            } else {
                linked.min(reno)
            }
        }
    }
}

/// New `(window, ssthresh)` for subflow `i` after a loss attributed to it.
pub fn on_loss_decrease(mode: CouplingMode, i: usize, view: &CouplingView) -> (f64, f64) {
    let w_i = view.window(i);
    let ssthresh = match mode {
        CouplingMode::FullyCoupled => (w_i - view.total_window() / 2.0).max(1.0),
        _ => (w_i / 2.0).max(2.0),
    };
    (ssthresh, ssthresh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(w: &[f64], rtt: &[f64]) -> CouplingView {
        CouplingView::new(w.to_vec(), rtt.to_vec())
    }

    #[test]
    fn alpha_single_subflow_is_one() {
        assert_eq!(compute_alpha(&view(&[10.0], &[0.1])).unwrap(), 1.0);
    }

    #[test]
    fn alpha_equal_paths() {
        let a = compute_alpha(&view(&[10.0, 10.0], &[0.1, 0.1])).unwrap();
        assert!((a - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alpha_unequal_rtts() {
        // 20 * (10 / 0.01) / (100 + 50)^2
        let a = compute_alpha(&view(&[10.0, 10.0], &[0.1, 0.2])).unwrap();
        assert!((a - 8.0 / 9.0).abs() < 1e-12, "{a}");
    }

    #[test]
    fn alpha_needs_an_active_subflow() {
        assert_eq!(
            compute_alpha(&view(&[0.0, 0.0], &[0.1, 0.1])),
            Err(CouplingError::NoActiveSubflow)
        );
    }

    #[test]
    fn rtt_compensator_cap_binds() {
        let v = view(&[1.0, 39.0], &[0.01, 10.0]);
        let inc = on_ack_increase(CouplingMode::RttCompensator, 1, &v);
        assert_eq!(inc, 1.0 / 39.0);
        let linked = on_ack_increase(CouplingMode::LinkedIncreases, 1, &v);
        assert!((linked - 0.926).abs() < 1e-3, "{linked}");
    }

    #[test]
    fn fully_coupled_and_uncoupled_increase() {
        let v = view(&[10.0, 10.0], &[0.1, 0.3]);
        assert_eq!(on_ack_increase(CouplingMode::FullyCoupled, 0, &v), 0.05);
        assert_eq!(on_ack_increase(CouplingMode::FullyCoupled, 1, &v), 0.05);
        assert_eq!(on_ack_increase(CouplingMode::Uncoupled, 0, &v), 0.1);
    }

    #[test]
    fn loss_decrease_rules() {
        let v = view(&[10.0, 10.0], &[0.1, 0.1]);
        assert_eq!(on_loss_decrease(CouplingMode::FullyCoupled, 0, &v), (1.0, 1.0));
        let v = view(&[10.0], &[0.1]);
        assert_eq!(on_loss_decrease(CouplingMode::RttCompensator, 0, &v), (5.0, 5.0));
        for mode in CouplingMode::ALL {
            let v = view(&[2.0, 2.0], &[0.1, 0.1]);
            let (w, ss) = on_loss_decrease(mode, 0, &v);
            assert!(w >= 1.0 && ss >= 1.0, "{mode}");
            if mode != CouplingMode::FullyCoupled {
                assert_eq!((w, ss), (2.0, 2.0));
            }
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in CouplingMode::ALL {
            assert_eq!(mode.name().parse::<CouplingMode>().unwrap(), mode);
        }
        assert_eq!("RttCompensator".parse::<CouplingMode>().unwrap(), CouplingMode::RttCompensator);
        assert!("cubic".parse::<CouplingMode>().is_err());
    }
}
