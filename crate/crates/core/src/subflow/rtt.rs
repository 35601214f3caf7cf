use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("RTT sample must be positive and finite, got {0}")]
pub struct InvalidRttSample(pub f64);

/// Smoothed RTT / variance estimator with a clamped, backed-off timeout.
#[derive(Debug, Clone, PartialEq)]
pub struct RttEstimator {
    srtt: f64,
    rttvar: f64,
    rto: f64,
    initialized: bool,
    floor: f64,
    ceiling: f64,
}

impl RttEstimator {
    pub fn new(initial_rto: f64, floor: f64, ceiling: f64) -> Self {
        RttEstimator {
            srtt: 0.0,
            rttvar: 0.0,
            rto: initial_rto.clamp(floor, ceiling),
            initialized: false,
            floor,
            ceiling,
        }
    }

    pub fn srtt(&self) -> Option<f64> {
        self.initialized.then_some(self.srtt)
    }

    pub fn rttvar(&self) -> f64 {
        self.rttvar
    }

    pub fn rto(&self) -> f64 {
        self.rto
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn update(&mut self, sample: f64) -> Result<(), InvalidRttSample> {
        if !(sample.is_finite() && sample > 0.0) {
            return Err(InvalidRttSample(sample));
        }
        if self.initialized {
            self.rttvar = 0.75 * self.rttvar + 0.25 * (self.srtt - sample).abs();
            self.srtt = 0.875 * self.srtt + 0.125 * sample;
        } else {
            self.srtt = sample;
            self.rttvar = sample / 2.0;
            self.initialized = true;
        }
        self.rto = (self.srtt + 4.0 * self.rttvar).clamp(self.floor, self.ceiling);
        Ok(())
    }

    /// Doubles the timeout, capped at the ceiling.
    pub fn backoff(&mut self) {
        self.rto = (self.rto * 2.0).min(self.ceiling);
    }
}
