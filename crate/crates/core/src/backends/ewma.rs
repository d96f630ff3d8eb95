use super::{Backend, BackendDescriptor, BackendError, Capability, ForecastRequest, Mode};
use crate::series::Resolution;

/// Seasonal exponentially weighted moving average.
///
/// One smoothing state per time-of-day slot: `s(d, h) = a * y(d, h) + (1 - a) * s(d - 1, h)`,
/// seeded with the first observation of that slot. Every future day repeats
/// the final states.
#[derive(Debug, Clone)]
pub struct Ewma {
    alpha: f64,
    descriptor: BackendDescriptor,
}

impl Ewma {
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn new(alpha: f64) -> Self {
        assert!(
            alpha > 0.0 && alpha <= 1.0,
            "EWMA smoothing constant must be in (0, 1], got {alpha}"
        );
        Self {
            alpha,
            descriptor: BackendDescriptor::new("ewma", Mode::ZeroShot, &[Capability::Forecast]),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Final smoothing state per slot; `None` for slots never observed.
    pub fn states(&self, values: &[f64], first_phase: usize, period: usize) -> Vec<Option<f64>> {
        let mut states = vec![None; period];
        for (i, &y) in values.iter().enumerate() {
            let slot = &mut states[(first_phase + i) % period];
            *slot = Some(match *slot {
                None => y,
                Some(s) => self.alpha * y + (1.0 - self.alpha) * s,
            });
        }
        states
    }
}

impl Default for Ewma {
    fn default() -> Self {
        Self::new(Self::DEFAULT_ALPHA)
    }
}

impl Backend for Ewma {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn min_lookback(&self, resolution: Resolution) -> usize {
        resolution.steps_per_day()
    }

    fn predict(&self, req: &ForecastRequest) -> Result<Vec<f64>, BackendError> {
        let lb = &req.lookback;
        let values = lb.dense_values().ok_or(BackendError::MissingInLookback)?;
        let period = lb.resolution().steps_per_day();
        let first_phase = lb.resolution().phase_of(lb.start());
        let states = self.states(&values, first_phase, period);
        let start_phase = (first_phase + values.len()) % period;
        (0..req.horizon_steps())
            .map(|i| {
                states[(start_phase + i) % period].ok_or(BackendError::LookbackTooShort {
                    got: values.len(),
                    min: period,
                })
            })
            .collect()
    }
}
