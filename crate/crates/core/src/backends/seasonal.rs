use super::{Backend, BackendDescriptor, BackendError, Capability, ForecastRequest, Mode};
use crate::series::Resolution;

/// Repeats the most recent value observed at the same time of day.
#[derive(Debug, Clone)]
pub struct SeasonalNaive {
    descriptor: BackendDescriptor,
}

impl SeasonalNaive {
    pub fn new() -> Self {
        Self {
            descriptor: BackendDescriptor::new(
                "seasonal-naive",
                Mode::ZeroShot,
                &[Capability::Forecast],
            ),
        }
    }
}

impl Default for SeasonalNaive {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for SeasonalNaive {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn min_lookback(&self, resolution: Resolution) -> usize {
        resolution.steps_per_day()
    }

    fn predict(&self, req: &ForecastRequest) -> Result<Vec<f64>, BackendError> {
        let values = req
            .lookback
            .dense_values()
            .ok_or(BackendError::MissingInLookback)?;
        let period = req.lookback.resolution().steps_per_day();
        if values.len() < period {
            return Err(BackendError::LookbackTooShort {
                got: values.len(),
                min: period,
            });
        }
        let last_day = &values[values.len() - period..];
        Ok((0..req.horizon_steps())
            .map(|i| last_day[i % period])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::forecast;
    use crate::series::CarbonSeries;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn lookback(values: &[f64], res: Resolution) -> CarbonSeries {
        let t0 = Utc.with_ymd_and_hms(2024, 5, 1, 0, 0, 0).unwrap();
        CarbonSeries::from_values("G", t0, res, values).unwrap()
    }

    #[test]
    fn reproduces_daily_pattern() {
        let p: Vec<f64> = (0..24).map(|h| 200.0 + 10.0 * h as f64).collect();
        let lb = lookback(&[p.clone(), p.clone()].concat(), Resolution::Hourly);
        let rec = forecast(&SeasonalNaive::new(), &ForecastRequest::new(lb, 24)).unwrap();
        assert_eq!(rec.horizon, p);
    }

    #[test]
    fn five_minute_period_is_one_day() {
        let p: Vec<f64> = (0..288).map(|i| i as f64).collect();
        let lb = lookback(&p, Resolution::FiveMinute);
        let rec = forecast(&SeasonalNaive::new(), &ForecastRequest::new(lb, 2)).unwrap();
        assert_eq!(rec.horizon, (0..24).map(|i| i as f64).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn periodic_truth_is_reproduced(
            p in prop::collection::vec(0.0f64..1000.0, 24),
            days in 1usize..5,
            horizon in 1usize..200,
        ) {
            let lb: Vec<f64> = (0..days * 24).map(|i| p[i % 24]).collect();
            let rec = forecast(&SeasonalNaive::new(), &ForecastRequest::new(lookback(&lb, Resolution::Hourly), horizon)).unwrap();
            for (i, v) in rec.horizon.iter().enumerate() {
                prop_assert_eq!(*v, p[i % 24]);
            }
        }
    }
}
