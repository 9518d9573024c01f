use crate::error::{Error, Result};

use super::Vehicle;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TravelTimeSummary {
    /// Seconds, averaged over every vehicle that has departed.
    pub avg_travel_time: f64,
    pub completed: usize,
    pub unfinished: usize,
}

/// Vehicles still in the network count `end_time - depart_time`; vehicles
/// that have not departed by `end_time` are ignored.
pub fn travel_time_metrics(vehicles: &[Vehicle], end_time: f64) -> Result<TravelTimeSummary> {
    let mut total = 0.0;
    let mut completed = 0;
    let mut unfinished = 0;
    for v in vehicles.iter().filter(|v| v.depart_time < end_time) {
        total += v.travel_time(end_time);
        if v.exit_time.is_some() {
            completed += 1;
        } else {
            unfinished += 1;
        }
    }
    let n = completed + unfinished;
    if n == 0 {
        return Err(Error::UndefinedMetric("average travel time of zero vehicles".into()));
    }
    Ok(TravelTimeSummary {
        avg_travel_time: total / n as f64,
        completed,
        unfinished,
    })
}
