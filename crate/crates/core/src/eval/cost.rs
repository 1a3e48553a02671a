use std::sync::Mutex;
use std::time::Instant;

use crate::meter::MemoryMeter;

/// Peak working-set bytes of model construction and wall-clock build time.
///
/// Memory is exact accounting of the readings and tree nodes each builder
/// holds, not an allocator counter, so it is stable across runs and platforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub peak_memory_bytes: usize,
    pub build_time_seconds: f64,
}

/// Collects peaks from the meters handed out during a measured build.
#[derive(Debug, Default)]
pub struct CostProbe {
    meters: Mutex<Vec<MemoryMeter>>,
    reported: Mutex<usize>,
}

impl CostProbe {
    pub fn meter(&self) -> MemoryMeter {
        let m = MemoryMeter::new();
        self.meters.lock().unwrap().push(m.clone());
        m
    }

    /// For builders that meter themselves and hand back a peak.
    pub fn report_peak(&self, bytes: usize) {
        let mut r = self.reported.lock().unwrap();
        *r = (*r).max(bytes);
    }

    fn peak(&self) -> usize {
        let metered = self.meters.lock().unwrap().iter().map(MemoryMeter::peak).max().unwrap_or(0);
        metered.max(*self.reported.lock().unwrap())
    }
}

/// Runs `build` and reports the largest peak seen by any node plus elapsed time.
pub fn measure_cost<T>(build: impl FnOnce(&CostProbe) -> T) -> (T, Cost) {
    let probe = CostProbe::default();
    let start = Instant::now();
    let out = build(&probe);
    let build_time_seconds = start.elapsed().as_secs_f64();
    (out, Cost { peak_memory_bytes: probe.peak(), build_time_seconds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iforest::build_iforest_baseline_metered;

    #[test]
    fn empty_thunk_costs_nothing() {
        let ((), cost) = measure_cost(|_| ());
        assert_eq!(cost.peak_memory_bytes, 0);
        assert!(cost.build_time_seconds >= 0.0);
    }

    #[test]
    fn peak_is_max_over_meters() {
        let (_, cost) = measure_cost(|p| {
            let a = p.meter();
            let b = p.meter();
            a.charge(100);
            a.release(100);
            b.charge(40);
            p.report_peak(70);
        });
        assert_eq!(cost.peak_memory_bytes, 100);
    }

    #[test]
    fn bigger_forest_costs_more() {
        let data: Vec<f64> = (0..200).map(|i| 20.0 + (i as f64 * 0.37).sin()).collect();
        let (_, small) = measure_cost(|p| {
            build_iforest_baseline_metered(&data, 5, 4, 1, &p.meter())
        });
        let (_, large) = measure_cost(|p| {
            build_iforest_baseline_metered(&data, 50, 8, 1, &p.meter())
        });
        assert!(large.peak_memory_bytes > small.peak_memory_bytes);
    }
}
