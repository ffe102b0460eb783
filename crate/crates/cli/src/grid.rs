//! `start:stop:step` value grids.

use std::str::FromStr;

use serde::Serialize;

const MAX_POINTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// `start + k·step` for every `k` whose value lies within half a step of
    /// `[start, stop]`.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 0.5).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(format!("expected start:stop:step, got '{s}'"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}"));
        let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
        if !(start.is_finite() && stop.is_finite() && step > 0.0 && step.is_finite()) {
            return Err("grid needs finite bounds and a positive step".into());
        }
        if stop < start {
            return Err(format!("grid stop {stop} is below start {start}"));
        }
        if (stop - start) / step > MAX_POINTS as f64 {
            return Err(format!("grid has more than {MAX_POINTS} points"));
        }
        Ok(Self { start, stop, step })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_included() {
        let g: Grid = "0:14:0.5".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 29);
        assert_eq!(v[28], 14.0);
        let v = "0.1:20:0.1".parse::<Grid>().unwrap().values();
        assert_eq!(v.len(), 200);
        assert!((v[199] - 20.0).abs() < 1e-12);
        assert_eq!("1:1:1".parse::<Grid>().unwrap().values(), vec![1.0]);
        // stop off the lattice by less than half a step is still reached
        assert_eq!("0:1.4:0.5".parse::<Grid>().unwrap().values(), vec![0.0, 0.5, 1.0, 1.5]);
        assert_eq!("0:1.2:0.5".parse::<Grid>().unwrap().values(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["1:2", "a:2:1", "0:1:0", "0:1:-1", "2:1:0.5", "0:1:1:1"] {
            assert!(s.parse::<Grid>().is_err(), "{s}");
        }
    }
}
