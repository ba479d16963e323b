//! Parameter grids given on the command line.

use std::str::FromStr;

/// Probability grid from `a,b,c` or an inclusive `lo:hi:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid(pub Vec<f64>);

/// Integer grid from `a,b,c` or an inclusive `lo:hi:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct NGrid(pub Vec<u64>);

fn num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e| format!("`{}`: {e}", s.trim()))
}

fn split_range(s: &str) -> Option<[&str; 3]> {
    let parts: Vec<&str> = s.split(':').collect();
    <[&str; 3]>::try_from(parts).ok()
}

impl FromStr for ValueGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = if s.contains(':') {
            let [lo, hi, step] = split_range(s).ok_or("expected lo:hi:step")?;
            let (lo, hi, step): (f64, f64, f64) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0 && step.is_finite()) || lo.partial_cmp(&hi).is_none_or(|o| o.is_gt()) {
                return Err("need lo <= hi and a positive step".into());
            }
            // tolerate round-off in (hi - lo) / step
            let count = ((hi - lo) / step + 1e-9).floor() as u64;
            // snap to 12 decimals so 0.1 + 2 * 0.05 prints as 0.2
            (0..=count)
                .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        } else {
            s.split(',').map(num).collect::<Result<Vec<f64>, _>>()?
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err("grid values must be finite".into());
        }
        Ok(ValueGrid(values))
    }
}

impl FromStr for NGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values: Vec<u64> = if s.contains(':') {
            let [lo, hi, step] = split_range(s).ok_or("expected lo:hi:step")?;
            let (lo, hi, step): (u64, u64, u64) = (num(lo)?, num(hi)?, num(step)?);
            if step == 0 || lo > hi {
                return Err("need lo <= hi and a positive step".into());
            }
            (lo..=hi).step_by(step as usize).collect()
        } else {
            s.split(',').map(num).collect::<Result<_, _>>()?
        };
        if values.contains(&0) {
            return Err("N must be at least 1".into());
        }
        Ok(NGrid(values))
    }
}
