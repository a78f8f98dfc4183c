use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const FEEDBACK_WINDOW: usize = 10;

/// The `n` speeds strictly before `index`, oldest first, left-padded with the
/// earliest speed when fewer exist.
pub fn build_feedback_window(speeds: &[f64], index: usize, n: usize) -> Result<Vec<f64>> {
    if speeds.is_empty() {
        return Err(Error::EmptySequence);
    }
    if index >= speeds.len() {
        return Err(Error::invalid("build_feedback_window", alloc::format!("index {index} beyond stream of {}", speeds.len())));
    }
    if index == 0 {
        return Err(Error::NoHistory { index });
    }
    let start = index.saturating_sub(n);
    let prior = &speeds[start..index];
    let mut out = Vec::with_capacity(n);
    out.resize(n - prior.len(), speeds[0]);
    out.extend_from_slice(prior);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s: Vec<f64> = (0..20).map(|i| 100.0 + i as f64).collect();
        assert_eq!(build_feedback_window(&s, 15, 10).unwrap(), s[5..15]);
        let w = build_feedback_window(&s, 3, 10).unwrap();
        assert_eq!(w, [100.0, 100.0, 100.0, 100.0, 100.0, 100.0, 100.0, 100.0, 101.0, 102.0]);
        assert!(!w.contains(&s[3]));
        assert!(matches!(build_feedback_window(&s, 0, 10), Err(Error::NoHistory { index: 0 })));
        assert!(matches!(build_feedback_window(&[], 0, 10), Err(Error::EmptySequence)));
    }
}
