//! Codebook usage, entropy, bitrate and throughput statistics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::quantizer::TokenIndex;

/// Occurrence count of every code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl TokenHistogram {
    pub fn new(codebook_size: usize) -> Self {
        TokenHistogram { counts: vec![0; codebook_size], total: 0 }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        TokenHistogram { counts, total }
    }

    pub fn from_tokens(codebook_size: usize, tokens: &[TokenIndex]) -> Result<Self> {
        let mut h = Self::new(codebook_size);
        for &t in tokens {
            h.add(t)?;
        }
        Ok(h)
    }

    pub fn add(&mut self, t: TokenIndex) -> Result<()> {
        let slot = self
            .counts
            .get_mut(t.0 as usize)
            .ok_or_else(|| Error::Format(alloc::format!("token {} outside codebook", t.0)))?;
        *slot += 1;
        self.total += 1;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn codebook_size(&self) -> usize {
        self.counts.len()
    }

    fn require_data(&self) -> Result<()> {
        if self.total == 0 || self.counts.is_empty() {
            return Err(Error::Degenerate("empty token histogram"));
        }
        Ok(())
    }
}

/// Percentage of codes observed at least once.
pub fn code_usage(h: &TokenHistogram) -> Result<f64> {
    h.require_data()?;
    let used = h.counts.iter().filter(|&&c| c > 0).count();
    Ok(100.0 * used as f64 / h.counts.len() as f64)
}

/// Empirical entropy in bits divided by `log2(codebook_size)`. A one-entry
/// codebook has no uncertainty and reports 0.
pub fn normalized_entropy(h: &TokenHistogram) -> Result<f64> {
    h.require_data()?;
    if h.counts.len() < 2 {
        return Ok(0.0);
    }
    let total = h.total as f64;
    let bits: f64 = h
        .counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * math::log2_64(p)
        })
        .sum();
    Ok(bits / math::log2_64(h.counts.len() as f64))
}

/// `token_rate * log2(codebook_size) / 1000`.
pub fn bitrate_kbps(token_rate: f64, codebook_size: u64) -> Result<f64> {
    if !codebook_size.is_power_of_two() {
        return Err(Error::Contract(alloc::format!("codebook size {codebook_size} is not a power of two")));
    }
    Ok(token_rate * codebook_size.trailing_zeros() as f64 / 1000.0)
}

/// Bitrate in kbps truncated to two decimals, the way codec tables list it
/// (0.808 kbps is listed as 0.80).
pub fn format_kbps(kbps: f64) -> String {
    let hundredths = math::floor64(kbps * 100.0 + 1e-9);
    alloc::format!("{:.2}", hundredths / 100.0)
}

/// Seconds of audio processed per second of wall clock.
pub fn real_time_factor(audio_duration_s: f64, wall_clock_s: f64) -> Result<f64> {
    if !(wall_clock_s > 0.0) {
        return Err(Error::Contract("wall clock time must be positive".into()));
    }
    Ok(audio_duration_s / wall_clock_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_examples() {
        let mut h = TokenHistogram::new(4);
        h.add(TokenIndex(0)).unwrap();
        h.add(TokenIndex(2)).unwrap();
        assert_eq!(code_usage(&h).unwrap(), 50.0);
        assert!(h.add(TokenIndex(4)).is_err());
        assert!(code_usage(&TokenHistogram::new(4)).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(normalized_entropy(&TokenHistogram::from_counts(vec![2, 1, 1, 0])).unwrap(), 0.75);
        assert_eq!(normalized_entropy(&TokenHistogram::from_counts(vec![3; 8])).unwrap(), 1.0);
        assert_eq!(normalized_entropy(&TokenHistogram::from_counts(vec![0, 5, 0, 0])).unwrap(), 0.0);
    }

    #[test]
    fn bitrate_examples() {
        assert_eq!(bitrate_kbps(50.0, 2048).unwrap(), 0.55);
        assert_eq!(bitrate_kbps(50.0, 4096).unwrap(), 0.6);
        assert!((bitrate_kbps(50.5, 65536).unwrap() - 0.808).abs() < 1e-12);
        assert!(bitrate_kbps(50.0, 1000).is_err());
    }

    #[test]
    fn table_formatting_truncates() {
        assert_eq!(format_kbps(bitrate_kbps(50.0, 2048).unwrap()), "0.55");
        assert_eq!(format_kbps(bitrate_kbps(50.0, 4096).unwrap()), "0.60");
        assert_eq!(format_kbps(bitrate_kbps(50.5, 65536).unwrap()), "0.80");
    }

    #[test]
    fn rtf_examples() {
        assert_eq!(real_time_factor(10.0, 10.0).unwrap(), 1.0);
        assert_eq!(real_time_factor(10.0, 0.1).unwrap(), 100.0);
        assert!(real_time_factor(1.0, 0.0).is_err());
    }
}
