use crate::{Error, Result};

/// Sinusoidal timestep embedding, interleaved `[sin, cos, sin, cos, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestepEmbedding {
    values: Vec<f64>,
}

impl TimestepEmbedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Entry `2i` is `sin(t / 10000^(2i/d))`, entry `2i+1` the matching cosine.
pub fn timestep_embed(t: usize, dim: usize) -> Result<TimestepEmbedding> {
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension must be even and >= 2, got {dim}"
        )));
    }
    let t = t as f64;
    let mut values = Vec::with_capacity(dim);
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / dim as f64);
        let arg = t / freq;
        values.push(arg.sin());
        values.push(arg.cos());
    }
    Ok(TimestepEmbedding { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_timestep_alternates() {
        let e = timestep_embed(0, 8).unwrap();
        assert_eq!(e.values(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn unit_timestep() {
        let e = timestep_embed(1, 2).unwrap();
        assert!((e.values()[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert!((e.values()[1] - 0.540_302_305_868_139_8).abs() < 1e-15);
    }

    #[test]
    fn bounded_and_deterministic() {
        for t in [3, 77, 500, 999, 1000] {
            let e = timestep_embed(t, 128).unwrap();
            assert!(e.values().iter().all(|v| (-1.0..=1.0).contains(v)));
            assert_eq!(e, timestep_embed(t, 128).unwrap());
        }
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(timestep_embed(1, 3).is_err());
        assert!(timestep_embed(1, 0).is_err());
    }
}
