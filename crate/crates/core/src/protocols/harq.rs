use crate::netmodel::NodeId;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarqParams {
    /// First-attempt error probability when the estimate overshoots by more
    /// than the margin.
    pub p_stale: f64,
    pub p_fresh: f64,
    pub margin_db: f64,
    pub spacing_s: f64,
    /// Retransmissions after the first attempt.
    pub max_retx: u32,
}

impl Default for HarqParams {
    fn default() -> Self {
        Self { p_stale: 0.1, p_fresh: 0.01, margin_db: 1.0, spacing_s: 0.008, max_retx: 3 }
    }
}

/// Error probability of attempt `attempt` (0 for the first transmission);
/// each retransmission halves it.
pub fn harq_error_probability(sinr_est_db: f64, sinr_true_db: f64, attempt: u32, p: &HarqParams) -> f64 {
    let base = if sinr_est_db - sinr_true_db > p.margin_db { p.p_stale } else { p.p_fresh };
    base * 0.5f64.powi(attempt as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HarqOutcome {
    Delivered { attempts: u32 },
    Retry { at: f64 },
    Failed,
}

/// One transmission attempt. Without HARQ an error is final.
pub fn harq_transmit<R: Rng + ?Sized>(
    rng: &mut R,
    enabled: bool,
    attempt: u32,
    sinr_est_db: f64,
    sinr_true_db: f64,
    now: f64,
    p: &HarqParams,
) -> HarqOutcome {
    let pe = harq_error_probability(sinr_est_db, sinr_true_db, attempt, p);
    if rng.random::<f64>() >= pe {
        HarqOutcome::Delivered { attempts: attempt + 1 }
    } else if enabled && attempt < p.max_retx {
        HarqOutcome::Retry { at: now + p.spacing_s }
    } else {
        HarqOutcome::Failed
    }
}

/// A transport block waiting for retransmission.
#[derive(Debug, Clone, PartialEq)]
pub struct HarqProcess<T> {
    pub node_id: NodeId,
    pub ue_id: usize,
    pub block: T,
    /// Attempts made so far.
    pub attempts: u32,
    pub next_retx: f64,
    /// Time of the first attempt.
    pub first_tx: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities() {
        let p = HarqParams::default();
        assert_eq!(harq_error_probability(10.0, 10.0, 0, &p), 0.01);
        assert_eq!(harq_error_probability(12.0, 10.0, 0, &p), 0.1);
        assert_eq!(harq_error_probability(12.0, 10.0, 2, &p), 0.025);
        assert_eq!(harq_error_probability(8.0, 10.0, 0, &p), 0.01);
    }

    #[test]
    fn worst_case_delay_and_loss() {
        // large enough that even the third retry still fails
        let p_always = HarqParams { p_stale: 16.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut now = 0.0;
        let mut attempt = 0;
        loop {
            match harq_transmit(&mut rng, true, attempt, 5.0, 0.0, now, &p_always) {
                HarqOutcome::Retry { at } => {
                    now = at;
                    attempt += 1;
                }
                HarqOutcome::Failed => break,
                HarqOutcome::Delivered { .. } => panic!("cannot succeed"),
            }
        }
        assert_eq!(attempt, 3);
        assert!((now - 0.024).abs() < 1e-12);
        assert_eq!(harq_transmit(&mut rng, false, 0, 5.0, 0.0, 0.0, &p_always), HarqOutcome::Failed);
    }

    #[test]
    fn empirical_first_attempt_rate() {
        let p = HarqParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let fails = (0..n)
            .filter(|_| !matches!(harq_transmit(&mut rng, true, 0, 0.0, 0.0, 0.0, &p), HarqOutcome::Delivered { .. }))
            .count();
        let rate = fails as f64 / n as f64;
        assert!((rate - 0.01).abs() < 0.002, "{rate}");
    }
}
