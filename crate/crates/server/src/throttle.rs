//! Per-task token-bucket throttling of the incoming result flow.

use fedtask_core::VirtualTime;

/// Deterministic token bucket refilled by elapsed virtual time.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate_per_sec: f64,
    burst: f64,
    tokens: f64,
    last_refill: VirtualTime,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64, burst: f64, now: VirtualTime) -> Self {
        TokenBucket { rate_per_sec, burst, tokens: burst, last_refill: now }
    }

    /// Takes one token if available after refilling for the elapsed time.
    pub fn allow(&mut self, now: VirtualTime) -> bool {
        let elapsed_millis = now.millis().saturating_sub(self.last_refill.millis());
        self.last_refill = now;
        self.tokens = (self.tokens + self.rate_per_sec * elapsed_millis as f64 / 1_000.0).min(self.burst);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }
}
