//! TD errors for the two training algorithms.

use crate::loss::Variant;

/// A TD error together with every quantity that produced it. The reward is
/// added last so that a self-consistent value yields `δ = −b` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdRecord {
    pub variant: Variant,
    pub delta: f64,
    pub target: f64,
    pub reward: f64,
    pub psnr_next: f64,
    pub v_k: f64,
    pub v_next: f64,
    /// Termination probability at the next state (Terminal variant); 1 or 0
    /// encodes the terminated flag for the Naive variant.
    pub p_next: f64,
}

impl TdRecord {
    /// Recomputes the record from its stored components.
    pub fn recompute(&self) -> TdRecord {
        match self.variant {
            Variant::Naive => td_error_naive(self.reward, self.psnr_next, self.v_k, self.v_next, self.p_next == 1.0),
            Variant::Terminal => td_error_terminal(self.reward, self.p_next, self.psnr_next, self.v_k, self.v_next),
        }
    }
}

/// `δ = −b + PSNR(x̂_{k+1}) − V̂(x̂_k)` on termination, else
/// `δ = −b + V̂(x̂_{k+1}) − V̂(x̂_k)`.
pub fn td_error_naive(reward: f64, psnr_next: f64, v_k: f64, v_next: f64, terminated: bool) -> TdRecord {
    let bootstrap = if terminated { psnr_next } else { v_next };
    TdRecord {
        variant: Variant::Naive,
        delta: reward + (bootstrap - v_k),
        target: reward + bootstrap,
        reward,
        psnr_next,
        v_k,
        v_next,
        p_next: if terminated { 1.0 } else { 0.0 },
    }
}

/// `δ = −b + (1 − p)·V̂_C(x̂_{k+1}) + p·PSNR(x̂_{k+1}) − V̂_C(x̂_k)`.
pub fn td_error_terminal(reward: f64, p_next: f64, psnr_next: f64, vc_k: f64, vc_next: f64) -> TdRecord {
    let bootstrap = (1.0 - p_next) * vc_next + p_next * psnr_next;
    TdRecord {
        variant: Variant::Terminal,
        delta: reward + (bootstrap - vc_k),
        target: reward + bootstrap,
        reward,
        psnr_next,
        v_k: vc_k,
        v_next: vc_next,
        p_next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_cases() {
        assert_eq!(td_error_naive(-0.5, 20.0, 19.0, 123.0, true).delta, 0.5);
        assert_eq!(td_error_naive(-0.7, 99.0, 12.25, 12.25, false).delta, -0.7);
        assert_eq!(td_error_naive(0.0, 31.5, 31.5, 0.0, true).delta, 0.0);
    }

    #[test]
    fn terminal_cases() {
        assert_eq!(td_error_terminal(-0.5, 0.25, 20.0, 16.0, 16.0).delta, 0.5);
        let r = td_error_terminal(-0.5, 1.0, 22.0, 18.0, 7.0);
        assert_eq!(r.delta, -0.5 + 22.0 - 18.0);
        assert_eq!(td_error_terminal(-0.3, 0.0, 50.0, 9.5, 9.5).delta, -0.3);
    }

    #[test]
    fn recompute_is_exact() {
        let r = td_error_terminal(-0.37, 0.613, 23.123, 19.7, 21.01);
        assert_eq!(r.recompute(), r);
        let n = td_error_naive(-0.37, 23.1, 19.7, 21.01, false);
        assert_eq!(n.recompute(), n);
    }
}
