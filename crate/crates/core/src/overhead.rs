//! Closed-form communication cost, in bytes, of each protocol action.
//!
//! ```text
//! C_key   = 18 + s_key + 3 s_sig + s_hash        (CYCLE + CYCLEOK)
//! C_tr    = 76 + s_ek + s_hash + s_ct + 2 s_sig  (STAMP + STAMPED)
//! C_chk   = 74                                   (bare token)
//! C_total = t (α C_key + β C_tr + γ C_chk)
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::suite::{SuiteId, SuiteParams};
use crate::token::TOKEN_LEN;

/// Size of a KEMTLS handshake at level 1, used as a reference point.
pub const KEMTLS_HANDSHAKE_BYTES: u64 = 5556;

/// Fixed JWS overhead (header and encoding) beyond the signature.
pub const JWS_FIXED_BYTES: u64 = 42;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("`{0}` must be a finite non-negative number")]
    Negative(&'static str),
}

/// Actions per hour and horizon in hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub hours: f64,
}

impl Workload {
    pub fn new(alpha: f64, beta: f64, gamma: f64, hours: f64) -> Result<Self, WorkloadError> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma), ("hours", hours)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(WorkloadError::Negative(name));
            }
        }
        Ok(Workload { alpha, beta, gamma, hours })
    }
}

pub fn cost_key_cycle(p: &SuiteParams) -> u64 {
    18 + p.public_key_len as u64 + 3 * p.signature_len as u64 + p.digest_len as u64
}

pub fn cost_token_renewal(p: &SuiteParams) -> u64 {
    76 + p.encaps_key_len as u64 + p.digest_len as u64 + p.ciphertext_len as u64 + 2 * p.signature_len as u64
}

pub fn cost_check() -> u64 {
    TOKEN_LEN as u64
}

pub fn cost_total(w: &Workload, p: &SuiteParams) -> f64 {
    w.hours
        * (w.alpha * cost_key_cycle(p) as f64
            + w.beta * cost_token_renewal(p) as f64
            + w.gamma * cost_check() as f64)
}

/// Smallest possible size of a signed JWS presented per request.
pub fn jws_check_lower_bound(signature_len: u64) -> u64 {
    JWS_FIXED_BYTES + signature_len
}

/// Fraction of per-check bytes saved against the JWS lower bound.
pub fn savings_vs_jws(p: &SuiteParams) -> f64 {
    1.0 - cost_check() as f64 / jws_check_lower_bound(p.signature_len as u64) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KemtlsComparison {
    pub token_renewal: u64,
    pub kemtls: u64,
    pub ratio: f64,
}

pub fn compare_kemtls() -> KemtlsComparison {
    let token_renewal = cost_token_renewal(&SuiteId::L1.params());
    KemtlsComparison {
        token_renewal,
        kemtls: KEMTLS_HANDSHAKE_BYTES,
        ratio: token_renewal as f64 / KEMTLS_HANDSHAKE_BYTES as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: SuiteId,
    pub workload: Workload,
    pub key_cycle: u64,
    pub token_renewal: u64,
    pub check: u64,
    pub total: f64,
    pub jws_check: u64,
    pub jws_savings: f64,
    pub kemtls: KemtlsComparison,
}

impl Report {
    pub fn new(suite: SuiteId, workload: Workload) -> Self {
        let p = suite.params();
        Report {
            suite,
            workload,
            key_cycle: cost_key_cycle(&p),
            token_renewal: cost_token_renewal(&p),
            check: cost_check(),
            total: cost_total(&workload, &p),
            jws_check: jws_check_lower_bound(p.signature_len as u64),
            jws_savings: savings_vs_jws(&p),
            kemtls: compare_kemtls(),
        }
    }

    fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("level", self.suite.name().to_string()),
            ("alpha", self.workload.alpha.to_string()),
            ("beta", self.workload.beta.to_string()),
            ("gamma", self.workload.gamma.to_string()),
            ("hours", self.workload.hours.to_string()),
            ("c_key", self.key_cycle.to_string()),
            ("c_tr", self.token_renewal.to_string()),
            ("c_chk", self.check.to_string()),
            ("c_total", format!("{}", self.total)),
            ("jws_chk_min", self.jws_check.to_string()),
            ("jws_savings", format!("{:.4}", self.jws_savings)),
            ("kemtls_bytes", self.kemtls.kemtls.to_string()),
            ("c_tr_l1_over_kemtls", format!("{:.4}", self.kemtls.ratio)),
        ]
    }

    /// `metric,value` lines with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            let _ = writeln!(out, "{k},{v}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>14}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ZERO: SuiteParams = SuiteParams {
        public_key_len: 0,
        signature_len: 0,
        encaps_key_len: 0,
        ciphertext_len: 0,
        digest_len: 0,
    };

    #[test]
    fn published_level1_numbers() {
        let p = SuiteId::L1.params();
        assert_eq!(cost_key_cycle(&p), 8622);
        assert_eq!(cost_token_renewal(&p), 6516);
        assert_eq!(cost_check(), 74);
        assert_eq!(jws_check_lower_bound(2420), 2462);
        assert!((savings_vs_jws(&p) - 0.9699).abs() < 1e-4);
        assert_eq!((savings_vs_jws(&p) * 100.0).round(), 97.0);
        let k = compare_kemtls();
        assert_eq!((k.token_renewal, k.kemtls), (6516, 5556));
        assert!((k.ratio - 1.17).abs() < 0.005);
    }

    #[test]
    fn constant_terms() {
        assert_eq!(cost_key_cycle(&ZERO), 18);
        assert_eq!(cost_token_renewal(&ZERO), 76);
        assert_eq!(jws_check_lower_bound(32), 74);
        assert_eq!(
            savings_vs_jws(&SuiteParams { signature_len: 32, ..ZERO }),
            0.0
        );
    }

    #[test]
    fn totals() {
        let p = SuiteId::L1.params();
        assert_eq!(cost_total(&Workload::new(1.0, 1.0, 1.0, 1.0).unwrap(), &p), 15212.0);
        assert_eq!(cost_total(&Workload::new(0.0, 0.0, 0.0, 5.0).unwrap(), &p), 0.0);
        assert!(Workload::new(-1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Workload::new(0.0, f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn report_formats() {
        let r = Report::new(SuiteId::L1, Workload::new(1.0, 24.0, 3600.0, 1.0).unwrap());
        let csv = r.to_csv();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("c_key,8622\n"));
        assert!(csv.contains("c_tr,6516\n"));
        assert!(csv.contains("kemtls_bytes,5556\n"));
        assert!(r.to_table().contains("jws_chk_min"));
    }

    proptest! {
        #[test]
        fn total_is_linear(a in 0u32..1000, b in 0u32..1000, g in 0u32..100_000, t in 0u32..1000, k in 0u32..50) {
            let p = SuiteId::L3.params();
            let (a, b, g, t, k) = (a as f64, b as f64, g as f64, t as f64, k as f64);
            let base = cost_total(&Workload::new(a, b, g, t).unwrap(), &p);
            let scale_t = cost_total(&Workload::new(a, b, g, k * t).unwrap(), &p);
            prop_assert!((scale_t - k * base).abs() <= 1e-6 * scale_t.abs().max(1.0));
            let sum = cost_total(&Workload::new(a, 0.0, 0.0, t).unwrap(), &p)
                + cost_total(&Workload::new(0.0, b, 0.0, t).unwrap(), &p)
                + cost_total(&Workload::new(0.0, 0.0, g, t).unwrap(), &p);
            prop_assert!((sum - base).abs() <= 1e-6 * base.abs().max(1.0));
        }
    }
}
