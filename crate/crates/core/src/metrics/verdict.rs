use serde::{Serialize, Serializer};

use super::{mse, ncc, psnr_from_mse, ssim};
use crate::error::Result;
use crate::media::ImageTensor;

/// Image-preservation threshold: sanitized vs cover NCC must reach it.
pub const THETA_IP: f64 = 0.95;
/// Secret-elimination threshold: revealed vs secret NCC must not exceed it.
pub const THETA_SE: f64 = 0.30;

fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*v)
    }
}

/// The four image-quality numbers for one reference/test pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QualityMetrics {
    pub mse: f64,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub ncc: f64,
}

impl QualityMetrics {
    /// NCC falls back to 0 when undefined (a constant image carries no
    /// correlation); SSIM falls back to NaN for images below the window size.
    pub fn compute(reference: &ImageTensor, test: &ImageTensor) -> Result<Self> {
        let mse = mse(reference, test)?;
        Ok(Self {
            mse,
            psnr_db: psnr_from_mse(mse, 255.0),
            ssim: ssim(reference, test).unwrap_or(f64::NAN),
            ncc: match ncc(reference, test) {
                Ok(v) => v,
                Err(crate::Error::Undefined(_)) => 0.0,
                Err(e) => return Err(e),
            },
        })
    }

    /// Strict variant for the `eval` command: undefined NCC is an error.
    pub fn compute_strict(reference: &ImageTensor, test: &ImageTensor) -> Result<Self> {
        let mse = mse(reference, test)?;
        Ok(Self {
            mse,
            psnr_db: psnr_from_mse(mse, 255.0),
            ssim: ssim(reference, test)?,
            ncc: ncc(reference, test)?,
        })
    }

    /// Elementwise mean over images. An infinite per-image PSNR makes the
    /// mean infinite.
    pub fn mean(items: &[Self]) -> Self {
        let n = items.len() as f64;
        let avg = |f: fn(&Self) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            mse: avg(|m| m.mse),
            psnr_db: avg(|m| m.psnr_db),
            ssim: avg(|m| m.ssim),
            ncc: avg(|m| m.ncc),
        }
    }
}

/// Image preservation (cover vs sanitized) and secret elimination (secret
/// vs secret revealed after sanitization).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub ip: QualityMetrics,
    pub se: QualityMetrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub ip_success: bool,
    pub se_success: bool,
    pub theta_ip: f64,
    pub theta_se: f64,
}

impl Verdict {
    pub fn success(&self) -> bool {
        self.ip_success && self.se_success
    }

    pub fn label(ok: bool) -> &'static str {
        if ok {
            "Success"
        } else {
            "Fail"
        }
    }
}

/// Sanitized iff `ncc_ip >= theta_ip` and `ncc_se <= theta_se`.
pub fn verdict(ncc_ip: f64, ncc_se: f64, theta_ip: f64, theta_se: f64) -> Verdict {
    Verdict {
        ip_success: ncc_ip >= theta_ip,
        se_success: ncc_se <= theta_se,
        theta_ip,
        theta_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_rows() {
        let v = verdict(0.97, 0.01, THETA_IP, THETA_SE);
        assert!(v.ip_success && v.se_success && v.success());
        let v = verdict(0.93, -0.00, THETA_IP, THETA_SE);
        assert!(!v.ip_success && v.se_success);
        let v = verdict(0.95, 0.82, THETA_IP, THETA_SE);
        assert!(v.ip_success && !v.se_success);
    }

    #[test]
    fn json_field_names() {
        let m = QualityMetrics {
            mse: 0.0,
            psnr_db: f64::INFINITY,
            ssim: 1.0,
            ncc: 1.0,
        };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"mse":0.0,"psnr_db":"inf","ssim":1.0,"ncc":1.0}"#);
    }
}
