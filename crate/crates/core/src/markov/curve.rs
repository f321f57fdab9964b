use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    Analytical,
    Simulated,
}

impl SeriesSource {
    pub fn name(self) -> &'static str {
        match self {
            SeriesSource::Analytical => "analytical",
            SeriesSource::Simulated => "simulated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub p_out: f64,
    pub source: SeriesSource,
    pub ci_halfwidth: Option<f64>,
}

/// Outage probability against SNR, possibly holding an analytical and a
/// simulated series side by side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutageCurve {
    pub points: Vec<CurvePoint>,
}

impl OutageCurve {
    pub fn series(&self, source: SeriesSource) -> OutageCurve {
        OutageCurve {
            points: self
                .points
                .iter()
                .copied()
                .filter(|p| p.source == source)
                .collect(),
        }
    }

    /// SNR must be strictly increasing within each series.
    pub fn validate(&self) -> Result<()> {
        for source in [SeriesSource::Analytical, SeriesSource::Simulated] {
            let s = self.series(source);
            if s.points.windows(2).any(|w| w[0].snr_db >= w[1].snr_db) {
                return Err(invalid("snr_db", "must be strictly increasing per series"));
            }
        }
        Ok(())
    }

    pub fn at(&self, snr_db: f64) -> Result<&CurvePoint> {
        let mut hits = self
            .points
            .iter()
            .filter(|p| (p.snr_db - snr_db).abs() < 1e-9);
        let first = hits
            .next()
            .ok_or_else(|| invalid("snr_db", format!("no point at {snr_db} dB")))?;
        if hits.next().is_some() {
            return Err(invalid(
                "snr_db",
                format!("several series at {snr_db} dB; select one first"),
            ));
        }
        Ok(first)
    }
}

/// Slope of `log10 P_out` per 10 dB between two SNR points.
pub fn estimate_diversity(curve: &OutageCurve, snr_lo: f64, snr_hi: f64) -> Result<f64> {
    if snr_hi <= snr_lo {
        return Err(invalid("snr_hi", "must exceed snr_lo"));
    }
    let lo = curve.at(snr_lo)?.p_out;
    let hi = curve.at(snr_hi)?.p_out;
    if !(lo > 0.0 && hi > 0.0) {
        return Err(Error::InvalidParameter {
            field: "p_out",
            reason: format!("diversity needs positive outage probabilities, got {lo} and {hi}"),
        });
    }
    Ok((lo.log10() - hi.log10()) / ((snr_hi - snr_lo) / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> OutageCurve {
        OutageCurve {
            points: points
                .iter()
                .map(|&(snr_db, p_out)| CurvePoint {
                    snr_db,
                    p_out,
                    source: SeriesSource::Simulated,
                    ci_halfwidth: None,
                })
                .collect(),
        }
    }

    #[test]
    fn table_iii_slope() {
        let c = curve(&[(6.0, 1e-3), (7.0, 10f64.powf(-4.155))]);
        assert!((estimate_diversity(&c, 6.0, 7.0).unwrap() - 11.55).abs() < 1e-9);
    }

    #[test]
    fn flat_and_invalid() {
        assert_eq!(
            estimate_diversity(&curve(&[(0.0, 0.3), (10.0, 0.3)]), 0.0, 10.0).unwrap(),
            0.0
        );
        assert!(estimate_diversity(&curve(&[(0.0, 0.3), (10.0, 0.0)]), 0.0, 10.0).is_err());
        assert!(estimate_diversity(&curve(&[(0.0, 0.3)]), 0.0, 10.0).is_err());
        assert!(curve(&[(1.0, 0.3), (1.0, 0.2)]).validate().is_err());
        assert!(curve(&[(1.0, 0.3), (2.0, 0.2)]).validate().is_ok());
    }
}
