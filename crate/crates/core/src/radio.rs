//! Link-level radio mathematics: log-distance path loss, received powers,
//! SINR/RSRQ and the SINR to CQI ladder.
//!
//! All powers handled here are per resource element (RE). Noise is the
//! thermal floor integrated over one subcarrier plus the receiver noise
//! figure, so RSRP, interference and noise share one normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subcarriers in one physical resource block.
pub const SUBCARRIERS_PER_PRB: f64 = 12.0;

/// Lower SINR bound (dB, inclusive) of CQI `k + 1`, for `k` in `0..15`.
///
/// Linearized ladder: `-6.7 + 1.9 * (cqi - 1)`.
pub const CQI_SINR_THRESHOLDS_DB: [f64; 15] =
    [-6.7, -4.8, -2.9, -1.0, 0.9, 2.8, 4.7, 6.6, 8.5, 10.4, 12.3, 14.2, 16.1, 18.0, 19.9];

/// Spectral-efficiency cap (bits/s/Hz) indexed by CQI.
pub const CQI_EFFICIENCY: [f64; 16] = [
    0.0, 0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234,
    5.1152, 5.5547,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBudgetParams {
    pub ref_path_loss_db: f64,
    pub ref_distance_m: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub noise_density_dbm_hz: f64,
    pub prb_bandwidth_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for LinkBudgetParams {
    fn default() -> Self {
        Self {
            ref_path_loss_db: 36.6,
            ref_distance_m: 1.0,
            path_loss_exponent: 3.5,
            shadowing_sigma_db: 8.0,
            noise_density_dbm_hz: -174.0,
            prb_bandwidth_hz: 180_000.0,
            noise_figure_db: 7.0,
        }
    }
}

impl LinkBudgetParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("ref_path_loss_db", self.ref_path_loss_db),
            ("ref_distance_m", self.ref_distance_m),
            ("path_loss_exponent", self.path_loss_exponent),
            ("shadowing_sigma_db", self.shadowing_sigma_db),
            ("noise_density_dbm_hz", self.noise_density_dbm_hz),
            ("prb_bandwidth_hz", self.prb_bandwidth_hz),
            ("noise_figure_db", self.noise_figure_db),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("link_params.{name}"), "must be finite"));
            }
        }
        if self.ref_distance_m <= 0.0 {
            return Err(Error::config("link_params.ref_distance_m", "must be > 0"));
        }
        if self.path_loss_exponent <= 0.0 {
            return Err(Error::config("link_params.path_loss_exponent", "must be > 0"));
        }
        if self.prb_bandwidth_hz <= 0.0 {
            return Err(Error::config("link_params.prb_bandwidth_hz", "must be > 0"));
        }
        if self.shadowing_sigma_db < 0.0 {
            return Err(Error::config("link_params.shadowing_sigma_db", "must be >= 0"));
        }
        if self.noise_figure_db < 0.0 {
            return Err(Error::config("link_params.noise_figure_db", "must be >= 0"));
        }
        Ok(())
    }

    /// Thermal noise plus noise figure over one subcarrier, in dBm.
    pub fn noise_per_re_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * (self.prb_bandwidth_hz / SUBCARRIERS_PER_PRB).log10() + self.noise_figure_db
    }
}

/// Link-level observation of one UE towards its serving cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub rsrp_dbm: f64,
    /// Total received power per RE (serving + interference + noise).
    pub rssi_dbm: f64,
    pub rsrq_db: f64,
    pub sinr_db: f64,
    pub cqi: u8,
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    linear_to_db(mw)
}

/// Log-distance path loss. Distances inside the reference distance are
/// clamped to it.
pub fn path_loss_db(distance_m: f64, params: &LinkBudgetParams) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::domain(format!("distance must be positive and finite, got {distance_m}")));
    }
    let d = distance_m.max(params.ref_distance_m);
    Ok(params.ref_path_loss_db + 10.0 * params.path_loss_exponent * (d / params.ref_distance_m).log10())
}

/// Positive shadowing raises the received power.
#[inline]
pub fn rsrp_dbm(tx_power_per_re_dbm: f64, path_loss_db: f64, shadowing_db: f64) -> f64 {
    tx_power_per_re_dbm - path_loss_db + shadowing_db
}

pub fn sinr_db(serving_mw: f64, interferers_mw: &[f64], noise_mw: f64) -> Result<f64> {
    if !(serving_mw > 0.0) {
        return Err(Error::domain(format!("serving power must be > 0 mW, got {serving_mw}")));
    }
    if !(noise_mw > 0.0) {
        return Err(Error::domain(format!("noise power must be > 0 mW, got {noise_mw}")));
    }
    if let Some(bad) = interferers_mw.iter().find(|p| !(**p >= 0.0)) {
        return Err(Error::domain(format!("interferer power must be >= 0 mW, got {bad}")));
    }
    let interference: f64 = interferers_mw.iter().sum();
    Ok(linear_to_db(serving_mw / (interference + noise_mw)))
}

/// RSRQ as the per-RE ratio of serving reference power to total received
/// power. `n_prb` cancels under this normalization and is only validated.
pub fn rsrq_db(rsrp_mw_per_re: f64, total_rx_mw_per_re: f64, n_prb: u32) -> Result<f64> {
    if n_prb == 0 {
        return Err(Error::domain("n_prb must be >= 1"));
    }
    if !(rsrp_mw_per_re > 0.0) || !(total_rx_mw_per_re > 0.0) {
        return Err(Error::domain("RSRQ needs positive powers"));
    }
    if total_rx_mw_per_re < rsrp_mw_per_re {
        return Err(Error::domain(format!(
            "total received power {total_rx_mw_per_re} mW is below RSRP {rsrp_mw_per_re} mW"
        )));
    }
    Ok(linear_to_db(rsrp_mw_per_re / total_rx_mw_per_re))
}

pub fn cqi_from_sinr(sinr_db: f64) -> u8 {
    // thresholds are sorted; count how many lower bounds we clear
    CQI_SINR_THRESHOLDS_DB.iter().take_while(|&&t| sinr_db >= t).count() as u8
}

/// Spectral-efficiency cap for a CQI index; out-of-range indices saturate.
pub fn efficiency_cap(cqi: u8) -> f64 {
    CQI_EFFICIENCY[usize::from(cqi.min(15))]
}

/// Assemble a full [`ChannelSample`] from per-RE received powers.
///
/// `interferer_rsrp_dbm` holds the reference power of every non-serving
/// cell at the UE; all of them transmit continuously.
pub fn channel_sample(
    serving_rsrp_dbm: f64,
    interferer_rsrp_dbm: &[f64],
    noise_per_re_dbm: f64,
    n_prb: u32,
) -> Result<ChannelSample> {
    let serving = dbm_to_mw(serving_rsrp_dbm);
    let interferers: Vec<f64> = interferer_rsrp_dbm.iter().map(|&p| dbm_to_mw(p)).collect();
    let noise = dbm_to_mw(noise_per_re_dbm);
    let sinr = sinr_db(serving, &interferers, noise)?;
    let total = serving + interferers.iter().sum::<f64>() + noise;
    let rsrq = rsrq_db(serving, total, n_prb)?;
    Ok(ChannelSample {
        rsrp_dbm: serving_rsrp_dbm,
        rssi_dbm: mw_to_dbm(total),
        rsrq_db: rsrq,
        sinr_db: sinr,
        cqi: cqi_from_sinr(sinr),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn path_loss_examples() {
        let p = LinkBudgetParams::default();
        assert_eq!(path_loss_db(1.0, &p).unwrap(), 36.6);
        let pl10 = path_loss_db(10.0, &p).unwrap();
        assert!((pl10 - (36.6 + 35.0)).abs() < 1e-12);
        // independent scalar evaluation: 36.6 + 35 * log10(100) = 36.6 + 70
        let pl100 = path_loss_db(100.0, &p).unwrap();
        let oracle = 36.6 + 3.5 * 10.0 * 2.0;
        assert!((pl100 - oracle).abs() < 1e-12);
        assert!((pl100 - 106.6).abs() < 1e-9);
        // inside the reference distance the loss is clamped
        assert_eq!(path_loss_db(0.25, &p).unwrap(), 36.6);
    }

    #[test]
    fn path_loss_rejects_non_positive_distance() {
        let p = LinkBudgetParams::default();
        assert!(matches!(path_loss_db(0.0, &p), Err(Error::Domain(_))));
        assert!(path_loss_db(-3.0, &p).is_err());
        assert!(path_loss_db(f64::NAN, &p).is_err());
    }

    #[test]
    fn rsrp_examples() {
        assert_eq!(rsrp_dbm(-10.0, 0.0, 0.0), -10.0);
        assert!((rsrp_dbm(-10.0, 106.6, 0.0) + 116.6).abs() < 1e-12);
        assert!((rsrp_dbm(-10.0, 106.6, 8.0) + 108.6).abs() < 1e-12);
    }

    #[test]
    fn sinr_examples() {
        assert_eq!(sinr_db(1e-9, &[], 1e-9).unwrap(), 0.0);
        assert!(sinr_db(1.0, &[1.0], 1e-12).unwrap().abs() < 1e-6);
        assert!(sinr_db(10.0, &[4.0, 5.0], 1.0).unwrap().abs() < 1e-12);
        assert!(sinr_db(0.0, &[], 1.0).is_err());
        assert!(sinr_db(1.0, &[], 0.0).is_err());
        assert!(sinr_db(1.0, &[-1.0], 1.0).is_err());
    }

    #[test]
    fn rsrq_examples() {
        assert_eq!(rsrq_db(2.0, 2.0, 50).unwrap(), 0.0);
        assert!((rsrq_db(1.0, 2.0, 50).unwrap() + 3.010_299_956_639_812).abs() < 1e-12);
        assert!((rsrq_db(1.0, 10.0, 1).unwrap() + 10.0).abs() < 1e-12);
        assert!(matches!(rsrq_db(2.0, 1.0, 50), Err(Error::Domain(_))));
        assert!(rsrq_db(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn cqi_examples() {
        assert_eq!(cqi_from_sinr(-30.0), 0);
        assert_eq!(cqi_from_sinr(40.0), 15);
        // table scan oracle: highest k whose lower bound -6.7 + 1.9 (k-1) <= sinr
        let scan = |s: f64| (1..=15u8).filter(|&k| -6.7 + 1.9 * f64::from(k - 1) <= s).max().unwrap_or(0);
        assert_eq!(scan(10.0), 9);
        assert_eq!(cqi_from_sinr(10.0), 9);
        assert_eq!(cqi_from_sinr(-3.0), 2);
    }

    #[test]
    fn cqi_table_is_the_linear_ladder() {
        for (i, t) in CQI_SINR_THRESHOLDS_DB.iter().enumerate() {
            assert!((t - (-6.7 + 1.9 * i as f64)).abs() < 1e-9);
        }
    }

    #[test]
    fn cqi_inclusive_lower_bounds() {
        for (i, &t) in CQI_SINR_THRESHOLDS_DB.iter().enumerate() {
            assert_eq!(cqi_from_sinr(t), (i + 1) as u8);
            assert_eq!(cqi_from_sinr(t - 1e-9), i as u8);
        }
    }

    #[test]
    fn noise_floor_per_re() {
        let p = LinkBudgetParams::default();
        // -174 + 10 log10(15 kHz) + 7
        assert!((p.noise_per_re_dbm() - (-174.0 + 41.760_912_590_556_81 + 7.0)).abs() < 1e-9);
    }

    #[test]
    fn params_validation_names_field() {
        let p = LinkBudgetParams { path_loss_exponent: 0.0, ..Default::default() };
        match p.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "link_params.path_loss_exponent"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn path_loss_monotone(a in 1e-3f64..1e5, b in 1e-3f64..1e5) {
            let p = LinkBudgetParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(path_loss_db(lo, &p).unwrap() <= path_loss_db(hi, &p).unwrap());
        }

        #[test]
        fn sinr_strictly_decreasing_in_interference(
            s in 1e-12f64..1.0, i0 in 0.0f64..1.0, extra in 1e-6f64..1.0, n in 1e-12f64..1e-3,
        ) {
            let lo = sinr_db(s, &[i0], n).unwrap();
            let hi = sinr_db(s, &[i0 + extra], n).unwrap();
            prop_assert!(hi < lo);
        }

        #[test]
        fn rsrq_never_positive(x in 1e-15f64..1.0, extra in 0.0f64..10.0, n in 1u32..275) {
            prop_assert!(rsrq_db(x, x + extra, n).unwrap() <= 0.0);
        }

        #[test]
        fn cqi_monotone(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cqi_from_sinr(lo) <= cqi_from_sinr(hi));
        }

        #[test]
        fn db_round_trip(db in -200.0f64..200.0) {
            let back = linear_to_db(db_to_linear(db));
            prop_assert!((back - db).abs() <= 1e-9 * db.abs().max(1.0));
            let lin = db_to_linear(db);
            prop_assert!((db_to_linear(linear_to_db(lin)) - lin).abs() <= 1e-9 * lin);
        }

        #[test]
        fn channel_sample_bounds(
            serving in -140.0f64..-40.0,
            interf in proptest::collection::vec(-150.0f64..-40.0, 0..4),
        ) {
            let c = channel_sample(serving, &interf, -125.0, 50).unwrap();
            prop_assert!(c.rsrq_db <= 0.0);
            prop_assert!(c.cqi <= 15);
            prop_assert!(c.rssi_dbm >= c.rsrp_dbm);
        }
    }
}
