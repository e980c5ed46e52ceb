use crate::error::{Error, Result};

/// Power-law I-V curve `i = i_sc * (1 - (v / v_oc)^shape)`.
///
/// A large `shape` gives a flat current plateau that bends sharply near
/// `v_oc`, which is the qualitative shape of a silicon panel without the
/// implicit diode equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvPanelModel {
    pub v_oc: f64,
    pub i_sc: f64,
    pub shape: f64,
}

impl Default for PvPanelModel {
    fn default() -> Self {
        Self { v_oc: 22.0, i_sc: 8.0, shape: 8.0 }
    }
}

impl PvPanelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_oc > 0.0 && self.i_sc > 0.0 && self.shape >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "panel needs v_oc > 0, i_sc > 0, shape >= 1 (got {}, {}, {})",
                self.v_oc, self.i_sc, self.shape
            )));
        }
        Ok(())
    }

    /// Maximum power point `(v_mp, i_mp)`; from dP/dv = 0 on the power law.
    pub fn mpp(&self) -> (f64, f64) {
        let v = self.v_oc * (self.shape + 1.0).powf(-1.0 / self.shape);
        (v, self.i_sc * self.shape / (self.shape + 1.0))
    }

    pub fn p_max(&self) -> f64 {
        let (v, i) = self.mpp();
        v * i
    }
}

pub fn pv_current(panel: &PvPanelModel, v: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::NegativeVoltage(v));
    }
    Ok(pv_current_clamped(panel, v))
}

/// Same curve with negative voltages treated as short circuit (bypass diode).
#[inline]
pub fn pv_current_clamped(panel: &PvPanelModel, v: f64) -> f64 {
    if v <= 0.0 {
        panel.i_sc
    } else if v >= panel.v_oc {
        0.0
    } else {
        panel.i_sc * (1.0 - (v / panel.v_oc).powf(panel.shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_interior() {
        let p = PvPanelModel::default();
        assert_eq!(pv_current(&p, 0.0).unwrap(), 8.0);
        assert_eq!(pv_current(&p, p.v_oc).unwrap(), 0.0);
        let i = pv_current(&p, 0.8 * p.v_oc).unwrap();
        assert!(i > 0.0 && i < 8.0);
        assert!(pv_current(&p, 0.79 * p.v_oc).unwrap() >= i);
        assert!(pv_current(&p, 0.81 * p.v_oc).unwrap() <= i);
        assert!(matches!(pv_current(&p, -1.0), Err(Error::NegativeVoltage(_))));
    }

    #[test]
    fn mpp_is_a_maximum() {
        let p = PvPanelModel::default();
        let (v, i) = p.mpp();
        assert!((pv_current(&p, v).unwrap() - i).abs() < 1e-12);
        let power = |v: f64| v * pv_current(&p, v).unwrap();
        assert!(power(v) > power(v * 0.99) && power(v) > power(v * 1.01));
    }
}
