use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rate-independent 1D material with multilinear isotropic hardening.
///
/// `knots` holds `(accumulated plastic strain, yield stress in MPa)` pairs;
/// the yield stress is linear between knots and flat past the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    #[serde(skip)]
    pub name: String,
    /// Young's modulus, MPa.
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
    pub knots: Vec<(f64, f64)>,
    /// Stored for completeness; the quasi-static oracle ignores inertia.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    /// Stored for completeness; unused in 1D.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_ratio: Option<f64>,
}

/// Default elastic limit of the stainless steel curve, MPa. Not a tabulated
/// property; adjustable through [`MaterialModel::stainless_steel_with_elastic_limit`].
pub const STEEL_ELASTIC_LIMIT: f64 = 200.0;

impl MaterialModel {
    pub fn new(name: impl Into<String>, youngs_modulus: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        let m = MaterialModel {
            name: name.into(),
            youngs_modulus,
            knots,
            density: None,
            poisson_ratio: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let name = &self.name;
        if !(self.youngs_modulus > 0.0 && self.youngs_modulus.is_finite()) {
            return Err(Error::invalid(format!("material {name}: E must be positive")));
        }
        let Some(&(a0, s0)) = self.knots.first() else {
            return Err(Error::invalid(format!("material {name}: no hardening knots")));
        };
        if a0 != 0.0 {
            return Err(Error::invalid(format!("material {name}: first knot must sit at alpha = 0")));
        }
        if !(s0 > 0.0 && s0.is_finite()) {
            return Err(Error::invalid(format!("material {name}: initial yield stress must be positive")));
        }
        for w in self.knots.windows(2) {
            if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                return Err(Error::invalid(format!("material {name}: knot alphas must increase strictly")));
            }
            if !(w[1].1 >= w[0].1) || !w[1].1.is_finite() {
                return Err(Error::invalid(format!("material {name}: yield stress must not decrease")));
            }
        }
        Ok(())
    }

    /// Aluminum alloy, bilinear: yield 300 MPa rising to 330 MPa at the
    /// plastic strain left at the ultimate point (0.08 - 330/E).
    pub fn aluminum() -> Self {
        let e = 71_000.0;
        MaterialModel {
            name: "aluminum".into(),
            youngs_modulus: e,
            knots: vec![(0.0, 300.0), (0.08 - 330.0 / e, 330.0)],
            density: Some(2770.0),
            poisson_ratio: Some(0.33),
        }
    }

    /// Stainless steel, trilinear: elastic limit, 0.2% proof stress at
    /// alpha = 0.002, ultimate stress at 0.65 - 627/E.
    pub fn stainless_steel() -> Self {
        Self::stainless_steel_with_elastic_limit(STEEL_ELASTIC_LIMIT)
    }

    pub fn stainless_steel_with_elastic_limit(elastic_limit: f64) -> Self {
        let e = 193_000.0;
        MaterialModel {
            name: "steel".into(),
            youngs_modulus: e,
            knots: vec![(0.0, elastic_limit), (0.002, 286.0), (0.65 - 627.0 / e, 627.0)],
            density: Some(7750.0),
            poisson_ratio: Some(0.31),
        }
    }

    /// Current yield stress and hardening slope at accumulated plastic strain `alpha`.
    pub fn yield_stress(&self, alpha: f64) -> (f64, f64) {
        let k = self.segment_of(alpha);
        self.yield_on_segment(k, alpha)
    }

    /// Index of the knot starting the segment that contains `alpha`.
    fn segment_of(&self, alpha: f64) -> usize {
        // knots[0].0 == 0 and alpha >= 0, so the partition point is >= 1
        self.knots.partition_point(|&(a, _)| a <= alpha).max(1) - 1
    }

    fn yield_on_segment(&self, k: usize, alpha: f64) -> (f64, f64) {
        let (a0, s0) = self.knots[k];
        match self.knots.get(k + 1) {
            Some(&(a1, s1)) => {
                let h = (s1 - s0) / (a1 - a0);
                (s0 + h * (alpha - a0), h)
            }
            None => (s0, 0.0),
        }
    }

    /// One-dimensional radial return from `state` at total strain `strain`.
    pub fn return_map(&self, state: PlasticState, strain: f64) -> ReturnMap {
        let e = self.youngs_modulus;
        let trial = e * (strain - state.eps_p);
        let (sy, _) = self.yield_stress(state.alpha);
        if trial.abs() <= sy {
            return ReturnMap {
                stress: trial,
                tangent: e,
                state,
                plastic_increment: 0.0,
            };
        }

        let f_trial = trial.abs();
        let mut k = self.segment_of(state.alpha);
        let mut alpha = state.alpha;
        let mut dgamma = 0.0;
        let h_active = loop {
            let (sy_k, h_k) = self.yield_on_segment(k, alpha);
            let x = (f_trial - e * dgamma - sy_k) / (e + h_k);
            match self.knots.get(k + 1) {
                Some(&(a_next, _)) if alpha + x >= a_next => {
                    dgamma += a_next - alpha;
                    alpha = a_next;
                    k += 1;
                }
                _ => {
                    dgamma += x;
                    alpha += x;
                    break h_k;
                }
            }
        };

        let eps_p = state.eps_p + dgamma * trial.signum();
        ReturnMap {
            stress: e * (strain - eps_p),
            tangent: e * h_active / (e + h_active),
            state: PlasticState { eps_p, alpha },
            plastic_increment: dgamma,
        }
    }
}

/// Internal variables of one material point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlasticState {
    pub eps_p: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnMap {
    /// MPa
    pub stress: f64,
    /// Consistent tangent, MPa.
    pub tangent: f64,
    pub state: PlasticState,
    pub plastic_increment: f64,
}
