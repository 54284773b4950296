//! Model configuration files.
//!
//! A TOML document with a `kind` field (`torus`, `simple`, `walk`,
//! `explicit`), the cost parameters, and the builder-specific fields:
//!
//! ```toml
//! kind = "torus"
//! lambda_p = 0.03
//! page_cost = 1.0
//! reg_cost = 0.6
//! beta = 0.9
//! k_max = 200
//! i_max = 15
//! j_max = 15
//! p_stay = 0.4
//! p_up = 0.1
//! p_down = 0.1
//! p_left = 0.1
//! p_right = 0.3
//! x0 = [5, 5]
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{
    build_simple_example, build_symmetric_walk, build_torus, simple_example_k_max, CostParams, ModelKind,
    MotionModel,
};

#[derive(Debug, Clone, Deserialize)]
pub struct ModelConfig {
    pub lambda_p: f64,
    pub page_cost: f64,
    pub reg_cost: f64,
    pub beta: f64,
    /// Required except for `simple`, which picks a horizon long enough that
    /// forced registration is negligible.
    pub k_max: Option<usize>,
    #[serde(flatten)]
    pub source: ModelSource,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSource {
    Torus {
        i_max: usize,
        j_max: usize,
        p_stay: f64,
        p_up: f64,
        p_down: f64,
        p_left: f64,
        p_right: f64,
        x0: (usize, usize),
    },
    Simple,
    Walk {
        half_width: usize,
        /// Displacement probabilities on `-m..=m`.
        kernel: Vec<f64>,
    },
    Explicit {
        n_states: usize,
        /// Row-major transition matrix.
        p: Vec<f64>,
        /// Cell partition; one state per cell when omitted.
        cells: Option<Vec<Vec<usize>>>,
        #[serde(default)]
        x0: usize,
    },
}

impl ModelConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<CostParams> {
        let k_max = match (self.k_max, &self.source) {
            (Some(k), _) => k,
            (None, ModelSource::Simple) => simple_example_k_max(self.beta),
            (None, _) => return Err(Error::InvalidModel("k_max is required for this model kind".into())),
        };
        let params = CostParams {
            lambda_p: self.lambda_p,
            page_cost: self.page_cost,
            reg_cost: self.reg_cost,
            beta: self.beta,
            k_max,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn build(&self) -> Result<MotionModel> {
        let params = self.params()?;
        match &self.source {
            ModelSource::Torus { i_max, j_max, p_stay, p_up, p_down, p_left, p_right, x0 } => {
                build_torus(*i_max, *j_max, *p_stay, *p_up, *p_down, *p_left, *p_right, *x0, params)
            }
            ModelSource::Simple => build_simple_example(params),
            ModelSource::Walk { half_width, kernel } => build_symmetric_walk(*half_width, kernel, params),
            ModelSource::Explicit { n_states, p, cells, x0 } => {
                let n = *n_states;
                if p.len() != n * n {
                    return Err(Error::InvalidModel(format!(
                        "transition matrix has {} entries, expected {}",
                        p.len(),
                        n * n
                    )));
                }
                let rows = p.chunks(n.max(1)).map(|r| r.to_vec()).collect();
                let cells = cells.clone().unwrap_or_else(|| (0..n).map(|s| vec![s]).collect());
                MotionModel::new(ModelKind::Explicit, cells, rows, *x0, params)
            }
        }
    }
}
