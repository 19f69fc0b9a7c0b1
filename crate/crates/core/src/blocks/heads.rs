use super::layers::Linear;
use super::{Graph, ParamInit};
use crate::data::vocab::VOCAB_SIZE;
use crate::error::{Error, Result};
use crate::tensor::{Float, ParamId, Var};

/// Per-position vocabulary logits.
#[derive(Clone, Debug)]
pub enum MlmHead {
    Untied(Linear),
    /// Reuses an encoder's token table: `h E^T + b`.
    Tied {
        table: ParamId,
        bias: ParamId,
    },
}

impl MlmHead {
    pub fn untied<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        hidden: usize,
    ) -> Result<Self> {
        Ok(MlmHead::Untied(Linear::new(
            init, name, hidden, VOCAB_SIZE,
        )?))
    }

    pub fn tied<T: Float>(init: &mut ParamInit<'_, T>, name: &str, table: ParamId) -> Result<Self> {
        Ok(MlmHead::Tied {
            table,
            bias: init.fill(&format!("{name}.b"), vec![VOCAB_SIZE], 0.0)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, hidden: Var) -> Result<Var> {
        match self {
            MlmHead::Untied(l) => l.forward(g, hidden),
            MlmHead::Tied { table, bias } => {
                let e = g.param(*table);
                let et = g.tape.transpose(e)?;
                let b = g.param(*bias);
                let y = g.tape.matmul(hidden, et)?;
                g.tape.add_bias(y, b)
            }
        }
    }
}

/// Linear layer over `[CLS]` features concatenated in registration order.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub inputs: Vec<String>,
    pub linear: Linear,
}

impl ClassifierHead {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        inputs: Vec<String>,
        hidden: usize,
        classes: usize,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Wiring("classifier needs at least one input".into()));
        }
        let linear = Linear::new(init, name, inputs.len() * hidden, classes)?;
        Ok(ClassifierHead { inputs, linear })
    }

    /// `features` must be `(name, [batch, hidden])` in registration order.
    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, features: &[(&str, Var)]) -> Result<Var> {
        if features.len() != self.inputs.len() {
            return Err(Error::Wiring(format!(
                "classifier registered {} inputs, got {}",
                self.inputs.len(),
                features.len()
            )));
        }
        for ((got, _), want) in features.iter().zip(&self.inputs) {
            if got != want {
                return Err(Error::Wiring(format!(
                    "classifier expected input {want}, got {got}"
                )));
            }
        }
        let vars: Vec<Var> = features.iter().map(|(_, v)| *v).collect();
        let x = if vars.len() == 1 {
            vars[0]
        } else {
            g.tape.concat_cols(&vars)?
        };
        self.linear.forward(g, x)
    }
}
