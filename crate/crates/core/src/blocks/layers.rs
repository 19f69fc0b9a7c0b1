use std::rc::Rc;

use super::{Graph, ParamInit};
use crate::error::Result;
use crate::tensor::{Float, ParamId, Var};

/// `x W + b` with `W: [d_in, d_out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        Ok(Linear {
            w: init.xavier(&format!("{name}.w"), d_in, d_out)?,
            b: init.fill(&format!("{name}.b"), vec![d_out], 0.0)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.tape.matmul(x, w)?;
        g.tape.add_bias(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Float>(init: &mut ParamInit<'_, T>, name: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: init.fill(&format!("{name}.gain"), vec![d], 1.0)?,
            bias: init.fill(&format!("{name}.bias"), vec![d], 0.0)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.tape.layer_norm(x, gain, bias)
    }
}

/// Multi-head attention with separate query and key/value inputs.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        d: usize,
        heads: usize,
    ) -> Result<Self> {
        Ok(Attention {
            q: Linear::new(init, &format!("{name}.q"), d, d)?,
            k: Linear::new(init, &format!("{name}.k"), d, d)?,
            v: Linear::new(init, &format!("{name}.v"), d, d)?,
            o: Linear::new(init, &format!("{name}.o"), d, d)?,
            heads,
        })
    }

    /// Returns the output and the attention node (for capture).
    pub fn forward<T: Float>(
        &self,
        g: &mut Graph<'_, T>,
        xq: Var,
        xkv: Var,
        key_mask: Rc<Vec<bool>>,
        batch: usize,
    ) -> Result<(Var, Var)> {
        let q = self.q.forward(g, xq)?;
        let k = self.k.forward(g, xkv)?;
        let v = self.v.forward(g, xkv)?;
        let a = g.tape.attention(q, k, v, key_mask, batch, self.heads)?;
        Ok((self.o.forward(g, a)?, a))
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<T: Float>(
        init: &mut ParamInit<'_, T>,
        name: &str,
        d: usize,
        width: usize,
    ) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(init, &format!("{name}.up"), d, width)?,
            down: Linear::new(init, &format!("{name}.down"), width, d)?,
        })
    }

    pub fn forward<T: Float>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.tape.gelu(h);
        self.down.forward(g, h)
    }
}
