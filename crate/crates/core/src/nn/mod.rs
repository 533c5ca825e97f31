//! Minimal feed-forward network substrate shared by actors and critics.

pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod optim;

pub use mlp::{
    backward, forward, Activation, ForwardTrace, Gradients, Mlp, MlpSpec, OutputActivation,
    ParamLayout, ParamVector,
};
pub use optim::{optimizer_step, OptimState, OptimizerKind};

/// A network spec with its live parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub mlp: Mlp,
    pub params: ParamVector,
}

impl Network {
    pub fn new<R: rand::Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> crate::Result<Self> {
        let params = ParamVector::init(&spec, rng);
        Ok(Self {
            mlp: Mlp::new(spec)?,
            params,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        self.mlp.spec()
    }
}
