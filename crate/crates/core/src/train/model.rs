use syndiff_tensor::{Element, Tensor};

use crate::error::Result;
use crate::nets::{join, DiscriminatorNet, GeneratorNet, Module, NetConfig, ResNetGenerator};
use crate::random::SynRng;

/// The four generators. `diff_a2b` denoises B-modality samples conditioned
/// on an A image; `nondiff_a2b` translates A to B in one shot.
#[derive(Debug, Clone)]
pub struct Generators<E: Element> {
    pub diff_a2b: GeneratorNet<E>,
    pub diff_b2a: GeneratorNet<E>,
    pub nondiff_a2b: ResNetGenerator<E>,
    pub nondiff_b2a: ResNetGenerator<E>,
}

/// The four discriminators, each judging samples of the named modality.
#[derive(Debug, Clone)]
pub struct Discriminators<E: Element> {
    pub diff_a: DiscriminatorNet<E>,
    pub diff_b: DiscriminatorNet<E>,
    pub nondiff_a: DiscriminatorNet<E>,
    pub nondiff_b: DiscriminatorNet<E>,
}

#[derive(Debug, Clone)]
pub struct SynDiffNets<E: Element> {
    pub config: NetConfig,
    pub gens: Generators<E>,
    pub discs: Discriminators<E>,
}

impl<E: Element> SynDiffNets<E> {
    pub fn new(config: NetConfig, rng: &mut SynRng) -> Result<Self> {
        let gens = Generators {
            diff_a2b: GeneratorNet::new(config, rng)?,
            diff_b2a: GeneratorNet::new(config, rng)?,
            nondiff_a2b: ResNetGenerator::new(&config, rng)?,
            nondiff_b2a: ResNetGenerator::new(&config, rng)?,
        };
        let discs = Discriminators {
            diff_a: DiscriminatorNet::diffusive(&config, rng)?,
            diff_b: DiscriminatorNet::diffusive(&config, rng)?,
            nondiff_a: DiscriminatorNet::plain(&config, rng)?,
            nondiff_b: DiscriminatorNet::plain(&config, rng)?,
        };
        Ok(Self { config, gens, discs })
    }
}

impl<E: Element> Module<E> for Generators<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        self.diff_a2b.visit(&join(prefix, "diff_a2b"), f);
        self.diff_b2a.visit(&join(prefix, "diff_b2a"), f);
        self.nondiff_a2b.visit(&join(prefix, "nondiff_a2b"), f);
        self.nondiff_b2a.visit(&join(prefix, "nondiff_b2a"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        self.diff_a2b.visit_mut(&join(prefix, "diff_a2b"), f);
        self.diff_b2a.visit_mut(&join(prefix, "diff_b2a"), f);
        self.nondiff_a2b.visit_mut(&join(prefix, "nondiff_a2b"), f);
        self.nondiff_b2a.visit_mut(&join(prefix, "nondiff_b2a"), f);
    }
}

impl<E: Element> Module<E> for Discriminators<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        self.diff_a.visit(&join(prefix, "diff_a"), f);
        self.diff_b.visit(&join(prefix, "diff_b"), f);
        self.nondiff_a.visit(&join(prefix, "nondiff_a"), f);
        self.nondiff_b.visit(&join(prefix, "nondiff_b"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        self.diff_a.visit_mut(&join(prefix, "diff_a"), f);
        self.diff_b.visit_mut(&join(prefix, "diff_b"), f);
        self.nondiff_a.visit_mut(&join(prefix, "nondiff_a"), f);
        self.nondiff_b.visit_mut(&join(prefix, "nondiff_b"), f);
    }
}

impl<E: Element> Module<E> for SynDiffNets<E> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<E>)) {
        self.gens.visit(&join(prefix, "gen"), f);
        self.discs.visit(&join(prefix, "disc"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<E>)) {
        self.gens.visit_mut(&join(prefix, "gen"), f);
        self.discs.visit_mut(&join(prefix, "disc"), f);
    }
}
