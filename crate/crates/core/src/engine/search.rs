use crate::error::Result;
use crate::genome::{mutate, random_genome, MorphologyGenome};
use crate::optimizers::{es_step, EsConfig};
use crate::rng::{SeedTree, Stream, StreamKind};

/// Design-level evolution strategy, driven one design at a time.
///
/// The first batch holds `mu` random designs; every later batch holds the
/// `lambda` children of the current selection pool.
pub(crate) struct DesignSearch {
    config: EsConfig,
    size_bias: f64,
    init_rng: Stream,
    mutation_rng: Stream,
    started: bool,
    survivors: Vec<(MorphologyGenome, f64)>,
    batch: Vec<MorphologyGenome>,
    batch_fitness: Vec<f64>,
    cursor: usize,
}

impl DesignSearch {
    pub fn new(config: EsConfig, size_bias: f64, seeds: &SeedTree) -> Self {
        Self {
            config,
            size_bias,
            init_rng: seeds.stream(StreamKind::DesignInit),
            mutation_rng: seeds.stream(StreamKind::DesignMutation),
            started: false,
            survivors: Vec::new(),
            batch: Vec::new(),
            batch_fitness: Vec::new(),
            cursor: 0,
        }
    }

    pub fn next_design(&mut self) -> Result<MorphologyGenome> {
        if self.cursor == self.batch.len() {
            self.advance()?;
        }
        let g = self.batch[self.cursor].clone();
        self.cursor += 1;
        Ok(g)
    }

    /// Scores the design most recently returned by `next_design`.
    pub fn report(&mut self, fitness: f64) {
        debug_assert_eq!(self.batch_fitness.len() + 1, self.cursor, "one report per design");
        self.batch_fitness.push(fitness);
    }

    fn advance(&mut self) -> Result<()> {
        if !self.started {
            self.started = true;
            self.batch = (0..self.config.mu).map(|_| random_genome(&mut self.init_rng, self.size_bias)).collect();
        } else {
            let mut pool: Vec<MorphologyGenome> = Vec::new();
            let mut fitness = Vec::new();
            for (g, f) in self.survivors.drain(..) {
                pool.push(g);
                fitness.push(f);
            }
            pool.append(&mut self.batch);
            fitness.append(&mut self.batch_fitness);
            let offspring = es_step(&pool, &fitness, &self.config, mutate, &mut self.mutation_rng)?;
            self.survivors = offspring.survivors;
            self.batch = offspring.children;
        }
        self.batch_fitness.clear();
        self.cursor = 0;
        Ok(())
    }
}
