//! (mu, lambda) and (mu + lambda) evolution strategies over arbitrary
//! individuals. Fitness is maximized.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsConfig {
    pub mu: usize,
    pub lambda: usize,
    /// `true` for plus selection, `false` for comma selection.
    pub elitist: bool,
    /// Mutation scale for real-vector individuals.
    pub step_size: f64,
}

impl EsConfig {
    /// Design-level search: (8 + 16) with elitism.
    pub const DESIGN: EsConfig = EsConfig { mu: 8, lambda: 16, elitist: true, step_size: 1.0 };

    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.mu > self.lambda {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= mu <= lambda, got mu={} lambda={}",
                self.mu, self.lambda
            )));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {}", self.step_size)));
        }
        Ok(())
    }
}

impl Default for EsConfig {
    fn default() -> Self {
        Self::DESIGN
    }
}

/// Indices of the `mu` fittest individuals, best first. Ties go to the
/// lower index.
pub fn select_best(fitnesses: &[f64], mu: usize) -> Vec<usize> {
    let key = |f: f64| if f.is_nan() { f64::NEG_INFINITY } else { f };
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    order.sort_by(|&a, &b| key(fitnesses[b]).partial_cmp(&key(fitnesses[a])).expect("no NaN keys"));
    order.truncate(mu);
    order
}

/// Output of one selection + variation round.
#[derive(Debug, Clone, PartialEq)]
pub struct Offspring<T> {
    /// Selected parents with their fitness; empty under comma selection.
    pub survivors: Vec<(T, f64)>,
    /// New individuals still to be evaluated.
    pub children: Vec<T>,
    /// Index into the previous population of each child's parent.
    pub child_parents: Vec<usize>,
}

impl<T> Offspring<T> {
    /// Builds the next selection pool once the children are scored.
    /// Survivors come first so that ties favour older individuals.
    pub fn into_pool(self, child_fitnesses: Vec<f64>) -> (Vec<T>, Vec<f64>) {
        assert_eq!(self.children.len(), child_fitnesses.len(), "one fitness per child");
        let mut pop = Vec::with_capacity(self.survivors.len() + self.children.len());
        let mut fit = Vec::with_capacity(pop.capacity());
        for (ind, f) in self.survivors {
            pop.push(ind);
            fit.push(f);
        }
        pop.extend(self.children);
        fit.extend(child_fitnesses);
        (pop, fit)
    }
}

/// Selects the `mu` best and produces `lambda` children, assigning parents
/// round-robin in rank order.
pub fn es_step<T, R, F>(
    population: &[T],
    fitnesses: &[f64],
    config: &EsConfig,
    mut mutate_fn: F,
    rng: &mut R,
) -> Result<Offspring<T>>
where
    T: Clone,
    R: Rng + ?Sized,
    F: FnMut(&T, &mut R) -> T,
{
    config.validate()?;
    if population.len() != fitnesses.len() {
        return Err(Error::Contract(format!(
            "{} individuals but {} fitness values",
            population.len(),
            fitnesses.len()
        )));
    }
    if population.len() < config.mu {
        return Err(Error::Contract(format!("population of {} is smaller than mu = {}", population.len(), config.mu)));
    }
    let parents = select_best(fitnesses, config.mu);
    let child_parents: Vec<usize> = (0..config.lambda).map(|i| parents[i % parents.len()]).collect();
    let children = child_parents.iter().map(|&p| mutate_fn(&population[p], rng)).collect();
    let survivors = if config.elitist {
        parents.iter().map(|&p| (population[p].clone(), fitnesses[p])).collect()
    } else {
        Vec::new()
    };
    Ok(Offspring { survivors, children, child_parents })
}

/// Isotropic Gaussian perturbation of a real vector.
pub fn gaussian_mutation<R: Rng + ?Sized>(x: &[f64], step_size: f64, rng: &mut R) -> Vec<f64> {
    x.iter().map(|v| v + step_size * rng.sample::<f64, _>(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn elitist_argmax_parents_every_child() {
        let cfg = EsConfig { mu: 1, lambda: 2, elitist: true, step_size: 0.1 };
        let pop = vec![0.0, 1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = es_step(&pop, &[3.0, 1.0, 2.0], &cfg, |x: &f64, _: &mut ChaCha8Rng| *x + 10.0, &mut rng).unwrap();
        assert_eq!(out.child_parents, vec![0, 0]);
        assert_eq!(out.children, vec![10.0, 10.0]);
        assert_eq!(out.survivors, vec![(0.0, 3.0)]);
    }

    #[test]
    fn comma_selection_drops_parents() {
        #[derive(Clone, Debug, PartialEq)]
        struct Tagged(u32);
        let cfg = EsConfig { mu: 2, lambda: 4, elitist: false, step_size: 0.1 };
        let pop = vec![Tagged(0), Tagged(1), Tagged(2)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut next_tag = 100;
        let out = es_step(
            &pop,
            &[1.0, 5.0, 3.0],
            &cfg,
            |_: &Tagged, _: &mut ChaCha8Rng| {
                next_tag += 1;
                Tagged(next_tag)
            },
            &mut rng,
        )
        .unwrap();
        assert!(out.survivors.is_empty());
        let (pool, _) = out.into_pool(vec![0.0; 4]);
        assert!(pool.iter().all(|t| t.0 > 100));
    }

    #[test]
    fn ties_prefer_lower_index() {
        assert_eq!(select_best(&[2.0, 5.0, 5.0, 1.0], 2), vec![1, 2]);
        assert_eq!(select_best(&[f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY], 3), vec![1, 0, 2]);
    }

    #[test]
    fn rejects_undersized_population() {
        let cfg = EsConfig { mu: 3, lambda: 4, elitist: true, step_size: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = es_step(&[1.0, 2.0], &[1.0, 2.0], &cfg, |x: &f64, _: &mut ChaCha8Rng| *x, &mut rng);
        assert!(r.is_err());
        let bad = EsConfig { mu: 5, lambda: 4, elitist: true, step_size: 1.0 };
        assert!(bad.validate().is_err());
    }
}
