//! Exact output laws of randomized procedures by exhaustive path enumeration.
//!
//! A procedure written against [`Chooser`] is re-run once per distinct sequence
//! of random decisions. Each run follows a scripted prefix of choices and takes
//! the first option at every new choice point; the script is then advanced like
//! an odometer. The probability of a path is the product of the weights of the
//! options taken along it, so summing path weights per output gives the exact law
//! of the procedure, up to floating point rounding.

use std::collections::BTreeMap;

use crate::rng::Chooser;
use crate::scalar::Real;

struct PathChooser<T> {
    script: Vec<usize>,
    arity: Vec<usize>,
    cursor: usize,
    weight: T,
}

impl<T: Real> PathChooser<T> {
    fn pick(&mut self, options: &[(usize, T)]) -> usize {
        assert!(!options.is_empty(), "choice point without positive-weight options");
        let slot = self.cursor;
        self.cursor += 1;
        if slot == self.script.len() {
            self.script.push(0);
            self.arity.push(options.len());
        }
        debug_assert_eq!(self.arity[slot], options.len(), "procedure is not deterministic");
        let (value, w) = options[self.script[slot]];
        self.weight *= w;
        value
    }

    /// Moves to the next unexplored path. Returns false when exhausted.
    fn advance(&mut self) -> bool {
        while let Some(last) = self.script.pop() {
            let arity = self.arity.pop().expect("arity tracks script");
            if last + 1 < arity {
                self.script.push(last + 1);
                self.arity.push(arity);
                return true;
            }
        }
        false
    }
}

impl<T: Real> Chooser<T> for PathChooser<T> {
    fn bernoulli(&mut self, p: T) -> bool {
        let p = p.max(T::zero()).min(T::one());
        let mut options = Vec::with_capacity(2);
        if p > T::zero() {
            options.push((1, p));
        }
        if p < T::one() {
            options.push((0, T::one() - p));
        }
        self.pick(&options) == 1
    }

    fn categorical(&mut self, probs: &[T]) -> usize {
        let options: Vec<(usize, T)> = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > T::zero())
            .map(|(i, &p)| (i, p))
            .collect();
        self.pick(&options)
    }
}

/// Runs `procedure` over every random path and returns the probability of each
/// distinct output.
pub fn exact_law<T, O, F>(mut procedure: F) -> BTreeMap<O, T>
where
    T: Real,
    O: Ord,
    F: FnMut(&mut dyn Chooser<T>) -> O,
{
    let mut chooser = PathChooser {
        script: Vec::new(),
        arity: Vec::new(),
        cursor: 0,
        weight: T::one(),
    };
    let mut law = BTreeMap::new();
    loop {
        chooser.cursor = 0;
        chooser.weight = T::one();
        let out = procedure(&mut chooser);
        // choice points past the script were appended during the run
        chooser.script.truncate(chooser.cursor);
        chooser.arity.truncate(chooser.cursor);
        *law.entry(out).or_insert_with(T::zero) += chooser.weight;
        if !chooser.advance() {
            break;
        }
    }
    law
}

/// Number of distinct random paths `procedure` can take.
pub fn path_count<T, F>(mut procedure: F) -> usize
where
    T: Real,
    F: FnMut(&mut dyn Chooser<T>),
{
    let mut n = 0;
    exact_law::<T, (), _>(|c| {
        procedure(c);
        n += 1;
    });
    n
}
