//! Brute-force rating matrix: every rater's rating of every submission.
//!
//! Rows are raters (outsiders, then high types, then low types), columns are
//! submissions (high types, then low types). One contestant may play a
//! strategy different from the rest of its type, which is what a unilateral
//! deviation needs.

use crate::contest::{AgentType, ContestConfig, Result, StrategyProfile, TypeStrategy};
use crate::error::ModelError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deviator {
    pub who: AgentType,
    pub strategy: TypeStrategy,
}

#[derive(Debug, Clone)]
pub struct RatingMatrix<T> {
    ratings: Vec<Vec<T>>,
    highs: usize,
    outsiders: usize,
}

impl<T: Scalar> RatingMatrix<T> {
    /// The deviator, if any, is the first contestant of its type.
    pub fn build(config: &ContestConfig<T>, profile: &StrategyProfile, deviator: Option<Deviator>) -> Result<Self> {
        profile.high.validate(config, AgentType::High)?;
        profile.low.validate(config, AgentType::Low)?;
        if let Some(d) = deviator {
            d.strategy.validate(config, d.who)?;
        }
        let h = config.highs();
        let l = config.lows();
        let n = config.outsiders();
        let contestants: Vec<(AgentType, TypeStrategy)> = (0..h + l)
            .map(|j| {
                let who = if j < h { AgentType::High } else { AgentType::Low };
                let first_of_type = j == 0 || j == h;
                let strategy = match deviator {
                    Some(d) if d.who == who && first_of_type => d.strategy,
                    _ => profile.strategy(who),
                };
                (who, strategy)
            })
            .collect();

        let mut ratings = Vec::with_capacity(n + h + l);
        for _ in 0..n {
            ratings.push(contestants.iter().map(|(who, _)| config.quality(*who)).collect());
        }
        for (i, (_, strategy)) in contestants.iter().enumerate() {
            let row = contestants
                .iter()
                .enumerate()
                .map(|(j, (target, _))| {
                    if i == j {
                        if strategy.promote {
                            T::one()
                        } else {
                            config.quality(*target)
                        }
                    } else if strategy.sabotage_count(*target) > 0 {
                        T::zero()
                    } else {
                        config.quality(*target)
                    }
                })
                .collect();
            ratings.push(row);
        }
        Ok(Self { ratings, highs: h, outsiders: n })
    }

    pub fn rating(&self, rater: usize, submission: usize) -> T {
        self.ratings[rater][submission]
    }

    pub fn raters(&self) -> usize {
        self.ratings.len()
    }

    pub fn submissions(&self) -> usize {
        self.ratings.first().map_or(0, Vec::len)
    }

    /// Column sums.
    pub fn values(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.submissions()];
        for row in &self.ratings {
            for (acc, r) in out.iter_mut().zip(row) {
                *acc = *acc + *r;
            }
        }
        out
    }

    /// Index of the representative (first) contestant of a type.
    pub fn first_of(&self, who: AgentType) -> usize {
        match who {
            AgentType::High => 0,
            AgentType::Low => self.highs,
        }
    }

    pub fn outsiders(&self) -> usize {
        self.outsiders
    }

    /// Win probability of submission `idx`.
    pub fn probability(&self, idx: usize) -> Result<T> {
        let values = self.values();
        let total = values.iter().fold(T::zero(), |a, v| a + *v);
        if total == T::zero() {
            return Err(ModelError::DegenerateContest);
        }
        Ok(values[idx] / total)
    }
}

/// Expected utility of the first agent of type `who` computed from the full
/// rating matrix, with that agent optionally deviating.
pub fn matrix_utility<T: Scalar>(
    config: &ContestConfig<T>,
    profile: &StrategyProfile,
    who: AgentType,
    deviation: Option<TypeStrategy>,
    sabotage_cost: T,
    promotion_cost: T,
) -> Result<T> {
    let deviator = deviation.map(|strategy| Deviator { who, strategy });
    let matrix = RatingMatrix::build(config, profile, deviator)?;
    let p = matrix.probability(matrix.first_of(who))?;
    let played = deviation.unwrap_or_else(|| profile.strategy(who));
    Ok(crate::contest::utility_from(config, p, &played, sabotage_cost, promotion_cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contest::{agent_values, expected_utility, StrategyProfile};
    use num_rational::Ratio;

    type Q = Ratio<i128>;

    fn q(n: i128, d: i128) -> Q {
        Ratio::new(n, d)
    }

    fn example() -> ContestConfig<Q> {
        ContestConfig::new(100, 30, 10, q(1, 5), q(4, 5), q(5000, 1), q(1, 10), q(1, 100)).unwrap()
    }

    fn all_classes(c: &ContestConfig<Q>) -> Vec<StrategyProfile> {
        let flags = [false, true];
        let mut out = Vec::new();
        for &a in &flags {
            for &b in &flags {
                for &p in &flags {
                    for &x in &flags {
                        for &y in &flags {
                            for &z in &flags {
                                out.push(StrategyProfile::from_classes(c, (a, b, p), (x, y, z)));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn everyone_sabotages_everyone() {
        let c = example();
        let profile = StrategyProfile::from_classes(&c, (true, true, true), (true, true, true));
        let m = RatingMatrix::build(&c, &profile, None).unwrap();
        assert_eq!(m.raters(), 140);
        assert_eq!(m.submissions(), 40);
        let cols = m.values();
        // high: 100 outsiders + own promotion, sabotaged by everyone else
        assert_eq!(cols[0], q(80, 1) + q(1, 1));
        assert_eq!(cols[10], q(20, 1) + q(1, 1));
        let v = agent_values(&c, &profile).unwrap();
        assert_eq!(v.high(), cols[0]);
        assert_eq!(v.low(), cols[10]);
    }

    #[test]
    fn matrix_agrees_with_closed_form_for_every_class_profile() {
        let c = example();
        for profile in all_classes(&c) {
            let m = RatingMatrix::build(&c, &profile, None).unwrap();
            let cols = m.values();
            let v = agent_values(&c, &profile).unwrap();
            assert!(cols[..10].iter().all(|x| *x == v.high()));
            assert!(cols[10..].iter().all(|x| *x == v.low()));
            let total = cols.iter().fold(q(0, 1), |a, b| a + *b);
            assert_eq!(total, v.total());
        }
    }

    #[test]
    fn ne4_utility_matches_matrix_oracle() {
        let c = example();
        let profile = StrategyProfile::from_classes(&c, (true, false, true), (false, false, true));
        for who in AgentType::BOTH {
            let closed = expected_utility(&c, &profile, who).unwrap();
            let brute = matrix_utility(&c, &profile, who, None, c.sabotage_cost(), c.promotion_cost()).unwrap();
            assert_eq!(closed, brute);
        }
    }

    #[test]
    fn deviator_only_changes_its_own_row() {
        let c = example();
        let base = StrategyProfile::sincere();
        let dev = TypeStrategy::class(&c, AgentType::Low, true, false, false);
        let m = RatingMatrix::build(&c, &base, Some(Deviator { who: AgentType::Low, strategy: dev })).unwrap();
        let low_row = 100 + 10;
        assert!((0..10).all(|j| m.rating(low_row, j) == q(0, 1)));
        assert!((0..10).all(|j| m.rating(low_row + 1, j) == q(4, 5)));
    }
}
