//! Quadratic concave potential games and the allocation oracle.
//!
//! The potential is `S(p) = -1/2 p' Pi p + b' p + c`, so `Pi` is exactly the
//! negated Hessian and the fitness is `f(p) = grad S = -Pi p + b`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pi: DMatrix<f64>,
    b: Vec<f64>,
    c: f64,
    total: f64,
    /// `Some(diag(Pi))` when `Pi` is diagonal within `DIAGONAL_TOL`.
    diagonal: Option<Vec<f64>>,
    cholesky: Cholesky<f64, Dyn>,
}

impl QuadraticPotential {
    pub fn new(pi: DMatrix<f64>, b: Vec<f64>, c: f64, total: f64) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::Argument("potential needs at least one agent".into()));
        }
        if pi.nrows() != n || pi.ncols() != n {
            return Err(Error::Argument(format!(
                "Pi is {}x{}, expected {n}x{n}",
                pi.nrows(),
                pi.ncols()
            )));
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Domain(format!(
                "total population must be positive, got {total}"
            )));
        }
        if pi.iter().chain(&b).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::Domain("potential coefficients must be finite".into()));
        }
        let scale = pi.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in i + 1..n {
                if (pi[(i, j)] - pi[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Domain(format!(
                        "Pi is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || pi[(i, j)].abs() <= DIAGONAL_TOL));
        let diagonal = is_diagonal.then(|| (0..n).map(|i| pi[(i, i)]).collect::<Vec<_>>());
        if let Some(d) = &diagonal {
            if let Some(i) = d.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::Domain(format!(
                    "Pi is not positive definite: diagonal entry {i} is {}",
                    d[i]
                )));
            }
        }
        let cholesky = Cholesky::new(pi.clone())
            .ok_or_else(|| Error::Domain("Pi is not positive definite".into()))?;
        Ok(QuadraticPotential {
            pi,
            b,
            c,
            total,
            diagonal,
            cholesky,
        })
    }

    pub fn from_diagonal(pi: &[f64], b: Vec<f64>, c: f64, total: f64) -> Result<Self> {
        check_len("b", b.len(), pi.len())?;
        QuadraticPotential::new(DMatrix::from_diagonal(&DVector::from_row_slice(pi)), b, c, total)
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Same potential with a different total resource.
    pub fn with_total(&self, total: f64) -> Result<Self> {
        QuadraticPotential::new(self.pi.clone(), self.b.clone(), self.c, total)
    }

    pub fn diagonal(&self) -> Option<&[f64]> {
        self.diagonal.as_deref()
    }

    /// `||Pi||_2`: the largest eigenvalue, since `Pi` is symmetric PD.
    pub fn pi_norm(&self) -> f64 {
        match &self.diagonal {
            Some(d) => d.iter().copied().fold(f64::MIN, f64::max),
            None => self
                .pi
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::MIN, f64::max),
        }
    }

    /// `f(p) = -Pi p + b`.
    pub fn fitness(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_len("population vector", p.len(), self.n())?;
        Ok(self.fitness_unchecked(p))
    }

    pub(crate) fn fitness_unchecked(&self, p: &[f64]) -> Vec<f64> {
        match &self.diagonal {
            Some(d) => d
                .iter()
                .zip(p)
                .zip(&self.b)
                .map(|((pi, p), b)| -pi * p + b)
                .collect(),
            None => {
                let pp = &self.pi * DVector::from_row_slice(p);
                pp.iter().zip(&self.b).map(|(v, b)| -v + b).collect()
            }
        }
    }

    /// `S(p) = -1/2 p' Pi p + b' p + c`.
    pub fn potential_value(&self, p: &[f64]) -> Result<f64> {
        check_len("population vector", p.len(), self.n())?;
        Ok(self.potential_unchecked(p))
    }

    pub(crate) fn potential_unchecked(&self, p: &[f64]) -> f64 {
        let quad = match &self.diagonal {
            Some(d) => d.iter().zip(p).map(|(pi, p)| pi * p * p).sum::<f64>(),
            None => {
                let v = DVector::from_row_slice(p);
                v.dot(&(&self.pi * &v))
            }
        };
        let lin: f64 = self.b.iter().zip(p).map(|(b, p)| b * p).sum();
        -0.5 * quad + lin + self.c
    }

    /// `Pi^{-1} x`.
    pub fn solve(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("right-hand side", x.len(), self.n())?;
        Ok(self.solve_unchecked(x))
    }

    pub(crate) fn solve_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match &self.diagonal {
            Some(d) => x.iter().zip(d).map(|(x, d)| x / d).collect(),
            None => self
                .cholesky
                .solve(&DVector::from_row_slice(x))
                .iter()
                .copied()
                .collect(),
        }
    }

    /// Inverse of the fitness map: `p = Pi^{-1} (b - f)`.
    pub fn population_from_fitness(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len("fitness vector", f.len(), self.n())?;
        let rhs: Vec<f64> = self.b.iter().zip(f).map(|(b, f)| b - f).collect();
        Ok(self.solve_unchecked(&rhs))
    }
}

/// Quadratic generator costs `C_i(P) = alpha_i P^2 + beta_i P + gamma_i` and
/// the demand they must cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchCosts {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub demand: f64,
}

impl DispatchCosts {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, gamma: Vec<f64>, demand: f64) -> Result<Self> {
        check_len("beta", beta.len(), alpha.len())?;
        check_len("gamma", gamma.len(), alpha.len())?;
        if alpha.is_empty() {
            return Err(Error::Argument("at least one generator is required".into()));
        }
        if let Some(i) = alpha.iter().position(|a| !(*a > 0.0)) {
            return Err(Error::Domain(format!(
                "alpha of generator {i} must be positive, got {}",
                alpha[i]
            )));
        }
        if !(demand > 0.0) || !demand.is_finite() {
            return Err(Error::Domain(format!("demand must be positive, got {demand}")));
        }
        Ok(DispatchCosts {
            alpha,
            beta,
            gamma,
            demand,
        })
    }

    pub fn cost(&self, i: usize, power: f64) -> f64 {
        self.alpha[i] * power * power + self.beta[i] * power + self.gamma[i]
    }

    pub fn total_cost(&self, p: &[f64]) -> f64 {
        p.iter().enumerate().map(|(i, &v)| self.cost(i, v)).sum()
    }

    /// Utility `U(p) = -sum C_i(p_i)` as a potential:
    /// `Pi = diag(2 alpha)`, `b = -beta`, `c = -sum gamma`, total = demand.
    pub fn to_potential(&self) -> Result<QuadraticPotential> {
        let pi: Vec<f64> = self.alpha.iter().map(|a| 2.0 * a).collect();
        let b: Vec<f64> = self.beta.iter().map(|v| -v).collect();
        let c = -self.gamma.iter().sum::<f64>();
        QuadraticPotential::from_diagonal(&pi, b, c, self.demand)
    }
}

/// Maximizer of `S` over `sum p = total` with `p >= 0` relaxed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSolution {
    pub allocation: Vec<f64>,
    /// `lambda*`: the common fitness `-Pi p* + b = lambda* 1`.
    pub multiplier: f64,
    /// Agents with `p*_i < 0`, which the relaxation allows.
    pub negative_agents: Vec<usize>,
}

pub fn kkt_allocate(pot: &QuadraticPotential) -> KktSolution {
    let n = pot.n();
    let ones = vec![1.0; n];
    let (pinv_b, pinv_1) = match pot.diagonal() {
        Some(d) => (
            pot.b().iter().zip(d).map(|(b, d)| b / d).collect::<Vec<_>>(),
            d.iter().map(|d| 1.0 / d).collect::<Vec<_>>(),
        ),
        None => (pot.solve_unchecked(pot.b()), pot.solve_unchecked(&ones)),
    };
    let multiplier =
        (pinv_b.iter().sum::<f64>() - pot.total()) / pinv_1.iter().sum::<f64>();
    let allocation: Vec<f64> = pinv_b
        .iter()
        .zip(&pinv_1)
        .map(|(pb, p1)| pb - multiplier * p1)
        .collect();
    let negative_agents = negative(&allocation);
    KktSolution {
        allocation,
        multiplier,
        negative_agents,
    }
}

/// Allocation with one resource constraint per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedKkt {
    pub allocation: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub negative_agents: Vec<usize>,
}

/// Maximizes `S` subject to `sum_{i in groups[m]} p_i = totals[m]` for every
/// group. The groups must partition `0..n`. This is the fixed point of the
/// dynamics on a graph whose components are `groups`.
pub fn kkt_allocate_partitioned(
    pot: &QuadraticPotential,
    groups: &[Vec<usize>],
    totals: &[f64],
) -> Result<PartitionedKkt> {
    let n = pot.n();
    check_len("totals", totals.len(), groups.len())?;
    let mut owner = vec![usize::MAX; n];
    for (m, g) in groups.iter().enumerate() {
        for &i in g {
            if i >= n || owner[i] != usize::MAX {
                return Err(Error::Argument(format!(
                    "groups do not partition 0..{n} (agent {i})"
                )));
            }
            owner[i] = m;
        }
    }
    if owner.contains(&usize::MAX) {
        return Err(Error::Argument(format!("groups do not cover 0..{n}")));
    }
    let c = groups.len();
    let pinv_b = pot.solve_unchecked(pot.b());
    // columns Pi^{-1} a_m for each group indicator a_m
    let pinv_a: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let mut a = vec![0.0; n];
            for &i in g {
                a[i] = 1.0;
            }
            pot.solve_unchecked(&a)
        })
        .collect();
    let gram = DMatrix::from_fn(c, c, |r, s| groups[r].iter().map(|&i| pinv_a[s][i]).sum());
    let rhs = DVector::from_fn(c, |r, _| {
        groups[r].iter().map(|&i| pinv_b[i]).sum::<f64>() - totals[r]
    });
    let multipliers = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("singular constraint system".into()))?;
    let allocation: Vec<f64> = (0..n)
        .map(|i| pinv_b[i] - (0..c).map(|m| multipliers[m] * pinv_a[m][i]).sum::<f64>())
        .collect();
    let negative_agents = negative(&allocation);
    Ok(PartitionedKkt {
        allocation,
        multipliers: multipliers.iter().copied().collect(),
        negative_agents,
    })
}

fn negative(p: &[f64]) -> Vec<usize> {
    p.iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// `(1/total) sum p_j f_j`.
pub fn avg_fitness(p: &[f64], f: &[f64], total: f64) -> Result<f64> {
    check_len("fitness vector", f.len(), p.len())?;
    if !(total > 0.0) {
        return Err(Error::Domain(format!("total must be positive, got {total}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - total).abs() > 1e-9 * total {
        return Err(Error::State(format!(
            "population sums to {sum}, expected {total}"
        )));
    }
    Ok(p.iter().zip(f).map(|(p, f)| p * f).sum::<f64>() / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn four_generators(demand: f64) -> DispatchCosts {
        DispatchCosts::new(
            vec![0.096, 0.072, 0.105, 0.082],
            vec![1.22, 3.41, 2.53, 4.02],
            vec![51.0, 31.0, 72.0, 48.0],
            demand,
        )
        .unwrap()
    }

    #[test]
    fn fitness_examples() {
        let pot = four_generators(140.0).to_potential().unwrap();
        let mut p = vec![0.0; 4];
        p[0] = 19.2112;
        let f = pot.fitness(&p).unwrap();
        assert_abs_diff_eq!(f[0], -4.9086, epsilon = 1e-4);

        let id = QuadraticPotential::from_diagonal(&[1.0; 3], vec![0.0; 3], 0.0, 1.0).unwrap();
        assert_eq!(id.fitness(&[0.5, -1.0, 2.0]).unwrap(), vec![-0.5, 1.0, -2.0]);

        let two = QuadraticPotential::from_diagonal(&[2.0, 2.0], vec![1.0, 1.0], 0.0, 1.0).unwrap();
        assert_eq!(two.fitness(&[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(two.fitness(&[0.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn potential_examples() {
        let pot = QuadraticPotential::from_diagonal(&[2.0], vec![0.0], 0.0, 1.0).unwrap();
        assert_eq!(pot.potential_value(&[1.0]).unwrap(), -1.0);
        let pot = QuadraticPotential::from_diagonal(&[3.0, 1.0], vec![1.0, 2.0], 7.5, 1.0).unwrap();
        assert_eq!(pot.potential_value(&[0.0, 0.0]).unwrap(), 7.5);
    }

    #[test]
    fn dispatch_potential_is_negated_cost() {
        let costs = four_generators(140.0);
        let pot = costs.to_potential().unwrap();
        let star = kkt_allocate(&pot);
        let s = pot.potential_value(&star.allocation).unwrap();
        assert_abs_diff_eq!(s, -costs.total_cost(&star.allocation), epsilon = 1e-9);
    }

    #[test]
    fn dispatch_mapping() {
        let pot = four_generators(140.0).to_potential().unwrap();
        let d = pot.diagonal().unwrap();
        for (got, want) in d.iter().zip([0.192, 0.144, 0.210, 0.164]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(pot.b()[1], -3.41);
        assert_eq!(pot.c(), -202.0);

        let unit = DispatchCosts::new(vec![1.0], vec![0.0], vec![0.0], 1.0)
            .unwrap()
            .to_potential()
            .unwrap();
        assert_eq!(unit.pi()[(0, 0)], 2.0);
        assert_eq!(unit.b(), &[-0.0]);
        assert_eq!(unit.c(), 0.0);

        assert!(matches!(
            DispatchCosts::new(vec![0.0], vec![1.0], vec![1.0], 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn dispatch_fitness_is_exact_incremental_cost() {
        let costs = four_generators(140.0);
        let pot = costs.to_potential().unwrap();
        let p = [12.25, 40.125, 0.3, 77.0];
        let f = pot.fitness(&p).unwrap();
        for i in 0..4 {
            assert_eq!(f[i], -(2.0 * costs.alpha[i] * p[i] + costs.beta[i]));
        }
    }

    #[test]
    fn symmetric_agents_split_evenly() {
        let costs = DispatchCosts::new(vec![0.3; 5], vec![2.0; 5], vec![1.0; 5], 10.0).unwrap();
        let star = kkt_allocate(&costs.to_potential().unwrap());
        for v in star.allocation {
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn negative_allocations_are_flagged() {
        let pot = QuadraticPotential::from_diagonal(&[1.0, 1.0], vec![10.0, 0.0], 0.0, 1.0).unwrap();
        let star = kkt_allocate(&pot);
        assert_eq!(star.negative_agents, vec![1]);
        assert_abs_diff_eq!(star.allocation[0], 5.5, epsilon = 1e-12);
    }

    #[test]
    fn general_pd_matrix() {
        let pi = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let pot = QuadraticPotential::new(pi, vec![1.0, -1.0], 0.0, 3.0).unwrap();
        assert!(pot.diagonal().is_none());
        let star = kkt_allocate(&pot);
        let f = pot.fitness(&star.allocation).unwrap();
        assert_abs_diff_eq!(star.allocation.iter().sum::<f64>(), 3.0, epsilon = 1e-12);
        for v in f {
            assert_abs_diff_eq!(v, star.multiplier, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_pi() {
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            QuadraticPotential::new(asym, vec![0.0; 2], 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            QuadraticPotential::new(indefinite, vec![0.0; 2], 0.0, 1.0),
            Err(Error::Domain(_))
        ));
        assert!(QuadraticPotential::from_diagonal(&[1.0, 0.0], vec![0.0; 2], 0.0, 1.0).is_err());
    }

    #[test]
    fn partitioned_matches_single_group() {
        let pot = four_generators(140.0).to_potential().unwrap();
        let one = kkt_allocate(&pot);
        let part = kkt_allocate_partitioned(&pot, &[vec![0, 1, 2, 3]], &[140.0]).unwrap();
        for (a, b) in one.allocation.iter().zip(&part.allocation) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(one.multiplier, part.multipliers[0], epsilon = 1e-12);

        let two = kkt_allocate_partitioned(&pot, &[vec![0, 2], vec![1, 3]], &[60.0, 80.0]).unwrap();
        assert_abs_diff_eq!(two.allocation[0] + two.allocation[2], 60.0, epsilon = 1e-10);
        assert_abs_diff_eq!(two.allocation[1] + two.allocation[3], 80.0, epsilon = 1e-10);
        assert!(kkt_allocate_partitioned(&pot, &[vec![0, 1]], &[1.0]).is_err());
    }

    #[test]
    fn average_fitness() {
        assert_eq!(avg_fitness(&[1.0, 1.0], &[2.0, 4.0], 2.0).unwrap(), 3.0);
        assert_eq!(avg_fitness(&[0.5, 1.5], &[7.0, 7.0], 2.0).unwrap(), 7.0);
        assert_eq!(avg_fitness(&[2.0, 0.0], &[5.0, -100.0], 2.0).unwrap(), 5.0);
        assert!(matches!(
            avg_fitness(&[1.0], &[1.0], 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            avg_fitness(&[1.0], &[1.0], 2.0),
            Err(Error::State(_))
        ));
    }
}
