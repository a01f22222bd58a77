use cloudmpc::solver::{solve, NlpProblem, SolveStatus, SolverConfig};
use cloudmpc::Result;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

/// min (x - a)^2 + (y - b)^2 subject to x^2 + y^2 = 1 and box bounds.
struct CircleProjection {
    target: [f64; 2],
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl NlpProblem for CircleProjection {
    fn dim(&self) -> usize {
        2
    }
    fn num_equalities(&self) -> usize {
        1
    }
    fn lower_bounds(&self) -> &[f64] {
        &self.lo
    }
    fn upper_bounds(&self) -> &[f64] {
        &self.hi
    }
    fn objective(&self, z: &[f64]) -> Result<f64> {
        Ok((z[0] - self.target[0]).powi(2) + (z[1] - self.target[1]).powi(2))
    }
    fn objective_and_gradient(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        grad[0] = 2.0 * (z[0] - self.target[0]);
        grad[1] = 2.0 * (z[1] - self.target[1]);
        self.objective(z)
    }
    fn equality_residuals(&self, z: &[f64], c: &mut [f64]) -> Result<()> {
        c[0] = z[0] * z[0] + z[1] * z[1] - 1.0;
        Ok(())
    }
    fn equality_residuals_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, CsrMatrix<f64>)> {
        let mut c = vec![0.0];
        self.equality_residuals(z, &mut c)?;
        let mut jac = CooMatrix::new(1, 2);
        jac.push(0, 0, 2.0 * z[0]);
        jac.push(0, 1, 2.0 * z[1]);
        Ok((c, CsrMatrix::from(&jac)))
    }
}

fn unbounded(target: [f64; 2]) -> CircleProjection {
    CircleProjection { target, lo: vec![-10.0; 2], hi: vec![10.0; 2] }
}

#[test]
fn projects_onto_the_circle() {
    for target in [[2.0, 1.0], [-0.3, 0.1], [0.0, -4.0], [3.0, 3.0]] {
        let prob = unbounded(target);
        let sol = solve(&prob, &SolverConfig::default(), &[0.5, 0.5]).unwrap();
        let norm = (target[0] * target[0] + target[1] * target[1]).sqrt();
        assert_eq!(sol.status, SolveStatus::Converged);
        for k in 0..2 {
            assert!((sol.z[k] - target[k] / norm).abs() < 1e-5, "{target:?}: {:?}", sol.z);
        }
        assert!((sol.objective - (norm - 1.0).powi(2)).abs() < 1e-5);
        assert!(sol.residual_norm() <= 1e-6);
    }
}

#[test]
fn respects_active_bounds() {
    // the unconstrained projection (0.894, 0.447) violates x <= 0.6
    let prob = CircleProjection { target: [2.0, 1.0], lo: vec![-10.0, -10.0], hi: vec![0.6, 10.0] };
    let sol = solve(&prob, &SolverConfig::default(), &[0.0, 0.5]).unwrap();
    assert_eq!(sol.status, SolveStatus::Converged);
    assert!((sol.z[0] - 0.6).abs() < 1e-6, "{:?}", sol.z);
    assert!((sol.z[1] - 0.8).abs() < 1e-5, "{:?}", sol.z);
}

#[test]
fn infeasible_box_is_reported() {
    let prob = CircleProjection { target: [2.0, 1.0], lo: vec![1.0, 1.0], hi: vec![0.0, 2.0] };
    let sol = solve(&prob, &SolverConfig::default(), &[0.5, 1.5]).unwrap();
    assert_eq!(sol.status, SolveStatus::InfeasibleBounds);
}
