//! Solve a small strictly convex QP and print its KKT residual.

use deepmpc::numerics::Matrix;
use deepmpc::qp::{check_kkt, solve_qp, QpProblem, DEFAULT_TOL};

fn main() -> deepmpc::Result<()> {
    // minimize ½zᵀHz + qᵀz  s.t.  z₁ + z₂ ≤ 1, z ≥ 0
    let h = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]])?;
    let a = Matrix::from_rows(&[[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])?;
    let p = QpProblem::new(h, vec![-3.0, -2.0], a, vec![1.0, 0.0, 0.0])?;
    let sol = solve_qp(&p, DEFAULT_TOL, None)?.optimal()?;
    println!("z* = {:?}", sol.z);
    println!("duals = {:?}", sol.duals);
    println!("active set = {:?}", sol.active_set);
    println!("objective = {:.6}", p.objective(&sol.z));
    println!("KKT residual = {:e}", check_kkt(&p, &sol.z, &sol.duals)?);
    Ok(())
}
