// Closed-form `min ‖Ax − b‖∞` over matrices with `A + Aᵀ ⪯ 0`, checked
// against the bisection oracle.
//
//     cargo run --example solve_linf

use sidapbc::linalg::max_sym_eigenvalue;
use sidapbc::{oracle_phi, solve, Vector};

pub fn run() -> sidapbc::Result<()> {
    let cases: [(&[f64], &[f64]); 4] = [
        (&[1.0, 1.0], &[1.0, 0.0]),
        (&[1.0, 0.0], &[-1.0, 0.0]),
        (&[1.0, -2.0, 3.0], &[1.0, 1.0, 1.0]),
        (&[0.0, 2.0, -1.0], &[4.0, 1.0, -1.0]),
    ];
    for (x, b) in cases {
        let (x, b) = (Vector::from_column_slice(x), Vector::from_column_slice(b));
        let sol = solve(&x, &b)?;
        let a = sol.matrix();
        let oracle = oracle_phi(&x, &b, 1e-12)?;
        println!("x = {:?}, b = {:?}", x.as_slice(), b.as_slice());
        println!("  phi = {:.12}  oracle = {:.12}", sol.phi, oracle);
        println!("  |Ax - b|inf = {:.3e}", (&a * &x - &b).amax());
        println!("  max eig of sym(A) = {:.3e}", max_sym_eigenvalue(&a));
        println!("  residual xi = {:?}", sol.xi.as_slice());
        assert!((sol.phi - oracle).abs() <= 1e-9);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
