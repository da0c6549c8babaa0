//! Checks backpropagation, Hessian-vector products and the meta-gradient
//! against finite differences and prints the worst relative errors.

use episodic_maml::gradcheck::{run_suite, GRADIENT_TOLERANCE, HVP_TOLERANCE};
use episodic_maml::nn::{
    hessian_vector_product, hessian_vector_product_fd, init_parameters, Activation, LabeledBatch,
    MlpArchitecture,
};

fn main() -> episodic_maml::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let report = run_suite(seed)?;
    println!("gradient      {:.2e} (<= {GRADIENT_TOLERANCE:.0e})", report.gradient_max_rel_error);
    println!("hvp           {:.2e} (<= {HVP_TOLERANCE:.0e})", report.hvp_max_rel_error);
    println!("hvp symmetry  {:.2e}", report.hvp_max_symmetry_error);
    println!("meta-gradient {:.2e}", report.meta_gradient_max_rel_error);
    println!("passed: {} in {:.2?}", report.passed(), report.elapsed);

    // The exact product and its central-difference approximation side by side.
    let arch = MlpArchitecture::new(3, vec![5], 2, Activation::Tanh)?;
    let theta = init_parameters(&arch, 1);
    let batch = LabeledBatch::from_rows(&[vec![0.1, -0.4, 0.9], vec![1.2, 0.3, -0.7]], vec![0, 1])?;
    let v = theta.scaled(0.5);
    let exact = hessian_vector_product(&theta, &batch, &v)?;
    let approx = hessian_vector_product_fd(&theta, &batch, &v)?;
    let mut diff = exact.clone();
    diff.add_scaled(-1.0, &approx);
    println!("|Hv - Hv_fd| / |Hv| = {:.2e}", diff.norm_l2() / exact.norm_l2());
    Ok(())
}
