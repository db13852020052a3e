//! Brute-force quadrature oracles for the λ limit functionals.
//!
//! The oracle is a plain Riemann triple sum over an explicit box, with its
//! own inner discretization — nothing shared with the library's nested
//! Simpson/midpoint machinery.

use cmi_core::rates::{lambda_bdd, lambda_var, LambdaConfig, LocalModelParams, Psi};

/// Triple Riemann sum for the instrument λ functionals. `var_weight`
/// switches on the `w_j h^{-1/2}` factor.
fn brute_force_lambda(
    par: &LocalModelParams,
    a: f64,
    p: f64,
    var_weight: bool,
    x_max: f64,
    h_max: f64,
    res: usize,
) -> f64 {
    let drift = par.mbar_theta * a;
    let psi = match par.psi {
        Psi::Constant(c) => c,
        _ => panic!("oracle assumes constant psi"),
    };
    let bracket = |x: f64| x.abs().powf(par.gamma) * psi + drift;
    let dx_outer = 2.0 * x_max / res as f64;
    let dh = h_max / res as f64;
    let inner_res = 400;
    let mut total = 0.0;
    for ih in 0..res {
        let h = (ih as f64 + 0.5) * dh;
        for ix in 0..res {
            let x_t = -x_max + (ix as f64 + 0.5) * dx_outer;
            // Window integral of the bracket (uniform kernel).
            let lo = x_t - 0.5 * h;
            let hi = x_t + 0.5 * h;
            let din = (hi - lo) / inner_res as f64;
            let mut inner = 0.0;
            for k in 0..inner_res {
                inner += bracket(lo + (k as f64 + 0.5) * din) * din;
            }
            inner *= par.f_x;
            if var_weight {
                inner *= par.w_j * h.powf(-0.5);
            }
            if inner < 0.0 {
                total += (-inner).powf(p) * par.f_mu * dx_outer * dh;
            }
        }
    }
    total
}

#[test]
fn lambda_bdd_matches_brute_force_triple_sum() {
    let par = LocalModelParams::new(2.0, Psi::Constant(1.0), 1.0, 1.0, 1.0);
    let cfg = LambdaConfig::default();
    for (a, p) in [(-1.0, 1.0), (-0.5, 1.0), (-1.0, 2.0)] {
        let lib = lambda_bdd(&par, a, p, &cfg).unwrap();
        // Negativity needs x̃² + h²/12 < |a|: box [-2.5, 2.5] × (0, 4.5]
        // encloses it for |a| ≤ 1 with padding.
        let coarse = brute_force_lambda(&par, a, p, false, 2.5, 4.5, 300);
        let fine = brute_force_lambda(&par, a, p, false, 2.5, 4.5, 600);
        // Oracle self-consistency within 1% across two resolutions.
        assert!(
            (coarse - fine).abs() <= 0.01 * fine,
            "oracle not converged at (a={a}, p={p}): {coarse} vs {fine}"
        );
        assert!(
            (lib - fine).abs() <= 0.01 * fine,
            "library {lib} vs oracle {fine} at (a={a}, p={p})"
        );
    }
}

#[test]
fn lambda_var_matches_graded_brute_force() {
    let mut par = LocalModelParams::new(2.0, Psi::Constant(1.0), 1.0, 1.0, 1.0);
    par.w_j = 0.8;
    let cfg = LambdaConfig::default();
    for (a, p) in [(-1.0, 1.0), (-0.6, 2.0)] {
        let lib = lambda_var(&par, a, p, &cfg).unwrap();
        let coarse = brute_force_lambda(&par, a, p, true, 2.5, 4.5, 400);
        let fine = brute_force_lambda(&par, a, p, true, 2.5, 4.5, 800);
        assert!(
            (coarse - fine).abs() <= 0.01 * fine,
            "oracle not converged at (a={a}, p={p}): {coarse} vs {fine}"
        );
        assert!(
            (lib - fine).abs() <= 0.015 * fine,
            "library {lib} vs oracle {fine} at (a={a}, p={p})"
        );
    }
}

#[test]
fn lambda_kink_case_gamma_one() {
    // Lipschitz case: bracket |x| − 0.7, an interior kink inside windows.
    let par = LocalModelParams::new(1.0, Psi::Constant(1.0), 1.0, 1.0, 1.0);
    let cfg = LambdaConfig::default();
    let lib = lambda_bdd(&par, -0.7, 1.0, &cfg).unwrap();
    let fine = brute_force_lambda(&par, -0.7, 1.0, false, 2.2, 4.4, 600);
    assert!(
        (lib - fine).abs() <= 0.01 * fine,
        "library {lib} vs oracle {fine}"
    );
}
