use lfunlab_core::modforms::{builtin_form, from_eigenvalues, relation_checks_up_to};
use lfunlab_core::spectral::{dim1_extract, TailMode};
use lfunlab_core::voronoi::{coefficients_needed, default_windows, eta_fit, VoronoiInstance};
use lfunlab_core::Sequential;

#[test]
fn extracted_delta_eigenvalues_are_multiplicative() {
    let ext = dim1_extract(&Sequential, 12, 1, 24, 1e-9, TailMode::default()).unwrap();
    let f = from_eigenvalues("delta-extracted", 1, 12, ext.lambdas.clone());
    let r = relation_checks_up_to(&f, 24);
    assert!(r.hecke_max_residual <= 1e-7, "{}", r.hecke_max_residual);
    assert!(r.deligne_margin_min >= 0.0);
    let reference = builtin_form("1.12.delta", 24).unwrap();
    for n in 1..=24u64 {
        assert!((f.lambda(n).unwrap() - reference.lambda(n).unwrap()).abs() <= 1e-7);
    }
}

#[test]
fn voronoi_constant_does_not_see_the_residue() {
    let f = builtin_form("11.2.eta", coefficients_needed(11, 7) as usize).unwrap();
    let q = 7;
    let windows = default_windows(q, 11);
    let etas: Vec<_> = [1, 3, 6]
        .iter()
        .map(|&a| eta_fit(&Sequential, &VoronoiInstance::new(&f, a, q).unwrap(), &windows).unwrap().eta)
        .collect();
    for e in &etas {
        assert!((e.norm() - 1.0).abs() <= 1e-4);
        assert!((e - etas[0]).norm() <= 1e-4);
    }
}
