/// Teager energy operator x(n)^2 - x(n-1) x(n+1) with replicated endpoints.
pub fn teager_energy(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 3 {
        return vec![0.0; n];
    }
    let mut psi = vec![0.0; n];
    for i in 1..n - 1 {
        psi[i] = x[i] * x[i] - x[i - 1] * x[i + 1];
    }
    psi[0] = psi[1];
    psi[n - 1] = psi[n - 2];
    psi
}
