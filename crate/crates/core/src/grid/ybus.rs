//! Bus admittance matrix.

use nalgebra::DMatrix;

use super::Network;

pub use nalgebra::Complex;

/// Dense bus admittance matrix in per unit, rows and columns in bus order.
///
/// Branches use the π model with the tap on the from side:
/// `Ytt = ys + j·b/2`, `Yff = Ytt/|a|²`, `Yft = −ys/conj(a)`, `Ytf = −ys/a`,
/// where `ys = 1/(r + jx)` and `a = tap·e^{j·shift}`. Bus shunts add
/// `(Gs + jBs)/baseMVA` to the diagonal.
pub fn build_admittance(net: &Network) -> DMatrix<Complex<f64>> {
    let n = net.len();
    let mut y = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
    for br in net.branches().iter().filter(|b| b.in_service) {
        let f = net.position(br.from).expect("validated");
        let t = net.position(br.to).expect("validated");
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r_pu, br.x_pu);
        let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
        let a = Complex::from_polar(tap, br.shift_deg.to_radians());
        let ytt = ys + Complex::new(0.0, br.b_pu / 2.0);
        y[(f, f)] += ytt / (a * a.conj());
        y[(t, t)] += ytt;
        y[(f, t)] += -ys / a.conj();
        y[(t, f)] += -ys / a;
    }
    let base = net.base_mva();
    for (i, b) in net.buses().iter().enumerate() {
        y[(i, i)] += Complex::new(b.gs_mw / base, b.bs_mvar / base);
    }
    y
}
